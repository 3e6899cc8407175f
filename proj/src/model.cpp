#include "contour_adapt/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "contour_adapt/binio.hpp"

namespace ca::nn {

const char* arch_name(ArchKind k) {
  return k == ArchKind::DeconvNet ? "deconvnet" : "unet";
}

const char* freeze_name(FreezeLevel f) {
  switch (f) {
    case FreezeLevel::Base: return "base";
    case FreezeLevel::Encoder: return "encoder";
    case FreezeLevel::Dec1: return "dec1";
    case FreezeLevel::Dec2: return "dec2";
    case FreezeLevel::Dec3: return "dec3";
  }
  return "?";
}

ArchKind arch_from_name(const std::string& s) {
  if (s == "deconvnet") return ArchKind::DeconvNet;
  if (s == "unet") return ArchKind::UNet;
  throw ConfigError("unknown architecture '" + s + "' (expected deconvnet|unet)");
}

FreezeLevel freeze_from_name(const std::string& s) {
  if (s == "base") return FreezeLevel::Base;
  if (s == "encoder") return FreezeLevel::Encoder;
  if (s == "dec1") return FreezeLevel::Dec1;
  if (s == "dec2") return FreezeLevel::Dec2;
  if (s == "dec3") return FreezeLevel::Dec3;
  throw ConfigError("unknown freeze level '" + s + "' (expected base|encoder|dec1|dec2|dec3)");
}

namespace {

ConvUnit make_conv_unit(const std::string& name, int cin, int cout) {
  ConvUnit u;
  u.spec = ConvSpec{cin, cout, 3, 3, 1, 1, 1, 1};  // same padding
  u.w = Parameter(name + ".w", Tensor(Shape{cout, cin, 3, 3}));
  u.b = Parameter(name + ".b", Tensor(Shape{cout}));
  u.bn = BatchNormState::make(cout, name + ".bn");
  return u;
}

DeconvUnit make_deconv_unit(const std::string& name, int cin, int cout) {
  DeconvUnit u;
  u.w = Parameter(name + ".w", Tensor(Shape{cin, cout, 2, 2}));
  u.b = Parameter(name + ".b", Tensor(Shape{cout}));
  return u;
}

void he_uniform_init(Parameter& p, int fan_in, const Rng& init_rng) {
  Rng stream = init_rng.child(p.name);
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (float& v : p.value.mutable_data()) {
    v = static_cast<float>(stream.uniform(-bound, bound));
  }
}

}  // namespace

Model Model::build(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.base_channels < 1) {
    throw ConfigError("base_channels must be >= 1, got " + std::to_string(cfg.base_channels));
  }
  if (cfg.height < 16 || cfg.width < 16 || cfg.height % 16 != 0 || cfg.width % 16 != 0) {
    throw ConfigError("image size " + std::to_string(cfg.height) + "x" +
                      std::to_string(cfg.width) + " must be divisible by 16");
  }
  if (cfg.dropout_rate < 0.0f || cfg.dropout_rate >= 1.0f) {
    throw ConfigError("dropout_rate must be in [0,1)");
  }
  Model m;
  m.cfg_ = cfg;
  const int c = cfg.base_channels;
  const bool unet = cfg.arch == ArchKind::UNet;

  // Encoder widths c, 2c, 4c, 8c, 16c; decoder mirrors back down.
  const int enc_in[5] = {1, c, 2 * c, 4 * c, 8 * c};
  const int enc_out[5] = {c, 2 * c, 4 * c, 8 * c, 16 * c};
  for (int k = 0; k < 5; ++k) {
    std::string name = "enc.conv" + std::to_string(k + 1);
    m.enc_[k] = DoubleConv{make_conv_unit(name + ".c1", enc_in[k], enc_out[k]),
                           make_conv_unit(name + ".c2", enc_out[k], enc_out[k])};
  }
  for (int j = 0; j < 4; ++j) {
    int cin = enc_out[4 - j];   // 16c, 8c, 4c, 2c
    int cout = cin / 2;         // 8c, 4c, 2c, c
    m.deconv_[j] = make_deconv_unit("dec.deconv" + std::to_string(j + 1), cin, cout);
    int dec_in = unet ? 2 * cout : cout;  // skip doubles the input channels
    std::string name = "dec.conv" + std::to_string(j + 6);
    m.dec_[j] = DoubleConv{make_conv_unit(name + ".c1", dec_in, cout),
                           make_conv_unit(name + ".c2", cout, cout)};
  }
  m.final_w_ = Parameter("final.w", Tensor(Shape{1, c, 1, 1}));
  m.final_b_ = Parameter("final.b", Tensor(Shape{1}));
  m.init_params(seed);
  return m;
}

void Model::init_params(std::uint64_t seed) {
  Rng rng(seed);
  Rng init = rng.child("init");
  for (auto& blk : enc_) {
    he_uniform_init(blk.c1.w, blk.c1.spec.in_channels * 9, init);
    he_uniform_init(blk.c2.w, blk.c2.spec.in_channels * 9, init);
  }
  for (auto& du : deconv_) {
    he_uniform_init(du.w, du.w.value.dim(0) * 4, init);
  }
  for (auto& blk : dec_) {
    he_uniform_init(blk.c1.w, blk.c1.spec.in_channels * 9, init);
    he_uniform_init(blk.c2.w, blk.c2.spec.in_channels * 9, init);
  }
  he_uniform_init(final_w_, cfg_.base_channels, init);
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  auto add_unit = [&](ConvUnit& u) {
    out.push_back(&u.w);
    out.push_back(&u.b);
    out.push_back(&u.bn.gamma);
    out.push_back(&u.bn.beta);
  };
  for (auto& blk : enc_) {
    add_unit(blk.c1);
    add_unit(blk.c2);
  }
  for (int j = 0; j < 4; ++j) {
    out.push_back(&deconv_[j].w);
    out.push_back(&deconv_[j].b);
    add_unit(dec_[j].c1);
    add_unit(dec_[j].c2);
  }
  out.push_back(&final_w_);
  out.push_back(&final_b_);
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  auto mut = const_cast<Model*>(this)->parameters();
  return std::vector<const Parameter*>(mut.begin(), mut.end());
}

std::size_t Model::trainable_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) {
    if (p->trainable) ++n;
  }
  return n;
}

std::size_t Model::parameter_elements() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.numel();
  return n;
}

void Model::zero_grads() {
  for (Parameter* p : parameters()) p->zero_grad();
}

BlockGroup Model::group_of(const Parameter& p) const {
  const std::string& n = p.name;
  if (n.rfind("enc.", 0) == 0) return BlockGroup::Encoder;
  if (n.rfind("final.", 0) == 0) return BlockGroup::Final;
  if (n.rfind("dec.deconv1.", 0) == 0 || n.rfind("dec.conv6.", 0) == 0) return BlockGroup::DecStage1;
  if (n.rfind("dec.deconv2.", 0) == 0 || n.rfind("dec.conv7.", 0) == 0) return BlockGroup::DecStage2;
  if (n.rfind("dec.deconv3.", 0) == 0 || n.rfind("dec.conv8.", 0) == 0) return BlockGroup::DecStage3;
  if (n.rfind("dec.deconv4.", 0) == 0 || n.rfind("dec.conv9.", 0) == 0) return BlockGroup::DecStage4;
  throw ContractError("parameter '" + n + "' belongs to no freeze group");
}

bool Model::group_frozen(BlockGroup g) const {
  if (!freeze_.has_value()) return false;
  switch (*freeze_) {
    case FreezeLevel::Base:
      return true;
    case FreezeLevel::Encoder:
      return g == BlockGroup::Encoder;
    case FreezeLevel::Dec1:
      return g == BlockGroup::Encoder || g == BlockGroup::DecStage1;
    case FreezeLevel::Dec2:
      return g == BlockGroup::Encoder || g == BlockGroup::DecStage1 || g == BlockGroup::DecStage2;
    case FreezeLevel::Dec3:
      return g != BlockGroup::DecStage4 && g != BlockGroup::Final;
  }
  return false;
}

void Model::set_freeze(FreezeLevel level) {
  freeze_ = level;
  for (Parameter* p : parameters()) {
    p->trainable = !group_frozen(group_of(*p));
  }
}

Tensor Model::double_conv(DoubleConv& blk, const Tensor& x, Mode mode, Tape* tape, bool frozen) {
  // Frozen blocks run their bn on running stats so fine-tuning cannot
  // disturb any frozen byte.
  Mode bn_mode = frozen ? Mode::Infer : mode;
  Tensor h = conv2d(x, blk.c1.w.value, blk.c1.b.value, blk.c1.spec, tape);
  h = batchnorm(h, blk.c1.bn, bn_mode, tape);
  h = activation(h, Activation::Relu, tape);
  h = conv2d(h, blk.c2.w.value, blk.c2.b.value, blk.c2.spec, tape);
  h = batchnorm(h, blk.c2.bn, bn_mode, tape);
  return activation(h, Activation::Relu, tape);
}

Tensor Model::forward(const Tensor& batch, Mode mode, Rng* rng, Tape* tape,
                      const ForwardOptions& opts) {
  if (batch.ndim() != 4 || batch.dim(1) != 1 || batch.dim(2) != cfg_.height ||
      batch.dim(3) != cfg_.width) {
    throw ShapeError("forward: batch shape " + shape_str(batch.shape()) + " does not match [Nx1x" +
                     std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) + "]");
  }
  const bool training = mode == Mode::Train;
  if (training && cfg_.dropout_rate > 0.0f && rng == nullptr) {
    throw ContractError("forward: train mode with dropout needs an rng");
  }
  // Gradient flow stops at frozen parameters, so a frozen prefix records
  // nothing on the tape.
  for (Parameter* p : parameters()) {
    p->value.set_requires_grad(tape != nullptr && p->trainable);
  }
  auto trace = [&](const std::string& name, const Tensor& t) {
    if (opts.shape_trace != nullptr) opts.shape_trace->emplace_back(name, t.shape());
  };

  const bool unet = cfg_.arch == ArchKind::UNet;
  std::array<Tensor, 5> enc_out;
  Tensor cur = batch;
  const bool enc_frozen = group_frozen(BlockGroup::Encoder);
  for (int k = 0; k < 5; ++k) {
    cur = double_conv(enc_[k], cur, mode, tape, enc_frozen);
    enc_out[k] = cur;
    trace("enc.conv" + std::to_string(k + 1), cur);
    if (k < 4) {
      cur = maxpool2(cur, tape).values;
      trace("enc.pool" + std::to_string(k + 1), cur);
    }
  }
  if (training) cur = dropout(cur, cfg_.dropout_rate, *rng, mode, tape);

  for (int j = 0; j < 4; ++j) {
    BlockGroup group = static_cast<BlockGroup>(static_cast<int>(BlockGroup::DecStage1) + j);
    bool frozen = group_frozen(group);
    cur = transposed_conv2d(cur, deconv_[j].w.value, deconv_[j].b.value, tape);
    trace("dec.deconv" + std::to_string(j + 1), cur);
    if (unet) {
      Tensor skip = enc_out[3 - j];
      if (opts.zero_skips) skip = Tensor(skip.shape(), 0.0f);
      cur = concat_channels(cur, skip, tape);
    }
    cur = double_conv(dec_[j], cur, mode, tape, frozen);
    trace("dec.conv" + std::to_string(j + 6), cur);
    if (j == 0 && training) cur = dropout(cur, cfg_.dropout_rate, *rng, mode, tape);
  }

  ConvSpec final_spec{cfg_.base_channels, 1, 1, 1, 1, 1, 0, 0};
  cur = conv2d(cur, final_w_.value, final_b_.value, final_spec, tape);
  cur = activation(cur, Activation::Sigmoid, tape);
  trace("final", cur);
  return cur;
}

std::vector<Model::MutableEntry> Model::mutable_entries() {
  std::vector<MutableEntry> out;
  auto buffer_name = [](const BatchNormState& bn, const char* suffix) {
    // gamma name is "<prefix>.gamma"; swap the suffix.
    const std::string& g = bn.gamma.name;
    return g.substr(0, g.size() - 5) + suffix;
  };
  auto add_param = [&](Parameter& p) {
    out.push_back(MutableEntry{p.name, p.value.shape(), p.value.mutable_data()});
  };
  auto add_unit = [&](ConvUnit& u) {
    add_param(u.w);
    add_param(u.b);
    add_param(u.bn.gamma);
    add_param(u.bn.beta);
    int c = u.bn.channels();
    out.push_back(MutableEntry{buffer_name(u.bn, "running_mean"), Shape{c}, u.bn.running_mean});
    out.push_back(MutableEntry{buffer_name(u.bn, "running_var"), Shape{c}, u.bn.running_var});
  };
  for (auto& blk : enc_) {
    add_unit(blk.c1);
    add_unit(blk.c2);
  }
  for (int j = 0; j < 4; ++j) {
    add_param(deconv_[j].w);
    add_param(deconv_[j].b);
    add_unit(dec_[j].c1);
    add_unit(dec_[j].c2);
  }
  add_param(final_w_);
  add_param(final_b_);
  return out;
}

std::vector<Model::Entry> Model::entries() const {
  auto mut = const_cast<Model*>(this)->mutable_entries();
  std::vector<Entry> out;
  out.reserve(mut.size());
  for (auto& e : mut) out.push_back(Entry{std::move(e.name), std::move(e.shape), e.data});
  return out;
}

void Model::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kWeightMagic, 4);
  binio::write_le<std::uint8_t>(os, kWeightVersion);
  binio::write_le<std::uint8_t>(os, cfg_.arch == ArchKind::UNet ? 1 : 0);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg_.base_channels));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg_.height));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg_.width));
  auto all = entries();
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(all.size()));
  for (const Entry& e : all) {
    binio::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(e.shape.size()));
    for (int d : e.shape) binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    if constexpr (std::endian::native == std::endian::little) {
      binio::write_bytes(os, e.data.data(), e.data.size() * sizeof(float));
    } else {
      for (float f : e.data) binio::write_f32_le(os, f);
    }
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

Model Model::load(const std::string& path, float dropout_rate) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[4];
  binio::read_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, kWeightMagic, 4) != 0) {
    throw FormatError("'" + path + "': bad magic, not a weight file");
  }
  auto version = binio::read_le<std::uint8_t>(is, "version");
  if (version != kWeightVersion) {
    throw FormatError("'" + path + "': unsupported weight file version " + std::to_string(version));
  }
  auto arch_byte = binio::read_le<std::uint8_t>(is, "arch");
  if (arch_byte > 1) throw FormatError("'" + path + "': unknown arch byte");
  ModelConfig cfg;
  cfg.arch = arch_byte == 1 ? ArchKind::UNet : ArchKind::DeconvNet;
  cfg.base_channels = static_cast<int>(binio::read_le<std::uint32_t>(is, "base_channels"));
  cfg.height = static_cast<int>(binio::read_le<std::uint32_t>(is, "height"));
  cfg.width = static_cast<int>(binio::read_le<std::uint32_t>(is, "width"));
  cfg.dropout_rate = dropout_rate;
  Model m = build(cfg, 0);

  auto count = binio::read_le<std::uint32_t>(is, "entry count");
  auto mut = m.mutable_entries();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < mut.size(); ++i) index[mut[i].name] = i;
  std::vector<bool> seen(mut.size(), false);

  for (std::uint32_t e = 0; e < count; ++e) {
    auto name_len = binio::read_le<std::uint16_t>(is, "name length");
    std::string name(name_len, '\0');
    binio::read_bytes(is, name.data(), name_len, "name");
    auto ndim = binio::read_le<std::uint8_t>(is, "ndim");
    Shape shape(ndim);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<int>(binio::read_le<std::uint32_t>(is, "dim"));
      if (d < 1) throw FormatError("'" + path + "': invalid dimension in '" + name + "'");
      numel *= static_cast<std::size_t>(d);
    }
    auto it = index.find(name);
    if (it == index.end()) {
      throw FormatError("'" + path + "': unknown parameter name '" + name + "'");
    }
    MutableEntry& target = mut[it->second];
    if (seen[it->second]) {
      throw FormatError("'" + path + "': duplicate parameter '" + name + "'");
    }
    if (shape != target.shape || numel != target.data.size()) {
      throw FormatError("'" + path + "': shape " + shape_str(shape) + " for '" + name +
                        "' does not match model " + shape_str(target.shape));
    }
    if constexpr (std::endian::native == std::endian::little) {
      binio::read_bytes(is, target.data.data(), numel * sizeof(float), name.c_str());
    } else {
      for (float& f : target.data) f = binio::read_f32_le(is, name.c_str());
    }
    seen[it->second] = true;
  }
  for (std::size_t i = 0; i < mut.size(); ++i) {
    if (!seen[i]) {
      throw FormatError("'" + path + "': missing parameter '" + mut[i].name + "'");
    }
  }
  return m;
}

std::vector<std::vector<float>> Model::snapshot_state() const {
  std::vector<std::vector<float>> out;
  for (const Entry& e : entries()) out.emplace_back(e.data.begin(), e.data.end());
  return out;
}

void Model::restore_state(const std::vector<std::vector<float>>& state) {
  auto mut = mutable_entries();
  if (state.size() != mut.size()) {
    throw ContractError("restore_state: snapshot entry count mismatch");
  }
  for (std::size_t i = 0; i < mut.size(); ++i) {
    if (state[i].size() != mut[i].data.size()) {
      throw ContractError("restore_state: size mismatch at '" + mut[i].name + "'");
    }
    std::copy(state[i].begin(), state[i].end(), mut[i].data.begin());
  }
}

}  // namespace ca::nn
