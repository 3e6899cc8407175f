#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "contour_adapt/binio.hpp"
#include "contour_adapt/model.hpp"

using namespace ca;
using namespace ca::nn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path p = fs::temp_directory_path() / "ca_model_tests";
  fs::create_directories(p);
  return p;
}

Tensor random_batch(const ModelConfig& cfg, int n, std::uint64_t seed) {
  Tensor t(Shape{n, 1, cfg.height, cfg.width});
  Rng rng(seed);
  for (float& v : t.mutable_data()) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return t;
}

// Independent per-layer arithmetic for the element count of a model.
std::size_t expected_elements(ArchKind arch, int c) {
  auto unit = [](int cin, int cout) {
    return static_cast<std::size_t>(cout) * (9 * cin + 1 + 1 + 1);  // w + b + gamma + beta
  };
  auto block = [&](int cin, int cout) { return unit(cin, cout) + unit(cout, cout); };
  std::size_t total = 0;
  int widths[5] = {c, 2 * c, 4 * c, 8 * c, 16 * c};
  int cin = 1;
  for (int k = 0; k < 5; ++k) {
    total += block(cin, widths[k]);
    cin = widths[k];
  }
  for (int j = 0; j < 4; ++j) {
    int up_in = widths[4 - j];
    int up_out = up_in / 2;
    total += static_cast<std::size_t>(up_in) * up_out * 4 + up_out;  // deconv w + b
    int dec_in = arch == ArchKind::UNet ? 2 * up_out : up_out;
    total += block(dec_in, up_out);
  }
  total += static_cast<std::size_t>(c) + 1;  // final 1x1 conv
  return total;
}

}  // namespace

TEST_CASE("build validates its configuration") {
  ModelConfig cfg;
  cfg.height = 100;  // not divisible by 16
  CHECK_THROWS_AS(Model::build(cfg, 1), ConfigError);
  cfg.height = 128;
  cfg.base_channels = 0;
  CHECK_THROWS_AS(Model::build(cfg, 1), ConfigError);
}

TEST_CASE("bottleneck is 16c channels at H/16, and widths mirror") {
  ModelConfig cfg;
  cfg.arch = ArchKind::UNet;
  cfg.base_channels = 16;
  cfg.height = 128;
  cfg.width = 128;
  Model m = Model::build(cfg, 1);
  std::vector<std::pair<std::string, Shape>> trace;
  ForwardOptions opts;
  opts.shape_trace = &trace;
  Tensor out = m.forward(random_batch(cfg, 1, 2), Mode::Infer, nullptr, nullptr, opts);
  CHECK(out.shape() == Shape{1, 1, 128, 128});

  std::map<std::string, Shape> by_name(trace.begin(), trace.end());
  CHECK(by_name.at("enc.conv5") == Shape{1, 256, 8, 8});  // 16c at H/16
  for (int k = 1; k <= 5; ++k) {
    int spatial = 128 >> (k - 1);
    CHECK(by_name.at("enc.conv" + std::to_string(k)) ==
          Shape{1, 16 << (k - 1), spatial, spatial});
  }
  for (int j = 1; j <= 4; ++j) {
    int spatial = 128 >> (4 - j);
    CHECK(by_name.at("dec.conv" + std::to_string(j + 5))[2] == spatial);
  }
  for (float v : out.data()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("unet conv6 consumes 16c channels, deconvnet 8c") {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.height = 32;
  cfg.width = 32;
  cfg.arch = ArchKind::UNet;
  Model unet = Model::build(cfg, 1);
  cfg.arch = ArchKind::DeconvNet;
  Model deconv = Model::build(cfg, 1);
  auto in_channels = [](Model& m, const std::string& name) {
    for (Parameter* p : m.parameters()) {
      if (p->name == name) return p->value.dim(1);
    }
    FAIL("missing parameter ", name);
    return -1;
  };
  CHECK(in_channels(unet, "dec.conv6.c1.w") == 64);    // 8c + 8c skip
  CHECK(in_channels(deconv, "dec.conv6.c1.w") == 32);  // 8c
}

TEST_CASE("parameter element count matches the per-layer arithmetic oracle") {
  for (ArchKind arch : {ArchKind::DeconvNet, ArchKind::UNet}) {
    ModelConfig cfg;
    cfg.arch = arch;
    cfg.base_channels = 8;
    cfg.height = 64;
    cfg.width = 64;
    Model m = Model::build(cfg, 3);
    CHECK(m.parameter_elements() == expected_elements(arch, 8));
  }
}

TEST_CASE("freeze table covers every parameter exactly once") {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.height = 32;
  cfg.width = 32;
  Model m = Model::build(cfg, 5);
  std::map<BlockGroup, int> group_counts;
  for (Parameter* p : m.parameters()) {
    group_counts[m.group_of(*p)]++;
  }
  CHECK(group_counts.size() == 6);
  std::size_t total = 0;
  for (auto& [g, n] : group_counts) total += static_cast<std::size_t>(n);
  CHECK(total == m.parameters().size());
}

TEST_CASE("set_freeze applies the level table") {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.height = 32;
  cfg.width = 32;
  Model m = Model::build(cfg, 5);

  SUBCASE("encoder level freezes exactly the enc prefix") {
    m.set_freeze(FreezeLevel::Encoder);
    for (Parameter* p : m.parameters()) {
      bool is_enc = p->name.rfind("enc.", 0) == 0;
      CHECK(p->trainable == !is_enc);
    }
  }
  SUBCASE("dec3 leaves only deconv4, conv9 and final trainable") {
    m.set_freeze(FreezeLevel::Dec3);
    std::set<std::string> trainable;
    for (Parameter* p : m.parameters()) {
      if (p->trainable) {
        std::string head = p->name.substr(0, p->name.find('.', 4));
        trainable.insert(head);
      }
    }
    CHECK(trainable == std::set<std::string>{"dec.deconv4", "dec.conv9", "final"});
  }
  SUBCASE("base level leaves nothing trainable") {
    m.set_freeze(FreezeLevel::Base);
    CHECK(m.trainable_count() == 0);
  }
}

TEST_CASE("zeroed final layer yields 0.5 everywhere") {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.height = 32;
  cfg.width = 32;
  Model m = Model::build(cfg, 7);
  for (Parameter* p : m.parameters()) {
    if (p->name.rfind("final.", 0) == 0) {
      for (float& v : p->value.mutable_data()) v = 0.0f;
    }
  }
  Tensor out = m.forward(random_batch(cfg, 2, 3), Mode::Infer, nullptr, nullptr);
  for (float v : out.data()) CHECK(v == 0.5f);
}

TEST_CASE("infer is deterministic; train mode records a tape") {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.height = 32;
  cfg.width = 32;
  Model m = Model::build(cfg, 11);
  Tensor batch = random_batch(cfg, 2, 5);
  Tensor a = m.forward(batch, Mode::Infer, nullptr, nullptr);
  Tensor b = m.forward(batch, Mode::Infer, nullptr, nullptr);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);

  Rng rng(1);
  Tape tape;
  Tensor c = m.forward(batch, Mode::Train, &rng, &tape);
  CHECK(tape.size() > 0);
  CHECK(c.requires_grad());
  CHECK(m.forward(batch, Mode::Infer, nullptr, nullptr).all_finite());

  SUBCASE("wrong input size is rejected") {
    Tensor bad(Shape{1, 1, 16, 32}, 0.0f);
    CHECK_THROWS_AS(m.forward(bad, Mode::Infer, nullptr, nullptr), ShapeError);
  }
}

TEST_CASE("weight files round-trip bitwise") {
  ModelConfig cfg;
  cfg.arch = ArchKind::UNet;
  cfg.base_channels = 4;
  cfg.height = 32;
  cfg.width = 32;
  Model m = Model::build(cfg, 13);
  // Touch running stats so the round-trip covers them too.
  Rng drop_rng(99);
  m.forward(random_batch(cfg, 2, 6), Mode::Train, &drop_rng, nullptr);

  fs::path dir = temp_dir();
  std::string p1 = (dir / "m1.utcw").string();
  std::string p2 = (dir / "m2.utcw").string();
  m.save(p1);
  Model loaded = Model::load(p1);
  loaded.save(p2);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(b1.size() > 0);

  Tensor batch = random_batch(cfg, 2, 7);
  Tensor before = m.forward(batch, Mode::Infer, nullptr, nullptr);
  Tensor after = loaded.forward(batch, Mode::Infer, nullptr, nullptr);
  for (std::size_t i = 0; i < before.numel(); ++i) {
    CHECK(before.data()[i] == after.data()[i]);
  }
}

TEST_CASE("weight file errors are distinct and named") {
  fs::path dir = temp_dir();

  SUBCASE("bad magic") {
    std::string p = (dir / "junk.utcw").string();
    std::ofstream os(p, std::ios::binary);
    os << "NOPE and some trailing bytes";
    os.close();
    CHECK_THROWS_WITH_AS(Model::load(p), doctest::Contains("magic"), FormatError);
  }
  SUBCASE("truncated file") {
    ModelConfig cfg;
    cfg.base_channels = 4;
    cfg.height = 32;
    cfg.width = 32;
    Model m = Model::build(cfg, 1);
    std::string p = (dir / "trunc.utcw").string();
    m.save(p);
    auto size = fs::file_size(p);
    fs::resize_file(p, size / 2);
    CHECK_THROWS_WITH_AS(Model::load(p), doctest::Contains("truncated"), FormatError);
  }
  SUBCASE("unknown parameter name") {
    std::string p = (dir / "unknown.utcw").string();
    std::ofstream os(p, std::ios::binary);
    os.write(kWeightMagic, 4);
    binio::write_le<std::uint8_t>(os, kWeightVersion);
    binio::write_le<std::uint8_t>(os, 1);  // unet
    binio::write_le<std::uint32_t>(os, 4);
    binio::write_le<std::uint32_t>(os, 32);
    binio::write_le<std::uint32_t>(os, 32);
    binio::write_le<std::uint32_t>(os, 1);
    const std::string name = "bogus.w";
    binio::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::write_le<std::uint8_t>(os, 1);
    binio::write_le<std::uint32_t>(os, 1);
    binio::write_f32_le(os, 0.0f);
    os.close();
    CHECK_THROWS_WITH_AS(Model::load(p), doctest::Contains("unknown parameter"), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(Model::load((dir / "does_not_exist.utcw").string()), IoError);
  }
}

TEST_CASE("unet with zeroed skips equals a deconvnet with the non-skip weight slice") {
  ModelConfig cfg;
  cfg.arch = ArchKind::UNet;
  cfg.base_channels = 4;
  cfg.height = 32;
  cfg.width = 32;
  cfg.dropout_rate = 0.0f;
  Model unet = Model::build(cfg, 21);
  cfg.arch = ArchKind::DeconvNet;
  Model deconv = Model::build(cfg, 22);

  // Copy unet weights into the deconvnet; decoder c1 convs keep only the
  // first (non-skip) input channels.
  std::map<std::string, Parameter*> unet_params;
  for (Parameter* p : unet.parameters()) unet_params[p->name] = p;
  for (Parameter* p : deconv.parameters()) {
    Parameter* src = unet_params.at(p->name);
    if (p->value.same_shape(src->value)) {
      std::copy(src->value.data().begin(), src->value.data().end(),
                p->value.mutable_data().begin());
    } else {
      // [cout][cin][3][3] -> keep cin_deconv leading input channels.
      int cout = p->value.dim(0), cin_d = p->value.dim(1), cin_u = src->value.dim(1);
      REQUIRE(cin_u == 2 * cin_d);
      for (int co = 0; co < cout; ++co) {
        for (int ci = 0; ci < cin_d; ++ci) {
          for (int k = 0; k < 9; ++k) {
            p->value.mutable_data()[(static_cast<std::size_t>(co) * cin_d + ci) * 9 + k] =
                src->value.data()[(static_cast<std::size_t>(co) * cin_u + ci) * 9 + k];
          }
        }
      }
    }
  }

  Tensor batch = random_batch(cfg, 1, 9);
  ForwardOptions zero_skip;
  zero_skip.zero_skips = true;
  Tensor a = unet.forward(batch, Mode::Infer, nullptr, nullptr, zero_skip);
  Tensor b = deconv.forward(batch, Mode::Infer, nullptr, nullptr);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-5));
  }
}
