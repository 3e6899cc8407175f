#include "contour_adapt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "contour_adapt/errors.hpp"
#include "contour_adapt/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ca::data {

void DomainParams::validate() const {
  if (amp_lo > amp_hi || tilt_lo > tilt_hi || offset_lo > offset_hi) {
    throw ConfigError("domain params: degenerate range (lo > hi)");
  }
  if (band_halfwidth < 1) throw ConfigError("domain params: band_halfwidth must be >= 1");
  if (band_peak <= 0.0 || band_peak > 1.0) throw ConfigError("domain params: band_peak in (0,1]");
  if (speckle_sigma < 0.0 || gamma <= 0.0 || shadow_depth < 0.0 || shadow_depth > 1.0 ||
      background < 0.0 || noise < 0.0 || shadow_count < 0) {
    throw ConfigError("domain params: negative or out-of-range field");
  }
}

DomainParams domain_preset(const std::string& name) {
  DomainParams p;  // defaults are domain A
  if (name == "A" || name == "a") return p;
  if (name == "B" || name == "b") {
    p.amp_lo = 0.06;
    p.amp_hi = 0.16;
    p.tilt_lo = -0.12;
    p.tilt_hi = 0.12;
    p.offset_lo = 0.52;
    p.offset_hi = 0.68;
    p.band_halfwidth = 6;
    p.band_peak = 0.55;
    p.speckle_sigma = 0.45;
    p.gamma = 1.5;
    p.shadow_count = 3;
    p.shadow_depth = 0.5;
    p.background = 0.16;
    p.noise = 0.045;
    return p;
  }
  throw ConfigError("unknown domain preset '" + name + "' (expected A or B)");
}

std::vector<std::string> Manifest::origin_order() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const SampleRef& s : samples) {
    if (seen.insert(s.origin_id).second) out.push_back(s.origin_id);
  }
  return out;
}

std::vector<std::size_t> Manifest::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out.push_back(i);
  }
  return out;
}

namespace {

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05d", index);
  return buf;
}

void ensure_dataset_dirs(const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");
}

struct RenderedSample {
  PgmImage image, mask;
};

RenderedSample render_sample(const DomainParams& p, int height, int width, Rng rng) {
  RenderedSample out;
  out.image.width = width;
  out.image.height = height;
  out.image.pixels.assign(static_cast<std::size_t>(width) * height, 0);
  out.mask = out.image;

  const double amp = rng.uniform(p.amp_lo, p.amp_hi);
  const double tilt = rng.uniform(p.tilt_lo, p.tilt_hi);
  const double offset = rng.uniform(p.offset_lo, p.offset_hi);

  // Fan shadows radiate from an apex slightly above the frame.
  std::vector<double> shadow_angle(static_cast<std::size_t>(p.shadow_count));
  std::vector<double> shadow_width(static_cast<std::size_t>(p.shadow_count));
  for (int s = 0; s < p.shadow_count; ++s) {
    shadow_angle[s] = rng.uniform(-1.0, 1.0);            // radians from vertical
    shadow_width[s] = rng.uniform(0.05, 0.14);
  }
  const double apex_x = 0.5 * (width - 1);
  const double apex_y = -0.1 * height;

  std::vector<double> curve(static_cast<std::size_t>(width));
  for (int x = 0; x < width; ++x) {
    double u = width > 1 ? static_cast<double>(x) / (width - 1) : 0.5;
    curve[x] = height * (offset + tilt * (u - 0.5) - amp * std::sin(std::numbers::pi * u));
  }

  const double sigma = static_cast<double>(p.band_halfwidth);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double d = static_cast<double>(y) - curve[x];
      double val = p.background + (p.band_peak - p.background) * std::exp(-d * d / (2 * sigma * sigma));
      double speckle = 1.0 + p.speckle_sigma * rng.normal();
      val *= speckle > 0.0 ? speckle : 0.0;
      double angle = std::atan2(static_cast<double>(x) - apex_x, static_cast<double>(y) - apex_y);
      for (int s = 0; s < p.shadow_count; ++s) {
        double rel = (angle - shadow_angle[s]) / shadow_width[s];
        val *= 1.0 - p.shadow_depth * std::exp(-rel * rel);
      }
      val += p.noise * (2.0 * rng.uniform() - 1.0);
      val = std::clamp(val, 0.0, 1.0);
      val = std::pow(val, p.gamma);
      out.image.at(y, x) = static_cast<std::uint8_t>(std::lround(val * 255.0));
      if (std::abs(d) <= static_cast<double>(p.band_halfwidth)) out.mask.at(y, x) = 255;
    }
  }
  return out;
}

json params_to_json(const DomainParams& p) {
  return json{{"amp_lo", p.amp_lo},       {"amp_hi", p.amp_hi},
              {"tilt_lo", p.tilt_lo},     {"tilt_hi", p.tilt_hi},
              {"offset_lo", p.offset_lo}, {"offset_hi", p.offset_hi},
              {"band_halfwidth", p.band_halfwidth},
              {"band_peak", p.band_peak}, {"speckle_sigma", p.speckle_sigma},
              {"gamma", p.gamma},         {"shadow_count", p.shadow_count},
              {"shadow_depth", p.shadow_depth},
              {"background", p.background},
              {"noise", p.noise}};
}

DomainParams params_from_json(const json& j) {
  DomainParams p;
  p.amp_lo = j.at("amp_lo").get<double>();
  p.amp_hi = j.at("amp_hi").get<double>();
  p.tilt_lo = j.at("tilt_lo").get<double>();
  p.tilt_hi = j.at("tilt_hi").get<double>();
  p.offset_lo = j.at("offset_lo").get<double>();
  p.offset_hi = j.at("offset_hi").get<double>();
  p.band_halfwidth = j.at("band_halfwidth").get<int>();
  p.band_peak = j.at("band_peak").get<double>();
  p.speckle_sigma = j.at("speckle_sigma").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.shadow_count = j.at("shadow_count").get<int>();
  p.shadow_depth = j.at("shadow_depth").get<double>();
  p.background = j.at("background").get<double>();
  p.noise = j.at("noise").get<double>();
  return p;
}

}  // namespace

Manifest gen_synthetic(const DomainParams& params, const std::string& domain_label, int n,
                       int height, int width, std::uint64_t seed, const std::string& out_dir) {
  if (n < 0) throw ConfigError("gen_synthetic: count must be >= 0");
  if (height < 8 || width < 8) throw ConfigError("gen_synthetic: image size too small");
  params.validate();
  ensure_dataset_dirs(out_dir);

  Manifest m;
  m.domain = domain_label;
  m.seed = seed;
  m.height = height;
  m.width = width;
  m.params = params;
  m.root = out_dir;
  m.samples.resize(static_cast<std::size_t>(n));

  Rng root(seed);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      RenderedSample r = render_sample(params, height, width, root.child("sample", i));
      std::string stem = domain_label + "_" + frame_name(static_cast<int>(i));
      SampleRef ref;
      ref.image = "images/" + stem + ".pgm";
      ref.mask = "masks/" + stem + ".pgm";
      ref.origin_id = stem;
      write_pgm((fs::path(out_dir) / ref.image).string(), r.image);
      write_pgm((fs::path(out_dir) / ref.mask).string(), r.mask);
      m.samples[i] = std::move(ref);
    }
  });
  save_manifest(m);
  return m;
}

std::vector<float> mean_image(const Manifest& m) {
  if (m.samples.empty()) throw ContractError("mean_image: empty dataset");
  const std::size_t plane = static_cast<std::size_t>(m.height) * m.width;
  std::vector<double> acc(plane, 0.0);
  for (const SampleRef& ref : m.samples) {
    LoadedSample s = load_sample(m, ref);
    for (std::size_t i = 0; i < plane; ++i) {
      acc[i] += static_cast<double>(s.image.pixels[i]) / 255.0;
    }
  }
  std::vector<float> out(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    out[i] = static_cast<float>(acc[i] / static_cast<double>(m.samples.size()));
  }
  return out;
}

Manifest informed_undersample(const Manifest& m, int n_hi, int n_lo, const std::string& out_dir) {
  if (n_hi < 0 || n_lo < 0 ||
      static_cast<std::size_t>(n_hi) + static_cast<std::size_t>(n_lo) > m.samples.size()) {
    throw ConfigError("informed_undersample: n_hi + n_lo exceeds sample count");
  }
  std::vector<float> mean = mean_image(m);
  const std::size_t plane = mean.size();

  struct Scored {
    double score;
    std::size_t index;
  };
  std::vector<Scored> ranked(m.samples.size());
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    LoadedSample s = load_sample(m, m.samples[i]);
    double acc = 0.0;
    for (std::size_t px = 0; px < plane; ++px) {
      double d = static_cast<double>(s.image.pixels[px]) / 255.0 - static_cast<double>(mean[px]);
      acc += d * d;
    }
    ranked[i] = Scored{std::sqrt(acc), i};
  }
  std::sort(ranked.begin(), ranked.end(), [&](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;  // descending
    const SampleRef& ra = m.samples[a.index];
    const SampleRef& rb = m.samples[b.index];
    if (ra.origin_id != rb.origin_id) return ra.origin_id < rb.origin_id;
    return ra.image < rb.image;
  });

  std::vector<std::size_t> keep;
  keep.reserve(static_cast<std::size_t>(n_hi) + n_lo);
  for (int i = 0; i < n_hi; ++i) keep.push_back(ranked[static_cast<std::size_t>(i)].index);
  for (std::size_t i = ranked.size() - static_cast<std::size_t>(n_lo); i < ranked.size(); ++i) {
    keep.push_back(ranked[i].index);
  }

  ensure_dataset_dirs(out_dir);
  Manifest out = m;
  out.root = out_dir;
  out.samples.clear();
  out.undersample = UndersampleInfo{"l2", n_hi, n_lo};
  for (std::size_t idx : keep) {
    const SampleRef& ref = m.samples[idx];
    fs::copy_file(fs::path(m.root) / ref.image, fs::path(out_dir) / ref.image,
                  fs::copy_options::overwrite_existing);
    fs::copy_file(fs::path(m.root) / ref.mask, fs::path(out_dir) / ref.mask,
                  fs::copy_options::overwrite_existing);
    out.samples.push_back(ref);
  }
  save_manifest(out);
  return out;
}

namespace {

struct InverseAffine {
  double cx, cy;     // center
  double cos_t, sin_t, inv_zoom;
  bool flip;
  int w;

  // Maps an output pixel to its source coordinates.
  void map(int x, int y, double& sx, double& sy) const {
    double rx = static_cast<double>(x) - cx;
    double ry = static_cast<double>(y) - cy;
    double ux = (cos_t * rx + sin_t * ry) * inv_zoom + cx;
    double uy = (-sin_t * rx + cos_t * ry) * inv_zoom + cy;
    if (flip) ux = static_cast<double>(w - 1) - ux;
    sx = ux;
    sy = uy;
  }
};

InverseAffine make_inverse(const PgmImage& src, const WarpSpec& spec) {
  double theta = spec.rotate_deg * std::numbers::pi / 180.0;
  InverseAffine inv;
  inv.cx = 0.5 * (src.width - 1);
  inv.cy = 0.5 * (src.height - 1);
  // Exact identity when rotate_deg == 0.
  inv.cos_t = spec.rotate_deg == 0.0 ? 1.0 : std::cos(theta);
  inv.sin_t = spec.rotate_deg == 0.0 ? 0.0 : std::sin(theta);
  inv.inv_zoom = 1.0 / spec.zoom;
  inv.flip = spec.flip;
  inv.w = src.width;
  return inv;
}

}  // namespace

PgmImage warp_bilinear(const PgmImage& src, const WarpSpec& spec) {
  if (spec.zoom <= 0.0) throw ContractError("warp: zoom must be > 0");
  PgmImage out;
  out.width = src.width;
  out.height = src.height;
  out.pixels.assign(src.pixels.size(), 0);
  InverseAffine inv = make_inverse(src, spec);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      double sx, sy;
      inv.map(x, y, sx, sy);
      double fx = std::floor(sx), fy = std::floor(sy);
      int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      double ax = sx - fx, ay = sy - fy;
      auto px = [&](int yy, int xx) -> double {
        if (xx < 0 || xx >= src.width || yy < 0 || yy >= src.height) return 0.0;
        return static_cast<double>(src.at(yy, xx));
      };
      double v = (1 - ay) * ((1 - ax) * px(y0, x0) + ax * px(y0, x0 + 1)) +
                 ay * ((1 - ax) * px(y0 + 1, x0) + ax * px(y0 + 1, x0 + 1));
      out.at(y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return out;
}

PgmImage warp_nearest(const PgmImage& src, const WarpSpec& spec) {
  if (spec.zoom <= 0.0) throw ContractError("warp: zoom must be > 0");
  PgmImage out;
  out.width = src.width;
  out.height = src.height;
  out.pixels.assign(src.pixels.size(), 0);
  InverseAffine inv = make_inverse(src, spec);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      double sx, sy;
      inv.map(x, y, sx, sy);
      int xi = static_cast<int>(std::lround(sx));
      int yi = static_cast<int>(std::lround(sy));
      std::uint8_t v = 0;
      if (xi >= 0 && xi < src.width && yi >= 0 && yi < src.height) v = src.at(yi, xi);
      out.at(y, x) = v >= 128 ? 255 : 0;  // re-binarize
    }
  }
  return out;
}

PgmImage flip_horizontal(const PgmImage& src) {
  PgmImage out = src;
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      out.at(y, x) = src.at(y, src.width - 1 - x);
    }
  }
  return out;
}

Manifest augment(const Manifest& m, int factor, const AugmentParams& p, std::uint64_t seed,
                 const std::string& out_dir) {
  if (factor < 1) throw ConfigError("augment: factor must be >= 1");
  if (p.zoom_lo > p.zoom_hi || p.zoom_lo <= 0.0) throw ConfigError("augment: bad zoom range");
  if (p.rotate_deg < 0.0) throw ConfigError("augment: rotate_deg must be >= 0");
  ensure_dataset_dirs(out_dir);

  Manifest out = m;
  out.root = out_dir;
  out.samples.clear();
  out.samples.resize(m.samples.size() * static_cast<std::size_t>(factor + 1));
  AugmentParams stamp = p;
  stamp.factor = factor;
  out.augmented = stamp;

  Rng root(seed);
  parallel_for(m.samples.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const SampleRef& ref = m.samples[i];
      std::size_t base = i * static_cast<std::size_t>(factor + 1);
      fs::copy_file(fs::path(m.root) / ref.image, fs::path(out_dir) / ref.image,
                    fs::copy_options::overwrite_existing);
      fs::copy_file(fs::path(m.root) / ref.mask, fs::path(out_dir) / ref.mask,
                    fs::copy_options::overwrite_existing);
      out.samples[base] = ref;

      LoadedSample src = load_sample(m, ref);
      fs::path img_rel(ref.image);
      std::string stem = img_rel.stem().string();
      for (int k = 0; k < factor; ++k) {
        Rng draw = root.child(ref.origin_id, static_cast<std::uint64_t>(k));
        WarpSpec spec;
        spec.flip = p.flip && draw.bernoulli(0.5);
        spec.rotate_deg = draw.uniform(-p.rotate_deg, p.rotate_deg);
        spec.zoom = draw.uniform(p.zoom_lo, p.zoom_hi);
        SampleRef aug;
        std::string name = stem + "_a" + std::to_string(k) + ".pgm";
        aug.image = "images/" + name;
        aug.mask = "masks/" + name;
        aug.origin_id = ref.origin_id;
        aug.split = ref.split;
        write_pgm((fs::path(out_dir) / aug.image).string(), warp_bilinear(src.image, spec));
        write_pgm((fs::path(out_dir) / aug.mask).string(), warp_nearest(src.mask, spec));
        out.samples[base + 1 + static_cast<std::size_t>(k)] = std::move(aug);
      }
    }
  });
  save_manifest(out);
  return out;
}

void assign_splits(Manifest& m, double train, double val, double test, std::uint64_t seed) {
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  if (train <= 0.0 || val <= 0.0 || test <= 0.0) {
    throw ConfigError("split ratios must all be positive");
  }
  std::vector<std::string> origins = m.origin_order();
  if (origins.size() < 3) {
    throw ConfigError("split needs at least 3 distinct origin ids, got " +
                      std::to_string(origins.size()));
  }
  Rng rng = Rng(seed).child("split");
  shuffle(origins, rng);

  const double g = static_cast<double>(origins.size());
  double exact[3] = {train * g, val * g, test * g};
  std::size_t count[3];
  double frac[3];
  std::size_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    count[s] = static_cast<std::size_t>(std::floor(exact[s]));
    frac[s] = exact[s] - std::floor(exact[s]);
    assigned += count[s];
  }
  // Distribute the remainder by largest fraction, ties in train/val/test order.
  while (assigned < origins.size()) {
    int best = 0;
    for (int s = 1; s < 3; ++s) {
      if (frac[s] > frac[best]) best = s;
    }
    ++count[best];
    frac[best] = -1.0;
    ++assigned;
  }
  // Non-empty val and test.
  for (int s = 1; s < 3; ++s) {
    if (count[s] == 0) {
      int donor = count[0] > 1 ? 0 : (s == 1 ? 2 : 1);
      --count[donor];
      ++count[s];
    }
  }

  std::unordered_map<std::string, const char*> label;
  std::size_t cursor = 0;
  const char* names[3] = {"train", "val", "test"};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < count[s]; ++k) label[origins[cursor++]] = names[s];
  }
  for (SampleRef& ref : m.samples) ref.split = label.at(ref.origin_id);
  m.split_info = SplitInfo{train, val, test, seed};
  save_manifest(m);
}

void save_manifest(const Manifest& m) {
  json j;
  j["schema_version"] = m.schema_version;
  j["domain"] = m.domain;
  j["seed"] = m.seed;
  j["height"] = m.height;
  j["width"] = m.width;
  j["params"] = params_to_json(m.params);
  if (m.undersample.has_value()) {
    j["undersample"] = json{{"metric", m.undersample->metric},
                            {"n_hi", m.undersample->n_hi},
                            {"n_lo", m.undersample->n_lo}};
  }
  if (m.augmented.has_value()) {
    j["augment"] = json{{"factor", m.augmented->factor},
                        {"rotate_deg", m.augmented->rotate_deg},
                        {"zoom_lo", m.augmented->zoom_lo},
                        {"zoom_hi", m.augmented->zoom_hi},
                        {"flip", m.augmented->flip}};
  }
  if (m.split_info.has_value()) {
    j["split"] = json{{"train", m.split_info->train},
                      {"val", m.split_info->val},
                      {"test", m.split_info->test},
                      {"seed", m.split_info->seed}};
  }
  json samples = json::array();
  for (const SampleRef& s : m.samples) {
    samples.push_back(json{{"image", s.image},
                           {"mask", s.mask},
                           {"origin", s.origin_id},
                           {"split", s.split}});
  }
  j["samples"] = std::move(samples);

  fs::create_directories(m.root);
  std::string path = (fs::path(m.root) / "manifest.json").string();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed for '" + path + "'");
}

Manifest load_manifest(const std::string& dir) {
  fs::path root(dir);
  fs::path manifest_path = root;
  if (fs::is_directory(root)) {
    manifest_path = root / "manifest.json";
  } else {
    root = manifest_path.parent_path();
  }
  std::ifstream is(manifest_path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + manifest_path.string() + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError("'" + manifest_path.string() + "': " + e.what());
  }
  Manifest m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != 1) {
      throw FormatError("'" + manifest_path.string() + "': unsupported schema_version " +
                        std::to_string(m.schema_version));
    }
    m.domain = j.at("domain").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.params = params_from_json(j.at("params"));
    if (j.contains("undersample")) {
      const json& u = j["undersample"];
      m.undersample = UndersampleInfo{u.at("metric").get<std::string>(), u.at("n_hi").get<int>(),
                                      u.at("n_lo").get<int>()};
    }
    if (j.contains("augment")) {
      const json& a = j["augment"];
      AugmentParams p;
      p.factor = a.at("factor").get<int>();
      p.rotate_deg = a.at("rotate_deg").get<double>();
      p.zoom_lo = a.at("zoom_lo").get<double>();
      p.zoom_hi = a.at("zoom_hi").get<double>();
      p.flip = a.at("flip").get<bool>();
      m.augmented = p;
    }
    if (j.contains("split")) {
      const json& s = j["split"];
      m.split_info = SplitInfo{s.at("train").get<double>(), s.at("val").get<double>(),
                               s.at("test").get<double>(), s.at("seed").get<std::uint64_t>()};
    }
    for (const json& s : j.at("samples")) {
      SampleRef ref;
      ref.image = s.at("image").get<std::string>();
      ref.mask = s.at("mask").get<std::string>();
      ref.origin_id = s.at("origin").get<std::string>();
      ref.split = s.at("split").get<std::string>();
      m.samples.push_back(std::move(ref));
    }
  } catch (const json::exception& e) {
    throw FormatError("'" + manifest_path.string() + "': bad manifest: " + e.what());
  }
  m.root = root.string();
  for (const SampleRef& s : m.samples) {
    if (!fs::exists(root / s.image)) {
      throw IoError("manifest references missing file '" + (root / s.image).string() + "'");
    }
    if (!fs::exists(root / s.mask)) {
      throw IoError("manifest references missing file '" + (root / s.mask).string() + "'");
    }
  }
  return m;
}

LoadedSample load_sample(const Manifest& m, const SampleRef& ref) {
  LoadedSample s;
  s.image = read_pgm((fs::path(m.root) / ref.image).string());
  s.mask = read_pgm((fs::path(m.root) / ref.mask).string());
  if (s.image.width != s.mask.width || s.image.height != s.mask.height) {
    throw FormatError("sample '" + ref.origin_id + "': image is " + std::to_string(s.image.width) +
                      "x" + std::to_string(s.image.height) + " but mask is " +
                      std::to_string(s.mask.width) + "x" + std::to_string(s.mask.height));
  }
  if (m.height != 0 && (s.image.height != m.height || s.image.width != m.width)) {
    throw FormatError("sample '" + ref.origin_id + "': size does not match manifest " +
                      std::to_string(m.width) + "x" + std::to_string(m.height));
  }
  for (std::uint8_t v : s.mask.pixels) {
    if (v != 0 && v != 255) {
      throw FormatError("'" + ref.mask + "': mask not binary (value " + std::to_string(v) + ")");
    }
  }
  return s;
}

ManifestSource::ManifestSource(const Manifest& m, const std::string& split)
    : manifest_(&m), indices_(m.split_indices(split)) {}

ManifestSource::ManifestSource(const Manifest& m, std::vector<std::size_t> indices)
    : manifest_(&m), indices_(std::move(indices)) {}

void ManifestSource::sample(std::size_t index, std::span<float> image,
                            std::span<float> mask) const {
  const SampleRef& ref = manifest_->samples[indices_[index]];
  LoadedSample s = load_sample(*manifest_, ref);
  for (std::size_t i = 0; i < image.size(); ++i) {
    image[i] = static_cast<float>(s.image.pixels[i]) / 255.0f;
    mask[i] = s.mask.pixels[i] >= 128 ? 1.0f : 0.0f;
  }
}

std::vector<std::size_t> subsample_grouped(const Manifest& m, const std::string& split, int count,
                                           std::uint64_t seed) {
  std::vector<std::size_t> pool = m.split_indices(split);
  if (count < 1 || static_cast<std::size_t>(count) > pool.size()) {
    throw ConfigError("subsample: count " + std::to_string(count) + " out of range (split has " +
                      std::to_string(pool.size()) + " samples)");
  }
  // Origin order within the split, then a seeded shuffle of origins.
  std::vector<std::string> origins;
  std::unordered_map<std::string, std::vector<std::size_t>> by_origin;
  for (std::size_t idx : pool) {
    const std::string& o = m.samples[idx].origin_id;
    auto [it, fresh] = by_origin.try_emplace(o);
    if (fresh) origins.push_back(o);
    it->second.push_back(idx);
  }
  Rng rng = Rng(seed).child("subsample");
  shuffle(origins, rng);

  std::vector<std::size_t> chosen;
  chosen.reserve(static_cast<std::size_t>(count));
  for (const std::string& o : origins) {
    if (chosen.size() == static_cast<std::size_t>(count)) break;
    for (std::size_t idx : by_origin[o]) {
      chosen.push_back(idx);
      if (chosen.size() == static_cast<std::size_t>(count)) break;
    }
  }
  std::sort(chosen.begin(), chosen.end());  // back to manifest order
  return chosen;
}

}  // namespace ca::data
