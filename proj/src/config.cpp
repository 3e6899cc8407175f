#include "contour_adapt/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ca::cli {
namespace {

// 1-based line of the first occurrence of "key" in the raw text; 0 if absent.
int key_line(const std::string& text, const std::string& key) {
  std::string needle = "\"" + key + "\"";
  std::size_t pos = text.find(needle);
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

[[noreturn]] void key_error(const std::string& text, const std::string& key,
                            const std::string& what) {
  int line = key_line(text, key);
  std::string where = line > 0 ? " (line " + std::to_string(line) + ")" : "";
  throw ConfigError(what + " '" + key + "'" + where);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "arch",          "base_channels",     "image_size",     "dropout",
      "source",        "target",            "directions",     "levels",
      "seeds",         "threshold",         "deterministic",  "out",
      "eval_batch_size", "overlay_count",   "sizes",
      "base.learning_rate", "base.batch_size", "base.epochs", "base.iterations",
      "finetune.learning_rate", "finetune.batch_size", "finetune.epochs", "finetune.iterations",
  };
  return keys;
}

class Reader {
 public:
  Reader(const json& j, const std::string& text, std::vector<std::string>& log)
      : j_(j), text_(text), log_(log) {}

  template <class T>
  T required(const std::string& key) {
    if (!j_.contains(key)) key_error(text_, key, "missing required key");
    return get<T>(key);
  }

  template <class T>
  T optional(const std::string& key, T def, const std::string& shown) {
    if (!j_.contains(key)) {
      log_.push_back(key + " = " + shown + " (default)");
      return def;
    }
    return get<T>(key);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key) {
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      key_error(text_, key, "type mismatch for key");
    }
  }

 private:
  const json& j_;
  const std::string& text_;
  std::vector<std::string>& log_;
};

nn::TrainConfig read_train(Reader& r, const std::string& section, float dropout,
                           bool deterministic, int eval_batch, double threshold) {
  nn::TrainConfig t;
  t.learning_rate = r.optional<float>(section + ".learning_rate", 1e-4f, "0.0001");
  t.batch_size = r.optional<int>(section + ".batch_size", 10, "10");
  t.epochs = r.optional<int>(section + ".epochs", 2, "2");
  t.iterations_per_epoch = r.optional<int>(section + ".iterations", 500, "500");
  t.dropout_rate = dropout;
  t.deterministic = deterministic;
  t.eval_batch_size = eval_batch;
  t.eval_threshold = threshold;
  if (t.learning_rate <= 0.0f) throw ConfigError(section + ".learning_rate must be > 0");
  if (t.batch_size < 1) throw ConfigError(section + ".batch_size must be >= 1");
  if (t.epochs < 1) throw ConfigError(section + ".epochs must be >= 1");
  if (t.iterations_per_epoch < 1) throw ConfigError(section + ".iterations must be >= 1");
  return t;
}

}  // namespace

void validate_scenario(const ScenarioConfig& cfg) {
  if (cfg.source_path.empty() || cfg.target_path.empty()) {
    throw ConfigError("source and target dataset paths are required");
  }
  if (fs::weakly_canonical(cfg.source_path) == fs::weakly_canonical(cfg.target_path)) {
    throw ConfigError("source and target must be distinct datasets");
  }
  for (const std::string& p : {cfg.source_path, cfg.target_path}) {
    fs::path mp = fs::is_directory(p) ? fs::path(p) / "manifest.json" : fs::path(p);
    if (!fs::exists(mp)) throw ConfigError("dataset path '" + p + "' has no manifest.json");
  }
  if (cfg.seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (cfg.directions.empty()) throw ConfigError("directions must not be empty");
  for (const std::string& d : cfg.directions) {
    if (d != "s2t" && d != "t2s") {
      throw ConfigError("direction '" + d + "' is not s2t|t2s");
    }
  }
  if (cfg.levels.empty()) throw ConfigError("levels must list at least one fine-tune level");
  if (cfg.threshold <= 0.0 || cfg.threshold >= 1.0) throw ConfigError("threshold must be in (0,1)");
}

AnyConfig parse_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  std::string text = buf.str();

  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config '" + path + "': top level must be an object");
  for (const auto& item : j.items()) {
    if (known_keys().find(item.key()) == known_keys().end()) {
      key_error(text, item.key(), "unknown key");
    }
  }

  ScenarioConfig cfg;
  cfg.raw_json = text;
  Reader r(j, text, cfg.applied_defaults);

  cfg.model.arch = nn::arch_from_name(r.optional<std::string>("arch", "unet", "unet"));
  cfg.model.base_channels = r.optional<int>("base_channels", 16, "16");
  auto size = r.optional<std::vector<int>>("image_size", {128, 128}, "[128,128]");
  if (size.size() != 2) throw ConfigError("image_size must be [H, W]");
  cfg.model.height = size[0];
  cfg.model.width = size[1];
  cfg.model.dropout_rate = r.optional<float>("dropout", 0.5f, "0.5");
  cfg.source_path = r.required<std::string>("source");
  cfg.target_path = r.required<std::string>("target");
  cfg.directions = r.optional<std::vector<std::string>>("directions", {"s2t", "t2s"},
                                                        "[s2t,t2s]");
  bool is_sweep = r.has("sizes");
  auto level_names = r.optional<std::vector<std::string>>(
      "levels", is_sweep ? std::vector<std::string>{"encoder", "dec3"}
                         : std::vector<std::string>{"encoder", "dec1", "dec2", "dec3"},
      is_sweep ? "[encoder,dec3]" : "[encoder,dec1,dec2,dec3]");
  for (const std::string& name : level_names) {
    nn::FreezeLevel lv = nn::freeze_from_name(name);
    if (lv == nn::FreezeLevel::Base) continue;  // always evaluated anyway
    cfg.levels.push_back(lv);
  }
  auto seed_list = r.optional<std::vector<std::uint64_t>>("seeds", {1, 2, 3}, "[1,2,3]");
  cfg.seeds = seed_list;
  cfg.threshold = r.optional<double>("threshold", 0.5, "0.5");
  cfg.deterministic = r.optional<bool>("deterministic", true, "true");
  cfg.out_dir = r.optional<std::string>("out", "", "<cli --out>");
  cfg.eval_batch_size = r.optional<int>("eval_batch_size", 8, "8");
  cfg.overlay_count = r.optional<int>("overlay_count", 0, "0");
  cfg.base_train = read_train(r, "base", cfg.model.dropout_rate, cfg.deterministic,
                              cfg.eval_batch_size, cfg.threshold);
  cfg.finetune_train = read_train(r, "finetune", cfg.model.dropout_rate, cfg.deterministic,
                                  cfg.eval_batch_size, cfg.threshold);
  validate_scenario(cfg);

  if (!is_sweep) return cfg;

  SweepConfig sweep;
  sweep.sizes = r.required<std::vector<int>>("sizes");
  if (sweep.sizes.empty()) throw ConfigError("sizes must not be empty");
  for (std::size_t i = 0; i < sweep.sizes.size(); ++i) {
    if (sweep.sizes[i] < 1) throw ConfigError("sizes must be positive");
    if (i > 0 && sweep.sizes[i] <= sweep.sizes[i - 1]) {
      throw ConfigError("sizes must be strictly increasing");
    }
  }
  for (nn::FreezeLevel lv : cfg.levels) {
    if (lv != nn::FreezeLevel::Encoder && lv != nn::FreezeLevel::Dec3) {
      throw ConfigError("sweep levels are restricted to encoder and dec3");
    }
  }
  sweep.scenario = std::move(cfg);
  return sweep;
}

nn::TrainConfig parse_train_config(const std::string& path, const std::string& section) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  std::string text = buf.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  const std::set<std::string> allowed = {
      section + ".learning_rate", section + ".batch_size", section + ".epochs",
      section + ".iterations",    section + ".seed",       "dropout",
      "deterministic",            "threshold",             "eval_batch_size",
  };
  for (const auto& item : j.items()) {
    if (allowed.find(item.key()) == allowed.end()) {
      key_error(text, item.key(), "unknown key");
    }
  }
  std::vector<std::string> log;
  Reader r(j, text, log);
  float dropout = r.optional<float>("dropout", 0.5f, "0.5");
  bool deterministic = r.optional<bool>("deterministic", true, "true");
  double threshold = r.optional<double>("threshold", 0.5, "0.5");
  int eval_batch = r.optional<int>("eval_batch_size", 8, "8");
  nn::TrainConfig t = read_train(r, section, dropout, deterministic, eval_batch, threshold);
  t.seed = r.optional<std::uint64_t>(section + ".seed", 1, "1");
  return t;
}

}  // namespace ca::cli
