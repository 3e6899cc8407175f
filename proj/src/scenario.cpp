#include "contour_adapt/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "contour_adapt/dataset.hpp"
#include "contour_adapt/hash.hpp"
#include "contour_adapt/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ca::cli {
namespace {

struct Stage {
  std::string name;
};

template <class Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::runtime_error("stage '" + name + "' failed: " + e.what());
  }
}

eval::ReportMeta make_meta(const ScenarioConfig& cfg) {
  eval::ReportMeta meta;
  meta.version = kVersion;
  meta.config_hash = to_hex(fnv1a64(cfg.raw_json));
  meta.seeds = cfg.seeds;
  meta.config_json = cfg.raw_json;
  return meta;
}

void check_domains(const data::Manifest& a, const data::Manifest& b) {
  if (a.domain == b.domain) {
    throw ConfigError("source and target datasets share the domain label '" + a.domain + "'");
  }
}

void check_split(const data::Manifest& m, const char* which) {
  for (const char* split : {"train", "val", "test"}) {
    if (m.split_indices(split).empty()) {
      throw ConfigError(std::string(which) + " dataset '" + m.root + "' has an empty '" + split +
                        "' split; run the split stage first");
    }
  }
}

eval::EvalResult to_result(const eval::EvalStats& s, const std::string& domain,
                           const std::string& model_id, const std::string& level) {
  eval::EvalResult r;
  r.loss = s.loss;
  r.dice = s.dice;
  r.n = s.n;
  r.domain = domain;
  r.model_id = model_id;
  r.level = level;
  return r;
}

class IncompleteMarker {
 public:
  explicit IncompleteMarker(const std::string& out_dir)
      : path_(fs::path(out_dir) / "INCOMPLETE") {
    fs::create_directories(out_dir);
    std::ofstream os(path_);
    os << "run in progress or aborted\n";
  }
  void done() {
    fs::remove(path_);
    armed_ = false;
  }
  ~IncompleteMarker() = default;  // marker intentionally survives failures

 private:
  fs::path path_;
  bool armed_ = true;
};

std::vector<std::string> level_columns(const std::vector<nn::FreezeLevel>& levels) {
  std::vector<std::string> cols{"base"};
  for (nn::FreezeLevel lv : levels) cols.push_back(nn::freeze_name(lv));
  return cols;
}

eval::MetricsTable median_table(const std::vector<eval::LabeledTable>& tables,
                                const std::string& direction) {
  const eval::MetricsTable* ref = nullptr;
  std::vector<const eval::MetricsTable*> group;
  for (const auto& lt : tables) {
    if (lt.table.direction == direction && lt.label != "median") {
      group.push_back(&lt.table);
      ref = &lt.table;
    }
  }
  eval::MetricsTable out;
  out.direction = direction;
  out.source_domain = ref->source_domain;
  out.target_domain = ref->target_domain;
  out.levels = ref->levels;
  for (const std::string& lv : out.levels) {
    auto cell = [&](bool source) {
      std::vector<double> losses, dices;
      for (const eval::MetricsTable* t : group) {
        const eval::EvalResult& r = source ? t->on_source.at(lv) : t->on_target.at(lv);
        losses.push_back(r.loss);
        dices.push_back(r.dice);
      }
      const eval::EvalResult& first = source ? group.front()->on_source.at(lv)
                                             : group.front()->on_target.at(lv);
      eval::EvalResult r = first;
      r.model_id = direction + "/median/" + lv;
      r.loss = eval::median(losses);
      r.dice = eval::median(dices);
      return r;
    };
    out.on_source[lv] = cell(true);
    out.on_target[lv] = cell(false);
  }
  return out;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  validate_scenario(cfg);
  if (cfg.out_dir.empty()) throw ConfigError("scenario: no output directory configured");

  data::Manifest source = stage("load-source", [&] { return data::load_manifest(cfg.source_path); });
  data::Manifest target = stage("load-target", [&] { return data::load_manifest(cfg.target_path); });
  check_domains(source, target);
  check_split(source, "source");
  check_split(target, "target");

  IncompleteMarker marker(cfg.out_dir);
  fs::create_directories(fs::path(cfg.out_dir) / "weights");
  fs::create_directories(fs::path(cfg.out_dir) / "reports");

  ScenarioResult result;
  for (const std::string& direction : cfg.directions) {
    const data::Manifest& dsrc = direction == "s2t" ? source : target;
    const data::Manifest& dtgt = direction == "s2t" ? target : source;
    const std::string dir_label = dsrc.domain + "->" + dtgt.domain;

    data::ManifestSource src_train(dsrc, "train"), src_val(dsrc, "val"), src_test(dsrc, "test");
    data::ManifestSource tgt_train(dtgt, "train"), tgt_val(dtgt, "val"), tgt_test(dtgt, "test");

    for (std::uint64_t seed : cfg.seeds) {
      std::string run_dir = (fs::path(cfg.out_dir) / "weights" / direction /
                             ("seed" + std::to_string(seed))).string();
      fs::create_directories(run_dir);
      std::string base_path = run_dir + "/base.utcw";
      std::string run_id = direction + "/seed" + std::to_string(seed);

      nn::TrainConfig base_cfg = cfg.base_train;
      base_cfg.seed = seed;
      stage("train-base[" + run_id + "]", [&] {
        nn::Model base = nn::Model::build(cfg.model, seed);
        nn::TrainHistory hist = nn::train(base, src_train, src_val, base_cfg);
        base.save(base_path);
        eval::write_history_csv(hist, run_dir + "/base");
        ++result.models_trained;
        return 0;
      });

      eval::MetricsTable table;
      table.direction = dir_label;
      table.source_domain = dsrc.domain;
      table.target_domain = dtgt.domain;
      table.levels = level_columns(cfg.levels);

      stage("eval-base[" + run_id + "]", [&] {
        nn::Model base = nn::Model::load(base_path, cfg.model.dropout_rate);
        table.on_source["base"] = to_result(
            eval::eval_source(base, src_test, cfg.eval_batch_size, cfg.threshold), dsrc.domain,
            run_id + "/base", "base");
        table.on_target["base"] = to_result(
            eval::eval_source(base, tgt_test, cfg.eval_batch_size, cfg.threshold), dtgt.domain,
            run_id + "/base", "base");
        if (cfg.overlay_count > 0 && seed == cfg.seeds.front()) {
          eval::emit_overlays(base, tgt_test, cfg.overlay_count,
                              (fs::path(cfg.out_dir) / "overlays" / direction / "base").string(),
                              cfg.threshold);
        }
        return 0;
      });

      for (nn::FreezeLevel level : cfg.levels) {
        std::string lv = nn::freeze_name(level);
        std::string model_id = run_id + "/" + lv;
        nn::TrainConfig ft_cfg = cfg.finetune_train;
        ft_cfg.seed = seed;
        stage("fine-tune[" + model_id + "]", [&] {
          nn::FineTuneResult ft = nn::fine_tune(base_path, tgt_train, tgt_val, ft_cfg, level,
                                                cfg.model.arch);
          std::string ft_path = run_dir + "/ft_" + lv + ".utcw";
          ft.model.save(ft_path);
          eval::write_history_csv(ft.history, run_dir + "/ft_" + lv);
          ++result.models_trained;
          table.on_source[lv] = to_result(
              eval::eval_source(ft.model, src_test, cfg.eval_batch_size, cfg.threshold),
              dsrc.domain, model_id, lv);
          table.on_target[lv] = to_result(
              eval::eval_source(ft.model, tgt_test, cfg.eval_batch_size, cfg.threshold),
              dtgt.domain, model_id, lv);
          if (cfg.overlay_count > 0 && seed == cfg.seeds.front()) {
            eval::emit_overlays(ft.model, tgt_test, cfg.overlay_count,
                                (fs::path(cfg.out_dir) / "overlays" / direction / lv).string(),
                                cfg.threshold);
          }
          return 0;
        });
      }
      table.validate_complete();
      result.tables.push_back(eval::LabeledTable{"seed" + std::to_string(seed), table});
    }
    eval::MetricsTable med = median_table(result.tables, dir_label);
    result.balance[direction] = eval::balance_point(med);
    result.tables.push_back(eval::LabeledTable{"median", std::move(med)});
  }

  stage("emit-report", [&] {
    eval::Formats formats;
    formats.csv = formats.json = formats.svg = true;
    eval::emit_report(result.tables, make_meta(cfg),
                      (fs::path(cfg.out_dir) / "reports").string(), formats);
    return 0;
  });
  marker.done();
  return result;
}

SweepResult run_size_sweep(const SweepConfig& sweep) {
  const ScenarioConfig& cfg = sweep.scenario;
  validate_scenario(cfg);
  if (cfg.out_dir.empty()) throw ConfigError("sweep: no output directory configured");

  data::Manifest source = stage("load-source", [&] { return data::load_manifest(cfg.source_path); });
  data::Manifest target = stage("load-target", [&] { return data::load_manifest(cfg.target_path); });
  check_domains(source, target);
  check_split(source, "source");
  check_split(target, "target");

  const std::string direction = cfg.directions.front();
  const data::Manifest& dsrc = direction == "s2t" ? source : target;
  const data::Manifest& dtgt = direction == "s2t" ? target : source;

  // Every size must fit before any training starts.
  std::size_t train_size = dtgt.split_indices("train").size();
  for (int s : sweep.sizes) {
    if (static_cast<std::size_t>(s) > train_size) {
      throw ConfigError("sweep size " + std::to_string(s) + " exceeds target train split (" +
                        std::to_string(train_size) + " samples)");
    }
  }

  IncompleteMarker marker(cfg.out_dir);
  fs::create_directories(fs::path(cfg.out_dir) / "weights");
  fs::create_directories(fs::path(cfg.out_dir) / "reports");

  data::ManifestSource src_train(dsrc, "train"), src_val(dsrc, "val"), src_test(dsrc, "test");
  data::ManifestSource tgt_val(dtgt, "val"), tgt_test(dtgt, "test");

  SweepResult result;
  for (std::uint64_t seed : cfg.seeds) {
    std::string run_dir = (fs::path(cfg.out_dir) / "weights" /
                           ("sweep_seed" + std::to_string(seed))).string();
    fs::create_directories(run_dir);
    std::string base_path = run_dir + "/base.utcw";
    nn::TrainConfig base_cfg = cfg.base_train;
    base_cfg.seed = seed;
    stage("train-base[seed" + std::to_string(seed) + "]", [&] {
      nn::Model base = nn::Model::build(cfg.model, seed);
      nn::TrainHistory hist = nn::train(base, src_train, src_val, base_cfg);
      base.save(base_path);
      eval::write_history_csv(hist, run_dir + "/base");
      return 0;
    });

    for (int size : sweep.sizes) {
      auto indices = data::subsample_grouped(dtgt, "train", size, seed);
      data::ManifestSource tgt_sub(dtgt, indices);
      for (nn::FreezeLevel level : cfg.levels) {
        std::string lv = nn::freeze_name(level);
        std::string tag = "seed" + std::to_string(seed) + "/size" + std::to_string(size) + "/" + lv;
        nn::TrainConfig ft_cfg = cfg.finetune_train;
        ft_cfg.seed = seed;
        if (ft_cfg.batch_size > size) ft_cfg.batch_size = size;
        stage("fine-tune[" + tag + "]", [&] {
          nn::FineTuneResult ft = nn::fine_tune(base_path, tgt_sub, tgt_val, ft_cfg, level,
                                                cfg.model.arch);
          eval::EvalStats on_src =
              eval::eval_source(ft.model, src_test, cfg.eval_batch_size, cfg.threshold);
          eval::EvalStats on_tgt =
              eval::eval_source(ft.model, tgt_test, cfg.eval_batch_size, cfg.threshold);
          eval::SweepRow row;
          row.size = size;
          row.level = lv;
          row.seed = seed;
          row.dice_source = on_src.dice;
          row.dice_target = on_tgt.dice;
          row.loss_source = on_src.loss;
          row.loss_target = on_tgt.loss;
          row.dice_gap = on_src.dice - on_tgt.dice;
          row.loss_gap = on_tgt.loss - on_src.loss;
          result.rows.push_back(row);
          return 0;
        });
      }
    }
  }

  stage("emit-report", [&] {
    eval::Formats formats;
    formats.csv = formats.json = formats.svg = true;
    eval::emit_sweep_report(result.rows, make_meta(cfg),
                            (fs::path(cfg.out_dir) / "reports").string(), formats);
    return 0;
  });
  marker.done();
  return result;
}

void reemit_report(const std::string& from_dir, const std::string& out_dir) {
  fs::path src = fs::path(from_dir) / "reports" / "report.json";
  bool sweep = false;
  if (!fs::exists(src)) src = fs::path(from_dir) / "report.json";
  if (!fs::exists(src)) {
    src = fs::path(from_dir) / "reports" / "sweep.json";
    sweep = true;
  }
  if (!fs::exists(src) && sweep) src = fs::path(from_dir) / "sweep.json";
  if (!fs::exists(src)) {
    throw IoError("no report.json or sweep.json under '" + from_dir + "'");
  }
  std::ifstream is(src);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError("'" + src.string() + "': " + e.what());
  }

  eval::ReportMeta meta;
  if (j.contains("meta")) {
    meta.version = j["meta"].value("version", "");
    meta.config_hash = j["meta"].value("config_hash", "");
    if (j["meta"].contains("seeds")) {
      meta.seeds = j["meta"]["seeds"].get<std::vector<std::uint64_t>>();
    }
    if (j["meta"].contains("config")) meta.config_json = j["meta"]["config"].dump();
  }
  eval::Formats formats;
  formats.csv = formats.json = formats.svg = true;
  std::string out = (fs::path(out_dir) / "reports").string();

  if (!sweep && j.contains("tables")) {
    std::vector<eval::LabeledTable> tables;
    for (const json& jt : j["tables"]) {
      eval::LabeledTable lt;
      lt.label = jt.at("label").get<std::string>();
      lt.table.direction = jt.at("direction").get<std::string>();
      lt.table.source_domain = jt.at("source_domain").get<std::string>();
      lt.table.target_domain = jt.at("target_domain").get<std::string>();
      for (const auto& [lv, cell] : jt.at("levels").items()) {
        auto parse_result = [&](const json& rj) {
          eval::EvalResult r;
          r.loss = rj.at("loss").get<double>();
          r.dice = rj.at("dice").get<double>();
          r.n = rj.at("n").get<int>();
          r.domain = rj.at("domain").get<std::string>();
          r.model_id = rj.at("model_id").get<std::string>();
          r.level = rj.at("level").get<std::string>();
          return r;
        };
        lt.table.on_source[lv] = parse_result(cell.at("source"));
        lt.table.on_target[lv] = parse_result(cell.at("target"));
      }
      // Restore canonical column order.
      for (const char* lv : {"base", "encoder", "dec1", "dec2", "dec3"}) {
        if (lt.table.on_source.count(lv) != 0) lt.table.levels.push_back(lv);
      }
      tables.push_back(std::move(lt));
    }
    eval::emit_report(tables, meta, out, formats);
    return;
  }
  if (j.contains("rows")) {
    std::vector<eval::SweepRow> rows;
    for (const json& rj : j["rows"]) {
      eval::SweepRow r;
      r.size = rj.at("size").get<int>();
      r.level = rj.at("level").get<std::string>();
      r.seed = rj.at("seed").get<std::uint64_t>();
      r.dice_source = rj.at("dice_source").get<double>();
      r.dice_target = rj.at("dice_target").get<double>();
      r.loss_source = rj.at("loss_source").get<double>();
      r.loss_target = rj.at("loss_target").get<double>();
      r.dice_gap = rj.at("dice_gap").get<double>();
      r.loss_gap = rj.at("loss_gap").get<double>();
      rows.push_back(r);
    }
    eval::emit_sweep_report(rows, meta, out, formats);
    return;
  }
  throw FormatError("'" + src.string() + "': neither a scenario nor a sweep report");
}

}  // namespace ca::cli
