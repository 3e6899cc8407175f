// contour-adapt: synthetic two-domain segmentation study driver.
//
// Subcommands cover the full pipeline: dataset synthesis and curation
// (gen-synth, curate, augment, split), model training and adaptation
// (train, adapt), evaluation and reporting (eval, scenario, sweep-size,
// overlay, report).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <variant>

#include <CLI11.hpp>
#include <json.hpp>

#include "contour_adapt/config.hpp"
#include "contour_adapt/dataset.hpp"
#include "contour_adapt/hash.hpp"
#include "contour_adapt/kernels.hpp"
#include "contour_adapt/report.hpp"
#include "contour_adapt/scenario.hpp"
#include "contour_adapt/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainFlags {
  std::string arch = "unet";
  int channels = 16;
  int height = 128, width = 128;
  double lr = 1e-4;
  int batch = 10;
  int epochs = 2;
  int iters = 500;
  double dropout = 0.5;
  std::uint64_t seed = 1;
  double threshold = 0.5;

  void add_to(CLI::App* cmd, bool with_model_shape) {
    if (with_model_shape) {
      cmd->add_option("--arch", arch, "Architecture: unet|deconvnet")->capture_default_str();
      cmd->add_option("--channels", channels, "Base channel width")->capture_default_str();
      cmd->add_option("--height", height, "Image height (divisible by 16)")->capture_default_str();
      cmd->add_option("--width", width, "Image width (divisible by 16)")->capture_default_str();
    }
    cmd->add_option("--lr", lr, "Fixed learning rate")->capture_default_str();
    cmd->add_option("--batch", batch, "Mini-batch size")->capture_default_str();
    cmd->add_option("--epochs", epochs, "Epochs")->capture_default_str();
    cmd->add_option("--iters", iters, "Iterations per epoch")->capture_default_str();
    cmd->add_option("--dropout", dropout, "Dropout rate")->capture_default_str();
    cmd->add_option("--seed", seed, "Run seed")->capture_default_str();
    cmd->add_option("--threshold", threshold, "Dice threshold")->capture_default_str();
  }

  ca::nn::TrainConfig to_train_config() const {
    ca::nn::TrainConfig t;
    t.learning_rate = static_cast<float>(lr);
    t.batch_size = batch;
    t.epochs = epochs;
    t.iterations_per_epoch = iters;
    t.dropout_rate = static_cast<float>(dropout);
    t.seed = seed;
    t.eval_threshold = threshold;
    return t;
  }
};

void echo_defaults(const ca::cli::ScenarioConfig& cfg) {
  for (const std::string& line : cfg.applied_defaults) {
    std::clog << "config: " << line << "\n";
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"contour-adapt: encoder-decoder segmentation domain-adaptation workbench"};
  app.set_version_flag("--version", std::string(ca::kVersion));
  app.require_subcommand(1);

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic phantom dataset");
  std::string gen_domain = "A", gen_out;
  int gen_count = 100, gen_h = 128, gen_w = 128;
  std::uint64_t gen_seed = 1;
  gen->add_option("--domain", gen_domain, "Domain preset: A|B")->capture_default_str();
  gen->add_option("--count", gen_count, "Number of samples")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Generation seed")->capture_default_str();
  gen->add_option("--height", gen_h, "Image height")->capture_default_str();
  gen->add_option("--width", gen_w, "Image width")->capture_default_str();
  gen->add_option("--out", gen_out, "Output dataset directory")->required();

  // curate
  auto* curate = app.add_subcommand("curate", "Informed undersampling by distance to the mean image");
  std::string cur_data, cur_out;
  int cur_hi = 200, cur_lo = 5;
  curate->add_option("--data", cur_data, "Input dataset")->required();
  curate->add_option("--hi", cur_hi, "Highest-scoring frames to keep")->capture_default_str();
  curate->add_option("--lo", cur_lo, "Lowest-scoring frames to keep")->capture_default_str();
  curate->add_option("--out", cur_out, "Output dataset directory")->required();

  // augment
  auto* aug = app.add_subcommand("augment", "Offline flip/rotate/zoom augmentation");
  std::string aug_data, aug_out;
  int aug_factor = 24;
  std::uint64_t aug_seed = 1;
  double aug_rot = 10.0, aug_zoom_lo = 0.9, aug_zoom_hi = 1.1;
  bool aug_no_flip = false;
  aug->add_option("--data", aug_data, "Input dataset")->required();
  aug->add_option("--factor", aug_factor, "Augmented copies per sample")->capture_default_str();
  aug->add_option("--seed", aug_seed, "Augmentation seed")->capture_default_str();
  aug->add_option("--rotate", aug_rot, "Max |rotation| in degrees")->capture_default_str();
  aug->add_option("--zoom-lo", aug_zoom_lo, "Zoom lower bound")->capture_default_str();
  aug->add_option("--zoom-hi", aug_zoom_hi, "Zoom upper bound")->capture_default_str();
  aug->add_flag("--no-flip", aug_no_flip, "Disable horizontal flipping");
  aug->add_option("--out", aug_out, "Output dataset directory")->required();

  // split
  auto* split = app.add_subcommand("split", "Assign origin-grouped train/val/test splits");
  std::string split_data;
  std::uint64_t split_seed = 1;
  std::vector<double> split_ratios{0.90, 0.05, 0.05};
  split->add_option("--data", split_data, "Dataset to split (in place)")->required();
  split->add_option("--seed", split_seed, "Split seed")->capture_default_str();
  split->add_option("--ratios", split_ratios, "train val test ratios")->expected(3);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a base model from scratch");
  std::string train_data, train_out;
  TrainFlags train_flags;
  train_cmd->add_option("--data", train_data, "Training dataset (split assigned)")->required();
  train_cmd->add_option("--out", train_out, "Output weight file (.utcw)")->required();
  train_flags.add_to(train_cmd, true);

  // adapt
  auto* adapt = app.add_subcommand("adapt", "Fine-tune a trained model under a freeze level");
  std::string adapt_model, adapt_data, adapt_out, adapt_freeze = "encoder", adapt_config;
  TrainFlags adapt_flags;
  adapt->add_option("--model", adapt_model, "Base weight file")->required();
  adapt->add_option("--freeze", adapt_freeze, "Freeze level: encoder|dec1|dec2|dec3")
      ->capture_default_str();
  adapt->add_option("--data", adapt_data, "Target dataset")->required();
  adapt->add_option("--config", adapt_config, "Optional JSON with finetune.* defaults");
  adapt->add_option("--out", adapt_out, "Output weight file")->required();
  adapt_flags.add_to(adapt, false);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on one split");
  std::string eval_model, eval_data, eval_split = "test", eval_json;
  int eval_batch = 8;
  double eval_threshold = 0.5;
  eval_cmd->add_option("--model", eval_model, "Weight file")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset")->required();
  eval_cmd->add_option("--split", eval_split, "Split name")->capture_default_str();
  eval_cmd->add_option("--batch", eval_batch, "Eval batch size")->capture_default_str();
  eval_cmd->add_option("--threshold", eval_threshold, "Dice threshold")->capture_default_str();
  eval_cmd->add_option("--json", eval_json, "Also write the result to this JSON file");

  // scenario
  auto* scen = app.add_subcommand("scenario", "Run the full transfer study from a config");
  std::string scen_config, scen_out;
  scen->add_option("--config", scen_config, "Scenario config JSON")->required();
  scen->add_option("--out", scen_out, "Output directory (overrides config)");

  // sweep-size
  auto* sweep = app.add_subcommand("sweep-size", "Dataset-size sweep for transferred models");
  std::string sweep_config, sweep_out;
  sweep->add_option("--config", sweep_config, "Sweep config JSON (with sizes)")->required();
  sweep->add_option("--out", sweep_out, "Output directory (overrides config)");

  // overlay
  auto* overlay = app.add_subcommand("overlay", "Emit input|truth|prediction strips");
  std::string ov_model, ov_data, ov_split = "test", ov_out;
  int ov_count = 8;
  double ov_threshold = 0.5;
  overlay->add_option("--model", ov_model, "Weight file")->required();
  overlay->add_option("--data", ov_data, "Dataset")->required();
  overlay->add_option("--split", ov_split, "Split name")->capture_default_str();
  overlay->add_option("--count", ov_count, "Samples to render")->capture_default_str();
  overlay->add_option("--threshold", ov_threshold, "Dice threshold")->capture_default_str();
  overlay->add_option("--out", ov_out, "Output directory")->required();

  // report
  auto* report = app.add_subcommand("report", "Re-emit CSV/SVG from a stored report.json");
  std::string rep_from, rep_out;
  report->add_option("--from", rep_from, "Directory holding reports/report.json")->required();
  report->add_option("--out", rep_out, "Output directory (defaults to --from)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);     // prints help or the usage error
    return rc == 0 ? 0 : 1;   // all usage problems exit 1
  }

  std::clog << "contour-adapt " << ca::kVersion << " [kernels: "
            << ca::kern::isa_name(ca::kern::active_isa()) << "]\n";

  if (gen->parsed()) {
    ca::data::DomainParams params = ca::data::domain_preset(gen_domain);
    ca::data::Manifest m =
        ca::data::gen_synthetic(params, gen_domain, gen_count, gen_h, gen_w, gen_seed, gen_out);
    std::cout << "generated " << m.samples.size() << " samples in " << gen_out << "\n";
    return 0;
  }
  if (curate->parsed()) {
    ca::data::Manifest m = ca::data::load_manifest(cur_data);
    ca::data::Manifest out = ca::data::informed_undersample(m, cur_hi, cur_lo, cur_out);
    std::cout << "curated " << out.samples.size() << " of " << m.samples.size() << " samples into "
              << cur_out << "\n";
    return 0;
  }
  if (aug->parsed()) {
    ca::data::Manifest m = ca::data::load_manifest(aug_data);
    ca::data::AugmentParams p;
    p.rotate_deg = aug_rot;
    p.zoom_lo = aug_zoom_lo;
    p.zoom_hi = aug_zoom_hi;
    p.flip = !aug_no_flip;
    ca::data::Manifest out = ca::data::augment(m, aug_factor, p, aug_seed, aug_out);
    std::cout << "augmented to " << out.samples.size() << " samples in " << aug_out << "\n";
    return 0;
  }
  if (split->parsed()) {
    ca::data::Manifest m = ca::data::load_manifest(split_data);
    ca::data::assign_splits(m, split_ratios[0], split_ratios[1], split_ratios[2], split_seed);
    std::cout << "split " << m.samples.size() << " samples: train="
              << m.split_indices("train").size() << " val=" << m.split_indices("val").size()
              << " test=" << m.split_indices("test").size() << "\n";
    return 0;
  }
  if (train_cmd->parsed()) {
    ca::data::Manifest m = ca::data::load_manifest(train_data);
    ca::nn::ModelConfig mc;
    mc.arch = ca::nn::arch_from_name(train_flags.arch);
    mc.base_channels = train_flags.channels;
    mc.height = train_flags.height;
    mc.width = train_flags.width;
    mc.dropout_rate = static_cast<float>(train_flags.dropout);
    ca::data::ManifestSource tr(m, "train"), va(m, "val");
    ca::nn::Model model = ca::nn::Model::build(mc, train_flags.seed);
    ca::nn::TrainHistory hist = ca::nn::train(model, tr, va, train_flags.to_train_config());
    model.save(train_out);
    ca::eval::write_history_csv(hist, train_out);
    std::cout << "trained " << ca::nn::arch_name(mc.arch) << "; best epoch "
              << (hist.best_epoch + 1) << ", final val loss "
              << hist.val_loss[static_cast<std::size_t>(hist.best_epoch)] << ", val dice "
              << hist.val_dice[static_cast<std::size_t>(hist.best_epoch)] << "\n";
    return 0;
  }
  if (adapt->parsed()) {
    ca::data::Manifest m = ca::data::load_manifest(adapt_data);
    ca::nn::TrainConfig cfg = adapt_flags.to_train_config();
    if (!adapt_config.empty()) {
      ca::nn::TrainConfig file_cfg = ca::cli::parse_train_config(adapt_config, "finetune");
      // Flags the user left at defaults inherit the file values.
      if (adapt->count("--lr") == 0) cfg.learning_rate = file_cfg.learning_rate;
      if (adapt->count("--batch") == 0) cfg.batch_size = file_cfg.batch_size;
      if (adapt->count("--epochs") == 0) cfg.epochs = file_cfg.epochs;
      if (adapt->count("--iters") == 0) cfg.iterations_per_epoch = file_cfg.iterations_per_epoch;
      if (adapt->count("--dropout") == 0) cfg.dropout_rate = file_cfg.dropout_rate;
      if (adapt->count("--seed") == 0) cfg.seed = file_cfg.seed;
    }
    ca::data::ManifestSource tr(m, "train"), va(m, "val");
    ca::nn::FineTuneResult ft =
        ca::nn::fine_tune(adapt_model, tr, va, cfg, ca::nn::freeze_from_name(adapt_freeze));
    ft.model.save(adapt_out);
    ca::eval::write_history_csv(ft.history, adapt_out);
    std::cout << "fine-tuned at level " << adapt_freeze << "; best epoch "
              << (ft.history.best_epoch + 1) << "\n";
    return 0;
  }
  if (eval_cmd->parsed()) {
    ca::nn::Model model = ca::nn::Model::load(eval_model);
    ca::data::Manifest m = ca::data::load_manifest(eval_data);
    ca::data::ManifestSource src(m, eval_split);
    ca::eval::EvalStats stats = ca::eval::eval_source(model, src, eval_batch, eval_threshold);
    std::cout << "loss=" << stats.loss << " dice=" << stats.dice << " n=" << stats.n << "\n";
    if (!eval_json.empty()) {
      json j{{"loss", stats.loss}, {"dice", stats.dice},      {"n", stats.n},
             {"model", eval_model}, {"dataset", eval_data},    {"split", eval_split},
             {"threshold", eval_threshold}, {"version", ca::kVersion}};
      std::ofstream os(eval_json);
      if (!os) throw ca::IoError("cannot open '" + eval_json + "' for writing");
      os << j.dump(2) << "\n";
    }
    return 0;
  }
  if (scen->parsed()) {
    ca::cli::AnyConfig any = ca::cli::parse_config(scen_config);
    if (!std::holds_alternative<ca::cli::ScenarioConfig>(any)) {
      throw ca::ConfigError("'" + scen_config + "' is a sweep config; use sweep-size");
    }
    auto cfg = std::get<ca::cli::ScenarioConfig>(any);
    if (!scen_out.empty()) cfg.out_dir = scen_out;
    echo_defaults(cfg);
    ca::cli::ScenarioResult r = ca::cli::run_scenario(cfg);
    std::cout << "scenario complete: " << r.models_trained << " models trained\n";
    for (auto& [dir, level] : r.balance) {
      std::cout << "balance point (" << dir << "): " << level << "\n";
    }
    return 0;
  }
  if (sweep->parsed()) {
    ca::cli::AnyConfig any = ca::cli::parse_config(sweep_config);
    if (!std::holds_alternative<ca::cli::SweepConfig>(any)) {
      throw ca::ConfigError("'" + sweep_config + "' has no sizes key; use scenario");
    }
    auto cfg = std::get<ca::cli::SweepConfig>(any);
    if (!sweep_out.empty()) cfg.scenario.out_dir = sweep_out;
    echo_defaults(cfg.scenario);
    ca::cli::SweepResult r = ca::cli::run_size_sweep(cfg);
    std::cout << "sweep complete: " << r.rows.size() << " rows\n";
    return 0;
  }
  if (overlay->parsed()) {
    ca::nn::Model model = ca::nn::Model::load(ov_model);
    ca::data::Manifest m = ca::data::load_manifest(ov_data);
    ca::data::ManifestSource src(m, ov_split);
    ca::eval::emit_overlays(model, src, ov_count, ov_out, ov_threshold);
    std::cout << "wrote " << std::min<std::size_t>(src.size(), ov_count) << " overlays to "
              << ov_out << "\n";
    return 0;
  }
  if (report->parsed()) {
    ca::cli::reemit_report(rep_from, rep_out.empty() ? rep_from : rep_out);
    std::cout << "re-emitted report\n";
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
