#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "contour_adapt/batch_source.hpp"
#include "contour_adapt/metrics.hpp"
#include "contour_adapt/optim.hpp"

namespace ca::eval {

// Provenance stamped into every emitted report.
struct ReportMeta {
  std::string version;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::string config_json;  // the resolved config, embedded verbatim
};

struct Formats {
  bool csv = false, json = false, svg = false;
  bool any() const { return csv || json || svg; }
};

// <stem>_train_loss.csv: iteration,loss. <stem>_val.csv: epoch,val_loss,val_dice.
void write_history_csv(const nn::TrainHistory& hist, const std::string& stem);

// Labeled Table-1-style grid (label = seed tag or "median").
struct LabeledTable {
  std::string label;
  MetricsTable table;
};

// Scenario report: one CSV per (direction, label), a JSON with full
// provenance, gaps and balance points, and one SVG per direction charting
// dice gap against freeze level.
void emit_report(const std::vector<LabeledTable>& tables, const ReportMeta& meta,
                 const std::string& out_dir, const Formats& formats);

struct SweepRow {
  int size = 0;
  std::string level;
  std::uint64_t seed = 0;
  double dice_source = 0, dice_target = 0, loss_source = 0, loss_target = 0;
  double dice_gap = 0, loss_gap = 0;
};

// Size-sweep report: CSV of one row per (size, level, seed) plus medians,
// JSON provenance, and a grouped-bar SVG of median |dice gap| per size.
void emit_sweep_report(const std::vector<SweepRow>& rows, const ReportMeta& meta,
                       const std::string& out_dir, const Formats& formats);

// Side-by-side strips input | ground truth | thresholded prediction with two
// separator columns (width = 3W + 2).
void emit_overlays(nn::Model& model, const BatchSource& samples, int count,
                   const std::string& out_dir, double threshold = 0.5);

// Median of a copy of the values; the midpoint average for even counts.
double median(std::vector<double> values);

}  // namespace ca::eval
