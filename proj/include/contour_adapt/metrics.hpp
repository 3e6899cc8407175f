#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "contour_adapt/batch_source.hpp"
#include "contour_adapt/model.hpp"

namespace ca::eval {

// Dice overlap of a thresholded probability map against a binary mask:
// 2|P∩G| / (|P|+|G|). Both-empty is defined as 1.0. Binarization is
// strictly-greater-than-threshold.
double dice(std::span<const float> pred, std::span<const float> gt, double threshold = 0.5);

struct EvalStats {
  double loss = 0.0;  // mean per-sample BCE
  double dice = 0.0;  // mean per-sample Dice
  int n = 0;
};

// Infer-mode evaluation over every sample of a source, in fixed batch order.
EvalStats eval_source(nn::Model& model, const BatchSource& src, int batch_size = 8,
                      double threshold = 0.5);

struct EvalResult {
  double loss = 0.0;
  double dice = 0.0;
  int n = 0;
  std::string domain;    // test-domain label
  std::string model_id;  // which trained artifact produced it
  std::string level;     // freeze level name ("base", "encoder", ...)
};

struct Gap {
  double dice_gap = 0.0;  // dice_S - dice_T
  double loss_gap = 0.0;  // loss_T - loss_S; positive = worse on target
};

// Signed source/target difference for one model evaluated on both domains.
Gap domain_gap(const EvalResult& source_result, const EvalResult& target_result);

// Table-1-style grid: per freeze level, this model's result on the source
// and target test splits.
struct MetricsTable {
  std::string direction;                 // e.g. "A->B"
  std::string source_domain, target_domain;
  // Column order: base, encoder, dec1, dec2, dec3.
  std::vector<std::string> levels;
  std::map<std::string, EvalResult> on_source;  // keyed by level name
  std::map<std::string, EvalResult> on_target;

  Gap gap(const std::string& level) const;
  void validate_complete() const;
};

// Fine-tuned level (Base excluded) minimizing |dice_gap|; ties prefer higher
// mean dice across domains, then fewer frozen layers.
std::string balance_point(const MetricsTable& table);

}  // namespace ca::eval
