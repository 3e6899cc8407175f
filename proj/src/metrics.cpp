#include "contour_adapt/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "contour_adapt/kernels.hpp"
#include "contour_adapt/layers.hpp"

namespace ca::eval {

double dice(std::span<const float> pred, std::span<const float> gt, double threshold) {
  if (pred.size() != gt.size()) {
    throw ShapeError("dice: prediction and mask sizes differ (" + std::to_string(pred.size()) +
                     " vs " + std::to_string(gt.size()) + ")");
  }
  std::size_t p_count = 0, g_count = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    bool p = static_cast<double>(pred[i]) > threshold;
    bool g = gt[i] > 0.5f;
    p_count += p;
    g_count += g;
    both += (p && g);
  }
  if (p_count + g_count == 0) return 1.0;  // both empty
  return 2.0 * static_cast<double>(both) / static_cast<double>(p_count + g_count);
}

EvalStats eval_source(nn::Model& model, const BatchSource& src, int batch_size,
                      double threshold) {
  if (src.size() == 0) throw ContractError("eval: empty split");
  if (src.height() != model.config().height || src.width() != model.config().width) {
    throw ShapeError("eval: dataset sample size does not match model image size");
  }
  const int h = model.config().height, w = model.config().width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  if (batch_size < 1) batch_size = 1;

  // Per-sample metrics accumulated in index order, so batching is invisible.
  double loss_acc = 0.0, dice_acc = 0.0;
  std::size_t done = 0;
  while (done < src.size()) {
    std::size_t take = std::min<std::size_t>(batch_size, src.size() - done);
    Tensor images(Shape{static_cast<int>(take), 1, h, w});
    Tensor masks(images.shape());
    for (std::size_t k = 0; k < take; ++k) {
      src.sample(done + k, images.mutable_data().subspan(k * plane, plane),
                 masks.mutable_data().subspan(k * plane, plane));
    }
    Tensor pred = model.forward(images, nn::Mode::Infer, nullptr, nullptr);
    for (std::size_t k = 0; k < take; ++k) {
      std::span<const float> p = pred.data().subspan(k * plane, plane);
      std::span<const float> g = masks.data().subspan(k * plane, plane);
      loss_acc += kern::bce_fwd(p.data(), g.data(), plane, static_cast<float>(nn::kBceClamp));
      dice_acc += dice(p, g, threshold);
    }
    done += take;
  }
  EvalStats out;
  out.n = static_cast<int>(src.size());
  out.loss = loss_acc / static_cast<double>(src.size());
  out.dice = dice_acc / static_cast<double>(src.size());
  return out;
}

Gap domain_gap(const EvalResult& source_result, const EvalResult& target_result) {
  Gap g;
  g.dice_gap = source_result.dice - target_result.dice;
  g.loss_gap = target_result.loss - source_result.loss;
  return g;
}

Gap MetricsTable::gap(const std::string& level) const {
  auto s = on_source.find(level);
  auto t = on_target.find(level);
  if (s == on_source.end() || t == on_target.end()) {
    throw ContractError("metrics table: level '" + level + "' is missing a cell");
  }
  return domain_gap(s->second, t->second);
}

void MetricsTable::validate_complete() const {
  if (levels.empty()) throw ContractError("metrics table: no levels");
  for (const std::string& lv : levels) {
    if (on_source.find(lv) == on_source.end() || on_target.find(lv) == on_target.end()) {
      throw ContractError("metrics table: incomplete grid at level '" + lv + "'");
    }
  }
}

std::string balance_point(const MetricsTable& table) {
  table.validate_complete();
  std::string best;
  double best_abs_gap = 0.0, best_mean_dice = 0.0;
  for (const std::string& lv : table.levels) {
    if (lv == "base") continue;  // fine-tuned levels only
    Gap g = table.gap(lv);
    double abs_gap = std::abs(g.dice_gap);
    double mean_dice = 0.5 * (table.on_source.at(lv).dice + table.on_target.at(lv).dice);
    // Levels are iterated from fewest to most frozen layers, so strict
    // comparisons implement both tie-breaks.
    bool better = best.empty() || abs_gap < best_abs_gap ||
                  (abs_gap == best_abs_gap && mean_dice > best_mean_dice);
    if (better) {
      best = lv;
      best_abs_gap = abs_gap;
      best_mean_dice = mean_dice;
    }
  }
  if (best.empty()) throw ContractError("balance_point: table has no fine-tuned levels");
  return best;
}

}  // namespace ca::eval
