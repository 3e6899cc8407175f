#pragma once

#include <optional>
#include <string>
#include <vector>

#include "contour_adapt/batch_source.hpp"
#include "contour_adapt/model.hpp"

namespace ca::nn {

// Adam with bias correction over the trainable parameters of a model.
// Frozen parameters get no state and are never touched.
class Adam {
 public:
  Adam(Model& model, float lr, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);
  // Direct form: only trainable parameters from the list get slots.
  Adam(const std::vector<Parameter*>& params, float lr, float beta1 = 0.9f, float beta2 = 0.999f,
       float eps = 1e-8f);

  void step();  // consumes the gradients currently in Parameter::grad
  int t() const { return t_; }
  std::size_t slot_count() const { return slots_.size(); }

 private:
  struct Slot {
    Parameter* p;
    std::vector<float> m, v;
  };
  std::vector<Slot> slots_;
  float lr_, beta1_, beta2_, eps_;
  float beta1_pow_ = 1.0f, beta2_pow_ = 1.0f;
  int t_ = 0;
};

struct TrainConfig {
  float learning_rate = 1e-4f;  // fixed; no schedule
  int batch_size = 10;
  int epochs = 2;
  int iterations_per_epoch = 500;
  float dropout_rate = 0.5f;
  std::uint64_t seed = 0;
  bool deterministic = true;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;
  double eval_threshold = 0.5;
  int eval_batch_size = 8;

  void validate(std::size_t train_set_size) const;
};

struct TrainHistory {
  std::vector<float> train_loss;              // one per iteration
  std::vector<double> val_loss, val_dice;     // one per epoch
  int best_epoch = -1;                        // epoch whose weights were kept
};

// Mini-batch training with the seeded rng (shuffled epoch order with
// wrap-around re-shuffles; permutation tails shorter than one batch are
// dropped). Evaluates the validation split after each epoch and restores the
// best-validation-loss weights before returning.
TrainHistory train(Model& model, const BatchSource& train_set, const BatchSource& val_set,
                   const TrainConfig& cfg);

// Loads base weights, applies the freeze level, and trains the remaining
// parameters with a fresh optimizer. level Base is evaluation-only and
// refused here.
struct FineTuneResult {
  Model model;
  TrainHistory history;
};
FineTuneResult fine_tune(const std::string& base_model_path, const BatchSource& train_set,
                         const BatchSource& val_set, const TrainConfig& cfg, FreezeLevel level,
                         std::optional<ArchKind> expect_arch = std::nullopt);

}  // namespace ca::nn
