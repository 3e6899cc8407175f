#include "contour_adapt/optim.hpp"

#include <cmath>

#include "contour_adapt/kernels.hpp"
#include "contour_adapt/metrics.hpp"

namespace ca::nn {

Adam::Adam(Model& model, float lr, float beta1, float beta2, float eps)
    : Adam(model.parameters(), lr, beta1, beta2, eps) {}

Adam::Adam(const std::vector<Parameter*>& params, float lr, float beta1, float beta2, float eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0.0f) throw ContractError("adam: learning rate must be > 0");
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    slots_.push_back(Slot{p, std::vector<float>(p->value.numel(), 0.0f),
                          std::vector<float>(p->value.numel(), 0.0f)});
  }
  if (slots_.empty()) throw ContractError("adam: model has no trainable parameters");
}

void Adam::step() {
  ++t_;
  // Bias-correction powers updated multiplicatively, identically on every
  // code path, to keep runs bitwise reproducible.
  beta1_pow_ *= beta1_;
  beta2_pow_ *= beta2_;
  float bc1 = 1.0f - beta1_pow_;
  float bc2 = 1.0f - beta2_pow_;
  for (Slot& s : slots_) {
    kern::adam_update(s.p->value.mutable_data().data(), s.p->grad.data(), s.m.data(), s.v.data(),
                      s.p->value.numel(), lr_, beta1_, beta2_, eps_, bc1, bc2);
  }
}

void TrainConfig::validate(std::size_t train_set_size) const {
  if (learning_rate <= 0.0f) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (iterations_per_epoch < 1) throw ConfigError("iterations_per_epoch must be >= 1");
  if (dropout_rate < 0.0f || dropout_rate >= 1.0f) throw ConfigError("dropout_rate must be in [0,1)");
  if (static_cast<std::size_t>(batch_size) > train_set_size) {
    throw ConfigError("batch_size " + std::to_string(batch_size) + " exceeds training-set size " +
                      std::to_string(train_set_size));
  }
}

namespace {

// Shuffled-permutation batch cursor with wrap-around re-shuffles.
class BatchSampler {
 public:
  BatchSampler(std::size_t size, int batch, Rng rng)
      : perm_(size), batch_(static_cast<std::size_t>(batch)), cursor_(size), rng_(rng) {
    for (std::size_t i = 0; i < size; ++i) perm_[i] = i;
  }

  std::span<const std::size_t> next() {
    if (cursor_ + batch_ > perm_.size()) {
      shuffle(perm_, rng_);
      cursor_ = 0;
    }
    std::span<const std::size_t> out(perm_.data() + cursor_, batch_);
    cursor_ += batch_;
    return out;
  }

 private:
  std::vector<std::size_t> perm_;
  std::size_t batch_;
  std::size_t cursor_;
  Rng rng_;
};

void assemble_batch(const BatchSource& src, std::span<const std::size_t> idx, Tensor& images,
                    Tensor& masks) {
  const std::size_t plane = static_cast<std::size_t>(src.height()) * src.width();
  std::span<float> iv = images.mutable_data();
  std::span<float> mv = masks.mutable_data();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    src.sample(idx[k], iv.subspan(k * plane, plane), mv.subspan(k * plane, plane));
  }
}

}  // namespace

TrainHistory train(Model& model, const BatchSource& train_set, const BatchSource& val_set,
                   const TrainConfig& cfg) {
  if (train_set.size() == 0 || val_set.size() == 0) {
    throw ConfigError("train: datasets must be non-empty");
  }
  cfg.validate(train_set.size());
  if (model.trainable_count() == 0) {
    throw ContractError("train: model has no trainable parameters (freeze level 'base' is "
                        "evaluation-only)");
  }
  if (train_set.height() != model.config().height || train_set.width() != model.config().width) {
    throw ShapeError("train: dataset sample size does not match model image size");
  }

  Rng root(cfg.seed);
  BatchSampler sampler(train_set.size(), cfg.batch_size, root.child("batches"));
  Rng dropout_rng = root.child("dropout");

  Adam opt(model, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  TrainHistory hist;
  hist.train_loss.reserve(static_cast<std::size_t>(cfg.epochs) * cfg.iterations_per_epoch);

  Tensor images(Shape{cfg.batch_size, 1, model.config().height, model.config().width});
  Tensor masks(images.shape());

  double best_val = 0.0;
  std::vector<std::vector<float>> best_state;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int it = 0; it < cfg.iterations_per_epoch; ++it) {
      assemble_batch(train_set, sampler.next(), images, masks);
      model.zero_grads();
      Tape tape;
      Tensor pred = model.forward(images, Mode::Train, &dropout_rng, &tape);
      Tensor loss = bce_loss(pred, masks, &tape);
      float loss_v = loss.item();
      if (!std::isfinite(loss_v)) {
        throw NumericsError("train: non-finite loss " + std::to_string(loss_v) + " at epoch " +
                            std::to_string(epoch + 1) + ", iteration " + std::to_string(it + 1));
      }
      hist.train_loss.push_back(loss_v);
      GradStore grads = tape.backward(loss);
      for (Parameter* p : model.parameters()) {
        if (!p->trainable) continue;
        const std::vector<float>* g = grads.find(p->value);
        if (g != nullptr) {
          kern::axpy(1.0f, g->data(), p->grad.data(), p->grad.size());
        }
      }
      opt.step();
    }
    eval::EvalStats val = eval::eval_source(model, val_set, cfg.eval_batch_size,
                                            cfg.eval_threshold);
    hist.val_loss.push_back(val.loss);
    hist.val_dice.push_back(val.dice);
    if (hist.best_epoch < 0 || val.loss < best_val) {
      best_val = val.loss;
      best_state = model.snapshot_state();
      hist.best_epoch = epoch;
    }
  }
  model.restore_state(best_state);
  return hist;
}

FineTuneResult fine_tune(const std::string& base_model_path, const BatchSource& train_set,
                         const BatchSource& val_set, const TrainConfig& cfg, FreezeLevel level,
                         std::optional<ArchKind> expect_arch) {
  if (level == FreezeLevel::Base) {
    throw ContractError("fine_tune: level 'base' transfers the model unchanged; nothing to train");
  }
  Model model = Model::load(base_model_path, cfg.dropout_rate);
  if (expect_arch.has_value() && model.config().arch != *expect_arch) {
    throw ConfigError("fine_tune: weight file '" + base_model_path + "' holds a " +
                      arch_name(model.config().arch) + " but the config expects " +
                      arch_name(*expect_arch));
  }
  model.set_freeze(level);
  TrainHistory hist = train(model, train_set, val_set, cfg);
  return FineTuneResult{std::move(model), std::move(hist)};
}

}  // namespace ca::nn
