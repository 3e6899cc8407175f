#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "contour_adapt/hash.hpp"
#include "contour_adapt/metrics.hpp"
#include "contour_adapt/optim.hpp"
#include "oracles.hpp"

using namespace ca;
using namespace ca::nn;
namespace fs = std::filesystem;

namespace {

// In-memory band-segmentation task: bright horizontal band on a noisy
// gradient background. Easy enough to overfit quickly at probe scale.
class BandTask : public BatchSource {
 public:
  BandTask(int n, int h, int w, std::uint64_t seed) : h_(h), w_(w) {
    Rng root(seed);
    for (int i = 0; i < n; ++i) {
      Rng r = root.child("sample", static_cast<std::uint64_t>(i));
      int band_y = 2 + static_cast<int>(r.uniform_int(static_cast<std::uint64_t>(h - 8)));
      int band_h = 3;
      std::vector<float> img(static_cast<std::size_t>(h) * w);
      std::vector<float> msk(img.size(), 0.0f);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          bool in_band = y >= band_y && y < band_y + band_h;
          double v = 0.15 + 0.1 * r.uniform() + (in_band ? 0.6 : 0.0);
          img[static_cast<std::size_t>(y) * w + x] = static_cast<float>(std::min(v, 1.0));
          if (in_band) msk[static_cast<std::size_t>(y) * w + x] = 1.0f;
        }
      }
      images_.push_back(std::move(img));
      masks_.push_back(std::move(msk));
    }
  }

  std::size_t size() const override { return images_.size(); }
  int height() const override { return h_; }
  int width() const override { return w_; }
  void sample(std::size_t i, std::span<float> image, std::span<float> mask) const override {
    std::copy(images_[i].begin(), images_[i].end(), image.begin());
    std::copy(masks_[i].begin(), masks_[i].end(), mask.begin());
  }

 private:
  int h_, w_;
  std::vector<std::vector<float>> images_, masks_;
};

ModelConfig probe_config(ArchKind arch = ArchKind::UNet) {
  ModelConfig cfg;
  cfg.arch = arch;
  cfg.base_channels = 4;
  cfg.height = 32;
  cfg.width = 32;
  cfg.dropout_rate = 0.25f;
  return cfg;
}

std::uint64_t params_hash(const Model& m, const std::string& prefix) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const Model::Entry& e : m.entries()) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    h ^= fnv1a64(e.data);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

TEST_CASE("adam first step moves by about lr against the gradient sign") {
  for (float g0 : {0.37f, -4.0f, 120.0f, -0.001f}) {
    Parameter p("p", Tensor(Shape{1}, std::vector<float>{1.0f}));
    Adam opt({&p}, 0.01f);
    p.grad[0] = g0;
    opt.step();
    float delta = p.value.data()[0] - 1.0f;
    CHECK(std::abs(delta + 0.01f * (g0 > 0 ? 1.0f : -1.0f)) < 1e-4f);
  }
}

TEST_CASE("zero gradients leave parameters untouched bitwise") {
  Parameter p("p", Tensor(Shape{3}, std::vector<float>{0.5f, -2.0f, 7.25f}));
  std::vector<float> before(p.value.data().begin(), p.value.data().end());
  Adam opt({&p}, 0.1f);
  for (int t = 0; t < 5; ++t) {
    p.zero_grad();
    opt.step();
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(p.value.data()[i] == before[i]);
}

TEST_CASE("three hand-stepped adam updates match the recurrence oracle") {
  Parameter p("p", Tensor(Shape{1}, std::vector<float>{0.8f}));
  Adam opt({&p}, 0.1f, 0.9f, 0.999f, 1e-8f);
  std::vector<double> grads{1.0, -0.5, 2.0};
  for (double g : grads) {
    p.zero_grad();
    p.grad[0] = static_cast<float>(g);
    opt.step();
  }
  double expect = oracles::adam_scalar(0.8, grads, 0.1, 0.9, 0.999, 1e-8);
  CHECK(static_cast<double>(p.value.data()[0]) == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("adam validates learning rate and trainable set") {
  Parameter p("p", Tensor(Shape{1}, 0.0f));
  CHECK_THROWS_AS(Adam({&p}, 0.0f), ContractError);
  CHECK_THROWS_AS(Adam({&p}, -1.0f), ContractError);
  p.trainable = false;
  CHECK_THROWS_AS(Adam({&p}, 0.1f), ContractError);
}

TEST_CASE("first-step direction is -sign(g) regardless of magnitude") {
  Rng rng(3);
  Parameter p("p", Tensor(Shape{16}, 0.0f));
  Adam opt({&p}, 0.05f);
  for (std::size_t i = 0; i < 16; ++i) {
    p.grad[i] = static_cast<float>(rng.uniform(-1.0, 1.0)) *
                static_cast<float>(std::pow(10.0, rng.uniform(-3.0, 3.0)));
    if (p.grad[i] == 0.0f) p.grad[i] = 1.0f;
  }
  std::vector<float> g(p.grad);
  opt.step();
  for (std::size_t i = 0; i < 16; ++i) {
    float delta = p.value.data()[i];
    CHECK(std::abs(delta + 0.05f * (g[i] > 0 ? 1.0f : -1.0f)) < 5e-4f);
  }
}

TEST_CASE("training refuses a fully frozen model and empty datasets") {
  BandTask task(10, 32, 32, 1);
  Model m = Model::build(probe_config(), 1);
  TrainConfig cfg;
  cfg.batch_size = 5;
  cfg.epochs = 1;
  cfg.iterations_per_epoch = 1;
  m.set_freeze(FreezeLevel::Base);
  CHECK_THROWS_AS(train(m, task, task, cfg), ContractError);

  Model m2 = Model::build(probe_config(), 1);
  BandTask empty(0, 32, 32, 1);
  CHECK_THROWS_AS(train(m2, empty, task, cfg), ConfigError);
  TrainConfig big = cfg;
  big.batch_size = 100;
  CHECK_THROWS_AS(train(m2, task, task, big), ConfigError);
}

TEST_CASE("overfit probe reaches low loss with a falling loss curve") {
  for (ArchKind arch : {ArchKind::UNet, ArchKind::DeconvNet}) {
    CAPTURE(arch_name(arch));
    BandTask task(10, 32, 32, 7);
    Model m = Model::build(probe_config(arch), 42);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3f;
    cfg.batch_size = 5;
    cfg.epochs = 1;
    cfg.iterations_per_epoch = 300;
    cfg.dropout_rate = 0.25f;
    cfg.seed = 42;
    TrainHistory hist = train(m, task, task, cfg);
    REQUIRE(hist.train_loss.size() == 300);
    CHECK(hist.train_loss.back() < 0.1f);

    // Median of the last tenth is below the median of the first tenth.
    auto median_of = [](std::vector<float> v) {
      std::sort(v.begin(), v.end());
      return v[v.size() / 2];
    };
    std::vector<float> head(hist.train_loss.begin(), hist.train_loss.begin() + 30);
    std::vector<float> tail(hist.train_loss.end() - 30, hist.train_loss.end());
    CHECK(median_of(tail) < median_of(head));
  }
}

TEST_CASE("identical config and seed reproduce weights bitwise") {
  BandTask task(12, 32, 32, 3);
  TrainConfig cfg;
  cfg.learning_rate = 5e-4f;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.iterations_per_epoch = 10;
  cfg.seed = 5;

  auto run = [&] {
    Model m = Model::build(probe_config(), 5);
    train(m, task, task, cfg);
    return m.snapshot_state();
  };
  auto s1 = run();
  auto s2 = run();
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    REQUIRE(s1[i].size() == s2[i].size());
    for (std::size_t k = 0; k < s1[i].size(); ++k) CHECK(s1[i][k] == s2[i][k]);
  }
}

TEST_CASE("fine_tune freezes exactly the frozen prefix") {
  fs::path dir = fs::temp_directory_path() / "ca_optim_tests";
  fs::create_directories(dir);
  BandTask source(12, 32, 32, 11);
  BandTask target(12, 32, 32, 12);

  for (ArchKind arch : {ArchKind::UNet, ArchKind::DeconvNet}) {
    CAPTURE(arch_name(arch));
    Model base = Model::build(probe_config(arch), 31);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3f;
    cfg.batch_size = 4;
    cfg.epochs = 1;
    cfg.iterations_per_epoch = 15;
    cfg.seed = 31;
    train(base, source, source, cfg);
    std::string base_path = (dir / (std::string("base_") + arch_name(arch) + ".utcw")).string();
    base.save(base_path);

    SUBCASE("encoder level") {
      FineTuneResult ft = fine_tune(base_path, target, target, cfg, FreezeLevel::Encoder);
      Model reloaded = Model::load(base_path);
      CHECK(params_hash(ft.model, "enc.") == params_hash(reloaded, "enc."));
      CHECK(params_hash(ft.model, "dec.") != params_hash(reloaded, "dec."));
    }
    SUBCASE("dec3 level freezes conv1..conv8 and deconv1..3") {
      FineTuneResult ft = fine_tune(base_path, target, target, cfg, FreezeLevel::Dec3);
      Model reloaded = Model::load(base_path);
      CHECK(params_hash(ft.model, "enc.") == params_hash(reloaded, "enc."));
      for (const char* frozen : {"dec.deconv1.", "dec.deconv2.", "dec.deconv3.", "dec.conv6.",
                                 "dec.conv7.", "dec.conv8."}) {
        CHECK(params_hash(ft.model, frozen) == params_hash(reloaded, frozen));
      }
      bool changed = params_hash(ft.model, "dec.deconv4.") != params_hash(reloaded, "dec.deconv4.") ||
                     params_hash(ft.model, "dec.conv9.") != params_hash(reloaded, "dec.conv9.") ||
                     params_hash(ft.model, "final.") != params_hash(reloaded, "final.");
      CHECK(changed);
    }
  }
}

TEST_CASE("fine_tune rejects base level and arch mismatches") {
  fs::path dir = fs::temp_directory_path() / "ca_optim_tests";
  fs::create_directories(dir);
  BandTask task(10, 32, 32, 2);
  Model base = Model::build(probe_config(ArchKind::UNet), 1);
  std::string path = (dir / "mismatch.utcw").string();
  base.save(path);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.iterations_per_epoch = 2;
  CHECK_THROWS_AS(fine_tune(path, task, task, cfg, FreezeLevel::Base), ContractError);
  CHECK_THROWS_AS(fine_tune(path, task, task, cfg, FreezeLevel::Encoder, ArchKind::DeconvNet),
                  ConfigError);
}

TEST_CASE("fine-tuning on the training domain does not disturb validation dice much") {
  fs::path dir = fs::temp_directory_path() / "ca_optim_tests";
  fs::create_directories(dir);
  BandTask train_set(16, 32, 32, 21);
  BandTask val_set(8, 32, 32, 22);

  Model base = Model::build(probe_config(), 77);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3f;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.iterations_per_epoch = 300;
  cfg.seed = 77;
  train(base, train_set, val_set, cfg);
  std::string path = (dir / "stable.utcw").string();
  base.save(path);
  double base_dice = eval::eval_source(base, val_set).dice;

  TrainConfig ft_cfg = cfg;
  ft_cfg.iterations_per_epoch = 100;
  FineTuneResult ft = fine_tune(path, train_set, val_set, ft_cfg, FreezeLevel::Encoder);
  double ft_dice = eval::eval_source(ft.model, val_set).dice;
  CHECK(std::abs(ft_dice - base_dice) < 0.05);
}
