#include <doctest.h>

#include <cmath>

#include "contour_adapt/gradcheck.hpp"
#include "contour_adapt/layers.hpp"
#include "contour_adapt/ops.hpp"
#include "oracles.hpp"

using namespace ca;
using namespace ca::nn;

namespace {

template <class T>
TensorT<T> random_tensor(Shape shape, Rng& rng, double lo = -1.5, double hi = 1.5) {
  TensorT<T> t(std::move(shape));
  for (T& v : t.mutable_data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace

TEST_CASE("conv2d with a 1x1 identity kernel reproduces the input") {
  Rng rng(1);
  Tensor x = random_tensor<float>(Shape{1, 1, 4, 4}, rng);
  Tensor w(Shape{1, 1, 1, 1}, std::vector<float>{1.0f});
  Tensor b(Shape{1}, std::vector<float>{0.0f});
  Tensor y = conv2d(x, w, b, ConvSpec{1, 1, 1, 1, 1, 1, 0, 0});
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("same-padded all-ones 3x3 kernel sums 9 interior pixels") {
  const float v = 0.7f;
  Tensor x(Shape{1, 1, 6, 6}, v);
  Tensor w(Shape{1, 1, 3, 3}, 1.0f);
  Tensor b(Shape{1}, 0.0f);
  Tensor y = conv2d(x, w, b, ConvSpec{1, 1, 3, 3, 1, 1, 1, 1});
  CHECK(y.shape() == Shape{1, 1, 6, 6});
  // Interior = 9v, corners = 4v, edges = 6v under zero padding.
  CHECK(y.data()[7] == doctest::Approx(9 * v));
  CHECK(y.data()[0] == doctest::Approx(4 * v));
  CHECK(y.data()[1] == doctest::Approx(6 * v));
}

TEST_CASE("conv2d rejects mismatched shapes with the offending dimension named") {
  Tensor x(Shape{1, 2, 4, 4}, 0.0f);
  Tensor w(Shape{3, 1, 3, 3}, 0.0f);  // cin mismatch
  Tensor b(Shape{3}, 0.0f);
  CHECK_THROWS_WITH_AS(conv2d(x, w, b, ConvSpec{1, 3, 3, 3, 1, 1, 1, 1}),
                       doctest::Contains("channel"), ShapeError);
  Tensor b_bad(Shape{2}, 0.0f);
  CHECK_THROWS_AS(conv2d(x, w, b_bad, ConvSpec{2, 3, 3, 3, 1, 1, 1, 1}), ShapeError);
}

TEST_CASE("transposed conv doubles spatial dims and spreads a single value") {
  Tensor x(Shape{1, 1, 1, 1}, std::vector<float>{0.9f});
  Tensor w(Shape{1, 1, 2, 2}, 1.0f);
  Tensor b(Shape{1}, 0.0f);
  Tensor y = transposed_conv2d(x, w, b);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (float v : y.data()) CHECK(v == doctest::Approx(0.9f));

  Rng rng(3);
  Tensor x2 = random_tensor<float>(Shape{2, 3, 5, 7}, rng);
  Tensor w2 = random_tensor<float>(Shape{3, 4, 2, 2}, rng);
  Tensor b2 = random_tensor<float>(Shape{4}, rng);
  Tensor y2 = transposed_conv2d(x2, w2, b2);
  CHECK(y2.shape() == Shape{2, 4, 10, 14});
}

TEST_CASE("transposed conv equals the autodiff adjoint of the matching forward conv") {
  Rng rng(17);
  const int cin = 3, cout = 2, h = 4, w = 5;
  Tensor x = random_tensor<float>(Shape{1, cin, h, w}, rng);
  Tensor wgt = random_tensor<float>(Shape{cin, cout, 2, 2}, rng);
  Tensor zero_b(Shape{cout}, 0.0f);
  Tensor up = transposed_conv2d(x, wgt, zero_b);

  // Forward conv kernel-2 stride-2 maps [1,cout,2h,2w] -> [1,cin,h,w]; its
  // input gradient seeded with x must reproduce the transposed conv output.
  Tensor z(Shape{1, cout, 2 * h, 2 * w}, 0.0f);
  z.set_requires_grad(true);
  Tape tape;
  Tensor down = conv2d(z, wgt, Tensor(Shape{cin}, 0.0f),
                       ConvSpec{cout, cin, 2, 2, 2, 2, 0, 0}, &tape);
  Tensor loss = sum_all(mul(down, x, &tape), &tape);
  GradStore store = tape.backward(loss);
  const std::vector<float>* gz = store.find(z);
  REQUIRE(gz != nullptr);
  for (std::size_t i = 0; i < up.numel(); ++i) {
    CHECK(up.data()[i] == doctest::Approx((*gz)[i]).epsilon(1e-5));
  }
}

TEST_CASE("maxpool2 follows the tie-break and argmax contracts") {
  SUBCASE("constant image keeps the constant; all indices top-left") {
    Tensor x(Shape{1, 1, 4, 4}, 2.5f);
    auto r = maxpool2(x);
    for (float v : r.values.data()) CHECK(v == 2.5f);
    CHECK((*r.argmax)[0] == 0);
    CHECK((*r.argmax)[1] == 2);
    CHECK((*r.argmax)[2] == 8);
    CHECK((*r.argmax)[3] == 10);
  }
  SUBCASE("window [1,2;3,4] picks 4 at the bottom-right") {
    Tensor x(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
    auto r = maxpool2(x);
    CHECK(r.values.data()[0] == 4.0f);
    CHECK((*r.argmax)[0] == 3);
  }
  SUBCASE("odd dimensions are rejected") {
    Tensor x(Shape{1, 1, 3, 4}, 0.0f);
    CHECK_THROWS_AS(maxpool2(x), ShapeError);
  }
  SUBCASE("random plane matches the naive window scan") {
    Rng rng(9);
    Tensor x = random_tensor<float>(Shape{1, 1, 8, 8}, rng);
    auto r = maxpool2(x);
    std::vector<double> yd;
    std::vector<std::int64_t> ad;
    oracles::maxpool2(std::vector<double>(x.data().begin(), x.data().end()), 1, 1, 8, 8, yd, ad);
    for (std::size_t i = 0; i < yd.size(); ++i) {
      CHECK(static_cast<double>(r.values.data()[i]) == yd[i]);
      CHECK((*r.argmax)[i] == ad[i]);
    }
  }
  SUBCASE("backward conserves gradient mass onto argmax positions") {
    Rng rng(10);
    Tensor x = random_tensor<float>(Shape{2, 3, 6, 6}, rng);
    x.set_requires_grad(true);
    Tape tape;
    auto r = maxpool2(x, &tape);
    Tensor loss = sum_all(r.values, &tape);
    GradStore store = tape.backward(loss);
    const std::vector<float>* gx = store.find(x);
    REQUIRE(gx != nullptr);
    double in_mass = 0.0;
    for (float v : *gx) in_mass += v;
    CHECK(in_mass == doctest::Approx(static_cast<double>(r.values.numel())));
  }
}

TEST_CASE("batchnorm train mode normalizes and infer mode uses running stats") {
  SUBCASE("constant input collapses to beta") {
    Tensor x(Shape{2, 3, 4, 4}, 1.7f);
    BatchNormState st = BatchNormState::make(3, "bn");
    for (float& g : st.gamma.value.mutable_data()) g = 2.0f;
    for (float& b : st.beta.value.mutable_data()) b = 0.25f;
    Tensor y = batchnorm(x, st, Mode::Train);
    for (float v : y.data()) CHECK(v == doctest::Approx(0.25f).epsilon(1e-3));
  }
  SUBCASE("unit gamma, zero beta gives zero mean and unit variance per channel") {
    Rng rng(21);
    Tensor x = random_tensor<float>(Shape{4, 2, 8, 8}, rng);
    BatchNormState st = BatchNormState::make(2, "bn");
    Tensor y = batchnorm(x, st, Mode::Train);
    const std::size_t plane = 64;
    for (int c = 0; c < 2; ++c) {
      double sum = 0.0, sq = 0.0;
      for (int n = 0; n < 4; ++n) {
        const float* p = y.data().data() + (static_cast<std::size_t>(n) * 2 + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum += p[i];
          sq += static_cast<double>(p[i]) * p[i];
        }
      }
      double mean = sum / (4 * plane);
      double var = sq / (4 * plane) - mean * mean;
      CHECK(std::abs(mean) < 1e-4);
      CHECK(std::abs(var - 1.0) < 1e-3);
    }
  }
  SUBCASE("infer mode hand example: 2*0.5/sqrt(1+eps)+1 is about 2") {
    Tensor x(Shape{1, 1, 2, 2}, 0.5f);
    BatchNormState st = BatchNormState::make(1, "bn");
    st.gamma.value.mutable_data()[0] = 2.0f;
    st.beta.value.mutable_data()[0] = 1.0f;
    Tensor y = batchnorm(x, st, Mode::Infer);
    for (float v : y.data()) CHECK(v == doctest::Approx(2.0f).epsilon(1e-4));
  }
  SUBCASE("train mode updates running stats with momentum 0.9") {
    Tensor x(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});  // mean 2.5, biased var 1.25
    BatchNormState st = BatchNormState::make(1, "bn");
    batchnorm(x, st, Mode::Train);
    CHECK(st.running_mean[0] == doctest::Approx(0.9f * 0.0f + 0.1f * 2.5f));
    CHECK(st.running_var[0] == doctest::Approx(0.9f * 1.0f + 0.1f * 1.25f));
    CHECK(st.running_var[0] > 0.0f);
  }
  SUBCASE("train mode needs at least two values per channel") {
    Tensor x(Shape{1, 2, 1, 1}, 0.0f);
    BatchNormState st = BatchNormState::make(2, "bn");
    CHECK_THROWS_AS(batchnorm(x, st, Mode::Train), ContractError);
  }
}

TEST_CASE("activations") {
  Tensor x(Shape{4}, std::vector<float>{-1.0f, 3.0f, 0.0f, 30.0f});
  Tensor r = activation(x, Activation::Relu);
  CHECK(r.data()[0] == 0.0f);
  CHECK(r.data()[1] == 3.0f);
  Tensor s = activation(x, Activation::Sigmoid);
  CHECK(s.data()[2] == doctest::Approx(0.5f));
  Tensor extreme(Shape{2}, std::vector<float>{30.0f, -30.0f});
  Tensor se = activation(extreme, Activation::Sigmoid);
  CHECK(se.all_finite());
  CHECK(se.data()[0] > 0.0f);
  CHECK(se.data()[0] < 1.0f);
  CHECK(se.data()[1] > 0.0f);
  CHECK(se.data()[1] < 1.0f);
}

TEST_CASE("dropout contract") {
  Rng rng(33);
  Tensor x = random_tensor<float>(Shape{2, 2, 4, 4}, rng);

  SUBCASE("rate 0 and infer mode are identities") {
    Rng r1(1);
    Tensor y = dropout(x, 0.0, r1, Mode::Train);
    CHECK(y.id() == x.id());
    Tensor z = dropout(x, 0.9, r1, Mode::Infer);
    CHECK(z.id() == x.id());
  }
  SUBCASE("rate >= 1 or negative is rejected") {
    Rng r1(1);
    CHECK_THROWS_AS(dropout(x, 1.0, r1, Mode::Train), ContractError);
    CHECK_THROWS_AS(dropout(x, -0.1, r1, Mode::Train), ContractError);
  }
  SUBCASE("inverted dropout keeps the expectation within 2 percent") {
    Tensor ones(Shape{64}, 1.0f);
    Rng stream(4242);
    double acc = 0.0;
    const int masks = 10000;
    for (int i = 0; i < masks; ++i) {
      Tensor y = dropout(ones, 0.5, stream, Mode::Train);
      for (float v : y.data()) acc += v;
    }
    double mean = acc / (static_cast<double>(masks) * 64.0);
    CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("concat_channels layout and errors") {
  Rng rng(8);
  Tensor a = random_tensor<float>(Shape{2, 4, 3, 3}, rng);
  Tensor b = random_tensor<float>(Shape{2, 6, 3, 3}, rng);
  Tensor y = concat_channels(a, b);
  CHECK(y.shape() == Shape{2, 10, 3, 3});
  // Slicing the first 4 channels back recovers a exactly.
  for (int n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < 4 * 9; ++i) {
      CHECK(y.data()[static_cast<std::size_t>(n) * 90 + i] ==
            a.data()[static_cast<std::size_t>(n) * 36 + i]);
    }
  }
  Tensor small(Shape{2, 1, 2, 2}, 0.0f);
  CHECK_THROWS_AS(concat_channels(a, small), ShapeError);
}

TEST_CASE("bce_loss values and errors") {
  SUBCASE("perfect prediction is almost free") {
    Tensor g(Shape{4}, std::vector<float>{1, 0, 1, 0});
    Tensor loss = bce_loss(g, g);
    CHECK(loss.item() >= 0.0f);
    CHECK(loss.item() <= 1e-6f);
  }
  SUBCASE("uniform 0.5 prediction costs ln 2") {
    Tensor p(Shape{8}, 0.5f);
    Tensor g(Shape{8}, std::vector<float>{1, 0, 0, 1, 1, 1, 0, 0});
    CHECK(bce_loss(p, g).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  }
  SUBCASE("hand-computed example") {
    Tensor p(Shape{2}, std::vector<float>{0.9f, 0.2f});
    Tensor g(Shape{2}, std::vector<float>{1.0f, 0.0f});
    double expect = (-std::log(0.9) - std::log(0.8)) / 2.0;
    CHECK(bce_loss(p, g).item() == doctest::Approx(expect).epsilon(1e-6));
    CHECK(expect == doctest::Approx(0.1643).epsilon(1e-3));
  }
  SUBCASE("shape mismatch") {
    Tensor p(Shape{2}, 0.5f);
    Tensor g(Shape{3}, 0.0f);
    CHECK_THROWS_AS(bce_loss(p, g), ShapeError);
  }
  SUBCASE("loss is non-negative on random inputs") {
    Rng rng(55);
    for (int t = 0; t < 20; ++t) {
      Tensor p = random_tensor<float>(Shape{16}, rng, 0.0, 1.0);
      Tensor g(Shape{16});
      for (float& v : g.mutable_data()) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
      CHECK(bce_loss(p, g).item() >= 0.0f);
    }
  }
}

TEST_CASE("gradient checks for every layer op (64-bit)") {
  Rng rng(777);
  GradCheckOptions<double> opt;  // h=1e-5, tol 1e-5

  SUBCASE("conv2d w.r.t. input, weight and bias") {
    for (int seed = 0; seed < 3; ++seed) {
      Rng r(seed + 1);
      Tensor64 x = random_tensor<double>(Shape{1, 2, 5, 5}, r);
      Tensor64 w = random_tensor<double>(Shape{3, 2, 3, 3}, r);
      Tensor64 b = random_tensor<double>(Shape{3}, r);
      ScalarOp<double> op = [](const std::vector<Tensor64>& in, TapeT<double>* tape) {
        Tensor64 y = conv2d(in[0], in[1], in[2], ConvSpec{2, 3, 3, 3, 1, 1, 1, 1}, tape);
        return sum_all(mul(y, y, tape), tape);
      };
      auto rep = finite_diff_check<double>(op, {x, w, b}, opt);
      INFO(rep.str());
      CHECK(rep.pass);
    }
  }
  SUBCASE("transposed conv") {
    Rng r(5);
    Tensor64 x = random_tensor<double>(Shape{1, 2, 3, 3}, r);
    Tensor64 w = random_tensor<double>(Shape{2, 2, 2, 2}, r);
    Tensor64 b = random_tensor<double>(Shape{2}, r);
    ScalarOp<double> op = [](const std::vector<Tensor64>& in, TapeT<double>* tape) {
      Tensor64 y = transposed_conv2d(in[0], in[1], in[2], tape);
      return sum_all(mul(y, y, tape), tape);
    };
    auto rep = finite_diff_check<double>(op, {x, w, b}, opt);
    INFO(rep.str());
    CHECK(rep.pass);
  }
  SUBCASE("maxpool away from ties") {
    Rng r(6);
    Tensor64 x = random_tensor<double>(Shape{1, 2, 4, 4}, r);
    ScalarOp<double> op = [](const std::vector<Tensor64>& in, TapeT<double>* tape) {
      auto pooled = maxpool2(in[0], tape);
      return sum_all(mul(pooled.values, pooled.values, tape), tape);
    };
    auto rep = finite_diff_check<double>(op, {x}, opt);
    INFO(rep.str());
    CHECK(rep.pass);
  }
  SUBCASE("batchnorm train mode w.r.t. x, gamma, beta") {
    Rng r(7);
    Tensor64 x = random_tensor<double>(Shape{2, 2, 3, 3}, r);
    Tensor64 gamma = random_tensor<double>(Shape{2}, r, 0.5, 1.5);
    Tensor64 beta = random_tensor<double>(Shape{2}, r);
    ScalarOp<double> op = [](const std::vector<Tensor64>& in, TapeT<double>* tape) {
      BatchNormStateT<double> st;
      st.gamma = ParameterT<double>("g", in[1]);
      st.beta = ParameterT<double>("b", in[2]);
      st.running_mean.assign(2, 0.0);
      st.running_var.assign(2, 1.0);
      Tensor64 y = batchnorm(in[0], st, Mode::Train, tape);
      return sum_all(mul(y, y, tape), tape);
    };
    auto rep = finite_diff_check<double>(op, {x, gamma, beta}, opt);
    INFO(rep.str());
    CHECK(rep.pass);
  }
  SUBCASE("dropout with a frozen mask") {
    Rng r(8);
    Tensor64 x = random_tensor<double>(Shape{3, 3}, r);
    ScalarOp<double> op = [](const std::vector<Tensor64>& in, TapeT<double>* tape) {
      Rng mask_rng(4242);  // same mask on every evaluation
      Tensor64 y = dropout(in[0], 0.5, mask_rng, Mode::Train, tape);
      return sum_all(mul(y, y, tape), tape);
    };
    auto rep = finite_diff_check<double>(op, {x}, opt);
    INFO(rep.str());
    CHECK(rep.pass);
  }
  SUBCASE("concat routes gradients to both branches") {
    Rng r(9);
    Tensor64 a = random_tensor<double>(Shape{1, 2, 2, 2}, r);
    Tensor64 b = random_tensor<double>(Shape{1, 3, 2, 2}, r);
    ScalarOp<double> op = [](const std::vector<Tensor64>& in, TapeT<double>* tape) {
      Tensor64 y = concat_channels(in[0], in[1], tape);
      return sum_all(mul(y, y, tape), tape);
    };
    auto rep = finite_diff_check<double>(op, {a, b}, opt);
    INFO(rep.str());
    CHECK(rep.pass);
  }
  SUBCASE("bce loss w.r.t. probabilities") {
    Rng r(10);
    Tensor64 p = random_tensor<double>(Shape{3, 3}, r, 0.05, 0.95);
    Tensor64 g(Shape{3, 3});
    for (double& v : g.mutable_data()) v = r.bernoulli(0.5) ? 1.0 : 0.0;
    ScalarOp<double> op = [g](const std::vector<Tensor64>& in, TapeT<double>* tape) {
      return bce_loss(in[0], g, tape);
    };
    auto rep = finite_diff_check<double>(op, {p}, opt);
    INFO(rep.str());
    CHECK(rep.pass);
  }
  SUBCASE("sigmoid and relu away from the kink") {
    Rng r(11);
    Tensor64 x = random_tensor<double>(Shape{4, 4}, r);
    for (double& v : x.mutable_data()) {
      if (std::abs(v) < 0.05) v = 0.1;  // keep relu differentiable at the probe
    }
    ScalarOp<double> op = [](const std::vector<Tensor64>& in, TapeT<double>* tape) {
      Tensor64 y = activation(in[0], Activation::Relu, tape);
      y = activation(y, Activation::Sigmoid, tape);
      return sum_all(y, tape);
    };
    auto rep = finite_diff_check<double>(op, {x}, opt);
    INFO(rep.str());
    CHECK(rep.pass);
  }
  (void)rng;
}
