#include <doctest.h>

#include "contour_adapt/gradcheck.hpp"
#include "contour_adapt/rng.hpp"
#include "contour_adapt/ops.hpp"
#include "contour_adapt/tape.hpp"
#include "contour_adapt/tensor.hpp"

using namespace ca;

TEST_CASE("tensor shape and element count stay consistent") {
  Tensor t(Shape{2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.ndim() == 3);
  CHECK_THROWS_AS(Tensor(Shape{2, 0, 4}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>{1.0f, 2.0f, 3.0f}), ShapeError);
}

TEST_CASE("copies share storage, clones do not") {
  Tensor t(Shape{4}, std::vector<float>{1, 2, 3, 4});
  Tensor copy = t;
  CHECK(copy.id() == t.id());
  Tensor deep = t.clone();
  CHECK(deep.id() != t.id());
  CHECK(deep.data()[2] == t.data()[2]);
}

TEST_CASE("loss = sum(x) gives all-ones gradient") {
  Tensor x(Shape{2, 3}, std::vector<float>{1, -2, 3, 0.5f, 0, -1});
  x.set_requires_grad(true);
  Tape tape;
  Tensor loss = sum_all(x, &tape);
  GradStore store = tape.backward(loss);
  const std::vector<float>* g = store.find(x);
  REQUIRE(g != nullptr);
  for (float v : *g) CHECK(v == 1.0f);
}

TEST_CASE("loss = sum(x*x) at [1,2] gives [2,4]") {
  Tensor x(Shape{2}, std::vector<float>{1.0f, 2.0f});
  x.set_requires_grad(true);
  Tape tape;
  Tensor loss = sum_all(mul(x, x, &tape), &tape);
  GradStore store = tape.backward(loss);
  const std::vector<float>* g = store.find(x);
  REQUIRE(g != nullptr);
  CHECK((*g)[0] == doctest::Approx(2.0f));
  CHECK((*g)[1] == doctest::Approx(4.0f));
}

TEST_CASE("gradients accumulate additively across consumers") {
  // y = sum(x) + sum(x) -> dy/dx = 2.
  Tensor x(Shape{3}, std::vector<float>{1, 2, 3});
  x.set_requires_grad(true);
  Tape tape;
  Tensor loss = add(sum_all(x, &tape), sum_all(x, &tape), &tape);
  GradStore store = tape.backward(loss);
  for (float v : *store.find(x)) CHECK(v == 2.0f);
}

TEST_CASE("tape misuse raises contract errors") {
  Tensor x(Shape{2}, std::vector<float>{1, 2});
  x.set_requires_grad(true);

  SUBCASE("non-scalar loss") {
    Tape tape;
    Tensor y = mul(x, x, &tape);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }
  SUBCASE("empty tape") {
    Tape tape;
    CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0f)), ContractError);
  }
  SUBCASE("tape is single-use") {
    Tape tape;
    Tensor loss = sum_all(x, &tape);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), ContractError);
    CHECK_THROWS_AS(tape.record([](GradStore&) {}), ContractError);
  }
}

TEST_CASE("non-trainable flags do not matter to the tape, only requires_grad") {
  // The tape hands a gradient to every requires_grad leaf; freezing lives in
  // the optimizer, not here.
  Tensor x(Shape{2}, std::vector<float>{3, 4});
  x.set_requires_grad(true);
  Tape tape;
  Tensor loss = sum_all(mul(x, x, &tape), &tape);
  GradStore store = tape.backward(loss);
  CHECK(store.find(x) != nullptr);
}

TEST_CASE("random 3-op chain matches finite differences in 64-bit mode") {
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> vals(12);
    for (double& v : vals) v = rng.uniform(-2.0, 2.0);
    Tensor64 x(Shape{3, 4}, vals);
    std::vector<double> vals2(12);
    for (double& v : vals2) v = rng.uniform(-2.0, 2.0);
    Tensor64 y(Shape{3, 4}, vals2);

    ScalarOp<double> op = [](const std::vector<Tensor64>& in, TapeT<double>* tape) {
      Tensor64 a = mul(in[0], in[1], tape);
      Tensor64 b = sigmoid(a, tape);
      return sum_all(b, tape);
    };
    GradCheckReport report = finite_diff_check<double>(op, {x, y});
    INFO(report.str());
    CHECK(report.max_rel_err < 1e-5);
  }
}

TEST_CASE("finite_diff_check on the identity op reports zero error") {
  Tensor64 x(Shape{4}, std::vector<double>{0.5, -1.5, 2.0, 0.25});
  ScalarOp<double> op = [](const std::vector<Tensor64>& in, TapeT<double>* tape) {
    return sum_all(in[0], tape);
  };
  GradCheckReport report = finite_diff_check<double>(op, {x});
  CHECK(report.pass);
  CHECK(report.max_rel_err == 0.0);
}

TEST_CASE("sigmoid slope at zero is a quarter") {
  Tensor64 x(Shape{1}, std::vector<double>{0.0});
  x.set_requires_grad(true);
  TapeT<double> tape;
  Tensor64 loss = sum_all(sigmoid(x, &tape), &tape);
  GradStoreT<double> store = tape.backward(loss);
  CHECK((*store.find(x))[0] == doctest::Approx(0.25).epsilon(1e-12));

  ScalarOp<double> op = [](const std::vector<Tensor64>& in, TapeT<double>* tape_) {
    return sum_all(sigmoid(in[0], tape_), tape_);
  };
  GradCheckOptions<double> opt;
  opt.step = 1e-5;
  GradCheckReport report = finite_diff_check<double>(op, {x.clone()}, opt);
  INFO(report.str());
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("forward ops keep finite inputs finite") {
  Rng rng(123);
  std::vector<float> vals(64);
  for (float& v : vals) v = static_cast<float>(rng.uniform(-30.0, 30.0));
  Tensor x(Shape{64}, vals);
  CHECK(sigmoid(x).all_finite());
  CHECK(relu(x).all_finite());
  CHECK(mul(x, x).all_finite());
  Tensor s = sigmoid(x);
  for (float v : s.data()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}
