#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "pavsgg/diff/gradcheck.hpp"
#include "pavsgg/diff/ops.hpp"

using namespace pavsgg::diff;

TEST(Ops, MatmulHandExample) {
  Tape tape;
  auto a = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  auto b = tape.constant(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(matmul(a, b).value(), Tensor::matrix(2, 2, {22, 28, 49, 64}));
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
  Tape tape;
  auto s = softmax(tape.constant(Tensor::matrix(1, 3, {0, 0, 0})), 1);
  for (double v : s.value().values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Ops, SoftmaxSurvivesLargeLogits) {
  Tape tape;
  auto s = softmax(tape.constant(Tensor::matrix(1, 3, {1000, 1000, -1000})), 1);
  EXPECT_DOUBLE_EQ(s.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(s.value()[2], 0.0);
}

TEST(Ops, SigmoidAtZero) {
  Tape tape;
  EXPECT_EQ(sigmoid(tape.constant(Tensor::scalar(0.0))).value().item(), 0.5);
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  Tape tape;
  auto a = tape.constant(Tensor(Shape{2, 3}));
  auto b = tape.constant(Tensor(Shape{2, 2}));
  try {
    add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(shape_to_string({2, 3})), std::string::npos);
    EXPECT_NE(msg.find(shape_to_string({2, 2})), std::string::npos);
  }
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_NO_THROW(add(a, tape.constant(Tensor::scalar(1.0))));
}

TEST(Ops, ConcatSliceAndSumAxis) {
  Tape tape;
  auto a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  auto b = tape.constant(Tensor::matrix(1, 2, {5, 6}));
  const Var parts[] = {a, b};
  auto c = concat(parts, 0);
  EXPECT_EQ(c.value(), Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(slice(c, 0, 1, 2).value(), Tensor::matrix(2, 2, {3, 4, 5, 6}));
  EXPECT_EQ(sum(c, 0).value().values(), (std::vector<double>{9, 12}));
  EXPECT_EQ(sum(c).value().item(), 21.0);
  EXPECT_EQ(mean(c).value().item(), 3.5);
}

TEST(Ops, LayerNormZeroMeanUnitVariance) {
  Tape tape;
  auto y = layer_norm(tape.constant(Tensor::matrix(1, 4, {1, 2, 3, 10})), 1, 0.0);
  double m = 0, v = 0;
  for (double x : y.value().values()) m += x / 4;
  for (double x : y.value().values()) v += (x - m) * (x - m) / 4;
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Backward, SumGivesOnes) {
  ParamStore store;
  store.add("p", Tensor::matrix(2, 3, {1, -2, 3, 0.5, 7, 8}));
  Tape tape;
  auto loss = sum(tape.param(store.get("p")));
  backward(tape, loss, store);
  for (double g : store.get("p").grad.values()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SigmoidTimesConstant) {
  ParamStore store;
  store.add("w", Tensor::scalar(0.0));
  Tape tape;
  auto loss = scale(sigmoid(tape.param(store.get("w"))), 2.0);
  backward(tape, loss, store);
  EXPECT_DOUBLE_EQ(store.get("w").grad.item(), 0.5);
}

TEST(Backward, UnreachedParamGetsZero) {
  ParamStore store;
  store.add("a", Tensor::scalar(1.0));
  store.add("b", Tensor::scalar(2.0));
  store.zero_grad();
  Tape tape;
  backward(tape, scale(tape.param(store.get("a")), 3.0), store);
  EXPECT_EQ(store.get("a").grad.item(), 3.0);
  EXPECT_EQ(store.get("b").grad.item(), 0.0);
}

TEST(Backward, NonScalarLossRejected) {
  ParamStore store;
  store.add("a", Tensor(Shape{2}, 1.0));
  Tape tape;
  EXPECT_THROW(backward(tape, tape.param(store.get("a")), store), ShapeError);
}

TEST(Gradcheck, QuadraticMatchesExactly) {
  ParamStore store;
  store.add("w", Tensor::scalar(3.0));
  Tape tape;
  auto w = tape.param(store.get("w"));
  backward(tape, w * w, store);
  EXPECT_NEAR(store.get("w").grad.item(), 6.0, 1e-9);
  const auto res = finite_diff_check([](Tape& t, const ParamStore& s) {
    auto w = t.param(s.get("w"));
    return w * w;
  }, store);
  EXPECT_NEAR(res.numeric, 6.0, 1e-9);
  EXPECT_NEAR(res.analytic, 6.0, 1e-9);
}

TEST(Gradcheck, ConstantFunctionHasZeroGradients) {
  ParamStore store;
  store.add("w", Tensor::scalar(3.0));
  const auto res = finite_diff_check([](Tape& t, const ParamStore& s) {
    return add(scale(t.param(s.get("w")), 0.0), t.constant(Tensor::scalar(4.0)));
  }, store);
  EXPECT_EQ(res.analytic, 0.0);
  EXPECT_EQ(res.numeric, 0.0);
  EXPECT_EQ(res.max_relative_error, 0.0);
}

TEST(Gradcheck, TwoLayerMlp) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  auto rnd = [&](std::size_t r, std::size_t c) {
    Tensor t(Shape{r, c});
    for (auto& v : t.values()) v = n(rng);
    return t;
  };
  ParamStore store;
  store.add("w1", rnd(5, 7));
  store.add("w2", rnd(7, 3));
  const Tensor x = rnd(4, 5);
  const auto res = finite_diff_check([&](Tape& t, const ParamStore& s) {
    auto h = sigmoid(matmul(t.constant(x), t.param(s.get("w1"))));
    return mean(matmul(h, t.param(s.get("w2"))));
  }, store);
  EXPECT_LT(res.max_relative_error, 1e-5);
  EXPECT_EQ(res.coordinates, 35u + 21u);
  EXPECT_EQ(store.get("w1").value.values().size(), 35u);
}

TEST(Gradcheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0), 1e-9 / 1e-8);
}

TEST(Checkpoint, RoundTripIsExact) {
  ParamStore store;
  store.add("a", Tensor::matrix(2, 2, {0.1, -1e-300, 3.14159265358979, 1e300}));
  store.add("b", Tensor::scalar(-0.0));
  store.step = 42;
  const auto dir = std::filesystem::temp_directory_path() / "pavsgg_ckpt_test";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, store);
  ParamStore other;
  other.add("a", Tensor(Shape{2, 2}));
  other.add("b", Tensor::scalar(1.0));
  load_checkpoint(dir, other);
  EXPECT_EQ(other.get("a").value, store.get("a").value);
  EXPECT_TRUE(std::signbit(other.get("b").value.item()));
  EXPECT_EQ(other.step, 42);

  ParamStore wrong;
  wrong.add("a", Tensor(Shape{4}));
  wrong.add("b", Tensor::scalar(1.0));
  EXPECT_THROW(load_checkpoint(dir, wrong), CheckpointError);
  std::filesystem::remove_all(dir);
}

TEST(ParamStore, DuplicateNameRejected) {
  ParamStore store;
  store.add("a", Tensor::scalar(1.0));
  EXPECT_ANY_THROW(store.add("a", Tensor::scalar(2.0)));
}
