#include <gtest/gtest.h>

#include "oracles.hpp"
#include "smfn/autodiff.hpp"

using namespace smfn;

TEST(Tensor, RejectsZeroExtentAndEmptyShape) {
  EXPECT_THROW(Tensor<float>(Shape{}), ValidationError);
  EXPECT_THROW(Tensor<float>(Shape{2, 0, 3}), ValidationError);
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>(3)), ValidationError);
}

TEST(Tensor, IndexingIsRowMajor) {
  Tensor<double> t(Shape{2, 3, 4, 5});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(i);
  EXPECT_EQ(t.at(1, 2, 3, 4), 119.0);
  EXPECT_EQ(t.at(0, 1, 0, 0), 20.0);
  EXPECT_EQ(t.at(0, 0, 1, 0), 5.0);
}

TEST(Tensor, ReshapeKeepsDataAndRejectsSizeChange) {
  Tensor<float> t(Shape{2, 6}, 1.5f);
  EXPECT_EQ(t.reshaped(Shape{3, 4}).shape(), (Shape{3, 4}));
  EXPECT_THROW(t.reshaped(Shape{5}), ValidationError);
}

TEST(Tensor, CastPreservesValues) {
  auto t = oracle::random_tensor<double>(Shape{3, 3}, 1);
  auto f = t.cast<float>();
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_FLOAT_EQ(f[i], static_cast<float>(t[i]));
}

TEST(Broadcast, ShapeRules) {
  EXPECT_EQ(broadcast_shape(Shape{2, 1, 4}, Shape{3, 1}), (Shape{2, 3, 4}));
  EXPECT_EQ(broadcast_shape(Shape{1}, Shape{5, 6}), (Shape{5, 6}));
  EXPECT_THROW(broadcast_shape(Shape{2, 3}, Shape{4, 3}), ValidationError);
}

TEST(Autodiff, ElementwiseValues) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6}));
  auto b = tape.constant(Tensor<double>(Shape{1, 3}, std::vector<double>{10, 20, 30}));
  auto s = add(a, b), d = sub(a, b), m = mul(a, b);
  EXPECT_EQ(s.value()[4], 25.0);
  EXPECT_EQ(d.value()[0], -9.0);
  EXPECT_EQ(m.value()[5], 180.0);
}

TEST(Autodiff, ReduceKeepsAxes) {
  Tape<double> tape;
  auto a = tape.constant(oracle::random_tensor<double>(Shape{2, 3, 4}, 3));
  auto r = reduce(a, ReduceKind::Mean, {1});
  EXPECT_EQ(r.shape(), (Shape{2, 1, 4}));
  double expect = 0.0;
  for (std::size_t c = 0; c < 3; ++c) expect += a.value()[c * 4 + 2];
  EXPECT_NEAR(r.value()[2], expect / 3.0, 1e-15);
  EXPECT_EQ(sum(a).shape(), (Shape{1}));
}

TEST(Autodiff, SharedInputAccumulates) {
  Tensor<double> x(Shape{1}, 3.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  auto v = tape.leaf(x);
  tape.backward(sum(add(mul(v, v), v)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  Tensor<double> x(Shape{2}, 1.0);
  Tape<double> tape;
  auto v = tape.leaf(x);  // requires_grad is false
  auto c = tape.constant(Tensor<double>(Shape{2}, 2.0));
  auto y = sum(mul(v, c));
  EXPECT_FALSE(tape.needs_grad(y.id()));
  tape.backward(y);
  EXPECT_FALSE(x.has_grad());
}

TEST(Autodiff, BackwardRejectsMisuse) {
  Tape<double> tape, other;
  Tensor<double> x(Shape{3}, 1.0);
  x.set_requires_grad(true);
  auto v = tape.leaf(x);
  EXPECT_THROW(tape.backward(v), ValidationError);  // not scalar
  auto foreign = other.constant(Tensor<double>::scalar(1.0));
  EXPECT_THROW(tape.backward(foreign), ValidationError);
  auto loss = sum(v);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), ValidationError);
}

TEST(Autodiff, MixingTapesIsRejected) {
  Tape<double> a, b;
  auto x = a.constant(Tensor<double>(Shape{2}, 1.0));
  auto y = b.constant(Tensor<double>(Shape{2}, 1.0));
  EXPECT_THROW(add(x, y), ValidationError);
}

TEST(Autodiff, ConcatAndReshapeRoundTrip) {
  Tape<double> tape;
  auto a = tape.constant(oracle::random_tensor<double>(Shape{2, 1, 2, 2}, 4));
  auto b = tape.constant(oracle::random_tensor<double>(Shape{2, 3, 2, 2}, 5));
  auto c = concat<double>({a, b});
  EXPECT_EQ(c.shape(), (Shape{2, 4, 2, 2}));
  EXPECT_EQ(c.value().at(1, 0, 1, 1), a.value().at(1, 0, 1, 1));
  EXPECT_EQ(c.value().at(1, 3, 0, 1), b.value().at(1, 2, 0, 1));
  EXPECT_THROW(reshape(c, Shape{3, 3}), ValidationError);
}

TEST(GradCheck, ElementwiseWithBroadcast) {
  auto build = [](Tape<double>&, const std::vector<Var<double>>& v) {
    return oracle::project(mul(sub(v[0], v[1]), add(v[0], v[1])));
  };
  const double err = oracle::gradient_error(build, {oracle::random_tensor<double>(Shape{2, 3, 4}, 1),
                                                    oracle::random_tensor<double>(Shape{3, 1}, 2)});
  EXPECT_LE(err, 1e-8);
}

TEST(GradCheck, ReduceScaleConcatReshape) {
  auto build = [](Tape<double>&, const std::vector<Var<double>>& v) {
    auto c = concat<double>({v[0], scale(v[1], 2.5)}, 1);
    auto r = reduce(mul(c, c), ReduceKind::Mean, {2});
    return oracle::project(reshape(r, Shape{r.value().numel()}));
  };
  const double err = oracle::gradient_error(build, {oracle::random_tensor<double>(Shape{2, 2, 3, 2}, 3),
                                                    oracle::random_tensor<double>(Shape{2, 1, 3, 2}, 4)});
  EXPECT_LE(err, 1e-8);
}

TEST(FiniteDifference, MatchesKnownDerivative) {
  Tensor<double> x(Shape{3}, std::vector<double>{0.5, -1.0, 2.0});
  auto g = finite_difference_grad<double>(
      [](const Tensor<double>& t) {
        double s = 0.0;
        for (double v : t.data()) s += v * v * v;
        return s;
      },
      x, 1e-5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], 3 * x[i] * x[i], 1e-8);
  EXPECT_THROW(finite_difference_grad<double>([](const Tensor<double>&) { return 0.0; }, x, 0.0), ValidationError);
}
