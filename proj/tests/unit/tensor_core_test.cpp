#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "leafae/grad_check.hpp"
#include "leafae/nn.hpp"
#include "leafae/ops.hpp"
#include "support.hpp"

namespace leafae {
namespace {

using testing::random_tensor;

TEST(Tensor, ShapeAndDataLengthAgree) {
  Tensor32 t(Shape{2, 3}, 1.5f);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_THROW(Tensor32(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(t.reshaped(Shape{4}), ShapeError);
  EXPECT_EQ(t.reshaped(Shape{3, 2}).shape(), (Shape{3, 2}));
}

TEST(Tensor, ScalarHasEmptyShape) {
  Tensor64 s = Tensor64::scalar(2.5);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_DOUBLE_EQ(s.item(), 2.5);
  EXPECT_THROW(Tensor64(Shape{2}).item(), ShapeError);
}

TEST(Backward, SumGivesOnes) {
  Graph<double> g;
  Var<double> x = g.leaf(Tensor64(Shape{3}, {1.0, -2.0, 5.0}), true);
  Gradients<double> grads = g.backward(ops::sum(x));
  EXPECT_EQ(grads.at(x), Tensor64(Shape{3}, {1.0, 1.0, 1.0}));
}

TEST(Backward, MeanOfSquaresIsX) {
  Graph<double> g;
  Var<double> x = g.leaf(Tensor64(Shape{2}, {1.0, 2.0}), true);
  Gradients<double> grads = g.backward(ops::mean(ops::mul(x, x)));
  EXPECT_DOUBLE_EQ(grads.at(x)[0], 1.0);
  EXPECT_DOUBLE_EQ(grads.at(x)[1], 2.0);
}

TEST(Backward, NonScalarLossIsContractViolation) {
  Graph<double> g;
  Var<double> x = g.leaf(Tensor64(Shape{2}, {1.0, 2.0}), true);
  EXPECT_THROW(g.backward(x), ContractViolation);
  Var<double> one = g.leaf(Tensor64(Shape{1}, {1.0}), true);
  EXPECT_THROW(g.backward(one), ContractViolation);
}

TEST(Backward, UnreachableLeafIsAbsent) {
  Graph<double> g;
  Var<double> x = g.leaf(Tensor64(Shape{2}, {1.0, 2.0}), true);
  Var<double> unused = g.leaf(Tensor64(Shape{2}, {3.0, 4.0}), true);
  Var<double> frozen = g.leaf(Tensor64(Shape{2}, {3.0, 4.0}), false);
  Gradients<double> grads = g.backward(ops::sum(ops::mul(x, frozen)));
  EXPECT_TRUE(grads.contains(x));
  EXPECT_FALSE(grads.contains(unused));
  EXPECT_FALSE(grads.contains(frozen));
  EXPECT_EQ(grads.find(unused), nullptr);
  EXPECT_THROW(grads.at(unused), ContractViolation);
}

TEST(Backward, FanOutAccumulatesLikeDuplicatedInputs) {
  std::mt19937_64 rng(3);
  const Tensor64 v = random_tensor<double>(Shape{5}, rng);
  // shared: f(x) = sum(sigmoid(x) * x) with x used twice
  Graph<double> g1;
  Var<double> x = g1.leaf(v, true);
  const Tensor64 shared = g1.backward(ops::sum(ops::mul(ops::sigmoid(x), x))).at(x);

  Graph<double> g2;
  Var<double> a = g2.leaf(v, true);
  Var<double> b = g2.leaf(v, true);
  Gradients<double> split = g2.backward(ops::sum(ops::mul(ops::sigmoid(a), b)));
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(shared[i], split.at(a)[i] + split.at(b)[i], 1e-15);
  }
}

TEST(Backward, IsDeterministic) {
  auto run = [] {
    std::mt19937_64 rng(11);
    Graph<float> g;
    Var<float> w = g.leaf(random_tensor<float>(Shape{8, 6}, rng), true);
    Var<float> x = g.leaf(random_tensor<float>(Shape{6, 4}, rng), true);
    Var<float> loss = ops::mean(ops::square(ops::sigmoid(ops::matmul(w, x))));
    Gradients<float> grads = g.backward(loss);
    return std::make_pair(grads.at(w), grads.at(x));
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, GradientsAreFreshEachCall) {
  Graph<double> g;
  Var<double> x = g.leaf(Tensor64(Shape{2}, {1.0, 2.0}), true);
  Var<double> loss = ops::sum(ops::square(x));
  const Tensor64 first = g.backward(loss).at(x);
  const Tensor64 second = g.backward(loss).at(x);
  EXPECT_EQ(first, second);
}

TEST(Backward, DenseNetMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const Tensor64 x = random_tensor<double>(Shape{4}, rng);
  const Tensor64 target = random_tensor<double>(Shape{2}, rng);
  std::vector<Tensor64> params = {random_tensor<double>(Shape{6, 4}, rng), random_tensor<double>(Shape{6}, rng),
                                  random_tensor<double>(Shape{2, 6}, rng), random_tensor<double>(Shape{2}, rng)};
  ScalarFunction<double> f = [&](Graph<double>& g, std::span<const Var<double>> p) {
    Var<double> h = nn::apply_activation(nn::dense(g.constant(x), p[0], p[1]), nn::Activation::relu);
    Var<double> y = nn::dense(h, p[2], p[3]);
    return ops::mean(ops::square(ops::sub(y, g.constant(target))));
  };
  const GradCheckResult r = grad_check(f, params, 1e-5, 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error;
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(GradCheck, SumOfSquares) {
  const GradCheckResult r = grad_check<double>(
      [](Graph<double>&, Var<double> x) { return ops::sum(ops::square(x)); },
      Tensor64(Shape{1}, {3.0}), 1e-5, 1e-6);
  EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(GradCheck, SigmoidSum) {
  std::mt19937_64 rng(8);
  const GradCheckResult r = grad_check<double>(
      [](Graph<double>&, Var<double> x) { return ops::sum(ops::sigmoid(x)); },
      random_tensor<double>(Shape{8}, rng, -3, 3), 1e-5, 1e-4);
  EXPECT_TRUE(r.passed) << r.max_relative_error;
}

// Squares with a backward rule that is off by a factor of two.
Var<double> wrong_square(Var<double> x) {
  Tensor64 out = x.value();
  for (double& v : out.data()) v *= v;
  return x.graph().apply("wrong_square", {x.id()}, std::move(out), [](const BackwardContext<double>& c) {
    const Tensor64& in = *c.inputs[0];
    Tensor64& gx = *c.grad_inputs[0];
    for (std::size_t i = 0; i < in.size(); ++i) gx[i] += 4.0 * in[i] * c.grad_output[i];
  });
}

TEST(GradCheck, DetectsWrongGradient) {
  const GradCheckResult r = grad_check<double>(
      [](Graph<double>&, Var<double> x) { return ops::sum(wrong_square(x)); },
      Tensor64(Shape{3}, {0.5, 1.0, -2.0}), 1e-5, 1e-4);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_relative_error, 0.4);
}

TEST(GradCheck, RejectsNonScalarOutput) {
  EXPECT_THROW(grad_check<double>([](Graph<double>&, Var<double> x) { return ops::square(x); },
                                  Tensor64(Shape{2}, {1.0, 2.0}), 1e-5, 1e-4),
               ContractViolation);
  EXPECT_THROW(grad_check<double>([](Graph<double>&, Var<double> x) { return ops::sum(x); },
                                  Tensor64(Shape{2}, {1.0, 2.0}), 0.0, 1e-4),
               ContractViolation);
}

// Each primitive, reduced to a scalar through a fixed random projection.
class PrimitiveGradients : public ::testing::TestWithParam<int> {};

Var<double> project(Graph<double>& g, Var<double> y, std::mt19937_64& rng) {
  return ops::sum(ops::mul(y, g.constant(random_tensor<double>(y.shape(), rng))));
}

TEST_P(PrimitiveGradients, PassAtTolerance) {
  const int seed = GetParam();
  struct Case {
    const char* name;
    std::vector<Shape> shapes;
    std::function<Var<double>(Graph<double>&, std::span<const Var<double>>)> op;
  };
  const std::vector<Case> cases = {
      {"add", {{3, 4}, {3, 4}}, [](auto&, auto v) { return ops::add(v[0], v[1]); }},
      {"sub", {{3, 4}, {3, 4}}, [](auto&, auto v) { return ops::sub(v[0], v[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](auto&, auto v) { return ops::mul(v[0], v[1]); }},
      {"broadcast_add", {{}, {2, 3}}, [](auto&, auto v) { return ops::add(v[0], v[1]); }},
      {"broadcast_mul", {{2, 3}, {}}, [](auto&, auto v) { return ops::mul(v[0], v[1]); }},
      {"matmul", {{3, 5}, {5, 2}}, [](auto&, auto v) { return ops::matmul(v[0], v[1]); }},
      {"sum", {{4, 2}}, [](auto&, auto v) { return ops::sum(v[0]); }},
      {"mean", {{4, 2}}, [](auto&, auto v) { return ops::mean(v[0]); }},
      {"square", {{6}}, [](auto&, auto v) { return ops::square(v[0]); }},
      {"exp", {{6}}, [](auto&, auto v) { return ops::exp(v[0]); }},
      {"scale", {{6}}, [](auto&, auto v) { return ops::scale(v[0], 1.7); }},
      {"sigmoid", {{6}}, [](auto&, auto v) { return ops::sigmoid(v[0]); }},
      {"relu", {{6}}, [](auto&, auto v) { return ops::relu(v[0]); }},
      {"channel_bias", {{2, 3, 2, 2}, {3}}, [](auto&, auto v) { return ops::add_channel_bias(v[0], v[1], 1); }},
      {"reshape", {{2, 3}}, [](auto&, auto v) { return ops::reshape(v[0], Shape{3, 2}); }},
  };
  for (const Case& c : cases) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) * 7919 + 1);
    std::vector<Tensor64> inputs;
    for (const Shape& s : c.shapes) inputs.push_back(random_tensor<double>(s, rng));
    const std::uint64_t proj_seed = rng();
    ScalarFunction<double> f = [&](Graph<double>& g, std::span<const Var<double>> v) {
      std::mt19937_64 prng(proj_seed);
      Var<double> y = c.op(g, v);
      return y.shape().empty() ? ops::mul(y, g.constant(random_tensor<double>(Shape{}, prng)))
                               : project(g, y, prng);
    };
    const GradCheckResult r = grad_check(f, inputs, 1e-6, 1e-4);
    EXPECT_TRUE(r.passed) << c.name << " seed " << seed << " error " << r.max_relative_error;
  }
}

INSTANTIATE_TEST_SUITE_P(TwentySeeds, PrimitiveGradients, ::testing::Range(0, 20));

TEST(Ops, BroadcastRejectsOtherMismatches) {
  Graph<double> g;
  Var<double> a = g.constant(Tensor64(Shape{2, 3}));
  Var<double> b = g.constant(Tensor64(Shape{3}));
  EXPECT_THROW(ops::add(a, b), ShapeError);
  EXPECT_THROW(ops::mul(a, g.constant(Tensor64(Shape{1}))), ShapeError);
  EXPECT_THROW(ops::matmul(a, a), ShapeError);
}

TEST(Ops, StopGradientBlocksFlow) {
  Graph<double> g;
  Var<double> x = g.leaf(Tensor64(Shape{2}, {1.0, 2.0}), true);
  Var<double> loss = ops::sum(ops::add(ops::stop_gradient(ops::square(x)), x));
  EXPECT_EQ(g.backward(loss).at(x), Tensor64(Shape{2}, {1.0, 1.0}));
}

TEST(Ops, StraightThroughCopiesGradient) {
  Graph<double> g;
  Var<double> enc = g.leaf(Tensor64(Shape{3}, {0.1, 0.2, 0.3}), true);
  Var<double> q = g.leaf(Tensor64(Shape{3}, {1.0, 2.0, 3.0}), true);
  Var<double> st = ops::straight_through(enc, q);
  EXPECT_EQ(st.value(), q.value());
  Var<double> loss = ops::sum(ops::square(st));
  Gradients<double> grads = g.backward(loss);
  EXPECT_EQ(grads.at(enc), grads.at(st));
  EXPECT_FALSE(grads.contains(q));
}

TEST(Ops, SigmoidStaysInsideOpenInterval) {
  Graph<float> g;
  Var<float> s = ops::sigmoid(g.constant(Tensor32(Shape{4}, {-200.f, -30.f, 30.f, 200.f})));
  for (float v : s.value().data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Ops, ForwardAndBackwardStayFinite) {
  std::mt19937_64 rng(2);
  Graph<float> g;
  Var<float> x = g.leaf(random_tensor<float>(Shape{16}, rng, -50, 50), true);
  Var<float> loss = ops::mean(ops::add(ops::sigmoid(x), ops::relu(x)));
  EXPECT_TRUE(loss.value().all_finite());
  EXPECT_TRUE(g.backward(loss).at(x).all_finite());
}

}  // namespace
}  // namespace leafae
