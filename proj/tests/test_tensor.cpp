#include <gtest/gtest.h>

#include <cmath>

#include "gcav/optim.hpp"
#include "gcav/tensor.hpp"
#include "test_util.hpp"

using namespace gcav;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> d(shape_numel(shape));
  for (double& x : d) x = rng.uniform(-scale, scale);
  return Tensor::from(std::move(d), std::move(shape));
}

}  // namespace

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Rng rng(7);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor eye = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Tensor y = matmul(eye, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}

TEST(Matmul, ZeroFactorGivesZero) {
  Tensor a = Tensor::from({1, 2, 3, 4}, {2, 2});
  Tensor z = Tensor::zeros({2, 2});
  Tensor y = matmul(a, z);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(11);
  Tensor a = random_tensor({4, 3}, rng);
  Tensor b = random_tensor({3, 2}, rng);
  Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 3; ++k) acc += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), acc, 1e-12);
    }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
  }
}

TEST(Matmul, AssociativityWithIdentityAndDistributivity) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({3, 3}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    Tensor c = random_tensor({3, 3}, rng);
    Tensor left = matmul(matmul(a, b), c);
    Tensor right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i)
      EXPECT_NEAR(left.data()[i], right.data()[i], 1e-10);
    Tensor dist_l = matmul(a, add(b, c));
    Tensor dist_r = add(matmul(a, b), matmul(a, c));
    for (std::size_t i = 0; i < dist_l.size(); ++i)
      EXPECT_NEAR(dist_l.data()[i], dist_r.data()[i], 1e-10);
  }
}

TEST(Relu, SplitsOnSign) {
  Tensor x = Tensor::from({-1.0, 0.0, 2.0}, {3});
  Tensor y = relu(x);
  EXPECT_EQ(y.data()[0], 0.0);
  EXPECT_EQ(y.data()[1], 0.0);
  EXPECT_EQ(y.data()[2], 2.0);
}

TEST(Relu, AllNegativeGivesAllZero) {
  Tensor x = Tensor::from({-3.0, -0.5, -1e9}, {3});
  Tensor y = relu(x);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Relu, GradientMatchesFiniteDifferences) {
  Tensor x = Tensor::from({-1.0, 2.0}, {2});
  x.set_requires_grad(true);
  x.zero_grad();
  backward(sum(relu(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
  auto forward = [&] { return sum(relu(x)).value(); };
  EXPECT_NEAR(test::numeric_grad(forward, &x.data()[1], 1e-6), 1.0, 1e-6);
}

TEST(Backward, SumOfMatrixGivesOnes) {
  Tensor w = Tensor::zeros({2, 2});
  w.set_requires_grad(true);
  w.zero_grad();
  backward(sum(w));
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, QuadraticMatchesFiniteDifferences) {
  Rng rng(3);
  Tensor w = random_tensor({3, 3}, rng);
  w.set_requires_grad(true);
  Tensor x = random_tensor({3, 1}, rng);
  auto loss_fn = [&] { return sum(square(matmul(w, x))); };
  w.zero_grad();
  backward(loss_fn());
  ParamList params{{"w", w}};
  auto forward = [&] { return loss_fn().value(); };
  EXPECT_LT(test::max_grad_rel_err(params, forward), 1e-4);
}

TEST(Backward, DetachedBranchGetsZeroGrad) {
  Tensor w = Tensor::from({2.0, 3.0}, {2});
  w.set_requires_grad(true);
  w.zero_grad();
  Tensor joined = add(w, w.detach());
  backward(sum(joined));
  EXPECT_EQ(w.grad()[0], 1.0);  // only the attached branch contributes
  EXPECT_EQ(w.grad()[1], 1.0);

  Tensor untouched = Tensor::from({5.0}, {1});
  untouched.set_requires_grad(true);
  untouched.zero_grad();
  backward(sum(mul_scalar(w, 2.0)));
  EXPECT_EQ(untouched.grad()[0], 0.0);  // unreachable parameter keeps zero grad
}

TEST(Backward, NonScalarLossIsRejected) {
  Tensor w = Tensor::zeros({2, 2});
  w.set_requires_grad(true);
  EXPECT_THROW(backward(relu(w)), ContractViolation);
}

TEST(GradientSuite, PrimitivesAndTwoLayerCompositions) {
  // every differentiable primitive plus random two-layer stacks, 100 seeds
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2, 3}, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    ParamList params{{"a", a}, {"b", b}};

    std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
        {"add", [&] { return sum(add(a, b)); }},
        {"sub", [&] { return sum(square(sub(a, b))); }},
        {"mul", [&] { return sum(mul(a, b)); }},
        {"tanh", [&] { return sum(vtanh(a)); }},
        {"exp", [&] { return sum(vexp(mul_scalar(a, 0.3))); }},
        {"square", [&] { return sum(square(a)); }},
        {"mean", [&] { return mean(mul(a, b)); }},
        {"minimum", [&] { return sum(minimum(a, b)); }},
        {"log_softmax", [&] { return sum(mul(log_softmax(a), b)); }},
        {"mean_cols", [&] { return sum(mul(mean_cols(a), mean_cols(b))); }},
        {"mean_rows", [&] { return sum(square(mean_rows(a))); }},
        {"concat", [&] { return sum(square(concat_cols(a, b))); }},
    };
    for (auto& [name, fn] : cases) {
      zero_grads(params);
      backward(fn());
      auto forward = [&] { return fn().value(); };
      EXPECT_LT(test::max_grad_rel_err(params, forward), 1e-4) << name << " seed " << seed;
    }

    // two-layer composition: relu(x W1) W2 with a quadratic head
    Tensor x = random_tensor({4, 3}, rng);
    Tensor w1 = random_tensor({3, 5}, rng);
    Tensor w2 = random_tensor({5, 2}, rng);
    w1.set_requires_grad(true);
    w2.set_requires_grad(true);
    auto net = [&] { return mean(square(matmul(relu(matmul(x, w1)), w2))); };
    // keep pre-activations away from the relu kink so the FD probe is clean
    bool safe = true;
    {
      Tensor pre = matmul(x, w1);
      for (double v : pre.data())
        if (std::abs(v) < 1e-3) safe = false;
    }
    if (!safe) continue;
    ParamList net_params{{"w1", w1}, {"w2", w2}};
    zero_grads(net_params);
    backward(net());
    auto forward = [&] { return net().value(); };
    EXPECT_LT(test::max_grad_rel_err(net_params, forward), 1e-4) << "composition seed " << seed;
  }
}

TEST(Ops, ClampAndGatherAndSelect) {
  Tensor x = Tensor::from({-2.0, 0.5, 3.0}, {3});
  Tensor y = clamp(x, -1.0, 1.0);
  EXPECT_EQ(y.data()[0], -1.0);
  EXPECT_EQ(y.data()[1], 0.5);
  EXPECT_EQ(y.data()[2], 1.0);

  Tensor q = Tensor::from({1, 2, 3, 4, 5, 6}, {2, 3});
  Tensor picked = gather_rows(q, {2, 0});
  EXPECT_EQ(picked.data()[0], 3.0);
  EXPECT_EQ(picked.data()[1], 4.0);

  Tensor rows = select_rows(q, {1});
  EXPECT_EQ(rows.rows(), 1u);
  EXPECT_EQ(rows.at(0, 2), 6.0);
}

TEST(Ops, LogSoftmaxRowsSumToOne) {
  Rng rng(5);
  Tensor logits = random_tensor({4, 3}, rng, 3.0);
  Tensor lsm = log_softmax(logits);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 3; ++c) total += std::exp(lsm.at(r, c));
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Optimizer, SgdStepMatchesHandArithmetic) {
  Tensor p = Tensor::scalar(1.0);
  p.set_requires_grad(true);
  p.grad()[0] = 2.0;
  ParamList params{{"p", p}};
  Optimizer opt(OptimizerKind::kSgd, 0.1, params);
  opt.step(params);
  EXPECT_DOUBLE_EQ(p.value(), 0.8);
  EXPECT_EQ(opt.step_count(), 1);
}

TEST(Optimizer, ZeroGradientLeavesParameterUnchanged) {
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    Tensor p = Tensor::scalar(1.5);
    p.set_requires_grad(true);
    p.zero_grad();
    ParamList params{{"p", p}};
    Optimizer opt(kind, 0.1, params);
    opt.step(params);
    EXPECT_DOUBLE_EQ(p.value(), 1.5);
  }
}

TEST(Optimizer, AdamFirstStepIsApproximatelyLearningRate) {
  Tensor p = Tensor::scalar(1.0);
  p.set_requires_grad(true);
  p.grad()[0] = 1.0;
  ParamList params{{"p", p}};
  const double lr = 0.01;
  Optimizer opt(OptimizerKind::kAdam, lr, params);
  opt.step(params);
  // bias correction makes the first step lr * g/(|g| + eps)
  EXPECT_NEAR(1.0 - p.value(), lr, 1e-6);
}

TEST(Optimizer, MissingGradientNamesParameter) {
  Tensor p = Tensor::scalar(1.0);
  p.set_requires_grad(true);
  ParamList params{{"theta", p}};
  Optimizer opt(OptimizerKind::kSgd, 0.1, params);
  try {
    opt.step(params);
    FAIL() << "expected ContractViolation";
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("theta"), std::string::npos);
  }
}

TEST(Optimizer, DeterministicTrajectories) {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor w = Tensor::glorot(4, 4, rng);
    ParamList params{{"w", w}};
    Optimizer opt(OptimizerKind::kAdam, 1e-2, params);
    Rng grads(seed + 1);
    for (int i = 0; i < 50; ++i) {
      zero_grads(params);
      Tensor x = random_tensor({4, 4}, grads);
      backward(mean(square(matmul(w, x))));
      clip_grad_norm(params, 10.0);
      opt.step(params);
    }
    return w.data();
  };
  const auto a = run(42);
  const auto b = run(42);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);  // bitwise
}

TEST(Tensor, InvariantShapeMatchesData) {
  EXPECT_THROW(Tensor::from({1.0, 2.0}, {3}), ShapeError);
  Tensor t = Tensor::zeros({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(shape_numel(t.shape()), t.size());
}

TEST(Tensor, GradClipScalesGlobalNorm) {
  Tensor a = Tensor::from({3.0}, {1});
  Tensor b = Tensor::from({4.0}, {1});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  a.grad()[0] = 3.0;
  b.grad()[0] = 4.0;
  ParamList params{{"a", a}, {"b", b}};
  const double norm = clip_grad_norm(params, 1.0);
  EXPECT_DOUBLE_EQ(norm, 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-12);
}
