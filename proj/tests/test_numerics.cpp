#include "blex/error.hpp"
#include "blex/numerics/gradcheck.hpp"
#include "blex/numerics/ops.hpp"
#include "blex/numerics/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <unordered_map>

using namespace blex;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  return gaussian(rows, cols, 1.0, rng);
}

Mask row_mask(std::initializer_list<bool> allowed) {
  Mask m(1, static_cast<Eigen::Index>(allowed.size()));
  Eigen::Index c = 0;
  for (bool a : allowed) m(0, c++) = a;
  return m;
}

}  // namespace

TEST(Matmul, IdentityAndProjector) {
  Tensor eye(Matrix::Identity(2, 2));
  Tensor b(mat({{1, 2}, {3, 4}}));
  EXPECT_EQ(matmul(eye, b).value(), b.value());

  Tensor proj(mat({{1, 0}, {0, 0}}));
  Tensor c(mat({{5, 6}, {7, 8}}));
  EXPECT_EQ(matmul(proj, c).value(), mat({{5, 6}, {0, 0}}));
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  Rng rng(7);
  Tensor a = Tensor::parameter(random_matrix(3, 4, rng));
  Tensor b = Tensor::parameter(random_matrix(4, 2, rng));
  std::vector<Tensor> params{a, b};
  const double err = finite_difference_check([&] { return sum(matmul(a, b)); }, params);
  EXPECT_LT(err, 1e-6);

  // d sum(ab) / da = 1 b^T: every row equals the row sums of b.
  backward(sum(matmul(a, b)));
  Eigen::RowVectorXd expected = b.value().rowwise().sum().transpose();
  for (Eigen::Index r = 0; r < 3; ++r) EXPECT_TRUE(a.grad().row(r).isApprox(expected));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tensor a(Matrix::Zero(2, 3));
  Tensor b(Matrix::Zero(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("[2x3]"), std::string::npos);
    EXPECT_NE(what.find("[2x3]", what.find("[2x3]") + 1), std::string::npos);
  }
}

TEST(MaskedSoftmax, Examples) {
  auto uniform = masked_softmax(Tensor(mat({{0, 0, 0}})), row_mask({true, true, true}));
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(uniform.value()(0, c), 1.0 / 3.0, 1e-15);

  auto blocked = masked_softmax(Tensor(mat({{5, 1, 1}})), row_mask({false, true, true}));
  EXPECT_EQ(blocked.value()(0, 0), 0.0);
  EXPECT_NEAR(blocked.value()(0, 1), 0.5, 1e-15);
  EXPECT_NEAR(blocked.value()(0, 2), 0.5, 1e-15);

  auto large = masked_softmax(Tensor(mat({{1000, 999}})), row_mask({true, true}));
  const double e = std::exp(1.0);
  EXPECT_TRUE(large.value().allFinite());
  EXPECT_NEAR(large.value()(0, 0), e / (1 + e), 1e-12);
  EXPECT_NEAR(large.value()(0, 1), 1 / (1 + e), 1e-12);
  // Shift invariance.
  auto shifted = masked_softmax(Tensor(mat({{1, 0}})), row_mask({true, true}));
  EXPECT_NEAR((large.value() - shifted.value()).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(MaskedSoftmax, FullyMaskedRowIsRejected) {
  EXPECT_THROW(masked_softmax(Tensor(mat({{1, 2}})), row_mask({false, false})), InvalidMaskError);
}

TEST(MaskedSoftmax, RowsSumToOneAndMaskedEntriesGetNoGradient) {
  Rng rng(3);
  std::bernoulli_distribution coin(0.6);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index rows = 1 + trial % 4, cols = 2 + trial % 5;
    Mask allowed(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) allowed(r, c) = coin(rng);
      allowed(r, trial % cols) = true;
    }
    Tensor x = Tensor::parameter(random_matrix(rows, cols, rng) * 5.0);
    Tensor w(random_matrix(rows, cols, rng));
    Tensor p = masked_softmax(x, allowed);
    for (Eigen::Index r = 0; r < rows; ++r) {
      EXPECT_NEAR(p.value().row(r).sum(), 1.0, 1e-12);
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!allowed(r, c)) EXPECT_EQ(p.value()(r, c), 0.0);
      }
    }
    backward(sum(mul(p, w)));
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        if (!allowed(r, c)) EXPECT_EQ(x.grad()(r, c), 0.0);

    std::vector<Tensor> params{x};
    EXPECT_LT(finite_difference_check([&] { return sum(mul(masked_softmax(x, allowed), w)); }, params),
              1e-4);
  }
}

TEST(LayerNorm, Examples) {
  Tensor gain(Matrix::Ones(1, 3));
  Tensor bias(Matrix::Zero(1, 3));
  auto constant = layer_norm(Tensor(mat({{1, 1, 1}})), gain, bias);
  EXPECT_EQ(constant.value(), Matrix::Zero(1, 3));

  auto normalized = layer_norm(Tensor(mat({{-1, 1}})), Tensor(Matrix::Ones(1, 2)),
                               Tensor(Matrix::Zero(1, 2)));
  const double s = 1.0 / std::sqrt(1.0 + kLayerNormEpsilon);
  EXPECT_NEAR(normalized.value()(0, 0), -s, 1e-15);
  EXPECT_NEAR(normalized.value()(0, 1), s, 1e-15);
}

TEST(LayerNorm, RandomRowsHaveZeroMeanUnitVariance) {
  Rng rng(11);
  const Eigen::Index d = 16;
  Tensor x(random_matrix(8, d, rng) * 3.0);
  auto y = layer_norm(x, Tensor(Matrix::Ones(1, d)), Tensor(Matrix::Zero(1, d)));
  for (Eigen::Index r = 0; r < 8; ++r) {
    const double m = y.value().row(r).mean();
    const double var = (y.value().row(r).array() - m).square().mean();
    EXPECT_LT(std::abs(m), 1e-9);
    EXPECT_LT(std::abs(var - 1.0), 1e-5);
  }
}

TEST(CrossEntropy, Examples) {
  std::vector<int> zero{0};
  EXPECT_NEAR(cross_entropy_from_logits(Tensor(mat({{0, 0}})), zero).item(), std::log(2.0), 1e-15);
  const double confident = cross_entropy_from_logits(Tensor(mat({{1e3, -1e3}})), zero).item();
  EXPECT_TRUE(std::isfinite(confident));
  EXPECT_NEAR(confident, 0.0, 1e-12);
}

TEST(CrossEntropy, AgreesWithNaiveFormula) {
  Rng rng(5);
  std::uniform_int_distribution<int> cls(0, 2);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix logits = random_matrix(4, 3, rng);
    std::vector<int> targets(4);
    double naive = 0.0;
    for (int r = 0; r < 4; ++r) {
      targets[r] = cls(rng);
      double z = 0.0;
      for (int c = 0; c < 3; ++c) z += std::exp(logits(r, c));
      naive += -std::log(std::exp(logits(r, targets[r])) / z);
    }
    naive /= 4.0;
    EXPECT_NEAR(cross_entropy_from_logits(Tensor(logits), targets).item(), naive, 1e-10);
  }
}

TEST(CrossEntropy, TargetOutOfRange) {
  std::vector<int> bad{2};
  EXPECT_THROW(cross_entropy_from_logits(Tensor(mat({{0, 0}})), bad), IndexError);
}

TEST(Backward, AnalyticExamples) {
  Tensor x = Tensor::parameter(mat({{1, 2, 3}}), 1);
  backward(sum(x));
  EXPECT_EQ(x.grad(), Matrix::Ones(1, 3));

  Tensor y = Tensor::parameter(mat({{2, -3}}), 1);
  backward(sum(mul(y, y)));
  EXPECT_EQ(y.grad(), mat({{4, -6}}));
}

TEST(Backward, RejectsNonScalarAndSecondTraversal) {
  Tensor x = Tensor::parameter(mat({{1, 2}}));
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
  Tensor loss = sum(x);
  backward(loss);
  EXPECT_THROW(backward(loss), ContractError);
}

TEST(Backward, FanOutAccumulates) {
  Tensor x = Tensor::parameter(mat({{1.5}}));
  Tensor y = x + x;
  backward(sum(mul(y, x)));  // 2x^2 -> 4x
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 6.0);
}

TEST(Tape, OrderIsTopological) {
  Tensor a = Tensor::parameter(mat({{1, 2}}));
  Tensor b = Tensor::parameter(mat({{3, 4}}));
  Tensor c = mul(a + b, a);
  Tensor loss = sum(tanh(c));
  Tape tape = Tape::record(loss);
  std::unordered_map<const detail::Node*, std::size_t> pos;
  for (std::size_t i = 0; i < tape.nodes().size(); ++i) pos[tape.nodes()[i]] = i;
  for (const auto* node : tape.nodes())
    for (const auto& p : node->parents)
      if (p->requires_grad) EXPECT_LT(pos.at(p.get()), pos.at(node));
  EXPECT_EQ(tape.nodes().back(), loss.node().get());
}

// Every differentiable op on small random shapes.
TEST(GradientCheck, EveryOperation) {
  Rng rng(42);
  Tensor a = Tensor::parameter(random_matrix(3, 4, rng));
  Tensor b = Tensor::parameter(random_matrix(3, 4, rng));
  Tensor w = Tensor::parameter(random_matrix(4, 5, rng));
  Tensor bias = Tensor::parameter(random_matrix(1, 4, rng), 1);
  Tensor gain = Tensor::parameter(random_matrix(1, 4, rng), 1);
  Tensor table = Tensor::parameter(random_matrix(6, 4, rng));
  Tensor probe(random_matrix(3, 4, rng));
  std::vector<int> ids{5, 0, 5};
  std::vector<int> targets{1, 4, 0};

  const auto check = [&](const char* name, std::vector<Tensor> params, auto f) {
    const double err = finite_difference_check(f, params);
    EXPECT_LT(err, 1e-4) << name;
  };
  check("matmul", {a, w}, [&] { return sum(tanh(matmul(a, w))); });
  check("add/sub", {a, b}, [&] { return sum(mul(a + b, a - b)); });
  check("scale", {a}, [&] { return sum(mul(scale(a, -0.3), a)); });
  check("add_bias", {a, bias}, [&] { return sum(tanh(add_bias(a, bias))); });
  check("relu", {a}, [&] { return sum(mul(relu(a), probe)); });
  check("sigmoid", {a}, [&] { return sum(mul(sigmoid(a), probe)); });
  check("mean", {a}, [&] { return mean(mul(a, a)); });
  check("concat", {a, b}, [&] {
    std::vector<Tensor> cols{a, b};
    std::vector<Tensor> rows{a, b};
    return sum(tanh(concat_cols(cols))) + sum(mul(concat_rows(rows), concat_rows(rows)));
  });
  check("slice", {a}, [&] { return sum(mul(slice_rows(a, 1, 2), slice_cols(slice_rows(a, 0, 2), 0, 4))); });
  check("gather", {table}, [&] { return sum(mul(gather_rows(table, ids), probe)); });
  check("layer_norm", {a, gain, bias}, [&] { return sum(mul(layer_norm(a, gain, bias), probe)); });
  check("cross_entropy", {a, w}, [&] { return cross_entropy_from_logits(matmul(a, w), targets); });
  check("attention", {a, b}, [&] {
    Mask m = causal_mask(3);
    return sum(mul(multi_head_attention(a, b, tanh(b), 2, m), probe));
  });
  SparseMatrix s(2, 3);
  s.insert(0, 0) = 0.5;
  s.insert(0, 1) = 0.5;
  s.insert(1, 2) = 1.0;
  check("sparse_matmul", {a}, [&] { return sum(tanh(sparse_matmul(s, a))); });
}

TEST(GradientCheck, QuadraticFormIsExactToRoundoff) {
  Rng rng(1);
  Matrix q = random_matrix(4, 4, rng);
  Tensor sym(q * q.transpose());
  Tensor x = Tensor::parameter(random_matrix(1, 4, rng));
  std::vector<Tensor> params{x};
  EXPECT_LT(finite_difference_check([&] { return sum(mul(matmul(x, sym), x)); }, params), 1e-8);
}

TEST(GradientCheck, NoisyFunctionIsFlagged) {
  Rng rng(1);
  Tensor x = Tensor::parameter(random_matrix(1, 3, rng));
  std::vector<Tensor> params{x};
  auto noisy = [&] { return sum(x + Tensor(gaussian(1, 3, 0.1, rng))); };
  EXPECT_THROW(finite_difference_check(noisy, params), NonDeterministicError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::parameter(mat({{1.0}}));
  Adam adam({p}, AdamOptions{0.1, 0.9, 0.98, 1e-9});
  backward(sum(p));
  adam.step();
  // m_hat = v_hat = 1 after bias correction.
  EXPECT_NEAR(p.value()(0, 0), 1.0 - 0.1 / (1.0 + 1e-9), 1e-15);
  EXPECT_FALSE(p.has_grad());
}

TEST(Adam, ZeroGradientLeavesParameter) {
  Tensor p = Tensor::parameter(mat({{2.5}}));
  Adam adam({p});
  backward(sum(scale(p, 0.0)));
  adam.step();
  EXPECT_EQ(p.value()(0, 0), 2.5);
}

TEST(Adam, TwoStepsFollowRecurrence) {
  Tensor p = Tensor::parameter(mat({{0.0}}));
  const AdamOptions o{0.01, 0.9, 0.98, 1e-9};
  Adam adam({p}, o);
  const double g = 3.0;
  for (int i = 0; i < 2; ++i) {
    backward(sum(scale(p, g)));
    adam.step();
  }
  EXPECT_EQ(adam.step_count(), 2);
  // m1 = 0.3, m2 = 0.9*0.3 + 0.3 = 0.57; v1 = 0.18, v2 = 0.98*0.18 + 0.18 = 0.3564
  EXPECT_NEAR(adam.first_moment(0)(0, 0), 0.57, 1e-14);
  EXPECT_NEAR(adam.second_moment(0)(0, 0), 0.3564, 1e-14);
  // Constant gradient: each bias-corrected step is lr * g / |g|.
  EXPECT_NEAR(p.value()(0, 0), -0.02, 1e-9);
}

TEST(Adam, MissingGradientIsContractError) {
  Tensor p = Tensor::parameter(mat({{1.0}}));
  Adam adam({p});
  EXPECT_THROW(adam.step(), ContractError);
}

TEST(ClipGradNorm, RescalesToMaximum) {
  Tensor p = Tensor::parameter(mat({{3.0, 4.0}}));
  backward(sum(mul(p, p)));  // grad (6, 8), norm 10
  std::vector<Tensor> params{p};
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 5.0), 10.0);
  EXPECT_NEAR(p.grad().norm(), 5.0, 1e-12);
}
