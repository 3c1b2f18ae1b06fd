#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "pex/checkpoint.hpp"
#include "pex/numcore.hpp"

using namespace pex;

namespace
{

// Straight-line forward pass over plain arrays, independent of the Eigen code path.
std::vector<double> oracle_forward(const Mlp & m, std::vector<double> x)
{
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const auto & W = m.weights[l];
    const auto & b = m.biases[l];
    std::vector<double> y(static_cast<std::size_t>(W.rows()), 0.0);
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      double acc = b(r);
      for (Eigen::Index c = 0; c < W.cols(); ++c) {
        acc += W(r, c) * x[static_cast<std::size_t>(c)];
      }
      const bool hidden = l + 1 < m.num_layers();
      y[static_cast<std::size_t>(r)] = hidden ? std::max(0.0, acc) : acc;
    }
    x = std::move(y);
  }
  return x;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng & rng)
{
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.uniform(-1.0, 1.0);
  }
  return m;
}

}  // namespace

TEST(MlpForward, ZeroNetworkGivesZero)
{
  const Mlp m = Mlp::zeros({3, 5, 2});
  Rng rng(1);
  EXPECT_EQ(mlp_predict(m, random_matrix(3, 4, rng)), Matrix::Zero(2, 4));
}

TEST(MlpForward, IdentityLayer)
{
  Mlp m = Mlp::zeros({2, 2});
  m.weights[0] = Matrix::Identity(2, 2);
  Matrix x(2, 1);
  x << 1.0, -2.0;
  EXPECT_EQ(mlp_predict(m, x), x);
}

TEST(MlpForward, MatchesLoopOracle)
{
  Rng rng(7);
  const Mlp m = mlp_init({2, 16, 1}, rng);
  const std::vector<double> x{0.3, -0.7};
  Matrix xm(2, 1);
  xm << x[0], x[1];
  EXPECT_NEAR(mlp_predict(m, xm)(0, 0), oracle_forward(m, x)[0], 1e-12);
}

TEST(MlpForward, Deterministic)
{
  Rng rng(3);
  const Mlp m = mlp_init({4, 8, 8, 3}, rng);
  const Matrix x = random_matrix(4, 10, rng);
  EXPECT_EQ(mlp_predict(m, x), mlp_predict(m, x));
  EXPECT_EQ(mlp_forward(m, x).output, mlp_predict(m, x));
}

TEST(MlpForward, RejectsWrongInputSize)
{
  Rng rng(3);
  const Mlp m = mlp_init({4, 8, 1}, rng);
  EXPECT_THROW(mlp_forward(m, Matrix::Zero(3, 2)), ShapeError);
}

TEST(MlpInit, UniformFanInBound)
{
  Rng rng(11);
  const Mlp m = mlp_init({9, 25, 4}, rng);
  EXPECT_LE(m.weights[0].cwiseAbs().maxCoeff(), 1.0 / 3.0);
  EXPECT_LE(m.weights[1].cwiseAbs().maxCoeff(), 1.0 / 5.0);
  EXPECT_EQ(m.weights[0].rows(), 25);
  EXPECT_EQ(m.weights[0].cols(), 9);
  EXPECT_EQ(m.biases[1].size(), 4);
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGrads)
{
  Rng rng(5);
  const Mlp m = mlp_init({3, 8, 2}, rng);
  const auto f = mlp_forward(m, random_matrix(3, 6, rng));
  const auto g = mlp_backward(m, f.tape, Matrix::Zero(2, 6));
  EXPECT_EQ(max_abs(g.grads), 0.0);
}

TEST(MlpBackward, LinearLayerWeightGradIsInput)
{
  Mlp m = Mlp::zeros({3, 1});
  Matrix x(3, 1);
  x << 0.5, -1.5, 2.0;
  const auto f = mlp_forward(m, x);
  const auto g = mlp_backward(m, f.tape, Matrix::Ones(1, 1));
  EXPECT_EQ(Matrix(g.grads.weights[0].transpose()), x);
  EXPECT_EQ(g.grads.biases[0](0), 1.0);
}

TEST(MlpBackward, MatchesCentralDifferences)
{
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Mlp m = mlp_init({3, 8, 8, 1}, rng);
    const Matrix x = random_matrix(3, 5, rng);
    const Matrix up = random_matrix(1, 5, rng);
    // Independent finite differences of sum(output * up) per coordinate.
    const Vector theta = flatten(m);
    const auto f = mlp_forward(m, x);
    const Vector analytic = flatten(mlp_backward(m, f.tape, up).grads);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Vector p = theta;
      p(i) += 1e-5;
      const double hi = (mlp_predict(unflatten(p, m), x).array() * up.array()).sum();
      p(i) -= 2e-5;
      const double lo = (mlp_predict(unflatten(p, m), x).array() * up.array()).sum();
      const double numeric = (hi - lo) / 2e-5;
      const double denom = std::max({std::abs(numeric), std::abs(analytic(i)), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic(i)) / denom);
    }
    EXPECT_LT(worst, 1e-4) << "seed " << seed;
  }
}

TEST(MlpBackward, InputGradientMatchesFiniteDifferences)
{
  Rng rng(21);
  const Mlp m = mlp_init({4, 8, 1}, rng);
  Matrix x = random_matrix(4, 1, rng);
  const auto g = mlp_backward(m, mlp_forward(m, x).tape, Matrix::Ones(1, 1));
  for (Eigen::Index i = 0; i < 4; ++i) {
    Matrix a = x, b = x;
    a(i, 0) += 1e-6;
    b(i, 0) -= 1e-6;
    const double numeric = (mlp_predict(m, a)(0, 0) - mlp_predict(m, b)(0, 0)) / 2e-6;
    EXPECT_NEAR(g.input_grad(i, 0), numeric, 1e-7);
  }
}

TEST(MlpBackward, RejectsMismatchedTape)
{
  Rng rng(2);
  const Mlp a = mlp_init({3, 4, 1}, rng);
  const Mlp b = mlp_init({3, 5, 5, 1}, rng);
  const auto f = mlp_forward(a, random_matrix(3, 2, rng));
  EXPECT_THROW(mlp_backward(b, f.tape, Matrix::Ones(1, 2)), ShapeError);
}

TEST(Adam, ZeroGradientIsNoOpAndCountsStep)
{
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Mlp m = mlp_init({3, 4, 2}, rng);
    const Mlp before = m;
    AdamState st = AdamState::for_params(m);
    adam_step(m, m.zeros_like(), st, 1e-3);
    EXPECT_EQ(m, before);
    EXPECT_EQ(st.step_count, 1u);
  }
}

TEST(Adam, FirstStepBoundedByLearningRate)
{
  Vector w = Vector::Constant(1, 0.5);
  VectorAdamState st = VectorAdamState::for_size(1);
  adam_step(w, Vector::Constant(1, 3.7), st, 0.01);
  const double delta = w(0) - 0.5;
  EXPECT_LT(delta, 0.0);
  EXPECT_LE(std::abs(delta), 0.01 + 1e-9);
}

TEST(Adam, QuadraticConvergesLikeScalarRecursion)
{
  Vector w = Vector::Constant(1, 1.0);
  VectorAdamState st = VectorAdamState::for_size(1);
  // Independent scalar recursion.
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    adam_step(w, Vector::Constant(1, 2.0 * w(0)), st, 0.1);
    const double g = 2.0 * x;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  }
  EXPECT_LT(std::abs(w(0)), 0.1);
  EXPECT_NEAR(w(0), x, 1e-12);
}

TEST(Adam, RejectsNonFiniteGradientWithLayer)
{
  Rng rng(1);
  Mlp m = mlp_init({2, 3, 1}, rng);
  const Mlp before = m;
  AdamState st = AdamState::for_params(m);
  Mlp g = m.zeros_like();
  g.weights[1](0, 2) = std::nan("");
  try {
    adam_step(m, g, st, 1e-3);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError & e) {
    EXPECT_EQ(e.layer(), 1u);
  }
  EXPECT_EQ(m, before);
  EXPECT_EQ(st.step_count, 0u);
}

TEST(Adam, RejectsShapeMismatch)
{
  Rng rng(1);
  Mlp m = mlp_init({2, 3, 1}, rng);
  AdamState st = AdamState::for_params(m);
  EXPECT_THROW(adam_step(m, Mlp::zeros({2, 4, 1}), st, 1e-3), ShapeError);
}

TEST(SoftUpdate, FullSpeedCopies)
{
  Rng rng(4);
  Mlp t = mlp_init({3, 4, 1}, rng);
  const Mlp o = mlp_init({3, 4, 1}, rng);
  soft_update(t, o, 1.0);
  EXPECT_EQ(t, o);
}

TEST(SoftUpdate, EqualNetworksUnchanged)
{
  Rng rng(4);
  const Mlp o = mlp_init({3, 4, 1}, rng);
  Mlp t = o;
  soft_update(t, o, 5e-3);
  EXPECT_EQ(t, o);
}

TEST(SoftUpdate, ScalarTableValue)
{
  Mlp t = Mlp::zeros({1, 1});
  Mlp o = Mlp::zeros({1, 1});
  o.weights[0](0, 0) = 1.0;
  soft_update(t, o, 5e-3);
  EXPECT_NEAR(t.weights[0](0, 0), 0.005, 1e-12);
}

TEST(SoftUpdate, GeometricContraction)
{
  Rng rng(8);
  Mlp t = mlp_init({2, 3, 1}, rng);
  const Mlp o = mlp_init({2, 3, 1}, rng);
  const double s = 0.1;
  Vector gap = flatten(t) - flatten(o);
  for (int i = 0; i < 20; ++i) {
    soft_update(t, o, s);
    const Vector next = flatten(t) - flatten(o);
    for (Eigen::Index k = 0; k < gap.size(); ++k) {
      EXPECT_NEAR(next(k), (1.0 - s) * gap(k), 1e-12);
    }
    gap = next;
  }
}

TEST(SoftUpdate, RejectsBadArguments)
{
  Mlp t = Mlp::zeros({2, 1});
  EXPECT_THROW(soft_update(t, Mlp::zeros({3, 1}), 0.5), ShapeError);
  EXPECT_THROW(soft_update(t, Mlp::zeros({2, 1}), 0.0), std::invalid_argument);
  EXPECT_THROW(soft_update(t, Mlp::zeros({2, 1}), 1.5), std::invalid_argument);
}

TEST(GradCheck, QuadraticOnLinearNetIsTight)
{
  Rng rng(9);
  const Mlp m = mlp_init({3, 2}, rng);
  const Matrix x = random_matrix(3, 6, rng);
  const Matrix y = random_matrix(2, 6, rng);
  const double err = grad_check(
    [&](const Mlp & p) {
      const auto f = mlp_forward(p, x);
      const Matrix e = f.output - y;
      return std::make_pair(e.squaredNorm(), mlp_backward(p, f.tape, 2.0 * e).grads);
    }, m);
  EXPECT_LT(err, 1e-7);
}

TEST(GradCheck, WrongGradientIsDetected)
{
  Rng rng(9);
  const Mlp m = mlp_init({3, 2}, rng);
  const double err = grad_check(
    [&](const Mlp & p) {
      return std::make_pair(p.weights[0].squaredNorm(), p.zeros_like());
    }, m);
  EXPECT_GT(err, 0.5);
}

TEST(GradCheck, NonFiniteIsInfinite)
{
  const Mlp m = Mlp::zeros({1, 1});
  const double err = grad_check(
    [&](const Mlp & p) {return std::make_pair(std::nan(""), p.zeros_like());}, m);
  EXPECT_TRUE(std::isinf(err));
}

namespace
{

Checkpoint sample_checkpoint()
{
  Rng rng(21);
  Checkpoint c;
  c.add("q1", mlp_init({5, 8, 1}, rng));
  c.add("actor", mlp_init({3, 4, 4, 2}, rng));
  c.add("actor.log_std", Mlp::zeros({1, 2}));
  return c;
}

DataErrorCode checkpoint_error(const std::vector<std::uint8_t> & bytes)
{
  try {
    decode_checkpoint(bytes);
  } catch (const DataError & e) {
    return e.code();
  }
  ADD_FAILURE() << "corrupt checkpoint decoded";
  return DataErrorCode::Io;
}

}  // namespace

TEST(CheckpointFile, RoundTripIsBitExact)
{
  const Checkpoint c = sample_checkpoint();
  const auto bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back, c);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  ASSERT_EQ(back.networks.size(), 3u);
  EXPECT_EQ(back.networks[1].first, "actor");
  EXPECT_TRUE(back.contains("actor.log_std"));
  EXPECT_FALSE(back.contains("v"));
  EXPECT_THROW(back.get("v"), DataError);
}

TEST(CheckpointFile, FileRoundTrip)
{
  const auto path = std::filesystem::temp_directory_path() / "pex_test_checkpoint.pexc";
  save_checkpoint(sample_checkpoint(), path.string());
  EXPECT_EQ(load_checkpoint(path.string()), sample_checkpoint());
  std::filesystem::remove(path);
}

TEST(CheckpointFile, ExtremeValuesSurvive)
{
  Checkpoint c;
  Mlp m = Mlp::zeros({1, 3});
  m.weights[0](0, 0) = -0.0;
  m.weights[0](1, 0) = 5e-324;
  m.weights[0](2, 0) = 1.7976931348623157e308;
  c.add("", m);
  const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
  EXPECT_TRUE(std::signbit(back.networks[0].second.weights[0](0, 0)));
  EXPECT_EQ(back, c);
}

TEST(CheckpointFile, DistinctErrorCodes)
{
  const auto good = encode_checkpoint(sample_checkpoint());
  auto bad_magic = good;
  bad_magic[3] = 'D';
  EXPECT_EQ(checkpoint_error(bad_magic), DataErrorCode::BadMagic);
  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_EQ(checkpoint_error(bad_version), DataErrorCode::VersionMismatch);
  auto truncated = good;
  truncated.resize(good.size() / 2);
  EXPECT_EQ(checkpoint_error(truncated), DataErrorCode::Truncated);
  auto flipped = good;
  flipped[good.size() - 12] ^= 1;
  EXPECT_EQ(checkpoint_error(flipped), DataErrorCode::ChecksumMismatch);
  EXPECT_EQ(checkpoint_error({}), DataErrorCode::BadMagic);
}

TEST(CheckpointFile, EverySingleByteCorruptionDetected)
{
  const auto good = encode_checkpoint(sample_checkpoint());
  for (std::size_t i = 0; i < good.size(); ++i) {
    auto bad = good;
    bad[i] ^= 0x5a;
    EXPECT_THROW(decode_checkpoint(bad), DataError) << "byte " << i;
  }
}

TEST(CheckpointFile, MissingFileIsIoError)
{
  try {
    load_checkpoint("/nonexistent/dir/x.pexc");
    FAIL();
  } catch (const DataError & e) {
    EXPECT_EQ(e.code(), DataErrorCode::Io);
  }
}
