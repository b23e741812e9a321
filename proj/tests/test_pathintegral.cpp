#include <gtest/gtest.h>

#include <numbers>

#include "hhlab/pathintegral.hpp"

using namespace hhlab;

namespace {

// Normalized Hermite functions by the three-term recurrence.
std::vector<double> hermite_functions(double x, int n, double w) {
  const double y = std::sqrt(w) * x;
  std::vector<double> h(std::size_t(n + 1));
  h[0] = std::pow(w / std::numbers::pi, 0.25) * std::exp(-0.5 * y * y);
  if (n > 0) h[1] = std::sqrt(2.0) * y * h[0];
  for (int k = 2; k <= n; ++k) h[std::size_t(k)] = std::sqrt(2.0 / k) * y * h[std::size_t(k - 1)] - std::sqrt((k - 1.0) / k) * h[std::size_t(k - 2)];
  return h;
}

// Spectral sum of exp(-beta (1/2 p^2 + 1/2 w^2 q^2)).
double oscillator_kernel(double x, double y, double beta, double w) {
  const int n = 300;
  auto hx = hermite_functions(x, n, w), hy = hermite_functions(y, n, w);
  double s = 0;
  for (int k = 0; k <= n; ++k) s += std::exp(-beta * w * (k + 0.5)) * hx[std::size_t(k)] * hy[std::size_t(k)];
  return s;
}

Eigen::MatrixXcd random_matrix(Index d, CounterRng& rng, double scale = 1.0) {
  Eigen::MatrixXcd a(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = scale * rng.complex_normal();
  return a;
}

CouplingMatrices one_site(double g0) {
  return evaluate(build_general(1, {}), {Coupling::zero(), Coupling::on_site(1.0), Coupling::on_site(g0), 1.0});
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(Index(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(Bridge, EndpointsAreZero) {
  CounterRng rng(1, 0);
  for (int s = 0; s < 10; ++s) {
    auto a = sample_bridge(3, 16, rng);
    EXPECT_EQ(a.row(0).norm(), 0.0);
    EXPECT_EQ(a.row(16).norm(), 0.0);
    auto r = refine_bridge(a, rng);
    EXPECT_EQ(r.rows(), 33);
    for (int k = 0; k <= 16; ++k) EXPECT_EQ((r.row(2 * k) - a.row(k)).norm(), 0.0);
  }
}

// Cov(alpha_x(s), alpha_y(t)) = delta_xy min(s,t) (1 - max(s,t)), within 3 standard errors.
TEST(Bridge, CovarianceMatchesFormula) {
  const int n = 100000, steps = 4;
  CounterRng rng(2024, 0);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(3, 3), sq = Eigen::MatrixXd::Zero(3, 3);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(3, 3), cross_sq = Eigen::MatrixXd::Zero(3, 3);
  for (int s = 0; s < n; ++s) {
    auto a = sample_bridge(2, steps, rng);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double p = a(i + 1, 0) * a(j + 1, 0), q = a(i + 1, 0) * a(j + 1, 1);
        sum(i, j) += p;
        sq(i, j) += p * p;
        cross(i, j) += q;
        cross_sq(i, j) += q * q;
      }
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.25 * (i + 1), t = 0.25 * (j + 1);
      double expect = std::min(s, t) * (1 - std::max(s, t));
      double mean = sum(i, j) / n, se = std::sqrt((sq(i, j) / n - mean * mean) / n);
      EXPECT_LT(std::abs(mean - expect), 3 * se) << s << " " << t;
      double cm = cross(i, j) / n, cse = std::sqrt((cross_sq(i, j) / n - cm * cm) / n);
      EXPECT_LT(std::abs(cm), 3 * cse);
    }
}

TEST(Bridge, RefinedMidpointVariance) {
  const int n = 100000;
  CounterRng rng(7, 0);
  double sum = 0, sq = 0;
  for (int s = 0; s < n; ++s) {
    auto a = refine_bridge(sample_bridge(1, 4, rng), rng);
    double v = a(1, 0) * a(1, 0);  // alpha(1/8)
    sum += v;
    sq += v * v;
  }
  double mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_LT(std::abs(mean - 0.125 * 0.875), 3 * se);
}

TEST(Bridge, PathInterpolatesEndpoints) {
  CounterRng rng(3, 0);
  auto a = sample_bridge(2, 8, rng);
  auto p = make_path(a, vec({0.5, -1.0}), vec({1.5, 0.25}), 0.7);
  EXPECT_LT((p.values.row(0).transpose() - vec({0.5, -1.0})).norm(), 1e-15);
  EXPECT_LT((p.values.row(8).transpose() - vec({1.5, 0.25})).norm(), 1e-15);
  EXPECT_NEAR(p.times.back(), 0.7, 1e-15);
  EXPECT_THROW(make_path(a, vec({0.0}), vec({0.0}), 0.7), Error);
}

// Riemann sum of P_beta over phi' in two dimensions.
TEST(FreeKernel, NormalizedInTwoDimensions) {
  const double beta = 0.4, h = 0.02;
  double total = 0;
  for (double x = -6; x <= 6; x += h)
    for (double y = -6; y <= 6; y += h) total += free_kernel(vec({0.3, -0.2}), vec({x, y}), beta) * h * h;
  EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(ProductIntegral, ConstantPathIsTheExponential) {
  CounterRng rng(4, 0);
  Eigen::MatrixXcd a = random_matrix(3, rng, 0.5);
  Eigen::MatrixXcd exact = expm(Eigen::MatrixXcd(0.8 * a));
  for (int n : {1, 3, 17}) {
    std::vector<Eigen::MatrixXcd> vals(std::size_t(n), a);
    std::vector<double> steps(std::size_t(n), 0.8 / n);
    EXPECT_LT((product_integral(vals, steps).value - exact).norm(), 1e-12);
  }
}

TEST(ProductIntegral, CommutingFamily) {
  CounterRng rng(5, 0);
  Eigen::MatrixXcd a0 = random_matrix(3, rng, 0.5);
  auto path = [&](double s) { return Eigen::MatrixXcd((1.0 + std::sin(3 * s)) * a0); };
  const double a = 1.2;
  const double integral = a + (1 - std::cos(3 * a)) / 3;
  auto r = product_integral(path, a);
  EXPECT_LT((r.value - expm(Eigen::MatrixXcd(integral * a0))).norm(), 1e-7);
}

TEST(ProductIntegral, ZeroPathIsIdentity) {
  auto r = product_integral([](double) { return Eigen::MatrixXcd(Eigen::MatrixXcd::Zero(2, 2)); }, 1.0);
  EXPECT_EQ((r.value - Eigen::MatrixXcd::Identity(2, 2)).norm(), 0.0);
}

// Earliest time on the left.
TEST(ProductIntegral, PiecewiseConstantIsTheOrderedProduct) {
  CounterRng rng(6, 0);
  Eigen::MatrixXcd a1 = random_matrix(3, rng), a2 = random_matrix(3, rng);
  auto r = product_integral(std::vector<Eigen::MatrixXcd>{a1, a2}, std::vector<double>{0.3, 0.2});
  Eigen::MatrixXcd expect = expm(Eigen::MatrixXcd(0.3 * a1)) * expm(Eigen::MatrixXcd(0.2 * a2));
  EXPECT_LT((r.value - expect).norm(), 1e-12);
  EXPECT_GT((r.value - expm(Eigen::MatrixXcd(0.2 * a2)) * expm(Eigen::MatrixXcd(0.3 * a1))).norm(), 1e-3);
}

TEST(ProductIntegral, BadPartitionRejected) {
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Identity(2, 2);
  using Values = std::vector<Eigen::MatrixXcd>;
  EXPECT_THROW(product_integral(Values{a}, std::vector<double>{-0.1}), Error);
  EXPECT_THROW(product_integral(Values{a, a}, std::vector<double>{0.1}), Error);
}

TEST(ProductIntegral, BoundHoldsOnRandomSmoothPaths) {
  auto r = product_bound_check(100, 3, 1.0, 99);
  EXPECT_EQ(r.violations, 0);
  EXPECT_GT(r.worst_margin, 0.0);
  EXPECT_GT(r.max_lhs, 0.0);
}

TEST(Mehler, MatchesSpectralSum) {
  for (double beta : {0.3, 1.0, 2.5})
    for (double w : {0.7, 1.0, 1.8})
      for (auto [x, y] : std::vector<std::pair<double, double>>{{0, 0}, {0.5, -0.3}, {1.2, 1.0}})
        EXPECT_NEAR(mehler_kernel(x, y, beta, w), oscillator_kernel(x, y, beta, w), 1e-10);
}

TEST(FkKernel, NoHoppingMatchesMehler) {
  auto c = one_site(0.3);
  auto sec = SectorSpec::from_two_m(1, -1);
  KernelOptions opt;
  opt.samples = 20000;
  opt.steps = 32;
  opt.refine = false;
  for (auto [a, b] : std::vector<std::pair<double, double>>{{0.0, 0.0}, {0.5, -0.25}}) {
    auto e = fk_kernel_estimate(c, sec, vec({a}), vec({b}), 0.5, opt);
    auto m = mehler_oracle(c, sec, vec({a}), vec({b}), 0.5);
    EXPECT_LT(e.max_z(m), 4.0) << a << " " << b;
  }
}

TEST(FkKernel, OneSiteMatchesGridKernel) {
  auto c = one_site(0.3);
  auto sec = SectorSpec::from_two_m(1, -1);
  KernelOptions opt;
  opt.samples = 20000;
  opt.steps = 32;
  auto r = fk_check(c, sec, {{vec({0.0}), vec({0.0})}, {vec({0.5}), vec({0.0})}}, 0.5, QGrid(1, 201, 5.0), opt);
  EXPECT_TRUE(r.has_mehler);
  EXPECT_LT(r.max_z_grid, 4.0);
  EXPECT_LT(r.max_z_mehler, 4.0);
  for (const auto& row : r.rows) EXPECT_LT((row.grid_extrapolated - *row.mehler).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(FkKernel, TwoSiteHoppingMatchesGridKernel) {
  auto c = evaluate(build_hypercubic(1, 1), {Coupling::bond(1.0), Coupling::on_site(1.0), Coupling::on_site(0.3), 1.0});
  KernelOptions opt;
  opt.samples = 4000;
  opt.steps = 32;
  opt.refine = false;
  auto r = fk_check(c, SectorSpec::from_two_m(2, 0), {{vec({0.0, 0.0}), vec({0.0, 0.0})}}, 0.5, QGrid(2, 49, 4.8), opt);
  EXPECT_FALSE(r.has_mehler);
  EXPECT_LT(r.max_z_grid, 4.0);
}

// Two independent streams agree within their combined standard error.
TEST(FkKernel, IndependentStreamsAgree) {
  auto c = evaluate(build_hypercubic(1, 1), {Coupling::bond(1.0), Coupling::on_site(1.0), Coupling::on_site(0.3), 1.0});
  auto sec = SectorSpec::from_two_m(2, 0);
  KernelOptions opt;
  opt.samples = 3000;
  opt.steps = 16;
  opt.refine = false;
  auto a = fk_kernel_estimate(c, sec, vec({0.0, 0.0}), vec({0.3, 0.0}), 0.5, opt);
  opt.stream = 5;
  auto b = fk_kernel_estimate(c, sec, vec({0.0, 0.0}), vec({0.3, 0.0}), 0.5, opt);
  for (Index i = 0; i < a.mean.rows(); ++i)
    for (Index j = 0; j < a.mean.cols(); ++j) {
      double se = std::hypot(a.stderr_re(i, j), b.stderr_re(i, j));
      EXPECT_LE(std::abs(a.mean(i, j).real() - b.mean(i, j).real()), 4 * se + 1e-14);
    }
  opt.stream = 0;
  auto again = fk_kernel_estimate(c, sec, vec({0.0, 0.0}), vec({0.3, 0.0}), 0.5, opt);
  EXPECT_EQ((again.mean - a.mean).norm(), 0.0);
}

TEST(FkKernel, ShortTimeConcentrates) {
  auto c = one_site(0.3);
  auto sec = SectorSpec::from_two_m(1, -1);
  KernelOptions opt;
  opt.samples = 200;
  opt.steps = 8;
  opt.refine = false;
  auto near = fk_kernel_estimate(c, sec, vec({0.0}), vec({0.0}), 0.02, opt);
  auto far = fk_kernel_estimate(c, sec, vec({0.0}), vec({1.0}), 0.02, opt);
  EXPECT_GT(near.mean.norm(), 1e6 * far.mean.norm());
}

TEST(FkKernel, OffGridPointRejected) {
  QGrid grid(1, 11, 5.0);
  EXPECT_EQ(grid_index(grid, vec({0.0})), 5);
  EXPECT_THROW(grid_index(grid, vec({0.3})), Error);
  EXPECT_THROW(grid_index(grid, vec({6.0})), Error);
}
