#ifndef HHLAB_PATHINTEGRAL_HPP
#define HHLAB_PATHINTEGRAL_HPP

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <vector>

#include "hhlab/cone.hpp"
#include "hhlab/linalg.hpp"
#include "hhlab/model.hpp"
#include "hhlab/rng.hpp"

namespace hhlab {

// --- Brownian bridge ---------------------------------------------------------------

/// Standard bridge on [0,1] at s_k = k/K; row k holds alpha(s_k) for every site.
/// Built from a random walk W by alpha = W - s W(1), which is exact at the nodes.
inline Eigen::MatrixXd sample_bridge(int sites, int steps, CounterRng& rng) {
  require(steps >= 2, ErrorCode::kInvalidArgument, "bridge needs at least two steps");
  require(sites >= 1, ErrorCode::kInvalidArgument, "bridge needs at least one coordinate");
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(steps + 1, sites);
  const double sd = std::sqrt(1.0 / steps);
  for (int k = 1; k <= steps; ++k)
    for (int x = 0; x < sites; ++x) w(k, x) = w(k - 1, x) + sd * rng.normal();
  Eigen::MatrixXd alpha(steps + 1, sites);
  for (int k = 0; k <= steps; ++k) alpha.row(k) = w.row(k) - (double(k) / steps) * w.row(steps);
  alpha.row(0).setZero();
  alpha.row(steps).setZero();
  return alpha;
}

/// Halves the time step of a bridge by sampling every midpoint from its conditional law
/// (mean of the neighbours, variance dt/4). The coarse nodes are kept.
inline Eigen::MatrixXd refine_bridge(const Eigen::MatrixXd& alpha, CounterRng& rng) {
  const Index steps = alpha.rows() - 1;
  const double sd = std::sqrt(0.25 / double(steps));
  Eigen::MatrixXd out(2 * steps + 1, alpha.cols());
  for (Index k = 0; k <= steps; ++k) out.row(2 * k) = alpha.row(k);
  for (Index k = 0; k < steps; ++k)
    for (Index x = 0; x < alpha.cols(); ++x)
      out(2 * k + 1, x) = 0.5 * (alpha(k, x) + alpha(k + 1, x)) + sd * rng.normal();
  return out;
}

struct BridgePath {
  double beta = 0.0;
  std::vector<double> times;  ///< s_k = beta k / K
  Eigen::MatrixXd values;     ///< row k is omega(s_k)
  Eigen::VectorXd phi;
  Eigen::VectorXd phi_prime;

  int steps() const { return int(values.rows()) - 1; }
};

/// omega(s) = (1 - s/beta) phi + (s/beta) phi' + sqrt(beta) alpha(s/beta).
inline BridgePath make_path(const Eigen::MatrixXd& alpha, const Eigen::VectorXd& phi, const Eigen::VectorXd& phi_prime,
                            double beta) {
  require(beta > 0, ErrorCode::kInvalidArgument, "beta must be positive");
  require(phi.size() == alpha.cols() && phi_prime.size() == alpha.cols(), ErrorCode::kBasisMismatch,
          "endpoints do not match the bridge dimension");
  BridgePath p;
  p.beta = beta;
  p.phi = phi;
  p.phi_prime = phi_prime;
  const Index steps = alpha.rows() - 1;
  p.values.resize(alpha.rows(), alpha.cols());
  const double sb = std::sqrt(beta);
  for (Index k = 0; k <= steps; ++k) {
    const double s = double(k) / double(steps);
    p.times.push_back(beta * s);
    p.values.row(k) = (1.0 - s) * phi.transpose() + s * phi_prime.transpose() + sb * alpha.row(k);
  }
  return p;
}

/// P_beta(phi, phi') = (2 pi beta)^{-|L|/2} exp(-|phi - phi'|^2 / (2 beta)).
inline double free_kernel(const Eigen::VectorXd& phi, const Eigen::VectorXd& phi_prime, double beta) {
  const double n = double(phi.size());
  return std::pow(2.0 * std::numbers::pi * beta, -0.5 * n) * std::exp(-(phi - phi_prime).squaredNorm() / (2.0 * beta));
}

/// Trapezoid rule for int_0^beta V(omega(s)) ds with V = 1/2 sum omega0^2 q^2 - omega0 |L| / 2.
inline double potential_integral(const BridgePath& p, double omega0) {
  const int steps = p.steps();
  const double dt = p.beta / steps;
  const double shift = 0.5 * omega0 * double(p.values.cols());
  double acc = 0;
  for (int k = 0; k <= steps; ++k) {
    double v = 0.5 * omega0 * omega0 * p.values.row(k).squaredNorm() - shift;
    acc += (k == 0 || k == steps ? 0.5 : 1.0) * v;
  }
  return acc * dt;
}

// --- strong product integration --------------------------------------------------------

inline double operator_norm(const Eigen::MatrixXcd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a);
  return svd.singularValues()(0);
}

struct ProductIntegralResult {
  Eigen::MatrixXcd value;
  double mesh = 0.0;
  int intervals = 0;
  int refinements = 0;
  Eigen::MatrixXcd integral;  ///< sum A_j ds_j over the same partition
  double norm_integral = 0.0; ///< sum ||A_j|| ds_j over the same partition
  double change = 0.0;        ///< ||P_n - P_{n/2}|| at the last refinement
};

/// Ordered product e^{A_1 ds_1} e^{A_2 ds_2} ..., earliest time on the left.
inline ProductIntegralResult product_integral(const std::vector<Eigen::MatrixXcd>& values,
                                              const std::vector<double>& steps) {
  require(!values.empty() && values.size() == steps.size(), ErrorCode::kInvalidArgument,
          "product integral needs one step per value");
  const Index d = values.front().rows();
  ProductIntegralResult r;
  r.value = Eigen::MatrixXcd::Identity(d, d);
  r.integral = Eigen::MatrixXcd::Zero(d, d);
  for (std::size_t j = 0; j < values.size(); ++j) {
    require(values[j].rows() == d && values[j].cols() == d, ErrorCode::kBasisMismatch, "path values change shape");
    require(steps[j] >= 0, ErrorCode::kInvalidArgument, "partition must be increasing");
    r.value = r.value * expm(Eigen::MatrixXcd(steps[j] * values[j]));
    r.integral += steps[j] * values[j];
    r.norm_integral += steps[j] * operator_norm(values[j]);
    r.mesh = std::max(r.mesh, steps[j]);
  }
  r.intervals = int(values.size());
  return r;
}

struct ProductIntegralOptions {
  int initial = 16;
  int max_refinements = 12;
  double tol = 1e-8;
};

/// Product integral of a continuous path on [0, a] with uniform partitions, A evaluated at
/// interval midpoints. Doubles the partition until successive values agree.
inline ProductIntegralResult product_integral(const std::function<Eigen::MatrixXcd(double)>& path, double a,
                                              const ProductIntegralOptions& opt = {}) {
  require(a > 0, ErrorCode::kInvalidArgument, "interval length must be positive");
  auto at = [&](int n) {
    std::vector<Eigen::MatrixXcd> vals;
    std::vector<double> steps(std::size_t(n), a / n);
    for (int j = 0; j < n; ++j) vals.push_back(path(a * (j + 0.5) / n));
    return product_integral(vals, steps);
  };
  int n = std::max(1, opt.initial);
  ProductIntegralResult prev = at(n);
  for (int level = 1; level <= opt.max_refinements; ++level) {
    n *= 2;
    ProductIntegralResult next = at(n);
    next.change = operator_norm(next.value - prev.value);
    next.refinements = level;
    if (next.change < opt.tol * std::max(1.0, operator_norm(next.value))) return next;
    prev = std::move(next);
  }
  throw Error(ErrorCode::kNoRefinementConvergence,
              "product integral did not settle after " + std::to_string(opt.max_refinements) +
                  " refinements (last change " + std::to_string(prev.change) + ")");
}

/// ||P - 1 - int A|| <= e^{int ||A||} - 1 - int ||A||, evaluated on the partition of r.
struct ProductBound {
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  ///< floating-point allowance
  bool holds = false;
};

inline ProductBound product_bound(const ProductIntegralResult& r) {
  ProductBound b;
  const Index d = r.value.rows();
  b.lhs = operator_norm(r.value - Eigen::MatrixXcd::Identity(d, d) - r.integral);
  const double n = r.norm_integral;
  b.rhs = std::expm1(n) - n;
  b.slack = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::exp(n)) * double(std::max(1, r.intervals));
  b.holds = b.lhs <= b.rhs + b.slack;
  return b;
}

/// A(s) = C0 + C1 sin(pi s) + C2 cos(2 pi s) + C3 s^2 with complex Gaussian coefficients.
struct SmoothPath {
  std::vector<Eigen::MatrixXcd> coef;

  Eigen::MatrixXcd operator()(double s) const {
    return coef[0] + std::sin(std::numbers::pi * s) * coef[1] + std::cos(2.0 * std::numbers::pi * s) * coef[2] +
           s * s * coef[3];
  }
};

inline SmoothPath random_smooth_path(Index d, CounterRng& rng, double scale = 0.5) {
  SmoothPath p;
  for (int i = 0; i < 4; ++i) {
    Eigen::MatrixXcd c(d, d);
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b) c(a, b) = scale * rng.complex_normal() / std::sqrt(2.0 * double(d));
    p.coef.push_back(c);
  }
  return p;
}

struct ProductBoundReport {
  int paths = 0;
  int violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  ///< min of rhs - lhs
  double max_lhs = 0.0;
  int max_refinements = 0;
};

inline ProductBoundReport product_bound_check(int paths, Index d, double a, std::uint64_t seed,
                                              const ProductIntegralOptions& opt = {}) {
  CounterRng rng(seed, 13);
  ProductBoundReport rep;
  rep.paths = paths;
  for (int i = 0; i < paths; ++i) {
    SmoothPath path = random_smooth_path(d, rng);
    auto r = product_integral(std::function<Eigen::MatrixXcd(double)>(path), a, opt);
    auto b = product_bound(r);
    if (!b.holds) ++rep.violations;
    rep.worst_margin = std::min(rep.worst_margin, b.rhs - b.lhs);
    rep.max_lhs = std::max(rep.max_lhs, b.lhs);
    rep.max_refinements = std::max(rep.max_refinements, r.refinements);
  }
  return rep;
}

// --- Feynman-Kac kernel ------------------------------------------------------------------

/// Harmonic oscillator kernel of 1/2 p^2 + 1/2 w^2 q^2 at imaginary time beta.
inline double mehler_kernel(double x, double y, double beta, double w) {
  const double sh = std::sinh(w * beta);
  const double ch = std::cosh(w * beta);
  return std::sqrt(w / (2.0 * std::numbers::pi * sh)) * std::exp(-w * ((x * x + y * y) * ch - 2.0 * x * y) / (2.0 * sh));
}

/// Kernel of exp(-beta K_M) at t = 0: product of Mehler kernels (with the zero-point shift)
/// times the fermion superoperator exp(-beta Q) (x) conj(exp(-beta Q)), Q = 1/2 <n, U_eff n>.
inline Eigen::MatrixXcd mehler_oracle(const CouplingMatrices& c, const SectorSpec& sector, const Eigen::VectorXd& phi,
                                      const Eigen::VectorXd& phi_prime, double beta) {
  double k = 1.0;
  for (Index x = 0; x < phi.size(); ++x) k *= mehler_kernel(phi[x], phi_prime[x], beta, c.omega0);
  k *= std::exp(0.5 * beta * c.omega0 * double(phi.size()));
  FermionFactor ff = fermion_factor(c.sites(), sector.m_hat);
  auto ueff = effective_coulomb(c);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(ff.dim(), ff.dim());
  for (int x = 0; x < c.sites(); ++x)
    for (int y = 0; y < c.sites(); ++y) q += 0.5 * ueff.matrix(x, y) * ff.number[x] * ff.number[y];
  Eigen::MatrixXcd g = expm_hermitian<cplx>(q.cast<cplx>(), -beta);
  return k * Eigen::kroneckerProduct(g, g.conjugate()).eval();
}

struct KernelEstimate {
  Eigen::MatrixXcd mean;       ///< D^2 x D^2, cone order
  Eigen::MatrixXd stderr_re;   ///< entrywise standard error of the real part
  Eigen::MatrixXd stderr_im;
  Eigen::MatrixXcd mean_fine;  ///< same samples on the bridge refined to 2K
  double time_step_change = 0.0;  ///< max entrywise |mean_fine - mean|
  int samples = 0;
  int steps = 0;

  /// Largest |estimate - reference| in units of the entry's standard error, real and imaginary
  /// parts separately. Entries whose error vanishes must match to rounding.
  double max_z(const Eigen::MatrixXcd& reference, double floor = 1e-14) const {
    double worst = 0;
    for (Index i = 0; i < mean.rows(); ++i)
      for (Index j = 0; j < mean.cols(); ++j) {
        cplx diff = mean(i, j) - reference(i, j);
        double zr = std::abs(diff.real()) / std::max(stderr_re(i, j), floor);
        double zi = std::abs(diff.imag()) / std::max(stderr_im(i, j), floor);
        worst = std::max({worst, zr, zi});
      }
    return worst;
  }
};

struct KernelOptions {
  int samples = 100000;
  int steps = 64;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  bool refine = true;
};

/// Monte Carlo estimate of exp(-beta K_M)(phi, phi') as an operator on D x D fibers:
/// average over bridges of P_beta e^{-int V} G (x) conj(G), G the ordered product of
/// exp(T_{+g}(omega(s)) ds) with trapezoid weights at the nodes.
inline KernelEstimate fk_kernel_estimate(const CouplingMatrices& c, const SectorSpec& sector,
                                         const Eigen::VectorXd& phi, const Eigen::VectorXd& phi_prime, double beta,
                                         const KernelOptions& opt = {}) {
  auto a1 = check_A1(c.g);
  require(a1.holds, ErrorCode::kA1Violated, "column sums of g are not constant");
  require(opt.samples >= 2, ErrorCode::kInvalidArgument, "need at least two samples");
  require(phi.size() == c.sites() && phi_prime.size() == c.sites(), ErrorCode::kBasisMismatch,
          "endpoints do not match the graph");
  FermionFactor ff = fermion_factor(c.sites(), sector.m_hat);
  auto ueff = effective_coulomb(c);
  const Index d = ff.dim();
  const Index d2 = d * d;
  const bool constant_fiber = detail::hopping_pairs(c).empty();
  const double p0 = free_kernel(phi, phi_prime, beta);

  auto fiber = [&](const Eigen::RowVectorXd& q) {
    std::vector<double> v(q.data(), q.data() + q.size());
    return fiber_hopping(c, ff, ueff.matrix, v, QuadraticSign::kMinus);
  };
  Eigen::MatrixXcd fixed;
  if (constant_fiber) fixed = fiber(phi.transpose());

  auto sample_value = [&](const BridgePath& p) -> Eigen::MatrixXcd {
    const int steps = p.steps();
    const double dt = p.beta / steps;
    Eigen::MatrixXcd g;
    if (constant_fiber) {
      g = expm_hermitian<cplx>(fixed, p.beta);
    } else {
      std::vector<Eigen::MatrixXcd> vals;
      std::vector<double> ds;
      for (int k = 0; k <= steps; ++k) {
        vals.push_back(fiber(p.values.row(k)));
        ds.push_back(k == 0 || k == steps ? 0.5 * dt : dt);
      }
      g = product_integral(vals, ds).value;
    }
    const double w = p0 * std::exp(-potential_integral(p, c.omega0));
    return w * Eigen::kroneckerProduct(g, g.conjugate()).eval();
  };

  KernelEstimate e;
  e.samples = opt.samples;
  e.steps = opt.steps;
  Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(d2, d2);
  Eigen::MatrixXd sq_re = Eigen::MatrixXd::Zero(d2, d2);
  Eigen::MatrixXd sq_im = Eigen::MatrixXd::Zero(d2, d2);
  Eigen::MatrixXcd sum_fine = Eigen::MatrixXcd::Zero(d2, d2);
  CounterRng rng(opt.seed, 2 * opt.stream);
  CounterRng rng_fine(opt.seed, 2 * opt.stream + 1);
  for (int s = 0; s < opt.samples; ++s) {
    Eigen::MatrixXd alpha = sample_bridge(c.sites(), opt.steps, rng);
    Eigen::MatrixXcd v = sample_value(make_path(alpha, phi, phi_prime, beta));
    sum += v;
    sq_re += v.real().cwiseAbs2();
    sq_im += v.imag().cwiseAbs2();
    if (opt.refine) sum_fine += sample_value(make_path(refine_bridge(alpha, rng_fine), phi, phi_prime, beta));
  }
  const double n = opt.samples;
  e.mean = sum / n;
  auto err = [&](const Eigen::MatrixXd& sq, const Eigen::MatrixXd& m) {
    Eigen::MatrixXd var = ((sq / n - m.cwiseAbs2()) * (n / (n - 1))).cwiseMax(0.0);
    return Eigen::MatrixXd((var / n).cwiseSqrt());
  };
  e.stderr_re = err(sq_re, e.mean.real());
  e.stderr_im = err(sq_im, e.mean.imag());
  if (opt.refine) {
    e.mean_fine = sum_fine / n;
    e.time_step_change = (e.mean_fine - e.mean).cwiseAbs().maxCoeff();
  }
  return e;
}

/// Grid-exact kernel of exp(-beta K_M) between two grid points, obtained column by column
/// from the semigroup applied to delta fields and divided by the cell volume.
inline Eigen::MatrixXcd grid_exact_kernel(const GridHamiltonian& gh, const ConeSemigroup& sg, Index k, Index k2,
                                          double beta) {
  const Index d2 = gh.d * gh.d;
  Eigen::MatrixXcd out(d2, d2);
  for (Index j = 0; j < d2; ++j) {
    Eigen::VectorXcd delta = Eigen::VectorXcd::Zero(gh.dim());
    delta[k2 * d2 + j] = 1.0;
    Eigen::VectorXcd col = sg.apply(beta, delta);
    out.col(j) = col.segment(k * d2, d2) / gh.grid.weight();
  }
  return out;
}

/// Index of the grid point with the given coordinates; throws when a coordinate is off-grid.
inline Index grid_index(const QGrid& grid, const Eigen::VectorXd& q) {
  require(q.size() == grid.sites, ErrorCode::kBasisMismatch, "point does not match the grid");
  Index idx = 0;
  for (int s = 0; s < grid.sites; ++s) {
    double r = (q[s] + grid.q_max) / grid.spacing();
    long k = std::lround(r);
    require(std::abs(r - double(k)) < 1e-9 && k >= 0 && k < grid.n_q, ErrorCode::kInvalidArgument,
            "point is not on the grid");
    idx = idx * grid.n_q + k;
  }
  return idx;
}

/// MC kernel against the grid kernel (h^2-extrapolated from grids with spacing h and h/2)
/// and, when there is no hopping, against the Mehler product.
struct FkRow {
  Eigen::VectorXd phi;
  Eigen::VectorXd phi_prime;
  KernelEstimate estimate;
  Eigen::MatrixXcd grid_coarse;
  Eigen::MatrixXcd grid_fine;
  Eigen::MatrixXcd grid_extrapolated;
  std::optional<Eigen::MatrixXcd> mehler;
  double z_grid = 0.0;
  double z_mehler = 0.0;
};

struct FkReport {
  double beta = 0.0;
  std::vector<FkRow> rows;
  double max_z_grid = 0.0;
  double max_z_mehler = 0.0;
  bool has_mehler = false;
  double max_time_step_change = 0.0;
  double max_stderr = 0.0;
};

inline FkReport fk_check(const CouplingMatrices& c, const SectorSpec& sector,
                         const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs, double beta,
                         const QGrid& coarse, const KernelOptions& opt = {}) {
  QGrid fine(coarse.sites, 2 * coarse.n_q - 1, coarse.q_max);
  auto gc = grid_hamiltonian(c, sector, coarse);
  auto gf = grid_hamiltonian(c, sector, fine);
  ConeSemigroup sc(gc.kinetic);
  ConeSemigroup sf(gf.kinetic);
  FkReport r;
  r.beta = beta;
  r.has_mehler = detail::hopping_pairs(c).empty();
  std::uint64_t stream = opt.stream;
  for (const auto& [phi, phi_prime] : pairs) {
    FkRow row;
    row.phi = phi;
    row.phi_prime = phi_prime;
    KernelOptions o = opt;
    o.stream = stream++;
    row.estimate = fk_kernel_estimate(c, sector, phi, phi_prime, beta, o);
    row.grid_coarse = grid_exact_kernel(gc, sc, grid_index(coarse, phi), grid_index(coarse, phi_prime), beta);
    row.grid_fine = grid_exact_kernel(gf, sf, grid_index(fine, phi), grid_index(fine, phi_prime), beta);
    row.grid_extrapolated = (4.0 * row.grid_fine - row.grid_coarse) / 3.0;
    row.z_grid = row.estimate.max_z(row.grid_extrapolated);
    r.max_z_grid = std::max(r.max_z_grid, row.z_grid);
    if (r.has_mehler) {
      row.mehler = mehler_oracle(c, sector, phi, phi_prime, beta);
      row.z_mehler = row.estimate.max_z(*row.mehler);
      r.max_z_mehler = std::max(r.max_z_mehler, row.z_mehler);
    }
    r.max_time_step_change = std::max(r.max_time_step_change, row.estimate.time_step_change);
    r.max_stderr = std::max({r.max_stderr, row.estimate.stderr_re.maxCoeff(), row.estimate.stderr_im.maxCoeff()});
    r.rows.push_back(std::move(row));
  }
  return r;
}

}  // namespace hhlab

#endif  // HHLAB_PATHINTEGRAL_HPP
