#ifndef HHLAB_CONE_HPP
#define HHLAB_CONE_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/KroneckerProduct>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "hhlab/fock.hpp"
#include "hhlab/linalg.hpp"
#include "hhlab/model.hpp"
#include "hhlab/rng.hpp"

namespace hhlab {

// --- fields over the grid ------------------------------------------------------------

/// A D x D matrix psi(phi) at every grid point. Flattened ("cone order") index is
/// point * D^2 + X * D + Y, i.e. point-major with row-major psi.
struct ConeField {
  Index d = 0;
  std::vector<Eigen::MatrixXcd> values;

  Index points() const { return Index(values.size()); }
  Index flat_size() const { return points() * d * d; }

  static ConeField zeros(Index d, Index points) {
    ConeField f;
    f.d = d;
    f.values.assign(std::size_t(points), Eigen::MatrixXcd::Zero(d, d));
    return f;
  }

  static ConeField from_flat(const Eigen::VectorXcd& v, Index d) {
    require(d > 0 && v.size() % (d * d) == 0, ErrorCode::kBasisMismatch, "flat vector does not tile D x D blocks");
    ConeField f = zeros(d, v.size() / (d * d));
    for (Index k = 0; k < f.points(); ++k)
      for (Index x = 0; x < d; ++x)
        for (Index y = 0; y < d; ++y) f.values[k](x, y) = v[k * d * d + x * d + y];
    return f;
  }

  Eigen::VectorXcd flat() const {
    Eigen::VectorXcd v(flat_size());
    for (Index k = 0; k < points(); ++k)
      for (Index x = 0; x < d; ++x)
        for (Index y = 0; y < d; ++y) v[k * d * d + x * d + y] = values[k](x, y);
    return v;
  }

  double norm() const {
    double s = 0;
    for (const auto& m : values) s += m.squaredNorm();
    return std::sqrt(s);
  }
};

/// Reads a vector of the (M^, M^) sector (tensor) grid, ordered as the model assembles it,
/// as per-point matrices psi_XY = <e_X (x) e_Y, v> (the involution is entrywise conjugation
/// in the e_X basis, so e_X (x) theta e_Y corresponds to |e_X><e_Y|).
inline ConeField to_cone_field(const Eigen::VectorXcd& v, Index d, Index points) {
  require(v.size() == d * d * points, ErrorCode::kBasisMismatch, "vector size does not match D^2 * points");
  ConeField f = ConeField::zeros(d, points);
  for (Index y = 0; y < d; ++y)
    for (Index x = 0; x < d; ++x)
      for (Index k = 0; k < points; ++k) f.values[k](x, y) = v[(y * d + x) * points + k];
  return f;
}

inline Eigen::VectorXcd from_cone_field(const ConeField& f) {
  const Index d = f.d;
  const Index points = f.points();
  Eigen::VectorXcd v(d * d * points);
  for (Index y = 0; y < d; ++y)
    for (Index x = 0; x < d; ++x)
      for (Index k = 0; k < points; ++k) v[(y * d + x) * points + k] = f.values[k](x, y);
  return v;
}

/// Permutation taking model order ((Y * D + X) * P + k) to cone order (k * D^2 + X * D + Y).
inline std::vector<Index> model_to_cone_permutation(Index d, Index points) {
  std::vector<Index> perm(std::size_t(d * d * points));
  for (Index y = 0; y < d; ++y)
    for (Index x = 0; x < d; ++x)
      for (Index k = 0; k < points; ++k) perm[std::size_t((y * d + x) * points + k)] = k * d * d + x * d + y;
  return perm;
}

inline SparseMat<cplx> permute_to_cone(const SparseMat<cplx>& a, Index d, Index points) {
  auto perm = model_to_cone_permutation(d, points);
  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(std::size_t(a.nonZeros()));
  for (Index i = 0; i < a.outerSize(); ++i)
    for (SparseMat<cplx>::InnerIterator it(a, i); it; ++it)
      trip.emplace_back(perm[std::size_t(it.row())], perm[std::size_t(it.col())], it.value());
  SparseMat<cplx> out(a.rows(), a.cols());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

struct ConeMembership {
  bool member = true;
  double worst_eigenvalue = 0.0;  ///< min over points of the smallest eigenvalue of the Hermitian part
  double relative_worst = 0.0;    ///< worst_eigenvalue / field norm
  double hermitian_residual = 0.0;
  double norm = 0.0;
  Eigen::VectorXd profile;  ///< smallest eigenvalue per point
};

/// Membership with tolerance relative to a reference scale: every psi(phi) Hermitian and
/// min eig >= -tol * scale. The scale defaults to ||f||; images under an operator A should pass
/// ||A|| ||input|| so that rounding in A is measured against what A can produce.
inline ConeMembership cone_membership(const ConeField& f, double tol = 1e-10, double scale = 0.0) {
  ConeMembership m;
  m.norm = f.norm();
  m.profile.resize(f.points());
  m.worst_eigenvalue = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < f.points(); ++k) {
    const auto& psi = f.values[k];
    m.hermitian_residual = std::max(m.hermitian_residual, (psi - psi.adjoint()).cwiseAbs().maxCoeff());
    Eigen::MatrixXcd herm = 0.5 * (psi + psi.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm, Eigen::EigenvaluesOnly);
    m.profile[k] = es.eigenvalues()[0];
    m.worst_eigenvalue = std::min(m.worst_eigenvalue, m.profile[k]);
  }
  if (f.points() == 0) m.worst_eigenvalue = 0;
  const double ref = std::max(scale > 0 ? scale : m.norm, 1e-300);
  m.relative_worst = m.worst_eigenvalue / ref;
  m.member = m.hermitian_residual <= tol * ref && m.worst_eigenvalue >= -tol * ref;
  return m;
}

/// A A^dagger with complex Gaussian A.
inline Eigen::MatrixXcd random_psd(Index d, CounterRng& rng) {
  Eigen::MatrixXcd a(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = rng.complex_normal();
  return a * a.adjoint();
}

/// Random member supported on a few random grid points.
inline ConeField random_cone_member(Index d, Index points, CounterRng& rng, int support = 3) {
  ConeField f = ConeField::zeros(d, points);
  for (int s = 0; s < support; ++s) {
    Index k = Index(rng.next_u64() % std::uint64_t(points));
    f.values[k] += random_psd(d, rng);
  }
  return f;
}

// --- fermion factor -------------------------------------------------------------------

/// Operators on one factor of M^ spinless fermions over the vertex set.
struct FermionFactor {
  ModeBasis basis;
  std::vector<Eigen::MatrixXd> number;  ///< n_x

  Eigen::MatrixXd hop(int x, int y) const { return Eigen::MatrixXd(hopping(basis, x, y)); }
  Index dim() const { return basis.dim(); }
};

inline FermionFactor fermion_factor(int sites, int m_hat) {
  FermionFactor f;
  f.basis = fermion_basis(sites, m_hat);
  for (int x = 0; x < sites; ++x) f.number.push_back(Eigen::MatrixXd(number(f.basis, x)));
  return f;
}

/// Sign in front of 1/2 <n, U_eff n> inside the fiber hopping. kMinus makes the split
/// H = -T - U + H_p reproduce the hole-particle Hamiltonian; kPlus is kept so the mismatch
/// of the other choice stays observable.
enum class QuadraticSign { kMinus, kPlus };

// --- grid Hamiltonian -------------------------------------------------------------------

struct GridHamiltonian {
  int sites = 0;
  int m_hat = 0;
  Index d = 0;
  QGrid grid{1, 3, 1.0};
  double u0 = 0.0;
  SparseMat<cplx> kinetic;    ///< K_M = -L(T) - R(T) + H_p
  SparseMat<cplx> coulomb;    ///< sum U_eff(x-y) L(n_x) R(n_y)
  SparseMat<cplx> coulomb0;   ///< U0 sum L(n_x) R(n_x)

  Index points() const { return grid.dim(); }
  Index dim() const { return points() * d * d; }
  SparseMat<cplx> full() const { return kinetic - coulomb; }
  SparseMat<cplx> reference() const { return kinetic - coulomb0; }
};

/// Fiber hopping T_{+g}(phi) + s/2 <n, U_eff n> on one fermion factor.
inline Eigen::MatrixXcd fiber_hopping(const CouplingMatrices& c, const FermionFactor& ff, const Eigen::MatrixXd& ueff,
                                      const std::vector<double>& phi, QuadraticSign sign) {
  const Index d = ff.dim();
  Eigen::MatrixXcd t = Eigen::MatrixXcd::Zero(d, d);
  for (auto [x, y] : detail::hopping_pairs(c)) {
    auto a = detail::phase_coefficients(c, x, y);
    double arg = 0;
    for (int z = 0; z < c.sites(); ++z) arg += a[z] * phi[z];
    t += c.t(x, y) * std::polar(1.0, arg) * ff.hop(x, y).cast<cplx>();
  }
  Eigen::MatrixXd quad = Eigen::MatrixXd::Zero(d, d);
  for (int x = 0; x < c.sites(); ++x)
    for (int y = 0; y < c.sites(); ++y) quad += ueff(x, y) * ff.number[x] * ff.number[y];
  t += (sign == QuadraticSign::kMinus ? -0.5 : 0.5) * quad.cast<cplx>();
  return t;
}

/// Assembles H_M = -T - U + H_p on the grid in cone order, with L(A) -> A (x) 1 and
/// R(A) -> 1 (x) A^T acting on row-major psi.
inline GridHamiltonian grid_hamiltonian(const CouplingMatrices& c, const SectorSpec& sector, const QGrid& grid,
                                        QuadraticSign sign = QuadraticSign::kMinus) {
  auto a1 = check_A1(c.g);
  require(a1.holds, ErrorCode::kA1Violated, "column sums of g are not constant");
  require(grid.sites == c.sites(), ErrorCode::kBasisMismatch, "grid does not match the graph");
  GridHamiltonian gh;
  gh.sites = c.sites();
  gh.m_hat = sector.m_hat;
  gh.grid = grid;
  FermionFactor ff = fermion_factor(c.sites(), sector.m_hat);
  gh.d = ff.dim();
  const Index d = gh.d;
  const Index d2 = d * d;
  const Index points = grid.dim();
  auto ueff = effective_coulomb(c);
  gh.u0 = ueff.u0;
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(d, d);

  Eigen::MatrixXcd ucoul = Eigen::MatrixXcd::Zero(d2, d2);
  Eigen::MatrixXcd ucoul0 = Eigen::MatrixXcd::Zero(d2, d2);
  for (int x = 0; x < c.sites(); ++x) {
    for (int y = 0; y < c.sites(); ++y)
      ucoul += ueff.matrix(x, y) * Eigen::kroneckerProduct(ff.number[x], ff.number[y]).eval().cast<cplx>();
    ucoul0 += gh.u0 * Eigen::kroneckerProduct(ff.number[x], ff.number[x]).eval().cast<cplx>();
  }

  std::vector<Eigen::Triplet<cplx>> tk;
  std::vector<Eigen::Triplet<cplx>> tu;
  std::vector<Eigen::Triplet<cplx>> tu0;
  auto place = [](std::vector<Eigen::Triplet<cplx>>& out, const Eigen::MatrixXcd& blk, Index off) {
    for (Index i = 0; i < blk.rows(); ++i)
      for (Index j = 0; j < blk.cols(); ++j)
        if (blk(i, j) != cplx(0)) out.emplace_back(off + i, off + j, blk(i, j));
  };
  for (Index k = 0; k < points; ++k) {
    Eigen::MatrixXcd tf = fiber_hopping(c, ff, ueff.matrix, grid.coordinates(k), sign);
    Eigen::MatrixXcd blk = -Eigen::kroneckerProduct(tf, id).eval() - Eigen::kroneckerProduct(id, tf.transpose()).eval();
    place(tk, blk, k * d2);
    place(tu, ucoul, k * d2);
    place(tu0, ucoul0, k * d2);
  }
  SparseMat<cplx> hp = kron<cplx>(grid_phonon_energy(grid, c.omega0), sparse_identity<double>(d2));
  gh.kinetic.resize(gh.dim(), gh.dim());
  gh.kinetic.setFromTriplets(tk.begin(), tk.end());
  gh.kinetic += hp;
  gh.coulomb.resize(gh.dim(), gh.dim());
  gh.coulomb.setFromTriplets(tu.begin(), tu.end());
  gh.coulomb0.resize(gh.dim(), gh.dim());
  gh.coulomb0.setFromTriplets(tu0.begin(), tu0.end());
  return gh;
}

/// The hole-particle Hamiltonian assembled through the model module on the same grid,
/// permuted into cone order; entrywise comparable with grid_hamiltonian(...).full().
inline SparseMat<cplx> hole_particle_in_cone_order(const CouplingMatrices& c, const SectorSpec& sector,
                                                   const QGrid& grid) {
  GridPhonons ph(grid, c.omega0);
  auto h = hole_particle_hamiltonian(c, sector, ph);
  const Index d = fermion_basis(c.sites(), sector.m_hat).dim();
  return permute_to_cone(h.matrix, d, grid.dim());
}

inline double max_abs_difference(const SparseMat<cplx>& a, const SparseMat<cplx>& b) {
  SparseMat<cplx> diff = a - b;
  double worst = 0;
  for (Index k = 0; k < diff.outerSize(); ++k)
    for (SparseMat<cplx>::InnerIterator it(diff, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
  return worst;
}

// --- exponentials --------------------------------------------------------------------------

/// exp(-beta H) acting on cone-ordered vectors; dense up to 4096, Krylov beyond.
class ConeSemigroup {
 public:
  explicit ConeSemigroup(const SparseMat<cplx>& h, Index dense_limit = 4096) : h_(h) {
    if (h.rows() <= dense_limit) {
      eig_ = eigh<cplx>(Eigen::MatrixXcd(h));
      e0_ = eig_->values[0];
    }
  }

  Eigen::VectorXcd apply(double beta, const Eigen::VectorXcd& v) const {
    if (eig_) {
      Eigen::VectorXd w = (-beta * eig_->values.array()).exp().matrix();
      return eig_->vectors * w.asDiagonal() * (eig_->vectors.adjoint() * v);
    }
    return expv_hermitian<cplx>(h_, -beta, v, 1e-10);
  }

  const std::optional<EigenPairs<cplx>>& decomposition() const { return eig_; }

  /// ||exp(-beta H)|| = exp(-beta E_0).
  double norm(double beta) const {
    if (!e0_) e0_ = lowest_eigenpairs<cplx>(h_, EigOptions{.k = 2}).values[0];
    return std::exp(-beta * *e0_);
  }

 private:
  SparseMat<cplx> h_;
  mutable std::optional<double> e0_;
  std::optional<EigenPairs<cplx>> eig_;
};

struct SemigroupPositivityReport {
  std::vector<double> betas;
  std::vector<double> worst_relative;  ///< per beta: min eig / (||exp(-beta H)|| ||input||)
  bool preserved = true;
};

inline SemigroupPositivityReport semigroup_positivity_check(const GridHamiltonian& gh, const std::vector<double>& betas,
                                                            int samples, std::uint64_t seed, double tol = 1e-10) {
  ConeSemigroup sg(gh.full());
  SemigroupPositivityReport r;
  r.betas = betas;
  for (double beta : betas) {
    CounterRng rng(seed, 1);
    double worst = std::numeric_limits<double>::infinity();
    for (int s = 0; s < samples; ++s) {
      ConeField f = random_cone_member(gh.d, gh.points(), rng);
      ConeField out = ConeField::from_flat(sg.apply(beta, f.flat()), gh.d);
      auto m = cone_membership(out, tol, sg.norm(beta) * f.norm());
      worst = std::min(worst, m.relative_worst);
      if (!m.member) r.preserved = false;
    }
    r.worst_relative.push_back(worst);
  }
  return r;
}

struct StrictPositivityReport {
  double e0 = 0.0;
  double e1 = 0.0;
  double gap = 0.0;
  double gap_tol = 0.0;
  bool unique = false;
  double hermitian_residual = 0.0;
  Eigen::VectorXd profile;         ///< min eigenvalue of psi(phi) per grid point
  std::vector<bool> interior;
  double interior_min = 0.0;
  double strict_threshold = 0.0;   ///< relative to max ||psi(phi)||
  bool strictly_positive = false;
  ConeField ground;
};

/// Ground state of the flattened H_M, gauge-fixed so that sum_phi Tr psi(phi) > 0.
inline StrictPositivityReport ground_state_strict_positivity(const GridHamiltonian& gh, double strict_rel = 1e-12,
                                                             double gap_rel = 1e-8) {
  auto eig = lowest_eigenpairs<cplx>(gh.full(), EigOptions{.k = int(std::min<Index>(2, gh.dim()))});
  StrictPositivityReport r;
  r.e0 = eig.values[0];
  r.e1 = eig.values.size() > 1 ? eig.values[1] : std::numeric_limits<double>::infinity();
  r.gap = r.e1 - r.e0;
  r.gap_tol = gap_rel * std::max(1.0, std::abs(r.e0));
  r.unique = r.gap > r.gap_tol;

  ConeField f = ConeField::from_flat(eig.vectors.col(0), gh.d);
  cplx tr = 0;
  for (const auto& m : f.values) tr += m.trace();
  const cplx gauge = std::abs(tr) > 0 ? std::conj(tr) / std::abs(tr) : cplx(1);
  for (auto& m : f.values) m *= gauge;

  double max_norm = 0;
  for (const auto& m : f.values) max_norm = std::max(max_norm, m.norm());
  auto mem = cone_membership(f);
  r.profile = mem.profile;
  r.hermitian_residual = mem.hermitian_residual;
  r.strict_threshold = strict_rel * max_norm;
  r.interior_min = std::numeric_limits<double>::infinity();
  r.interior.resize(std::size_t(f.points()));
  for (Index k = 0; k < f.points(); ++k) {
    r.interior[std::size_t(k)] = gh.grid.interior(k);
    if (r.interior[std::size_t(k)]) r.interior_min = std::min(r.interior_min, r.profile[k]);
  }
  r.strictly_positive = r.unique && r.interior_min > r.strict_threshold &&
                        r.hermitian_residual <= 1e-10 * std::max(max_norm, 1e-300);
  r.ground = std::move(f);
  return r;
}

/// sum_phi Tr[psi A psi A^dagger] with A = c_x c_y^dagger on the fermion factor.
inline double inner_spin_form(const ConeField& f, const FermionFactor& ff, int x, int y) {
  const Ladder w[] = {an(x), cr(y)};
  Eigen::MatrixXcd a = Eigen::MatrixXd(word_matrix<double>(ff.basis, ff.basis, w)).cast<cplx>();
  double s = 0;
  for (const auto& psi : f.values) s += (psi * a * psi * a.adjoint()).trace().real();
  return s;
}

// --- Coulomb lower bound ---------------------------------------------------------------------

struct CoulombBoundReport {
  double u0 = 0.0;
  double worst_relative = 0.0;  ///< min eig of the image relative to its norm
  bool preserved = true;
  double psd_form_residual = 0.0;  ///< ||sum U L(n)R(n) - sum lambda L(n~)R(n~)|| on samples
};

/// psi -> sum_xy U_eff(x-y) n_x psi n_y - U0 sum_x n_x psi n_x on single fibers.
inline Eigen::MatrixXcd coulomb_difference(const Eigen::MatrixXd& ueff, double u0, const FermionFactor& ff,
                                           const Eigen::MatrixXcd& psi) {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(psi.rows(), psi.cols());
  const int n = int(ueff.rows());
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) out += ueff(x, y) * ff.number[x] * psi * ff.number[y];
    out -= u0 * ff.number[x] * psi * ff.number[x];
  }
  return out;
}

/// sum_k lambda_k n~_k psi n~_k with n~_k = sum_x v_k(x) n_x from the eigendecomposition.
inline Eigen::MatrixXcd coulomb_psd_form(const Eigen::MatrixXd& ueff, const FermionFactor& ff,
                                         const Eigen::MatrixXcd& psi) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ueff);
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(psi.rows(), psi.cols());
  for (Index k = 0; k < ueff.rows(); ++k) {
    Eigen::MatrixXd nk = Eigen::MatrixXd::Zero(ff.dim(), ff.dim());
    for (Index x = 0; x < ueff.rows(); ++x) nk += es.eigenvectors()(x, k) * ff.number[x];
    out += es.eigenvalues()[k] * nk * psi * nk;
  }
  return out;
}

inline CoulombBoundReport coulomb_lower_bound_check(const Eigen::MatrixXd& ueff, int m_hat, int samples,
                                                    std::uint64_t seed, double tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ueff);
  CoulombBoundReport r;
  r.u0 = es.eigenvalues().minCoeff();
  FermionFactor ff = fermion_factor(int(ueff.rows()), m_hat);
  CounterRng rng(seed, 2);
  r.worst_relative = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    Eigen::MatrixXcd psi = random_psd(ff.dim(), rng);
    Eigen::MatrixXcd img = coulomb_difference(ueff, r.u0, ff, psi);
    Eigen::MatrixXcd herm = 0.5 * (img + img.adjoint());
    double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(herm, Eigen::EigenvaluesOnly).eigenvalues()[0];
    double rel = lo / std::max(psi.norm(), 1e-300);
    r.worst_relative = std::min(r.worst_relative, rel);
    if (rel < -tol) r.preserved = false;
    Eigen::MatrixXcd direct = coulomb_difference(ueff, 0.0, ff, psi);
    r.psd_form_residual = std::max(r.psd_form_residual, (direct - coulomb_psd_form(ueff, ff, psi)).norm() /
                                                            std::max(psi.norm(), 1e-300));
  }
  return r;
}

// --- Duhamel expansion ------------------------------------------------------------------------

/// Grundmann-Moeller rule of degree 2s+1 on the n-simplex {b_0..b_n >= 0, sum b = 1} in
/// barycentric coordinates; weights sum to the simplex volume 1/n!.
struct SimplexRule {
  int n = 0;
  int degree = 0;
  std::vector<std::vector<double>> nodes;
  std::vector<double> weights;
};

inline SimplexRule grundmann_moller(int n, int s) {
  require(n >= 1 && s >= 0, ErrorCode::kInvalidArgument, "bad simplex rule order");
  SimplexRule rule;
  rule.n = n;
  rule.degree = 2 * s + 1;
  const int d = 2 * s + 1;
  auto factorial = [](int k) {
    double f = 1;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
  };
  for (int i = 0; i <= s; ++i) {
    const double w = ((i % 2) ? -1.0 : 1.0) * std::pow(2.0, -2 * s) * std::pow(double(d + n - 2 * i), d) /
                     (factorial(i) * factorial(d + n - i));
    // all compositions of s - i into n + 1 nonnegative parts
    std::vector<int> parts(n + 1, 0);
    const int total = s - i;
    std::function<void(int, int)> rec = [&](int pos, int left) {
      if (pos == n) {
        parts[n] = left;
        std::vector<double> node(n + 1);
        for (int j = 0; j <= n; ++j) node[j] = (2.0 * parts[j] + 1.0) / (d + n - 2 * i);
        rule.nodes.push_back(node);
        rule.weights.push_back(w);
        return;
      }
      for (int v = 0; v <= left; ++v) {
        parts[pos] = v;
        rec(pos + 1, left - v);
      }
    };
    rec(0, total);
  }
  return rule;
}

/// Terms D_0..D_N of exp(-beta (K - U0)) = sum_n D_n, each the integral over the
/// beta-simplex of e^{-s_0 K} U0 e^{-s_1 K} ... U0 e^{-s_n K}, evaluated in the eigenbasis of K.
inline std::vector<Eigen::MatrixXcd> duhamel_terms(const EigenPairs<cplx>& k_eig, const Eigen::MatrixXcd& u0,
                                                   double beta, int n_terms, int s = 6) {
  const Eigen::MatrixXcd& w = k_eig.vectors;
  const Eigen::VectorXd& lam = k_eig.values;
  Eigen::MatrixXcd ut = w.adjoint() * u0 * w;
  auto scaled = [&](double t) { return Eigen::VectorXcd((-t * lam.array()).exp().cast<cplx>().matrix()); };
  std::vector<Eigen::MatrixXcd> out;
  out.push_back(w * scaled(beta).asDiagonal() * w.adjoint());
  for (int n = 1; n <= n_terms; ++n) {
    SimplexRule rule = grundmann_moller(n, s);
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(lam.size(), lam.size());
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const auto& b = rule.nodes[q];
      Eigen::MatrixXcd prod = scaled(beta * b[0]).asDiagonal() * ut;
      for (int j = 1; j < n; ++j) prod = (prod * scaled(beta * b[j]).asDiagonal() * ut).eval();
      prod = prod * scaled(beta * b[n]).asDiagonal();
      acc += rule.weights[q] * prod;
    }
    acc *= std::pow(beta, n);
    out.push_back(w * acc * w.adjoint());
  }
  return out;
}

/// Exact terms from the block upper-triangular exponential of [[-K, U0, 0..], [0, -K, U0..], ...].
inline std::vector<Eigen::MatrixXcd> duhamel_terms_exact(const Eigen::MatrixXcd& k, const Eigen::MatrixXcd& u0,
                                                         double beta, int n_terms) {
  const Index n = k.rows();
  const Index blocks = n_terms + 1;
  Eigen::MatrixXcd big = Eigen::MatrixXcd::Zero(n * blocks, n * blocks);
  for (Index i = 0; i < blocks; ++i) {
    big.block(i * n, i * n, n, n) = -k;
    if (i + 1 < blocks) big.block(i * n, (i + 1) * n, n, n) = u0;
  }
  Eigen::MatrixXcd e = expm(beta * big);
  std::vector<Eigen::MatrixXcd> out;
  for (Index i = 0; i < blocks; ++i) out.push_back(e.block(0, i * n, n, n));
  return out;
}

struct DuhamelExpansionReport {
  std::vector<double> betas;
  std::vector<std::vector<double>> remainders;  ///< [beta][N]: ||exp(-beta H0) - sum_{n<=N} D_n||
  std::vector<double> slopes;                   ///< log-log slope per N
  bool slopes_ok = true;
  bool terms_preserve_cone = true;
  bool partial_sums_preserve_cone = true;
  double worst_cone_relative = 0.0;
  int degree = 0;
};

inline double hermitian_norm(const Eigen::MatrixXcd& a) {
  Eigen::MatrixXcd h = 0.5 * (a + a.adjoint());
  Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(h, Eigen::EigenvaluesOnly).eigenvalues();
  return std::max(std::abs(ev[0]), std::abs(ev[ev.size() - 1]));
}

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

inline DuhamelExpansionReport duhamel_expansion_check(const GridHamiltonian& gh, const std::vector<double>& betas,
                                                      int n_terms, int samples, std::uint64_t seed, int s = 6,
                                                      double slope_tol = 0.3) {
  DuhamelExpansionReport r;
  r.betas = betas;
  r.degree = 2 * s + 1;
  Eigen::MatrixXcd k = Eigen::MatrixXcd(gh.kinetic);
  Eigen::MatrixXcd u0 = Eigen::MatrixXcd(gh.coulomb0);
  auto k_eig = eigh<cplx>(k);
  auto h0_eig = eigh<cplx>(Eigen::MatrixXcd(k - u0));
  r.worst_cone_relative = std::numeric_limits<double>::infinity();
  for (double beta : betas) {
    auto terms = duhamel_terms(k_eig, u0, beta, n_terms, s);
    Eigen::MatrixXcd target = expm_from(h0_eig, -beta);
    std::vector<double> rem;
    Eigen::MatrixXcd partial = Eigen::MatrixXcd::Zero(k.rows(), k.cols());
    CounterRng rng(seed, 3);
    std::vector<ConeField> probes;
    for (int q = 0; q < samples; ++q) probes.push_back(random_cone_member(gh.d, gh.points(), rng));
    for (int n = 0; n <= n_terms; ++n) {
      partial += terms[std::size_t(n)];
      rem.push_back(hermitian_norm(target - partial));
      const double term_norm = hermitian_norm(terms[std::size_t(n)]);
      const double partial_norm = hermitian_norm(partial);
      for (const auto& f : probes) {
        Eigen::VectorXcd v = f.flat();
        auto mt = cone_membership(ConeField::from_flat(terms[std::size_t(n)] * v, gh.d), 1e-10, term_norm * f.norm());
        auto mp = cone_membership(ConeField::from_flat(partial * v, gh.d), 1e-10, partial_norm * f.norm());
        r.worst_cone_relative = std::min({r.worst_cone_relative, mt.relative_worst, mp.relative_worst});
        if (!mt.member) r.terms_preserve_cone = false;
        if (!mp.member) r.partial_sums_preserve_cone = false;
      }
    }
    r.remainders.push_back(rem);
  }
  for (int n = 0; n <= n_terms; ++n) {
    std::vector<double> y;
    for (const auto& rem : r.remainders) y.push_back(rem[std::size_t(n)]);
    double slope = betas.size() > 1 ? loglog_slope(betas, y) : 0.0;
    r.slopes.push_back(slope);
    if (std::abs(slope - (n + 1)) > slope_tol) r.slopes_ok = false;
  }
  return r;
}

// --- grid-exact kernel ------------------------------------------------------------------------

/// The D^2 x D^2 block of exp(-beta K_M) between grid points k and k2, divided by the cell
/// volume so that it approximates the integral kernel; acts on row-major psi.
inline Eigen::MatrixXcd grid_kernel(const EigenPairs<cplx>& k_eig, const GridHamiltonian& gh, double beta, Index k,
                                    Index k2) {
  const Index d2 = gh.d * gh.d;
  Eigen::VectorXd w = (-beta * k_eig.values.array()).exp().matrix();
  Eigen::MatrixXcd rows = k_eig.vectors.middleRows(k * d2, d2);
  Eigen::MatrixXcd cols = k_eig.vectors.middleRows(k2 * d2, d2);
  return rows * w.asDiagonal() * cols.adjoint() / gh.grid.weight();
}

}  // namespace hhlab

#endif  // HHLAB_CONE_HPP
