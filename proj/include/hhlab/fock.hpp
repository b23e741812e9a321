#ifndef HHLAB_FOCK_HPP
#define HHLAB_FOCK_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hhlab/error.hpp"
#include "hhlab/lattice_graph.hpp"

namespace hhlab {

using cplx = std::complex<double>;
using Index = Eigen::Index;

template <class Scalar>
using SparseMat = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

template <class Scalar>
using DenseMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using DenseVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Largest |A - A^H| entry relative to the largest |A| entry (0 for the zero matrix).
template <class Scalar>
double hermiticity_residual(const SparseMat<Scalar>& a) {
  SparseMat<Scalar> adj = a.adjoint();
  SparseMat<Scalar> diff = a - adj;
  double scale = 0.0;
  for (Index k = 0; k < a.outerSize(); ++k)
    for (typename SparseMat<Scalar>::InnerIterator it(a, k); it; ++it)
      scale = std::max(scale, std::abs(it.value()));
  double worst = 0.0;
  for (Index k = 0; k < diff.outerSize(); ++k)
    for (typename SparseMat<Scalar>::InnerIterator it(diff, k); it; ++it)
      worst = std::max(worst, std::abs(it.value()));
  return scale > 0 ? worst / scale : 0.0;
}

/// Kronecker product A (x) B with A's index major.
template <class Scalar, class SA, class SB>
SparseMat<Scalar> kron(const SparseMat<SA>& a, const SparseMat<SB>& b) {
  std::vector<Eigen::Triplet<Scalar>> trip;
  trip.reserve(std::size_t(a.nonZeros()) * std::size_t(b.nonZeros()));
  for (Index i = 0; i < a.outerSize(); ++i)
    for (typename SparseMat<SA>::InnerIterator ia(a, i); ia; ++ia)
      for (Index j = 0; j < b.outerSize(); ++j)
        for (typename SparseMat<SB>::InnerIterator ib(b, j); ib; ++ib)
          trip.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(),
                            Scalar(ia.value()) * Scalar(ib.value()));
  SparseMat<Scalar> out(a.rows() * b.rows(), a.cols() * b.cols());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

template <class Scalar>
SparseMat<Scalar> sparse_identity(Index n) {
  SparseMat<Scalar> id(n, n);
  id.setIdentity();
  return id;
}

// --- fermionic modes --------------------------------------------------------

/// A single ladder operator: c_mode (create = false) or c_mode^dagger.
struct Ladder {
  int mode = 0;
  bool create = false;
};

inline Ladder cr(int mode) { return {mode, true}; }
inline Ladder an(int mode) { return {mode, false}; }

/// Applies the operator word (leftmost factor acts last) to the basis vector of `mask`.
/// Sign convention: c_k carries (-1)^{#occupied modes with index < k}.
inline std::optional<std::pair<Mask, int>> apply_word(std::span<const Ladder> word, Mask mask) {
  int sign = 1;
  for (auto it = word.rbegin(); it != word.rend(); ++it) {
    const Mask bit = Mask{1} << it->mode;
    const bool occupied = (mask & bit) != 0;
    if (occupied == it->create) return std::nullopt;
    if (std::popcount(mask & (bit - 1)) & 1) sign = -sign;
    mask ^= bit;
  }
  return std::make_pair(mask, sign);
}

/// Ordered list of occupation bitmasks over `modes` fermionic modes.
class ModeBasis {
 public:
  ModeBasis() = default;
  ModeBasis(int modes, std::vector<Mask> states, std::string tag)
      : modes_(modes), states_(std::move(states)), tag_(std::move(tag)) {
    std::sort(states_.begin(), states_.end());
    states_.erase(std::unique(states_.begin(), states_.end()), states_.end());
  }

  int modes() const { return modes_; }
  Index dim() const { return Index(states_.size()); }
  Mask state(Index i) const { return states_[std::size_t(i)]; }
  const std::vector<Mask>& states() const { return states_; }
  const std::string& tag() const { return tag_; }

  /// Position of `m` or -1.
  Index index_of(Mask m) const {
    auto it = std::lower_bound(states_.begin(), states_.end(), m);
    return (it != states_.end() && *it == m) ? Index(it - states_.begin()) : -1;
  }

  /// Particle number if uniform across the basis, otherwise -1.
  int particle_number() const {
    if (states_.empty()) return 0;
    int n = std::popcount(states_.front());
    for (Mask m : states_)
      if (std::popcount(m) != n) return -1;
    return n;
  }

 private:
  int modes_ = 0;
  std::vector<Mask> states_;
  std::string tag_;
};

/// e_X for all N-subsets X of the vertex set: one spinless species.
inline ModeBasis fermion_basis(int site_count, int particles) {
  require(site_count >= 0 && site_count <= 31, ErrorCode::kInvalidArgument, "site count out of range");
  require(particles >= 0 && particles <= site_count, ErrorCode::kInvalidArgument,
          "particle number out of range");
  return ModeBasis(site_count, combinations(site_count, particles),
                   "F(" + std::to_string(site_count) + "," + std::to_string(particles) + ")");
}

/// Two species on `sites` vertices: mode x for the first (up) species, sites + x for the
/// second (down). Also used for the two tensor factors after the hole-particle transform.
inline int up_mode(int x) { return x; }
inline int down_mode(int sites, int x) { return sites + x; }

inline ModeBasis electron_sector(int sites, int n_up, int n_down) {
  require(n_up >= 0 && n_up <= sites && n_down >= 0 && n_down <= sites, ErrorCode::kInvalidArgument,
          "sector occupation out of range");
  std::vector<Mask> states;
  for (Mask d : combinations(sites, n_down))
    for (Mask u : combinations(sites, n_up)) states.push_back(u | (d << sites));
  return ModeBasis(2 * sites, std::move(states),
                   "E(" + std::to_string(sites) + ";" + std::to_string(n_up) + "," +
                       std::to_string(n_down) + ")");
}

/// Every occupation of 2*sites modes with fixed total particle number.
inline ModeBasis electron_fixed_number(int sites, int n_total) {
  return ModeBasis(2 * sites, combinations(2 * sites, n_total),
                   "E(" + std::to_string(sites) + ";N=" + std::to_string(n_total) + ")");
}

/// The whole Fock space over 2*sites modes.
inline ModeBasis electron_full(int sites) {
  require(sites <= 12, ErrorCode::kBudgetExceeded, "full Fock space too large");
  std::vector<Mask> states(std::size_t(1) << (2 * sites));
  for (std::size_t i = 0; i < states.size(); ++i) states[i] = Mask(i);
  return ModeBasis(2 * sites, std::move(states), "E(" + std::to_string(sites) + ";full)");
}

inline int popcount_low(Mask m, int sites) { return std::popcount(m & ((Mask{1} << sites) - 1)); }
inline int popcount_high(Mask m, int sites) { return std::popcount(m >> sites); }

/// Matrix of coef * word from `from` into `to`; images outside `to` are dropped.
template <class Scalar = double>
SparseMat<Scalar> word_matrix(const ModeBasis& to, const ModeBasis& from, std::span<const Ladder> word,
                              Scalar coef = Scalar(1)) {
  std::vector<Eigen::Triplet<Scalar>> trip;
  for (Index j = 0; j < from.dim(); ++j) {
    auto r = apply_word(word, from.state(j));
    if (!r) continue;
    Index i = to.index_of(r->first);
    if (i >= 0) trip.emplace_back(i, j, coef * Scalar(r->second));
  }
  SparseMat<Scalar> m(to.dim(), from.dim());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

template <class Scalar = double>
SparseMat<Scalar> word_matrix(const ModeBasis& b, std::initializer_list<Ladder> word, Scalar coef = Scalar(1)) {
  return word_matrix<Scalar>(b, b, std::span<const Ladder>(word.begin(), word.size()), coef);
}

/// c_x^dagger c_y on a number-conserving basis.
inline SparseMat<double> hopping(const ModeBasis& b, int x, int y) { return word_matrix<double>(b, {cr(x), an(y)}); }

/// Occupation n_k as a diagonal matrix.
inline SparseMat<double> number(const ModeBasis& b, int mode) {
  SparseMat<double> m(b.dim(), b.dim());
  std::vector<Eigen::Triplet<double>> trip;
  for (Index i = 0; i < b.dim(); ++i)
    if (b.state(i) >> mode & 1) trip.emplace_back(i, i, 1.0);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

/// c_x from the N-particle basis into the (N-1)-particle basis.
inline SparseMat<double> annihilator(const ModeBasis& basis_n, const ModeBasis& basis_nm1, int x) {
  require(basis_n.modes() == basis_nm1.modes(), ErrorCode::kBasisMismatch, "mode counts differ");
  int n = basis_n.particle_number();
  int m = basis_nm1.particle_number();
  require(n >= 1 && m == n - 1, ErrorCode::kBasisMismatch,
          "annihilator needs bases with particle numbers N and N-1");
  require(x >= 0 && x < basis_n.modes(), ErrorCode::kInvalidArgument, "mode out of range");
  const Ladder w[] = {an(x)};
  return word_matrix<double>(basis_nm1, basis_n, w);
}

inline SparseMat<double> creator(const ModeBasis& basis_n, const ModeBasis& basis_np1, int x) {
  require(basis_n.modes() == basis_np1.modes(), ErrorCode::kBasisMismatch, "mode counts differ");
  require(basis_np1.particle_number() == basis_n.particle_number() + 1, ErrorCode::kBasisMismatch,
          "target basis must hold one more particle");
  require(x >= 0 && x < basis_n.modes(), ErrorCode::kInvalidArgument, "mode out of range");
  const Ladder w[] = {cr(x)};
  return word_matrix<double>(basis_np1, basis_n, w);
}

// --- spin and pseudospin -----------------------------------------------------

struct SpinOperators {
  SparseMat<double> s_plus;
  SparseMat<double> s_minus;
  SparseMat<double> s_z;
  SparseMat<double> s_total_sq;
};

/// S_+ = sum_x c^dag_{x up} c_{x down} and friends on an electron basis over `sites` vertices.
/// S_+ and S_- are restricted to `b` (exact when b has fixed N_e); S_tot^2 is exact on any
/// (N_up, N_down) block since it is assembled from number-conserving four-operator words.
inline SpinOperators spin_operators(const ModeBasis& b, int sites) {
  require(b.modes() == 2 * sites, ErrorCode::kBasisMismatch, "basis is not an electron basis");
  SpinOperators s;
  s.s_plus.resize(b.dim(), b.dim());
  s.s_minus.resize(b.dim(), b.dim());
  for (int x = 0; x < sites; ++x) {
    s.s_plus += word_matrix<double>(b, {cr(up_mode(x)), an(down_mode(sites, x))});
    s.s_minus += word_matrix<double>(b, {cr(down_mode(sites, x)), an(up_mode(x))});
  }
  s.s_z.resize(b.dim(), b.dim());
  std::vector<Eigen::Triplet<double>> zt;
  for (Index i = 0; i < b.dim(); ++i)
    zt.emplace_back(i, i, 0.5 * (popcount_low(b.state(i), sites) - popcount_high(b.state(i), sites)));
  s.s_z.setFromTriplets(zt.begin(), zt.end());

  SparseMat<double> pm(b.dim(), b.dim());
  SparseMat<double> mp(b.dim(), b.dim());
  for (int x = 0; x < sites; ++x)
    for (int y = 0; y < sites; ++y) {
      pm += word_matrix<double>(b, {cr(up_mode(x)), an(down_mode(sites, x)), cr(down_mode(sites, y)), an(up_mode(y))});
      mp += word_matrix<double>(b, {cr(down_mode(sites, x)), an(up_mode(x)), cr(up_mode(y)), an(down_mode(sites, y))});
    }
  s.s_total_sq = SparseMat<double>(s.s_z * s.s_z) + 0.5 * pm + 0.5 * mp;
  return s;
}

struct PseudospinOperators {
  SparseMat<double> s_plus;
  SparseMat<double> s_minus;
  SparseMat<double> s_z;
  SparseMat<double> s_total_sq;
};

/// Pseudospin with S~_+ = sum_x gamma(x) c_{x up} c_{x down}; S~_z = |L|/2 - N_e/2.
/// S~_+- are restricted to `b` (exact on the full Fock space); S~_tot^2 is exact on any block.
inline PseudospinOperators pseudospin_operators(const ModeBasis& b, const std::vector<int>& gamma) {
  const int sites = int(gamma.size());
  require(b.modes() == 2 * sites, ErrorCode::kBasisMismatch, "basis is not an electron basis");
  PseudospinOperators s;
  s.s_plus.resize(b.dim(), b.dim());
  s.s_minus.resize(b.dim(), b.dim());
  for (int x = 0; x < sites; ++x) {
    double g = gamma[x];
    s.s_plus += word_matrix<double>(b, {an(up_mode(x)), an(down_mode(sites, x))}, g);
    s.s_minus += word_matrix<double>(b, {cr(down_mode(sites, x)), cr(up_mode(x))}, g);
  }
  s.s_z.resize(b.dim(), b.dim());
  std::vector<Eigen::Triplet<double>> zt;
  for (Index i = 0; i < b.dim(); ++i) zt.emplace_back(i, i, 0.5 * sites - 0.5 * std::popcount(b.state(i)));
  s.s_z.setFromTriplets(zt.begin(), zt.end());

  SparseMat<double> pm(b.dim(), b.dim());
  SparseMat<double> mp(b.dim(), b.dim());
  for (int x = 0; x < sites; ++x)
    for (int y = 0; y < sites; ++y) {
      double g = gamma[x] * gamma[y];
      pm += word_matrix<double>(
          b, {an(up_mode(x)), an(down_mode(sites, x)), cr(down_mode(sites, y)), cr(up_mode(y))}, g);
      mp += word_matrix<double>(
          b, {cr(down_mode(sites, x)), cr(up_mode(x)), an(up_mode(y)), an(down_mode(sites, y))}, g);
    }
  s.s_total_sq = SparseMat<double>(s.s_z * s.s_z) + 0.5 * pm + 0.5 * mp;
  return s;
}

// --- bosons: occupation basis -------------------------------------------------

/// Product of per-site occupation spaces {0..cutoff}; site 0 is the most significant digit.
struct BosonBasisOcc {
  int sites = 0;
  int cutoff = 0;

  BosonBasisOcc(int sites_, int cutoff_) : sites(sites_), cutoff(cutoff_) {
    require(sites >= 0 && cutoff >= 0, ErrorCode::kInvalidArgument, "bad boson basis");
  }

  Index dim() const {
    Index d = 1;
    for (int i = 0; i < sites; ++i) d *= cutoff + 1;
    return d;
  }

  std::vector<int> occupations(Index i) const {
    std::vector<int> occ(sites);
    for (int s = sites - 1; s >= 0; --s) {
      occ[s] = int(i % (cutoff + 1));
      i /= cutoff + 1;
    }
    return occ;
  }

  std::string tag() const { return "B(" + std::to_string(sites) + ";" + std::to_string(cutoff) + ")"; }
};

/// Embeds a single-site operator at site x of a product space with `sites` factors of size `local`.
template <class Scalar>
SparseMat<Scalar> embed_site(const SparseMat<Scalar>& op, int x, int sites, Index local) {
  SparseMat<Scalar> left = sparse_identity<Scalar>(1);
  for (int s = 0; s < x; ++s) left = kron<Scalar>(left, sparse_identity<Scalar>(local));
  SparseMat<Scalar> out = kron<Scalar>(left, op);
  for (int s = x + 1; s < sites; ++s) out = kron<Scalar>(out, sparse_identity<Scalar>(local));
  return out;
}

inline SparseMat<double> single_site_lowering(int cutoff) {
  SparseMat<double> b(cutoff + 1, cutoff + 1);
  std::vector<Eigen::Triplet<double>> t;
  for (int n = 1; n <= cutoff; ++n) t.emplace_back(n - 1, n, std::sqrt(double(n)));
  b.setFromTriplets(t.begin(), t.end());
  return b;
}

struct BosonOperators {
  SparseMat<double> b;
  SparseMat<double> b_dag;
  SparseMat<double> q;
  SparseMat<cplx> p;
};

/// Truncated ladder operators with q = (b^dag + b)/sqrt(2 w0), p = i sqrt(w0/2)(b^dag - b).
inline BosonOperators boson_ops_occ(const BosonBasisOcc& basis, int x, double omega0) {
  require(basis.cutoff >= 1, ErrorCode::kInvalidArgument, "boson cutoff must be >= 1");
  require(x >= 0 && x < basis.sites, ErrorCode::kInvalidArgument, "site out of range");
  require(omega0 > 0, ErrorCode::kInvalidArgument, "omega0 must be positive");
  SparseMat<double> b1 = single_site_lowering(basis.cutoff);
  SparseMat<double> bd1 = b1.transpose();
  BosonOperators ops;
  ops.b = embed_site(b1, x, basis.sites, basis.cutoff + 1);
  ops.b_dag = embed_site(bd1, x, basis.sites, basis.cutoff + 1);
  ops.q = (ops.b_dag + ops.b) / std::sqrt(2.0 * omega0);
  SparseMat<double> diff = ops.b_dag - ops.b;
  ops.p = diff.cast<cplx>() * cplx(0.0, std::sqrt(omega0 / 2.0));
  return ops;
}

// --- bosons: Schroedinger grid ------------------------------------------------

/// Symmetric grid of n_q points on [-q_max, q_max] per coordinate; site 0 most significant.
struct QGrid {
  int sites = 0;
  int n_q = 0;
  double q_max = 0.0;

  QGrid(int sites_, int n_q_, double q_max_) : sites(sites_), n_q(n_q_), q_max(q_max_) {
    require(n_q >= 3 && n_q % 2 == 1, ErrorCode::kInvalidArgument, "n_q must be odd and >= 3");
    require(q_max > 0, ErrorCode::kInvalidArgument, "q_max must be positive");
  }

  double spacing() const { return 2.0 * q_max / (n_q - 1); }
  double point(int k) const { return -q_max + k * spacing(); }
  /// Volume element of one grid cell in Q = R^{sites}.
  double weight() const { return std::pow(spacing(), sites); }

  Index dim() const {
    Index d = 1;
    for (int i = 0; i < sites; ++i) d *= n_q;
    return d;
  }

  std::vector<int> digits(Index i) const {
    std::vector<int> k(sites);
    for (int s = sites - 1; s >= 0; --s) {
      k[s] = int(i % n_q);
      i /= n_q;
    }
    return k;
  }

  std::vector<double> coordinates(Index i) const {
    auto k = digits(i);
    std::vector<double> q(sites);
    for (int s = 0; s < sites; ++s) q[s] = point(k[s]);
    return q;
  }

  /// True when no coordinate sits on the outermost grid layer.
  bool interior(Index i) const {
    for (int k : digits(i))
      if (k == 0 || k == n_q - 1) return false;
    return true;
  }

  std::string tag() const {
    return "Q(" + std::to_string(sites) + ";" + std::to_string(n_q) + "," + std::to_string(q_max) + ")";
  }
};

/// Default q_max so that the harmonic ground state tail is negligible at the boundary.
inline double default_q_max(double omega0) { return 6.0 / std::sqrt(omega0); }

struct GridOperators {
  SparseMat<double> q;
  SparseMat<double> p_sq;
};

inline SparseMat<double> single_coordinate_laplacian(const QGrid& g) {
  const double h2 = g.spacing() * g.spacing();
  SparseMat<double> lap(g.n_q, g.n_q);
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < g.n_q; ++k) {
    t.emplace_back(k, k, -2.0 / h2);
    if (k > 0) t.emplace_back(k, k - 1, 1.0 / h2);
    if (k + 1 < g.n_q) t.emplace_back(k, k + 1, 1.0 / h2);
  }
  lap.setFromTriplets(t.begin(), t.end());
  return lap;
}

/// q_x as a diagonal multiplication and p_x^2 = -d^2/dq_x^2 by central differences (Dirichlet).
inline GridOperators qgrid_ops(const QGrid& g, int x) {
  require(x >= 0 && x < g.sites, ErrorCode::kInvalidArgument, "coordinate out of range");
  SparseMat<double> q1(g.n_q, g.n_q);
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < g.n_q; ++k) t.emplace_back(k, k, g.point(k));
  q1.setFromTriplets(t.begin(), t.end());
  SparseMat<double> p2 = -single_coordinate_laplacian(g);
  return {embed_site(q1, x, g.sites, g.n_q), embed_site(p2, x, g.sites, g.n_q)};
}

/// H_p = 1/2 sum_x (p_x^2 + w0^2 q_x^2) - w0 |L| / 2 on the grid.
inline SparseMat<double> grid_phonon_energy(const QGrid& g, double omega0) {
  SparseMat<double> h(g.dim(), g.dim());
  for (int x = 0; x < g.sites; ++x) {
    auto ops = qgrid_ops(g, x);
    h += 0.5 * ops.p_sq + 0.5 * omega0 * omega0 * SparseMat<double>(ops.q * ops.q);
  }
  h -= 0.5 * omega0 * g.sites * sparse_identity<double>(g.dim());
  return h;
}

// --- phonon spaces used by the Hamiltonian assembly ------------------------------

/// Truncated occupation-number phonons; H_p = w0 sum b^dag b (normal ordered).
class OccupationPhonons {
 public:
  OccupationPhonons(int sites, int cutoff, double omega0) : basis_(sites, cutoff), omega0_(omega0) {
    require(omega0 > 0, ErrorCode::kInvalidArgument, "omega0 must be positive");
    require(cutoff >= 0, ErrorCode::kInvalidArgument, "cutoff must be >= 0");
    Eigen::MatrixXd q1 = Eigen::MatrixXd(single_site_lowering(cutoff));
    q1 = (q1 + q1.transpose().eval()) / std::sqrt(2.0 * omega0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q1);
    q_vals_ = es.eigenvalues();
    q_vecs_ = es.eigenvectors();
  }

  int sites() const { return basis_.sites; }
  Index dim() const { return basis_.dim(); }
  double omega0() const { return omega0_; }
  const BosonBasisOcc& basis() const { return basis_; }
  std::string tag() const { return basis_.tag(); }

  SparseMat<double> position(int z) const {
    SparseMat<double> b1 = single_site_lowering(basis_.cutoff);
    SparseMat<double> q1 = (SparseMat<double>(b1.transpose()) + b1) / std::sqrt(2.0 * omega0_);
    return embed_site(q1, z, basis_.sites, basis_.cutoff + 1);
  }

  SparseMat<double> energy() const {
    SparseMat<double> h(dim(), dim());
    std::vector<Eigen::Triplet<double>> t;
    for (Index i = 0; i < dim(); ++i) {
      double n = 0;
      for (int o : basis_.occupations(i)) n += o;
      t.emplace_back(i, i, omega0_ * n);
    }
    h.setFromTriplets(t.begin(), t.end());
    return h;
  }

  /// exp(i sum_z a_z q_z) with each exponential taken of the truncated q_z.
  SparseMat<cplx> phase(std::span<const double> a) const {
    SparseMat<cplx> out = sparse_identity<cplx>(1);
    for (int z = 0; z < basis_.sites; ++z) {
      SparseMat<cplx> local;
      if (a[z] == 0.0) {
        local = sparse_identity<cplx>(basis_.cutoff + 1);
      } else {
        Eigen::VectorXcd d = (cplx(0, a[z]) * q_vals_.cast<cplx>()).array().exp().matrix();
        Eigen::MatrixXcd m = q_vecs_.cast<cplx>() * d.asDiagonal() * q_vecs_.transpose().cast<cplx>();
        local = m.sparseView(0.0, 0.0);
      }
      out = kron<cplx>(out, local);
    }
    return out;
  }

 private:
  BosonBasisOcc basis_;
  double omega0_;
  Eigen::VectorXd q_vals_;
  Eigen::MatrixXd q_vecs_;
};

/// Schroedinger-representation phonons on a finite grid; phases are exact diagonal unitaries.
class GridPhonons {
 public:
  GridPhonons(QGrid grid, double omega0) : grid_(grid), omega0_(omega0) {
    require(omega0 > 0, ErrorCode::kInvalidArgument, "omega0 must be positive");
  }

  int sites() const { return grid_.sites; }
  Index dim() const { return grid_.dim(); }
  double omega0() const { return omega0_; }
  const QGrid& grid() const { return grid_; }
  std::string tag() const { return grid_.tag(); }

  SparseMat<double> position(int z) const { return qgrid_ops(grid_, z).q; }
  SparseMat<double> energy() const { return grid_phonon_energy(grid_, omega0_); }

  SparseMat<cplx> phase(std::span<const double> a) const {
    SparseMat<cplx> out(dim(), dim());
    std::vector<Eigen::Triplet<cplx>> t;
    t.reserve(std::size_t(dim()));
    for (Index i = 0; i < dim(); ++i) {
      auto q = grid_.coordinates(i);
      double arg = 0;
      for (int z = 0; z < grid_.sites; ++z) arg += a[z] * q[z];
      t.emplace_back(i, i, std::polar(1.0, arg));
    }
    out.setFromTriplets(t.begin(), t.end());
    return out;
  }

 private:
  QGrid grid_;
  double omega0_;
};

template <class P>
concept PhononSpace = requires(const P& p, std::span<const double> a) {
  { p.sites() } -> std::convertible_to<int>;
  { p.dim() } -> std::convertible_to<Index>;
  { p.omega0() } -> std::convertible_to<double>;
  { p.position(0) } -> std::convertible_to<SparseMat<double>>;
  { p.energy() } -> std::convertible_to<SparseMat<double>>;
  { p.phase(a) } -> std::convertible_to<SparseMat<cplx>>;
  { p.tag() } -> std::convertible_to<std::string>;
};

// --- truncation studies --------------------------------------------------------

/// Values of a scalar computation along a resolution ladder, with successive differences.
struct ConvergenceStudy {
  std::vector<int> ladder;
  std::vector<double> values;
  std::vector<double> cauchy;  ///< |values[k+1] - values[k]|

  bool differences_decreasing() const {
    for (std::size_t k = 1; k < cauchy.size(); ++k)
      if (!(cauchy[k] < cauchy[k - 1])) return false;
    return true;
  }
};

template <class F>
ConvergenceStudy convergence_study(const std::vector<int>& ladder, F&& compute) {
  ConvergenceStudy s;
  s.ladder = ladder;
  for (int r : ladder) s.values.push_back(compute(r));
  for (std::size_t k = 1; k < s.values.size(); ++k) s.cauchy.push_back(std::abs(s.values[k] - s.values[k - 1]));
  return s;
}

}  // namespace hhlab

#endif  // HHLAB_FOCK_HPP
