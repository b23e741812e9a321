#ifndef HHLAB_MODEL_HPP
#define HHLAB_MODEL_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hhlab/error.hpp"
#include "hhlab/fock.hpp"
#include "hhlab/lattice_graph.hpp"

namespace hhlab {

/// A symmetric function of the vertex difference, given by its on-site value, its value on
/// graph edges, and an optional explicit matrix added on top.
struct Coupling {
  double onsite = 0.0;
  double nearest = 0.0;
  std::optional<Eigen::MatrixXd> table;

  static Coupling zero() { return {}; }
  static Coupling on_site(double v) { return {v, 0.0, std::nullopt}; }
  static Coupling bond(double v) { return {0.0, v, std::nullopt}; }
  static Coupling explicit_table(Eigen::MatrixXd m) { return {0.0, 0.0, std::move(m)}; }

  Eigen::MatrixXd matrix(const Graph& g) const {
    const int n = g.vertex_count();
    Eigen::MatrixXd m = onsite * Eigen::MatrixXd::Identity(n, n);
    for (const Edge& e : g.edges()) {
      m(e.a, e.b) += nearest;
      m(e.b, e.a) += nearest;
    }
    if (table) {
      require(table->rows() == n && table->cols() == n, ErrorCode::kInvalidArgument,
              "coupling table has the wrong shape");
      m += *table;
    }
    require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, m.cwiseAbs().maxCoeff()),
            ErrorCode::kInvalidArgument, "coupling must be symmetric");
    return m;
  }
};

struct CouplingSpec {
  Coupling t;
  Coupling U;
  Coupling g;
  double omega0 = 1.0;
};

/// Couplings evaluated on a particular graph.
struct CouplingMatrices {
  Eigen::MatrixXd t;
  Eigen::MatrixXd U;
  Eigen::MatrixXd g;
  double omega0 = 1.0;

  int sites() const { return int(U.rows()); }
};

inline CouplingMatrices evaluate(const Graph& graph, const CouplingSpec& c) {
  require(c.omega0 > 0.0, ErrorCode::kInvalidArgument, "omega0 must be positive");
  return {c.t.matrix(graph), c.U.matrix(graph), c.g.matrix(graph), c.omega0};
}

/// U on-site U0 plus nearest-neighbour U1/(2d), the form whose Fourier transform is
/// (U0 - U1) + (U1/d) sum_j (1 + cos p_j).
inline Coupling nearest_neighbour_coulomb(double u0, double u1, int d) { return {u0, u1 / (2.0 * d), std::nullopt}; }

// --- effective Coulomb --------------------------------------------------------

struct EffectiveCoulomb {
  Eigen::MatrixXd matrix;      ///< U_eff(x - y)
  Eigen::MatrixXd attraction;  ///< V(x - y) = (2/w0) sum_z g(x-z) g(y-z)
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  bool psd = false;
  bool pd = false;
  double u0 = 0.0;  ///< smallest eigenvalue (meaningful as a lower bound when pd)
};

inline EffectiveCoulomb effective_coulomb(const CouplingMatrices& c) {
  require(c.omega0 > 0.0, ErrorCode::kInvalidArgument, "omega0 must be positive");
  EffectiveCoulomb e;
  e.attraction = (2.0 / c.omega0) * c.g * c.g.transpose();
  e.matrix = c.U - e.attraction;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.matrix);
  e.eigenvalues = es.eigenvalues();
  e.eigenvectors = es.eigenvectors();
  // Relative to the inputs: at exact cancellation U_eff itself is rounding noise.
  const double scale = c.U.size() ? std::max(c.U.cwiseAbs().maxCoeff(), e.attraction.cwiseAbs().maxCoeff()) : 0.0;
  const double tol = 1e-12 * c.U.rows() * scale;
  e.psd = e.eigenvalues.size() == 0 || e.eigenvalues.minCoeff() >= -tol;
  e.pd = e.eigenvalues.size() > 0 && e.eigenvalues.minCoeff() > tol;
  e.u0 = e.eigenvalues.size() ? e.eigenvalues.minCoeff() : 0.0;
  return e;
}

struct A1Report {
  bool holds = false;
  Eigen::VectorXd sums;  ///< sum_x g(x - y) for each y
  double deviation = 0.0;
  double g_star = 0.0;
};

/// Whether sum_x g(x - y) is independent of y.
inline A1Report check_A1(const Eigen::MatrixXd& g) {
  A1Report r;
  r.sums = g.colwise().sum().transpose();
  if (r.sums.size() == 0) {
    r.holds = true;
    return r;
  }
  r.deviation = r.sums.maxCoeff() - r.sums.minCoeff();
  r.holds = r.deviation < 1e-12;
  if (r.holds) r.g_star = r.sums.mean();
  return r;
}

/// mu_x = (2/w0) sum_{y,z} g(x-z) g(z-y).
inline Eigen::VectorXd chemical_potential(const CouplingMatrices& c) {
  require(c.omega0 > 0.0, ErrorCode::kInvalidArgument, "omega0 must be positive");
  return ((2.0 / c.omega0) * c.g * c.g).rowwise().sum();
}

// --- sectors ----------------------------------------------------------------------

/// Spin-z sector at half filling, with M stored as the integer 2M.
struct SectorSpec {
  int sites = 0;
  int two_m = 0;
  int n_up = 0;
  int n_down = 0;
  int m_hat = 0;  ///< particles per factor after the hole-particle transform

  static SectorSpec from_two_m(int sites, int two_m) {
    require((sites + two_m) % 2 == 0, ErrorCode::kInvalidArgument, "2M must have the parity of |L|");
    require(std::abs(two_m) <= sites, ErrorCode::kInvalidArgument, "|M| exceeds |L|/2");
    SectorSpec s;
    s.sites = sites;
    s.two_m = two_m;
    s.n_up = (sites + two_m) / 2;
    s.n_down = (sites - two_m) / 2;
    s.m_hat = (sites - two_m) / 2;
    return s;
  }

  double m() const { return 0.5 * two_m; }

  /// All sectors at half filling, ordered by increasing M.
  static std::vector<SectorSpec> all(int sites) {
    std::vector<SectorSpec> out;
    for (int tm = -sites; tm <= sites; tm += 2) out.push_back(from_two_m(sites, tm));
    return out;
  }

  std::string label() const {
    return two_m % 2 == 0 ? std::to_string(two_m / 2) : std::to_string(two_m) + "/2";
  }

  ModeBasis original_basis() const { return electron_sector(sites, n_up, n_down); }
  ModeBasis transformed_basis() const { return electron_sector(sites, m_hat, m_hat); }
};

// --- assembly ----------------------------------------------------------------------

template <class Scalar>
struct SparseHermitian {
  SparseMat<Scalar> matrix;
  std::string basis;

  Index dim() const { return matrix.rows(); }
  double residual() const { return hermiticity_residual(matrix); }
};

namespace detail {

template <class Scalar, class SA, class SB>
void add_kron(std::vector<Eigen::Triplet<Scalar>>& out, Scalar coef, const SparseMat<SA>& a, const SparseMat<SB>& b) {
  for (Index i = 0; i < a.outerSize(); ++i)
    for (typename SparseMat<SA>::InnerIterator ia(a, i); ia; ++ia)
      for (Index j = 0; j < b.outerSize(); ++j)
        for (typename SparseMat<SB>::InnerIterator ib(b, j); ib; ++ib)
          out.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(),
                           coef * Scalar(ia.value()) * Scalar(ib.value()));
}

template <class Scalar>
void add_diag_kron_identity(std::vector<Eigen::Triplet<Scalar>>& out, const std::vector<double>& diag, Index pdim) {
  for (std::size_t e = 0; e < diag.size(); ++e) {
    if (diag[e] == 0.0) continue;
    for (Index k = 0; k < pdim; ++k) out.emplace_back(Index(e) * pdim + k, Index(e) * pdim + k, Scalar(diag[e]));
  }
}

/// Phase vector a_z = sqrt(2/w0) (g(x-z) - g(y-z)) of Phi_{x,y}.
inline std::vector<double> phase_coefficients(const CouplingMatrices& c, int x, int y) {
  std::vector<double> a(c.sites());
  const double s = std::sqrt(2.0 / c.omega0);
  for (int z = 0; z < c.sites(); ++z) a[z] = s * (c.g(x, z) - c.g(y, z));
  return a;
}

inline std::vector<std::pair<int, int>> hopping_pairs(const CouplingMatrices& c) {
  std::vector<std::pair<int, int>> p;
  for (int x = 0; x < c.sites(); ++x)
    for (int y = 0; y < c.sites(); ++y)
      if (x != y && c.t(x, y) != 0.0) p.emplace_back(x, y);
  return p;
}

inline void require_electron_basis(const ModeBasis& b, int sites) {
  require(b.modes() == 2 * sites, ErrorCode::kBasisMismatch, "electron basis does not match the graph");
}

}  // namespace detail

/// H = -sum t c^dag_{x s} c_{y s} + 1/2 sum U (n_x - 1)(n_y - 1) + sum g n_x (b^dag_y + b_y)
///     + H_p + sum mu_x n_x, on an electron basis (tensor) phonon space.
template <PhononSpace Phonons>
SparseHermitian<double> assemble_H(const CouplingMatrices& c, const ModeBasis& basis, const Phonons& ph,
                                   const std::optional<Eigen::VectorXd>& mu = std::nullopt) {
  const int n = c.sites();
  detail::require_electron_basis(basis, n);
  require(ph.sites() == n, ErrorCode::kBasisMismatch, "phonon space does not match the graph");
  require(std::abs(ph.omega0() - c.omega0) < 1e-15, ErrorCode::kBasisMismatch, "phonon frequency mismatch");
  const Index pdim = ph.dim();
  std::vector<Eigen::Triplet<double>> trip;

  for (auto [x, y] : detail::hopping_pairs(c))
    for (int spin = 0; spin < 2; ++spin) {
      int mx = spin == 0 ? up_mode(x) : down_mode(n, x);
      int my = spin == 0 ? up_mode(y) : down_mode(n, y);
      auto hop = word_matrix<double>(basis, {cr(mx), an(my)});
      detail::add_kron(trip, -c.t(x, y), hop, sparse_identity<double>(pdim));
    }

  std::vector<double> diag(std::size_t(basis.dim()), 0.0);
  for (Index i = 0; i < basis.dim(); ++i) {
    Mask m = basis.state(i);
    std::vector<double> occ(n);
    for (int x = 0; x < n; ++x) occ[x] = double((m >> up_mode(x) & 1) + (m >> down_mode(n, x) & 1));
    double e = 0;
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y) e += 0.5 * c.U(x, y) * (occ[x] - 1) * (occ[y] - 1);
    if (mu)
      for (int x = 0; x < n; ++x) e += (*mu)[x] * occ[x];
    diag[std::size_t(i)] = e;
  }
  detail::add_diag_kron_identity(trip, diag, pdim);

  const double disp = std::sqrt(2.0 * c.omega0);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      if (c.g(x, y) == 0.0) continue;
      SparseMat<double> nx = number(basis, up_mode(x)) + number(basis, down_mode(n, x));
      detail::add_kron(trip, c.g(x, y) * disp, nx, ph.position(y));
    }
  detail::add_kron(trip, 1.0, sparse_identity<double>(basis.dim()), ph.energy());

  SparseMat<double> h(basis.dim() * pdim, basis.dim() * pdim);
  h.setFromTriplets(trip.begin(), trip.end());
  return {std::move(h), basis.tag() + "x" + ph.tag()};
}

struct LangFirsovResult {
  SparseHermitian<cplx> hamiltonian;
  /// E(H_M) = E(transformed) + shift for every eigenvalue.
  double shift = 0.0;
};

/// Lang-Firsov frame: -T_{-g,up} - T_{-g,down} + 1/2 sum U_eff (n_x - 1)(n_y - 1) + H_p on a
/// (N_up, N_down) sector. The shift -|L| g_*^2 / w0 follows from completing the square at
/// half filling with the normal-ordered H_p.
template <PhononSpace Phonons>
LangFirsovResult lang_firsov_hamiltonian(const CouplingMatrices& c, const SectorSpec& sector, const Phonons& ph) {
  const int n = c.sites();
  auto a1 = check_A1(c.g);
  require(a1.holds, ErrorCode::kA1Violated,
          "column sums of g differ by " + std::to_string(a1.deviation) + "; the constant shift is undefined");
  require(sector.sites == n, ErrorCode::kBasisMismatch, "sector does not match the graph");
  ModeBasis basis = sector.original_basis();
  const Index pdim = ph.dim();
  auto ueff = effective_coulomb(c);
  std::vector<Eigen::Triplet<cplx>> trip;

  for (auto [x, y] : detail::hopping_pairs(c)) {
    auto a = detail::phase_coefficients(c, x, y);
    for (double& v : a) v = -v;
    SparseMat<cplx> phase = ph.phase(a);
    for (int spin = 0; spin < 2; ++spin) {
      int mx = spin == 0 ? up_mode(x) : down_mode(n, x);
      int my = spin == 0 ? up_mode(y) : down_mode(n, y);
      detail::add_kron(trip, cplx(-c.t(x, y)), word_matrix<double>(basis, {cr(mx), an(my)}), phase);
    }
  }
  std::vector<double> diag(std::size_t(basis.dim()), 0.0);
  for (Index i = 0; i < basis.dim(); ++i) {
    Mask m = basis.state(i);
    double e = 0;
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y) {
        double ox = double((m >> up_mode(x) & 1) + (m >> down_mode(n, x) & 1)) - 1;
        double oy = double((m >> up_mode(y) & 1) + (m >> down_mode(n, y) & 1)) - 1;
        e += 0.5 * ueff.matrix(x, y) * ox * oy;
      }
    diag[std::size_t(i)] = e;
  }
  detail::add_diag_kron_identity(trip, diag, pdim);
  detail::add_kron(trip, cplx(1.0), sparse_identity<double>(basis.dim()), ph.energy());

  SparseMat<cplx> h(basis.dim() * pdim, basis.dim() * pdim);
  h.setFromTriplets(trip.begin(), trip.end());
  LangFirsovResult r;
  r.hamiltonian = {std::move(h), basis.tag() + "x" + ph.tag() + ":LF"};
  r.shift = -double(n) * a1.g_star * a1.g_star / c.omega0;
  return r;
}

/// -T_{+g} (x) 1 - 1 (x) T_{-g} + 1/2 sum U_eff (s_x + h_x)(s_y + h_y) + H_p with
/// s_x = n_x (x) 1 - 1 (x) n_x. Modes 0..|L|-1 form the first factor, |L|..2|L|-1 the second.
/// On a (M^, M^) sector with h = 0 this is the hole-particle Hamiltonian; on the full space it
/// is the field-deformed Hamiltonian.
template <PhononSpace Phonons>
SparseHermitian<cplx> transformed_hamiltonian(const CouplingMatrices& c, const ModeBasis& basis, const Phonons& ph,
                                              const std::optional<Eigen::VectorXd>& h = std::nullopt) {
  const int n = c.sites();
  detail::require_electron_basis(basis, n);
  require(ph.sites() == n, ErrorCode::kBasisMismatch, "phonon space does not match the graph");
  require(!h || h->size() == n, ErrorCode::kInvalidArgument, "field has the wrong length");
  auto a1 = check_A1(c.g);
  require(a1.holds, ErrorCode::kA1Violated, "column sums of g are not constant");
  const Index pdim = ph.dim();
  auto ueff = effective_coulomb(c);
  std::vector<Eigen::Triplet<cplx>> trip;

  for (auto [x, y] : detail::hopping_pairs(c)) {
    auto a = detail::phase_coefficients(c, x, y);
    SparseMat<cplx> plus = ph.phase(a);
    for (double& v : a) v = -v;
    SparseMat<cplx> minus = ph.phase(a);
    detail::add_kron(trip, cplx(-c.t(x, y)), word_matrix<double>(basis, {cr(up_mode(x)), an(up_mode(y))}), plus);
    detail::add_kron(trip, cplx(-c.t(x, y)),
                     word_matrix<double>(basis, {cr(down_mode(n, x)), an(down_mode(n, y))}), minus);
  }
  std::vector<double> diag(std::size_t(basis.dim()), 0.0);
  for (Index i = 0; i < basis.dim(); ++i) {
    Mask m = basis.state(i);
    std::vector<double> s(n);
    for (int x = 0; x < n; ++x)
      s[x] = double(m >> up_mode(x) & 1) - double(m >> down_mode(n, x) & 1) + (h ? (*h)[x] : 0.0);
    double e = 0;
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y) e += 0.5 * ueff.matrix(x, y) * s[x] * s[y];
    diag[std::size_t(i)] = e;
  }
  detail::add_diag_kron_identity(trip, diag, pdim);
  detail::add_kron(trip, cplx(1.0), sparse_identity<double>(basis.dim()), ph.energy());

  SparseMat<cplx> out(basis.dim() * pdim, basis.dim() * pdim);
  out.setFromTriplets(trip.begin(), trip.end());
  return {std::move(out), basis.tag() + "x" + ph.tag() + ":HP"};
}

template <PhononSpace Phonons>
SparseHermitian<cplx> hole_particle_hamiltonian(const CouplingMatrices& c, const SectorSpec& sector,
                                                const Phonons& ph) {
  return transformed_hamiltonian(c, sector.transformed_basis(), ph);
}

/// Field-deformed Hamiltonian on the full two-factor Fock space (tensor) phonons.
template <PhononSpace Phonons>
SparseHermitian<cplx> hamiltonian_h_field(const CouplingMatrices& c, const Phonons& ph, const Eigen::VectorXd& h) {
  return transformed_hamiltonian(c, electron_full(c.sites()), ph, h);
}

/// The diagonal (in electron occupations) field term lambda <s, U_eff h> + lambda^2/2 <h, U_eff h>.
inline std::vector<double> field_shift_diagonal(const CouplingMatrices& c, const ModeBasis& basis,
                                                const Eigen::VectorXd& h, double lambda) {
  const int n = c.sites();
  auto ueff = effective_coulomb(c);
  Eigen::VectorXd uh = ueff.matrix * h;
  std::vector<double> d(std::size_t(basis.dim()));
  for (Index i = 0; i < basis.dim(); ++i) {
    Mask m = basis.state(i);
    double lin = 0;
    for (int x = 0; x < n; ++x) lin += (double(m >> up_mode(x) & 1) - double(m >> down_mode(n, x) & 1)) * uh[x];
    d[std::size_t(i)] = lambda * lin + 0.5 * lambda * lambda * h.dot(uh);
  }
  return d;
}

}  // namespace hhlab

#endif  // HHLAB_MODEL_HPP
