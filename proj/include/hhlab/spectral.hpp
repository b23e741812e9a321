#ifndef HHLAB_SPECTRAL_HPP
#define HHLAB_SPECTRAL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "hhlab/fock.hpp"
#include "hhlab/linalg.hpp"
#include "hhlab/model.hpp"

namespace hhlab {

/// Lowest k eigenpairs; dense below 4000, block Lanczos above.
template <class Scalar>
EigenPairs<Scalar> ground_state(const SparseMat<Scalar>& h, int k = 2, double tol = 1e-10) {
  require(k >= 1, ErrorCode::kInvalidArgument, "k must be positive");
  EigOptions opt;
  opt.k = k;
  opt.tol = tol;
  return lowest_eigenpairs(h, opt);
}

/// A vector on (electron basis) (tensor) (phonon space) reshaped to a De x P matrix.
template <class Scalar>
DenseMat<Scalar> electron_view(const DenseVec<Scalar>& v, Index pdim) {
  using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(v.data(), v.size() / pdim, pdim);
}

/// <v, (O (x) 1) v> for an electron operator O.
template <class Scalar, class OpScalar>
Scalar electron_expectation(const SparseMat<OpScalar>& op, const DenseVec<Scalar>& v, Index pdim) {
  require(v.size() == op.cols() * pdim, ErrorCode::kBasisMismatch, "vector does not match operator");
  DenseMat<Scalar> phi = electron_view(v, pdim);
  DenseMat<Scalar> o = op.template cast<Scalar>() * phi;
  return (phi.adjoint() * o).trace();
}

/// Matrix of <S_{x+} S_{y-}> with S_{x+} = c^dag_{x up} c_{x down}.
template <class Scalar>
Eigen::MatrixXd spin_correlations(const DenseVec<Scalar>& phi, const ModeBasis& basis, int sites, Index pdim) {
  Eigen::MatrixXd out(sites, sites);
  for (int x = 0; x < sites; ++x)
    for (int y = 0; y < sites; ++y) {
      auto op = word_matrix<double>(
          basis, {cr(up_mode(x)), an(down_mode(sites, x)), cr(down_mode(sites, y)), an(up_mode(y))});
      out(x, y) = std::real(electron_expectation(op, phi, pdim));
    }
  return out;
}

/// Orthonormal basis of ker(S~_tot^2) inside the electron block `basis`.
inline Eigen::MatrixXd pseudospin_singlets(const ModeBasis& basis, const std::vector<int>& gamma) {
  auto ps = pseudospin_operators(basis, gamma);
  Eigen::MatrixXd s2 = Eigen::MatrixXd(ps.s_total_sq);
  auto ep = eigh<double>(s2);
  int count = 0;
  while (count < ep.values.size() && ep.values[count] < 1e-8) ++count;
  return ep.vectors.leftCols(count);
}

/// ||P~ phi||^2 with P~ the projection onto ker(S~_tot^2), acting on the electron factor.
template <class Scalar>
double pseudospin_singlet_overlap(const DenseVec<Scalar>& phi, const ModeBasis& basis, const std::vector<int>& gamma,
                                  Index pdim) {
  Eigen::MatrixXd kernel = pseudospin_singlets(basis, gamma);
  if (kernel.cols() == 0) return 0.0;
  DenseMat<Scalar> view = electron_view(phi, pdim);
  DenseMat<Scalar> proj = kernel.transpose().template cast<Scalar>() * view;
  return proj.squaredNorm() / std::max(phi.squaredNorm(), 1e-300);
}

/// Total spin from <S_tot^2>: S = (-1 + sqrt(1 + 4 <S^2>))/2 rounded to a half-integer.
struct SpinEstimate {
  double expectation = 0.0;
  double s = 0.0;
  double residual = 0.0;  ///< ||S^2 phi - <S^2> phi||
};

template <class Scalar>
SpinEstimate total_spin(const DenseVec<Scalar>& phi, const ModeBasis& basis, int sites, Index pdim) {
  auto ops = spin_operators(basis, sites);
  SpinEstimate e;
  DenseMat<Scalar> view = electron_view(phi, pdim);
  DenseMat<Scalar> applied = ops.s_total_sq.template cast<Scalar>() * view;
  e.expectation = std::real((view.adjoint() * applied).trace()) / phi.squaredNorm();
  e.residual = (applied - e.expectation * view).norm() / phi.norm();
  double raw = 0.5 * (-1.0 + std::sqrt(std::max(0.0, 1.0 + 4.0 * e.expectation)));
  e.s = 0.5 * std::round(2.0 * raw);
  return e;
}

struct GroundStateReport {
  SectorSpec sector;
  int cutoff = 0;
  double e0 = 0.0;
  double e1 = 0.0;
  double gap = 0.0;
  double gap_tol = 0.0;
  bool degenerate = true;
  Eigen::VectorXd ground;
  SpinEstimate spin;
  double pseudospin_overlap = 0.0;
  Eigen::MatrixXd correlations;
  Eigen::VectorXd residuals;
};

struct SectorOptions {
  double gap_rel = 1e-8;
  double tol = 1e-10;
};

/// Ground state of H_M in the original frame with an occupation cutoff per site.
inline GroundStateReport sector_report(const LatticeGraph& graph, const CouplingMatrices& c, const SectorSpec& sector,
                                       int cutoff, const SectorOptions& opt = {}) {
  require(graph.vertex_count() % 2 == 0, ErrorCode::kInvalidArgument, "sector reports need an even vertex count");
  OccupationPhonons ph(c.sites(), cutoff, c.omega0);
  ModeBasis basis = sector.original_basis();
  auto h = assemble_H(c, basis, ph);
  const int k = int(std::min<Index>(2, h.dim()));
  auto eig = ground_state(h.matrix, k, opt.tol);

  GroundStateReport r;
  r.sector = sector;
  r.cutoff = cutoff;
  r.e0 = eig.values[0];
  r.e1 = k > 1 ? eig.values[1] : std::numeric_limits<double>::infinity();
  r.gap = r.e1 - r.e0;
  r.gap_tol = opt.gap_rel * std::max(1.0, std::abs(r.e0));
  r.degenerate = !(r.gap > r.gap_tol);
  r.ground = eig.vectors.col(0);
  r.residuals = eig.residuals;
  r.spin = total_spin<double>(r.ground, basis, c.sites(), ph.dim());
  r.pseudospin_overlap = pseudospin_singlet_overlap<double>(r.ground, basis, graph.sublattice_sign(), ph.dim());
  r.correlations = spin_correlations<double>(r.ground, basis, c.sites(), ph.dim());
  return r;
}

/// Whether sign(C_xy) agrees with gamma(x) gamma(y) for every entry with |C_xy| > threshold,
/// and whether no entry falls below the threshold.
struct SignPattern {
  bool agrees = true;
  bool all_resolved = true;
  double smallest = std::numeric_limits<double>::infinity();
};

inline SignPattern check_sign_pattern(const Eigen::MatrixXd& corr, const std::vector<int>& gamma,
                                      double threshold = 1e-10) {
  SignPattern p;
  for (Index x = 0; x < corr.rows(); ++x)
    for (Index y = 0; y < corr.cols(); ++y) {
      double v = corr(x, y);
      p.smallest = std::min(p.smallest, std::abs(v));
      if (std::abs(v) <= threshold) {
        p.all_resolved = false;
        continue;
      }
      if ((v > 0 ? 1 : -1) != gamma[x] * gamma[y]) p.agrees = false;
    }
  return p;
}

/// Reports over a cutoff ladder with the relative gap change between consecutive rungs.
struct LadderReport {
  std::vector<GroundStateReport> rungs;
  std::vector<double> gap_changes;
  bool stable = true;
};

inline LadderReport sector_ladder(const LatticeGraph& graph, const CouplingMatrices& c, const SectorSpec& sector,
                                  const std::vector<int>& cutoffs, double max_change = 0.1,
                                  const SectorOptions& opt = {}) {
  LadderReport lr;
  for (int nmax : cutoffs) lr.rungs.push_back(sector_report(graph, c, sector, nmax, opt));
  for (std::size_t i = 1; i < lr.rungs.size(); ++i) {
    double a = lr.rungs[i - 1].gap;
    double b = lr.rungs[i].gap;
    double change = std::abs(b - a) / std::max(std::abs(a), 1e-300);
    lr.gap_changes.push_back(change);
    if (!(change < max_change)) lr.stable = false;
  }
  return lr;
}

/// Lang-Firsov and hole-particle frames against the original one along a cutoff ladder.
struct FrameRung {
  int cutoff = 0;
  Index dim = 0;
  double e0 = 0.0;             ///< lowest eigenvalue of H_M
  double e0_lang_firsov = 0.0;
  double shift = 0.0;
  double lf_difference = 0.0;  ///< |E0(H_M) - E0(LF) - shift|
  double unitarity = 0.0;      ///< max |sorted spec(LF) - sorted spec(hole-particle)|
  Index compared = 0;          ///< eigenvalues entering the unitarity figure
};

struct FrameConsistencyReport {
  std::vector<FrameRung> rungs;
  bool monotone = true;  ///< lf_difference strictly decreasing along the ladder
  double max_unitarity = 0.0;
};

namespace detail {

/// Whole spectrum below `full_below`, otherwise the lowest `k` by Lanczos.
template <class Scalar>
Eigen::VectorXd low_spectrum(const SparseMat<Scalar>& h, Index full_below, int k) {
  if (h.rows() <= full_below) return eigh<Scalar>(DenseMat<Scalar>(h), false).values;
  EigOptions opt;
  opt.k = k;
  opt.tol = 1e-11;
  opt.dense_below = full_below;
  return lowest_eigenpairs(h, opt).values;
}

}  // namespace detail

inline FrameConsistencyReport frame_consistency(const CouplingMatrices& c, const SectorSpec& sector,
                                                const std::vector<int>& cutoffs, Index full_below = 1500,
                                                int lowest = 4) {
  FrameConsistencyReport r;
  for (int nmax : cutoffs) {
    OccupationPhonons ph(c.sites(), nmax, c.omega0);
    FrameRung rung;
    rung.cutoff = nmax;
    auto h = assemble_H(c, sector.original_basis(), ph);
    rung.dim = h.dim();
    rung.e0 = detail::low_spectrum(h.matrix, full_below, lowest)[0];
    auto lf = lang_firsov_hamiltonian(c, sector, ph);
    auto hp = hole_particle_hamiltonian(c, sector, ph);
    Eigen::VectorXd a = detail::low_spectrum(lf.hamiltonian.matrix, full_below, lowest);
    Eigen::VectorXd b = detail::low_spectrum(hp.matrix, full_below, lowest);
    rung.compared = std::min(a.size(), b.size());
    rung.unitarity = (a.head(rung.compared) - b.head(rung.compared)).cwiseAbs().maxCoeff();
    rung.e0_lang_firsov = a[0];
    rung.shift = lf.shift;
    rung.lf_difference = std::abs(rung.e0 - rung.e0_lang_firsov - rung.shift);
    if (!r.rungs.empty() && !(rung.lf_difference < r.rungs.back().lf_difference)) r.monotone = false;
    r.max_unitarity = std::max(r.max_unitarity, rung.unitarity);
    r.rungs.push_back(rung);
  }
  return r;
}

}  // namespace hhlab

#endif  // HHLAB_SPECTRAL_HPP
