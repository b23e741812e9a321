#ifndef HHLAB_THERMAL_HPP
#define HHLAB_THERMAL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <vector>

#include "hhlab/fock.hpp"
#include "hhlab/linalg.hpp"
#include "hhlab/model.hpp"

namespace hhlab {

/// One diagonal block of a Hamiltonian with its dense eigendecomposition.
template <class Scalar>
struct ThermalBlock {
  ModeBasis basis;  ///< electron part of the block
  Index pdim = 1;   ///< phonon dimension
  EigenPairs<Scalar> eig;
};

/// Gibbs state at inverse temperature beta of a block-diagonal Hamiltonian. Weights are kept
/// relative to the lowest energy so that large beta does not overflow.
template <class Scalar>
struct ThermalState {
  double beta = 1.0;
  std::vector<ThermalBlock<Scalar>> blocks;
  double e_min = 0.0;
  double z_rel = 0.0;  ///< sum exp(-beta (E - e_min))

  double log_z() const { return std::log(z_rel) - beta * e_min; }

  /// Thermal average of an electron-diagonal observable given by its value on each basis mask.
  template <class F>
  double average_diagonal(F&& value) const {
    double acc = 0;
    for (const auto& b : blocks) {
      Eigen::VectorXd d = diagonal_values(b, value);
      for (Index m = 0; m < b.eig.values.size(); ++m) {
        double w = std::exp(-beta * (b.eig.values[m] - e_min));
        acc += w * (b.eig.vectors.col(m).cwiseAbs2().cwiseProduct(d)).sum();
      }
    }
    return acc / z_rel;
  }

  template <class F>
  static Eigen::VectorXd diagonal_values(const ThermalBlock<Scalar>& b, F&& value) {
    Eigen::VectorXd d(b.basis.dim() * b.pdim);
    for (Index e = 0; e < b.basis.dim(); ++e) d.segment(e * b.pdim, b.pdim).setConstant(value(b.basis.state(e)));
    return d;
  }
};

template <class Scalar>
ThermalState<Scalar> make_thermal_state(double beta, std::vector<ThermalBlock<Scalar>> blocks) {
  require(beta > 0, ErrorCode::kInvalidArgument, "beta must be positive");
  ThermalState<Scalar> ts;
  ts.beta = beta;
  ts.blocks = std::move(blocks);
  ts.e_min = std::numeric_limits<double>::infinity();
  for (const auto& b : ts.blocks)
    if (b.eig.values.size()) ts.e_min = std::min(ts.e_min, b.eig.values.minCoeff());
  ts.z_rel = 0;
  for (const auto& b : ts.blocks) ts.z_rel += (-beta * (b.eig.values.array() - ts.e_min)).exp().sum();
  require(ts.z_rel > 0, ErrorCode::kInvalidArgument, "empty thermal state");
  return ts;
}

/// Weight of the Duhamel integral between levels m and n (relative to e_min), with the
/// degenerate limit below 1e-12 in the energy difference.
inline double duhamel_weight(double beta, double em, double en) {
  if (std::abs(en - em) < 1e-12) return std::exp(-beta * em);
  return (std::exp(-beta * em) - std::exp(-beta * en)) / (beta * (en - em));
}

/// (A, B) = Z^{-1} int_0^1 ds Tr[e^{-s beta H} A e^{-(1-s) beta H} B] for block-diagonal A, B
/// given as one dense matrix per block in the block's product basis.
template <class Scalar>
cplx duhamel(const ThermalState<Scalar>& ts, const std::vector<DenseMat<Scalar>>& a,
             const std::vector<DenseMat<Scalar>>& b) {
  require(a.size() == ts.blocks.size() && b.size() == ts.blocks.size(), ErrorCode::kBasisMismatch,
          "operators must come with one matrix per block");
  cplx acc = 0;
  for (std::size_t k = 0; k < ts.blocks.size(); ++k) {
    const auto& blk = ts.blocks[k];
    const Index d = blk.eig.values.size();
    require(a[k].rows() == d && b[k].rows() == d, ErrorCode::kBasisMismatch, "operator block has the wrong size");
    DenseMat<Scalar> ae = blk.eig.vectors.adjoint() * a[k] * blk.eig.vectors;
    DenseMat<Scalar> be = blk.eig.vectors.adjoint() * b[k] * blk.eig.vectors;
    Eigen::VectorXd e = blk.eig.values.array() - ts.e_min;
    for (Index m = 0; m < d; ++m)
      for (Index n = 0; n < d; ++n) acc += cplx(ae(m, n) * be(n, m)) * duhamel_weight(ts.beta, e[m], e[n]);
  }
  return acc / ts.z_rel;
}

/// Single-block convenience form.
template <class Scalar>
cplx duhamel(const ThermalState<Scalar>& ts, const DenseMat<Scalar>& a, const DenseMat<Scalar>& b) {
  return duhamel(ts, std::vector<DenseMat<Scalar>>{a}, std::vector<DenseMat<Scalar>>{b});
}

/// Thermal state of a dense Hermitian matrix (one block, trivial basis labels).
template <class Scalar>
ThermalState<Scalar> thermal_state_dense(const DenseMat<Scalar>& h, double beta) {
  ThermalBlock<Scalar> b;
  b.basis = ModeBasis(0, std::vector<Mask>{0}, "dense");
  b.pdim = h.rows();
  b.eig = eigh<Scalar>(h);
  return make_thermal_state<Scalar>(beta, {std::move(b)});
}

/// Matrix C_xy = (s_x, s_y) of Duhamel correlations of electron-diagonal densities s_x,
/// given per mask by density(mask, x).
template <class Scalar, class F>
Eigen::MatrixXd density_duhamel_matrix(const ThermalState<Scalar>& ts, int sites, F&& density) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(sites, sites);
  for (const auto& blk : ts.blocks) {
    const Index d = blk.eig.values.size();
    Eigen::VectorXd e = blk.eig.values.array() - ts.e_min;
    Eigen::MatrixXd w(d, d);
    for (Index m = 0; m < d; ++m)
      for (Index n = 0; n < d; ++n) w(m, n) = duhamel_weight(ts.beta, e[m], e[n]);
    std::vector<DenseMat<Scalar>> rot(sites);
    for (int x = 0; x < sites; ++x) {
      Eigen::VectorXd diag = ThermalState<Scalar>::diagonal_values(blk, [&](Mask m) { return density(m, x); });
      rot[x] = blk.eig.vectors.adjoint() * diag.asDiagonal() * blk.eig.vectors;
    }
    for (int x = 0; x < sites; ++x)
      for (int y = x; y < sites; ++y) {
        // sum_mn A_mn B_nm w_mn with B Hermitian: B_nm = conj(B_mn)
        double v = (rot[x].array() * rot[y].conjugate().array() * w.array().template cast<Scalar>()).sum().real();
        c(x, y) += v;
        if (y != x) c(y, x) += v;
      }
  }
  return c / ts.z_rel;
}

// --- charge susceptibility ------------------------------------------------------------

/// Reciprocal grid of the hypercubic torus [-L, L)^d: p_j = pi k / L, k = -L+1..L.
inline std::vector<std::vector<double>> reciprocal_grid(const LatticeGraph& g) {
  auto shape = g.hypercubic_shape();
  require(shape.has_value(), ErrorCode::kInvalidArgument, "momentum grid needs a hypercubic graph");
  auto [L, d] = *shape;
  std::vector<std::vector<double>> out{{}};
  for (int axis = 0; axis < d; ++axis) {
    std::vector<std::vector<double>> next;
    for (const auto& p : out)
      for (int k = -L + 1; k <= L; ++k) {
        auto q = p;
        q.push_back(std::numbers::pi * k / L);
        next.push_back(q);
      }
    out = std::move(next);
  }
  return out;
}

inline void require_on_grid(const LatticeGraph& g, const std::vector<double>& p) {
  auto shape = g.hypercubic_shape();
  require(shape.has_value(), ErrorCode::kInvalidArgument, "momentum grid needs a hypercubic graph");
  require(int(p.size()) == shape->second, ErrorCode::kInvalidArgument, "momentum has the wrong dimension");
  for (double pj : p) {
    double k = pj * shape->first / std::numbers::pi;
    require(std::abs(k - std::round(k)) < 1e-9 && std::abs(pj) <= std::numbers::pi + 1e-12,
            ErrorCode::kInvalidArgument, "momentum is not on the reciprocal grid");
  }
}

/// Plane wave |L|^{-1/2} e^{-i x.p} over the vertices.
inline Eigen::VectorXcd plane_wave(const LatticeGraph& g, const std::vector<double>& p) {
  const auto& emb = g.embedding();
  require(emb.has_value(), ErrorCode::kInvalidArgument, "plane waves need vertex positions");
  const int n = g.vertex_count();
  Eigen::VectorXcd v(n);
  for (int x = 0; x < n; ++x) {
    double phase = 0;
    for (std::size_t j = 0; j < p.size(); ++j) phase += emb->positions[x][j] * p[j];
    v[x] = std::polar(1.0 / std::sqrt(double(n)), -phase);
  }
  return v;
}

/// Finite-volume transform U^_L(p) = <e_p, U e_p> of a translation-invariant coupling matrix.
inline double fourier_coupling(const LatticeGraph& g, const Eigen::MatrixXd& u, const std::vector<double>& p) {
  Eigen::VectorXcd v = plane_wave(g, p);
  return (v.adjoint() * u.cast<cplx>() * v)(0, 0).real();
}

/// chi(p) = beta (dn_{-p}, dn_p) from the density Duhamel matrix.
inline double susceptibility_from(const LatticeGraph& g, const Eigen::MatrixXd& c, double beta,
                                  const std::vector<double>& p) {
  Eigen::VectorXcd v = plane_wave(g, p);  // dn_p = sum_x v_x dn_x
  return beta * (v.adjoint() * c.cast<cplx>() * v)(0, 0).real();
}

/// Which Hamiltonian the thermal trace runs over.
enum class ThermalFrame {
  kOriginal,     ///< H + sum mu_x n_x on the electron Fock space, densities n_x - 1
  kTransformed,  ///< the hole-particle Hamiltonian on both factors, densities s_x
};

/// Builds the thermal state over every particle-number block of the chosen frame.
inline ThermalState<cplx> full_thermal_state(const CouplingMatrices& c, int cutoff, double beta, ThermalFrame frame,
                                             const std::optional<Eigen::VectorXd>& h = std::nullopt) {
  const int n = c.sites();
  OccupationPhonons ph(n, cutoff, c.omega0);
  Eigen::VectorXd mu = chemical_potential(c);
  std::vector<ThermalBlock<cplx>> blocks;
  for (int a = 0; a <= n; ++a)
    for (int b = 0; b <= n; ++b) {
      ThermalBlock<cplx> blk;
      blk.basis = electron_sector(n, a, b);
      blk.pdim = ph.dim();
      Eigen::MatrixXcd dense;
      if (frame == ThermalFrame::kOriginal)
        dense = Eigen::MatrixXd(assemble_H(c, blk.basis, ph, mu).matrix).cast<cplx>();
      else
        dense = Eigen::MatrixXcd(transformed_hamiltonian(c, blk.basis, ph, h).matrix);
      blk.eig = eigh<cplx>(dense);
      blocks.push_back(std::move(blk));
    }
  return make_thermal_state<cplx>(beta, std::move(blocks));
}

/// Density per site in each frame: n_x - 1 (original) or n_x (x) 1 - 1 (x) n_x (transformed).
inline auto frame_density(int sites, ThermalFrame frame) {
  return [sites, frame](Mask m, int x) {
    double up = double(m >> up_mode(x) & 1);
    double dn = double(m >> down_mode(sites, x) & 1);
    return frame == ThermalFrame::kOriginal ? up + dn - 1.0 : up - dn;
  };
}

struct SusceptibilityRow {
  std::vector<double> p;
  double chi = 0.0;
  double u_eff_hat = 0.0;
  double product = 0.0;  ///< chi * U^_eff
  bool checked = false;  ///< U^_eff(p) > 0
  bool pass = true;
};

struct SusceptibilityReport {
  double beta = 0.0;
  std::vector<SusceptibilityRow> rows;
  double max_density_deviation = 0.0;  ///< max_x |<n_x> - 1| (or |<s_x>|)
  double max_product = 0.0;
  bool bound_holds = true;
  double worst_duhamel_margin = 0.0;  ///< min over samples of beta^{-1}<h,Uh> - (A*,A)
  bool duhamel_holds = true;
};

/// chi(p) for one p in the given thermal state.
inline double charge_susceptibility(const LatticeGraph& g, const ThermalState<cplx>& ts, ThermalFrame frame,
                                    const std::vector<double>& p) {
  require_on_grid(g, p);
  const int n = g.vertex_count();
  Eigen::MatrixXd c = density_duhamel_matrix(ts, n, frame_density(n, frame));
  return susceptibility_from(g, c, ts.beta, p);
}

/// Checks chi(p) U^_eff(p) <= 1 + tol on the whole reciprocal grid and the Duhamel
/// inequality (A*, A) <= beta^{-1} <h, U_eff h> with A = <s, U_eff h> for the given fields.
inline SusceptibilityReport susceptibility_bound_check(const LatticeGraph& g, const CouplingMatrices& c,
                                                       const ThermalState<cplx>& ts, ThermalFrame frame,
                                                       const std::vector<Eigen::VectorXcd>& fields = {},
                                                       double tol = 1e-8) {
  const int n = g.vertex_count();
  auto ueff = effective_coulomb(c);
  auto grid = reciprocal_grid(g);
  for (const auto& p : grid) {
    double u = fourier_coupling(g, ueff.matrix, p);
    require(u >= -1e-12, ErrorCode::kB2Violated,
            "transformed effective Coulomb is negative (" + std::to_string(u) + ") at a grid momentum");
  }
  SusceptibilityReport r;
  r.beta = ts.beta;
  auto density = frame_density(n, frame);
  Eigen::MatrixXd cmat = density_duhamel_matrix(ts, n, density);
  for (int x = 0; x < n; ++x) {
    double avg = ts.average_diagonal([&](Mask m) { return density(m, x); });
    r.max_density_deviation = std::max(r.max_density_deviation, std::abs(avg));
  }
  for (const auto& p : grid) {
    SusceptibilityRow row;
    row.p = p;
    row.chi = susceptibility_from(g, cmat, ts.beta, p);
    row.u_eff_hat = fourier_coupling(g, ueff.matrix, p);
    row.product = row.chi * row.u_eff_hat;
    row.checked = row.u_eff_hat > 1e-12;
    row.pass = !row.checked || row.product <= 1.0 + tol;
    if (row.checked) r.max_product = std::max(r.max_product, row.product);
    r.bound_holds = r.bound_holds && row.pass;
    r.rows.push_back(row);
  }
  r.worst_duhamel_margin = std::numeric_limits<double>::infinity();
  for (const auto& h : fields) {
    Eigen::VectorXcd w = ueff.matrix.cast<cplx>() * h;
    double lhs = (w.adjoint() * cmat.cast<cplx>() * w)(0, 0).real();
    double rhs = (h.adjoint() * ueff.matrix.cast<cplx>() * h)(0, 0).real() / ts.beta;
    double margin = rhs - lhs;
    r.worst_duhamel_margin = std::min(r.worst_duhamel_margin, margin);
    if (margin < -tol * std::max(1.0, std::abs(rhs))) r.duhamel_holds = false;
  }
  if (fields.empty()) r.worst_duhamel_margin = 0.0;
  return r;
}

// --- Gaussian domination --------------------------------------------------------------

/// Z_{beta,eps}(h) = Tr[exp(-beta H(h)) exp(-eps H_p)], summed over (N1, N2) blocks.
inline double regularized_partition(const CouplingMatrices& c, int cutoff, double beta, double eps,
                                    const Eigen::VectorXd& h) {
  const int n = c.sites();
  OccupationPhonons ph(n, cutoff, c.omega0);
  Eigen::MatrixXd hp = Eigen::MatrixXd(ph.energy());
  Eigen::MatrixXd ehp = expm_hermitian<double>(hp, -eps);
  double z = 0;
  for (int a = 0; a <= n; ++a)
    for (int b = 0; b <= n; ++b) {
      ModeBasis basis = electron_sector(n, a, b);
      Eigen::MatrixXcd hh = Eigen::MatrixXcd(transformed_hamiltonian(c, basis, ph, h).matrix);
      Eigen::MatrixXcd e = expm_hermitian<cplx>(hh, -beta);
      const Index p = ph.dim();
      for (Index k = 0; k < basis.dim(); ++k) z += (e.block(k * p, k * p, p, p).array() * ehp.transpose().array()).sum().real();
    }
  return z;
}

struct GaussianDominationReport {
  double z0 = 0.0;
  std::vector<double> ratios;  ///< Z(h)/Z(0)
  double max_ratio = 0.0;
  bool holds = true;
  double linear = 0.0;     ///< fitted d/dlambda of Z(lambda h)/Z(0) at 0
  double curvature = 0.0;  ///< fitted second derivative
  bool local_max = true;
};

/// Fits Z(lambda h)/Z(0) - 1 by a quartic in lambda on a symmetric stencil.
inline std::pair<double, double> quadratic_fit(const std::vector<double>& lambdas, const std::vector<double>& values) {
  Eigen::MatrixXd a(lambdas.size(), 5);
  Eigen::VectorXd y(values.size());
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    for (int k = 0; k < 5; ++k) a(Index(i), k) = std::pow(lambdas[i], k);
    y[Index(i)] = values[i];
  }
  Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);
  return {coef[1], 2.0 * coef[2]};
}

inline GaussianDominationReport gaussian_domination_check(const CouplingMatrices& c, int cutoff, double beta,
                                                          double eps, const std::vector<Eigen::VectorXd>& fields,
                                                          double rel_tol = 1e-10, double lambda_step = 0.02) {
  require(eps > 0, ErrorCode::kInvalidArgument, "epsilon must be positive");
  GaussianDominationReport r;
  const int n = c.sites();
  r.z0 = regularized_partition(c, cutoff, beta, eps, Eigen::VectorXd::Zero(n));
  for (const auto& h : fields) {
    double ratio = regularized_partition(c, cutoff, beta, eps, h) / r.z0;
    r.ratios.push_back(ratio);
    r.max_ratio = std::max(r.max_ratio, ratio);
    if (ratio > 1.0 + rel_tol) r.holds = false;
  }
  if (!fields.empty()) {
    std::vector<double> lambdas;
    std::vector<double> values;
    for (int k = -4; k <= 4; ++k) {
      double lam = k * lambda_step;
      lambdas.push_back(lam);
      values.push_back(k == 0 ? 0.0 : regularized_partition(c, cutoff, beta, eps, lam * fields.front()) / r.z0 - 1.0);
    }
    auto [lin, curv] = quadratic_fit(lambdas, values);
    r.linear = lin;
    r.curvature = curv;
    r.local_max = std::abs(lin) < 1e-8 && curv <= 0.0;
  }
  return r;
}

}  // namespace hhlab

#endif  // HHLAB_THERMAL_HPP
