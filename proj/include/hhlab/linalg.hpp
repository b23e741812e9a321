#ifndef HHLAB_LINALG_HPP
#define HHLAB_LINALG_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/MatrixFunctions>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "hhlab/error.hpp"
#include "hhlab/fock.hpp"

namespace hhlab {

template <class Scalar>
struct EigenPairs {
  Eigen::VectorXd values;
  DenseMat<Scalar> vectors;
  Eigen::VectorXd residuals;  ///< ||H v - lambda v|| per pair (zero when not measured)
};

/// Full dense spectrum of a Hermitian matrix, ascending.
template <class Scalar>
EigenPairs<Scalar> eigh(const DenseMat<Scalar>& h, bool vectors = true) {
  Eigen::SelfAdjointEigenSolver<DenseMat<Scalar>> es(h, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  require(es.info() == Eigen::Success, ErrorCode::kNoConvergence, "dense eigensolver failed");
  EigenPairs<Scalar> out;
  out.values = es.eigenvalues();
  if (vectors) out.vectors = es.eigenvectors();
  out.residuals = Eigen::VectorXd::Zero(out.values.size());
  return out;
}

/// exp(t H) for Hermitian H, through its eigendecomposition.
template <class Scalar>
DenseMat<Scalar> expm_hermitian(const DenseMat<Scalar>& h, double t) {
  auto ep = eigh(h);
  Eigen::VectorXd d = (t * ep.values.array()).exp().matrix();
  return ep.vectors * d.asDiagonal() * ep.vectors.adjoint();
}

/// exp(t H) from a precomputed decomposition.
template <class Scalar>
DenseMat<Scalar> expm_from(const EigenPairs<Scalar>& ep, double t) {
  Eigen::VectorXd d = (t * ep.values.array()).exp().matrix();
  return ep.vectors * d.asDiagonal() * ep.vectors.adjoint();
}

/// General (non-normal) dense matrix exponential.
inline Eigen::MatrixXcd expm(const Eigen::MatrixXcd& a) { return a.exp(); }

template <class Scalar>
double frobenius(const SparseMat<Scalar>& a) {
  return std::sqrt(a.cwiseAbs2().sum());
}

/// Gershgorin-type upper bound on the spectral norm of a Hermitian sparse matrix.
template <class Scalar>
double norm_bound(const SparseMat<Scalar>& a) {
  double worst = 0;
  for (Index k = 0; k < a.outerSize(); ++k) {
    double row = 0;
    for (typename SparseMat<Scalar>::InnerIterator it(a, k); it; ++it) row += std::abs(it.value());
    worst = std::max(worst, row);
  }
  return worst;
}

struct EigOptions {
  int k = 2;
  double tol = 1e-10;          ///< residual tolerance relative to ||H||
  Index dense_below = 4000;    ///< use the dense solver below this dimension
  int max_basis = 0;           ///< 0 picks a size from k
  int max_restarts = 400;
  std::uint64_t seed = 12345;
};

namespace detail {

template <class Scalar>
void orthogonalize(DenseVec<Scalar>& w, const DenseMat<Scalar>& v, Index cols) {
  for (int pass = 0; pass < 2; ++pass) {
    if (cols == 0) return;
    DenseVec<Scalar> c = v.leftCols(cols).adjoint() * w;
    w.noalias() -= v.leftCols(cols) * c;
  }
}

template <class Scalar>
DenseVec<Scalar> random_vector(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DenseVec<Scalar> v(n);
  for (Index i = 0; i < n; ++i) {
    if constexpr (std::is_same_v<Scalar, cplx>)
      v[i] = cplx(u(rng), u(rng));
    else
      v[i] = u(rng);
  }
  return v;
}

}  // namespace detail

/// Lowest k eigenpairs of a sparse Hermitian matrix.
/// Below `dense_below` the dense solver runs; otherwise a block Lanczos with full
/// reorthogonalization and thick restart. The block size is at least two so that a
/// degenerate lowest level shows up as a repeated Ritz value instead of being skipped.
template <class Scalar>
EigenPairs<Scalar> lowest_eigenpairs(const SparseMat<Scalar>& h, const EigOptions& opt = {}) {
  const Index n = h.rows();
  require(h.rows() == h.cols(), ErrorCode::kInvalidArgument, "matrix must be square");
  require(opt.k >= 1 && opt.k <= n, ErrorCode::kInvalidArgument, "k out of range");

  if (n < opt.dense_below) {
    auto full = eigh<Scalar>(DenseMat<Scalar>(h));
    EigenPairs<Scalar> out;
    out.values = full.values.head(opt.k);
    out.vectors = full.vectors.leftCols(opt.k);
    out.residuals.resize(opt.k);
    for (int i = 0; i < opt.k; ++i)
      out.residuals[i] = (h * out.vectors.col(i) - out.values[i] * out.vectors.col(i)).norm();
    return out;
  }

  const int block = std::max(2, opt.k);
  const int keep = std::min<Index>(n - 1, opt.k + block + 4);
  const int m = opt.max_basis > 0 ? opt.max_basis : int(std::min<Index>(n, std::max(keep + 6 * block, 60)));
  require(m > keep + block, ErrorCode::kInvalidArgument, "Krylov basis too small for the requested pairs");

  std::mt19937_64 rng(opt.seed);
  DenseMat<Scalar> v(n, m);
  DenseMat<Scalar> av(n, m);
  Index cols = 0;
  auto push = [&](DenseVec<Scalar> w) {
    detail::orthogonalize(w, v, cols);
    double nrm = w.norm();
    if (nrm < 1e-10) {
      w = detail::random_vector<Scalar>(n, rng);
      detail::orthogonalize(w, v, cols);
      nrm = w.norm();
    }
    v.col(cols) = w / nrm;
    av.col(cols) = h * v.col(cols);
    ++cols;
  };
  for (int b = 0; b < block; ++b) push(detail::random_vector<Scalar>(n, rng));

  double hnorm = 0;
  Index frontier = 0;  // first column of the newest block
  for (int restart = 0; restart <= opt.max_restarts; ++restart) {
    while (cols + block <= m) {
      Index start = cols;
      for (int b = 0; b < block; ++b) push(DenseVec<Scalar>(av.col(frontier + b)));
      frontier = start;
    }
    DenseMat<Scalar> t = v.leftCols(cols).adjoint() * av.leftCols(cols);
    t = (0.5 * (t + t.adjoint())).eval();
    auto small = eigh<Scalar>(t);
    hnorm = std::max({hnorm, std::abs(small.values[0]), std::abs(small.values[cols - 1])});

    DenseMat<Scalar> y = small.vectors.leftCols(keep);
    DenseMat<Scalar> x = v.leftCols(cols) * y;
    DenseMat<Scalar> ax = av.leftCols(cols) * y;
    Eigen::VectorXd res(keep);
    for (int i = 0; i < keep; ++i) res[i] = (ax.col(i) - small.values[i] * x.col(i)).norm();

    bool done = true;
    for (int i = 0; i < opt.k; ++i)
      if (res[i] > opt.tol * std::max(1.0, hnorm)) done = false;
    if (done) {
      EigenPairs<Scalar> out;
      out.values = small.values.head(opt.k);
      out.vectors = x.leftCols(opt.k);
      out.residuals = res.head(opt.k);
      return out;
    }
    if (restart == opt.max_restarts) break;

    v.leftCols(keep) = x;
    av.leftCols(keep) = ax;
    cols = keep;
    // Residuals of the lowest Ritz pairs are orthogonal to the kept space and seed the next block.
    Index start = cols;
    for (int b = 0; b < block; ++b) {
      DenseVec<Scalar> r = ax.col(b) - small.values[b] * x.col(b);
      push(r);
    }
    frontier = start;
  }
  throw Error(ErrorCode::kNoConvergence,
              "block Lanczos did not converge after " + std::to_string(opt.max_restarts) +
                  " restarts (dimension " + std::to_string(n) + ", basis " + std::to_string(m) + ")");
}

/// exp(t H) v for sparse Hermitian H by Lanczos with adaptive substeps.
template <class Scalar>
DenseVec<Scalar> expv_hermitian(const SparseMat<Scalar>& h, double t, const DenseVec<Scalar>& v0,
                                double tol = 1e-10, int krylov = 30) {
  DenseVec<Scalar> v = v0;
  const double vnorm = v0.norm();
  if (vnorm == 0.0 || t == 0.0) return v;
  double done = 0.0;
  double dt = t;
  const Index n = h.rows();
  const int m = int(std::min<Index>(krylov, n));
  int guard = 0;
  while (std::abs(done) < std::abs(t) - 1e-15 * std::abs(t)) {
    require(++guard < 100000, ErrorCode::kNoConvergence, "Krylov exponential step size collapsed");
    if (std::abs(done + dt) > std::abs(t)) dt = t - done;
    const double beta = v.norm();
    DenseMat<Scalar> q(n, m + 1);
    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m + 1, m + 1);
    q.col(0) = v / beta;
    int used = m;
    double last_beta = 0;
    for (int j = 0; j < m; ++j) {
      DenseVec<Scalar> w = h * q.col(j);
      for (int pass = 0; pass < 2; ++pass) {
        DenseVec<Scalar> c = q.leftCols(j + 1).adjoint() * w;
        w.noalias() -= q.leftCols(j + 1) * c;
        if (pass == 0) tri(j, j) = std::real(c[j]);
      }
      last_beta = w.norm();
      if (last_beta < 1e-13 * std::max(1.0, std::abs(tri(j, j)))) {
        used = j + 1;
        last_beta = 0;
        break;
      }
      tri(j + 1, j) = tri(j, j + 1) = last_beta;
      q.col(j + 1) = w / last_beta;
    }
    Eigen::MatrixXd tm = tri.topLeftCorner(used, used);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tm);
    Eigen::VectorXd e1 = es.eigenvectors().row(0).transpose();
    Eigen::VectorXd coef = es.eigenvectors() * ((dt * es.eigenvalues().array()).exp().matrix().cwiseProduct(e1));
    const double err = beta * last_beta * std::abs(coef[used - 1]);
    if (last_beta != 0 && err > tol * vnorm && std::abs(dt) > 1e-12 * std::abs(t)) {
      dt *= 0.5;
      continue;
    }
    DenseVec<Scalar> next = DenseVec<Scalar>::Zero(n);
    for (int j = 0; j < used; ++j) next += (beta * coef[j]) * q.col(j);
    v = next;
    done += dt;
  }
  return v;
}

}  // namespace hhlab

#endif  // HHLAB_LINALG_HPP
