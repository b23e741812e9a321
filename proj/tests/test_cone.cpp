#include <gtest/gtest.h>

#include <random>

#include "hhlab/cone.hpp"

using namespace hhlab;

namespace {

CouplingMatrices onsite_model(const LatticeGraph& g, double t, double u0, double g0, double w0 = 1.0) {
  return evaluate(g, {Coupling::bond(t), Coupling::on_site(u0), Coupling::on_site(g0), w0});
}

Eigen::VectorXcd random_vector(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Eigen::VectorXcd v(n);
  for (Index i = 0; i < n; ++i) v[i] = cplx(d(rng), d(rng));
  return v;
}

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

}  // namespace

TEST(ConeField, ProductStateIsAMatrixUnit) {
  // 2 sites, M^ = 1: the transformed electron basis holds one up and one down fermion.
  auto sec = SectorSpec::from_two_m(2, 0);
  auto basis = sec.transformed_basis();
  const Index d = 2, points = 3;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) {
      Mask m = (Mask(1) << x) | (Mask(1) << (2 + y));
      Eigen::VectorXcd v = Eigen::VectorXcd::Zero(basis.dim() * points);
      v[basis.index_of(m) * points + 1] = 1.0;
      auto f = to_cone_field(v, d, points);
      EXPECT_EQ(f.values[1](x, y), cplx(1.0));
      EXPECT_DOUBLE_EQ(f.norm(), 1.0);
    }
}

TEST(ConeField, RoundTripsAndIsometry) {
  std::mt19937_64 rng(1);
  auto v = random_vector(4 * 9, rng);
  auto f = to_cone_field(v, 2, 9);
  EXPECT_EQ((from_cone_field(f) - v).norm(), 0.0);
  EXPECT_NEAR(f.norm(), v.norm(), 1e-12);
  EXPECT_EQ((ConeField::from_flat(f.flat(), 2).flat() - f.flat()).norm(), 0.0);
  EXPECT_THROW(ConeField::from_flat(Eigen::VectorXcd::Zero(7), 2), Error);
  EXPECT_THROW(to_cone_field(v, 2, 8), Error);
}

TEST(ConeMembership, IdentityAndIndefinite) {
  ConeField id = ConeField::zeros(3, 4);
  for (auto& m : id.values) m.setIdentity();
  EXPECT_TRUE(cone_membership(id).member);
  ConeField bad = ConeField::zeros(2, 3);
  bad.values[1] = Eigen::Vector2cd(1.0, -1.0).asDiagonal();
  auto m = cone_membership(bad);
  EXPECT_FALSE(m.member);
  EXPECT_NEAR(m.worst_eigenvalue, -1.0, 1e-14);
  ConeField skew = ConeField::zeros(2, 1);
  skew.values[0] << 1, 0.5, -0.5, 1;
  EXPECT_FALSE(cone_membership(skew).member);
}

// psi -> A^dag psi A preserves positivity.
TEST(ConeMembership, ConjugationPreservesTheCone) {
  CounterRng rng(7, 0);
  for (int s = 0; s < 50; ++s) {
    ConeField f = random_cone_member(4, 5, rng);
    Eigen::MatrixXcd a(4, 4);
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 4; ++j) a(i, j) = rng.complex_normal();
    ConeField out = f;
    for (auto& m : out.values) m = a.adjoint() * m * a;
    EXPECT_TRUE(cone_membership(out, 1e-10, a.norm() * a.norm() * f.norm()).member);
  }
}

TEST(GridHamiltonian, Bookkeeping) {
  auto c = onsite_model(build_hypercubic(1, 1), 1.0, 1.0, 0.3);
  QGrid grid(2, 7, 4.0);
  auto gh = grid_hamiltonian(c, SectorSpec::from_two_m(2, 0), grid);
  EXPECT_EQ(gh.d, 2);
  EXPECT_EQ(gh.dim(), 4 * 49);
  EXPECT_EQ(gh.full().rows(), 4 * 49);
  auto pol = grid_hamiltonian(c, SectorSpec::from_two_m(2, 2), grid);
  EXPECT_EQ(pol.d, 1);
}

// Decoupled case: -(T (x) 1 + 1 (x) T) at every grid point plus the phonon energy.
TEST(GridHamiltonian, DecoupledStructure) {
  const double t = 0.7;
  auto c = onsite_model(build_hypercubic(1, 1), t, 0.0, 0.0);
  QGrid grid(2, 5, 3.0);
  auto gh = grid_hamiltonian(c, SectorSpec::from_two_m(2, 0), grid);
  Eigen::Matrix2d tm;
  tm << 0, t, t, 0;
  Eigen::Matrix2d id = Eigen::Matrix2d::Identity();
  Eigen::MatrixXd blk = -(Eigen::kroneckerProduct(tm, id).eval() + Eigen::kroneckerProduct(id, tm).eval());
  Eigen::MatrixXd hp = Eigen::MatrixXd(grid_phonon_energy(grid, 1.0));
  Eigen::MatrixXd expect = Eigen::kroneckerProduct(Eigen::MatrixXd::Identity(25, 25), blk).eval() +
                           Eigen::kroneckerProduct(hp, Eigen::MatrixXd::Identity(4, 4)).eval();
  EXPECT_LT((Eigen::MatrixXcd(gh.full()) - expect.cast<cplx>()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(GridHamiltonian, AgreesWithHoleParticleAssembly) {
  auto g = build_hypercubic(1, 1);
  auto c = evaluate(g, {Coupling::bond(1), nearest_neighbour_coulomb(1.0, 0.2, 1), Coupling::on_site(0.3), 1.2});
  QGrid grid(2, 9, 4.0);
  for (int two_m : {0, 2}) {
    auto sec = SectorSpec::from_two_m(2, two_m);
    auto ref = hole_particle_in_cone_order(c, sec, grid);
    EXPECT_LE(max_abs_difference(grid_hamiltonian(c, sec, grid).full(), ref), 1e-12);
  }
  auto sec = SectorSpec::from_two_m(2, 0);
  EXPECT_GT(max_abs_difference(grid_hamiltonian(c, sec, grid, QuadraticSign::kPlus).full(),
                               hole_particle_in_cone_order(c, sec, grid)),
            1e-3);
}

// Ground energy on the grid converges as h^2 to the occupation-basis value.
TEST(GridHamiltonian, GroundEnergyMatchesOccupationBasis) {
  auto g = build_hypercubic(1, 1);
  auto c = onsite_model(g, 1.0, 1.0, 0.3);
  auto sec = SectorSpec::from_two_m(2, 0);
  OccupationPhonons ph(2, 14, 1.0);
  double exact = lowest_eigenpairs(hole_particle_hamiltonian(c, sec, ph).matrix, EigOptions{.k = 1}).values[0];
  std::vector<double> err;
  for (int n_q : {11, 21, 41}) {
    EigOptions opt;
    opt.k = 1;
    opt.dense_below = 0;
    auto gh = grid_hamiltonian(c, sec, QGrid(2, n_q, 5.0));
    err.push_back(lowest_eigenpairs<cplx>(gh.full(), opt).values[0] - exact);
  }
  EXPECT_NEAR(err[0] / err[1], 4.0, 0.5);
  EXPECT_NEAR(err[1] / err[2], 4.0, 0.5);
  EXPECT_LT(std::abs((4 * err[2] - err[1]) / 3), 5e-4);
}

TEST(GridHamiltonian, RequiresA1) {
  auto g = build_general(4, {{0, 1}, {1, 2}, {1, 3}});
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4, 4);
  m(0, 1) = m(1, 0) = 0.4;
  auto c = evaluate(g, {Coupling::bond(1), Coupling::on_site(1), Coupling::explicit_table(m), 1.0});
  EXPECT_THROW(grid_hamiltonian(c, SectorSpec::from_two_m(4, 0), QGrid(4, 3, 2.0)), Error);
}

TEST(Semigroup, ZeroTimeIsIdentity) {
  auto c = onsite_model(build_hypercubic(1, 1), 1.0, 1.0, 0.3);
  auto gh = grid_hamiltonian(c, SectorSpec::from_two_m(2, 0), QGrid(2, 7, 5.0));
  ConeSemigroup sg(gh.full());
  CounterRng rng(3, 0);
  auto f = random_cone_member(gh.d, gh.points(), rng);
  EXPECT_LT((sg.apply(0.0, f.flat()) - f.flat()).norm(), 1e-12 * f.norm());
  EXPECT_TRUE(semigroup_positivity_check(gh, {0.0}, 10, 1).preserved);
}

TEST(Semigroup, TwoSitePreservesTheCone) {
  auto c = onsite_model(build_hypercubic(1, 1), 1.0, 1.0, 0.3);
  auto gh = grid_hamiltonian(c, SectorSpec::from_two_m(2, 0), QGrid(2, 15, 6.0));
  auto r = semigroup_positivity_check(gh, {0.5}, 100, 42);
  EXPECT_TRUE(r.preserved);
  EXPECT_GT(r.worst_relative[0], -1e-10);
}

TEST(Semigroup, KrylovAgreesWithDense) {
  auto c = onsite_model(build_hypercubic(1, 1), 1.0, 1.0, 0.3);
  auto gh = grid_hamiltonian(c, SectorSpec::from_two_m(2, 0), QGrid(2, 9, 5.0));
  ConeSemigroup dense(gh.full()), krylov(gh.full(), 0);
  CounterRng rng(4, 0);
  auto v = random_cone_member(gh.d, gh.points(), rng).flat();
  EXPECT_LT((dense.apply(0.5, v) - krylov.apply(0.5, v)).norm(), 1e-8 * v.norm());
  EXPECT_NEAR(dense.norm(0.5), krylov.norm(0.5), 1e-9);
}

TEST(StrictPositivity, DecoupledPositiveDefinite) {
  auto c = onsite_model(build_hypercubic(1, 1), 1.0, 1.0, 0.0);
  auto gh = grid_hamiltonian(c, SectorSpec::from_two_m(2, 0), QGrid(2, 11, 5.0));
  auto r = ground_state_strict_positivity(gh);
  EXPECT_TRUE(r.unique);
  EXPECT_TRUE(r.strictly_positive);
  EXPECT_GT(r.interior_min, r.strict_threshold);
}

TEST(StrictPositivity, PolarizedIsPositiveScalar) {
  auto c = onsite_model(build_hypercubic(1, 1), 1.0, 1.0, 0.3);
  auto gh = grid_hamiltonian(c, SectorSpec::from_two_m(2, 2), QGrid(2, 11, 5.0));
  auto r = ground_state_strict_positivity(gh);
  EXPECT_EQ(r.ground.d, 1);
  EXPECT_TRUE(r.strictly_positive);
  for (Index k = 0; k < r.ground.points(); ++k) {
    EXPECT_LT(std::abs(r.ground.values[std::size_t(k)](0, 0).imag()), 1e-12);
    EXPECT_GT(r.ground.values[std::size_t(k)](0, 0).real(), 0.0);
  }
}

TEST(StrictPositivity, InnerSpinSignRule) {
  auto g = build_hypercubic(1, 1);
  auto c = onsite_model(g, 1.0, 1.0, 0.3);
  auto sec = SectorSpec::from_two_m(2, 0);
  auto gh = grid_hamiltonian(c, sec, QGrid(2, 11, 5.0));
  auto r = ground_state_strict_positivity(gh);
  ASSERT_TRUE(r.strictly_positive);
  auto ff = fermion_factor(2, sec.m_hat);
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) {
      // <S_{x+} S_{y-}> = gamma(x) gamma(y) times this form, which is positive on the cone.
      const double form = inner_spin_form(r.ground, ff, x, y);
      EXPECT_GT(form, 0.0);
      EXPECT_EQ(g.gamma(x) * g.gamma(y) * form > 0, x == y);
    }
}

TEST(CoulombBound, DiagonalGivesZeroDifference) {
  auto ff = fermion_factor(3, 1);
  Eigen::MatrixXd u = 0.7 * Eigen::MatrixXd::Identity(3, 3);
  CounterRng rng(1, 0);
  auto psi = random_psd(ff.dim(), rng);
  EXPECT_LT(coulomb_difference(u, 0.7, ff, psi).norm(), 1e-14);
}

TEST(CoulombBound, RandomPositiveDefinite) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> n;
  Eigen::MatrixXd b(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b(i, j) = n(gen);
  Eigen::MatrixXd u = b * b.transpose() + 0.1 * Eigen::MatrixXd::Identity(3, 3);
  for (int m_hat : {1, 2}) {
    auto r = coulomb_lower_bound_check(u, m_hat, 50, 5);
    EXPECT_TRUE(r.preserved);
    EXPECT_GT(r.u0, 0.0);
    EXPECT_LT(r.psd_form_residual, 1e-12);
  }
}

TEST(CoulombBound, PsdOnlyForm) {
  Eigen::Vector3d v(1.0, -1.0, 0.5);
  Eigen::MatrixXd u = v * v.transpose();
  auto r = coulomb_lower_bound_check(u, 1, 50, 6);
  EXPECT_TRUE(r.preserved);
  EXPECT_NEAR(r.u0, 0.0, 1e-12);
  EXPECT_LT(r.psd_form_residual, 1e-12);
}

// Oracle: int over the unit simplex of prod b_i^{a_i} = prod a_i! / (n + sum a)!.
TEST(Simplex, GrundmannMollerExactForMonomials) {
  for (int n = 1; n <= 3; ++n) {
    auto rule = grundmann_moller(n, 3);
    double total = 0;
    for (double w : rule.weights) total += w;
    EXPECT_NEAR(total, 1.0 / factorial(n), 1e-13);
    std::vector<std::vector<int>> exps = {{2, 1, 0, 0}, {3, 0, 2, 1}, {1, 1, 1, 1}, {0, 4, 0, 3}};
    for (auto a : exps) {
      a.resize(std::size_t(n + 1));
      int deg = 0;
      double expect = 1;
      for (int k : a) {
        deg += k;
        expect *= factorial(k);
      }
      if (deg > rule.degree) continue;
      expect /= factorial(n + deg);
      double got = 0;
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        double v = rule.weights[q];
        for (int j = 0; j <= n; ++j) v *= std::pow(rule.nodes[q][std::size_t(j)], a[std::size_t(j)]);
        got += v;
      }
      EXPECT_NEAR(got, expect, 1e-13) << n;
    }
  }
}

TEST(DuhamelExpansion, TermsMatchBlockExponential) {
  auto c = onsite_model(build_hypercubic(1, 1), 1.0, 1.0, 0.3);
  auto gh = grid_hamiltonian(c, SectorSpec::from_two_m(2, 0), QGrid(2, 5, 4.0));
  Eigen::MatrixXcd k = Eigen::MatrixXcd(gh.kinetic), u0 = Eigen::MatrixXcd(gh.coulomb0);
  auto keig = eigh<cplx>(k);
  auto quad = duhamel_terms(keig, u0, 0.3, 3);
  auto exact = duhamel_terms_exact(k, u0, 0.3, 3);
  EXPECT_LT((quad[0] - expm_hermitian<cplx>(k, -0.3)).norm(), 1e-12);
  for (int n = 0; n <= 3; ++n) EXPECT_LT((quad[std::size_t(n)] - exact[std::size_t(n)]).norm(), 1e-8) << n;
}

TEST(DuhamelExpansion, RemainderOrderAndConePreservation) {
  auto c = onsite_model(build_hypercubic(1, 1), 1.0, 1.0, 0.3);
  auto gh = grid_hamiltonian(c, SectorSpec::from_two_m(2, 0), QGrid(2, 5, 4.0));
  auto r = duhamel_expansion_check(gh, {0.02, 0.04, 0.08}, 2, 10, 3);
  EXPECT_TRUE(r.slopes_ok);
  for (int n = 0; n <= 2; ++n) EXPECT_NEAR(r.slopes[std::size_t(n)], n + 1, 0.3);
  EXPECT_TRUE(r.terms_preserve_cone);
  EXPECT_TRUE(r.partial_sums_preserve_cone);
}
