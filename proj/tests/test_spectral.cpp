#include <gtest/gtest.h>

#include <algorithm>
#include <bit>

#include "hhlab/spectral.hpp"

using namespace hhlab;

namespace {

CouplingMatrices onsite_model(const LatticeGraph& g, double t, double u0, double g0, double w0 = 1.0) {
  return evaluate(g, {Coupling::bond(t), Coupling::on_site(u0), Coupling::on_site(g0), w0});
}

// Independent Hubbard block: modes up(x) = x, down(x) = n + x, Jordan-Wigner sign from
// the occupied modes strictly between the two hopping modes.
Eigen::MatrixXd hubbard_oracle(const LatticeGraph& g, double t, double u0, int n_up, int n_dn) {
  const int n = g.vertex_count();
  std::vector<unsigned> states;
  for (unsigned m = 0; m < (1u << (2 * n)); ++m)
    if (std::popcount(m & ((1u << n) - 1)) == n_up && std::popcount(m >> n) == n_dn) states.push_back(m);
  auto index = [&](unsigned m) { return int(std::lower_bound(states.begin(), states.end(), m) - states.begin()); };
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(Index(states.size()), Index(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    unsigned m = states[i];
    for (int x = 0; x < n; ++x) {
      int nx = ((m >> x) & 1) + ((m >> (n + x)) & 1);
      h(Index(i), Index(i)) += 0.5 * u0 * (nx - 1) * (nx - 1);
    }
    for (const auto& e : g.edges())
      for (int s = 0; s < 2; ++s)
        for (auto [a, b] : {std::pair{e.a, e.b}, std::pair{e.b, e.a}}) {
          int ma = s * n + a, mb = s * n + b;
          if (!((m >> mb) & 1) || ((m >> ma) & 1)) continue;
          unsigned lo = unsigned(std::min(ma, mb)), hi = unsigned(std::max(ma, mb));
          unsigned between = m & (((1u << hi) - 1) & ~((1u << (lo + 1)) - 1));
          double sign = std::popcount(between) % 2 ? -1.0 : 1.0;
          unsigned m2 = (m & ~(1u << mb)) | (1u << ma);
          h(index(m2), Index(i)) += -t * sign;
        }
  }
  return h;
}

Eigen::VectorXd basis_vector(const ModeBasis& b, Mask m, Index pdim = 1) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(b.dim() * pdim);
  v[b.index_of(m) * pdim] = 1.0;
  return v;
}

}  // namespace

TEST(GroundState, DiagonalMatrix) {
  SparseMat<double> h(3, 3);
  h.insert(0, 0) = 0;
  h.insert(1, 1) = 1;
  h.insert(2, 2) = 2;
  auto ep = ground_state(h, 2);
  EXPECT_NEAR(ep.values[0], 0.0, 1e-14);
  EXPECT_NEAR(ep.values[1], 1.0, 1e-14);
}

TEST(GroundState, FourSiteHubbardMatchesOracle) {
  auto g = build_hypercubic(2, 1);
  auto c = onsite_model(g, 1.0, 2.0, 0.0);
  OccupationPhonons ph(4, 0, 1.0);
  for (auto [nu, nd] : std::vector<std::pair<int, int>>{{2, 2}, {3, 1}, {1, 3}}) {
    auto h = assemble_H(c, electron_sector(4, nu, nd), ph);
    auto ep = ground_state(h.matrix, 4);
    Eigen::VectorXd oracle = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(hubbard_oracle(g, 1.0, 2.0, nu, nd)).eigenvalues();
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(ep.values[k], oracle[k], 1e-10) << nu << nd << k;
  }
}

TEST(GroundState, LanczosAgreesWithDense) {
  auto g = build_hypercubic(2, 1);
  auto c = onsite_model(g, 1.0, 1.0, 0.3);
  OccupationPhonons ph(4, 1, 1.0);
  auto h = assemble_H(c, electron_sector(4, 2, 2), ph);
  EigOptions opt;
  opt.k = 3;
  opt.dense_below = 0;
  auto lanczos = lowest_eigenpairs(h.matrix, opt);
  auto dense = eigh<double>(Eigen::MatrixXd(h.matrix), false);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(lanczos.values[k], dense.values[k], 1e-9);
  for (int k = 0; k < 3; ++k) EXPECT_LE(lanczos.residuals[k], 1e-8);
}

TEST(GroundState, FreePhononsHaveZeroGroundEnergy) {
  OccupationPhonons ph(2, 3, 0.8);
  auto ep = ground_state(ph.energy(), 2);
  EXPECT_NEAR(ep.values[0], 0.0, 1e-14);
  EXPECT_NEAR(ep.values[1], 0.8, 1e-12);
}

TEST(SectorReport, TwoSitePositiveDefiniteIsUnique) {
  auto g = build_hypercubic(1, 1);
  auto c = onsite_model(g, 1.0, 1.0, 0.3);
  ASSERT_TRUE(effective_coulomb(c).pd);
  auto r = sector_report(g, c, SectorSpec::from_two_m(2, 0), 8);
  EXPECT_FALSE(r.degenerate);
  EXPECT_GT(r.gap, 0.1);
  EXPECT_LE(r.spin.residual, 1e-8);
  EXPECT_EQ(r.spin.s, 0.0);
  EXPECT_LT(r.correlations(0, 1), -1e-10);
  EXPECT_GT(r.pseudospin_overlap, 0.0);
}

// <S_{x+} S_{x-}> = <n_{x up} (1 - n_{x down})>, evaluated directly from the amplitudes.
TEST(SectorReport, DiagonalCorrelationsAreOccupations) {
  auto g = build_hypercubic(1, 1);
  auto c = onsite_model(g, 1.0, 1.0, 0.3);
  const int cutoff = 4;
  auto r = sector_report(g, c, SectorSpec::from_two_m(2, 0), cutoff);
  auto basis = electron_sector(2, 1, 1);
  const Index pdim = OccupationPhonons(2, cutoff, 1.0).dim();
  for (int x = 0; x < 2; ++x) {
    double expect = 0;
    for (Index i = 0; i < basis.dim(); ++i) {
      Mask m = basis.state(i);
      if (((m >> x) & 1) && !((m >> (2 + x)) & 1)) expect += r.ground.segment(i * pdim, pdim).squaredNorm();
    }
    EXPECT_NEAR(r.correlations(x, x), expect, 1e-12);
    EXPECT_GE(r.correlations(x, x), 0.0);
  }
}

// Fully polarized: one up electron per site, no hopping possible; each site is a displaced
// oscillator with n = 1, so E0 = -|L| g0^2 / w0.
TEST(SectorReport, FullyPolarizedIsDisplacedPhonons) {
  auto g = build_hypercubic(1, 1);
  auto c = onsite_model(g, 1.0, 1.0, 0.3);
  auto sec = SectorSpec::from_two_m(2, 2);
  EXPECT_EQ(sec.m_hat, 0);
  auto r = sector_report(g, c, sec, 12);
  EXPECT_FALSE(r.degenerate);
  EXPECT_NEAR(r.e0, -2 * 0.09, 1e-9);
  EXPECT_EQ(r.spin.s, 1.0);
}

TEST(SectorReport, PureHubbardUniquePerSector) {
  auto g = build_hypercubic(2, 1);
  auto c = onsite_model(g, 1.0, 1.0, 0.0);
  std::vector<double> e0;
  for (const auto& sec : SectorSpec::all(4)) {
    auto r = sector_report(g, c, sec, 0);
    Eigen::VectorXd oracle = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                                 hubbard_oracle(g, 1.0, 1.0, sec.n_up, sec.n_down)).eigenvalues();
    EXPECT_NEAR(r.e0, oracle[0], 1e-10);
    EXPECT_FALSE(r.degenerate) << sec.label();
    EXPECT_GT(r.gap, 0.0);
    EXPECT_GE(r.spin.s, std::abs(sec.m()));
    e0.push_back(r.e0);
  }
  for (std::size_t i = 0; i < e0.size(); ++i) EXPECT_NEAR(e0[i], e0[e0.size() - 1 - i], 1e-10);
}

TEST(SectorReport, OddVertexCountRejected) {
  auto g = build_general(3, {{0, 1}, {1, 2}});
  auto c = onsite_model(g, 1.0, 1.0, 0.0);
  EXPECT_THROW(sector_report(g, c, SectorSpec::from_two_m(3, 1), 0), Error);
}

TEST(SectorReport, FourRingSignPatternAlongLadder) {
  auto g = build_hypercubic(2, 1);
  auto c = onsite_model(g, 1.0, 1.0, 0.3);
  auto ladder = sector_ladder(g, c, SectorSpec::from_two_m(4, 0), {1, 3});
  EXPECT_TRUE(ladder.stable);
  const auto& top = ladder.rungs.back();
  EXPECT_FALSE(top.degenerate);
  auto sp = check_sign_pattern(top.correlations, g.sublattice_sign());
  EXPECT_TRUE(sp.agrees);
  EXPECT_TRUE(sp.all_resolved);
  EXPECT_GT(sp.smallest, 1e-10);
}

TEST(SignPattern, DetectsDisagreementAndUnresolved) {
  std::vector<int> gamma = {1, -1};
  Eigen::MatrixXd ok(2, 2), bad(2, 2), tiny(2, 2);
  ok << 0.5, -0.2, -0.2, 0.5;
  bad << 0.5, 0.2, 0.2, 0.5;
  tiny << 0.5, -1e-13, -1e-13, 0.5;
  EXPECT_TRUE(check_sign_pattern(ok, gamma).agrees);
  EXPECT_FALSE(check_sign_pattern(bad, gamma).agrees);
  auto t = check_sign_pattern(tiny, gamma);
  EXPECT_TRUE(t.agrees);
  EXPECT_FALSE(t.all_resolved);
}

// Every site singly occupied: S~+- annihilate each site, so the state is a pseudospin singlet.
TEST(Pseudospin, SinglyOccupiedStateIsSinglet) {
  auto b = electron_sector(2, 1, 1);
  std::vector<int> gamma = {1, -1};
  EXPECT_NEAR(pseudospin_singlet_overlap<double>(basis_vector(b, 0b1001), b, gamma, 1), 1.0, 1e-12);
  auto pol = electron_sector(2, 2, 0);
  EXPECT_NEAR(pseudospin_singlet_overlap<double>(basis_vector(pol, 0b0011), pol, gamma, 1), 1.0, 1e-12);
}

// A doublon-holon pair is two pseudospin-1/2 with m = 0: equal weight on singlet and triplet.
TEST(Pseudospin, DoublonHolonIsHalfSinglet) {
  auto b = electron_sector(2, 1, 1);
  std::vector<int> gamma = {1, -1};
  EXPECT_NEAR(pseudospin_singlet_overlap<double>(basis_vector(b, 0b0101), b, gamma, 1), 0.5, 1e-12);
  EXPECT_NEAR(pseudospin_singlet_overlap<double>(basis_vector(b, 0b1010), b, gamma, 1), 0.5, 1e-12);
}

TEST(Pseudospin, OverlapIsAProbability) {
  auto b = electron_sector(2, 1, 1);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd v(b.dim() * 3);
    for (Index i = 0; i < v.size(); ++i) v[i] = n(rng);
    double o = pseudospin_singlet_overlap<double>(v, b, {1, -1}, 3);
    EXPECT_GE(o, -1e-14);
    EXPECT_LE(o, 1.0 + 1e-14);
  }
}

TEST(FrameConsistency, TwoSiteLadder) {
  auto c = onsite_model(build_hypercubic(1, 1), 1.0, 1.0, 0.3);
  auto r = frame_consistency(c, SectorSpec::from_two_m(2, 0), {2, 4, 6, 8});
  EXPECT_TRUE(r.monotone);
  EXPECT_LE(r.max_unitarity, 1e-10);
  EXPECT_LT(r.rungs.back().lf_difference, 1e-8);
}
