// One PASS/FAIL line per acceptance criterion; exit status 1 if any line fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "hhlab/cone.hpp"
#include "hhlab/pathintegral.hpp"
#include "hhlab/spectral.hpp"
#include "hhlab/thermal.hpp"

using namespace hhlab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s %2d %-28s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// U0 = 1, g0 = 0.3, omega0 = 1, t = 1 on nearest-neighbour bonds.
CouplingSpec holstein_hubbard(double g0 = 0.3, double u0 = 1.0) {
  return {Coupling::bond(1.0), Coupling::on_site(u0), Coupling::on_site(g0), 1.0};
}

struct System {
  const char* name;
  LatticeGraph graph;
};

std::vector<System> uniqueness_systems() { return {{"2-site", build_hypercubic(1, 1)}, {"4-ring", build_hypercubic(2, 1)}}; }

// Criteria 1-3 share the same ladders.
struct LadderRun {
  std::string system;
  SectorSpec sector;
  LadderReport ladder;
};

std::vector<LadderRun>& ladder_runs() {
  static std::vector<LadderRun> runs = [] {
    std::vector<LadderRun> out;
    for (const auto& s : uniqueness_systems()) {
      auto c = evaluate(s.graph, holstein_hubbard());
      for (const auto& sec : SectorSpec::all(s.graph.vertex_count()))
        out.push_back({s.name, sec, sector_ladder(s.graph, c, sec, {2, 4, 6})});
    }
    return out;
  }();
  return runs;
}

}  // namespace

int main() {
  criterion(1, "uniqueness", [] {
    double worst_gap_ratio = INFINITY, worst_change = 0;
    bool ok = true;
    for (const auto& r : ladder_runs()) {
      for (const auto& rung : r.ladder.rungs) {
        ok = ok && !rung.degenerate;
        worst_gap_ratio = std::min(worst_gap_ratio, rung.gap / rung.gap_tol);
      }
      for (double ch : r.ladder.gap_changes) worst_change = std::max(worst_change, ch);
      ok = ok && r.ladder.stable;
    }
    return Outcome{ok, fmt("%g sector ladders, min gap/tol %.3g, max gap change %.3g", double(ladder_runs().size()),
                           worst_gap_ratio, worst_change)};
  });

  criterion(2, "sign structure", [] {
    bool ok = true;
    double smallest = INFINITY;
    int checked = 0;
    for (const auto& r : ladder_runs()) {
      if (r.sector.two_m != 0) continue;
      const auto graph = r.system == "2-site" ? build_hypercubic(1, 1) : build_hypercubic(2, 1);
      for (const auto& rung : r.ladder.rungs) {
        auto sp = check_sign_pattern(rung.correlations, graph.sublattice_sign());
        ok = ok && sp.agrees;
        smallest = std::min(smallest, sp.smallest);
        ++checked;
      }
    }
    return Outcome{ok, fmt("%g M=0 ground states, smallest |<S+S->| %.3g", checked, smallest)};
  });

  criterion(3, "pseudospin overlap", [] {
    double lo = INFINITY;
    for (const auto& r : ladder_runs())
      for (const auto& rung : r.ladder.rungs) lo = std::min(lo, rung.pseudospin_overlap);
    return Outcome{lo > 1e-8, fmt("min overlap %.4g (> 1e-8)", lo)};
  });

  criterion(4, "exact unitarity", [] {
    double worst = 0;
    int rungs = 0;
    auto pair = build_hypercubic(1, 1);
    auto c2 = evaluate(pair, holstein_hubbard());
    for (const auto& sec : SectorSpec::all(2)) {
      auto fc = frame_consistency(c2, sec, {2, 4, 6, 8});
      worst = std::max(worst, fc.max_unitarity);
      rungs += int(fc.rungs.size());
    }
    auto ring = build_hypercubic(2, 1);
    auto c4 = evaluate(ring, holstein_hubbard());
    for (int tm : {0, 2}) {
      auto fc = frame_consistency(c4, SectorSpec::from_two_m(4, tm), {1, 2});
      worst = std::max(worst, fc.max_unitarity);
      rungs += int(fc.rungs.size());
    }
    return Outcome{worst <= 1e-10, fmt("%g truncations, max spectral difference %.3g", rungs, worst)};
  });

  criterion(5, "lang-firsov consistency", [] {
    auto pair = build_hypercubic(1, 1);
    auto c = evaluate(pair, holstein_hubbard());
    bool ok = true;
    std::string detail;
    for (const auto& sec : SectorSpec::all(2)) {
      auto fc = frame_consistency(c, sec, {2, 4, 6, 8});
      ok = ok && fc.monotone && fc.rungs.back().lf_difference < 1e-3;
      detail += "M=" + sec.label() + ":";
      for (const auto& r : fc.rungs) detail += fmt(" %.2g", r.lf_difference);
      detail += "; ";
    }
    return Outcome{ok, detail};
  });

  criterion(6, "susceptibility bound", [] {
    auto ring = build_hypercubic(2, 1);
    struct Case {
      CouplingSpec spec;
      ThermalFrame frame;
      int cutoff;
    };
    // With g = 0 the phonons decouple and n_max = 0 is exact.
    const Case cases[] = {
        {{Coupling::bond(1.0), Coupling::on_site(2.0), Coupling::zero(), 1.0}, ThermalFrame::kOriginal, 0},
        {{Coupling::bond(1.0), nearest_neighbour_coulomb(2.0, 0.5, 1), Coupling::zero(), 1.0},
         ThermalFrame::kOriginal, 0},
        {{Coupling::bond(1.0), Coupling::on_site(2.0), Coupling::on_site(0.4), 1.0}, ThermalFrame::kTransformed, 1},
        {{Coupling::bond(1.0), nearest_neighbour_coulomb(2.0, 0.5, 1), Coupling::on_site(0.4), 1.0},
         ThermalFrame::kTransformed, 1},
    };
    bool ok = true;
    double worst = 0, dev = 0;
    int runs = 0;
    for (const auto& cs : cases) {
      auto c = evaluate(ring, cs.spec);
      auto blocks = full_thermal_state(c, cs.cutoff, 1.0, cs.frame).blocks;
      for (double beta : {1.0, 5.0}) {
        auto ts = make_thermal_state<cplx>(beta, blocks);
        auto rep = susceptibility_bound_check(ring, c, ts, cs.frame);
        ok = ok && rep.bound_holds && rep.max_density_deviation <= 1e-6;
        worst = std::max(worst, rep.max_product);
        dev = std::max(dev, rep.max_density_deviation);
        ++runs;
      }
    }
    return Outcome{ok, fmt("%g runs, max chi*U_eff^ %.6g, max |<n>-1| %.2g", runs, worst, dev)};
  });

  criterion(7, "gaussian domination", [] {
    auto c = evaluate(build_hypercubic(1, 1), holstein_hubbard());
    CounterRng rng(7, 4);
    std::vector<Eigen::VectorXd> fields;
    for (int s = 0; s < 50; ++s) fields.push_back(Eigen::Vector2d(rng.normal(), rng.normal()));
    auto rep = gaussian_domination_check(c, 2, 1.0, 0.1, fields);
    bool ok = rep.holds && std::abs(rep.linear) < 1e-8 && rep.curvature <= 0;
    return Outcome{ok, fmt("max Z(h)/Z(0) %.12g, linear %.2g, curvature %.4g", rep.max_ratio, rep.linear,
                           rep.curvature)};
  });

  // Criteria 8 and 9 share the 2-site grid.
  auto c2 = evaluate(build_hypercubic(1, 1), holstein_hubbard());
  const SectorSpec m0 = SectorSpec::from_two_m(2, 0);

  criterion(8, "cone preservation", [&] {
    auto gh = grid_hamiltonian(c2, m0, QGrid(2, 15, 6.0));
    auto rep = semigroup_positivity_check(gh, {0.1, 0.5, 1.0}, 100, 8);
    double worst = *std::min_element(rep.worst_relative.begin(), rep.worst_relative.end());
    return Outcome{rep.preserved, fmt("100 members x 3 betas, worst relative min eigenvalue %.3g", worst)};
  });

  criterion(9, "strict positivity", [&] {
    auto gh = grid_hamiltonian(c2, m0, QGrid(2, 15, 6.0));
    auto sp = ground_state_strict_positivity(gh);
    return Outcome{effective_coulomb(c2).pd && sp.strictly_positive,
                   fmt("E0 %.8g, gap %.4g, interior min eigenvalue %.3g", sp.e0, sp.gap, sp.interior_min)};
  });

  criterion(10, "coulomb lower bound", [] {
    // 3-site path with nearest-neighbour repulsion; U_eff positive definite.
    auto path = build_general(3, {{0, 1}, {1, 2}});
    CouplingSpec spec{Coupling::bond(1.0), Coupling{1.0, 0.3, std::nullopt}, Coupling::on_site(0.3), 1.0};
    auto c = evaluate(path, spec);
    auto ue = effective_coulomb(c);
    bool ok = ue.pd;
    double worst = INFINITY;
    for (int m_hat = 1; m_hat <= 2; ++m_hat) {
      auto rep = coulomb_lower_bound_check(ue.matrix, m_hat, 50, 10);
      ok = ok && rep.preserved;
      worst = std::min(worst, rep.worst_relative);
    }
    return Outcome{ok, fmt("U0 %.4g, 50 members per factor, worst relative min eigenvalue %.3g", ue.u0, worst)};
  });

  criterion(11, "duhamel expansion", [&] {
    auto gh = grid_hamiltonian(c2, m0, QGrid(2, 11, 6.0));
    auto rep = duhamel_expansion_check(gh, {0.1, 0.2, 0.4}, 2, 10, 11);
    bool ok = rep.slopes_ok && rep.terms_preserve_cone && rep.partial_sums_preserve_cone;
    return Outcome{ok, fmt("slopes %.3f %.3f %.3f (want 1 2 3)", rep.slopes[0], rep.slopes[1], rep.slopes[2])};
  });

  criterion(12, "fermionic graph connectivity", [] {
    int checked = 0, bad = 0, graphs = 0;
    for (int n = 1; n <= 6; ++n)
      for (const auto& g : connected_graph_catalog(n)) {
        ++graphs;
        for (int k = 1; k < n; ++k) {
          ++checked;
          if (!fermionic_graph(g, k).graph.connected()) ++bad;
        }
      }
    return Outcome{bad == 0, fmt("%g graphs, %g (graph, n) pairs, %g disconnected", graphs, checked, bad)};
  });

  criterion(13, "product integration", [] {
    auto rep = product_bound_check(100, 4, 1.0, 13);
    return Outcome{rep.violations == 0, fmt("%g paths, %g violations, worst margin %.3g", rep.paths, rep.violations,
                                            rep.worst_margin)};
  });

  criterion(14, "feynman-kac kernel", [] {
    // One site has no hopping, so the Mehler product applies.
    CouplingSpec spec{Coupling::zero(), Coupling::on_site(1.0), Coupling::on_site(0.5), 1.0};
    auto c = evaluate(build_general(1, {}), spec);
    KernelOptions opt;
    opt.samples = 100000;
    opt.seed = 14;
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pts;
    for (auto [a, b] : {std::pair{0.0, 0.0}, std::pair{0.4, -0.4}, std::pair{0.8, 0.0}})
      pts.emplace_back(Eigen::VectorXd::Constant(1, a), Eigen::VectorXd::Constant(1, b));
    auto rep = fk_check(c, SectorSpec::from_two_m(1, -1), pts, 0.5, QGrid(1, 401, 8.0), opt);
    bool ok = rep.has_mehler && rep.max_z_grid <= 3.0 && rep.max_z_mehler <= 3.0;
    return Outcome{ok, fmt("max z vs grid %.3g, vs Mehler %.3g (<= 3)", rep.max_z_grid, rep.max_z_mehler)};
  });

  std::printf("%d of 14 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
