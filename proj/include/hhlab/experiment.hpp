#ifndef HHLAB_EXPERIMENT_HPP
#define HHLAB_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hhlab/cone.hpp"
#include "hhlab/error.hpp"
#include "hhlab/lattice_graph.hpp"
#include "hhlab/model.hpp"
#include "hhlab/pathintegral.hpp"
#include "hhlab/spectral.hpp"
#include "hhlab/thermal.hpp"

namespace hhlab {

using Json = nlohmann::ordered_json;

// --- configuration ------------------------------------------------------------------

enum class Task { kGroundState, kCorrelations, kSusceptibility, kGaussianDomination, kConeCheck, kFkCheck, kGraphCheck };

inline const std::vector<std::pair<std::string, Task>>& task_names() {
  static const std::vector<std::pair<std::string, Task>> names = {
      {"ground-state", Task::kGroundState},       {"correlations", Task::kCorrelations},
      {"susceptibility", Task::kSusceptibility},  {"gaussian-domination", Task::kGaussianDomination},
      {"cone-check", Task::kConeCheck},           {"fk-check", Task::kFkCheck},
      {"graph-check", Task::kGraphCheck}};
  return names;
}

inline std::string to_string(Task t) {
  for (const auto& [name, task] : task_names())
    if (task == t) return name;
  return "unknown";
}

struct LatticeConfig {
  std::string kind = "hypercubic";
  int L = 1;
  int d = 1;
  int sites = 0;
  std::vector<Edge> edges;

  LatticeGraph build() const {
    if (kind == "hypercubic") return build_hypercubic(L, d);
    return build_general(sites, edges);
  }

  int site_count() const {
    if (kind != "hypercubic") return sites;
    int n = 1;
    for (int i = 0; i < d; ++i) n *= 2 * L;
    return n;
  }
};

struct TruncationConfig {
  int n_max = 2;
  std::vector<int> ladder;  ///< empty: just n_max
  int n_q = 15;
  double q_max = 6.0;

  std::vector<int> cutoffs() const { return ladder.empty() ? std::vector<int>{n_max} : ladder; }
};

struct RunConfig {
  Task task = Task::kGroundState;
  std::vector<double> beta{1.0};
  std::optional<std::vector<std::vector<double>>> momenta;
  std::optional<std::vector<int>> sectors;  ///< values of 2M
  int samples = 0;                          ///< 0: task default
  std::uint64_t seed = 1;
  int steps = 64;
  double epsilon = 0.1;
  std::optional<ThermalFrame> frame;
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> points;
  int max_sites = 6;
  bool frames = false;
  bool duhamel = false;
  int paths = 100;
};

struct OutputConfig {
  std::string directory;
  std::string formats = "both";
  std::optional<std::string> stem;

  bool json() const { return formats == "json" || formats == "both"; }
  bool csv() const { return formats == "csv" || formats == "both"; }
};

struct ExperimentConfig {
  std::string name = "experiment";
  LatticeConfig lattice;
  CouplingSpec couplings{Coupling::bond(1.0), Coupling::on_site(1.0), Coupling::zero(), 1.0};
  TruncationConfig truncation;
  RunConfig run;
  OutputConfig output;
  Index max_dimension = 200000;
  Json source;
};

namespace config_detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& msg) {
  throw Error(ErrorCode::kConfigInvalid, path + ": " + msg);
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline const Json* find(const Json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline const Json& object(const Json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  return j;
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "expected a finite number");
  return v;
}

inline long integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<long>();
}

inline bool boolean(const Json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

inline std::string string(const Json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

inline std::vector<double> numbers(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a list of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::vector<int> integers(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a list of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(int(integer(j[i], path + "[" + std::to_string(i) + "]")));
  return out;
}

inline void known_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) fail(join(path, it.key()), "unknown key");
  }
}

/// A number is read as the default component (nearest for t, on-site for U and g).
inline Coupling coupling(const Json& j, const std::string& path, bool number_is_bond) {
  if (j.is_number()) {
    double v = number(j, path);
    return number_is_bond ? Coupling::bond(v) : Coupling::on_site(v);
  }
  object(j, path);
  known_keys(j, path, {"onsite", "nearest", "table"});
  Coupling c;
  if (auto* v = find(j, "onsite")) c.onsite = number(*v, join(path, "onsite"));
  if (auto* v = find(j, "nearest")) c.nearest = number(*v, join(path, "nearest"));
  if (auto* v = find(j, "table")) {
    const std::string tp = join(path, "table");
    if (!v->is_array() || v->empty()) fail(tp, "expected a square list of rows");
    const Index n = Index(v->size());
    Eigen::MatrixXd m(n, n);
    for (Index r = 0; r < n; ++r) {
      auto row = numbers((*v)[std::size_t(r)], tp + "[" + std::to_string(r) + "]");
      if (Index(row.size()) != n) fail(tp + "[" + std::to_string(r) + "]", "row length differs from the row count");
      for (Index k = 0; k < n; ++k) m(r, k) = row[std::size_t(k)];
    }
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-14 * std::max(1.0, m.cwiseAbs().maxCoeff()))
      fail(tp, "table must be symmetric");
    c.table = m;
  }
  return c;
}

inline Eigen::VectorXd point(const Json& j, const std::string& path, int sites) {
  auto v = numbers(j, path);
  if (int(v.size()) != sites) fail(path, "expected " + std::to_string(sites) + " coordinates");
  return Eigen::Map<Eigen::VectorXd>(v.data(), Index(v.size()));
}

inline Index binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  Index r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline Index ipow(Index b, int e) {
  Index r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

}  // namespace config_detail

/// Largest single matrix dimension the task will allocate, estimated from the config alone.
inline Index estimated_dimension(const ExperimentConfig& cfg) {
  using namespace config_detail;
  const int n = cfg.lattice.site_count();
  const auto& tr = cfg.truncation;
  auto phonons = [&](int cutoff) { return ipow(cutoff + 1, n); };
  auto sector_dim = [&](int two_m) { return binomial(n, (n + two_m) / 2) * binomial(n, (n - two_m) / 2); };
  auto fermion_d = [&](int two_m) { return binomial(n, (n - two_m) / 2); };
  Index dim = 0;
  switch (cfg.run.task) {
    case Task::kGroundState:
    case Task::kCorrelations: {
      std::vector<int> sectors = cfg.run.sectors.value_or(std::vector<int>{});
      if (sectors.empty())
        for (int tm = -n; tm <= n; tm += 2) sectors.push_back(tm);
      for (int cut : tr.cutoffs())
        for (int tm : sectors) dim = std::max(dim, sector_dim(tm) * phonons(cut));
      break;
    }
    case Task::kSusceptibility:
    case Task::kGaussianDomination:
      for (int a = 0; a <= n; ++a)
        for (int b = 0; b <= n; ++b) dim = std::max(dim, binomial(n, a) * binomial(n, b) * phonons(tr.n_max));
      break;
    case Task::kConeCheck: {
      int tm = cfg.run.sectors && !cfg.run.sectors->empty() ? cfg.run.sectors->front() : n % 2;
      Index d = fermion_d(tm);
      dim = d * d * ipow(tr.n_q, n);
      break;
    }
    case Task::kFkCheck: {
      int tm = cfg.run.sectors && !cfg.run.sectors->empty() ? cfg.run.sectors->front() : n % 2;
      Index d = fermion_d(tm);
      dim = d * d * ipow(2 * tr.n_q - 1, n);
      break;
    }
    case Task::kGraphCheck:
      dim = binomial(cfg.run.max_sites, cfg.run.max_sites / 2);
      break;
  }
  return dim;
}

/// Parses and validates; every error names the offending field.
inline ExperimentConfig parse_config(const Json& j) {
  using namespace config_detail;
  object(j, "config");
  known_keys(j, "", {"name", "lattice", "couplings", "truncation", "run", "output", "budget", "sweep"});
  ExperimentConfig cfg;
  cfg.source = j;
  if (auto* v = find(j, "name")) cfg.name = string(*v, "name");

  if (auto* lat = find(j, "lattice")) {
    object(*lat, "lattice");
    known_keys(*lat, "lattice", {"kind", "L", "d", "sites", "edges"});
    if (auto* v = find(*lat, "kind")) cfg.lattice.kind = string(*v, "lattice.kind");
    if (cfg.lattice.kind == "hypercubic") {
      if (auto* v = find(*lat, "L")) cfg.lattice.L = int(integer(*v, "lattice.L"));
      if (auto* v = find(*lat, "d")) cfg.lattice.d = int(integer(*v, "lattice.d"));
      if (cfg.lattice.L < 1) fail("lattice.L", "must be >= 1");
      if (cfg.lattice.d < 1 || cfg.lattice.d > 3) fail("lattice.d", "must be 1, 2 or 3");
      if (config_detail::ipow(2 * cfg.lattice.L, cfg.lattice.d) > 63) fail("lattice", "more than 63 sites");
    } else if (cfg.lattice.kind == "custom") {
      auto* s = find(*lat, "sites");
      if (!s) fail("lattice.sites", "required for a custom lattice");
      cfg.lattice.sites = int(integer(*s, "lattice.sites"));
      if (cfg.lattice.sites < 1 || cfg.lattice.sites > 63) fail("lattice.sites", "must be in 1..63");
      if (auto* e = find(*lat, "edges")) {
        if (!e->is_array()) fail("lattice.edges", "expected a list of [a, b] pairs");
        for (std::size_t i = 0; i < e->size(); ++i) {
          const std::string ep = "lattice.edges[" + std::to_string(i) + "]";
          auto ab = integers((*e)[i], ep);
          if (ab.size() != 2) fail(ep, "expected [a, b]");
          for (int x : ab)
            if (x < 0 || x >= cfg.lattice.sites) fail(ep, "vertex out of range");
          if (ab[0] == ab[1]) fail(ep, "self-loop");
          cfg.lattice.edges.push_back({ab[0], ab[1]});
        }
      }
    } else {
      fail("lattice.kind", "expected \"hypercubic\" or \"custom\"");
    }
  }
  const int n = cfg.lattice.site_count();

  if (auto* cp = find(j, "couplings")) {
    object(*cp, "couplings");
    known_keys(*cp, "couplings", {"t", "U", "g", "omega0"});
    if (auto* v = find(*cp, "t")) cfg.couplings.t = coupling(*v, "couplings.t", true);
    if (auto* v = find(*cp, "U")) cfg.couplings.U = coupling(*v, "couplings.U", false);
    if (auto* v = find(*cp, "g")) cfg.couplings.g = coupling(*v, "couplings.g", false);
    if (auto* v = find(*cp, "omega0")) cfg.couplings.omega0 = number(*v, "couplings.omega0");
    if (!(cfg.couplings.omega0 > 0)) fail("couplings.omega0", "must be positive");
    for (auto [key, c] : {std::pair{"t", &cfg.couplings.t}, std::pair{"U", &cfg.couplings.U},
                          std::pair{"g", &cfg.couplings.g}})
      if (c->table && c->table->rows() != n)
        fail(std::string("couplings.") + key + ".table", "shape does not match the lattice");
  }

  if (auto* t = find(j, "truncation")) {
    object(*t, "truncation");
    known_keys(*t, "truncation", {"n_max", "ladder", "n_q", "q_max"});
    if (auto* v = find(*t, "n_max")) cfg.truncation.n_max = int(integer(*v, "truncation.n_max"));
    if (auto* v = find(*t, "ladder")) cfg.truncation.ladder = integers(*v, "truncation.ladder");
    if (auto* v = find(*t, "n_q")) cfg.truncation.n_q = int(integer(*v, "truncation.n_q"));
    if (auto* v = find(*t, "q_max")) cfg.truncation.q_max = number(*v, "truncation.q_max");
    if (cfg.truncation.n_max < 0) fail("truncation.n_max", "must be >= 0");
    for (std::size_t i = 0; i < cfg.truncation.ladder.size(); ++i)
      if (cfg.truncation.ladder[i] < 0) fail("truncation.ladder[" + std::to_string(i) + "]", "must be >= 0");
    if (cfg.truncation.n_q < 3 || cfg.truncation.n_q % 2 == 0) fail("truncation.n_q", "must be odd and >= 3");
    if (!(cfg.truncation.q_max > 0)) fail("truncation.q_max", "must be positive");
  }

  if (auto* r = find(j, "run")) {
    object(*r, "run");
    known_keys(*r, "run", {"task", "beta", "p", "sectors", "samples", "seed", "steps", "epsilon", "frame", "points",
                           "max_sites", "frames", "duhamel", "paths"});
    auto* task = find(*r, "task");
    if (!task) fail("run.task", "required");
    std::string name = string(*task, "run.task");
    bool found = false;
    for (const auto& [tn, tv] : task_names())
      if (tn == name) {
        cfg.run.task = tv;
        found = true;
      }
    if (!found) fail("run.task", "unknown task \"" + name + "\"");
    if (auto* v = find(*r, "beta")) {
      if (v->is_number())
        cfg.run.beta = {number(*v, "run.beta")};
      else
        cfg.run.beta = numbers(*v, "run.beta");
      if (cfg.run.beta.empty()) fail("run.beta", "must not be empty");
      for (std::size_t i = 0; i < cfg.run.beta.size(); ++i)
        if (!(cfg.run.beta[i] > 0)) fail("run.beta[" + std::to_string(i) + "]", "must be positive");
    }
    if (auto* v = find(*r, "p")) {
      if (!v->is_array()) fail("run.p", "expected a list of momenta");
      std::vector<std::vector<double>> ps;
      for (std::size_t i = 0; i < v->size(); ++i) ps.push_back(numbers((*v)[i], "run.p[" + std::to_string(i) + "]"));
      cfg.run.momenta = ps;
    }
    if (auto* v = find(*r, "sectors")) {
      cfg.run.sectors = integers(*v, "run.sectors");
      for (std::size_t i = 0; i < cfg.run.sectors->size(); ++i) {
        int tm = (*cfg.run.sectors)[i];
        if (std::abs(tm) > n || (n + tm) % 2 != 0)
          fail("run.sectors[" + std::to_string(i) + "]", "2M must satisfy |2M| <= |L| with the parity of |L|");
      }
    }
    if (auto* v = find(*r, "samples")) cfg.run.samples = int(integer(*v, "run.samples"));
    if (cfg.run.samples < 0) fail("run.samples", "must be >= 0");
    if (auto* v = find(*r, "seed")) {
      long s = integer(*v, "run.seed");
      if (s < 0) fail("run.seed", "must be >= 0");
      cfg.run.seed = std::uint64_t(s);
    }
    if (auto* v = find(*r, "steps")) cfg.run.steps = int(integer(*v, "run.steps"));
    if (cfg.run.steps < 2) fail("run.steps", "must be >= 2");
    if (auto* v = find(*r, "epsilon")) cfg.run.epsilon = number(*v, "run.epsilon");
    if (!(cfg.run.epsilon > 0)) fail("run.epsilon", "must be positive");
    if (auto* v = find(*r, "frame")) {
      std::string f = string(*v, "run.frame");
      if (f == "original")
        cfg.run.frame = ThermalFrame::kOriginal;
      else if (f == "transformed")
        cfg.run.frame = ThermalFrame::kTransformed;
      else
        fail("run.frame", "expected \"original\" or \"transformed\"");
    }
    if (auto* v = find(*r, "points")) {
      if (!v->is_array()) fail("run.points", "expected a list of [phi, phi'] pairs");
      for (std::size_t i = 0; i < v->size(); ++i) {
        const std::string pp = "run.points[" + std::to_string(i) + "]";
        if (!(*v)[i].is_array() || (*v)[i].size() != 2) fail(pp, "expected [phi, phi']");
        cfg.run.points.emplace_back(point((*v)[i][0], pp + "[0]", n), point((*v)[i][1], pp + "[1]", n));
      }
    }
    if (auto* v = find(*r, "max_sites")) cfg.run.max_sites = int(integer(*v, "run.max_sites"));
    if (cfg.run.max_sites < 1 || cfg.run.max_sites > 6) fail("run.max_sites", "must be in 1..6");
    if (auto* v = find(*r, "frames")) cfg.run.frames = boolean(*v, "run.frames");
    if (auto* v = find(*r, "duhamel")) cfg.run.duhamel = boolean(*v, "run.duhamel");
    if (auto* v = find(*r, "paths")) cfg.run.paths = int(integer(*v, "run.paths"));
    if (cfg.run.paths < 0) fail("run.paths", "must be >= 0");
  } else {
    fail("run", "required");
  }

  if (auto* o = find(j, "output")) {
    object(*o, "output");
    known_keys(*o, "output", {"directory", "formats", "stem"});
    if (auto* v = find(*o, "directory")) cfg.output.directory = string(*v, "output.directory");
    if (auto* v = find(*o, "formats")) cfg.output.formats = string(*v, "output.formats");
    if (auto* v = find(*o, "stem")) cfg.output.stem = string(*v, "output.stem");
    if (!cfg.output.json() && !cfg.output.csv()) fail("output.formats", "expected json, csv or both");
  }
  if (auto* b = find(j, "budget")) {
    object(*b, "budget");
    known_keys(*b, "budget", {"max_dimension"});
    if (auto* v = find(*b, "max_dimension")) cfg.max_dimension = Index(integer(*v, "budget.max_dimension"));
    if (cfg.max_dimension < 1) fail("budget.max_dimension", "must be positive");
  }

  const Task task = cfg.run.task;
  if ((task == Task::kGroundState || task == Task::kCorrelations) && n % 2 != 0)
    fail("lattice", "ground-state and correlations need an even number of sites");
  if (task == Task::kSusceptibility || task == Task::kGaussianDomination) {
    if (n > 8) fail("lattice", "thermal tasks trace the full Fock space; at most 8 sites");
    Index block = estimated_dimension(cfg);
    if (block > 4000)
      throw Error(ErrorCode::kBudgetExceeded, "thermal blocks of dimension " + std::to_string(block) +
                                                  " exceed the dense limit 4000 (truncation.n_max)");
  }
  if (task == Task::kFkCheck && cfg.run.points.empty())
    cfg.run.points.emplace_back(Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n));
  Index dim = estimated_dimension(cfg);
  if (dim > cfg.max_dimension)
    throw Error(ErrorCode::kBudgetExceeded, "estimated dimension " + std::to_string(dim) +
                                                " exceeds budget.max_dimension " + std::to_string(cfg.max_dimension));
  return cfg;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigInvalid, "config: cannot open " + path.string());
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kConfigInvalid, "config: " + std::string(e.what()));
  }
}

// --- reports -----------------------------------------------------------------------------

/// One asserted inequality lhs <= rhs (or a boolean check written as counts), with the margin.
struct Verdict {
  std::string name;
  std::string assertion;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;

  double margin() const { return rhs - lhs; }
};

inline Verdict at_most(std::string name, std::string assertion, double lhs, double rhs) {
  return {std::move(name), std::move(assertion), lhs, rhs, lhs <= rhs};
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;

  void add(std::vector<Json> row) { rows.push_back(std::move(row)); }
};

struct RunReport {
  std::string name;
  Task task = Task::kGroundState;
  std::uint64_t seed = 0;
  Json config;
  std::vector<Verdict> verdicts;
  std::deque<std::pair<std::string, Table>> tables;  // table() hands out references that must survive later tables
  Json diagnostics = Json::object();
  Json headline = Json::object();

  bool passed() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
  }

  Table& table(const std::string& key, std::vector<std::string> columns) {
    tables.emplace_back(key, Table{std::move(columns), {}});
    return tables.back().second;
  }
};

inline Json number_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const RunReport& r) {
  Json j;
  j["name"] = r.name;
  j["task"] = to_string(r.task);
  j["seed"] = r.seed;
  j["passed"] = r.passed();
  j["config"] = r.config;
  Json vs = Json::array();
  for (const auto& v : r.verdicts)
    vs.push_back(Json{{"name", v.name},
                      {"assertion", v.assertion},
                      {"lhs", number_json(v.lhs)},
                      {"rhs", number_json(v.rhs)},
                      {"margin", number_json(v.margin())},
                      {"pass", v.pass}});
  j["verdicts"] = vs;
  j["headline"] = r.headline;
  j["diagnostics"] = r.diagnostics;
  Json ts = Json::object();
  for (const auto& [key, t] : r.tables) ts[key] = Json{{"columns", t.columns}, {"rows", t.rows}};
  j["tables"] = ts;
  return j;
}

/// RFC 4180: fields with comma, quote, CR or LF are quoted and quotes doubled; CRLF line ends.
inline std::string csv_field(const Json& v) {
  std::string s;
  if (v.is_string()) {
    s = v.get<std::string>();
  } else if (v.is_null()) {
    s = "";
  } else if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(17) << v.get<double>();
    s = os.str();
  } else {
    s = v.dump();
  }
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string to_csv(const Table& t) {
  std::string out;
  auto line = [&](const std::vector<Json>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += csv_field(fields[i]);
    }
    out += "\r\n";
  };
  std::vector<Json> head(t.columns.begin(), t.columns.end());
  line(head);
  for (const auto& row : t.rows) line(row);
  return out;
}

inline Json vec_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

inline std::string vec_label(const std::vector<double>& v) {
  std::ostringstream os;
  os << std::setprecision(10);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ";" : "") << v[i];
  return os.str();
}

// --- tasks -----------------------------------------------------------------------------------

namespace task_detail {

inline std::vector<SectorSpec> sectors_of(const ExperimentConfig& cfg, int n) {
  if (!cfg.run.sectors || cfg.run.sectors->empty()) return SectorSpec::all(n);
  std::vector<SectorSpec> out;
  for (int tm : *cfg.run.sectors) out.push_back(SectorSpec::from_two_m(n, tm));
  return out;
}

inline SectorSpec first_sector(const ExperimentConfig& cfg, int n) {
  if (cfg.run.sectors && !cfg.run.sectors->empty()) return SectorSpec::from_two_m(n, cfg.run.sectors->front());
  return SectorSpec::from_two_m(n, n % 2);
}

inline void coulomb_diagnostics(RunReport& r, const CouplingMatrices& c) {
  auto ue = effective_coulomb(c);
  auto a1 = check_A1(c.g);
  r.diagnostics["u_eff_min_eigenvalue"] = ue.u0;
  r.diagnostics["u_eff_psd"] = ue.psd;
  r.diagnostics["u_eff_pd"] = ue.pd;
  r.diagnostics["a1_holds"] = a1.holds;
  r.diagnostics["a1_deviation"] = a1.deviation;
  r.headline["u_eff_pd"] = ue.pd;
  r.headline["u_eff_min"] = ue.u0;
}

inline Json correlations_table(RunReport& r, const Eigen::MatrixXd& corr, const std::vector<int>& gamma,
                               const std::string& key) {
  auto& t = r.table(key, {"x", "y", "value", "gamma_x_gamma_y", "agrees"});
  for (Index x = 0; x < corr.rows(); ++x)
    for (Index y = 0; y < corr.cols(); ++y) {
      int gg = gamma[std::size_t(x)] * gamma[std::size_t(y)];
      double v = corr(x, y);
      bool agrees = std::abs(v) <= 1e-10 || (v > 0 ? 1 : -1) == gg;
      t.add({Json(x), Json(y), Json(v), Json(gg), Json(agrees)});
    }
  return Json();
}

inline void ground_state(const ExperimentConfig& cfg, RunReport& r) {
  auto graph = cfg.lattice.build();
  auto c = evaluate(graph, cfg.couplings);
  coulomb_diagnostics(r, c);
  const int n = graph.vertex_count();
  auto& t = r.table("sectors", {"two_m", "n_max", "e0", "e1", "gap", "gap_tol", "nondegenerate", "spin",
                                "spin_sq", "pseudospin_overlap"});
  double best_e0 = std::numeric_limits<double>::infinity();
  double best_gap = 0;
  Json changes = Json::object();
  for (const auto& sec : sectors_of(cfg, n)) {
    auto lr = sector_ladder(graph, c, sec, cfg.truncation.cutoffs());
    double min_gap_margin = std::numeric_limits<double>::infinity();
    double min_overlap = std::numeric_limits<double>::infinity();
    const GroundStateReport* worst = nullptr;
    for (const auto& rung : lr.rungs) {
      t.add({Json(sec.two_m), Json(rung.cutoff), Json(rung.e0), number_json(rung.e1), number_json(rung.gap),
             Json(rung.gap_tol), Json(!rung.degenerate), Json(rung.spin.s), Json(rung.spin.expectation),
             Json(rung.pseudospin_overlap)});
      if (rung.gap - rung.gap_tol < min_gap_margin) {
        min_gap_margin = rung.gap - rung.gap_tol;
        worst = &rung;
      }
      min_overlap = std::min(min_overlap, rung.pseudospin_overlap);
    }
    const auto& last = lr.rungs.back();
    if (last.e0 < best_e0) {
      best_e0 = last.e0;
      best_gap = last.gap;
    }
    const std::string m = "M=" + sec.label();
    r.verdicts.push_back(at_most(m + " gap", "ground state of H_M is unique: gap tolerance < E1 - E0 at every cutoff",
                                 worst->gap_tol, worst->gap));
    r.verdicts.back().pass = !worst->degenerate;
    double max_change = lr.gap_changes.empty() ? 0.0 : *std::max_element(lr.gap_changes.begin(), lr.gap_changes.end());
    changes[m] = lr.gap_changes;
    r.verdicts.push_back(
        at_most(m + " ladder", "relative gap change between consecutive cutoffs < 0.1", max_change, 0.1));
    r.verdicts.back().pass = lr.stable;
    r.verdicts.push_back(at_most(m + " pseudospin", "pseudospin-singlet overlap of the ground state > 1e-8", 1e-8,
                                 min_overlap));
    r.verdicts.back().pass = min_overlap > 1e-8;
    if (sec.two_m == 0) {
      auto sp = check_sign_pattern(last.correlations, graph.sublattice_sign());
      correlations_table(r, last.correlations, graph.sublattice_sign(), "correlations");
      r.verdicts.push_back(at_most("M=0 sign pattern",
                                   "sign <S_x+ S_y-> = gamma(x) gamma(y) wherever |value| > 1e-10",
                                   sp.agrees ? 0.0 : 1.0, 0.0));
    }
    if (cfg.run.frames) {
      auto fc = frame_consistency(c, sec, cfg.truncation.cutoffs());
      auto& ft = r.table("frames-" + sec.label(), {"n_max", "dim", "e0", "e0_lang_firsov", "shift", "lf_difference",
                                                   "unitarity", "compared"});
      for (const auto& fr : fc.rungs)
        ft.add({Json(fr.cutoff), Json(fr.dim), Json(fr.e0), Json(fr.e0_lang_firsov), Json(fr.shift),
                Json(fr.lf_difference), Json(fr.unitarity), Json(fr.compared)});
      r.verdicts.push_back(at_most(m + " unitarity", "sorted spectra of the Lang-Firsov and hole-particle frames agree",
                                   fc.max_unitarity, 1e-10));
      r.verdicts.push_back(at_most(m + " lang-firsov monotone",
                                   "|E0(H_M) - E0(LF) - shift| decreases along the cutoff ladder",
                                   fc.monotone ? 0.0 : 1.0, 0.0));
    }
  }
  r.diagnostics["gap_changes"] = changes;
  r.headline["e0"] = best_e0;
  r.headline["gap"] = best_gap;
}

inline void correlations(const ExperimentConfig& cfg, RunReport& r) {
  auto graph = cfg.lattice.build();
  auto c = evaluate(graph, cfg.couplings);
  coulomb_diagnostics(r, c);
  SectorSpec sec = cfg.run.sectors && !cfg.run.sectors->empty() ? SectorSpec::from_two_m(graph.vertex_count(),
                                                                                         cfg.run.sectors->front())
                                                                 : SectorSpec::from_two_m(graph.vertex_count(), 0);
  auto rep = sector_report(graph, c, sec, cfg.truncation.n_max);
  correlations_table(r, rep.correlations, graph.sublattice_sign(), "correlations");
  auto sp = check_sign_pattern(rep.correlations, graph.sublattice_sign());
  r.verdicts.push_back(at_most("sign pattern", "sign <S_x+ S_y-> = gamma(x) gamma(y) wherever |value| > 1e-10",
                               sp.agrees ? 0.0 : 1.0, 0.0));
  r.diagnostics["smallest_abs_correlation"] = sp.smallest;
  r.diagnostics["all_resolved"] = sp.all_resolved;
  r.headline["e0"] = rep.e0;
  r.headline["gap"] = rep.gap;
}

inline void susceptibility(const ExperimentConfig& cfg, RunReport& r) {
  auto graph = cfg.lattice.build();
  auto c = evaluate(graph, cfg.couplings);
  coulomb_diagnostics(r, c);
  const int n = graph.vertex_count();
  ThermalFrame frame = cfg.run.frame.value_or(c.g.cwiseAbs().maxCoeff() == 0.0 ? ThermalFrame::kOriginal
                                                                                 : ThermalFrame::kTransformed);
  r.diagnostics["frame"] = frame == ThermalFrame::kOriginal ? "original" : "transformed";
  if (cfg.run.momenta)
    for (std::size_t i = 0; i < cfg.run.momenta->size(); ++i) {
      try {
        require_on_grid(graph, (*cfg.run.momenta)[i]);
      } catch (const Error& e) {
        throw Error(ErrorCode::kConfigInvalid, "run.p[" + std::to_string(i) + "]: " + e.what());
      }
    }
  const int samples = cfg.run.samples > 0 ? cfg.run.samples : 10;
  CounterRng rng(cfg.run.seed, 3);
  std::vector<Eigen::VectorXcd> fields;
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXcd h(n);
    for (int x = 0; x < n; ++x) h[x] = rng.complex_normal();
    fields.push_back(h);
  }
  auto& t = r.table("susceptibility", {"beta", "p", "chi", "u_eff_hat", "product", "checked", "pass"});
  double max_product = 0;
  for (double beta : cfg.run.beta) {
    auto ts = full_thermal_state(c, cfg.truncation.n_max, beta, frame);
    auto rep = susceptibility_bound_check(graph, c, ts, frame, fields);
    double worst = 0;
    for (const auto& row : rep.rows) {
      bool wanted = !cfg.run.momenta;
      if (cfg.run.momenta)
        for (const auto& p : *cfg.run.momenta) {
          bool same = p.size() == row.p.size();
          for (std::size_t k = 0; same && k < p.size(); ++k) same = std::abs(p[k] - row.p[k]) < 1e-9;
          wanted = wanted || same;
        }
      if (!wanted) continue;
      t.add({Json(beta), Json(vec_label(row.p)), Json(row.chi), Json(row.u_eff_hat), Json(row.product),
             Json(row.checked), Json(row.pass)});
      if (row.checked) worst = std::max(worst, row.product);
    }
    max_product = std::max(max_product, worst);
    std::ostringstream b;
    b << "beta=" << beta;
    r.verdicts.push_back(at_most(b.str() + " bound", "chi(p) U_eff^(p) <= 1 + 1e-8 wherever U_eff^(p) > 0", worst,
                                 1.0 + 1e-8));
    r.verdicts.push_back(at_most(b.str() + " half filling", "max_x |<n_x> - 1| <= 1e-6", rep.max_density_deviation,
                                 1e-6));
    r.verdicts.push_back(at_most(b.str() + " duhamel", "(A*, A) <= <h, U_eff h> / beta for A = <density, U_eff h>",
                                 -rep.worst_duhamel_margin, 0.0));
    r.verdicts.back().pass = rep.duhamel_holds;
  }
  r.headline["chi_u_max"] = max_product;
}

inline void gaussian_domination(const ExperimentConfig& cfg, RunReport& r) {
  auto graph = cfg.lattice.build();
  auto c = evaluate(graph, cfg.couplings);
  coulomb_diagnostics(r, c);
  const int n = graph.vertex_count();
  const int samples = cfg.run.samples > 0 ? cfg.run.samples : 50;
  CounterRng rng(cfg.run.seed, 4);
  std::vector<Eigen::VectorXd> fields;
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd h(n);
    for (int x = 0; x < n; ++x) h[x] = rng.normal();
    fields.push_back(h);
  }
  auto& t = r.table("ratios", {"beta", "sample", "ratio"});
  double max_ratio = 0;
  for (double beta : cfg.run.beta) {
    auto rep = gaussian_domination_check(c, cfg.truncation.n_max, beta, cfg.run.epsilon, fields);
    for (std::size_t s = 0; s < rep.ratios.size(); ++s) t.add({Json(beta), Json(s), Json(rep.ratios[s])});
    max_ratio = std::max(max_ratio, rep.max_ratio);
    std::ostringstream b;
    b << "beta=" << beta;
    r.verdicts.push_back(at_most(b.str() + " domination", "Z(h) <= Z(0) (1 + 1e-10)", rep.max_ratio, 1.0 + 1e-10));
    r.verdicts.push_back(at_most(b.str() + " linear term", "|d/dlambda Z(lambda h)/Z(0)| at 0 < 1e-8",
                                 std::abs(rep.linear), 1e-8));
    r.verdicts.push_back(at_most(b.str() + " curvature", "second derivative of Z(lambda h)/Z(0) at 0 <= 0",
                                 rep.curvature, 0.0));
    r.diagnostics["z0_beta_" + std::to_string(beta)] = rep.z0;
  }
  r.headline["z_ratio_max"] = max_ratio;
}

inline void cone_check(const ExperimentConfig& cfg, RunReport& r) {
  auto graph = cfg.lattice.build();
  auto c = evaluate(graph, cfg.couplings);
  coulomb_diagnostics(r, c);
  const int n = graph.vertex_count();
  SectorSpec sec = first_sector(cfg, n);
  QGrid grid(n, cfg.truncation.n_q, cfg.truncation.q_max);
  auto gh = grid_hamiltonian(c, sec, grid);
  auto ue = effective_coulomb(c);
  const int samples = cfg.run.samples > 0 ? cfg.run.samples : 100;
  r.diagnostics["fiber_dimension"] = gh.d;
  r.diagnostics["grid"] = Json{{"n_q", grid.n_q}, {"q_max", grid.q_max}};

  double diff = max_abs_difference(gh.full(), hole_particle_in_cone_order(c, sec, grid));
  r.verdicts.push_back(at_most("hole-particle assembly",
                               "H_M = -T - U + H_p on the grid equals the hole-particle Hamiltonian entrywise", diff,
                               1e-10));

  auto sg = semigroup_positivity_check(gh, cfg.run.beta, samples, cfg.run.seed);
  auto& st = r.table("semigroup", {"beta", "worst_relative_eigenvalue"});
  for (std::size_t i = 0; i < sg.betas.size(); ++i) {
    st.add({Json(sg.betas[i]), Json(sg.worst_relative[i])});
    std::ostringstream b;
    b << "beta=" << sg.betas[i];
    r.verdicts.push_back(at_most(b.str() + " cone preserved", "min eigenvalue of exp(-beta H) psi >= -1e-10 scale",
                                 -sg.worst_relative[i], 1e-10));
  }

  if (ue.pd) {
    auto sp = ground_state_strict_positivity(gh);
    auto& pt = r.table("profile", {"point", "q", "min_eigenvalue", "interior"});
    for (Index k = 0; k < grid.dim(); ++k)
      pt.add({Json(k), Json(vec_label(grid.coordinates(k))), Json(sp.profile[k]), Json(bool(sp.interior[std::size_t(k)]))});
    r.verdicts.push_back(at_most("ground state unique", "gap tolerance < E1 - E0", sp.gap_tol, sp.gap));
    r.verdicts.back().pass = sp.unique;
    r.verdicts.push_back(at_most("strict positivity", "interior fiber min eigenvalue > threshold",
                                 sp.strict_threshold, sp.interior_min));
    r.verdicts.back().pass = sp.strictly_positive;
    r.diagnostics["e0"] = sp.e0;
    r.diagnostics["gap"] = sp.gap;
    r.headline["e0"] = sp.e0;
    r.headline["gap"] = sp.gap;

    auto cb = coulomb_lower_bound_check(ue.matrix, sec.m_hat, samples, cfg.run.seed);
    r.verdicts.push_back(at_most("coulomb lower bound", "U_eff - U0 difference operator preserves the cone",
                                 -cb.worst_relative, 1e-10));
    r.verdicts.back().pass = cb.preserved;
    r.diagnostics["coulomb_psd_form_residual"] = cb.psd_form_residual;
  } else {
    r.diagnostics["strict_positivity"] = "skipped: U_eff is not positive definite";
  }

  if (cfg.run.duhamel) {
    if (gh.dim() > 4096)
      throw Error(ErrorCode::kBudgetExceeded, "duhamel expansion needs a dense K_M; grid dimension " +
                                                  std::to_string(gh.dim()) + " exceeds 4096");
    const int terms = 2;
    auto de = duhamel_expansion_check(gh, cfg.run.beta, terms, std::min(samples, 10), cfg.run.seed);
    auto& dt = r.table("duhamel", {"beta", "N", "remainder"});
    for (std::size_t b = 0; b < de.betas.size(); ++b)
      for (std::size_t k = 0; k < de.remainders[b].size(); ++k)
        dt.add({Json(de.betas[b]), Json(k), Json(de.remainders[b][k])});
    for (std::size_t k = 0; k < de.slopes.size(); ++k)
      r.verdicts.push_back(at_most("duhamel slope N=" + std::to_string(k),
                                   "|log-log slope of the remainder - (N + 1)| <= 0.3",
                                   std::abs(de.slopes[k] - double(k + 1)), 0.3));
    r.verdicts.push_back(at_most("duhamel terms in cone", "every D_n and partial sum preserves the cone",
                                 -de.worst_cone_relative, 1e-10));
    r.verdicts.back().pass = de.terms_preserve_cone && de.partial_sums_preserve_cone;
  }
}

inline void fk_check(const ExperimentConfig& cfg, RunReport& r) {
  auto graph = cfg.lattice.build();
  auto c = evaluate(graph, cfg.couplings);
  coulomb_diagnostics(r, c);
  const int n = graph.vertex_count();
  SectorSpec sec = first_sector(cfg, n);
  QGrid grid(n, cfg.truncation.n_q, cfg.truncation.q_max);
  KernelOptions opt;
  opt.samples = cfg.run.samples > 0 ? cfg.run.samples : 100000;
  opt.steps = cfg.run.steps;
  opt.seed = cfg.run.seed;
  for (std::size_t i = 0; i < cfg.run.points.size(); ++i)
    for (int side = 0; side < 2; ++side) {
      const auto& q = side == 0 ? cfg.run.points[i].first : cfg.run.points[i].second;
      try {
        grid_index(grid, q);
      } catch (const Error&) {
        throw Error(ErrorCode::kConfigInvalid, "run.points[" + std::to_string(i) + "][" + std::to_string(side) +
                                                   "]: not a point of the coarse grid");
      }
    }
  const double beta = cfg.run.beta.front();
  auto rep = hhlab::fk_check(c, sec, cfg.run.points, beta, grid, opt);
  auto& t = r.table("kernel", {"pair", "phi", "phi_prime", "row", "col", "mc_re", "mc_im", "stderr_re", "stderr_im",
                               "mc_fine_re", "grid_coarse_re", "grid_fine_re", "grid_extrapolated_re", "mehler_re"});
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& row = rep.rows[i];
    const auto& e = row.estimate;
    for (Index a = 0; a < e.mean.rows(); ++a)
      for (Index b = 0; b < e.mean.cols(); ++b)
        t.add({Json(i), Json(vec_label({row.phi.data(), row.phi.data() + row.phi.size()})),
               Json(vec_label({row.phi_prime.data(), row.phi_prime.data() + row.phi_prime.size()})), Json(a), Json(b),
               Json(e.mean(a, b).real()), Json(e.mean(a, b).imag()), Json(e.stderr_re(a, b)), Json(e.stderr_im(a, b)),
               Json(e.mean_fine(a, b).real()), Json(row.grid_coarse(a, b).real()), Json(row.grid_fine(a, b).real()),
               Json(row.grid_extrapolated(a, b).real()),
               row.mehler ? Json((*row.mehler)(a, b).real()) : Json(nullptr)});
  }
  r.verdicts.push_back(at_most("grid kernel", "MC kernel within 3 standard errors of the extrapolated grid kernel",
                               rep.max_z_grid, 3.0));
  if (rep.has_mehler)
    r.verdicts.push_back(at_most("mehler kernel", "MC kernel within 3 standard errors of the Mehler product",
                                 rep.max_z_mehler, 3.0));
  r.verdicts.push_back(at_most("time step", "|K - 2K estimate| <= 3 max standard error", rep.max_time_step_change,
                               3.0 * rep.max_stderr));
  r.diagnostics["beta"] = beta;
  r.diagnostics["steps"] = opt.steps;
  r.diagnostics["samples"] = opt.samples;
  r.diagnostics["max_time_step_change"] = rep.max_time_step_change;

  if (cfg.run.paths > 0) {
    auto pb = product_bound_check(cfg.run.paths, 4, 1.0, cfg.run.seed);
    r.verdicts.push_back(at_most("product integral bound",
                                 "||prod e^{A ds} - 1 - int A|| <= e^{int ||A||} - 1 - int ||A|| on random 4x4 paths",
                                 double(pb.violations), 0.0));
    r.diagnostics["product_bound_worst_margin"] = pb.worst_margin;
  }
}

inline void graph_check(const ExperimentConfig& cfg, RunReport& r) {
  auto& t = r.table("graphs", {"graph", "sites", "edges", "n", "vertices", "connected"});
  int failures = 0;
  int checked = 0;
  for (int sites = 1; sites <= cfg.run.max_sites; ++sites) {
    auto catalog = connected_graph_catalog(sites);
    for (std::size_t gi = 0; gi < catalog.size(); ++gi) {
      const auto& g = catalog[gi];
      std::string edges;
      for (const auto& e : g.edges()) edges += (edges.empty() ? "" : " ") + std::to_string(e.a) + "-" + std::to_string(e.b);
      for (int k = 1; k < sites; ++k) {
        auto fg = fermionic_graph(g, k);
        bool conn = fg.graph.connected();
        ++checked;
        if (!conn) ++failures;
        t.add({Json(std::to_string(sites) + ":" + std::to_string(gi)), Json(sites), Json(edges), Json(k),
               Json(fg.vertices.size()), Json(conn)});
      }
    }
  }
  r.verdicts.push_back(at_most("fermionic graphs connected",
                               "the n-particle fermionic graph of a connected graph is connected for 0 < n < |L|",
                               double(failures), 0.0));
  r.diagnostics["checked"] = checked;
}

}  // namespace task_detail

inline RunReport run_experiment(const ExperimentConfig& cfg) {
  RunReport r;
  r.name = cfg.name;
  r.task = cfg.run.task;
  r.seed = cfg.run.seed;
  r.config = cfg.source;
  switch (cfg.run.task) {
    case Task::kGroundState: task_detail::ground_state(cfg, r); break;
    case Task::kCorrelations: task_detail::correlations(cfg, r); break;
    case Task::kSusceptibility: task_detail::susceptibility(cfg, r); break;
    case Task::kGaussianDomination: task_detail::gaussian_domination(cfg, r); break;
    case Task::kConeCheck: task_detail::cone_check(cfg, r); break;
    case Task::kFkCheck: task_detail::fk_check(cfg, r); break;
    case Task::kGraphCheck: task_detail::graph_check(cfg, r); break;
  }
  return r;
}

// --- output --------------------------------------------------------------------------------

inline std::string timestamp_utc() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path.string());
  out << text;
}

/// Writes <stem>.json and <stem>-<table>.csv as requested; returns the files written.
inline std::vector<std::filesystem::path> write_report(const RunReport& r, const std::filesystem::path& dir,
                                                       const std::string& stem, const OutputConfig& out) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  if (out.json()) {
    files.push_back(dir / (stem + ".json"));
    write_text(files.back(), to_json(r).dump(2) + "\n");
  }
  if (out.csv())
    for (const auto& [key, t] : r.tables) {
      files.push_back(dir / (stem + "-" + key + ".csv"));
      write_text(files.back(), to_csv(t));
    }
  return files;
}

inline std::string default_stem(const ExperimentConfig& cfg) {
  return cfg.output.stem.value_or(to_string(cfg.run.task) + "-" + timestamp_utc());
}

// --- sweeps --------------------------------------------------------------------------------

struct SweepAxis {
  std::string path;
  std::vector<Json> values;
};

inline std::vector<SweepAxis> sweep_axes(const Json& source) {
  std::vector<SweepAxis> axes;
  auto it = source.find("sweep");
  if (it == source.end()) throw Error(ErrorCode::kConfigInvalid, "sweep: required for the sweep subcommand");
  config_detail::object(*it, "sweep");
  config_detail::known_keys(*it, "sweep", {"grid"});
  auto g = it->find("grid");
  if (g == it->end()) return axes;
  config_detail::object(*g, "sweep.grid");
  for (auto a = g->begin(); a != g->end(); ++a) {
    if (!a->is_array()) config_detail::fail("sweep.grid." + a.key(), "expected a list of values");
    axes.push_back({a.key(), std::vector<Json>(a->begin(), a->end())});
  }
  return axes;
}

/// Sets a dotted path such as couplings.g.onsite inside a JSON object, creating objects on the way.
inline void set_path(Json& j, const std::string& path, const Json& value) {
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) config_detail::fail("sweep.grid." + path, "empty path component");
    if (!node->is_object()) config_detail::fail("sweep.grid." + path, "path runs through a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

struct SweepPoint {
  std::vector<Json> values;
  Json config;
};

inline std::vector<SweepPoint> sweep_points(const Json& source) {
  auto axes = sweep_axes(source);
  std::vector<SweepPoint> points;
  if (axes.empty()) return points;
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.values.size();
  for (std::size_t i = 0; i < total; ++i) {
    SweepPoint p;
    p.config = source;
    p.config.erase("sweep");
    std::size_t rest = i;
    for (std::size_t k = axes.size(); k-- > 0;) {
      const auto& a = axes[k];
      std::size_t idx = rest % a.values.size();
      rest /= a.values.size();
      set_path(p.config, a.path, a.values[idx]);
    }
    for (std::size_t k = 0, r2 = i; k < axes.size(); ++k) {
      std::size_t stride = 1;
      for (std::size_t m = k + 1; m < axes.size(); ++m) stride *= axes[m].values.size();
      p.values.push_back(axes[k].values[(r2 / stride) % axes[k].values.size()]);
    }
    points.push_back(std::move(p));
  }
  return points;
}

struct SweepResult {
  std::vector<SweepAxis> axes;
  std::vector<SweepPoint> points;
  std::vector<RunReport> reports;
  Table summary;

  bool passed() const {
    return std::all_of(reports.begin(), reports.end(), [](const RunReport& r) { return r.passed(); });
  }
};

/// Runs every grid point (in a pool of `threads` workers) and builds the summary table.
/// `adjust` lets the caller apply command-line overrides to each parsed point.
inline SweepResult run_sweep(const Json& source, int threads,
                             const std::function<void(ExperimentConfig&)>& adjust = nullptr) {
  SweepResult s;
  s.axes = sweep_axes(source);
  s.points = sweep_points(source);
  std::vector<ExperimentConfig> configs;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    try {
      configs.push_back(parse_config(s.points[i].config));
    } catch (const Error& e) {
      throw Error(e.code(), "sweep point " + std::to_string(i) + ": " + e.what());
    }
    if (adjust) adjust(configs.back());
  }
  s.reports.resize(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        s.reports[i] = run_experiment(configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int pool = std::max(1, std::min<int>(threads, int(configs.size())));
  std::vector<std::thread> workers;
  for (int w = 1; w < pool; ++w) workers.emplace_back(worker);
  worker();
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  s.summary.columns = {"point"};
  for (const auto& a : s.axes) s.summary.columns.push_back(a.path);
  for (const char* c : {"task", "passed", "e0", "gap", "chi_u_max", "z_ratio_max", "u_eff_pd", "u_eff_min"})
    s.summary.columns.push_back(c);
  for (std::size_t i = 0; i < s.reports.size(); ++i) {
    const auto& r = s.reports[i];
    std::vector<Json> row{Json(i)};
    for (const auto& v : s.points[i].values) row.push_back(v);
    row.push_back(to_string(r.task));
    row.push_back(r.passed());
    for (const char* k : {"e0", "gap", "chi_u_max", "z_ratio_max", "u_eff_pd", "u_eff_min"})
      row.push_back(r.headline.contains(k) ? r.headline[k] : Json(nullptr));
    s.summary.add(std::move(row));
  }
  return s;
}

inline std::string point_stem(std::size_t i) {
  std::ostringstream os;
  os << "point-" << std::setw(3) << std::setfill('0') << i;
  return os.str();
}

}  // namespace hhlab

#endif  // HHLAB_EXPERIMENT_HPP
