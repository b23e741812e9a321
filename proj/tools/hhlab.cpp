// hhlab: run, sweep and validate Holstein-Hubbard experiments from JSON configs.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "hhlab/experiment.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit { kPass = 0, kAssertion = 1, kConfig = 2, kRuntime = 3 };

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string format;
};

void add_flags(CLI::App* cmd, Flags& f, bool full) {
  cmd->add_option("--config", f.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  if (!full) return;
  cmd->add_option("--out", f.out, "output directory (default: $HHLAB_OUT, then output.directory, then .)");
  cmd->add_option("--seed", f.seed, "override run.seed");
  cmd->add_option("--threads", f.threads, "worker threads for sweeps")->check(CLI::PositiveNumber);
  cmd->add_option("--format", f.format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"}));
}

// Flag beats environment beats config file.
fs::path output_dir(const Flags& f, const hhlab::ExperimentConfig& cfg) {
  if (!f.out.empty()) return f.out;
  if (const char* env = std::getenv("HHLAB_OUT"); env && *env) return env;
  if (!cfg.output.directory.empty()) return cfg.output.directory;
  return ".";
}

void apply_flags(const Flags& f, hhlab::ExperimentConfig& cfg) {
  if (f.seed) cfg.run.seed = *f.seed;
  if (!f.format.empty()) cfg.output.formats = f.format;
}

void print_verdicts(const hhlab::RunReport& r, const std::string& prefix = "") {
  for (const auto& v : r.verdicts)
    std::cout << prefix << (v.pass ? "PASS " : "FAIL ") << v.name << "  lhs=" << v.lhs << " rhs=" << v.rhs
              << " margin=" << v.margin() << "\n";
}

void write_timing(const fs::path& path, double seconds) {
  hhlab::write_text(path, hhlab::Json{{"seconds", seconds}}.dump(2) + "\n");
}

int cmd_validate(const Flags& f) {
  auto source = hhlab::read_json_file(f.config);
  if (source.contains("sweep")) {
    auto points = hhlab::sweep_points(source);
    for (std::size_t i = 0; i < points.size(); ++i) {
      try {
        hhlab::parse_config(points[i].config);
      } catch (const hhlab::Error& e) {
        throw hhlab::Error(e.code(), "sweep point " + std::to_string(i) + ": " + e.what());
      }
    }
    std::cout << "valid sweep: " << points.size() << " points\n";
    return kPass;
  }
  auto cfg = hhlab::parse_config(source);
  std::cout << "valid: task " << hhlab::to_string(cfg.run.task) << ", estimated dimension "
            << hhlab::estimated_dimension(cfg) << "\n";
  return kPass;
}

int cmd_run(const Flags& f) {
  auto source = hhlab::read_json_file(f.config);
  auto cfg = hhlab::parse_config(source);
  apply_flags(f, cfg);
  const auto start = std::chrono::steady_clock::now();
  auto report = hhlab::run_experiment(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const fs::path dir = output_dir(f, cfg);
  const std::string stem = hhlab::default_stem(cfg);
  for (const auto& file : hhlab::write_report(report, dir, stem, cfg.output)) std::cout << "wrote " << file.string() << "\n";
  write_timing(dir / (stem + ".timing.json"), secs);
  print_verdicts(report);
  std::cerr << "elapsed " << secs << " s\n";
  return report.passed() ? kPass : kAssertion;
}

int cmd_sweep(const Flags& f) {
  auto source = hhlab::read_json_file(f.config);
  auto base = source;
  base.erase("sweep");
  auto base_cfg = hhlab::parse_config(base);
  apply_flags(f, base_cfg);
  const auto start = std::chrono::steady_clock::now();
  auto result = hhlab::run_sweep(source, f.threads, [&](hhlab::ExperimentConfig& c) { apply_flags(f, c); });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const fs::path dir = output_dir(f, base_cfg) / hhlab::default_stem(base_cfg);
  fs::create_directories(dir);
  // Points are written in grid order after the pool has finished.
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    hhlab::OutputConfig out = base_cfg.output;
    hhlab::write_report(result.reports[i], dir, hhlab::point_stem(i), out);
    print_verdicts(result.reports[i], hhlab::point_stem(i) + " ");
  }
  if (base_cfg.output.csv()) hhlab::write_text(dir / "summary.csv", hhlab::to_csv(result.summary));
  if (base_cfg.output.json()) {
    hhlab::Json j{{"points", result.reports.size()},
                  {"passed", result.passed()},
                  {"columns", result.summary.columns},
                  {"rows", result.summary.rows}};
    hhlab::write_text(dir / "summary.json", j.dump(2) + "\n");
  }
  write_timing(dir / "timing.json", secs);
  std::cout << "sweep: " << result.reports.size() << " points in " << dir.string() << "\n";
  std::cerr << "elapsed " << secs << " s\n";
  return result.passed() ? kPass : kAssertion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Holstein-Hubbard numerical lab"};
  app.require_subcommand(1);
  Flags run_flags, sweep_flags, validate_flags;
  auto* run = app.add_subcommand("run", "run one experiment");
  auto* sweep = app.add_subcommand("sweep", "run the cartesian grid under the config's \"sweep\" key");
  auto* validate = app.add_subcommand("validate", "check a config without running it");
  add_flags(run, run_flags, true);
  add_flags(sweep, sweep_flags, true);
  add_flags(validate, validate_flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kPass : kConfig;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*sweep) return cmd_sweep(sweep_flags);
    return cmd_validate(validate_flags);
  } catch (const hhlab::Error& e) {
    std::cerr << "error [" << hhlab::to_string(e.code()) << "]: " << e.what() << "\n";
    const bool config = e.code() == hhlab::ErrorCode::kConfigInvalid || e.code() == hhlab::ErrorCode::kBudgetExceeded;
    return config ? kConfig : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
