#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "opsquare/export.hpp"
#include "opsquare/scenario.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kScenarioFailure = 1;
constexpr int kConfigError = 2;

std::optional<std::string> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void print_diagnostics(const std::string& file, const std::vector<opsquare::Diagnostic>& d) {
  for (const auto& x : d) std::cerr << file << ": error: " << opsquare::to_string(x) << '\n';
}

int cmd_validate(const std::string& file) {
  const auto text = slurp(file);
  if (!text) {
    std::cerr << file << ": error: cannot read file\n";
    return kConfigError;
  }
  const auto diags = opsquare::validate_scenario(*text);
  if (!diags.empty()) {
    print_diagnostics(file, diags);
    return kConfigError;
  }
  std::cout << file << ": ok\n";
  return kOk;
}

int cmd_run(const std::string& file, std::optional<std::uint64_t> seed, std::string out, int jobs) {
  const auto text = slurp(file);
  if (!text) {
    std::cerr << file << ": error: cannot read file\n";
    return kConfigError;
  }
  opsquare::Scenario sc;
  try {
    sc = opsquare::parse_scenario(*text);
  } catch (const opsquare::ScenarioError& e) {
    print_diagnostics(file, e.diagnostics());
    return kConfigError;
  }
  if (seed) sc.seed = *seed;
  if (out.empty()) out = "out/" + (sc.name.empty() ? std::filesystem::path(file).stem().string() : sc.name);
  try {
    const auto result = opsquare::run_experiment(sc, jobs);
    const auto exported = opsquare::render(result, sc, *text);
    opsquare::write_run(out, exported);
    std::cout << "wrote " << exported.files.size() + 1 << " files to " << out << " (csv sha256 "
              << exported.manifest["csv_sha256"].get<std::string>() << ")\n";
  } catch (const std::exception& e) {
    std::cerr << file << ": run failed: " << e.what() << '\n';
    return kScenarioFailure;
  }
  return kOk;
}

int cmd_report(const std::string& dir) {
  try {
    std::cout << opsquare::report(dir);
  } catch (const std::exception& e) {
    std::cerr << "report: " << e.what() << '\n';
    return kScenarioFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OPSquare optical DCN simulator"};
  app.require_subcommand(1);

  std::string run_file, out_dir;
  std::uint64_t seed = 0;
  int jobs = 1;
  auto* run = app.add_subcommand("run", "Run a scenario and write its artifacts");
  run->add_option("file", run_file, "Scenario file")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out_dir, "Output directory (default out/<name>)");
  run->add_option("--jobs", jobs, "Parallel worker threads for independent runs")->check(CLI::PositiveNumber);

  std::string validate_file;
  auto* validate = app.add_subcommand("validate", "Check a scenario without running it");
  validate->add_option("file", validate_file, "Scenario file")->required();

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "Summarise a run directory");
  rep->add_option("dir", report_dir, "Run output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  if (*run) return cmd_run(run_file, *seed_opt ? std::optional<std::uint64_t>(seed) : std::nullopt, out_dir, jobs);
  if (*validate) return cmd_validate(validate_file);
  return cmd_report(report_dir);
}
