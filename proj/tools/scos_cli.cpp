#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "scos/cli/commands.hpp"

namespace {

std::optional<scos::TimeWindow> parse_window(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument("colon");
    std::size_t used = 0;
    const std::string a = text.substr(0, colon), b = text.substr(colon + 1);
    const double t0 = std::stod(a, &used);
    if (used != a.size()) throw std::invalid_argument("t0");
    const double t1 = std::stod(b, &used);
    if (used != b.size() || !(t1 > t0)) throw std::invalid_argument("t1");
    return scos::TimeWindow{t0, t1};
  } catch (const std::exception&) {
    throw scos::Error(scos::ErrorCode::ParseError, "--baseline-window expects t0:t1 with t1 > t0, got '" + text + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace scos::cli;
  CLI::App app{"SCOS breath-hold analysis: synthesize, process, extract and compare sessions"};
  app.require_subcommand(1);

  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  SimulateArgs sim;
  std::uint64_t seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Synthesize a breath-hold session frame file");
  simulate->add_option("--config", sim.config, "key = value configuration file")->check(CLI::ExistingFile);
  simulate->add_option("--output", sim.output, "Frame file to write")->required();
  auto* seed_opt = simulate->add_option("--seed", seed, "Generator seed (overrides the config)");
  simulate->add_flag("-q,--quiet", quiet, "Suppress progress output");

  ProcessArgs proc;
  std::string baseline_window;
  auto* process = app.add_subcommand("process", "Compute BFI/BVI traces from a frame file");
  process->add_option("input", proc.input, "Frame file")->required();
  process->add_option("--output", proc.output, "Trace CSV to write")->required();
  process->add_flag("--no-smooth", proc.no_smooth, "Skip the smoothed companion trace");
  process->add_option("--baseline-window", baseline_window, "Baseline window t0:t1 in seconds");
  process->add_option("--smoothing", proc.smoothing_seconds, "Smoothing window, s")->check(CLI::PositiveNumber);
  process->add_flag("-q,--quiet", quiet, "Suppress progress output");

  ExtractArgs ext;
  auto* extract = app.add_subcommand("extract", "Extract breath-hold and cardiac features");
  extract->add_option("trace", ext.trace, "Raw trace CSV")->required();
  extract->add_option("--annotation", ext.annotation, "Annotation JSON")->required();
  extract->add_option("--output", ext.output, "Feature JSON to write")->required();
  extract->add_flag("-q,--quiet", quiet, "Suppress progress output");

  CohortArgs coh;
  std::string buckets;
  auto* cohort = app.add_subcommand("cohort", "Group comparison report over feature JSON files");
  cohort->add_option("input", coh.input_dir, "Directory of feature JSON files")->required();
  cohort->add_option("--output", coh.output, "Report path prefix")->required();
  cohort->add_option("--features", coh.features, "Features to report")->delimiter(',');
  cohort->add_option("--trend-feature", coh.trend_feature, "Feature for the subgroup trend");
  cohort->add_option("--buckets", buckets, "Score buckets, e.g. 1,4,5,6-7");
  cohort->add_flag("-q,--quiet", quiet, "Suppress the report on stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInputError;
  }

  try {
    if (*simulate) {
      sim.quiet = quiet;
      if (*seed_opt) sim.seed = seed;
      return cmd_simulate(sim);
    }
    if (*process) {
      proc.quiet = quiet;
      proc.baseline_window = parse_window(baseline_window);
      return cmd_process(proc);
    }
    if (*extract) {
      ext.quiet = quiet;
      return cmd_extract(ext);
    }
    coh.quiet = quiet;
    if (!buckets.empty()) coh.buckets = parse_buckets(buckets);
    return cmd_cohort(coh);
  } catch (const scos::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
}
