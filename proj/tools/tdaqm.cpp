// tdaqm — TCP/AQM fluid-model control laboratory.
//
// Subcommands: synthesize, analyze, margin, simulate, compare, stats.
// Exit codes: 0 success, 1 configuration error, 2 undecided / no certificate,
// 3 numerical failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tdaqm/certificate_io.hpp"
#include "tdaqm/csv.hpp"
#include "tdaqm/delay_lmi.hpp"
#include "tdaqm/errors.hpp"
#include "tdaqm/log.hpp"
#include "tdaqm/report.hpp"
#include "tdaqm/scenario.hpp"
#include "tdaqm/synthesis.hpp"

namespace fs = std::filesystem;
using namespace tdaqm;

namespace {

struct CommonArgs {
  std::string scenario_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string trace_path;
  int jobs = 1;
};

LoadedScenario load(const CommonArgs& args) {
  return load_scenario_file(args.scenario_path, args.sets, args.seed);
}

void ensure_out_dir(const CommonArgs& args) {
  std::error_code ec;
  fs::create_directories(args.out_dir, ec);
  if (ec && !fs::is_directory(args.out_dir))
    throw config_error("cannot create output directory '" + args.out_dir + "'");
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write '" + path.string() + "'");
  out << content;
}

// The system a stability question refers to: an explicit [system] section
// wins; otherwise the linearized network plant with the configured AQM gain
// folded into the delayed matrix.
struct AnalysisTarget {
  TdsSystem sys;
  double h_default = 0;
  std::string description;
};

AnalysisTarget analysis_target(const LoadedScenario& ls) {
  AnalysisTarget t;
  if (ls.system) {
    t.sys = *ls.system;
    t.h_default = ls.system->delay;
    t.description = "explicit [system] section";
    return t;
  }
  if (!ls.has_network)
    throw config_error("scenario needs a [network] or [system] section");
  const OperatingPoint op = operating_point(ls.network);
  TdsSystem sys = linearize(ls.network, op);
  t.h_default = op.r0;
  if ((ls.kind == AqmKind::sfi_cwnd || ls.kind == AqmKind::sfi_aggflow) &&
      ls.sfi_gains) {
    sys = augment(sys);
    sys.a_d += sys.b * ls.sfi_gains->k;
    t.description = "network plant, integral state feedback folded in";
  } else if (ls.kind == AqmKind::sf && ls.sf_gains) {
    sys.a_d += sys.b * ls.sf_gains->k;
    t.description = "network plant, static state feedback folded in";
  } else {
    t.description = "network plant, open loop";
  }
  t.sys = sys;
  return t;
}

SearchOptions search_options(const LoadedScenario& ls) {
  SearchOptions o;
  o.restarts = ls.solver.restarts;
  o.iters = ls.solver.iters;
  o.seed = ls.seed;
  return o;
}

int run_synthesize(const CommonArgs& args) {
  const LoadedScenario ls = load(args);
  ensure_out_dir(args);
  if (!ls.has_network && !ls.system)
    throw config_error("synthesize needs a [network] section (or [system])");

  TdsSystem plant;
  double h_m = ls.solver.h_m;
  if (ls.system) {
    plant = *ls.system;
    if (h_m <= 0) h_m = plant.delay;
  } else {
    const OperatingPoint op = operating_point(ls.network);
    plant = linearize(ls.network, op);
    if (ls.solver.flavor == Gains::Flavor::integral) plant = augment(plant);
    if (h_m <= 0) h_m = op.r0;
  }

  SynthesisOptions opts;
  opts.restarts = ls.solver.restarts;
  opts.rounds = ls.solver.rounds;
  opts.analysis_iters = ls.solver.iters;
  opts.seed = ls.seed;
  const SynthesisCertificate cert = synthesize_gain(plant, h_m, ls.solver.r, opts);

  write_file(fs::path(args.out_dir) / "certificate.txt", certificate_to_text(cert));
  std::cout << "synthesis: " << to_string(cert.verdict) << " (n=" << cert.dim
            << ", r=" << cert.r << ", h_m=" << h_m << " s)\n";
  if (cert.verdict == Verdict::feasible) {
    std::cout << "gains:";
    for (int j = 0; j < cert.k.cols(); ++j) std::cout << " " << cert.k(0, j);
    std::cout << "\nmargin: " << cert.margin
              << "\nrightmost closed-loop root at h_m: " << cert.oracle_root.real()
              << (cert.oracle_root.imag() >= 0 ? "+" : "-")
              << std::abs(cert.oracle_root.imag()) << "i\n";
  }
  std::cout << "wrote " << (fs::path(args.out_dir) / "certificate.txt").string()
            << "\n";
  return cert.verdict == Verdict::feasible ? 0 : 2;
}

int run_analyze(const CommonArgs& args) {
  const LoadedScenario ls = load(args);
  ensure_out_dir(args);
  const AnalysisTarget target = analysis_target(ls);
  const double h_m = ls.solver.h_m > 0 ? ls.solver.h_m : target.h_default;

  const StabilityCertificate cert =
      analysis_feasible(target.sys, h_m, ls.solver.r, search_options(ls));
  const RootResult root = rightmost_root(target.sys.a, target.sys.a_d, h_m);

  write_file(fs::path(args.out_dir) / "certificate.txt", certificate_to_text(cert));
  std::cout << "analysis of " << target.description << " at h_m = " << h_m
            << " s (r=" << ls.solver.r << "): " << to_string(cert.verdict)
            << "\nmargin: " << cert.margin << "\noracle rightmost root: "
            << root.root.real() << (root.root.imag() >= 0 ? "+" : "-")
            << std::abs(root.root.imag()) << "i"
            << (root.converged ? "" : " (discretization unconverged)") << "\n";
  return cert.verdict == Verdict::feasible ? 0 : 2;
}

int run_margin(const CommonArgs& args) {
  const LoadedScenario ls = load(args);
  ensure_out_dir(args);
  const AnalysisTarget target = analysis_target(ls);

  std::ostringstream rep;
  rep << "# delay margin report: " << target.description << "\n";
  if (spectral_abscissa(target.sys.a + target.sys.a_d) >= 0) {
    rep << "no margin: system is unstable at zero delay\n";
    write_file(fs::path(args.out_dir) / "margin.txt", rep.str());
    std::cout << rep.str();
    return 0;
  }

  const double oracle = oracle_delay_margin(target.sys.a, target.sys.a_d,
                                            ls.solver.tol, ls.solver.cap);
  char line[128];
  rep << "r   h_max_certified   h_oracle\n";
  for (int r : ls.solver.r_list) {
    const MarginResult res = max_stable_delay(target.sys, r, ls.solver.tol,
                                              ls.solver.cap, search_options(ls));
    std::snprintf(line, sizeof(line), "%-3d %16.6g %10.6g\n", r, res.h_max, oracle);
    rep << line;
    if (!res.diagnostic.empty()) rep << "# r=" << r << ": " << res.diagnostic << "\n";
  }
  write_file(fs::path(args.out_dir) / "margin.txt", rep.str());
  std::cout << rep.str();
  return 0;
}

void write_trace_file(const fs::path& path, const Trace& tr, int stride) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write '" + path.string() + "'");
  write_trace_csv(out, tr, stride);
}

int run_simulate(const CommonArgs& args) {
  const LoadedScenario ls = load(args);
  ensure_out_dir(args);
  const Scenario scn = ls.make_scenario(ls.kind);
  const Trace tr = run_scenario(scn);
  write_trace_file(fs::path(args.out_dir) / "trace.csv", tr, ls.stride);

  const StatsReport rep = periodic_stats(tr, scn.disturbance, ls.settle_margin);
  const std::string table = stats_table({to_string(ls.kind)}, {rep});
  write_file(fs::path(args.out_dir) / "stats.txt", table);
  std::cout << "simulated " << to_string(ls.kind) << " for " << scn.duration
            << " s (dt = " << scn.dt << " s, "
            << (scn.model == ModelKind::nonlinear ? "nonlinear" : "linear")
            << " model)\n"
            << table << "wrote "
            << (fs::path(args.out_dir) / "trace.csv").string() << "\n";
  return 0;
}

int run_compare(const CommonArgs& args) {
  const LoadedScenario ls = load(args);
  ensure_out_dir(args);
  std::vector<AqmKind> kinds = ls.compare;
  if (kinds.empty())
    throw config_error("compare needs [run] aqms = <list of AQM kinds>");

  // Fan the runs out over a small worker pool; output order and file names
  // depend only on the AQM list, so parallelism cannot race.
  std::vector<Trace> traces(kinds.size());
  const int jobs = std::max(1, args.jobs);
  std::size_t next = 0;
  while (next < kinds.size()) {
    std::vector<std::pair<std::size_t, std::future<Trace>>> batch;
    for (int j = 0; j < jobs && next < kinds.size(); ++j, ++next) {
      const Scenario scn = ls.make_scenario(kinds[next]);
      batch.emplace_back(next, std::async(std::launch::async,
                                          [scn]() { return run_scenario(scn); }));
    }
    for (auto& [idx, fut] : batch) traces[idx] = fut.get();
  }

  std::vector<std::string> names;
  std::vector<StatsReport> reports;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    names.emplace_back(to_string(kinds[i]));
    reports.push_back(periodic_stats(traces[i], ls.disturbance, ls.settle_margin));
    write_trace_file(fs::path(args.out_dir) / ("trace_" + names.back() + ".csv"),
                     traces[i], ls.stride);
  }
  const std::string table = stats_table(names, reports);
  write_file(fs::path(args.out_dir) / "stats.txt", table);
  std::cout << table << "wrote " << kinds.size() << " trace file(s) to "
            << args.out_dir << "\n";
  return 0;
}

int run_stats(const CommonArgs& args) {
  const LoadedScenario ls = load(args);
  ensure_out_dir(args);
  std::ifstream in(args.trace_path);
  if (!in) throw config_error("cannot open trace '" + args.trace_path + "'");
  const Trace tr = read_trace_csv(in);
  const StatsReport rep = periodic_stats(tr, ls.disturbance, ls.settle_margin);
  const std::string table = stats_table({"queue"}, {rep});
  write_file(fs::path(args.out_dir) / "stats.txt", table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tdaqm — TCP/AQM fluid-model control laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&args](CLI::App* sub) {
    sub->add_option("--scenario", args.scenario_path, "scenario file")->required();
    sub->add_option("--out", args.out_dir, "output directory (default .)");
    sub->add_option("--seed", args.seed, "override the scenario seed");
    sub->add_option("--set", args.sets,
                    "override a scenario value, section.key=value (repeatable)");
  };

  auto* synth = app.add_subcommand("synthesize", "design a state-feedback gain");
  add_common(synth);
  auto* analyze = app.add_subcommand("analyze", "delay-dependent stability test");
  add_common(analyze);
  auto* margin = app.add_subcommand("margin", "certified vs oracle delay margin");
  add_common(margin);
  auto* simulate = app.add_subcommand("simulate", "run one scenario");
  add_common(simulate);
  auto* compare = app.add_subcommand("compare", "run a scenario under several AQMs");
  add_common(compare);
  compare->add_option("--jobs", args.jobs, "worker pool size (default 1)");
  auto* stats = app.add_subcommand("stats", "recompute statistics from a trace");
  add_common(stats);
  stats->add_option("--trace", args.trace_path, "trace CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return run_synthesize(args);
    if (analyze->parsed()) return run_analyze(args);
    if (margin->parsed()) return run_margin(args);
    if (simulate->parsed()) return run_simulate(args);
    if (compare->parsed()) return run_compare(args);
    if (stats->parsed()) return run_stats(args);
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
