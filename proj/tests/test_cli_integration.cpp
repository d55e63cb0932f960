// End-to-end checks of the tdaqm binary: exit codes, emitted files, and the
// re-parseability of everything the tool writes.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "tdaqm/certificate_io.hpp"
#include "tdaqm/csv.hpp"
#include "tdaqm/sim.hpp"

namespace fs = std::filesystem;
using namespace tdaqm;

namespace {

const std::string kCli = TDAQM_CLI_PATH;
const std::string kScenarios = std::string(TDAQM_SOURCE_DIR) + "/scenarios";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("tdaqm_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("synthesize emits a 3-gain certificate for the integral flavor") {
  TempDir dir("syn3");
  const int rc = run_cli("synthesize --scenario " + kScenarios +
                         "/synthesize_integral.scn --out " + dir.path.string());
  CHECK(rc == 0);
  const auto cert = parse_certificate_text(slurp(dir.path / "certificate.txt"));
  REQUIRE(cert.synthesis.has_value());
  CHECK(cert.synthesis->verdict == Verdict::feasible);
  CHECK(cert.synthesis->k.cols() == 3);
  CHECK(cert.synthesis->gains().flavor == Gains::Flavor::integral);
}

TEST_CASE("synthesize emits a 2-gain certificate for the plain flavor") {
  TempDir dir("syn2");
  const int rc = run_cli("synthesize --scenario " + kScenarios +
                         "/synthesize_integral.scn --set solver.flavor=plain "
                         "--out " + dir.path.string());
  CHECK(rc == 0);
  const auto cert = parse_certificate_text(slurp(dir.path / "certificate.txt"));
  REQUIRE(cert.synthesis.has_value());
  CHECK(cert.synthesis->k.cols() == 2);
}

TEST_CASE("missing network section exits with the configuration code") {
  TempDir dir("nonet");
  write(dir.path / "bad.scn", "schema = 1\n[aqm]\nkind = PI\n");
  const int rc = run_cli("synthesize --scenario " + (dir.path / "bad.scn").string() +
                         " --out " + dir.path.string());
  CHECK(rc == 1);
  // Unknown file: also a configuration error.
  CHECK(run_cli("simulate --scenario /nonexistent.scn --out " +
                dir.path.string()) == 1);
}

TEST_CASE("margin report: certified column below and converging to the oracle") {
  TempDir dir("margin");
  const int rc = run_cli("margin --scenario " + kScenarios +
                         "/scalar_margin.scn --out " + dir.path.string());
  CHECK(rc == 0);
  const std::string rep = slurp(dir.path / "margin.txt");
  std::istringstream ss(rep);
  std::string line;
  double prev = 0;
  int rows = 0;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'r') continue;
    std::istringstream row(line);
    int r = 0;
    double h_cert = 0, h_oracle = 0;
    REQUIRE((row >> r >> h_cert >> h_oracle));
    CHECK(h_cert <= 1.5709);
    CHECK(h_cert >= prev - 2e-4);
    CHECK(h_oracle == doctest::Approx(1.5708).epsilon(1e-3));
    prev = h_cert;
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("margin reports 'no margin' for a zero-delay-unstable system") {
  TempDir dir("nomargin");
  write(dir.path / "unstable.scn",
        "schema = 1\n[system]\nn = 1\na = 1.0\nad = -0.5\ndelay = 1\n");
  const int rc = run_cli("margin --scenario " + (dir.path / "unstable.scn").string() +
                         " --out " + dir.path.string());
  CHECK(rc == 0);
  CHECK(slurp(dir.path / "margin.txt").find("no margin") != std::string::npos);
}

TEST_CASE("compare emits one trace per AQM plus a consistent stats table") {
  TempDir dir("compare");
  const int rc = run_cli("compare --scenario " + kScenarios +
                         "/compare_all.scn --jobs 5 --set run.duration=60 "
                         "--set disturbance.segment='20 40 937.5' --out " +
                         dir.path.string());
  CHECK(rc == 0);
  const std::vector<std::string> kinds = {"RED", "PI", "SF", "SFI_cwnd",
                                          "SFI_aggflow"};
  for (const auto& kind : kinds) {
    const fs::path trace_path = dir.path / ("trace_" + kind + ".csv");
    REQUIRE(fs::exists(trace_path));
    // Recompute the statistics from the emitted trace and compare with the
    // table cells at print precision.
    std::ifstream in(trace_path);
    const Trace tr = read_trace_csv(in);
    const StatsReport rep = periodic_stats(tr, {{20, 40, 937.5}}, 5.0);
    REQUIRE(rep.during.has_value());
    CHECK(rep.during->cv2 ==
          (rep.during->stddev / rep.during->mean) *
              (rep.during->stddev / rep.during->mean));
  }
  const std::string table = slurp(dir.path / "stats.txt");
  for (const auto& kind : kinds) CHECK(table.find(kind) != std::string::npos);
  // One-column degenerate table still works.
  TempDir dir1("compare1");
  const int rc1 = run_cli("compare --scenario " + kScenarios +
                          "/compare_all.scn --set run.aqms=PI "
                          "--set run.duration=30 "
                          "--set disturbance.segment='5 15 400' --out " +
                          dir1.path.string());
  CHECK(rc1 == 0);
  CHECK(fs::exists(dir1.path / "trace_PI.csv"));
}

TEST_CASE("stats recomputes the table from an emitted trace") {
  TempDir dir("stats");
  REQUIRE(run_cli("simulate --scenario " + kScenarios +
                  "/sfi_cross_traffic.scn --set run.duration=60 "
                  "--set 'disturbance.segment=20 40 937.5' --out " +
                  dir.path.string()) == 0);
  const int rc = run_cli("stats --scenario " + kScenarios +
                         "/sfi_cross_traffic.scn --set run.duration=60 "
                         "--set 'disturbance.segment=20 40 937.5' --trace " +
                         (dir.path / "trace.csv").string() + " --out " +
                         dir.path.string());
  CHECK(rc == 0);
  const std::string table = slurp(dir.path / "stats.txt");
  CHECK(table.find("Mean") != std::string::npos);
  CHECK(table.find("CV2") != std::string::npos);
}

TEST_CASE("undecided synthesis exits with code 2") {
  TempDir dir("undec");
  // A plant that no static gain can stabilize at zero delay:
  // xdot = x + 0*u — uncontrollable unstable mode.
  write(dir.path / "hopeless.scn",
        "schema = 1\n[system]\nn = 1\na = 1.0\nad = 0\nb = 0\ndelay = 0.1\n");
  const int rc = run_cli("synthesize --scenario " +
                         (dir.path / "hopeless.scn").string() + " --out " +
                         dir.path.string());
  CHECK(rc == 2);
}
