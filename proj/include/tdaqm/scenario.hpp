#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tdaqm/sim.hpp"

namespace tdaqm {

/// Parsed key-value document with [section] headers; repeated keys keep their
/// order (used by the disturbance segment list).
struct KvDoc {
  struct Entry {
    std::string section, key, value;
  };
  std::vector<Entry> entries;

  std::optional<std::string> get(const std::string& section,
                                 const std::string& key) const;
  std::vector<std::string> get_all(const std::string& section,
                                   const std::string& key) const;
  /// Replaces every occurrence of section.key (or appends one).
  void set(const std::string& section, const std::string& key,
           const std::string& value);
};

KvDoc parse_kv_text(const std::string& text, const std::string& origin);

struct SolverConfig {
  int r = 1;
  std::vector<int> r_list = {1, 2, 3};
  double h_m = -1;  // <= 0 means "default to R0 / the system's own delay"
  int restarts = 8;
  int rounds = 200;
  int iters = 400;
  double tol = 1e-4;
  double cap = 100.0;
  Gains::Flavor flavor = Gains::Flavor::integral;
};

/// Everything a CLI run needs, materialized from one scenario file plus any
/// --set overrides and the --seed flag.
struct LoadedScenario {
  NetworkParams network;
  bool has_network = false;

  AqmKind kind = AqmKind::sfi_cwnd;
  std::optional<Gains> sf_gains;
  std::optional<Gains> sfi_gains;
  double pi_a = 1.822e-5;
  double pi_b = 1.816e-5;
  double pi_freq = 160;
  RedParams red;

  double duration = 140;
  double dt = 1e-3;
  std::vector<DisturbanceSegment> disturbance;
  std::optional<InitialCondition> init;
  ModelKind model = ModelKind::nonlinear;
  std::uint64_t seed = 1;
  int stride = 1;
  double settle_margin = 5;
  std::vector<AqmKind> compare;

  SolverConfig solver;
  std::optional<TdsSystem> system;  // explicit [system] section, if present

  /// Concrete simulation scenario for one AQM kind (gains resolved).
  Scenario make_scenario(AqmKind k) const;
};

LoadedScenario load_scenario_file(const std::string& path,
                                  const std::vector<std::string>& overrides,
                                  std::optional<std::uint64_t> seed_override);

LoadedScenario load_scenario_text(const std::string& text,
                                  const std::string& origin,
                                  const std::vector<std::string>& overrides,
                                  std::optional<std::uint64_t> seed_override);

}  // namespace tdaqm
