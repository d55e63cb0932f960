#include "tdaqm/scenario.hpp"

#include <fstream>
#include <sstream>

#include "tdaqm/certificate_io.hpp"
#include "tdaqm/errors.hpp"

namespace tdaqm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

double to_double(const std::string& v, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw config_error("bad number '" + v + "' for " + what);
  }
}

std::vector<double> to_doubles(const std::string& v, const std::string& what) {
  std::istringstream ss(v);
  std::vector<double> out;
  double d;
  while (ss >> d) out.push_back(d);
  if (!ss.eof()) throw config_error("bad number list '" + v + "' for " + what);
  return out;
}

}  // namespace

std::optional<std::string> KvDoc::get(const std::string& section,
                                      const std::string& key) const {
  for (const auto& e : entries)
    if (e.section == section && e.key == key) return e.value;
  return std::nullopt;
}

std::vector<std::string> KvDoc::get_all(const std::string& section,
                                        const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (e.section == section && e.key == key) out.push_back(e.value);
  return out;
}

void KvDoc::set(const std::string& section, const std::string& key,
                const std::string& value) {
  bool replaced = false;
  for (auto it = entries.begin(); it != entries.end();) {
    if (it->section == section && it->key == key) {
      if (!replaced) {
        it->value = value;
        replaced = true;
        ++it;
      } else {
        it = entries.erase(it);
      }
    } else {
      ++it;
    }
  }
  if (!replaced) entries.push_back({section, key, value});
}

KvDoc parse_kv_text(const std::string& text, const std::string& origin) {
  KvDoc doc;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw config_error(origin + ":" + std::to_string(lineno) +
                           ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error(origin + ":" + std::to_string(lineno) +
                         ": expected 'key = value'");
    doc.entries.push_back({section, trim(t.substr(0, eq)), trim(t.substr(eq + 1))});
  }
  return doc;
}

namespace {

Gains gains_from_values(const std::vector<double>& v, const std::string& what) {
  if (v.size() == 2) return Gains::sf(v[0], v[1]);
  if (v.size() == 3) return Gains::sfi(v[0], v[1], v[2]);
  throw config_error(what + ": expected 2 or 3 gain values, got " +
                     std::to_string(v.size()));
}

void load_gains_file(LoadedScenario& out, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open gains_file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const ParsedCertificate cert = parse_certificate_text(ss.str());
  if (!cert.synthesis)
    throw config_error("gains_file '" + path + "' is not a synthesis certificate");
  if (cert.synthesis->verdict != Verdict::feasible)
    throw config_error("gains_file '" + path + "' holds no feasible gain");
  const Gains g = cert.synthesis->gains();
  if (g.flavor == Gains::Flavor::plain)
    out.sf_gains = g;
  else
    out.sfi_gains = g;
}

Eigen::MatrixXd matrix_from_doc(const KvDoc& doc, const std::string& key, int rows,
                                int cols, bool required) {
  const auto v = doc.get("system", key);
  if (!v) {
    if (required) throw config_error("[system] section is missing '" + key + "'");
    return Eigen::MatrixXd::Zero(rows, cols);
  }
  const auto vals = to_doubles(*v, "system." + key);
  if (static_cast<int>(vals.size()) != rows * cols)
    throw config_error("system." + key + ": expected " + std::to_string(rows * cols) +
                       " values");
  Eigen::MatrixXd m(rows, cols);
  int idx = 0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = vals[idx++];
  return m;
}

}  // namespace

Scenario LoadedScenario::make_scenario(AqmKind k) const {
  Scenario scn;
  scn.network = network;
  scn.aqm.kind = k;
  scn.aqm.pi_a = pi_a;
  scn.aqm.pi_b = pi_b;
  scn.aqm.pi_freq = pi_freq;
  scn.aqm.red = red;
  switch (k) {
    case AqmKind::sf:
      if (!sf_gains)
        throw config_error("scenario needs [aqm] k_sf (or a plain gains_file) for SF");
      scn.aqm.gains = *sf_gains;
      break;
    case AqmKind::sfi_cwnd:
    case AqmKind::sfi_aggflow:
      if (!sfi_gains)
        throw config_error(
            "scenario needs [aqm] k_sfi (or an integral gains_file) for SFI");
      scn.aqm.gains = *sfi_gains;
      break;
    default:
      break;
  }
  scn.duration = duration;
  scn.dt = dt;
  scn.disturbance = disturbance;
  scn.init = init;
  scn.model = model;
  scn.seed = seed;
  return scn;
}

LoadedScenario load_scenario_text(const std::string& text,
                                  const std::string& origin,
                                  const std::vector<std::string>& overrides,
                                  std::optional<std::uint64_t> seed_override) {
  KvDoc doc = parse_kv_text(text, origin);

  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw config_error("--set expects section.key=value, got '" + ov + "'");
    const std::string path = trim(ov.substr(0, eq));
    const std::string value = trim(ov.substr(eq + 1));
    const auto dot = path.find('.');
    if (dot == std::string::npos)
      doc.set("", path, value);
    else
      doc.set(path.substr(0, dot), path.substr(dot + 1), value);
  }

  const auto schema = doc.get("", "schema");
  if (!schema) throw config_error(origin + ": missing 'schema = 1'");
  if (*schema != "1")
    throw config_error(origin + ": unsupported schema '" + *schema + "'");

  LoadedScenario out;

  const auto net = [&](const char* key) { return doc.get("network", key); };
  if (net("n_flows") || net("capacity") || net("prop_delay") || net("q_target") ||
      net("buffer_size")) {
    out.has_network = true;
    if (auto v = net("n_flows")) out.network.n_flows = to_double(*v, "network.n_flows");
    if (auto v = net("capacity")) out.network.capacity = to_double(*v, "network.capacity");
    if (auto v = net("prop_delay"))
      out.network.prop_delay = to_double(*v, "network.prop_delay");
    if (auto v = net("q_target")) out.network.q_target = to_double(*v, "network.q_target");
    if (auto v = net("buffer_size"))
      out.network.buffer_size = to_double(*v, "network.buffer_size");
  }

  if (auto v = doc.get("aqm", "kind")) out.kind = aqm_kind_from_string(*v);
  if (auto v = doc.get("aqm", "k_sf")) {
    const Gains g = gains_from_values(to_doubles(*v, "aqm.k_sf"), "aqm.k_sf");
    if (g.flavor != Gains::Flavor::plain)
      throw config_error("aqm.k_sf must hold exactly 2 values");
    out.sf_gains = g;
  }
  if (auto v = doc.get("aqm", "k_sfi")) {
    const Gains g = gains_from_values(to_doubles(*v, "aqm.k_sfi"), "aqm.k_sfi");
    if (g.flavor != Gains::Flavor::integral)
      throw config_error("aqm.k_sfi must hold exactly 3 values");
    out.sfi_gains = g;
  }
  if (auto v = doc.get("aqm", "gains_file")) load_gains_file(out, *v);
  if (auto v = doc.get("aqm", "pi_a")) out.pi_a = to_double(*v, "aqm.pi_a");
  if (auto v = doc.get("aqm", "pi_b")) out.pi_b = to_double(*v, "aqm.pi_b");
  if (auto v = doc.get("aqm", "pi_freq")) out.pi_freq = to_double(*v, "aqm.pi_freq");
  if (auto v = doc.get("aqm", "red_min_th")) out.red.min_th = to_double(*v, "aqm.red_min_th");
  if (auto v = doc.get("aqm", "red_max_th")) out.red.max_th = to_double(*v, "aqm.red_max_th");
  if (auto v = doc.get("aqm", "red_p_max")) out.red.p_max = to_double(*v, "aqm.red_p_max");
  if (auto v = doc.get("aqm", "red_ewma_weight"))
    out.red.ewma_weight = to_double(*v, "aqm.red_ewma_weight");

  for (const auto& seg : doc.get_all("disturbance", "segment")) {
    const auto vals = to_doubles(seg, "disturbance.segment");
    if (vals.size() != 3)
      throw config_error("disturbance.segment expects 'start end rate'");
    out.disturbance.push_back({vals[0], vals[1], vals[2]});
  }

  if (auto v = doc.get("run", "duration")) out.duration = to_double(*v, "run.duration");
  if (auto v = doc.get("run", "dt")) out.dt = to_double(*v, "run.dt");
  if (auto v = doc.get("run", "model")) {
    if (*v == "nonlinear") out.model = ModelKind::nonlinear;
    else if (*v == "linear") out.model = ModelKind::linear;
    else throw config_error("run.model must be 'nonlinear' or 'linear'");
  }
  if (auto v = doc.get("run", "seed"))
    out.seed = static_cast<std::uint64_t>(to_double(*v, "run.seed"));
  if (auto v = doc.get("run", "stride"))
    out.stride = static_cast<int>(to_double(*v, "run.stride"));
  if (auto v = doc.get("run", "settle_margin"))
    out.settle_margin = to_double(*v, "run.settle_margin");
  if (auto v = doc.get("run", "aqms")) {
    std::istringstream ss(*v);
    std::string name;
    while (ss >> name) out.compare.push_back(aqm_kind_from_string(name));
  }
  {
    const auto iw = doc.get("run", "init_w");
    const auto iq = doc.get("run", "init_q");
    const auto ip = doc.get("run", "init_p");
    if (iw || iq || ip) {
      if (!out.has_network)
        throw config_error("run.init_* needs a [network] section for defaults");
      const OperatingPoint op = operating_point(out.network);
      InitialCondition ic{op.w0, out.network.q_target, op.p0};
      if (iw) ic.w = to_double(*iw, "run.init_w");
      if (iq) ic.q = to_double(*iq, "run.init_q");
      if (ip) ic.p = to_double(*ip, "run.init_p");
      out.init = ic;
    }
  }

  if (auto v = doc.get("solver", "r"))
    out.solver.r = static_cast<int>(to_double(*v, "solver.r"));
  if (auto v = doc.get("solver", "r_list")) {
    out.solver.r_list.clear();
    for (double d : to_doubles(*v, "solver.r_list"))
      out.solver.r_list.push_back(static_cast<int>(d));
    if (out.solver.r_list.empty())
      throw config_error("solver.r_list must not be empty");
  }
  if (auto v = doc.get("solver", "h_m")) out.solver.h_m = to_double(*v, "solver.h_m");
  if (auto v = doc.get("solver", "restarts"))
    out.solver.restarts = static_cast<int>(to_double(*v, "solver.restarts"));
  if (auto v = doc.get("solver", "rounds"))
    out.solver.rounds = static_cast<int>(to_double(*v, "solver.rounds"));
  if (auto v = doc.get("solver", "iters"))
    out.solver.iters = static_cast<int>(to_double(*v, "solver.iters"));
  if (auto v = doc.get("solver", "tol")) out.solver.tol = to_double(*v, "solver.tol");
  if (auto v = doc.get("solver", "cap")) out.solver.cap = to_double(*v, "solver.cap");
  if (auto v = doc.get("solver", "flavor")) {
    if (*v == "plain") out.solver.flavor = Gains::Flavor::plain;
    else if (*v == "integral") out.solver.flavor = Gains::Flavor::integral;
    else throw config_error("solver.flavor must be 'plain' or 'integral'");
  }

  if (auto v = doc.get("system", "n")) {
    const int n = static_cast<int>(to_double(*v, "system.n"));
    if (n < 1) throw config_error("system.n must be >= 1");
    TdsSystem sys;
    sys.a = matrix_from_doc(doc, "a", n, n, true);
    sys.a_d = matrix_from_doc(doc, "ad", n, n, true);
    sys.b = matrix_from_doc(doc, "b", n, 1, false);
    sys.b_d = matrix_from_doc(doc, "bd", n, 1, false);
    sys.delay = 1.0;
    if (auto d = doc.get("system", "delay"))
      sys.delay = to_double(*d, "system.delay");
    out.system = std::move(sys);
  }

  if (seed_override) out.seed = *seed_override;
  return out;
}

LoadedScenario load_scenario_file(const std::string& path,
                                  const std::vector<std::string>& overrides,
                                  std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_scenario_text(ss.str(), path, overrides, seed_override);
}

}  // namespace tdaqm
