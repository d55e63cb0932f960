#include "tdaqm/certificate_io.hpp"

#include <cstdio>
#include <map>
#include <sstream>
#include <vector>

#include "tdaqm/errors.hpp"

namespace tdaqm {

namespace {

constexpr const char* kMagic = "tdaqm-certificate";

std::string matrix_values(const Eigen::MatrixXd& m) {
  std::string out;
  for (long i = 0; i < m.rows(); ++i)
    for (long j = 0; j < m.cols(); ++j) {
      if (!out.empty()) out += ' ';
      out += format_exact(m(i, j));
    }
  return out;
}

Eigen::MatrixXd matrix_from_values(const std::string& values, long rows,
                                   long cols, const std::string& key) {
  std::istringstream ss(values);
  Eigen::MatrixXd m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j)
      if (!(ss >> m(i, j)))
        throw config_error("certificate: field '" + key + "' has too few values");
  double extra;
  if (ss >> extra)
    throw config_error("certificate: field '" + key + "' has too many values");
  return m;
}

Verdict verdict_from_string(const std::string& s) {
  if (s == "feasible") return Verdict::feasible;
  if (s == "infeasible") return Verdict::infeasible;
  if (s == "undecided") return Verdict::undecided;
  throw config_error("certificate: unknown verdict '" + s + "'");
}

struct Fields {
  std::map<std::string, std::string> kv;

  const std::string& need(const std::string& key) const {
    auto it = kv.find(key);
    if (it == kv.end()) throw config_error("certificate: missing field '" + key + "'");
    return it->second;
  }
  double need_double(const std::string& key) const {
    try {
      return std::stod(need(key));
    } catch (const std::exception&) {
      throw config_error("certificate: bad number in field '" + key + "'");
    }
  }
  int need_int(const std::string& key) const {
    return static_cast<int>(need_double(key));
  }
};

void write_lk(std::ostringstream& out, const LkParams& lk) {
  out << "p = " << matrix_values(lk.p) << "\n";
  out << "q = " << matrix_values(lk.q) << "\n";
  out << "r_mat = " << matrix_values(lk.r_mat) << "\n";
}

LkParams read_lk(const Fields& f, int n, int r, double h_m) {
  LkParams lk;
  lk.r = r;
  lk.h_m = h_m;
  lk.p = matrix_from_values(f.need("p"), n, n, "p");
  lk.q = matrix_from_values(f.need("q"), static_cast<long>(r) * n,
                            static_cast<long>(r) * n, "q");
  lk.r_mat = matrix_from_values(f.need("r_mat"), n, n, "r_mat");
  return lk;
}

}  // namespace

std::string format_exact(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string certificate_to_text(const StabilityCertificate& cert) {
  std::ostringstream out;
  out << kMagic << "\n";
  out << "schema = 1\n";
  out << "type = analysis\n";
  out << "verdict = " << to_string(cert.verdict) << "\n";
  out << "n = " << cert.dim << "\n";
  out << "r = " << cert.r << "\n";
  out << "h_m = " << format_exact(cert.h_m) << "\n";
  out << "margin = " << format_exact(cert.margin) << "\n";
  write_lk(out, cert.lk);
  return out.str();
}

std::string certificate_to_text(const SynthesisCertificate& cert) {
  std::ostringstream out;
  out << kMagic << "\n";
  out << "schema = 1\n";
  out << "type = synthesis\n";
  out << "verdict = " << to_string(cert.verdict) << "\n";
  out << "n = " << cert.dim << "\n";
  out << "m = " << cert.inputs << "\n";
  out << "r = " << cert.r << "\n";
  out << "h_m = " << format_exact(cert.h_m) << "\n";
  out << "margin = " << format_exact(cert.margin) << "\n";
  out << "oracle_root = " << format_exact(cert.oracle_root.real()) << " "
      << format_exact(cert.oracle_root.imag()) << "\n";
  out << "k = " << matrix_values(cert.k) << "\n";
  if (cert.verdict == Verdict::feasible) {
    write_lk(out, cert.lk);
    out << "x = " << matrix_values(cert.slack) << "\n";
  }
  return out.str();
}

ParsedCertificate parse_certificate_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw config_error("certificate: missing 'tdaqm-certificate' header line");
  Fields f;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("certificate: malformed line '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    f.kv[key] = value;
  }
  if (f.need("schema") != "1")
    throw config_error("certificate: unsupported schema version");

  ParsedCertificate out;
  out.type = f.need("type");
  const int n = f.need_int("n");
  const int r = f.need_int("r");
  const double h_m = f.need_double("h_m");
  if (out.type == "analysis") {
    StabilityCertificate c;
    c.dim = n;
    c.r = r;
    c.h_m = h_m;
    c.verdict = verdict_from_string(f.need("verdict"));
    c.margin = f.need_double("margin");
    c.lk = read_lk(f, n, r, h_m);
    out.analysis = std::move(c);
  } else if (out.type == "synthesis") {
    SynthesisCertificate c;
    c.dim = n;
    c.r = r;
    c.h_m = h_m;
    c.inputs = f.need_int("m");
    c.verdict = verdict_from_string(f.need("verdict"));
    c.margin = f.need_double("margin");
    {
      std::istringstream rs(f.need("oracle_root"));
      double re = 0, im = 0;
      rs >> re >> im;
      c.oracle_root = {re, im};
    }
    c.k = matrix_from_values(f.need("k"), c.inputs, n, "k");
    if (c.verdict == Verdict::feasible) {
      c.lk = read_lk(f, n, r, h_m);
      c.slack = matrix_from_values(f.need("x"), static_cast<long>(r + 2) * n, n, "x");
    }
    out.synthesis = std::move(c);
  } else {
    throw config_error("certificate: unknown type '" + out.type + "'");
  }
  return out;
}

}  // namespace tdaqm
