#include "tdaqm/csv.hpp"

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tdaqm/errors.hpp"

namespace tdaqm {

void write_trace_csv(std::ostream& out, const Trace& trace, int stride) {
  if (stride < 1) throw config_error("csv stride must be >= 1");
  out << "t,W,q,p,d,rtt,w_hat,agg_rate\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.size(); i += static_cast<std::size_t>(stride)) {
    const double row[8] = {trace.t[i],   trace.w[i],     trace.q[i],
                           trace.p[i],   trace.d[i],     trace.rtt[i],
                           trace.w_hat[i], trace.agg_rate[i]};
    for (int c = 0; c < 8; ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", row[c]);
      out << buf << (c == 7 ? '\n' : ',');
    }
  }
}

Trace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw config_error("csv: empty input");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) header.push_back(field);
  }
  std::map<std::string, int> col;
  for (std::size_t i = 0; i < header.size(); ++i)
    col[header[i]] = static_cast<int>(i);
  for (const char* name : {"t", "W", "q", "p", "d", "rtt", "w_hat", "agg_rate"})
    if (col.find(name) == col.end())
      throw config_error(std::string("csv: missing column '") + name + "'");

  Trace tr;
  std::vector<double> row(header.size());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::size_t i = 0;
    while (std::getline(ss, field, ',') && i < row.size()) {
      try {
        row[i] = std::stod(field);
      } catch (const std::exception&) {
        throw config_error("csv: bad number '" + field + "'");
      }
      ++i;
    }
    if (i != header.size()) throw config_error("csv: short row");
    tr.t.push_back(row[col["t"]]);
    tr.w.push_back(row[col["W"]]);
    tr.q.push_back(row[col["q"]]);
    tr.p.push_back(row[col["p"]]);
    tr.d.push_back(row[col["d"]]);
    tr.rtt.push_back(row[col["rtt"]]);
    tr.w_hat.push_back(row[col["w_hat"]]);
    tr.agg_rate.push_back(row[col["agg_rate"]]);
  }
  return tr;
}

}  // namespace tdaqm
