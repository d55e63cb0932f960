#include "tdaqm/report.hpp"

#include <cstdio>
#include <sstream>

#include "tdaqm/errors.hpp"

namespace tdaqm {

namespace {

std::string cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%12.6g", v);
  return buf;
}

std::string cell_na() { return std::string(9, ' ') + "n/a"; }

}  // namespace

std::string stats_table(const std::vector<std::string>& names,
                        const std::vector<StatsReport>& reports) {
  if (names.size() != reports.size() || names.empty())
    throw config_error("stats_table: one report per column required");

  std::ostringstream out;
  out << "# queue statistics (packets); periods B/D/A = before/during/after "
         "cross traffic\n";
  char head[32];
  std::snprintf(head, sizeof(head), "%-8s", "metric");
  out << head;
  for (const auto& n : names) {
    std::snprintf(head, sizeof(head), "%12s", n.c_str());
    out << head;
  }
  out << "  period\n";

  const char* metrics[3] = {"Mean", "Sdt", "CV2"};
  const char periods[3] = {'B', 'D', 'A'};
  for (int per = 0; per < 3; ++per) {
    for (int met = 0; met < 3; ++met) {
      std::snprintf(head, sizeof(head), "%-8s", metrics[met]);
      out << head;
      for (const auto& rep : reports) {
        const std::optional<PeriodStats>& st =
            per == 0 ? rep.before : (per == 1 ? rep.during : rep.after);
        if (!st.has_value()) {
          out << cell_na();
          continue;
        }
        const double v = met == 0 ? st->mean : (met == 1 ? st->stddev : st->cv2);
        out << cell(v);
      }
      out << "  " << periods[per] << "\n";
    }
  }
  return out.str();
}

}  // namespace tdaqm
