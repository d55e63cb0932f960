#pragma once

#include <string>
#include <vector>

#include "tdaqm/sim.hpp"

namespace tdaqm {

/// Queue-statistics table with one column per AQM and rows Mean/Sdt/CV2
/// grouped by period (B = before, D = during, A = after cross traffic, the
/// period letter in the trailing column). Absent periods print "n/a".
std::string stats_table(const std::vector<std::string>& names,
                        const std::vector<StatsReport>& reports);

}  // namespace tdaqm
