#pragma once

#include <iosfwd>

#include "tdaqm/sim.hpp"

namespace tdaqm {

/// Writes the trace with header `t,W,q,p,d,rtt,w_hat,agg_rate`, one row per
/// step (optionally decimated), numbers with 9 significant digits.
void write_trace_csv(std::ostream& out, const Trace& trace, int stride = 1);

/// Reads a trace back (columns located by header name).
Trace read_trace_csv(std::istream& in);

}  // namespace tdaqm
