#pragma once

#include <string>

namespace tdaqm {

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Current verbosity, parsed once from the TDAQM_LOG environment variable
/// ("error" | "info" | "debug", default "error").
LogLevel log_level();

void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace tdaqm
