#include "tdaqm/log.hpp"

#include <cstdlib>
#include <iostream>

namespace tdaqm {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("TDAQM_LOG");
    if (env == nullptr) return LogLevel::error;
    const std::string v(env);
    if (v == "debug" || v == "2") return LogLevel::debug;
    if (v == "info" || v == "1") return LogLevel::info;
    return LogLevel::error;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << "[tdaqm] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::debug) std::cerr << "[tdaqm:debug] " << msg << "\n";
}

}  // namespace tdaqm
