#pragma once

#include <string_view>

namespace qis {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

/// Process-wide verbosity; initial value from QISBENCH_LOG (quiet|info|debug), default info.
LogLevel log_level();
void set_log_level(LogLevel level);

/// One line to stderr when `level` is enabled.
void log(LogLevel level, std::string_view message);
inline void log_info(std::string_view message) { log(LogLevel::info, message); }
inline void log_debug(std::string_view message) { log(LogLevel::debug, message); }

}  // namespace qis
