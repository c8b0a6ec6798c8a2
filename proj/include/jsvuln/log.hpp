#pragma once

#include <string_view>

namespace jsvuln {

enum class LogLevel { debug, info, warn, error };

/// Writes one structured line `stage=<s> level=<l> msg="<m>"` to stderr.
/// Safe to call from several threads.
void log(std::string_view stage, LogLevel level, std::string_view message);

void set_log_threshold(LogLevel level);
LogLevel log_threshold();

inline void log_info(std::string_view stage, std::string_view msg) { log(stage, LogLevel::info, msg); }
inline void log_warn(std::string_view stage, std::string_view msg) { log(stage, LogLevel::warn, msg); }

}  // namespace jsvuln
