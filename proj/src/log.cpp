#include "jsvuln/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

namespace jsvuln {
namespace {

std::mutex g_log_mutex;
std::atomic<LogLevel> g_threshold{LogLevel::info};

std::string_view level_name(LogLevel level) {
    switch (level) {
        case LogLevel::debug: return "debug";
        case LogLevel::info: return "info";
        case LogLevel::warn: return "warn";
        case LogLevel::error: return "error";
    }
    return "info";
}

}  // namespace

void set_log_threshold(LogLevel level) { g_threshold = level; }
LogLevel log_threshold() { return g_threshold; }

void log(std::string_view stage, LogLevel level, std::string_view message) {
    if (level < g_threshold.load()) return;
    std::string escaped;
    escaped.reserve(message.size());
    for (char c : message) {
        if (c == '"' || c == '\\') escaped.push_back('\\');
        if (c == '\n') {
            escaped += "\\n";
            continue;
        }
        escaped.push_back(c);
    }
    std::lock_guard lock(g_log_mutex);
    std::cerr << "stage=" << stage << " level=" << level_name(level) << " msg=\"" << escaped << "\"\n";
}

}  // namespace jsvuln
