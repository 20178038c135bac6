#pragma once

#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string>

namespace redbench::logging {

enum class Level { kQuiet = 0, kError = 1, kWarn = 2, kInfo = 3, kDebug = 4 };

// Verbosity comes from the REDBENCH_LOG environment variable
// (quiet|error|warn|info|debug); default is warn.
inline Level level() {
    static const Level lvl = [] {
        const char* env = std::getenv("REDBENCH_LOG");
        if (!env) return Level::kWarn;
        const std::string v(env);
        if (v == "quiet") return Level::kQuiet;
        if (v == "error") return Level::kError;
        if (v == "warn") return Level::kWarn;
        if (v == "info") return Level::kInfo;
        if (v == "debug") return Level::kDebug;
        return Level::kWarn;
    }();
    return lvl;
}

inline std::mutex& mutex() {
    static std::mutex m;
    return m;
}

template <typename... Args>
void log(Level lvl, const char* tag, const char* fmt, Args... args) {
    if (static_cast<int>(lvl) > static_cast<int>(level())) return;
    std::lock_guard<std::mutex> lock(mutex());
    std::fprintf(stderr, "[%s] ", tag);
    if constexpr (sizeof...(Args) == 0)
        std::fputs(fmt, stderr);
    else
        std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
}

template <typename... Args>
void error(const char* fmt, Args... args) { log(Level::kError, "error", fmt, args...); }
template <typename... Args>
void warn(const char* fmt, Args... args) { log(Level::kWarn, "warn", fmt, args...); }
template <typename... Args>
void info(const char* fmt, Args... args) { log(Level::kInfo, "info", fmt, args...); }
template <typename... Args>
void debug(const char* fmt, Args... args) { log(Level::kDebug, "debug", fmt, args...); }

}  // namespace redbench::logging
