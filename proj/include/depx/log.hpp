#pragma once

#include <functional>
#include <iostream>
#include <string>
#include <utility>

namespace depx::log {

enum class Level { kDebug, kInfo, kWarn, kError };

using Sink = std::function<void(Level, const std::string&)>;

namespace detail {
inline Sink& sink() {
  static Sink s = [](Level level, const std::string& msg) {
    static const char* kNames[] = {"debug", "info", "warn", "error"};
    std::cerr << "[depx " << kNames[static_cast<int>(level)] << "] " << msg << '\n';
  };
  return s;
}
inline Level& threshold() {
  static Level l = Level::kInfo;
  return l;
}
}  // namespace detail

// Replaces the process-wide sink; returns the previous one so tests can restore it.
inline Sink set_sink(Sink s) { return std::exchange(detail::sink(), std::move(s)); }
inline void set_level(Level l) { detail::threshold() = l; }

inline void write(Level level, const std::string& msg) {
  if (level >= detail::threshold()) detail::sink()(level, msg);
}
inline void debug(const std::string& msg) { write(Level::kDebug, msg); }
inline void info(const std::string& msg) { write(Level::kInfo, msg); }
inline void warn(const std::string& msg) { write(Level::kWarn, msg); }
inline void error(const std::string& msg) { write(Level::kError, msg); }

}  // namespace depx::log
