#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace agentseval::log {

enum class Level { debug, info, warn, error };

inline std::string_view to_string(Level l) {
  switch (l) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
  }
  return "info";
}

using Sink = std::function<void(Level, const std::string&)>;

namespace detail {
struct State {
  std::mutex mu;
  Level threshold = Level::warn;
  Sink sink = [](Level l, const std::string& msg) { std::cerr << "[" << to_string(l) << "] " << msg << '\n'; };
};
inline State& state() {
  static State s;
  return s;
}
}  // namespace detail

/// Replaces the process-wide sink. Returns the previous one.
inline Sink set_sink(Sink sink) {
  auto& s = detail::state();
  std::lock_guard lock(s.mu);
  std::swap(s.sink, sink);
  return sink;
}

inline void set_threshold(Level level) {
  auto& s = detail::state();
  std::lock_guard lock(s.mu);
  s.threshold = level;
}

inline void write(Level level, const std::string& msg) {
  auto& s = detail::state();
  std::lock_guard lock(s.mu);
  if (level < s.threshold || !s.sink) return;
  s.sink(level, msg);
}

inline void info(const std::string& msg) { write(Level::info, msg); }
inline void warn(const std::string& msg) { write(Level::warn, msg); }
inline void error(const std::string& msg) { write(Level::error, msg); }

}  // namespace agentseval::log
