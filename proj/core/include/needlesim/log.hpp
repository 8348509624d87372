#pragma once

#include <sstream>
#include <string>
#include <vector>

namespace needlesim::log {

enum class Level { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3, kSilent = 4 };

void set_level(Level level);
Level level();

void write(Level level, const std::string& message);

/// Warnings are also retained (bounded) so callers such as the step driver
/// can report how many were raised during a step.
std::size_t warning_count();
std::vector<std::string> recent_warnings();

template <typename... Args>
std::string format(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

template <typename... Args>
void debug(const Args&... args) {
  if (level() <= Level::kDebug) write(Level::kDebug, format(args...));
}
template <typename... Args>
void info(const Args&... args) {
  if (level() <= Level::kInfo) write(Level::kInfo, format(args...));
}
template <typename... Args>
void warn(const Args&... args) {
  write(Level::kWarning, format(args...));
}
template <typename... Args>
void error(const Args&... args) {
  write(Level::kError, format(args...));
}

}  // namespace needlesim::log
