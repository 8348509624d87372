#include "needlesim/log.hpp"

#include <atomic>
#include <deque>
#include <iostream>
#include <mutex>

namespace needlesim::log {
namespace {

std::atomic<Level> g_level{Level::kWarning};
std::mutex g_mutex;
std::deque<std::string> g_recent;
std::size_t g_warnings = 0;
constexpr std::size_t kRecentCapacity = 64;

const char* tag(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarning: return "warning";
    case Level::kError: return "error";
    default: return "";
  }
}

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void write(Level lvl, const std::string& message) {
  std::lock_guard lock(g_mutex);
  if (lvl == Level::kWarning) {
    ++g_warnings;
    g_recent.push_back(message);
    if (g_recent.size() > kRecentCapacity) g_recent.pop_front();
  }
  if (lvl >= g_level.load()) std::clog << "[needlesim " << tag(lvl) << "] " << message << '\n';
}

std::size_t warning_count() {
  std::lock_guard lock(g_mutex);
  return g_warnings;
}

std::vector<std::string> recent_warnings() {
  std::lock_guard lock(g_mutex);
  return {g_recent.begin(), g_recent.end()};
}

}  // namespace needlesim::log
