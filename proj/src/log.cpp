#include "kedmd/log.hpp"

#include <atomic>
#include <iostream>

namespace kedmd::log {
namespace {
std::atomic<Level> g_level{Level::Normal};
}

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void write(Level at, std::string_view prefix, std::string_view message) {
  if (static_cast<int>(g_level.load()) < static_cast<int>(at)) return;
  // warnings go to stderr so that stdout stays parseable
  auto& os = prefix.empty() ? std::cout : std::cerr;
  os << prefix << message << '\n';
}

}  // namespace kedmd::log
