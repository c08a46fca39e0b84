#include "probprec/log.hpp"

#include <atomic>
#include <cstdio>

namespace probprec::log {
namespace {

std::atomic<int> g_level{static_cast<int>(Level::warn)};
std::atomic<long> g_warnings{0};

void emit(Level at, const char* tag, std::string_view message) {
  if (static_cast<int>(at) < g_level.load()) return;
  std::fprintf(stderr, "[probprec %s] %.*s\n", tag,
               static_cast<int>(message.size()), message.data());
}

}  // namespace

void set_level(Level level) { g_level.store(static_cast<int>(level)); }
Level level() { return static_cast<Level>(g_level.load()); }

void debug(std::string_view message) { emit(Level::debug, "debug", message); }
void info(std::string_view message) { emit(Level::info, "info", message); }
void warn(std::string_view message) {
  ++g_warnings;
  emit(Level::warn, "warning", message);
}
void error(std::string_view message) { emit(Level::error, "error", message); }

long warning_count() { return g_warnings.load(); }
void reset_warning_count() { g_warnings.store(0); }

}  // namespace probprec::log
