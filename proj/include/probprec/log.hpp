#pragma once

#include <string_view>

namespace probprec::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

void set_level(Level level);
Level level();

void debug(std::string_view message);
void info(std::string_view message);
void warn(std::string_view message);
void error(std::string_view message);

/// Number of warnings emitted since process start (or the last reset).
/// Tests use this to assert that a fallback path was taken.
long warning_count();
void reset_warning_count();

}  // namespace probprec::log
