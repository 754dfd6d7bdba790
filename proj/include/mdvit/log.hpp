#pragma once

#include <fmt/format.h>

#include <cstdio>
#include <string_view>

namespace mdvit::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kOff = 3 };

/// Process-wide threshold. Initialized from MDVIT_LOG_LEVEL
/// (debug|info|warn|off), defaulting to info.
Level level();
void set_level(Level l);

void write(Level l, std::string_view message);

template <typename... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
  if (level() <= Level::kDebug) write(Level::kDebug, fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  if (level() <= Level::kInfo) write(Level::kInfo, fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void warn(fmt::format_string<Args...> f, Args&&... args) {
  if (level() <= Level::kWarn) write(Level::kWarn, fmt::format(f, std::forward<Args>(args)...));
}

}  // namespace mdvit::log
