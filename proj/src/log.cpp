#include "mdvit/log.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace mdvit::log {

namespace {

Level from_env() {
  const char* env = std::getenv("MDVIT_LOG_LEVEL");
  if (!env) return Level::kInfo;
  const std::string v(env);
  if (v == "debug") return Level::kDebug;
  if (v == "warn") return Level::kWarn;
  if (v == "off") return Level::kOff;
  return Level::kInfo;
}

std::atomic<Level>& threshold() {
  static std::atomic<Level> value{from_env()};
  return value;
}

}  // namespace

Level level() { return threshold().load(std::memory_order_relaxed); }
void set_level(Level l) { threshold().store(l, std::memory_order_relaxed); }

void write(Level l, std::string_view message) {
  // Progress goes to stdout; warnings to stderr.
  std::FILE* stream = l >= Level::kWarn ? stderr : stdout;
  const char* tag = l == Level::kDebug ? "[debug] " : l == Level::kWarn ? "[warn] " : "";
  std::fprintf(stream, "%s%.*s\n", tag, static_cast<int>(message.size()), message.data());
  std::fflush(stream);
}

}  // namespace mdvit::log
