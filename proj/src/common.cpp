#include "scenewise/common.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <vector>

namespace scenewise {

std::string strprintf(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  va_list copy;
  va_copy(copy, args);
  int n = std::vsnprintf(nullptr, 0, fmt, copy);
  va_end(copy);
  std::string out;
  if (n > 0) {
    out.resize(static_cast<size_t>(n));
    std::vsnprintf(out.data(), out.size() + 1, fmt, args);
  }
  va_end(args);
  return out;
}

namespace logging {
namespace {

Level initial_level() {
  const char* env = std::getenv("SCENEWISE_LOG");
  if (env == nullptr) return Level::Info;
  if (std::strcmp(env, "error") == 0) return Level::Error;
  if (std::strcmp(env, "debug") == 0) return Level::Debug;
  return Level::Info;
}

std::atomic<Level>& level_slot() {
  static std::atomic<Level> slot{initial_level()};
  return slot;
}

void write(Level lvl, const char* tag, const std::string& message) {
  if (static_cast<int>(lvl) > static_cast<int>(level())) return;
  std::fprintf(stderr, "[%s] %s\n", tag, message.c_str());
}

}  // namespace

Level level() { return level_slot().load(std::memory_order_relaxed); }
void set_level(Level lvl) { level_slot().store(lvl, std::memory_order_relaxed); }

void error(const std::string& message) { write(Level::Error, "error", message); }
void info(const std::string& message) { write(Level::Info, "info", message); }
void debug(const std::string& message) { write(Level::Debug, "debug", message); }

}  // namespace logging
}  // namespace scenewise
