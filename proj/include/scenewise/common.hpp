#pragma once

#include <cstdarg>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace scenewise {

enum class ErrorKind {
  InvalidInput,  // bad data fed to a numeric operation
  Config,        // invalid configuration value
  Format,        // malformed file contents (manifest, graph, checkpoint, ...)
  Graph,         // model graph fails shape validation
  Fusion,        // batchnorm fusion not applicable
  Registry,      // device not in the known-device set
  Data,          // dataset-level problem (empty subset, unreadable audio)
  Budget,        // complexity budget violated
  Bank,          // model bank inconsistent
  Metric,        // metric preconditions violated
  Io,            // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

// printf-style formatting into a std::string
std::string strprintf(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

namespace logging {

enum class Level { Error = 0, Info = 1, Debug = 2 };

// Initial level comes from SCENEWISE_LOG={error,info,debug}; defaults to info.
Level level();
void set_level(Level level);

void error(const std::string& message);
void info(const std::string& message);
void debug(const std::string& message);

}  // namespace logging
}  // namespace scenewise
