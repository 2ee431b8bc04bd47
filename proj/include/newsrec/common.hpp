#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

// Scalar type for all model math. Defaults to float; gradient-check test
// binaries override this to double on the compiler command line.
#ifndef NEWSREC_REAL
#define NEWSREC_REAL float
#endif

namespace newsrec {

using real = NEWSREC_REAL;

// ----------------------------- errors -----------------------------

// Bad shapes fed to a tensor op. Message names both shapes.
class dim_error : public std::runtime_error {
 public:
  explicit dim_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration: bad values, missing paths, malformed config files.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (TSV rows, embedding files). Carries line numbers
// where applicable.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Softmax over a fully masked set.
class empty_attention_error : public std::runtime_error {
 public:
  explicit empty_attention_error(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Unrecoverable failure inside the training loop (non-finite loss or
// gradients, failed checkpoint writes).
class train_abort : public std::runtime_error {
 public:
  explicit train_abort(const std::string& msg) : std::runtime_error(msg) {}
};

// ----------------------------- small utils -----------------------------

template <typename... Args>
std::string cat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  return oss.str();
}

inline std::string shape_str(const std::vector<size_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ----------------------------- logging -----------------------------

enum class LogLevel : int { quiet = 0, error = 1, warn = 2, info = 3, debug = 4 };

LogLevel log_threshold();
void set_log_threshold(LogLevel level);
void log_line(LogLevel level, const std::string& msg);

inline void log_error(const std::string& msg) { log_line(LogLevel::error, msg); }
inline void log_warn(const std::string& msg) { log_line(LogLevel::warn, msg); }
inline void log_info(const std::string& msg) { log_line(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log_line(LogLevel::debug, msg); }

}  // namespace newsrec

// Header-only definitions.
#include <cstdio>
#include <cstdlib>

namespace newsrec {
namespace detail {

inline LogLevel parse_log_env() {
  const char* env = std::getenv("NEWSREC_LOG");
  if (!env) return LogLevel::info;
  std::string v(env);
  if (v == "quiet") return LogLevel::quiet;
  if (v == "error") return LogLevel::error;
  if (v == "warn") return LogLevel::warn;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::info;
}

inline LogLevel& log_threshold_ref() {
  static LogLevel level = parse_log_env();
  return level;
}

}  // namespace detail

inline LogLevel log_threshold() { return detail::log_threshold_ref(); }
inline void set_log_threshold(LogLevel level) { detail::log_threshold_ref() = level; }

inline void log_line(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_threshold())) return;
  const char* tag = "info";
  switch (level) {
    case LogLevel::error: tag = "error"; break;
    case LogLevel::warn: tag = "warn"; break;
    case LogLevel::debug: tag = "debug"; break;
    default: break;
  }
  std::fprintf(stderr, "[newsrec %s] %s\n", tag, msg.c_str());
}

}  // namespace newsrec
