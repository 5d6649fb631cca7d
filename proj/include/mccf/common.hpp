#pragma once

// Shared plumbing: error taxonomy, logging, small file helpers.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mccf {

// Error taxonomy maps onto CLI exit codes: data/contract problems exit 2,
// numeric problems (non-finite values) exit 3.
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : DataError {
  explicit ConfigError(const std::string& msg) : DataError(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---- logging ----------------------------------------------------------

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel& log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("MCCF_LOG");
    if (!env) return LogLevel::error;
    std::string v(env);
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    return LogLevel::error;
  }();
  return level;
}

template <typename... Args>
void log_at(LogLevel lvl, const char* fmt, Args... args) {
  if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
  const char* tag = lvl == LogLevel::error ? "error" : lvl == LogLevel::info ? "info" : "debug";
  std::fprintf(stderr, "[mccf %s] ", tag);
  if constexpr (sizeof...(Args) == 0)
    std::fputs(fmt, stderr);
  else
    std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

#define MCCF_INFO(...) ::mccf::log_at(::mccf::LogLevel::info, __VA_ARGS__)
#define MCCF_DEBUG(...) ::mccf::log_at(::mccf::LogLevel::debug, __VA_ARGS__)
#define MCCF_ERROR(...) ::mccf::log_at(::mccf::LogLevel::error, __VA_ARGS__)

// ---- small helpers ----------------------------------------------------

inline std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// FNV-1a, used for input digests in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string file_digest_hex(const std::string& path) {
  std::string bytes = read_file(path);
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

// Write via temp file + rename so readers never observe a partial file.
inline void atomic_write_file(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("short write: " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace mccf
