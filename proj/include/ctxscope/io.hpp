#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace ctxscope {

std::string read_file(const std::string& path);

// Writes via a sibling temporary file and rename, creating parent
// directories as needed.
void write_file(const std::string& path, std::string_view contents);

nlohmann::json read_json(const std::string& path);
void write_json(const std::string& path, const nlohmann::json& j);

// Lowercase hex SHA-256 digests.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

// Shortest round-trip formatting used in every CSV artifact.
std::string format_double(double v);

// Exclusive claim on a directory through an O_EXCL lock file, released on
// destruction. Throws Io when another process holds it.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

// UTC, second resolution, ISO 8601.
std::string utc_timestamp();

}  // namespace ctxscope
