// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cli_util.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nastar::cli {

std::uint64_t hash_bytes(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("hash_file: cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  return hash_bytes(bytes.data(), bytes.size());
}

std::string hex_u64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::string default_out(const std::string& leaf) {
  const char* root = std::getenv("NASTAR_OUT");
  const std::filesystem::path base = (root != nullptr && *root != '\0')
                                         ? std::filesystem::path(root)
                                         : std::filesystem::path(".");
  return (base / leaf).string();
}

LockFile::LockFile(const std::string& path) : path_(path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  // O_EXCL makes creation the atomic claim: losing the race means some
  // other run owns the location.
  const int fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw std::runtime_error("another run holds " + path +
                             "; remove the lock file if no run is active");
  }
  ::close(fd);
}

LockFile::~LockFile() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace nastar::cli
