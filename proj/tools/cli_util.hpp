// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>

namespace nastar::cli {

// FNV-1a, matching the waveform and checkpoint fingerprints elsewhere in
// the project, so run manifests speak one hash dialect.
std::uint64_t hash_bytes(const void* data, std::size_t size);
std::uint64_t hash_file(const std::string& path);

// "0x" + 16 lowercase hex digits.
std::string hex_u64(std::uint64_t v);

// Joins leaf onto the output root: $NASTAR_OUT when set, else the working
// directory.
std::string default_out(const std::string& leaf);

// Exclusive claim on an output location. Creation fails when the lock file
// already exists, so two runs cannot interleave writes into one directory;
// the holder removes the file on destruction, including during unwinds.
class LockFile {
 public:
  explicit LockFile(const std::string& path);
  ~LockFile();

  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace nastar::cli
