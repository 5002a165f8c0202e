#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace canopyfuse::cli {

/// FNV-1a 64-bit digest as 16 lowercase hex digits.
std::string fnv1a_hex(std::span<const std::uint8_t> bytes);
std::string hash_file(const std::filesystem::path& path);

/// Buffers every output of one subcommand and publishes them together. commit() writes each
/// file to a temporary name in the output directory and renames it into place; anything not
/// committed (including temporaries of a failed commit) is removed on destruction.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir);
  ~OutputSet();
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;

  void add(const std::string& name, std::string bytes);
  void add(const std::string& name, const std::vector<std::uint8_t>& bytes);

  /// Output name -> digest, for the manifest.
  std::map<std::string, std::string> digests() const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

  void commit();

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> pending_;
  std::vector<std::filesystem::path> temps_;
  bool committed_ = false;
};

}  // namespace canopyfuse::cli
