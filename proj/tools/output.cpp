#include "output.hpp"

#include <fstream>
#include <system_error>

#include "canopyfuse/error.hpp"

namespace canopyfuse::cli {

std::string fnv1a_hex(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::io_failure, "cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a_hex(bytes);
}

OutputSet::OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

OutputSet::~OutputSet() {
  std::error_code ec;
  for (const auto& t : temps_) std::filesystem::remove(t, ec);
}

void OutputSet::add(const std::string& name, std::string bytes) { pending_[name] = std::move(bytes); }

void OutputSet::add(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  pending_[name] = std::string(bytes.begin(), bytes.end());
}

std::map<std::string, std::string> OutputSet::digests() const {
  std::map<std::string, std::string> out;
  for (const auto& [name, bytes] : pending_) {
    out[name] = fnv1a_hex({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
  }
  return out;
}

void OutputSet::commit() {
  if (committed_) throw Error("outputs already committed");
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw FormatError(FormatErrc::io_failure, "cannot create " + dir_.string() + ": " + ec.message());
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> moves;
  for (const auto& [name, bytes] : pending_) {
    const auto final_path = dir_ / name;
    auto tmp = final_path;
    tmp += ".tmp";
    temps_.push_back(tmp);
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) throw FormatError(FormatErrc::io_failure, "cannot write " + tmp.string());
    moves.emplace_back(tmp, final_path);
  }
  for (const auto& [tmp, final_path] : moves) {
    std::filesystem::rename(tmp, final_path, ec);
    if (ec) throw FormatError(FormatErrc::io_failure, "cannot rename " + tmp.string() + ": " + ec.message());
  }
  temps_.clear();
  committed_ = true;
}

}  // namespace canopyfuse::cli
