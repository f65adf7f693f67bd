#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dynorank::zip {

// Read-only view of a zip archive (stored or deflated members, zip64 aware).
// This is what numpy's savez / savez_compressed produce.
class Archive {
 public:
  explicit Archive(const std::filesystem::path& path);

  std::vector<std::string> names() const;
  bool contains(const std::string& name) const;
  // Decompressed member contents; CRC-checked.
  std::vector<unsigned char> extract(const std::string& name) const;

 private:
  struct Entry {
    std::uint16_t method = 0;
    std::uint32_t crc = 0;
    std::uint64_t compressed_size = 0;
    std::uint64_t uncompressed_size = 0;
    std::uint64_t local_offset = 0;
  };

  std::filesystem::path path_;
  std::map<std::string, Entry> entries_;
};

// Writes an uncompressed archive; used for fixtures and small exports.
void write_stored(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, std::vector<unsigned char>>>& members);

}  // namespace dynorank::zip
