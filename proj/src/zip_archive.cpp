#include "dynorank/zip_archive.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>

#include "dynorank/errors.hpp"
#include "dynorank/npy.hpp"

namespace dynorank::zip {

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint32_t kZip64EndSig = 0x06064b50;
constexpr std::uint32_t kZip64LocatorSig = 0x07064b50;

std::uint64_t le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put(std::vector<unsigned char>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

std::vector<unsigned char> read_range(std::ifstream& in, std::uint64_t offset, std::uint64_t len,
                                      const std::filesystem::path& path) {
  std::vector<unsigned char> buf(len);
  in.seekg(static_cast<std::streamoff>(offset));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(len));
  if (!in) throw ValidationError(path.string() + ": truncated zip archive");
  return buf;
}

std::uint32_t crc_of(const std::vector<unsigned char>& data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < data.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - done, 1u << 30));
    crc = crc32(crc, data.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

Archive::Archive(const std::filesystem::path& path) : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  if (file_size < 22) throw ValidationError(path.string() + ": not a zip archive");

  const std::uint64_t tail_len = std::min<std::uint64_t>(file_size, 22 + 65535 + 20);
  const auto tail = read_range(in, file_size - tail_len, tail_len, path);
  std::int64_t eocd = -1;
  for (std::int64_t i = static_cast<std::int64_t>(tail_len) - 22; i >= 0; --i) {
    if (le(&tail[static_cast<std::size_t>(i)], 4) == kEndSig) {
      eocd = i;
      break;
    }
  }
  if (eocd < 0) throw ValidationError(path.string() + ": end of central directory not found");
  const unsigned char* e = &tail[static_cast<std::size_t>(eocd)];
  std::uint64_t count = le(e + 10, 2);
  std::uint64_t cd_size = le(e + 12, 4);
  std::uint64_t cd_offset = le(e + 16, 4);

  if ((count == 0xffff || cd_offset == 0xffffffff) && eocd >= 20 &&
      le(&tail[static_cast<std::size_t>(eocd - 20)], 4) == kZip64LocatorSig) {
    const std::uint64_t z64_off = le(&tail[static_cast<std::size_t>(eocd - 20) + 8], 8);
    const auto z = read_range(in, z64_off, 56, path);
    if (le(z.data(), 4) != kZip64EndSig) throw ValidationError(path.string() + ": bad zip64 record");
    count = le(&z[32], 8);
    cd_size = le(&z[40], 8);
    cd_offset = le(&z[48], 8);
  }
  if (cd_offset + cd_size > file_size) throw ValidationError(path.string() + ": bad central directory");

  const auto cd = read_range(in, cd_offset, cd_size, path);
  std::size_t pos = 0;
  for (std::uint64_t k = 0; k < count; ++k) {
    if (pos + 46 > cd.size() || le(&cd[pos], 4) != kCentralSig) {
      throw ValidationError(path.string() + ": corrupt central directory entry");
    }
    const unsigned char* c = &cd[pos];
    Entry entry;
    entry.method = static_cast<std::uint16_t>(le(c + 10, 2));
    entry.crc = static_cast<std::uint32_t>(le(c + 16, 4));
    entry.compressed_size = le(c + 20, 4);
    entry.uncompressed_size = le(c + 24, 4);
    const std::size_t name_len = le(c + 28, 2);
    const std::size_t extra_len = le(c + 30, 2);
    const std::size_t comment_len = le(c + 32, 2);
    entry.local_offset = le(c + 42, 4);
    if (pos + 46 + name_len + extra_len + comment_len > cd.size()) {
      throw ValidationError(path.string() + ": corrupt central directory entry");
    }
    std::string name(reinterpret_cast<const char*>(c + 46), name_len);

    // Zip64 extended information: present fields appear in fixed order.
    const unsigned char* x = c + 46 + name_len;
    std::size_t xp = 0;
    while (xp + 4 <= extra_len) {
      const auto id = le(x + xp, 2);
      const auto sz = le(x + xp + 2, 2);
      if (id == 0x0001) {
        std::size_t f = xp + 4;
        if (entry.uncompressed_size == 0xffffffff) { entry.uncompressed_size = le(x + f, 8); f += 8; }
        if (entry.compressed_size == 0xffffffff) { entry.compressed_size = le(x + f, 8); f += 8; }
        if (entry.local_offset == 0xffffffff) { entry.local_offset = le(x + f, 8); }
      }
      xp += 4 + sz;
    }
    entries_[name] = entry;
    pos += 46 + name_len + extra_len + comment_len;
  }
}

std::vector<std::string> Archive::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

bool Archive::contains(const std::string& name) const { return entries_.count(name) != 0; }

std::vector<unsigned char> Archive::extract(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError(path_.string() + ": missing archive member '" + name + "'");
  const Entry& entry = it->second;

  std::ifstream in(path_, std::ios::binary);
  if (!in) throw IoError("cannot open " + path_.string());
  const auto lh = read_range(in, entry.local_offset, 30, path_);
  if (le(lh.data(), 4) != kLocalSig) throw ValidationError(path_.string() + ": bad local header for " + name);
  const std::uint64_t data_off = entry.local_offset + 30 + le(&lh[26], 2) + le(&lh[28], 2);
  const auto packed = read_range(in, data_off, entry.compressed_size, path_);

  std::vector<unsigned char> out;
  if (entry.method == 0) {
    out = packed;
  } else if (entry.method == 8) {
    out.resize(entry.uncompressed_size);
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw IoError("zlib init failed");
    std::size_t in_done = 0;
    std::size_t out_done = 0;
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
      const auto in_chunk = static_cast<uInt>(std::min<std::size_t>(packed.size() - in_done, 1u << 30));
      const auto out_chunk = static_cast<uInt>(std::min<std::size_t>(out.size() - out_done, 1u << 30));
      zs.next_in = const_cast<Bytef*>(packed.data() + in_done);
      zs.avail_in = in_chunk;
      zs.next_out = out.data() + out_done;
      zs.avail_out = out_chunk;
      rc = inflate(&zs, Z_NO_FLUSH);
      in_done += in_chunk - zs.avail_in;
      out_done += out_chunk - zs.avail_out;
      if (rc != Z_OK && rc != Z_STREAM_END) {
        inflateEnd(&zs);
        throw ValidationError(path_.string() + ": corrupt deflate stream in " + name);
      }
      if (rc == Z_OK && in_chunk == 0 && out_chunk == 0) break;
    }
    inflateEnd(&zs);
    if (out_done != out.size()) throw ValidationError(path_.string() + ": size mismatch in " + name);
  } else {
    throw ValidationError(path_.string() + ": unsupported compression method " + std::to_string(entry.method));
  }
  if (crc_of(out) != entry.crc) throw ValidationError(path_.string() + ": CRC mismatch in " + name);
  return out;
}

void write_stored(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, std::vector<unsigned char>>>& members) {
  std::vector<unsigned char> out;
  std::vector<unsigned char> central;
  for (const auto& [name, data] : members) {
    if (data.size() >= 0xffffffffULL) throw IoError("write_stored: member too large for zip32");
    const std::uint32_t crc = crc_of(data);
    const std::uint64_t offset = out.size();
    put(out, kLocalSig, 4);
    put(out, 20, 2);  // version needed
    put(out, 0, 2);   // flags
    put(out, 0, 2);   // stored
    put(out, 0, 4);   // time/date
    put(out, crc, 4);
    put(out, data.size(), 4);
    put(out, data.size(), 4);
    put(out, name.size(), 2);
    put(out, 0, 2);
    out.insert(out.end(), name.begin(), name.end());
    out.insert(out.end(), data.begin(), data.end());

    put(central, kCentralSig, 4);
    put(central, 20, 2);
    put(central, 20, 2);
    put(central, 0, 2);
    put(central, 0, 2);
    put(central, 0, 4);
    put(central, crc, 4);
    put(central, data.size(), 4);
    put(central, data.size(), 4);
    put(central, name.size(), 2);
    put(central, 0, 2);
    put(central, 0, 2);
    put(central, 0, 2);
    put(central, 0, 2);
    put(central, 0, 4);
    put(central, offset, 4);
    central.insert(central.end(), name.begin(), name.end());
  }
  const std::uint64_t cd_offset = out.size();
  out.insert(out.end(), central.begin(), central.end());
  put(out, kEndSig, 4);
  put(out, 0, 2);
  put(out, 0, 2);
  put(out, members.size(), 2);
  put(out, members.size(), 2);
  put(out, central.size(), 4);
  put(out, cd_offset, 4);
  put(out, 0, 2);
  npy::write_file_atomic(path, out);
}

}  // namespace dynorank::zip
