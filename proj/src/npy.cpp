#include "dynorank/npy.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dynorank/errors.hpp"

namespace dynorank::npy {

namespace {

constexpr unsigned char kMagic[] = {0x93, 'N', 'U', 'M', 'P', 'Y'};

struct DescrInfo {
  DType dtype;
  bool big_endian;
};

DescrInfo parse_descr(const std::string& descr) {
  if (descr.size() < 3) throw ValidationError("npy: unsupported descr '" + descr + "'");
  const char order = descr[0];
  const std::string code = descr.substr(1);
  bool big = order == '>';
  if constexpr (std::endian::native == std::endian::big) {
    if (order == '=') big = true;
  }
  static const std::pair<const char*, DType> table[] = {
      {"f4", DType::kFloat32}, {"f8", DType::kFloat64}, {"i1", DType::kInt8},
      {"i2", DType::kInt16},   {"i4", DType::kInt32},   {"i8", DType::kInt64},
      {"u1", DType::kUInt8},   {"u2", DType::kUInt16},  {"u4", DType::kUInt32},
      {"u8", DType::kUInt64},  {"b1", DType::kBool},
  };
  for (const auto& [name, t] : table) {
    if (code == name) return {t, big};
  }
  throw ValidationError("npy: unsupported descr '" + descr + "'");
}

std::string descr_of(DType t) {
  switch (t) {
    case DType::kFloat32: return "<f4";
    case DType::kFloat64: return "<f8";
    case DType::kInt8: return "|i1";
    case DType::kInt16: return "<i2";
    case DType::kInt32: return "<i4";
    case DType::kInt64: return "<i8";
    case DType::kUInt8: return "|u1";
    case DType::kUInt16: return "<u2";
    case DType::kUInt32: return "<u4";
    case DType::kUInt64: return "<u8";
    case DType::kBool: return "|b1";
  }
  return "";
}

// Minimal reader for the Python dict literal in an NPY header.
class HeaderParser {
 public:
  explicit HeaderParser(std::string text) : s_(std::move(text)) {}

  std::string string_value(const std::string& key) {
    seek_key(key);
    skip_ws();
    const char q = take();
    if (q != '\'' && q != '"') fail("expected string for " + key);
    const auto end = s_.find(q, pos_);
    if (end == std::string::npos) fail("unterminated string");
    std::string v = s_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return v;
  }

  bool bool_value(const std::string& key) {
    seek_key(key);
    skip_ws();
    if (s_.compare(pos_, 4, "True") == 0) return true;
    if (s_.compare(pos_, 5, "False") == 0) return false;
    fail("expected bool for " + key);
    return false;
  }

  std::vector<std::size_t> tuple_value(const std::string& key) {
    seek_key(key);
    skip_ws();
    if (take() != '(') fail("expected tuple for " + key);
    std::vector<std::size_t> out;
    for (;;) {
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated tuple");
      if (s_[pos_] == ')') {
        ++pos_;
        break;
      }
      std::size_t v = 0;
      bool any = false;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        v = v * 10 + static_cast<std::size_t>(s_[pos_] - '0');
        ++pos_;
        any = true;
      }
      if (!any) fail("bad shape entry");
      out.push_back(v);
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') ++pos_;
    }
    return out;
  }

 private:
  void seek_key(const std::string& key) {
    for (const char q : {'\'', '"'}) {
      const std::string quoted = std::string(1, q) + key + q;
      const auto at = s_.find(quoted);
      if (at != std::string::npos) {
        pos_ = at + quoted.size();
        skip_ws();
        if (take() != ':') fail("expected ':' after " + key);
        return;
      }
    }
    fail("missing key " + key);
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  char take() { return pos_ < s_.size() ? s_[pos_++] : '\0'; }
  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("npy: malformed header (" + what + ")");
  }

  std::string s_;
  std::size_t pos_ = 0;
};

std::size_t product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <typename T>
T load_elem(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kInt8:
    case DType::kUInt8:
    case DType::kBool: return 1;
    case DType::kInt16:
    case DType::kUInt16: return 2;
    case DType::kFloat32:
    case DType::kInt32:
    case DType::kUInt32: return 4;
    case DType::kFloat64:
    case DType::kInt64:
    case DType::kUInt64: return 8;
  }
  return 0;
}

std::size_t Array::size() const { return product(shape); }

template <typename T>
std::vector<T> Array::as() const {
  const std::size_t n = size();
  const std::size_t w = dtype_size(dtype);
  std::vector<T> out(n);
  const unsigned char* p = bytes.data();
  for (std::size_t i = 0; i < n; ++i, p += w) {
    switch (dtype) {
      case DType::kFloat32: out[i] = static_cast<T>(load_elem<float>(p)); break;
      case DType::kFloat64: out[i] = static_cast<T>(load_elem<double>(p)); break;
      case DType::kInt8: out[i] = static_cast<T>(load_elem<std::int8_t>(p)); break;
      case DType::kInt16: out[i] = static_cast<T>(load_elem<std::int16_t>(p)); break;
      case DType::kInt32: out[i] = static_cast<T>(load_elem<std::int32_t>(p)); break;
      case DType::kInt64: out[i] = static_cast<T>(load_elem<std::int64_t>(p)); break;
      case DType::kUInt8: out[i] = static_cast<T>(load_elem<std::uint8_t>(p)); break;
      case DType::kUInt16: out[i] = static_cast<T>(load_elem<std::uint16_t>(p)); break;
      case DType::kUInt32: out[i] = static_cast<T>(load_elem<std::uint32_t>(p)); break;
      case DType::kUInt64: out[i] = static_cast<T>(load_elem<std::uint64_t>(p)); break;
      case DType::kBool: out[i] = static_cast<T>(*p != 0); break;
    }
  }
  return out;
}

template std::vector<float> Array::as<float>() const;
template std::vector<double> Array::as<double>() const;
template std::vector<std::int64_t> Array::as<std::int64_t>() const;

Array parse(std::span<const unsigned char> file) {
  if (file.size() < 10 || !std::equal(std::begin(kMagic), std::end(kMagic), file.begin())) {
    throw ValidationError("npy: bad magic string");
  }
  const unsigned major = file[6];
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = file[8] | (static_cast<std::size_t>(file[9]) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (file.size() < 12) throw ValidationError("npy: truncated header");
    header_len = file[8] | (static_cast<std::size_t>(file[9]) << 8) |
                 (static_cast<std::size_t>(file[10]) << 16) | (static_cast<std::size_t>(file[11]) << 24);
    offset = 12;
  } else {
    throw ValidationError("npy: unsupported format version " + std::to_string(major));
  }
  if (offset + header_len > file.size()) throw ValidationError("npy: truncated header");

  HeaderParser hp(std::string(reinterpret_cast<const char*>(file.data() + offset), header_len));
  const DescrInfo info = parse_descr(hp.string_value("descr"));
  const bool fortran = hp.bool_value("fortran_order");
  Array a;
  a.shape = hp.tuple_value("shape");
  a.dtype = info.dtype;

  const std::size_t w = dtype_size(a.dtype);
  const std::size_t n = a.size();
  const std::size_t data_off = offset + header_len;
  if (file.size() - data_off < n * w) {
    throw ValidationError("npy: payload holds " + std::to_string(file.size() - data_off) +
                          " bytes, shape needs " + std::to_string(n * w));
  }
  a.bytes.assign(file.begin() + static_cast<std::ptrdiff_t>(data_off),
                 file.begin() + static_cast<std::ptrdiff_t>(data_off + n * w));

  if (info.big_endian && w > 1) {
    for (std::size_t i = 0; i < n; ++i) std::reverse(&a.bytes[i * w], &a.bytes[i * w] + w);
  }
  if (fortran && a.shape.size() > 1) {
    // Column-major index (i0 fastest) -> row-major destination.
    std::vector<unsigned char> c(a.bytes.size());
    const std::size_t rank = a.shape.size();
    std::vector<std::size_t> idx(rank, 0);
    std::vector<std::size_t> cstride(rank, 1);
    for (std::size_t d = rank - 1; d > 0; --d) cstride[d - 1] = cstride[d] * a.shape[d];
    for (std::size_t f = 0; f < n; ++f) {
      std::size_t dst = 0;
      for (std::size_t d = 0; d < rank; ++d) dst += idx[d] * cstride[d];
      std::memcpy(&c[dst * w], &a.bytes[f * w], w);
      for (std::size_t d = 0; d < rank; ++d) {
        if (++idx[d] < a.shape[d]) break;
        idx[d] = 0;
      }
    }
    a.bytes.swap(c);
  }
  return a;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto len = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<unsigned char> buf(len);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(len));
  if (!in) throw IoError("short read on " + path.string());
  return buf;
}

Array read(const std::filesystem::path& path) {
  const auto buf = read_file(path);
  try {
    return parse(buf);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<unsigned char> serialize(std::span<const std::size_t> shape, DType dtype,
                                     std::span<const unsigned char> payload) {
  if (payload.size() != product(shape) * dtype_size(dtype)) {
    throw ValidationError("npy: payload size does not match shape");
  }
  std::ostringstream dict;
  dict << "{'descr': '" << descr_of(dtype) << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dict << shape[i];
    if (shape.size() == 1 || i + 1 < shape.size()) dict << ",";
    if (i + 1 < shape.size()) dict << " ";
  }
  dict << "), }";
  std::string header = dict.str();

  std::size_t prefix = 10;
  unsigned major = 1;
  auto padded = [&](std::size_t pre) {
    std::size_t total = pre + header.size() + 1;
    return (64 - total % 64) % 64;
  };
  if (header.size() + 1 + padded(10) > 65535) {
    major = 2;
    prefix = 12;
  }
  header.append(padded(prefix), ' ');
  header.push_back('\n');

  const std::size_t hl = header.size();
  std::vector<unsigned char> out(prefix + hl + payload.size());
  std::copy(std::begin(kMagic), std::end(kMagic), out.begin());
  out[6] = static_cast<unsigned char>(major);
  out[7] = 0;
  for (std::size_t k = 0; k + 8 < prefix; ++k) out[8 + k] = static_cast<unsigned char>((hl >> (8 * k)) & 0xff);
  std::copy(header.begin(), header.end(), out.begin() + static_cast<std::ptrdiff_t>(prefix));
  std::copy(payload.begin(), payload.end(), out.begin() + static_cast<std::ptrdiff_t>(prefix + hl));
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

namespace {

template <typename T>
void write_typed(const std::filesystem::path& path, std::span<const std::size_t> shape,
                 std::span<const T> values, DType dtype) {
  static_assert(std::endian::native == std::endian::little, "writer assumes little-endian host");
  const auto* p = reinterpret_cast<const unsigned char*>(values.data());
  write_file_atomic(path, serialize(shape, dtype, {p, values.size_bytes()}));
}

}  // namespace

void write(const std::filesystem::path& path, std::span<const std::size_t> shape,
           std::span<const float> values) {
  write_typed(path, shape, values, DType::kFloat32);
}
void write(const std::filesystem::path& path, std::span<const std::size_t> shape,
           std::span<const double> values) {
  write_typed(path, shape, values, DType::kFloat64);
}
void write(const std::filesystem::path& path, std::span<const std::size_t> shape,
           std::span<const std::int64_t> values) {
  write_typed(path, shape, values, DType::kInt64);
}

}  // namespace dynorank::npy
