#ifndef PEX_BINIO_HPP_
#define PEX_BINIO_HPP_

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "pex/errors.hpp"

namespace pex::binio
{

/// Little-endian byte sink.
class Writer
{
public:
  template<typename T>
  void put(T value)
  {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::is_floating_point_v<T>) {
      using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
      put(std::bit_cast<U>(value));
    } else {
      auto u = static_cast<std::make_unsigned_t<T>>(value);
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
      }
    }
  }

  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  void put_string_u16(const std::string & s)
  {
    if (s.size() > 0xffff) {
      throw std::invalid_argument("string too long for u16 length prefix");
    }
    put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    put_bytes(s);
  }

  const std::vector<std::uint8_t> & bytes() const { return bytes_; }
  std::vector<std::uint8_t> & bytes() { return bytes_; }

private:
  std::vector<std::uint8_t> bytes_;
};

/// Little-endian byte source over an in-memory buffer; running past the end is a truncation.
class Reader
{
public:
  explicit Reader(const std::vector<std::uint8_t> & bytes, std::size_t pos = 0)
  : bytes_(bytes), pos_(pos) {}

  template<typename T>
  T get()
  {
    if constexpr (std::is_floating_point_v<T>) {
      using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
      return std::bit_cast<T>(get<U>());
    } else {
      need(sizeof(T));
      std::make_unsigned_t<T> u = 0;
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        u |= static_cast<std::make_unsigned_t<T>>(bytes_[pos_ + i]) << (8 * i);
      }
      pos_ += sizeof(T);
      return static_cast<T>(u);
    }
  }

  std::string get_string_u16()
  {
    const auto n = get<std::uint16_t>();
    need(n);
    std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const
  {
    if (bytes_.size() - pos_ < n) {
      throw DataError(DataErrorCode::Truncated, "unexpected end of file");
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  const std::vector<std::uint8_t> & bytes_;
  std::size_t pos_;
};

inline std::uint32_t crc32_of(const std::uint8_t * data, std::size_t n)
{
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::vector<std::uint8_t> read_file(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError(DataErrorCode::Io, "cannot open " + path);
  }
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string & path, const std::vector<std::uint8_t> & bytes)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError(DataErrorCode::Io, "cannot open " + path + " for writing");
  }
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw DataError(DataErrorCode::Io, "write failed for " + path);
  }
}

/**
 * Shared framing: 4-byte magic, u16 version, payload, u32 CRC32 of the payload.
 * The payload is every byte between the version field and the checksum.
 */
inline void finish_with_crc(Writer & w, std::size_t payload_start)
{
  const auto & b = w.bytes();
  const std::uint32_t crc = crc32_of(b.data() + payload_start, b.size() - payload_start);
  w.put<std::uint32_t>(crc);
}

inline void check_header(
  const std::vector<std::uint8_t> & bytes, std::string_view magic,
  std::uint16_t version)
{
  if (bytes.size() < magic.size() || std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    throw DataError(DataErrorCode::BadMagic, "expected magic " + std::string(magic));
  }
  Reader r(bytes, magic.size());
  const auto v = r.get<std::uint16_t>();
  if (v != version) {
    throw DataError(
            DataErrorCode::VersionMismatch,
            "format version " + std::to_string(v) + ", expected " + std::to_string(version));
  }
}

/// Verifies the trailing checksum once the payload has been parsed up to `reader.pos()`.
inline void check_trailer(const std::vector<std::uint8_t> & bytes, Reader & reader, std::size_t payload_start)
{
  const std::size_t payload_end = reader.pos();
  const auto stored = reader.get<std::uint32_t>();
  if (reader.remaining() != 0) {
    throw DataError(DataErrorCode::ChecksumMismatch, "trailing bytes after checksum");
  }
  const auto actual = crc32_of(bytes.data() + payload_start, payload_end - payload_start);
  if (stored != actual) {
    throw DataError(DataErrorCode::ChecksumMismatch, "payload checksum does not match");
  }
}

}  // namespace pex::binio

#endif  // PEX_BINIO_HPP_
