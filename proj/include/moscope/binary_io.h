// moscope/binary_io.h
//
// Little-endian primitives shared by the feature, wav and model formats.

#ifndef MOSCOPE_BINARY_IO_H_
#define MOSCOPE_BINARY_IO_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moscope {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path &path);

// Writes to "<path>.tmp" and renames over `path`, so a failed write never
// leaves a partial file behind.
void write_file_atomic(const std::filesystem::path &path,
                       std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path &path,
                       std::string_view text);

class ByteWriter {
 public:
  void put_bytes(std::string_view s);
  void put_u8(std::uint8_t v);
  void put_u16(std::uint16_t v);
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f32(float v);

  const std::vector<std::uint8_t> &bytes() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

// Cursor over a byte buffer. Every read checks the remaining length and
// throws FormatError naming `what` on truncation.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string source)
      : data_(data), source_(std::move(source)) {}

  std::string get_bytes(std::size_t n, const char *what);
  std::uint8_t get_u8(const char *what);
  std::uint16_t get_u16(const char *what);
  std::uint32_t get_u32(const char *what);
  std::uint64_t get_u64(const char *what);
  float get_f32(const char *what);

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }
  void skip(std::size_t n, const char *what);
  const std::string &source() const { return source_; }

 private:
  void require(std::size_t n, const char *what) const;

  std::span<const std::uint8_t> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace moscope

#endif  // MOSCOPE_BINARY_IO_H_
