#include "binary_io.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include <zlib.h>

namespace aimdit::io {

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string() + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::kIo, "read error on " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write error on " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorCode::kIo, "write error on " + path.string());
}

std::size_t verify_sealed(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  if (bytes.size() < 4) fail(ErrorCode::kChecksum, what + ": too short to hold a CRC32 trailer");
  const std::size_t payload = bytes.size() - 4;
  ByteReader trailer(bytes.data() + payload, 4, ErrorCode::kChecksum);
  const std::uint32_t stored = trailer.get_u32();
  const std::uint32_t actual = crc32(bytes.data(), payload);
  if (stored != actual) {
    std::ostringstream os;
    os << what << ": CRC32 mismatch (stored 0x" << std::hex << stored << ", computed 0x" << actual
       << "); file is truncated or corrupt";
    fail(ErrorCode::kChecksum, os.str());
  }
  return payload;
}

}  // namespace aimdit::io
