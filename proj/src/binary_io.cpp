#include "tlsm/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace tlsm::io {

void ByteWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!out) fail(ErrorKind::io, "write to '" + path.string() + "' failed");
}

ByteReader ByteReader::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ByteReader(std::move(data));
}

void ByteReader::expect_magic(std::string_view magic) {
  if (remaining() < magic.size())
    fail(ErrorKind::format, "truncated file: missing magic, expected \"" + std::string(magic) + "\"");
  const std::string found(data_.data() + pos_, magic.size());
  if (found != magic)
    fail(ErrorKind::format, "bad magic: expected \"" + std::string(magic) + "\"");
  pos_ += magic.size();
}

std::string ByteReader::bytes(std::size_t n) {
  require_items(n, 1, "bytes");
  std::string out(data_.data() + pos_, n);
  pos_ += n;
  return out;
}

void ByteReader::require_items(std::uint64_t count, std::size_t item_size,
                               std::string_view what) const {
  const std::uint64_t avail = remaining() / item_size;
  if (count > avail)
    fail(ErrorKind::format, "truncated file: expected " + std::to_string(count) + " " +
                                std::string(what) + " entries, " + std::to_string(avail) +
                                " available");
}

}  // namespace tlsm::io
