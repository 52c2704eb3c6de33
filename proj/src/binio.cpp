#include "hsics/binio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace hsics::binio {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Cursor {
  const std::string& buf;
  std::size_t pos = 0;
  std::string where;

  void need(std::size_t n) const {
    if (buf.size() - pos < n) throw ValidationError(where + ": file is truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
};

} // namespace

void write(const std::filesystem::path& path, const char* magic, const std::vector<const Matrix*>& blocks,
           const std::string& json) {
  std::string out(magic, 7);
  out.push_back('\0');
  for (const Matrix* m : blocks) {
    put_u32(out, static_cast<std::uint32_t>(m->rows()));
    put_u32(out, static_cast<std::uint32_t>(m->cols()));
    for (Index i = 0; i < m->size(); ++i) put_f64(out, m->data()[i]);
  }
  put_u32(out, static_cast<std::uint32_t>(json.size()));
  out += json;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ValidationError("write failed: " + path.string());
}

Contents read(const std::filesystem::path& path, const char* magic, int blocks) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Cursor c{buf, 0, path.string()};
  c.need(8);
  if (std::memcmp(buf.data(), magic, 7) != 0 || buf[7] != '\0')
    throw ValidationError(path.string() + ": bad magic, expected " + std::string(magic, 7));
  c.pos = 8;

  Contents out;
  for (int b = 0; b < blocks; ++b) {
    const std::uint32_t rows = c.u32();
    const std::uint32_t cols = c.u32();
    c.need(8ull * rows * cols);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = c.f64();
    out.blocks.push_back(std::move(m));
  }
  const std::uint32_t len = c.u32();
  c.need(len);
  out.json = buf.substr(c.pos, len);
  c.pos += len;
  if (c.pos != buf.size()) throw ValidationError(path.string() + ": trailing bytes after JSON blob");
  return out;
}

} // namespace hsics::binio
