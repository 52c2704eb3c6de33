#include "hsics/core.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstring>

namespace hsics {

void require_finite(const Matrix& m, const char* what) {
  if (m.rows() < 1 || m.cols() < 1)
    throw ValidationError(std::string(what) + ": matrix must be at least 1x1");
  if (!m.allFinite())
    throw ValidationError(std::string(what) + ": matrix has non-finite entries");
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite())
    throw ValidationError(std::string(what) + ": vector has non-finite entries");
}

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string fingerprint(const Matrix& m) {
  const std::int64_t dims[2] = {static_cast<std::int64_t>(m.rows()),
                                static_cast<std::int64_t>(m.cols())};
  std::string bytes(sizeof(dims) + sizeof(double) * static_cast<std::size_t>(m.size()), '\0');
  std::memcpy(bytes.data(), dims, sizeof(dims));
  std::memcpy(bytes.data() + sizeof(dims), m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  return sha256_hex(bytes);
}

} // namespace hsics
