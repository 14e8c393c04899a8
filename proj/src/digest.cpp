#include "cgate/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>
#include <stdexcept>

namespace cgate {
namespace {

std::array<unsigned char, 32> sha256_raw(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
  std::array<unsigned char, 32> out{};
  unsigned int len = 0;
  if (EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  const auto raw = sha256_raw(bytes);
  std::string hex;
  hex.reserve(64);
  for (unsigned char c : raw) {
    hex.push_back(kHex[c >> 4]);
    hex.push_back(kHex[c & 0xf]);
  }
  return hex;
}

std::uint64_t sha256_u64(std::string_view bytes) {
  const auto raw = sha256_raw(bytes);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | raw[i];
  return v;
}

std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::string_view> parts) {
  std::string buf = std::to_string(root);
  for (std::string_view p : parts) {
    buf.push_back('|');
    buf += std::to_string(p.size());
    buf.push_back(':');
    buf.append(p);
  }
  return sha256_u64(buf);
}

}  // namespace cgate
