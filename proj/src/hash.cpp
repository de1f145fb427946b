#include "slgan/hash.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace slgan {

namespace {

struct Digest {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), EVP_MD_CTX_free};

  Digest() {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
      throw std::runtime_error("sha256: digest init failed");
  }
  void update(const void* data, std::size_t n) {
    if (n && EVP_DigestUpdate(ctx.get(), data, n) != 1)
      throw std::runtime_error("sha256: digest update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
      throw std::runtime_error("sha256: digest final failed");
    std::string out(len * 2, '0');
    for (unsigned int i = 0; i < len; ++i) std::snprintf(&out[i * 2], 3, "%02x", md[i]);
    return out;
  }
};

}  // namespace

std::string sha256_hex(std::span<const unsigned char> bytes) {
  Digest d;
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string sha256_hex(const std::string& bytes) {
  Digest d;
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string param_hash(const nn::ParamStore& params) {
  static_assert(std::endian::native == std::endian::little);
  Digest d;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.names()[i];
    const Tensor& t = params.tensors()[i];
    d.update(name.data(), name.size() + 1);
    for (int dim : t.shape()) {
      const std::int32_t v = dim;
      d.update(&v, sizeof v);
    }
    d.update(t.data(), t.size() * sizeof(float));
  }
  return d.hex();
}

}  // namespace slgan
