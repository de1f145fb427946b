#pragma once

#include <span>
#include <string>

#include "slgan/nn.hpp"

namespace slgan {

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(const std::string& bytes);

// Digest over names, shapes and little-endian float bytes of every tensor, in order.
std::string param_hash(const nn::ParamStore& params);

}  // namespace slgan
