#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "slgan/error.hpp"
#include "slgan/tensor.hpp"

namespace slgan {

// Per-attribute request in schema order; nullopt means "draw from the marginal".
using PartialAttributes = std::vector<std::optional<float>>;

class UnknownAttribute : public ConfigError {
 public:
  UnknownAttribute(const std::string& name, const std::vector<std::string>& valid);
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

// "name=0" / "name=1" pairs.
PartialAttributes parse_attribute_pairs(std::span<const std::string> pairs,
                                        const std::vector<std::string>& names);
// {"name": 0|1|true|false, ...}; null means unspecified.
PartialAttributes parse_attribute_json(const nlohmann::json& map,
                                       const std::vector<std::string>& names);

// [count, K]: specified bits everywhere, unspecified bits copied from one marginal row drawn
// per sample (so the unspecified part keeps the data's correlations).
Tensor fill_attributes(const PartialAttributes& partial, const Tensor& marginal_rows, int count,
                       std::mt19937_64& rng);

}  // namespace slgan
