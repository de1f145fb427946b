#include "slgan/attributes.hpp"

#include <algorithm>

namespace slgan {

namespace {

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

std::size_t index_of(const std::string& name, const std::vector<std::string>& names) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw UnknownAttribute(name, names);
  return static_cast<std::size_t>(it - names.begin());
}

}  // namespace

UnknownAttribute::UnknownAttribute(const std::string& name, const std::vector<std::string>& valid)
    : ConfigError("unknown attribute '" + name + "'; valid names: " + join(valid)), name_(name) {}

PartialAttributes parse_attribute_pairs(std::span<const std::string> pairs,
                                        const std::vector<std::string>& names) {
  PartialAttributes out(names.size());
  for (const std::string& pair : pairs) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos)
      throw ConfigError("attribute '" + pair + "' must be written name=0 or name=1");
    const std::string name = pair.substr(0, eq), value = pair.substr(eq + 1);
    const std::size_t i = index_of(name, names);
    if (value != "0" && value != "1")
      throw ConfigError("attribute '" + name + "' must be 0 or 1, got '" + value + "'");
    out[i] = value == "1" ? 1.0f : 0.0f;
  }
  return out;
}

PartialAttributes parse_attribute_json(const nlohmann::json& map,
                                       const std::vector<std::string>& names) {
  PartialAttributes out(names.size());
  if (map.is_null()) return out;
  if (!map.is_object()) throw ConfigError("attributes must be an object mapping name to 0 or 1");
  for (const auto& [name, value] : map.items()) {
    const std::size_t i = index_of(name, names);
    if (value.is_null()) continue;
    if (value.is_boolean()) {
      out[i] = value.get<bool>() ? 1.0f : 0.0f;
    } else if (value.is_number_integer() && (value.get<long long>() == 0 || value.get<long long>() == 1)) {
      out[i] = static_cast<float>(value.get<long long>());
    } else {
      throw ConfigError("attribute '" + name + "' must be 0 or 1, got " + value.dump());
    }
  }
  return out;
}

Tensor fill_attributes(const PartialAttributes& partial, const Tensor& rows, int count,
                       std::mt19937_64& rng) {
  const int k = static_cast<int>(partial.size());
  if (rows.rank() != 2 || rows.dim(1) != k || rows.dim(0) < 1)
    throw ConfigError("fill_attributes: marginal rows do not match K=" + std::to_string(k));
  const bool any_missing =
      std::any_of(partial.begin(), partial.end(), [](const auto& v) { return !v.has_value(); });
  std::uniform_int_distribution<int> pick(0, rows.dim(0) - 1);
  Tensor y({count, k});
  for (int i = 0; i < count; ++i) {
    const float* row = any_missing ? rows.data() + static_cast<std::size_t>(pick(rng)) * k : nullptr;
    for (int j = 0; j < k; ++j) {
      const auto& v = partial[static_cast<std::size_t>(j)];
      y.data()[static_cast<std::size_t>(i) * k + j] = v ? *v : row[j];
    }
  }
  return y;
}

}  // namespace slgan
