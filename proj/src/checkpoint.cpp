#include "slgan/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "slgan/error.hpp"
#include "slgan/hash.hpp"
#include "slgan/image_io.hpp"

namespace slgan {

static_assert(std::endian::native == std::endian::little,
              "archive blobs are written in host order");

using nlohmann::json;

std::string pack_archive(std::string_view magic, json meta,
                         const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  json manifest = json::array();
  std::string blobs;
  for (const auto& [name, tensor] : tensors) {
    const std::size_t bytes = tensor->size() * sizeof(float);
    const auto* raw = reinterpret_cast<const unsigned char*>(tensor->data());
    manifest.push_back({{"name", name},
                        {"shape", tensor->shape()},
                        {"offset", blobs.size()},
                        {"bytes", bytes},
                        {"sha256", sha256_hex(std::span<const unsigned char>(raw, bytes))}});
    blobs.append(reinterpret_cast<const char*>(raw), bytes);
  }
  meta["tensors"] = std::move(manifest);
  const std::string text = meta.dump(1);
  std::string out = std::string(magic) + "\n" + std::to_string(text.size()) + " " +
                    sha256_hex(text) + "\n" + text + "\n";
  out += blobs;
  return out;
}

Archive unpack_archive(std::string_view magic, const std::string& bytes) {
  const std::string what(magic);
  const std::string first = what + "\n";
  if (bytes.compare(0, first.size(), first) != 0)
    throw IntegrityError(what + ": bad magic (wrong file type or truncated)");
  const std::size_t line_end = bytes.find('\n', first.size());
  if (line_end == std::string::npos) throw IntegrityError(what + ": truncated header");
  std::size_t meta_len = 0;
  std::string meta_hash;
  {
    std::istringstream header(bytes.substr(first.size(), line_end - first.size()));
    if (!(header >> meta_len >> meta_hash) || meta_hash.size() != 64)
      throw IntegrityError(what + ": malformed header line");
  }
  const std::size_t meta_begin = line_end + 1;
  if (bytes.size() < meta_begin + meta_len + 1) throw IntegrityError(what + ": truncated metadata");
  const std::string text = bytes.substr(meta_begin, meta_len);
  if (sha256_hex(text) != meta_hash) throw IntegrityError(what + ": metadata checksum mismatch");
  if (bytes[meta_begin + meta_len] != '\n') throw IntegrityError(what + ": malformed metadata");
  const std::size_t blob_begin = meta_begin + meta_len + 1;

  Archive out;
  try {
    out.meta = json::parse(text);
    std::size_t offset = 0;
    for (const auto& m : out.meta.at("tensors")) {
      NamedTensor nt;
      nt.name = m.at("name").get<std::string>();
      const auto shape = m.at("shape").get<std::vector<int>>();
      for (int d : shape)
        if (d < 0) throw IntegrityError(what + ": negative dimension in '" + nt.name + "'");
      const std::size_t n = m.at("bytes").get<std::size_t>();
      if (m.at("offset").get<std::size_t>() != offset ||
          n != element_count(shape) * sizeof(float))
        throw IntegrityError(what + ": tensor '" + nt.name + "' has an inconsistent extent");
      if (bytes.size() < blob_begin + offset + n)
        throw IntegrityError(what + ": truncated at tensor '" + nt.name + "'");
      const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + blob_begin + offset);
      if (sha256_hex(std::span<const unsigned char>(raw, n)) != m.at("sha256").get<std::string>())
        throw IntegrityError(what + ": checksum mismatch in tensor '" + nt.name + "'");
      nt.tensor = Tensor(shape);
      std::memcpy(nt.tensor.data(), raw, n);
      out.tensors.push_back(std::move(nt));
      offset += n;
    }
    if (bytes.size() != blob_begin + offset)
      throw IntegrityError(what + ": trailing bytes after the last tensor");
  } catch (const json::exception& e) {
    throw IntegrityError(what + ": malformed metadata: " + e.what());
  }
  return out;
}

namespace {

std::vector<std::pair<std::string, Tensor*>> slots(TrainState& s) {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto collect = [&](const std::string& prefix, nn::ParamStore& store) {
    for (std::size_t i = 0; i < store.size(); ++i)
      out.emplace_back(prefix + store.names()[i], &store.tensors()[i]);
  };
  collect("encoder/param/", s.params.encoder);
  collect("decoder/param/", s.params.decoder);
  collect("discriminator/param/", s.params.discriminator);
  collect("encoder/adam_m/", s.optimizer.encoder.first_moment);
  collect("encoder/adam_v/", s.optimizer.encoder.second_moment);
  collect("decoder/adam_m/", s.optimizer.decoder.first_moment);
  collect("decoder/adam_v/", s.optimizer.decoder.second_moment);
  collect("discriminator/adam_m/", s.optimizer.discriminator.first_moment);
  collect("discriminator/adam_v/", s.optimizer.discriminator.second_moment);
  out.emplace_back("attribute_rows", &s.attribute_rows);
  return out;
}

}  // namespace

std::string serialize_checkpoint(const TrainState& state) {
  json meta;
  meta["format_version"] = kCheckpointFormatVersion;
  meta["config"] = state.config.to_json();
  meta["attribute_names"] = state.attribute_names;
  meta["iteration"] = state.iteration;
  std::ostringstream rng;
  rng << state.rng;
  meta["rng_state"] = rng.str();
  meta["optimizer_steps"] = {{"encoder", state.optimizer.encoder.step},
                             {"decoder", state.optimizer.decoder.step},
                             {"discriminator", state.optimizer.discriminator.step}};
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& [name, t] : slots(const_cast<TrainState&>(state))) tensors.emplace_back(name, t);
  return pack_archive(kCheckpointMagic, std::move(meta), tensors);
}

TrainState deserialize_checkpoint(const std::string& bytes) {
  Archive archive = unpack_archive(kCheckpointMagic, bytes);
  const json& meta = archive.meta;
  try {
    const int version = meta.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw VersionError("checkpoint: format version " + std::to_string(version) +
                         " is not supported (expected " +
                         std::to_string(kCheckpointFormatVersion) + ")");
    TrainState s;
    s.config = TrainConfig::from_json(meta.at("config"));
    s.attribute_names = meta.at("attribute_names").get<std::vector<std::string>>();
    if (static_cast<int>(s.attribute_names.size()) != s.config.attribute_count)
      throw IntegrityError("checkpoint: attribute schema inconsistent with config");
    const Model model(s.config.model_config());
    s.params = model.declare_params();
    s.optimizer = {AdamState::for_params(s.params.encoder), AdamState::for_params(s.params.decoder),
                   AdamState::for_params(s.params.discriminator)};
    s.iteration = meta.at("iteration").get<std::int64_t>();
    const auto& steps = meta.at("optimizer_steps");
    s.optimizer.encoder.step = steps.at("encoder").get<std::int64_t>();
    s.optimizer.decoder.step = steps.at("decoder").get<std::int64_t>();
    s.optimizer.discriminator.step = steps.at("discriminator").get<std::int64_t>();
    std::istringstream rng(meta.at("rng_state").get<std::string>());
    rng >> s.rng;
    if (rng.fail()) throw IntegrityError("checkpoint: unreadable rng state");

    auto expected = slots(s);
    if (archive.tensors.size() != expected.size())
      throw IntegrityError("checkpoint: manifest lists " + std::to_string(archive.tensors.size()) +
                           " tensors, expected " + std::to_string(expected.size()));
    for (std::size_t i = 0; i < expected.size(); ++i) {
      NamedTensor& got = archive.tensors[i];
      auto& [name, slot] = expected[i];
      if (got.name != name)
        throw IntegrityError("checkpoint: tensor " + std::to_string(i) + " is '" + got.name +
                             "', expected '" + name + "'");
      const bool rows = name == "attribute_rows";
      const bool shape_ok = rows ? got.tensor.rank() == 2 && got.tensor.dim(1) == s.config.attribute_count
                                 : got.tensor.shape() == slot->shape();
      if (!shape_ok)
        throw IntegrityError("checkpoint: tensor '" + name + "' has shape " +
                             shape_string(got.tensor.shape()) + ", expected " +
                             shape_string(slot->shape()));
      *slot = std::move(got.tensor);
    }
    return s;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint: malformed metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint: invalid config: ") + e.what());
  }
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(state);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_file_bytes(tmp, std::span<const std::uint8_t>(
                            reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const auto raw = read_file_bytes(path);
  return deserialize_checkpoint(std::string(raw.begin(), raw.end()));
}

std::string checkpoint_file_name(std::int64_t iteration) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "checkpoint-%08lld.slgan", static_cast<long long>(iteration));
  return buf;
}

}  // namespace slgan
