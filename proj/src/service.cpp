#include "slgan/service.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <cstdio>

#include "httplib.h"
#include "slgan/attributes.hpp"
#include "slgan/checkpoint.hpp"
#include "slgan/error.hpp"
#include "slgan/hash.hpp"
#include "slgan/image_io.hpp"
#include "slgan/version.hpp"

namespace slgan::service {

using nlohmann::json;

std::shared_ptr<const Snapshot> Snapshot::from_state(const TrainState& s, std::string sha) {
  return std::make_shared<const Snapshot>(Snapshot{s.config, s.attribute_names, s.params,
                                                   s.attribute_rows, s.iteration, std::move(sha),
                                                   Model(s.config.model_config())});
}

std::shared_ptr<const Snapshot> Snapshot::from_file(const std::filesystem::path& path) {
  const auto raw = read_file_bytes(path);
  const std::string bytes(raw.begin(), raw.end());
  return from_state(deserialize_checkpoint(bytes), sha256_hex(bytes));
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw InputError("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out(text.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw InputError("base64: invalid input");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

Response error_response(int status, const std::string& code, const std::string& message) {
  return {status, json{{"error", {{"code", code}, {"message", message}}}}};
}

ServiceState::ServiceState(std::shared_ptr<const Snapshot> snapshot, ServiceOptions options)
    : options_(options), snapshot_(std::move(snapshot)) {
  if (!snapshot_) throw ConfigError("service needs a checkpoint snapshot");
}

std::shared_ptr<const Snapshot> ServiceState::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

void ServiceState::swap(std::shared_ptr<const Snapshot> next) {
  if (!next) throw ConfigError("service needs a checkpoint snapshot");
  std::lock_guard lock(snapshot_mutex_);
  snapshot_ = std::move(next);
}

std::size_t ServiceState::stored_latents() const {
  std::lock_guard lock(latent_mutex_);
  return latents_.size();
}

std::string ServiceState::store_latent(std::vector<float> z, const std::string& sha) {
  unsigned char raw[16];
  if (RAND_bytes(raw, sizeof raw) != 1) throw std::runtime_error("token generation failed");
  std::string token(32, '0');
  for (int i = 0; i < 16; ++i) std::snprintf(&token[static_cast<std::size_t>(i) * 2], 3, "%02x", raw[i]);
  const auto now = std::chrono::steady_clock::now();
  std::lock_guard lock(latent_mutex_);
  std::erase_if(latents_, [&](const auto& kv) { return kv.second.expires <= now; });
  latents_[token] = {std::move(z), sha, now + options_.token_ttl};
  return token;
}

bool ServiceState::find_latent(const std::string& token, const std::string& sha,
                               std::vector<float>& z) {
  const auto now = std::chrono::steady_clock::now();
  std::lock_guard lock(latent_mutex_);
  const auto it = latents_.find(token);
  if (it == latents_.end()) return false;
  if (it->second.expires <= now || it->second.snapshot_sha256 != sha) {
    latents_.erase(it);
    return false;
  }
  it->second.expires = now + options_.token_ttl;
  z = it->second.z;
  return true;
}

Response ServiceState::count_error(Response r) {
  if (r.status >= 400) ++errors_;
  return r;
}

Response ServiceState::attributes() {
  ++requests_;
  const auto snap = snapshot();
  return {200, json{{"attributes", snap->attribute_names}}};
}

Response ServiceState::health() {
  ++requests_;
  const auto snap = snapshot();
  return {200, json{{"status", "ok"},
                    {"version", kVersion},
                    {"checkpoint_sha256", snap->checkpoint_sha256},
                    {"iteration", snap->iteration},
                    {"requests", requests_.load()},
                    {"errors", errors_.load()}}};
}

namespace {

std::vector<float> row_of(const Tensor& t, int i) {
  const int w = t.dim(1);
  return {t.data() + static_cast<std::size_t>(i) * w, t.data() + static_cast<std::size_t>(i + 1) * w};
}

std::string png_base64(const Tensor& batch, int i) {
  const auto png = encode_png(batch_image(batch, i));
  return base64_encode(png);
}

bool parse_seed(const json& v, std::uint64_t& seed) {
  if (v.is_null()) return true;
  if (!v.is_number_unsigned()) return false;
  seed = v.get<std::uint64_t>();
  return true;
}

}  // namespace

Response ServiceState::generate(const std::string& body_text) {
  ++requests_;
  const auto snap = snapshot();
  json body;
  try {
    body = body_text.empty() ? json::object() : json::parse(body_text);
  } catch (const json::exception&) {
    return count_error(error_response(400, "invalid_json", "request body is not valid JSON"));
  }
  if (!body.is_object())
    return count_error(error_response(400, "invalid_body", "request body must be a JSON object"));
  for (const auto& [key, v] : body.items()) {
    if (key != "attributes" && key != "count" && key != "seed")
      return count_error(error_response(400, "unknown_field", "unknown field '" + key + "'"));
  }
  int count = 1;
  if (body.contains("count")) {
    const auto& c = body["count"];
    if (!c.is_number_integer() || c.get<long long>() < 1 || c.get<long long>() > options_.max_count)
      return count_error(error_response(
          400, "invalid_count", "count must be an integer in [1, " + std::to_string(options_.max_count) + "]"));
    count = c.get<int>();
  }
  std::uint64_t seed = 0;
  if (!parse_seed(body.value("seed", json()), seed))
    return count_error(error_response(400, "invalid_seed", "seed must be a non-negative integer"));
  PartialAttributes partial;
  try {
    partial = parse_attribute_json(body.value("attributes", json()), snap->attribute_names);
  } catch (const UnknownAttribute& e) {
    return count_error({400, json{{"error", {{"code", "unknown_attribute"},
                                             {"message", e.what()},
                                             {"attribute", e.name()},
                                             {"valid", snap->attribute_names}}}}});
  } catch (const ConfigError& e) {
    return count_error(error_response(400, "invalid_attributes", e.what()));
  }

  std::mt19937_64 rng(seed);
  const Tensor z = standard_normal(count, snap->config.latent_dim, rng);
  const Tensor y = fill_attributes(partial, snap->attribute_rows, count, rng);
  const ImageBatch images = snap->model.decode(snap->params, LatentBatch{z}, AttributeBatch{y});
  json out{{"images", json::array()}, {"z", json::array()}, {"attributes", json::array()},
           {"seed", seed}, {"count", count}};
  for (int i = 0; i < count; ++i) {
    out["images"].push_back(png_base64(images.pixels, i));
    out["z"].push_back(row_of(z, i));
    out["attributes"].push_back(row_of(y, i));
  }
  return {200, out};
}

Response ServiceState::modify(const std::string& image_png, const std::string& attributes_json,
                              const std::string& reuse_z, const std::string& seed_text) {
  ++requests_;
  const auto snap = snapshot();
  const ModelConfig mc = snap->config.model_config();
  std::uint64_t seed = 0;
  if (!seed_text.empty()) {
    try {
      std::size_t used = 0;
      seed = std::stoull(seed_text, &used);
      if (used != seed_text.size() || seed_text[0] == '-') throw std::invalid_argument("seed");
    } catch (const std::exception&) {
      return count_error(error_response(400, "invalid_seed", "seed must be a non-negative integer"));
    }
  }
  PartialAttributes partial;
  try {
    const json map = attributes_json.empty() ? json() : json::parse(attributes_json);
    partial = parse_attribute_json(map, snap->attribute_names);
  } catch (const json::exception&) {
    return count_error(error_response(400, "invalid_json", "attributes is not valid JSON"));
  } catch (const UnknownAttribute& e) {
    return count_error({400, json{{"error", {{"code", "unknown_attribute"},
                                             {"message", e.what()},
                                             {"attribute", e.name()},
                                             {"valid", snap->attribute_names}}}}});
  } catch (const ConfigError& e) {
    return count_error(error_response(400, "invalid_attributes", e.what()));
  }

  std::vector<float> z;
  std::string token;
  if (!reuse_z.empty()) {
    if (!find_latent(reuse_z, snap->checkpoint_sha256, z))
      return count_error(error_response(400, "unknown_token",
                                        "reuse_z token is unknown or has expired"));
    token = reuse_z;
  } else {
    if (image_png.empty())
      return count_error(error_response(400, "missing_image", "an image file or reuse_z is required"));
    RasterImage raster;
    try {
      raster = decode_png(std::span<const std::uint8_t>(
          reinterpret_cast<const std::uint8_t*>(image_png.data()), image_png.size()));
    } catch (const InputError& e) {
      return count_error(error_response(422, "undecodable_image", e.what()));
    }
    if (raster.width != mc.image_size || raster.height != mc.image_size)
      return count_error(error_response(
          422, "image_shape",
          "image is " + std::to_string(raster.width) + "x" + std::to_string(raster.height) +
              ", the model expects " + std::to_string(mc.image_size) + "x" +
              std::to_string(mc.image_size)));
    if (raster.channels != mc.channels) {
      if (raster.channels == 1 && mc.channels == 3) {
        RasterImage rgb{raster.width, raster.height, 3, {}};
        for (auto v : raster.pixels) rgb.pixels.insert(rgb.pixels.end(), 3, v);
        raster = std::move(rgb);
      } else {
        return count_error(error_response(422, "image_shape",
                                          "image has " + std::to_string(raster.channels) +
                                              " channels, the model expects " +
                                              std::to_string(mc.channels)));
      }
    }
    const Tensor x = raster_to_tensor(raster).reshaped({1, mc.channels, mc.image_size, mc.image_size});
    const GaussianPosterior post = snap->model.encode(snap->params, ImageBatch{x});
    z.assign(post.mu.data(), post.mu.data() + post.mu.size());
    token = store_latent(z, snap->checkpoint_sha256);
  }

  std::mt19937_64 rng(seed);
  const Tensor y = fill_attributes(partial, snap->attribute_rows, 1, rng);
  const Tensor zt({1, mc.latent_dim}, z);
  const ImageBatch out = snap->model.decode(snap->params, LatentBatch{zt}, AttributeBatch{y});
  return {200, json{{"image", png_base64(out.pixels, 0)},
                    {"reuse_z", token},
                    {"z", z},
                    {"attributes", row_of(y, 0)}}};
}

namespace {

void send(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

void install_routes(httplib::Server& server, ServiceState& state) {
  server.set_payload_max_length(state.options().max_upload_bytes);
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Get("/attributes", [&](const httplib::Request&, httplib::Response& res) {
    send(res, state.attributes());
  });
  server.Get("/health", [&](const httplib::Request&, httplib::Response& res) {
    send(res, state.health());
  });
  server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    send(res, state.generate(req.body));
  });
  server.Post("/modify", [&](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) {
      send(res, error_response(400, "expected_multipart",
                               "POST /modify takes multipart/form-data (image, attributes, reuse_z)"));
      return;
    }
    auto field = [&](const char* name) {
      return req.has_file(name) ? req.get_file_value(name).content : std::string();
    };
    send(res, state.modify(field("image"), field("attributes"), field("reuse_z"), field("seed")));
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    const std::string code = res.status == 413 ? "payload_too_large"
                             : res.status == 404 ? "not_found"
                                                 : "http_" + std::to_string(res.status);
    res.set_content(error_response(res.status, code, httplib::status_message(res.status)).body.dump(),
                    "application/json");
    return httplib::Server::HandlerResponse::Handled;
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                  std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send(res, error_response(500, "internal_error", what));
  });
}

bool serve(ServiceState& state, const std::string& host, int port) {
  httplib::Server server;
  install_routes(server, state);
  return server.listen(host, port);
}

}  // namespace slgan::service
