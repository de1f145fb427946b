#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "slgan/model.hpp"
#include "slgan/trainer.hpp"

namespace httplib {
class Server;
}

namespace slgan::service {

// Immutable view of one checkpoint; requests hold a shared_ptr for their whole lifetime.
struct Snapshot {
  TrainConfig config;
  std::vector<std::string> attribute_names;
  ModelParams params;
  Tensor attribute_rows;
  std::int64_t iteration = 0;
  std::string checkpoint_sha256;
  Model model;

  static std::shared_ptr<const Snapshot> from_state(const TrainState& state,
                                                    std::string checkpoint_sha256);
  static std::shared_ptr<const Snapshot> from_file(const std::filesystem::path& path);
};

struct ServiceOptions {
  std::size_t max_upload_bytes = 4u << 20;
  std::chrono::seconds token_ttl{1800};
  int max_count = 64;
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

class ServiceState {
 public:
  explicit ServiceState(std::shared_ptr<const Snapshot> snapshot, ServiceOptions options = {});

  std::shared_ptr<const Snapshot> snapshot() const;
  // Atomic: in-flight requests finish on the snapshot they started with.
  void swap(std::shared_ptr<const Snapshot> next);
  const ServiceOptions& options() const noexcept { return options_; }

  Response attributes();
  Response health();
  Response generate(const std::string& json_body);
  // image_png may be empty when reuse_z names a stored latent code.
  Response modify(const std::string& image_png, const std::string& attributes_json,
                  const std::string& reuse_z, const std::string& seed_text);

  std::uint64_t request_count() const noexcept { return requests_.load(); }
  std::uint64_t error_count() const noexcept { return errors_.load(); }
  std::size_t stored_latents() const;

 private:
  struct StoredLatent {
    std::vector<float> z;
    std::string snapshot_sha256;
    std::chrono::steady_clock::time_point expires;
  };
  std::string store_latent(std::vector<float> z, const std::string& sha);
  bool find_latent(const std::string& token, const std::string& sha, std::vector<float>& z);
  Response count_error(Response r);

  ServiceOptions options_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
  mutable std::mutex latent_mutex_;
  std::map<std::string, StoredLatent> latents_;
  std::atomic<std::uint64_t> requests_{0}, errors_{0};
};

Response error_response(int status, const std::string& code, const std::string& message);

// Routes: GET /attributes, GET /health, POST /generate, POST /modify (multipart).
void install_routes(httplib::Server& server, ServiceState& state);

// Blocks until the server stops. Returns false if the port could not be bound.
bool serve(ServiceState& state, const std::string& host, int port);

}  // namespace slgan::service
