#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "slgan/data.hpp"
#include "slgan/image_io.hpp"
#include "slgan/service.hpp"
#include "slgan/version.hpp"

using namespace slgan;
using namespace slgan::service;
using nlohmann::json;

namespace {

std::shared_ptr<const Snapshot> make_snapshot(std::uint64_t seed, const std::string& sha) {
  TrainConfig c;
  c.image_size = 16;
  c.latent_dim = 8;
  c.seed = seed;
  const auto ds = data::sample_dataset(30, 2, 16);
  const TrainState st = init_state(c, ds.manifest.attribute_names, ds.labels);
  return Snapshot::from_state(st, sha);
}

std::string png_string(const RasterImage& r) {
  const auto bytes = encode_png(r);
  return {bytes.begin(), bytes.end()};
}

std::string face_png(int size, int channels = 3) {
  const auto ds = data::sample_dataset(1, 4, size);
  RasterImage r = batch_image(ds.images, 0);
  if (channels == 1) {
    RasterImage g{r.width, r.height, 1, {}};
    for (std::size_t i = 0; i < r.pixels.size(); i += 3) g.pixels.push_back(r.pixels[i]);
    return png_string(g);
  }
  return png_string(r);
}

std::string error_code(const Response& r) { return r.body["error"]["code"].get<std::string>(); }

}  // namespace

TEST_CASE("base64 round trip") {
  const std::vector<std::uint8_t> data{0, 1, 2, 250, 255, 'a', 'b'};
  for (std::size_t n = 0; n <= data.size(); ++n) {
    std::span<const std::uint8_t> part(data.data(), n);
    CHECK(base64_decode(base64_encode(part)) == std::vector<std::uint8_t>(part.begin(), part.end()));
  }
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}) == "TWFu");
}

TEST_CASE("attributes and health") {
  ServiceState s(make_snapshot(1, "abc"));
  const auto a = s.attributes();
  CHECK(a.status == 200);
  CHECK(a.body["attributes"] == json(data::synthetic_attribute_names()));
  const auto h = s.health();
  CHECK(h.body["status"] == "ok");
  CHECK(h.body["version"] == kVersion);
  CHECK(h.body["checkpoint_sha256"] == "abc");
  CHECK(h.body["requests"].get<int>() >= 1);
}

TEST_CASE("generate") {
  ServiceState s(make_snapshot(1, "abc"));
  const auto r1 = s.generate(R"({"attributes": {"glasses": 1, "smiling": null}, "count": 3, "seed": 42})");
  REQUIRE(r1.status == 200);
  CHECK(r1.body["images"].size() == 3);
  CHECK(r1.body["z"].size() == 3);
  CHECK(r1.body["z"][0].size() == 8);
  CHECK(r1.body["seed"] == 42);
  const int glasses = 2;
  for (const auto& row : r1.body["attributes"]) {
    CHECK(row.size() == 6);
    CHECK(row[glasses] == 1.0);
  }
  const auto png = base64_decode(r1.body["images"][0].get<std::string>());
  const RasterImage img = decode_png(png);
  CHECK(img.width == 16);
  CHECK(img.channels == 3);

  // Same seed, same bytes.
  const auto r2 = s.generate(R"({"attributes": {"glasses": 1, "smiling": null}, "count": 3, "seed": 42})");
  CHECK(r2.body == r1.body);
  const auto r3 = s.generate(R"({"attributes": {"glasses": 1}, "count": 3, "seed": 43})");
  CHECK(r3.body["images"] != r1.body["images"]);

  CHECK(s.generate("{}").status == 200);
  CHECK(s.generate("").status == 200);
}

TEST_CASE("generate errors") {
  ServiceState s(make_snapshot(1, "abc"));
  CHECK(error_code(s.generate("{nope")) == "invalid_json");
  CHECK(error_code(s.generate("[1]")) == "invalid_body");
  CHECK(error_code(s.generate(R"({"colour": 1})")) == "unknown_field");
  CHECK(error_code(s.generate(R"({"count": 0})")) == "invalid_count");
  CHECK(error_code(s.generate(R"({"count": 65})")) == "invalid_count");
  CHECK(error_code(s.generate(R"({"count": 1.5})")) == "invalid_count");
  CHECK(error_code(s.generate(R"({"seed": -1})")) == "invalid_seed");
  CHECK(error_code(s.generate(R"({"attributes": {"glasses": 2}})")) == "invalid_attributes");
  const auto u = s.generate(R"({"attributes": {"moustache": 1}})");
  CHECK(u.status == 400);
  CHECK(error_code(u) == "unknown_attribute");
  CHECK(u.body["error"]["attribute"] == "moustache");
  CHECK(u.body["error"]["valid"] == json(data::synthetic_attribute_names()));
  CHECK(s.error_count() == 9);
}

TEST_CASE("modify and reuse_z") {
  ServiceState s(make_snapshot(1, "abc"));
  const auto r1 = s.modify(face_png(16), R"({"glasses": 1, "hat": 0})", "", "5");
  REQUIRE(r1.status == 200);
  const std::string token = r1.body["reuse_z"];
  CHECK(token.size() >= 32);
  CHECK(s.stored_latents() == 1);

  // The token stands in for the upload.
  const auto r2 = s.modify("", R"({"glasses": 1, "hat": 0})", token, "5");
  REQUIRE(r2.status == 200);
  CHECK(r2.body["image"] == r1.body["image"]);
  CHECK(r2.body["z"] == r1.body["z"]);

  const auto r3 = s.modify("", R"({"glasses": 0, "hat": 1})", token, "5");
  CHECK(r3.body["z"] == r1.body["z"]);
  CHECK(r3.body["image"] != r1.body["image"]);

  // Grayscale input is accepted.
  CHECK(s.modify(face_png(16, 1), "{}", "", "").status == 200);

  // A swapped snapshot invalidates old tokens.
  s.swap(make_snapshot(2, "def"));
  CHECK(error_code(s.modify("", "{}", token, "")) == "unknown_token");
  CHECK(s.health().body["checkpoint_sha256"] == "def");
}

TEST_CASE("modify errors") {
  ServiceState s(make_snapshot(1, "abc"));
  CHECK(error_code(s.modify("", "{}", "", "")) == "missing_image");
  CHECK(error_code(s.modify("", "{}", "bogus", "")) == "unknown_token");
  const auto bad = s.modify("not a png", "{}", "", "");
  CHECK(bad.status == 422);
  CHECK(error_code(bad) == "undecodable_image");
  const auto wrong = s.modify(face_png(32), "{}", "", "");
  CHECK(wrong.status == 422);
  CHECK(error_code(wrong) == "image_shape");
  CHECK(error_code(s.modify(face_png(16), "{x", "", "")) == "invalid_json");
  CHECK(error_code(s.modify(face_png(16), R"({"beard": 1})", "", "")) == "unknown_attribute");
  CHECK(error_code(s.modify(face_png(16), "{}", "", "-3")) == "invalid_seed");
}

TEST_CASE("http routes") {
  ServiceOptions opt;
  opt.max_upload_bytes = 64 * 1024;
  ServiceState s(make_snapshot(1, "abc"), opt);
  httplib::Server server;
  install_routes(server, s);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto a = cli.Get("/attributes");
  REQUIRE(a);
  CHECK(a->status == 200);
  CHECK(json::parse(a->body)["attributes"].size() == 6);
  CHECK(a->get_header_value("Content-Type").find("application/json") != std::string::npos);
  CHECK(a->get_header_value("Access-Control-Allow-Origin") == "*");

  auto g = cli.Post("/generate", R"({"count": 2, "seed": 1})", "application/json");
  REQUIRE(g);
  CHECK(g->status == 200);
  CHECK(json::parse(g->body)["images"].size() == 2);

  auto u = cli.Post("/generate", R"({"attributes": {"cape": 1}})", "application/json");
  REQUIRE(u);
  CHECK(u->status == 400);
  CHECK(json::parse(u->body)["error"]["code"] == "unknown_attribute");

  httplib::MultipartFormDataItems items{{"image", face_png(16), "face.png", "image/png"},
                                        {"attributes", R"({"glasses": 1})", "", ""},
                                        {"seed", "3", "", ""}};
  auto m = cli.Post("/modify", items);
  REQUIRE(m);
  CHECK(m->status == 200);
  const std::string token = json::parse(m->body)["reuse_z"];
  httplib::MultipartFormDataItems again{{"reuse_z", token, "", ""},
                                        {"attributes", R"({"glasses": 0})", "", ""}};
  auto m2 = cli.Post("/modify", again);
  REQUIRE(m2);
  CHECK(m2->status == 200);

  httplib::MultipartFormDataItems huge{{"image", std::string(200 * 1024, 'x'), "big.png", "image/png"}};
  auto big = cli.Post("/modify", huge);
  REQUIRE(big);
  CHECK(big->status == 413);
  CHECK(json::parse(big->body)["error"]["code"] == "payload_too_large");

  auto nf = cli.Get("/nowhere");
  REQUIRE(nf);
  CHECK(nf->status == 404);
  CHECK(json::parse(nf->body)["error"]["code"] == "not_found");

  auto h = cli.Get("/health");
  REQUIRE(h);
  CHECK(json::parse(h->body)["errors"].get<int>() >= 1);

  server.stop();
  t.join();
}
