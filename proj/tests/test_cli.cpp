#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "slgan/checkpoint.hpp"
#include "slgan/cli.hpp"
#include "slgan/eval.hpp"
#include "slgan/image_io.hpp"

namespace fs = std::filesystem;
using namespace slgan;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "slgan");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

struct Workspace {
  fs::path root = fs::temp_directory_path() / "slgan_test_cli";
  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string operator/(const std::string& name) const { return (root / name).string(); }
};

const char* kSmallConfig = R"({"image_size": 16, "latent_dim": 8, "batch_size": 4, "iterations": 2})";

}  // namespace

TEST_CASE("cli synth") {
  Workspace ws;
  auto r = cli({"synth", "--out", ws / "a", "--count", "100", "--seed", "3", "--size", "16"});
  REQUIRE(r.code == 0);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(ws / "a")) pngs += e.path().extension() == ".png";
  CHECK(pngs == 100);
  const std::string table = slurp(fs::path(ws / "a") / "attributes.csv");
  CHECK(count_lines(table) == 101);
  CHECK(table.rfind("filename,skin_dark,hair_dark,glasses,smiling,hat,facial_hair\n", 0) == 0);

  REQUIRE(cli({"synth", "--out", ws / "b", "--count", "100", "--seed", "3", "--size", "16"}).code == 0);
  CHECK(slurp(fs::path(ws / "b") / "attributes.csv") == table);
  CHECK(slurp(fs::path(ws / "b") / "000042.png") == slurp(fs::path(ws / "a") / "000042.png"));

  CHECK(cli({"synth", "--out", ws / "c", "--size", "20"}).code == 2);
  CHECK(cli({"synth"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
}

TEST_CASE("cli train, generate, modify") {
  Workspace ws;
  REQUIRE(cli({"synth", "--out", ws / "data", "--count", "40", "--seed", "1", "--size", "16"}).code == 0);
  spit(ws / "cfg.json", kSmallConfig);

  SUBCASE("bad config key exits 2 and names the key") {
    spit(ws / "bad.json", R"({"image_size": 16, "learning_rat": 0.1})");
    const auto r = cli({"train", "--data", ws / "data", "--config", ws / "bad.json", "--out", ws / "run"});
    CHECK(r.code == 2);
    CHECK(r.err.find("learning_rat") != std::string::npos);

    spit(ws / "neg.json", R"({"image_size": 16, "batch_size": -4})");
    const auto n = cli({"train", "--data", ws / "data", "--config", ws / "neg.json", "--out", ws / "run"});
    CHECK(n.code == 2);
    CHECK(n.err.find("batch_size") != std::string::npos);
  }

  SUBCASE("zero iterations still writes a checkpoint") {
    const auto r = cli({"train", "--data", ws / "data", "--config", ws / "cfg.json", "--out", ws / "run",
                        "--iterations", "0"});
    REQUIRE(r.code == 0);
    const TrainState s = load_checkpoint(fs::path(ws / "run") / "final.slgan");
    CHECK(s.iteration == 0);
  }

  SUBCASE("missing data directory") {
    const auto r = cli({"train", "--data", ws / "nothing", "--config", ws / "cfg.json", "--out", ws / "run"});
    CHECK(r.code == 1);
  }

  SUBCASE("full flow") {
    auto r = cli({"train", "--data", ws / "data", "--config", ws / "cfg.json", "--out", ws / "run"});
    REQUIRE(r.code == 0);
    const fs::path run(ws / "run");
    CHECK(fs::exists(run / "config.json"));
    CHECK(count_lines(slurp(run / "metrics.log")) == 2);
    const std::string ckpt = (run / "final.slgan").string();

    // Resume to 3 appends one line.
    r = cli({"train", "--data", ws / "data", "--resume", ckpt, "--out", ws / "run", "--iterations", "3"});
    REQUIRE(r.code == 0);
    CHECK(count_lines(slurp(run / "metrics.log")) == 3);

    r = cli({"generate", "--checkpoint", ckpt, "--out", ws / "gen", "--count", "16", "--seed", "4",
             "--attr", "glasses=1", "--grid", "4x4"});
    REQUIRE(r.code == 0);
    const std::string table = slurp(fs::path(ws / "gen") / "attributes.csv");
    CHECK(count_lines(table) == 17);
    std::istringstream lines(table);
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) CHECK(line.substr(15, 1) == "1");
    const RasterImage grid = read_png(fs::path(ws / "gen") / "grid.png");
    CHECK(grid.width == 4 * (16 + 1) + 1);

    r = cli({"generate", "--checkpoint", ckpt, "--out", ws / "gen2", "--attr", "monocle=1"});
    CHECK(r.code == 2);
    CHECK(r.err.find("monocle") != std::string::npos);
    CHECK(r.err.find("facial_hair") != std::string::npos);

    CHECK(cli({"generate", "--checkpoint", ckpt, "--out", ws / "gen3", "--count", "4", "--grid", "4x4"}).code == 2);

    r = cli({"modify", "--checkpoint", ckpt, "--image", (fs::path(ws / "data") / "000003.png").string(),
             "--out", ws / "m.png", "--attr", "hat=1"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("hat=1") != std::string::npos);
    CHECK(read_png(ws / "m.png").width == 16);

    CHECK(cli({"modify", "--checkpoint", ckpt, "--image", (fs::path(ws / "data") / "000003.png").string(),
               "--out", ws / "m2.png", "--noise", "fuzzy"})
              .code == 2);

    // An untrained probe fails its gate before any metric is reported.
    eval::ProbeClassifier(16, 3, 6).save(ws / "probe.slgan");
    r = cli({"eval", "--checkpoint", ckpt, "--data", ws / "data", "--probe", ws / "probe.slgan"});
    CHECK(r.code == 1);
    CHECK(r.err.find("probe gate") != std::string::npos);

    // Corrupt checkpoint.
    auto bytes = read_file_bytes(ckpt);
    bytes[bytes.size() / 2] ^= 1;
    write_file_bytes(ws / "bad.slgan", bytes);
    r = cli({"generate", "--checkpoint", ws / "bad.slgan", "--out", ws / "gen4"});
    CHECK(r.code == 1);
  }
}

TEST_CASE("cli binary exit codes") {
  const std::string bin = SLGAN_CLI_PATH;
  CHECK(std::system((bin + " --version > /dev/null").c_str()) == 0);
  const int rc = std::system((bin + " synth > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(rc) == 2);
}
