#include "slgan/cli.hpp"

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "slgan/attributes.hpp"
#include "slgan/checkpoint.hpp"
#include "slgan/data.hpp"
#include "slgan/error.hpp"
#include "slgan/eval.hpp"
#include "slgan/hash.hpp"
#include "slgan/image_io.hpp"
#include "slgan/service.hpp"
#include "slgan/trainer.hpp"
#include "slgan/version.hpp"

namespace slgan {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::atomic<bool> g_interrupted{false};

extern "C" void on_interrupt(int) { g_interrupted = true; }

struct Interrupted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GridSpec {
  int rows = 0, cols = 0;
};

GridSpec parse_grid(const std::string& text) {
  GridSpec g;
  char x = 0;
  std::istringstream in(text);
  if (!(in >> g.rows >> x >> g.cols) || (x != 'x' && x != 'X') || g.rows < 1 || g.cols < 1 ||
      !in.eof())
    throw ConfigError("--grid must look like RxC, e.g. 4x4; got '" + text + "'");
  return g;
}

fs::path table_for(const fs::path& data_dir, const std::string& table) {
  return table.empty() ? data_dir / data::kAttributeTableName : fs::path(table);
}

TrainConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  TrainConfig c = TrainConfig::from_json(j);
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
  std::string out;
  int count = 10000;
  std::uint64_t seed = 1;
  int size = 32;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const data::Dataset ds = data::sample_dataset(a.count, a.seed, a.size);
  data::save_dataset(ds, a.out);
  out << "wrote " << ds.size() << " images and " << data::kAttributeTableName << " to " << a.out
      << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string data, table, config, out, resume;
  std::optional<std::int64_t> iterations;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  TrainState state;
  bool resuming = !a.resume.empty();
  if (resuming) {
    if (!a.config.empty()) throw ConfigError("--config cannot be combined with --resume");
    if (a.seed) throw ConfigError("--seed cannot be combined with --resume");
    state = load_checkpoint(a.resume);
    if (a.iterations) {
      state.config.iterations = *a.iterations;
      state.config.validate();
    }
  }
  TrainConfig config;
  if (!resuming) {
    if (!a.config.empty()) config = read_config(a.config);
    if (a.iterations) config.iterations = *a.iterations;
    if (a.seed) config.seed = *a.seed;
    config.validate();
  }
  const data::Dataset ds = data::load_image_directory(a.data, table_for(a.data, a.table));
  if (!resuming) {
    if (ds.manifest.attribute_count() != config.attribute_count)
      throw ConfigError("dataset has K=" + std::to_string(ds.manifest.attribute_count()) +
                        " attributes but config attribute_count is " +
                        std::to_string(config.attribute_count));
    state = init_state(config, ds.manifest.attribute_names,
                       ds.labels.rows(ds.manifest.train.begin, ds.manifest.train.end));
  }
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "config.json", state.config.to_json().dump(2) + "\n");
  std::ofstream metrics(fs::path(a.out) / "metrics.log", resuming ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot open metrics log in '" + a.out + "'");

  TrainOptions options;
  options.metrics = &metrics;
  options.checkpoint_dir = fs::path(a.out);
  options.on_iteration = [&](const TrainState& s, const IterationReport& r) {
    if (r.iteration % 100 == 0 || r.iteration == s.config.iterations) {
      out << "iteration " << r.iteration << "/" << s.config.iterations
          << " recon_pixel=" << eval::format_number(r.reconstruction.recon_pixel)
          << " gan_d=" << eval::format_number(r.generation.gan_d) << '\n';
      out.flush();
    }
    if (g_interrupted) {
      const fs::path p = fs::path(a.out) / checkpoint_file_name(s.iteration);
      save_checkpoint(s, p);
      throw Interrupted("interrupted after iteration " + std::to_string(s.iteration) +
                        "; resume with --resume " + p.string());
    }
  };
  g_interrupted = false;
  auto previous = std::signal(SIGINT, on_interrupt);
  try {
    train(state, ds, options);
  } catch (...) {
    std::signal(SIGINT, previous);
    throw;
  }
  std::signal(SIGINT, previous);
  out << "final checkpoint " << (fs::path(a.out) / "final.slgan").string() << " at iteration "
      << state.iteration << '\n';
  return kExitOk;
}

// --------------------------------------------------------------- generate

struct GenerateArgs {
  std::string checkpoint, out, grid;
  std::vector<std::string> attrs;
  int count = 16;
  std::uint64_t seed = 0;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  std::optional<GridSpec> grid;
  if (!a.grid.empty()) {
    grid = parse_grid(a.grid);
    if (grid->rows * grid->cols > a.count)
      throw ConfigError("--grid " + a.grid + " needs at least " +
                        std::to_string(grid->rows * grid->cols) + " images; --count is " +
                        std::to_string(a.count));
  }
  if (a.count < 1) throw ConfigError("--count must be >= 1");
  const TrainState s = load_checkpoint(a.checkpoint);
  const PartialAttributes partial = parse_attribute_pairs(a.attrs, s.attribute_names);
  const Model model(s.config.model_config());
  std::mt19937_64 rng(a.seed);
  const Tensor z = standard_normal(a.count, s.config.latent_dim, rng);
  const Tensor y = fill_attributes(partial, s.attribute_rows, a.count, rng);
  const ImageBatch images = model.decode(s.params, LatentBatch{z}, AttributeBatch{y});
  fs::create_directories(a.out);
  std::ostringstream table;
  table << "filename";
  for (const auto& n : s.attribute_names) table << ',' << n;
  table << '\n';
  for (int i = 0; i < a.count; ++i) {
    const std::string name = data::image_file_name(i);
    write_png(fs::path(a.out) / name, batch_image(images.pixels, i));
    table << name;
    for (int j = 0; j < s.config.attribute_count; ++j)
      table << ',' << (y.data()[i * s.config.attribute_count + j] > 0.5f ? 1 : 0);
    table << '\n';
  }
  write_text(fs::path(a.out) / data::kAttributeTableName, table.str());
  if (grid) write_png(fs::path(a.out) / "grid.png", contact_sheet(images.pixels, grid->rows, grid->cols));
  out << "wrote " << a.count << " images to " << a.out << (grid ? " (with grid.png)" : "") << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------- modify

struct ModifyArgs {
  std::string checkpoint, image, out, noise = "mean";
  std::vector<std::string> attrs;
  std::uint64_t seed = 0;
};

int cmd_modify(const ModifyArgs& a, std::ostream& out) {
  const NoiseMode mode = parse_noise_mode(a.noise);
  const TrainState s = load_checkpoint(a.checkpoint);
  const PartialAttributes partial = parse_attribute_pairs(a.attrs, s.attribute_names);
  const ModelConfig mc = s.config.model_config();
  const RasterImage raster = read_png(a.image);
  if (raster.width != mc.image_size || raster.height != mc.image_size || raster.channels != mc.channels)
    throw InputError("image '" + a.image + "' is " + std::to_string(raster.width) + "x" +
                     std::to_string(raster.height) + "x" + std::to_string(raster.channels) +
                     ", the model expects " + std::to_string(mc.image_size) + "x" +
                     std::to_string(mc.image_size) + "x" + std::to_string(mc.channels));
  const Tensor x = raster_to_tensor(raster).reshaped({1, mc.channels, mc.image_size, mc.image_size});
  std::mt19937_64 rng(a.seed);
  const Tensor y = fill_attributes(partial, s.attribute_rows, 1, rng);
  const Model model(mc);
  const ImageBatch result = modify(model, s.params, ImageBatch{x}, AttributeBatch{y}, mode, a.seed);
  const fs::path dest(a.out);
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  write_png(dest, batch_image(result.pixels, 0));
  out << "wrote " << a.out << " attributes";
  for (int j = 0; j < mc.attribute_count; ++j)
    out << ' ' << s.attribute_names[static_cast<std::size_t>(j)] << '=' << (y[static_cast<std::size_t>(j)] > 0.5f ? 1 : 0);
  out << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint, data, table, probe, save_probe, out;
  eval::EvaluationOptions options;
  std::uint64_t probe_seed = 7;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const TrainState s = load_checkpoint(a.checkpoint);
  const data::Dataset ds = data::load_image_directory(a.data, table_for(a.data, a.table));
  if (ds.manifest.attribute_names != s.attribute_names)
    throw ConfigError("dataset attribute schema differs from the checkpoint's");
  const eval::ProbeClassifier probe =
      a.probe.empty() ? eval::train_probe(ds, a.probe_seed) : eval::ProbeClassifier::load(a.probe);
  if (probe.gate_min() < eval::kProbeGate)
    throw GateFailure("probe gate not met (" + eval::format_number(probe.gate_min()) + ")");
  if (!a.save_probe.empty()) probe.save(a.save_probe);
  const Model model(s.config.model_config());
  const eval::EvaluationSummary summary =
      eval::evaluate(model, s.params, s.attribute_names, s.attribute_rows, ds, probe, a.options);
  std::string text = eval::format_record({{"metric", "checkpoint"},
                                          {"iteration", std::to_string(s.iteration)},
                                          {"sha256", sha256_hex([&] {
                                             const auto raw = read_file_bytes(a.checkpoint);
                                             return std::string(raw.begin(), raw.end());
                                           }())}}) +
                     "\n";
  for (const auto& line : summary.records) text += line + "\n";
  out << text;
  if (!a.out.empty()) write_text(a.out, text);
  return kExitOk;
}

// ------------------------------------------------------------------ serve

struct ServeArgs {
  std::string checkpoint, host = "127.0.0.1";
  int port = 8080;
  std::size_t max_upload = 4u << 20;
};

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  service::ServiceOptions opt;
  opt.max_upload_bytes = a.max_upload;
  service::ServiceState state(service::Snapshot::from_file(a.checkpoint), opt);
  out << "serving " << a.checkpoint << " on http://" << a.host << ':' << a.port << '\n';
  out.flush();
  if (!service::serve(state, a.host, a.port))
    throw std::runtime_error("cannot listen on " + a.host + ":" + std::to_string(a.port));
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-latent attribute GAN: data synthesis, training, inference, evaluation"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Render a synthetic face dataset to a directory");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--count", synth.count, "Number of images")->check(CLI::PositiveNumber);
  c_synth->add_option("--seed", synth.seed, "Random seed");
  c_synth->add_option("--size", synth.size, "Image size")->check(CLI::IsMember({16, 32, 64}));

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train from an image directory");
  c_train->add_option("--data", train.data, "Image directory")->required();
  c_train->add_option("--table", train.table, "Attribute table (default <data>/attributes.csv)");
  c_train->add_option("--config", train.config, "JSON training config");
  c_train->add_option("--out", train.out, "Output directory (checkpoints, metrics.log)")->required();
  c_train->add_option("--resume", train.resume, "Continue from a checkpoint");
  c_train->add_option("--iterations", train.iterations, "Override config iterations");
  c_train->add_option("--seed", train.seed, "Override config seed");

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Generate faces with chosen attributes");
  c_gen->add_option("--checkpoint", gen.checkpoint, "Checkpoint file")->required();
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--count", gen.count, "Number of images");
  c_gen->add_option("--seed", gen.seed, "Random seed");
  c_gen->add_option("--attr", gen.attrs, "name=0|1, repeatable; others drawn from the data");
  c_gen->add_option("--grid", gen.grid, "Also write an RxC contact sheet (grid.png)");

  ModifyArgs mod;
  auto* c_mod = app.add_subcommand("modify", "Re-render an image with changed attributes");
  c_mod->add_option("--checkpoint", mod.checkpoint, "Checkpoint file")->required();
  c_mod->add_option("--image", mod.image, "Input PNG")->required();
  c_mod->add_option("--out", mod.out, "Output PNG")->required();
  c_mod->add_option("--attr", mod.attrs, "name=0|1, repeatable; others drawn from the data");
  c_mod->add_option("--noise", mod.noise, "mean or sample");
  c_mod->add_option("--seed", mod.seed, "Random seed");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Metric report for a checkpoint");
  c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  c_eval->add_option("--data", ev.data, "Labelled image directory")->required();
  c_eval->add_option("--table", ev.table, "Attribute table (default <data>/attributes.csv)");
  c_eval->add_option("--probe", ev.probe, "Load a saved probe instead of training one");
  c_eval->add_option("--save-probe", ev.save_probe, "Save the probe used");
  c_eval->add_option("--probe-seed", ev.probe_seed, "Probe training seed");
  c_eval->add_option("--count", ev.options.generated_count, "Generated images")->check(CLI::PositiveNumber);
  c_eval->add_option("--splits", ev.options.n_splits, "Inception-score splits")->check(CLI::PositiveNumber);
  c_eval->add_option("--flip-trials", ev.options.flip_trials, "Modification trials")->check(CLI::PositiveNumber);
  c_eval->add_option("--seed", ev.options.seed, "Generation seed");
  c_eval->add_option("--out", ev.out, "Also write the report here");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "HTTP inference service");
  c_serve->add_option("--checkpoint", serve.checkpoint, "Checkpoint file")->required();
  c_serve->add_option("--port", serve.port, "Port")->check(CLI::Range(0, 65535));
  c_serve->add_option("--host", serve.host, "Bind address");
  c_serve->add_option("--max-upload", serve.max_upload, "Upload limit in bytes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_synth->parsed()) return cmd_synth(synth, out);
    if (c_train->parsed()) return cmd_train(train, out);
    if (c_gen->parsed()) return cmd_generate(gen, out);
    if (c_mod->parsed()) return cmd_modify(mod, out);
    if (c_eval->parsed()) return cmd_eval(ev, out);
    if (c_serve->parsed()) return cmd_serve(serve, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const data::DatasetLoadError& e) {
    err << "error: " << e.what() << '\n';
    for (const auto& d : e.diagnostics()) err << "  " << d << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace slgan
