#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "rmaml/error.hpp"

namespace rmaml::cli {

namespace fs = std::filesystem;

namespace {

void prepare_output(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_echo(const ExperimentConfig& cfg, const fs::path& path) {
  std::ofstream f(path);
  f << to_json(cfg).dump(2) << "\n";
  if (!f) throw IoError("cannot write " + path.string());
}

MetaConfig resolved_meta(const ExperimentConfig& cfg, const Dataset& train) {
  MetaConfig m = cfg.meta;
  m.seed = cfg.seed;
  m.threads = cfg.threads;
  m.contrastive.fill = train.mean_pixel();
  return m;
}

MetaModel checked_checkpoint(const ExperimentConfig& cfg, const fs::path& path, const ImageDims& dims) {
  MetaModel model = load_checkpoint(path);
  if (model.arch() != arch_for(cfg, dims)) {
    const ArchSpec& a = model.arch();
    const ArchSpec b = arch_for(cfg, dims);
    throw ConfigError("checkpoint " + path.string() + " holds a " + std::to_string(a.input_size()) + "-input, " +
                          std::to_string(a.embed_dim) + "-embed, " + std::to_string(a.n_classes) +
                          "-way model; the config describes " + std::to_string(b.input_size()) + "-input, " +
                          std::to_string(b.embed_dim) + "-embed, " + std::to_string(b.n_classes) + "-way",
                      "checkpoint");
  }
  return model;
}

}  // namespace

TrainArtifacts cmd_train(const ExperimentConfig& cfg, std::ostream& out) {
  cfg.validate();
  const DataSplit data = load_data(cfg);
  const MetaConfig meta = resolved_meta(cfg, data.train);
  const ArchSpec arch = arch_for(cfg, data.train.dims());
  prepare_output(cfg.output);

  TrainArtifacts art{cfg.output / "checkpoint.rmlc", cfg.output / "train_log.ndjson", cfg.output / "config.json", {}};
  write_echo(cfg, art.config);
  std::ofstream log(art.log);
  if (!log) throw IoError("cannot write " + art.log.string());

  auto epoch_start = std::chrono::steady_clock::now();
  const auto on_step = [&](const LogRecord& r) {
    log << to_ndjson(r) << "\n";
    if (r.batch + 1 == meta.batches_per_epoch) {
      const auto now = std::chrono::steady_clock::now();
      art.epoch_seconds.push_back(std::chrono::duration<double>(now - epoch_start).count());
      epoch_start = now;
      out << "epoch " << r.epoch << ": clean " << r.metrics.clean << ", robust " << r.metrics.robust << ", "
          << art.epoch_seconds.back() << " s\n";
    }
  };
  const auto sampler = make_sampler(data.train, cfg.episode, meta.tasks_per_batch, cfg.seed);
  const TrainResult result = train(init_model(arch, cfg.seed), sampler, meta, on_step);
  log.close();
  if (!log) throw IoError("cannot write " + art.log.string());
  save_checkpoint(art.checkpoint, result.model);
  out << "wrote " << art.checkpoint.string() << "\n";
  return art;
}

EvalReport cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, std::ostream& out) {
  cfg.validate();
  const DataSplit data = load_data(cfg);
  const MetaModel model = checked_checkpoint(cfg, checkpoint, data.test.dims());
  const auto tasks = test_tasks(cfg, data.test);
  const MetaTestConfig t = test_config(cfg);
  EvalReport report =
      ra_sweep(model, tasks, cfg.eval.epsilons, cfg.eval.attack_steps, cfg.eval.ft_mode, t.scope, t);
  report.config_echo = to_json(cfg).dump();
  prepare_output(cfg.output);
  const fs::path csv = cfg.output / "eval.csv";
  emit_report(report, csv);
  for (const EvalRow& r : report.rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "eps %-6g %s %.4f +- %.4f (%zu tasks)\n", r.epsilon,
                  r.epsilon == 0.0 ? "SA" : "RA", r.accuracy, r.ci, r.n_tasks);
    out << buf;
  }
  out << "wrote " << csv.string() << "\n";
  return report;
}

IAMResult cmd_invert(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& image,
                     std::size_t index, std::size_t neuron, std::ostream& out) {
  cfg.validate();
  const Dataset images = load_dataset(image);
  const std::size_t count = images.classes() * images.samples_per_class();
  if (index >= count) {
    throw ConfigError("image index " + std::to_string(index) + " out of range (" + std::to_string(count) + " images)",
                      "index");
  }
  const MetaModel model = checked_checkpoint(cfg, checkpoint, images.dims());
  const auto px = images.image(index);
  ad::Array seed = ad::Array::zeros({1, px.size()});
  std::copy(px.begin(), px.end(), seed.values().begin());
  IAMResult r = invert_neuron(model, seed, neuron, cfg.invert);
  write_iam(cfg.output, r, model.arch());
  write_echo(cfg, cfg.output / "config.json");
  out << "neuron " << neuron << ": activation " << r.objective_trace.front() << " -> " << r.objective_trace.back()
      << "\nwrote " << (cfg.output / "iam.pgm").string() << "\n";
  return r;
}

void cmd_convert(const fs::path& input, const fs::path& output, const ImageDims& dims, std::ostream& out) {
  const Dataset d = convert_raw_directory(input, dims);
  save_dataset(output, d);
  out << "wrote " << output.string() << ": " << d.classes() << " classes x " << d.samples_per_class()
      << " images\n";
}

namespace {

struct Common {
  std::optional<std::string> config;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> output;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "JSON experiment config");
  cmd->add_option("--preset", c.preset, "method preset (overrides the config file's)");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--threads", c.threads, "worker threads");
  cmd->add_option("-o,--out", c.output, "output directory");
}

ExperimentConfig resolve(const Common& c) {
  std::optional<fs::path> path;
  if (c.config) path = *c.config;
  ExperimentConfig cfg = load_config(path, c.preset);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (c.output) cfg.output = *c.output;
  return cfg;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust model-agnostic meta-learning driver"};
  app.require_subcommand(1);

  Common train_opts, eval_opts, invert_opts;
  auto* train_cmd = app.add_subcommand("train", "meta-train and write checkpoint, log and config echo");
  add_common(train_cmd, train_opts);

  auto* eval_cmd = app.add_subcommand("eval", "SA/RA sweep of a checkpoint on held-out tasks");
  add_common(eval_cmd, eval_opts);
  std::string eval_ckpt;
  std::optional<std::vector<double>> eps;
  std::optional<std::string> ft_mode, scope;
  std::optional<std::size_t> n_tasks;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--eps", eps, "comma-separated epsilon grid")->delimiter(',');
  eval_cmd->add_option("--ft-mode", ft_mode, "standard | adversarial");
  eval_cmd->add_option("--scope", scope, "full | head_only");
  eval_cmd->add_option("--tasks", n_tasks, "number of test tasks");

  auto* invert_cmd = app.add_subcommand("invert", "maximize one representation neuron from a seed image");
  add_common(invert_cmd, invert_opts);
  std::string inv_ckpt, image;
  std::size_t index = 0, neuron = 0;
  std::optional<std::size_t> inv_steps;
  std::optional<double> inv_step;
  invert_cmd->add_option("--checkpoint", inv_ckpt, "checkpoint file")->required();
  invert_cmd->add_option("--image", image, "RMLD file holding the seed image")->required();
  invert_cmd->add_option("--index", index, "image index inside the file");
  invert_cmd->add_option("--neuron", neuron, "representation coordinate")->required();
  invert_cmd->add_option("--steps", inv_steps, "ascent steps");
  invert_cmd->add_option("--step-size", inv_step, "pixel step");

  auto* convert_cmd = app.add_subcommand("convert-dataset", "pack a directory of <class>.raw files into RMLD");
  std::string conv_in, conv_out;
  ImageDims dims;
  convert_cmd->add_option("--input", conv_in, "directory of .raw files")->required();
  convert_cmd->add_option("--output", conv_out, "RMLD file to write")->required();
  convert_cmd->add_option("--height", dims.height)->required();
  convert_cmd->add_option("--width", dims.width)->required();
  convert_cmd->add_option("--channels", dims.channels);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) {
      cmd_train(resolve(train_opts), out);
    } else if (eval_cmd->parsed()) {
      ExperimentConfig cfg = resolve(eval_opts);
      if (eps) cfg.eval.epsilons = *eps;
      if (ft_mode) cfg.eval.ft_mode = parse_ft_mode(*ft_mode);
      if (scope) cfg.eval.scope = parse_scope(*scope);
      if (n_tasks) cfg.eval.tasks = *n_tasks;
      cmd_eval(cfg, eval_ckpt, out);
    } else if (invert_cmd->parsed()) {
      ExperimentConfig cfg = resolve(invert_opts);
      if (inv_steps) cfg.invert.steps = *inv_steps;
      if (inv_step) cfg.invert.step_size = *inv_step;
      cmd_invert(cfg, inv_ckpt, image, index, neuron, out);
    } else if (convert_cmd->parsed()) {
      cmd_convert(conv_in, conv_out, dims, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace rmaml::cli
