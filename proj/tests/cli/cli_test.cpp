#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "rmaml/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using rmaml::cli::ExperimentConfig;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rmaml_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_json(const fs::path& path, const json& j) {
  std::ofstream(path) << j.dump(2);
  return path;
}

// A few seconds of training on small images.
json tiny_config() {
  return {{"dataset", {{"train_classes", 5}, {"synthetic", {{"classes", 10}, {"samples_per_class", 12},
                                                            {"height", 8}, {"width", 8}, {"parts", 6}}}}},
          {"model", {{"hidden", json::array()}, {"embed_dim", 6}}},
          {"episode", {{"query", 3}}},
          {"meta", {{"K", 1}, {"alpha", 0.1}, {"epochs", 2}, {"batches_per_epoch", 2}, {"tasks_per_batch", 2}}},
          {"robust", {{"attack", {{"epsilon", 8}, {"steps", 2}}}}},
          {"eval", {{"tasks", 6}, {"epsilons", {0, 8}}, {"attack_steps", 2}}},
          {"invert", {{"steps", 5}, {"step_size", 4}}}};
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "rmaml");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = rmaml::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(Presets, MapToMethodSettings) {
  struct Row {
    const char* name;
    double gin, gout, gcl;
    rmaml::AttackKind attack;
    rmaml::RobustKind kind;
    rmaml::FinetuneScope scope;
  };
  const double inf = rmaml::kGammaInfinity;
  using rmaml::AttackKind;
  using rmaml::FinetuneScope;
  using rmaml::RobustKind;
  const Row rows[] = {
      {"maml", 0, 0, 0, AttackKind::PGD, RobustKind::AT, FinetuneScope::Full},
      {"rmaml_both", 0.2, 0.2, 0, AttackKind::PGD, RobustKind::AT, FinetuneScope::Full},
      {"rmaml_out", 0, 0.2, 0, AttackKind::PGD, RobustKind::AT, FinetuneScope::Full},
      {"rmaml_out_fgsm", 0, 0.2, 0, AttackKind::FGSM, RobustKind::AT, FinetuneScope::Full},
      {"rmaml_out_anil", 0, 0.2, 0, AttackKind::PGD, RobustKind::AT, FinetuneScope::HeadOnly},
      {"aq", 0, inf, 0, AttackKind::PGD, RobustKind::AT, FinetuneScope::Full},
      {"rmaml_out_trades", 0, 5, 0, AttackKind::PGD, RobustKind::TRADES, FinetuneScope::Full},
      {"rmaml_out_cl", 0, 0.2, 0.1, AttackKind::PGD, RobustKind::AT, FinetuneScope::Full},
  };
  ASSERT_EQ(std::size(rows), rmaml::cli::preset_names().size());
  for (const Row& r : rows) {
    ExperimentConfig cfg;
    rmaml::cli::apply_preset(cfg, r.name);
    EXPECT_EQ(cfg.meta.gamma_in, r.gin) << r.name;
    EXPECT_EQ(cfg.meta.gamma_out, r.gout) << r.name;
    EXPECT_EQ(cfg.meta.gamma_cl, r.gcl) << r.name;
    EXPECT_EQ(cfg.meta.robust.attack.kind, r.attack) << r.name;
    EXPECT_EQ(cfg.meta.robust.kind, r.kind) << r.name;
    EXPECT_EQ(cfg.meta.finetune_scope, r.scope) << r.name;
    EXPECT_EQ(cfg.meta.robust.lambda, 0.0) << r.name;
    EXPECT_NO_THROW(cfg.validate()) << r.name;
  }
  ExperimentConfig cfg;
  EXPECT_THROW(rmaml::cli::apply_preset(cfg, "maml++"), rmaml::ConfigError);
}

TEST(Config, FileOverridesPresetAndFlagOverridesFile) {
  const fs::path dir = fresh_dir("precedence");
  json j = tiny_config();
  j["preset"] = "rmaml_out";
  j["seed"] = 5;
  j["meta"]["gamma_out"] = 0.7;
  const fs::path file = write_json(dir / "c.json", j);
  const auto cfg = rmaml::cli::load_config(file, std::nullopt);
  EXPECT_EQ(cfg.preset, "rmaml_out");
  EXPECT_EQ(cfg.meta.gamma_out, 0.7);
  EXPECT_EQ(cfg.seed, 5u);
  const auto aq = rmaml::cli::load_config(file, std::string("aq"));
  EXPECT_EQ(aq.preset, "aq");
  EXPECT_EQ(aq.meta.gamma_out, 0.7);

  // --seed beats the file value, visible in the config echo.
  const Result r = run({"train", "-c", file.string(), "--seed", "11", "-o", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(slurp(dir / "out" / "config.json"))["seed"], 11);
}

TEST(Config, EchoReloadsToTheSameConfig) {
  const fs::path dir = fresh_dir("echo");
  json j = tiny_config();
  j["meta"]["gamma_out"] = "inf";
  j["eval"]["scope"] = "head_only";
  j["eval"]["gamma_in"] = 0.5;
  const auto cfg = rmaml::cli::load_config(write_json(dir / "c.json", j), std::string("rmaml_out_cl"));
  EXPECT_TRUE(std::isinf(cfg.meta.gamma_out));
  const json echo = rmaml::cli::to_json(cfg);
  const auto again = rmaml::cli::load_config(write_json(dir / "echo.json", echo), std::nullopt);
  EXPECT_EQ(rmaml::cli::to_json(again), echo);
  EXPECT_EQ(again.meta, cfg.meta);
  EXPECT_EQ(again.eval.scope, rmaml::FinetuneScope::HeadOnly);
  EXPECT_EQ(again.eval.gamma_in, 0.5);
  EXPECT_FALSE(again.eval.K.has_value());
}

TEST(Config, UnknownKeysAndBadValuesNameTheField) {
  const fs::path dir = fresh_dir("unknown");
  const auto expect_field = [&](json j, const std::string& field) {
    const fs::path f = write_json(dir / "c.json", j);
    try {
      auto cfg = rmaml::cli::load_config(f, std::nullopt);
      cfg.validate();
      ADD_FAILURE() << "accepted " << j.dump();
    } catch (const rmaml::ConfigError& e) {
      EXPECT_EQ(e.field(), field) << e.what();
    }
  };
  expect_field({{"meta", {{"gama_out", 1}}}}, "meta.gama_out");
  expect_field({{"colour", 1}}, "colour");
  expect_field({{"robust", {{"attack", {{"eps", 1}}}}}}, "robust.attack.eps");
  expect_field({{"meta", {{"K", -1}}}}, "meta.K");
  expect_field({{"meta", {{"alpha", "fast"}}}}, "meta.alpha");
  expect_field({{"meta", {{"scope", "encoder"}}}}, "meta.scope");
  expect_field({{"meta", {{"alpha", 0}}}}, "meta.alpha");
  expect_field({{"dataset", {{"source", "file"}}}}, "dataset.path");
  expect_field({{"eval", {{"epsilons", {2, 0}}}}}, "eval.epsilons");
  expect_field({{"preset", "fancy"}}, "preset");
}

TEST(Cli, ExitCodes) {
  const fs::path dir = fresh_dir("exit");
  const fs::path missing = write_json(dir / "m.json", {{"dataset", {{"source", "file"}}}});
  Result r = run({"train", "-c", missing.string(), "-o", (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("dataset.path"), std::string::npos) << r.err;

  EXPECT_EQ(run({"train", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);

  json blow = tiny_config();
  blow["meta"]["beta1"] = 1e300;
  r = run({"train", "-c", write_json(dir / "b.json", blow).string(), "-o", (dir / "b").string()});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Cli, TrainTwiceFromEchoIsIdentical) {
  const fs::path dir = fresh_dir("determinism");
  const fs::path file = write_json(dir / "c.json", tiny_config());
  ASSERT_EQ(run({"train", "-c", file.string(), "--preset", "rmaml_out", "-o", (dir / "a").string()}).code, 0);
  const fs::path echo = dir / "a" / "config.json";
  ASSERT_EQ(run({"train", "-c", echo.string(), "-o", (dir / "b").string()}).code, 0);
  EXPECT_EQ(slurp(dir / "a" / "checkpoint.rmlc"), slurp(dir / "b" / "checkpoint.rmlc"));
  EXPECT_EQ(slurp(dir / "a" / "train_log.ndjson"), slurp(dir / "b" / "train_log.ndjson"));
  std::istringstream log(slurp(dir / "a" / "train_log.ndjson"));
  std::size_t lines = 0;
  for (std::string line; std::getline(log, line); ++lines) {
    const json rec = json::parse(line);
    for (const char* key : {"epoch", "batch", "clean_term", "robust_term", "cl_term", "grad_norms"}) {
      EXPECT_TRUE(rec.contains(key)) << key;
    }
  }
  EXPECT_EQ(lines, 4u);
}

TEST(Cli, EvalWritesReportAndChecksArchitecture) {
  const fs::path dir = fresh_dir("eval");
  const fs::path file = write_json(dir / "c.json", tiny_config());
  ASSERT_EQ(run({"train", "-c", file.string(), "-o", (dir / "t").string()}).code, 0);
  const std::string ckpt = (dir / "t" / "checkpoint.rmlc").string();
  Result r = run({"eval", "-c", file.string(), "--checkpoint", ckpt, "--eps", "0,4,8", "--ft-mode", "adversarial",
                  "--scope", "head_only", "-o", (dir / "e").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = rmaml::load_report(dir / "e" / "eval.csv");
  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_EQ(report.rows[2].epsilon, 8.0);
  EXPECT_EQ(report.rows[0].n_tasks, 6u);
  const json echo = json::parse(report.config_echo);
  EXPECT_EQ(echo["eval"]["ft_mode"], "adversarial");
  EXPECT_EQ(echo["eval"]["scope"], "head_only");
  EXPECT_EQ(slurp(dir / "e" / "eval.csv").rfind("epsilon,accuracy,ci,n_tasks\n", 0), 0u);

  json other = tiny_config();
  other["model"]["embed_dim"] = 7;
  r = run({"eval", "-c", write_json(dir / "o.json", other).string(), "--checkpoint", ckpt, "-o",
           (dir / "e2").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("checkpoint"), std::string::npos) << r.err;
}

TEST(Cli, InvertAndConvert) {
  const fs::path dir = fresh_dir("invert");
  const fs::path raw = dir / "raw";
  fs::create_directories(raw);
  for (const char* cls : {"a.raw", "b.raw"}) {
    std::ofstream f(raw / cls, std::ios::binary);
    for (int i = 0; i < 2 * 64; ++i) f.put(static_cast<char>(i % 251));
  }
  const std::string images = (dir / "images.rmld").string();
  Result r = run({"convert-dataset", "--input", raw.string(), "--output", images, "--height", "8", "--width", "8"});
  ASSERT_EQ(r.code, 0) << r.err;

  const fs::path file = write_json(dir / "c.json", tiny_config());
  ASSERT_EQ(run({"train", "-c", file.string(), "-o", (dir / "t").string()}).code, 0);
  const std::string ckpt = (dir / "t" / "checkpoint.rmlc").string();
  const auto invert = [&](const std::string& neuron, const fs::path& out) {
    return run({"invert", "-c", file.string(), "--checkpoint", ckpt, "--image", images, "--index", "3", "--neuron",
                neuron, "-o", out.string()});
  };
  r = invert("2", dir / "i1");
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(invert("2", dir / "i2").code, 0);
  for (const char* f : {"iam.rmld", "iam.pgm", "trace.csv"}) {
    EXPECT_TRUE(fs::exists(dir / "i1" / f)) << f;
    EXPECT_EQ(slurp(dir / "i1" / f), slurp(dir / "i2" / f)) << f;
  }
  std::istringstream trace(slurp(dir / "i1" / "trace.csv"));
  std::string line;
  std::getline(trace, line);
  EXPECT_EQ(line, "step,activation");
  std::size_t n = 0;
  while (std::getline(trace, line)) ++n;
  EXPECT_EQ(n, 6u);

  EXPECT_EQ(invert("6", dir / "i3").code, 2);
}
