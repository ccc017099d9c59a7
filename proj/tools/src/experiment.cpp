#include "experiment.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "rmaml/error.hpp"
#include "rmaml/rng.hpp"

namespace rmaml::cli {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object, remembering which were consumed so the
// rest can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("expected an object", path_.empty() ? "<root>" : path_);
  }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void read(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError("expected a number", field(key));
      out = v->get<double>();
    }
  }
  // Numbers, or "inf" for an infinite weight.
  void read_weight(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (v->is_string() && (*v == "inf" || *v == "infinity")) {
        out = kGammaInfinity;
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        throw ConfigError("expected a number or \"inf\"", field(key));
      }
    }
  }
  void read(const char* key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
        throw ConfigError("expected a non-negative integer", field(key));
      }
      out = v->get<std::size_t>();
    }
  }
  void read(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError("expected true or false", field(key));
      out = v->get<bool>();
    }
  }
  void read(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError("expected a string", field(key));
      out = v->get<std::string>();
    }
  }
  template <typename Enum, typename Parse>
  void read_enum(const char* key, Enum& out, Parse parse) {
    std::string s;
    read(key, s);
    if (s.empty()) return;
    try {
      out = parse(s);
    } catch (const ConfigError& e) {
      throw ConfigError(e.message(), field(key));
    }
  }
  template <typename T>
  void read_list(const char* key, std::vector<T>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError("expected a list", field(key));
      std::vector<T> tmp;
      for (const json& e : *v) {
        if constexpr (std::is_same_v<T, double>) {
          if (!e.is_number()) throw ConfigError("expected numbers", field(key));
        } else {
          if (!e.is_number_unsigned()) throw ConfigError("expected non-negative integers", field(key));
        }
        tmp.push_back(e.get<T>());
      }
      out = std::move(tmp);
    }
  }
  std::optional<Section> sub(const char* key) {
    if (const json* v = find(key)) return Section(*v, field(key));
    return std::nullopt;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown key", path_.empty() ? key : path_ + "." + key);
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_attack(Section s, AttackConfig& a) {
  s.read_enum("kind", a.kind, parse_attack_kind);
  s.read("epsilon", a.epsilon);
  s.read("steps", a.steps);
  s.read("step_size", a.step_size);
  s.read("random_init", a.random_init);
  s.read("step_decay", a.step_decay);
  s.read("restarts", a.restarts);
  s.read("fgsm_raw_gradient", a.fgsm_raw_gradient);
  s.finish();
}

json attack_json(const AttackConfig& a) {
  return {{"kind", to_string(a.kind)},     {"epsilon", a.epsilon},       {"steps", a.steps},
          {"step_size", a.step_size},      {"random_init", a.random_init}, {"step_decay", a.step_decay},
          {"restarts", a.restarts},        {"fgsm_raw_gradient", a.fgsm_raw_gradient}};
}

json weight_json(double w) { return std::isinf(w) ? json("inf") : json(w); }

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"maml",           "rmaml_both", "rmaml_out",        "rmaml_out_fgsm",
                                                 "rmaml_out_anil", "aq",         "rmaml_out_trades", "rmaml_out_cl"};
  return names;
}

void apply_preset(ExperimentConfig& cfg, const std::string& name) {
  MetaConfig& m = cfg.meta;
  m.gamma_in = m.gamma_out = m.gamma_cl = 0.0;
  m.finetune_scope = FinetuneScope::Full;
  m.robust.kind = RobustKind::AT;
  m.robust.lambda = 0.0;
  m.robust.attack.kind = AttackKind::PGD;
  m.use_unlabeled = false;
  if (name == "maml") {
  } else if (name == "rmaml_both") {
    m.gamma_in = m.gamma_out = 0.2;
  } else if (name == "rmaml_out") {
    m.gamma_out = 0.2;
  } else if (name == "rmaml_out_fgsm") {
    m.gamma_out = 0.2;
    m.robust.attack.kind = AttackKind::FGSM;
    m.robust.attack.steps = 1;
  } else if (name == "rmaml_out_anil") {
    m.gamma_out = 0.2;
    m.finetune_scope = FinetuneScope::HeadOnly;
  } else if (name == "aq") {
    m.gamma_out = kGammaInfinity;
  } else if (name == "rmaml_out_trades") {
    m.gamma_out = 5.0;
    m.robust.kind = RobustKind::TRADES;
  } else if (name == "rmaml_out_cl") {
    m.gamma_out = 0.2;
    m.gamma_cl = 0.1;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (expected one of " + known + ")", "preset");
  }
  cfg.preset = name;
}

void overlay(ExperimentConfig& cfg, const json& j) {
  Section root(j, "");
  root.read("preset", cfg.preset);
  root.read("seed", cfg.seed);
  root.read("threads", cfg.threads);
  std::string out = cfg.output.string();
  root.read("output", out);
  cfg.output = out;

  if (auto s = root.sub("dataset")) {
    DatasetSource& d = cfg.dataset;
    s->read("source", d.source);
    std::string p = d.path.string();
    s->read("path", p);
    d.path = p;
    s->read("train_classes", d.train_classes);
    if (auto y = s->sub("synthetic")) {
      SynthConfig& c = d.synthetic;
      y->read("classes", c.classes);
      y->read("samples_per_class", c.samples_per_class);
      y->read("height", c.dims.height);
      y->read("width", c.dims.width);
      y->read("channels", c.dims.channels);
      y->read("amplitude", c.amplitude);
      y->read("noise", c.noise);
      y->read("parts", c.parts);
      y->read("parts_per_class", c.parts_per_class);
      y->read("phase_jitter", c.phase_jitter);
      y->read("seed", c.seed);
      y->finish();
    }
    s->finish();
  }
  if (auto s = root.sub("model")) {
    s->read_list("hidden", cfg.model.hidden);
    s->read("embed_dim", cfg.model.embed_dim);
    s->read_enum("activation", cfg.model.activation, parse_activation);
    s->finish();
  }
  if (auto s = root.sub("episode")) {
    EpisodeConfig& e = cfg.episode;
    s->read("way", e.way);
    s->read("shot", e.shot);
    s->read("query", e.query);
    s->read("unlabeled", e.unlabeled);
    s->read("unlabeled_shift", e.unlabeled_shift);
    s->finish();
  }
  if (auto s = root.sub("meta")) {
    MetaConfig& m = cfg.meta;
    s->read_weight("gamma_in", m.gamma_in);
    s->read_weight("gamma_out", m.gamma_out);
    s->read_weight("gamma_cl", m.gamma_cl);
    s->read("K", m.K);
    s->read("alpha", m.alpha);
    s->read("beta1", m.beta1);
    s->read("beta2", m.beta2);
    s->read_enum("scope", m.finetune_scope, parse_scope);
    s->read("use_unlabeled", m.use_unlabeled);
    s->read("tasks_per_batch", m.tasks_per_batch);
    s->read("epochs", m.epochs);
    s->read("batches_per_epoch", m.batches_per_epoch);
    s->read("first_order", m.first_order);
    s->read("adam", m.adam);
    s->finish();
  }
  if (auto s = root.sub("robust")) {
    RobustSpec& r = cfg.meta.robust;
    s->read_enum("kind", r.kind, parse_robust_kind);
    s->read("lambda", r.lambda);
    s->read("kl_divergence", r.kl_divergence);
    if (auto a = s->sub("attack")) read_attack(*a, r.attack);
    s->finish();
  }
  if (auto s = root.sub("contrastive")) {
    ContrastiveConfig& c = cfg.meta.contrastive;
    s->read("tau", c.tau);
    s->read("normalize", c.normalize);
    if (auto t = s->sub("transforms")) {
      TransformConfig& tc = c.transforms;
      t->read("crop_resize", tc.crop_resize);
      t->read("crop_min_scale", tc.crop_min_scale);
      t->read("cutout", tc.cutout);
      t->read("cutout_size", tc.cutout_size);
      t->read("rotation", tc.rotation);
      t->read("max_rotation_deg", tc.max_rotation_deg);
      t->finish();
    }
    s->finish();
  }
  if (auto s = root.sub("eval")) {
    EvalSettings& e = cfg.eval;
    s->read("tasks", e.tasks);
    s->read_list("epsilons", e.epsilons);
    s->read("attack_steps", e.attack_steps);
    s->read("restarts", e.restarts);
    s->read_enum("ft_mode", e.ft_mode, parse_ft_mode);
    // Optional fields: null (or absent) means "follow training".
    if (const json* v = s->find("scope"); v && !v->is_null()) {
      FinetuneScope sc{};
      s->read_enum("scope", sc, parse_scope);
      e.scope = sc;
    }
    if (const json* v = s->find("K"); v && !v->is_null()) {
      std::size_t k = 0;
      s->read("K", k);
      e.K = k;
    }
    if (const json* v = s->find("alpha"); v && !v->is_null()) {
      double a = 0;
      s->read("alpha", a);
      e.alpha = a;
    }
    if (const json* v = s->find("gamma_in"); v && !v->is_null()) {
      double g = 0;
      s->read("gamma_in", g);
      e.gamma_in = g;
    }
    s->finish();
  }
  if (auto s = root.sub("invert")) {
    s->read("steps", cfg.invert.steps);
    s->read("step_size", cfg.invert.step_size);
    s->read("backtracking", cfg.invert.backtracking);
    s->read("max_backtracks", cfg.invert.max_backtracks);
    s->finish();
  }
  root.finish();
}

json to_json(const ExperimentConfig& cfg) {
  const SynthConfig& y = cfg.dataset.synthetic;
  const MetaConfig& m = cfg.meta;
  const TransformConfig& tc = m.contrastive.transforms;
  const EvalSettings& e = cfg.eval;
  auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
  return {
      {"preset", cfg.preset},
      {"seed", cfg.seed},
      {"threads", cfg.threads},
      {"output", cfg.output.string()},
      {"dataset",
       {{"source", cfg.dataset.source},
        {"path", cfg.dataset.path.string()},
        {"train_classes", cfg.dataset.train_classes},
        {"synthetic",
         {{"classes", y.classes},
          {"samples_per_class", y.samples_per_class},
          {"height", y.dims.height},
          {"width", y.dims.width},
          {"channels", y.dims.channels},
          {"amplitude", y.amplitude},
          {"noise", y.noise},
          {"parts", y.parts},
          {"parts_per_class", y.parts_per_class},
          {"phase_jitter", y.phase_jitter},
          {"seed", y.seed}}}}},
      {"model",
       {{"hidden", cfg.model.hidden}, {"embed_dim", cfg.model.embed_dim}, {"activation", to_string(cfg.model.activation)}}},
      {"episode",
       {{"way", cfg.episode.way},
        {"shot", cfg.episode.shot},
        {"query", cfg.episode.query},
        {"unlabeled", cfg.episode.unlabeled},
        {"unlabeled_shift", cfg.episode.unlabeled_shift}}},
      {"meta",
       {{"gamma_in", weight_json(m.gamma_in)},
        {"gamma_out", weight_json(m.gamma_out)},
        {"gamma_cl", weight_json(m.gamma_cl)},
        {"K", m.K},
        {"alpha", m.alpha},
        {"beta1", m.beta1},
        {"beta2", m.beta2},
        {"scope", to_string(m.finetune_scope)},
        {"use_unlabeled", m.use_unlabeled},
        {"tasks_per_batch", m.tasks_per_batch},
        {"epochs", m.epochs},
        {"batches_per_epoch", m.batches_per_epoch},
        {"first_order", m.first_order},
        {"adam", m.adam}}},
      {"robust",
       {{"kind", to_string(m.robust.kind)},
        {"lambda", m.robust.lambda},
        {"kl_divergence", m.robust.kl_divergence},
        {"attack", attack_json(m.robust.attack)}}},
      {"contrastive",
       {{"tau", m.contrastive.tau},
        {"normalize", m.contrastive.normalize},
        {"transforms",
         {{"crop_resize", tc.crop_resize},
          {"crop_min_scale", tc.crop_min_scale},
          {"cutout", tc.cutout},
          {"cutout_size", tc.cutout_size},
          {"rotation", tc.rotation},
          {"max_rotation_deg", tc.max_rotation_deg}}}}},
      {"eval",
       {{"tasks", e.tasks},
        {"epsilons", e.epsilons},
        {"attack_steps", e.attack_steps},
        {"restarts", e.restarts},
        {"ft_mode", to_string(e.ft_mode)},
        {"scope", e.scope ? json(to_string(*e.scope)) : json(nullptr)},
        {"K", opt(e.K)},
        {"alpha", opt(e.alpha)},
        {"gamma_in", opt(e.gamma_in)}}},
      {"invert",
       {{"steps", cfg.invert.steps},
        {"step_size", cfg.invert.step_size},
        {"backtracking", cfg.invert.backtracking},
        {"max_backtracks", cfg.invert.max_backtracks}}},
  };
}

void ExperimentConfig::validate() const {
  if (dataset.source == "file") {
    if (dataset.path.empty()) throw ConfigError("dataset file path is required", "dataset.path");
  } else if (dataset.source != "synthetic") {
    throw ConfigError("expected \"synthetic\" or \"file\"", "dataset.source");
  }
  if (dataset.train_classes == 0) throw ConfigError("must be positive", "dataset.train_classes");
  if (threads == 0) throw ConfigError("must be positive", "threads");
  if (model.embed_dim == 0) throw ConfigError("must be positive", "model.embed_dim");
  for (std::size_t h : model.hidden) {
    if (h == 0) throw ConfigError("layer widths must be positive", "model.hidden");
  }
  episode.validate();
  if (meta.use_unlabeled && !episode.unlabeled) {
    throw ConfigError("meta.use_unlabeled needs episode.unlabeled", "episode.unlabeled");
  }
  const auto prefixed = [](const ConfigError& e, const std::string& prefix) {
    return ConfigError(e.message(), prefix + e.field());
  };
  try {
    meta.robust.validate();
  } catch (const ConfigError& e) {
    throw prefixed(e, "robust.");
  }
  if (meta.gamma_cl > 0.0) {
    try {
      meta.contrastive.transforms.validate();
    } catch (const ConfigError& e) {
      throw prefixed(e, "contrastive.transforms.");
    }
  }
  try {
    meta.validate();
  } catch (const ConfigError& e) {
    throw prefixed(e, e.field().starts_with("contrastive.") ? "" : "meta.");
  }
  if (eval.tasks == 0) throw ConfigError("must be positive", "eval.tasks");
  for (std::size_t i = 0; i < eval.epsilons.size(); ++i) {
    if (!(eval.epsilons[i] >= 0.0) || (i > 0 && eval.epsilons[i] <= eval.epsilons[i - 1])) {
      throw ConfigError("must be >= 0 and strictly ascending", "eval.epsilons");
    }
  }
  if (eval.attack_steps == 0) throw ConfigError("must be positive", "eval.attack_steps");
  if (eval.restarts == 0) throw ConfigError("must be positive", "eval.restarts");
  if (eval.alpha && !(*eval.alpha > 0.0)) throw ConfigError("must be > 0", "eval.alpha");
  if (eval.gamma_in && !(*eval.gamma_in >= 0.0)) throw ConfigError("must be >= 0", "eval.gamma_in");
  try {
    invert.validate();
  } catch (const ConfigError& e) {
    throw prefixed(e, "invert.");
  }
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::optional<std::string>& preset_override) {
  json file = json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open config file " + path->string(), "config");
    try {
      file = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(path->string() + ": " + e.what(), "config");
    }
    if (!file.is_object()) throw ConfigError(path->string() + ": expected a JSON object", "config");
  }
  ExperimentConfig cfg;
  std::string preset = "maml";
  if (preset_override) {
    preset = *preset_override;
  } else if (auto it = file.find("preset"); it != file.end()) {
    if (!it->is_string()) throw ConfigError("expected a string", "preset");
    preset = it->get<std::string>();
  }
  apply_preset(cfg, preset);
  file.erase("preset");
  overlay(cfg, file);
  return cfg;
}

DataSplit load_data(const ExperimentConfig& cfg) {
  Dataset all = cfg.dataset.source == "file" ? load_dataset(cfg.dataset.path) : synth_dataset(cfg.dataset.synthetic);
  try {
    auto split = split_classes(all, cfg.dataset.train_classes);
    return {std::move(split.train), std::move(split.test)};
  } catch (const ConfigError& e) {
    throw ConfigError(e.message(), "dataset.train_classes");
  }
}

ArchSpec arch_for(const ExperimentConfig& cfg, const ImageDims& dims) {
  ArchSpec a;
  a.height = dims.height;
  a.width = dims.width;
  a.channels = dims.channels;
  a.hidden = cfg.model.hidden;
  a.embed_dim = cfg.model.embed_dim;
  a.n_classes = cfg.episode.way;
  a.activation = cfg.model.activation;
  return a;
}

MetaTestConfig test_config(const ExperimentConfig& cfg) {
  MetaConfig m = cfg.meta;
  m.seed = cfg.seed;
  m.threads = cfg.threads;
  MetaTestConfig t = MetaTestConfig::from(m);
  t.mode = cfg.eval.ft_mode;
  if (cfg.eval.scope) t.scope = *cfg.eval.scope;
  if (cfg.eval.K) t.K = *cfg.eval.K;
  if (cfg.eval.alpha) t.alpha = *cfg.eval.alpha;
  if (cfg.eval.gamma_in) t.gamma_in = *cfg.eval.gamma_in;
  // Evaluation is always PGD, whatever attack training used.
  t.eval_attack = AttackConfig{};
  t.eval_attack.restarts = cfg.eval.restarts;
  t.eval_attack.steps = cfg.eval.attack_steps;
  return t;
}

std::vector<Episode> test_tasks(const ExperimentConfig& cfg, const Dataset& test) {
  std::vector<Episode> tasks;
  tasks.reserve(cfg.eval.tasks);
  for (std::size_t i = 0; i < cfg.eval.tasks; ++i) {
    tasks.push_back(sample_episode(test, cfg.episode, derive_seed(cfg.seed, {0xE7A1, i})));
  }
  return tasks;
}

}  // namespace rmaml::cli
