#include "rmaml/metalearn.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "parallel.hpp"
#include "rmaml/error.hpp"
#include "rmaml/rng.hpp"

namespace rmaml {

using ad::Array;
using ad::Tensor;

const char* to_string(FinetuneScope s) { return s == FinetuneScope::HeadOnly ? "head_only" : "full"; }
const char* to_string(FinetuneMode m) { return m == FinetuneMode::Adversarial ? "adversarial" : "standard"; }

FinetuneScope parse_scope(const std::string& name) {
  if (name == "full") return FinetuneScope::Full;
  if (name == "head_only") return FinetuneScope::HeadOnly;
  throw ConfigError("unknown scope '" + name + "' (expected full or head_only)", "scope");
}

FinetuneMode parse_ft_mode(const std::string& name) {
  if (name == "standard") return FinetuneMode::Standard;
  if (name == "adversarial") return FinetuneMode::Adversarial;
  throw ConfigError("unknown fine-tuning mode '" + name + "' (expected standard or adversarial)", "ft_mode");
}

void MetaConfig::validate() const {
  if (!(gamma_in >= 0.0) || std::isinf(gamma_in)) throw ConfigError("must be finite and >= 0", "gamma_in");
  if (!(gamma_out >= 0.0)) throw ConfigError("must be >= 0 or infinite", "gamma_out");
  if (!(gamma_cl >= 0.0) || std::isinf(gamma_cl)) throw ConfigError("must be finite and >= 0", "gamma_cl");
  if (!(alpha > 0.0)) throw ConfigError("must be > 0", "alpha");
  if (!(beta1 > 0.0)) throw ConfigError("must be > 0", "beta1");
  if (!(beta2 > 0.0)) throw ConfigError("must be > 0", "beta2");
  if (tasks_per_batch == 0) throw ConfigError("must be positive", "tasks_per_batch");
  if (!(contrastive.tau > 0.0)) throw ConfigError("must be > 0", "contrastive.tau");
  if (gamma_cl > 0.0) contrastive.transforms.validate();
  if (use_unlabeled && robust.kind != RobustKind::TRADES) {
    throw ConfigError("unlabeled data needs the TRADES regularizer", "use_unlabeled");
  }
  robust.validate();
}

namespace {

Tensor inner_loss(const ArchSpec& arch, const ParamTensors& params, const LabeledBatch& support,
                  const MetaConfig& cfg, double gamma_in, std::uint64_t seed) {
  Tensor loss = cross_entropy(logits(arch, params, Tensor(support.x)), support.y);
  if (gamma_in > 0.0) {
    loss = loss + ad::scale(regularizer(arch, params, support, std::nullopt, cfg.robust, seed).value, gamma_in);
  }
  return loss;
}

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericError(what + " is not finite");
}

}  // namespace

FineTuneResult inner_finetune(const ArchSpec& arch, const ParamTensors& w, const LabeledBatch& support,
                              const MetaConfig& cfg, FinetuneScope scope, double gamma_in, bool track_grad,
                              std::uint64_t seed) {
  if (support.size() == 0) throw ConfigError("support set is empty", "support");
  ad::Graph* graph = nullptr;
  for (const Tensor& t : w) {
    if (t.attached()) graph = t.graph();
  }
  if (track_grad && graph == nullptr) throw ConfigError("track_grad needs parameters on a graph", "track_grad");

  FineTuneResult out{track_grad ? w : detached(w), {}};
  ParamTensors& cur = out.adapted;
  const std::size_t first = scope == FinetuneScope::HeadOnly ? cur.size() - 2 : 0;
  for (std::size_t k = 0; k < cfg.K; ++k) {
    const std::uint64_t step_seed = derive_seed(seed, {k});
    if (track_grad) {
      const Tensor loss = inner_loss(arch, cur, support, cfg, gamma_in, step_seed);
      check_finite(loss.item(), "inner loss at step " + std::to_string(k));
      out.inner_losses.push_back(loss.item());
      const std::span<const Tensor> wrt(cur.data() + first, cur.size() - first);
      const auto grads = graph->grad(loss, wrt, !cfg.first_order);
      for (std::size_t i = 0; i < grads.size(); ++i) cur[first + i] = cur[first + i] - ad::scale(grads[i], cfg.alpha);
    } else {
      ad::Graph local;
      ParamTensors vars = cur;
      for (std::size_t i = first; i < vars.size(); ++i) vars[i] = local.variable(cur[i].value());
      const Tensor loss = inner_loss(arch, vars, support, cfg, gamma_in, step_seed);
      check_finite(loss.item(), "inner loss at step " + std::to_string(k));
      out.inner_losses.push_back(loss.item());
      const std::span<const Tensor> wrt(vars.data() + first, vars.size() - first);
      const auto grads = local.grad(loss, wrt);
      for (std::size_t i = 0; i < grads.size(); ++i) cur[first + i] = cur[first + i] - ad::scale(grads[i], cfg.alpha);
    }
  }
  return out;
}

TaskTerms task_terms(const ArchSpec& arch, const ParamTensors& w, const Episode& task, const MetaConfig& cfg,
                     std::uint64_t seed) {
  if (task.query.size() == 0) throw ConfigError("query set is empty", "query");
  const bool track = std::any_of(w.begin(), w.end(), [](const Tensor& t) { return t.attached(); });
  const auto ft = inner_finetune(arch, w, task.support, cfg, cfg.finetune_scope, cfg.gamma_in, track,
                                 derive_seed(seed, {1}));
  const ParamTensors& adapted = ft.adapted;
  const LabeledBatch& query = task.query;

  TaskTerms terms;
  terms.clean = cross_entropy(logits(arch, adapted, Tensor(query.x)), query.y);
  Array adversarial;
  if (cfg.robust_active()) {
    if (cfg.use_unlabeled && !task.unlabeled) throw ConfigError("episode has no unlabeled pool", "use_unlabeled");
    const auto pool = cfg.use_unlabeled ? task.unlabeled : std::nullopt;
    RobustTerm r = regularizer(arch, adapted, query, pool, cfg.robust, derive_seed(seed, {2}));
    terms.robust = r.value;
    // Labeled rows come first when the pool is appended.
    std::vector<double> rows(r.adversarial.values().begin(),
                             r.adversarial.values().begin() + static_cast<std::ptrdiff_t>(query.x.size()));
    adversarial = Array(query.x.shape(), std::move(rows));
  }
  if (cfg.gamma_cl > 0.0) {
    if (!cfg.robust_active()) {
      adversarial = adversarial_views(arch, adapted, query, cfg.robust.attack, derive_seed(seed, {3}));
    }
    const ImageDims dims{arch.height, arch.width, arch.channels};
    const ViewBatch views =
        make_views(query.x, dims, cfg.contrastive.transforms, cfg.contrastive.fill, derive_seed(seed, {4}));
    const auto pairing = symmetric_pairing(query.size());
    const auto loss_for = [&](const Array& positives) {
      const Tensor reps = representation(arch, adapted, Tensor(concat_rows(query.x, positives)));
      return contrastive_loss(reps, pairing, cfg.contrastive.tau, cfg.contrastive.normalize);
    };
    terms.contrastive = ad::scale(loss_for(views.positives) + loss_for(adversarial), 0.5);
  }
  return terms;
}

MetaObjective meta_objective(const ArchSpec& arch, const ParamTensors& w, std::span<const Episode> tasks,
                             const MetaConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (tasks.empty()) throw ConfigError("task batch is empty", "tasks");
  const double n = static_cast<double>(tasks.size());
  MetaObjective out;
  Tensor total;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TaskTerms t = task_terms(arch, w, tasks[i], cfg, derive_seed(seed, {i}));
    out.clean += t.clean.item() / n;
    Tensor task_total;
    if (cfg.adversarial_querying()) {
      task_total = t.robust;
    } else {
      task_total = t.clean;
      if (t.robust.valid()) task_total = task_total + ad::scale(t.robust, cfg.gamma_out);
    }
    if (t.robust.valid()) out.robust += t.robust.item() / n;
    if (t.contrastive.valid()) {
      out.contrastive += t.contrastive.item() / n;
      task_total = task_total + ad::scale(t.contrastive, cfg.gamma_cl);
    }
    total = total.valid() ? total + task_total : task_total;
  }
  out.total = ad::scale(total, 1.0 / n);
  return out;
}

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> flat_grad(const ArchSpec& arch, ad::Graph& g, const Tensor& out, const ParamTensors& w) {
  const auto grads = g.grad(out, w);
  const MetaModel packed = MetaModel::pack(arch, std::span<const Tensor>(grads));
  return {packed.params().begin(), packed.params().end()};
}

}  // namespace

MetaGradients meta_gradients(const MetaModel& w, std::span<const Episode> tasks, const MetaConfig& cfg,
                             std::uint64_t seed) {
  cfg.validate();
  if (tasks.empty()) throw ConfigError("task batch is empty", "tasks");
  struct PerTask {
    TaskTerms values;
    std::vector<double> clean, robust, contrastive;
    double c = 0, r = 0, l = 0;
  };
  std::vector<PerTask> per(tasks.size());
  const ArchSpec& arch = w.arch();
  detail::parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    ad::Graph g;
    const ParamTensors params = bind(g, w);
    const TaskTerms t = task_terms(arch, params, tasks[i], cfg, derive_seed(seed, {i}));
    PerTask& p = per[i];
    p.c = t.clean.item();
    if (!cfg.adversarial_querying()) p.clean = flat_grad(arch, g, t.clean, params);
    if (t.robust.valid()) {
      p.r = t.robust.item();
      p.robust = flat_grad(arch, g, t.robust, params);
    }
    if (t.contrastive.valid()) {
      p.l = t.contrastive.item();
      p.contrastive = flat_grad(arch, g, t.contrastive, params);
    }
  });

  const double n = static_cast<double>(tasks.size());
  MetaGradients out;
  const auto accumulate = [&](std::vector<double>& into, const std::vector<double>& g) {
    if (g.empty()) return;
    if (into.empty()) into.assign(g.size(), 0.0);
    for (std::size_t j = 0; j < g.size(); ++j) into[j] += g[j] / n;
  };
  for (const PerTask& p : per) {
    accumulate(out.clean, p.clean);
    accumulate(out.robust, p.robust);
    accumulate(out.contrastive, p.contrastive);
    out.metrics.clean += p.c / n;
    out.metrics.robust += p.r / n;
    out.metrics.contrastive += p.l / n;
  }
  out.metrics.grad_norm_clean = norm(out.clean);
  out.metrics.grad_norm_robust = norm(out.robust);
  out.metrics.grad_norm_contrastive = norm(out.contrastive);
  return out;
}

namespace {

void adam(std::vector<double>& dir, std::vector<double>& m, std::vector<double>& v, std::size_t t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (m.empty()) {
    m.assign(dir.size(), 0.0);
    v.assign(dir.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t j = 0; j < dir.size(); ++j) {
    m[j] = b1 * m[j] + (1 - b1) * dir[j];
    v[j] = b2 * v[j] + (1 - b2) * dir[j] * dir[j];
    dir[j] = (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
  }
}

}  // namespace

StepResult meta_step(const MetaModel& w, std::span<const Episode> tasks, const MetaConfig& cfg, std::uint64_t seed,
                     OuterState* state) {
  MetaGradients g = meta_gradients(w, tasks, cfg, seed);
  // Robust direction: gamma_out * grad(R) + gamma_cl * grad(l_CL), R at weight 1 in AQ mode.
  std::vector<double> robust;
  const double gamma_r = cfg.adversarial_querying() ? 1.0 : cfg.gamma_out;
  if (!g.robust.empty()) {
    robust = g.robust;
    for (double& v : robust) v *= gamma_r;
  }
  if (!g.contrastive.empty()) {
    if (robust.empty()) robust.assign(g.contrastive.size(), 0.0);
    for (std::size_t j = 0; j < robust.size(); ++j) robust[j] += cfg.gamma_cl * g.contrastive[j];
  }
  for (const auto* v : {&g.clean, &robust}) {
    for (double x : *v) {
      if (!std::isfinite(x)) {
        throw NumericError("non-finite meta-gradient (clean loss " + std::to_string(g.metrics.clean) +
                           ", robust " + std::to_string(g.metrics.robust) + ")");
      }
    }
  }
  if (cfg.adam && state != nullptr) {
    ++state->t;
    if (!g.clean.empty()) adam(g.clean, state->m_clean, state->v_clean, state->t);
    if (!robust.empty()) adam(robust, state->m_robust, state->v_robust, state->t);
  }
  std::vector<double> p(w.params().begin(), w.params().end());
  for (std::size_t j = 0; j < g.clean.size(); ++j) p[j] -= cfg.beta1 * g.clean[j];
  for (std::size_t j = 0; j < robust.size(); ++j) p[j] -= cfg.beta2 * robust[j];
  return {w.with_params(std::move(p)), g.metrics};
}

TaskSampler make_sampler(const Dataset& data, const EpisodeConfig& episode, std::size_t tasks_per_batch,
                         std::uint64_t seed) {
  episode.validate();
  auto shared = std::make_shared<const Dataset>(data);
  return [shared, episode, tasks_per_batch, seed](std::size_t epoch, std::size_t batch) {
    std::vector<Episode> out;
    out.reserve(tasks_per_batch);
    for (std::size_t i = 0; i < tasks_per_batch; ++i) {
      out.push_back(sample_episode(*shared, episode, derive_seed(seed, {epoch, batch, i})));
    }
    return out;
  };
}

TrainResult train(const MetaModel& w0, const TaskSampler& sampler, const MetaConfig& cfg,
                  const std::function<void(const LogRecord&)>& on_step) {
  cfg.validate();
  TrainResult out{w0, {}};
  OuterState state;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b) {
      const auto tasks = sampler(e, b);
      StepResult step = meta_step(out.model, tasks, cfg, derive_seed(cfg.seed, {0x5EED, e, b}), &state);
      out.model = std::move(step.model);
      out.log.push_back({e, b, step.metrics});
      if (on_step) on_step(out.log.back());
    }
  }
  return out;
}

std::string to_ndjson(const LogRecord& r) {
  char buf[512];
  const StepMetrics& m = r.metrics;
  std::snprintf(buf, sizeof buf,
                "{\"epoch\":%zu,\"batch\":%zu,\"clean_term\":%.17g,\"robust_term\":%.17g,\"cl_term\":%.17g,"
                "\"grad_norms\":{\"clean\":%.17g,\"robust\":%.17g,\"cl\":%.17g}}",
                r.epoch, r.batch, m.clean, m.robust, m.contrastive, m.grad_norm_clean, m.grad_norm_robust,
                m.grad_norm_contrastive);
  return buf;
}

MetaTestConfig MetaTestConfig::from(const MetaConfig& cfg) {
  MetaTestConfig t;
  t.scope = cfg.finetune_scope;
  t.K = cfg.K;
  t.alpha = cfg.alpha;
  t.finetune_robust = cfg.robust;
  if (std::isfinite(cfg.gamma_out) && cfg.gamma_out > 0.0) {
    t.gamma_in = cfg.gamma_out;
  } else {
    t.gamma_in = cfg.robust.kind == RobustKind::TRADES ? 5.0 : 0.2;
  }
  t.eval_attack = cfg.robust.attack;
  t.seed = cfg.seed;
  t.threads = cfg.threads;
  return t;
}

EvalRow summarize(double epsilon, std::span<const double> accs) {
  EvalRow row;
  row.epsilon = epsilon;
  row.n_tasks = accs.size();
  if (accs.empty()) return row;
  const double n = static_cast<double>(accs.size());
  double mean = 0.0;
  for (double a : accs) mean += a;
  mean /= n;
  double ss = 0.0;
  for (double a : accs) ss += (a - mean) * (a - mean);
  row.accuracy = mean;
  row.ci = accs.size() > 1 ? 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
  return row;
}

namespace {

double accuracy(const Array& logits, const std::vector<int>& labels) {
  const auto pred = predict(logits);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace

EvalReport meta_test(const MetaModel& w, std::span<const Episode> tasks, const MetaTestConfig& cfg,
                     std::span<const double> epsilons) {
  const auto start = std::chrono::steady_clock::now();
  if (tasks.empty()) throw ConfigError("no test tasks", "tasks");
  std::vector<double> eps(epsilons.begin(), epsilons.end());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] >= 0.0) || (i > 0 && eps[i] <= eps[i - 1])) {
      throw ConfigError("epsilons must be >= 0 and strictly ascending", "epsilons");
    }
  }
  if (eps.empty() || eps.front() != 0.0) eps.insert(eps.begin(), 0.0);
  cfg.eval_attack.validate();
  cfg.finetune_robust.validate();

  MetaConfig ft;
  ft.K = cfg.K;
  ft.alpha = cfg.alpha;
  ft.robust = cfg.finetune_robust;
  const double gamma_in = cfg.mode == FinetuneMode::Adversarial ? cfg.gamma_in : 0.0;
  const ArchSpec& arch = w.arch();
  const ParamTensors base = constants(w);

  // acc[i][e]: task i at epsilon index e; column 0 is the clean accuracy.
  std::vector<std::vector<double>> acc(tasks.size());
  detail::parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(cfg.seed, {0x7E57, i});
    const auto adapted =
        inner_finetune(arch, base, tasks[i].support, ft, cfg.scope, gamma_in, false, derive_seed(seed, {1})).adapted;
    const LabeledBatch& q = tasks[i].query;
    const double sa = accuracy(logits(arch, adapted, Tensor(q.x)).value(), q.y);
    acc[i].push_back(sa);
    for (std::size_t e = 1; e < eps.size(); ++e) {
      AttackConfig attack = cfg.eval_attack;
      attack.epsilon = eps[e];
      RobustSpec spec;
      spec.attack = attack;
      const Array x_adv = at_regularizer(arch, adapted, q, spec, derive_seed(seed, {2, e})).adversarial;
      acc[i].push_back(accuracy(logits(arch, adapted, Tensor(x_adv)).value(), q.y));
    }
  });

  EvalReport report;
  for (std::size_t e = 0; e < eps.size(); ++e) {
    std::vector<double> col;
    for (const auto& a : acc) col.push_back(a[e]);
    report.rows.push_back(summarize(eps[e], col));
  }
  report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace rmaml
