#include <benchmark/benchmark.h>

#include "rmaml/attacks.hpp"
#include "rmaml/metalearn.hpp"
#include "rmaml/rng.hpp"

namespace {

using rmaml::ad::Tensor;

struct Setup {
  rmaml::Dataset data;
  rmaml::ArchSpec arch;
  rmaml::MetaModel model;
  std::vector<rmaml::Episode> tasks;
};

const Setup& setup() {
  static const Setup s = [] {
    rmaml::SynthConfig sc;
    auto data = rmaml::synth_dataset(sc);
    rmaml::ArchSpec arch;
    arch.hidden = {64};
    arch.embed_dim = 32;
    auto model = rmaml::init_model(arch, 1);
    std::vector<rmaml::Episode> tasks;
    for (std::uint64_t i = 0; i < 4; ++i) tasks.push_back(rmaml::sample_episode(data, {}, i));
    return Setup{std::move(data), arch, std::move(model), std::move(tasks)};
  }();
  return s;
}

rmaml::MetaConfig preset(double gamma_in, double gamma_out, rmaml::AttackKind kind) {
  rmaml::MetaConfig c;
  c.alpha = 0.1;
  c.gamma_in = gamma_in;
  c.gamma_out = gamma_out;
  c.robust.attack.epsilon = 16;
  c.robust.attack.kind = kind;
  if (kind == rmaml::AttackKind::FGSM) c.robust.attack.steps = 1;
  return c;
}

void run_step(benchmark::State& state, const rmaml::MetaConfig& cfg) {
  const Setup& s = setup();
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto r = rmaml::meta_step(s.model, s.tasks, cfg, seed++);
    benchmark::DoNotOptimize(r.model.params().data());
  }
}

void BM_MetaStepMaml(benchmark::State& state) { run_step(state, preset(0, 0, rmaml::AttackKind::PGD)); }
void BM_MetaStepOutPgd(benchmark::State& state) { run_step(state, preset(0, 0.2, rmaml::AttackKind::PGD)); }
void BM_MetaStepOutFgsm(benchmark::State& state) { run_step(state, preset(0, 0.2, rmaml::AttackKind::FGSM)); }
void BM_MetaStepBoth(benchmark::State& state) { run_step(state, preset(0.2, 0.2, rmaml::AttackKind::PGD)); }

void BM_MetaStepFirstOrder(benchmark::State& state) {
  auto cfg = preset(0, 0, rmaml::AttackKind::PGD);
  cfg.first_order = true;
  run_step(state, cfg);
}

void BM_PgdQuery(benchmark::State& state) {
  const Setup& s = setup();
  const auto params = rmaml::constants(s.model);
  const auto& q = s.tasks[0].query;
  rmaml::AttackConfig a;
  a.epsilon = 16;
  a.steps = static_cast<std::size_t>(state.range(0));
  const rmaml::AttackLoss loss = [&](const Tensor& x) {
    return rmaml::cross_entropy(rmaml::logits(s.arch, params, x), q.y);
  };
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(rmaml::pgd_attack(loss, q.x, a, seed++).values().data());
}

void BM_InnerFinetune(benchmark::State& state) {
  const Setup& s = setup();
  rmaml::MetaConfig c;
  c.K = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    rmaml::ad::Graph g;
    auto r = rmaml::inner_finetune(s.arch, rmaml::bind(g, s.model), s.tasks[0].support, c,
                                   rmaml::FinetuneScope::Full, 0.0, true, 0);
    benchmark::DoNotOptimize(r.inner_losses.data());
  }
}

}  // namespace

BENCHMARK(BM_MetaStepMaml)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MetaStepFirstOrder)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MetaStepOutPgd)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MetaStepOutFgsm)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MetaStepBoth)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PgdQuery)->Arg(1)->Arg(10)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_InnerFinetune)->Arg(1)->Arg(5)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
