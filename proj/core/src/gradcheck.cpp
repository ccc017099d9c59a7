#include <algorithm>
#include <cmath>

#include "rmaml/autodiff.hpp"
#include "rmaml/error.hpp"

namespace rmaml::ad {

double finite_diff_check(Graph& graph, const Tensor& output, const Tensor& wrt, double step) {
  if (!(step > 0.0)) throw ConfigError("finite_diff_check: step must be positive", "step");
  if (wrt.graph() != &graph || graph.node(wrt.node()).op != Op::Input) {
    throw Error("finite_diff_check: wrt must be an input node of the graph");
  }
  const Tensor analytic = graph.grad(output, std::span(&wrt, 1))[0];
  const Tensor outs[] = {output};

  Array probe = wrt.value();
  double worst = 0.0;
  for (std::size_t j = 0; j < probe.size(); ++j) {
    const double x0 = probe[j];
    probe[j] = x0 + step;
    const double up = graph.replay({{wrt.node(), probe}}, outs)[0].item();
    probe[j] = x0 - step;
    const double down = graph.replay({{wrt.node(), probe}}, outs)[0].item();
    probe[j] = x0;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic.value()[j];
    worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + 1e-8));
  }
  return worst;
}

}  // namespace rmaml::ad
