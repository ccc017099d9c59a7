#include "rmaml/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "rmaml/error.hpp"
#include "rmaml/tasks.hpp"

namespace rmaml {

using ad::Array;
using ad::Tensor;

EvalReport ra_sweep(const MetaModel& model, std::span<const Episode> tasks, std::span<const double> epsilons,
                    std::size_t attack_steps, FinetuneMode mode, FinetuneScope scope, MetaTestConfig base) {
  base.mode = mode;
  base.scope = scope;
  base.eval_attack.kind = AttackKind::PGD;
  base.eval_attack.steps = attack_steps;
  return meta_test(model, tasks, base, epsilons);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".json";
  return p;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw IoError("cannot write " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
T parse_field(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  T v{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

void emit_report(const EvalReport& report, const std::filesystem::path& path) {
  std::string csv = std::string(kReportHeader) + "\n";
  for (const EvalRow& r : report.rows) {
    csv += fmt(r.epsilon) + "," + fmt(r.accuracy) + "," + fmt(r.ci) + "," + std::to_string(r.n_tasks) + "\n";
  }
  nlohmann::json side;
  side["config"] = report.config_echo.empty() ? nlohmann::json() : nlohmann::json::parse(report.config_echo);
  side["wall_time_seconds"] = report.wall_time_seconds;
  write_text(path, csv);
  write_text(sidecar(path), side.dump(2) + "\n");
}

EvalReport load_report(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw FormatError(path.string() + ": expected header '" + kReportHeader + "'");
  }
  EvalReport report;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (cells.size() != 4) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 4 fields, got " +
                        std::to_string(cells.size()));
    }
    report.rows.push_back({parse_field<double>(cells[0], path, lineno), parse_field<double>(cells[1], path, lineno),
                           parse_field<double>(cells[2], path, lineno),
                           parse_field<std::size_t>(cells[3], path, lineno)});
  }
  const auto side_path = sidecar(path);
  if (std::filesystem::exists(side_path)) {
    try {
      const auto side = nlohmann::json::parse(read_text(side_path));
      if (!side.at("config").is_null()) report.config_echo = side.at("config").dump();
      report.wall_time_seconds = side.at("wall_time_seconds").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(side_path.string() + ": " + e.what());
    }
  }
  return report;
}

void InvertConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("step_size must be > 0", "step_size");
}

namespace {

struct Activation1 {
  double value;
  Array grad;
};

Activation1 activation(const MetaModel& model, const ParamTensors& params, const Array& x, std::size_t neuron) {
  ad::Graph g;
  Tensor xv = g.variable(x);
  Array pick = Array::zeros({1, model.arch().embed_dim});
  pick.values()[neuron] = 1.0;
  Tensor r = ad::sum(ad::mul(representation(model.arch(), params, xv), Tensor(pick)));
  std::vector<Tensor> wrt = {xv};
  Array grad = g.grad(r, wrt)[0].value();
  if (!std::isfinite(r.item()) || !grad.all_finite()) throw NumericError("invert: non-finite activation or gradient");
  return {r.item(), std::move(grad)};
}

Array ascend(const Array& x, const Array& grad, double step) {
  Array out = x;
  auto v = out.values();
  const auto g = grad.values();
  for (std::size_t j = 0; j < v.size(); ++j) {
    const double s = g[j] > 0 ? 1.0 : (g[j] < 0 ? -1.0 : 0.0);
    v[j] = std::clamp(v[j] + step * s, kPixelMin, kPixelMax);
  }
  return out;
}

}  // namespace

IAMResult invert_neuron(const MetaModel& model, const Array& seed_image, std::size_t neuron_index,
                        const InvertConfig& cfg) {
  cfg.validate();
  const ArchSpec& arch = model.arch();
  if (neuron_index >= arch.embed_dim) {
    throw ConfigError("neuron index " + std::to_string(neuron_index) + " out of range (embed_dim " +
                          std::to_string(arch.embed_dim) + ")",
                      "neuron");
  }
  if (seed_image.shape() != ad::Shape{1, arch.input_size()}) {
    throw ShapeError("invert: seed image must be [1, " + std::to_string(arch.input_size()) + "], got " +
                     ad::to_string(seed_image.shape()));
  }
  const ParamTensors params = constants(model);
  IAMResult res{seed_image, seed_image, neuron_index, {}};
  for (double& v : res.inverted_image.values()) v = std::clamp(v, kPixelMin, kPixelMax);

  Activation1 cur = activation(model, params, res.inverted_image, neuron_index);
  res.objective_trace.push_back(cur.value);
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    double step = cfg.step_size;
    for (std::size_t b = 0;; ++b) {
      Array cand = ascend(res.inverted_image, cur.grad, step);
      Activation1 next = activation(model, params, cand, neuron_index);
      if (!cfg.backtracking || next.value > cur.value) {
        res.inverted_image = std::move(cand);
        cur = std::move(next);
        break;
      }
      if (b == cfg.max_backtracks) break;
      step *= 0.5;
    }
    res.objective_trace.push_back(cur.value);
  }
  return res;
}

void write_iam(const std::filesystem::path& dir, const IAMResult& result, const ArchSpec& arch) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const ImageDims dims{arch.height, arch.width, arch.channels};
  const auto px = result.inverted_image.values();
  if (px.size() != dims.size()) throw ShapeError("write_iam: image does not match the architecture");
  std::vector<std::uint8_t> bytes(px.size());
  for (std::size_t j = 0; j < px.size(); ++j) {
    bytes[j] = static_cast<std::uint8_t>(std::lround(std::clamp(px[j], kPixelMin, kPixelMax)));
  }
  save_dataset(dir / "iam.rmld", Dataset(dims, 1, 1, bytes));

  std::string pgm = "P2\n" + std::to_string(dims.width * dims.channels) + " " + std::to_string(dims.height) + "\n255\n";
  for (std::size_t y = 0; y < dims.height; ++y) {
    for (std::size_t c = 0; c < dims.channels; ++c) {
      for (std::size_t x = 0; x < dims.width; ++x) {
        pgm += std::to_string(bytes[(y * dims.width + x) * dims.channels + c]);
        pgm += (c + 1 == dims.channels && x + 1 == dims.width) ? "\n" : " ";
      }
    }
  }
  write_text(dir / "iam.pgm", pgm);

  std::string trace = "step,activation\n";
  for (std::size_t k = 0; k < result.objective_trace.size(); ++k) {
    trace += std::to_string(k) + "," + fmt(result.objective_trace[k]) + "\n";
  }
  write_text(dir / "trace.csv", trace);
}

}  // namespace rmaml
