// SPDX-License-Identifier: Apache-2.0
#include "rfscope/erf_probe.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "rfscope/io.hpp"
#include "rfscope/rng.hpp"

namespace rfscope {

namespace {

// Channel reduction: sum of absolute gradient values per pixel.
std::vector<double> reduce_abs(const Tensor& grad) {
  const size_t plane = static_cast<size_t>(grad.shape.freq) * grad.shape.time;
  std::vector<double> out(plane, 0.0);
  for (int c = 0; c < grad.shape.channels; ++c) {
    const double* src = &grad.data[c * plane];
    for (size_t i = 0; i < plane; ++i) out[i] += std::fabs(src[i]);
  }
  return out;
}

}  // namespace

GradientMap gradient_map(const ArchGraph& graph, const WeightSet& weights,
                         const std::vector<Tensor>& inputs,
                         std::optional<Dim2> probe, const EvalOptions& opts,
                         int workers) {
  if (inputs.empty()) throw Error("gradient_map needs at least one input");

  Dim2 coord;
  if (probe) {
    coord = *probe;
  } else {
    const TensorShape probe_shape =
        propagate_shapes(graph).at(graph.probe_node().id);
    coord = {probe_shape.freq / 2, probe_shape.time / 2};
  }

  const int n = static_cast<int>(inputs.size());
  std::vector<std::vector<double>> reduced(n);
  workers = std::max(1, std::min(workers, n));

  if (workers == 1) {
    for (int i = 0; i < n; ++i) {
      reduced[i] = reduce_abs(backward_input(graph, weights, inputs[i], coord, opts));
    }
  } else {
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto run = [&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          reduced[i] =
              reduce_abs(backward_input(graph, weights, inputs[i], coord, opts));
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  GradientMap map;
  map.freq = graph.input_shape.freq;
  map.time = graph.input_shape.time;
  map.n_inputs = n;
  map.probe_coord = coord;
  map.grid.assign(static_cast<size_t>(map.freq) * map.time, 0.0);
  // Accumulate in input order so the result does not depend on the worker
  // count or scheduling.
  for (int i = 0; i < n; ++i) {
    for (size_t j = 0; j < map.grid.size(); ++j) map.grid[j] += reduced[i][j];
  }
  const double inv = 1.0 / n;
  for (double& v : map.grid) v *= inv;
  return map;
}

namespace {

struct Moments {
  double mu = 0.0;
  double sigma = 0.0;
};

// Weighted moments of a marginal under 1-based pixel coordinates.
Moments marginal_moments(const std::vector<double>& m) {
  double mass = 0.0, first = 0.0;
  for (size_t i = 0; i < m.size(); ++i) {
    mass += m[i];
    first += (static_cast<double>(i) + 1.0) * m[i];
  }
  if (mass <= 0.0) {
    throw DegenerateDataError("gradient map carries no mass");
  }
  Moments out;
  out.mu = first / mass;
  double second = 0.0;
  for (size_t i = 0; i < m.size(); ++i) {
    const double d = static_cast<double>(i) + 1.0 - out.mu;
    second += d * d * m[i];
  }
  out.sigma = std::sqrt(second / mass);
  return out;
}

}  // namespace

ErfStats erf_stats(const GradientMap& map) {
  ErfStats s;
  s.marginal_t.assign(map.time, 0.0);
  s.marginal_f.assign(map.freq, 0.0);
  for (int f = 0; f < map.freq; ++f) {
    for (int t = 0; t < map.time; ++t) {
      const double v = map.at(f, t);
      s.marginal_t[t] += v;
      s.marginal_f[f] += v;
    }
  }
  const Moments mt = marginal_moments(s.marginal_t);
  const Moments mf = marginal_moments(s.marginal_f);
  s.mu_t = mt.mu;
  s.sigma_t = mt.sigma;
  s.e_t = 4.0 * mt.sigma;
  s.mu_f = mf.mu;
  s.sigma_f = mf.sigma;
  s.e_f = 4.0 * mf.sigma;
  return s;
}

double mass_fraction(const GradientMap& map, Axis axis, int lo, int hi) {
  const int size = axis == Axis::time ? map.time : map.freq;
  if (lo > hi) throw Error("mass_fraction interval is empty");
  if (lo < 1 || hi > size) throw Error("mass_fraction interval out of range");

  double inside = 0.0, total = 0.0;
  for (int f = 0; f < map.freq; ++f) {
    for (int t = 0; t < map.time; ++t) {
      const double v = map.at(f, t);
      total += v;
      const int idx = (axis == Axis::time ? t : f) + 1;
      if (idx >= lo && idx <= hi) inside += v;
    }
  }
  if (total <= 0.0) throw DegenerateDataError("gradient map carries no mass");
  return inside / total;
}

namespace {

std::string to_pgm(const GradientMap& map) {
  double vmax = 0.0;
  for (double v : map.grid) vmax = std::max(vmax, v);
  std::string out = "P2\n" + std::to_string(map.time) + " " +
                    std::to_string(map.freq) + "\n255\n";
  std::string line;
  auto flush_line = [&]() {
    out += line;
    out.push_back('\n');
    line.clear();
  };
  for (int f = 0; f < map.freq; ++f) {
    for (int t = 0; t < map.time; ++t) {
      const int level =
          vmax > 0.0 ? static_cast<int>(std::lround(255.0 * map.at(f, t) / vmax))
                     : 0;
      std::string tok = std::to_string(level);
      if (!line.empty() && line.size() + 1 + tok.size() > 70) flush_line();
      if (!line.empty()) line.push_back(' ');
      line += tok;
    }
    flush_line();  // one raster row ends each text line block
  }
  return out;
}

}  // namespace

void export_heatmap(const GradientMap& map,
                    const std::optional<RfWindow>& probe_window,
                    const std::string& path_base, HeatmapFormat format,
                    uint64_t seed) {
  if (format == HeatmapFormat::pgm) {
    write_file(path_base + ".pgm", to_pgm(map));
  } else {
    write_file(path_base + ".csv", matrix_to_csv(map.freq, map.time, map.grid.data()));
  }

  const ErfStats s = erf_stats(map);
  auto box = [](double mu, double sigma, int size) {
    return nlohmann::json::array(
        {std::max(1.0, mu - 2.0 * sigma),
         std::min(static_cast<double>(size), mu + 2.0 * sigma)});
  };
  nlohmann::json j;
  j["mu"] = {s.mu_f, s.mu_t};
  j["sigma"] = {s.sigma_f, s.sigma_t};
  j["E"] = {s.e_f, s.e_t};
  j["erf_box"] = {box(s.mu_f, s.sigma_f, map.freq),
                  box(s.mu_t, s.sigma_t, map.time)};
  if (probe_window) {
    // Stored 1-based to match the statistics' pixel coordinates.
    j["max_rf_box"] = {
        {probe_window->freq.clipped.lo + 1, probe_window->freq.clipped.hi + 1},
        {probe_window->time.clipped.lo + 1, probe_window->time.clipped.hi + 1}};
  } else {
    j["max_rf_box"] = nullptr;
  }
  j["n_inputs"] = map.n_inputs;
  j["probe"] = {map.probe_coord.freq, map.probe_coord.time};
  j["seed"] = seed;
  write_file(path_base + ".json", j.dump(2) + "\n");
}

std::vector<Tensor> make_noise_inputs(const TensorShape& shape, int n,
                                      uint64_t seed) {
  if (n < 1) throw Error("need at least one noise input");
  std::vector<Tensor> inputs;
  inputs.reserve(n);
  for (int i = 0; i < n; ++i) {
    SplitMix64 rng(substream_seed(seed, "input/" + std::to_string(i)));
    Tensor t(shape);
    for (double& v : t.data) v = rng.next_normal();
    inputs.push_back(std::move(t));
  }
  return inputs;
}

}  // namespace rfscope
