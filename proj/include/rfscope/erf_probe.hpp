// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rfscope/rf_analysis.hpp"
#include "rfscope/tensor.hpp"
#include "rfscope/tensor_engine.hpp"

namespace rfscope {

enum class Axis { freq, time };

// Mean absolute input gradient over a set of inputs, reduced over channels
// by summing absolute values. grid is (freq rows x time columns), matching
// the input's spatial shape.
struct GradientMap {
  int freq = 0;
  int time = 0;
  std::vector<double> grid;
  int n_inputs = 0;
  Dim2 probe_coord{0, 0};  // probe-map coordinate the gradients were seeded at

  double at(int f, int t) const {
    return grid[static_cast<size_t>(f) * time + t];
  }
  double& at(int f, int t) { return grid[static_cast<size_t>(f) * time + t]; }
};

// Weighted first and second moments of the map's marginals, in 1-based
// pixel coordinates. E is defined as 4*sigma on each axis.
struct ErfStats {
  double mu_t = 0, sigma_t = 0, e_t = 0;
  double mu_f = 0, sigma_f = 0, e_f = 0;
  std::vector<double> marginal_t;  // length T: mass summed over frequency
  std::vector<double> marginal_f;  // length F: mass summed over time
};

// Runs one backward pass per input (probe gradient seeded at `probe`, or at
// the probe map's spatial midpoint when unset) and averages the absolute
// input gradients. Per-input passes may run on up to `workers` threads;
// accumulation always happens in input order, so the result is independent
// of the worker count. Throws Error on an empty input list.
GradientMap gradient_map(const ArchGraph& graph, const WeightSet& weights,
                         const std::vector<Tensor>& inputs,
                         std::optional<Dim2> probe = std::nullopt,
                         const EvalOptions& opts = {}, int workers = 1);

// Throws DegenerateDataError when the map carries no mass.
ErfStats erf_stats(const GradientMap& map);

// Fraction of the axis marginal's mass inside the 1-based inclusive
// interval [lo, hi]. Throws Error on an empty or out-of-range interval.
double mass_fraction(const GradientMap& map, Axis axis, int lo, int hi);

enum class HeatmapFormat { pgm, csv };

// Writes `<path_base>.pgm` (P2, maxval 255, linearly scaled) or
// `<path_base>.csv` (full precision) plus a `<path_base>.json` sidecar with
// the stats, the [mu-2sigma, mu+2sigma] boxes and, when a window is given,
// the clipped maximum-RF box, all in 1-based input-pixel coordinates.
void export_heatmap(const GradientMap& map,
                    const std::optional<RfWindow>& probe_window,
                    const std::string& path_base, HeatmapFormat format,
                    uint64_t seed);

// Seeded standard-normal noise inputs of the graph's input shape, one
// substream per input index.
std::vector<Tensor> make_noise_inputs(const TensorShape& shape, int n,
                                      uint64_t seed);

}  // namespace rfscope
