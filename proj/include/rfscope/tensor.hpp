// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "rfscope/arch_graph.hpp"
#include "rfscope/errors.hpp"

namespace rfscope {

// Dense (channels, freq, time) value grid, row-major with time contiguous.
// All arithmetic in the engine is 64-bit.
struct Tensor {
  TensorShape shape{0, 0, 0};
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(TensorShape s)
      : shape(s), data(static_cast<size_t>(s.volume()), 0.0) {}

  size_t index(int c, int f, int t) const {
    return (static_cast<size_t>(c) * shape.freq + f) * shape.time + t;
  }
  double& at(int c, int f, int t) { return data[index(c, f, t)]; }
  double at(int c, int f, int t) const { return data[index(c, f, t)]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Weight block of one convolution: (out_channels, in_channels/groups,
// kernel_freq, kernel_time) plus one bias per output channel.
struct ConvWeights {
  int out_channels = 0;
  int in_per_group = 0;
  Dim2 kernel{1, 1};
  std::vector<double> w;
  std::vector<double> bias;

  size_t index(int co, int ci, int kf, int kt) const {
    return ((static_cast<size_t>(co) * in_per_group + ci) * kernel.freq + kf) *
               kernel.time +
           kt;
  }
  double& at(int co, int ci, int kf, int kt) { return w[index(co, ci, kf, kt)]; }
  double at(int co, int ci, int kf, int kt) const {
    return w[index(co, ci, kf, kt)];
  }

  friend bool operator==(const ConvWeights&, const ConvWeights&) = default;
};

// Per-channel scale and shift of an affine node.
struct AffineParams {
  std::vector<double> scale;
  std::vector<double> shift;

  friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

// All learnable parameters of a graph, keyed by node id.
struct WeightSet {
  std::map<std::string, ConvWeights> conv;
  std::map<std::string, AffineParams> affine;

  friend bool operator==(const WeightSet&, const WeightSet&) = default;
};

}  // namespace rfscope
