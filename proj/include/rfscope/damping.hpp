// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "rfscope/arch_graph.hpp"
#include "rfscope/tensor.hpp"

namespace rfscope {

// How axis factors are indexed. `literal` measures distance from size/2
// using zero-based indices, which for odd sizes gives an asymmetric profile
// with no unit element (e.g. 0.1, 0.7, 0.7 at size 3, m=0.9). `centered`
// measures from (size-1)/2 so the profile is symmetric with a unit center.
// Literal is the default.
enum class DampingMode { literal, centered };

const char* to_string(DampingMode mode);
DampingMode damping_mode_from_string(const std::string& s);

// Separable spatial factor grid multiplied elementwise into convolution
// kernels. factor(t,f) = time_factors[t] * freq_factors[f]; every factor is
// in (0,1]. A size-1 axis always has factor 1, so 1x1 kernels are never
// damped.
struct DampingMatrix {
  int t_size = 1;
  int f_size = 1;
  double m_t = 0.0;
  double m_f = 0.0;
  DampingMode mode = DampingMode::literal;
  std::vector<double> time_factors;
  std::vector<double> freq_factors;

  double factor(int t, int f) const {
    return time_factors[t] * freq_factors[f];
  }
  // Row-major t-major grid, for export.
  std::vector<double> grid() const;
};

// Builds the factor grid for a t_size x f_size kernel. m_t and m_f must be
// in [0,1); throws Error otherwise.
DampingMatrix damping_matrix(int t_size, int f_size, double m_t, double m_f,
                             DampingMode mode = DampingMode::literal);

// Elementwise product of every spatial kernel slice with the factor grid;
// identical across channel pairs, biases untouched. Throws ShapeError when
// the kernel extent does not match the grid.
ConvWeights damp_weights(const ConvWeights& weights, const DampingMatrix& c);

struct BakedModel {
  ArchGraph graph;
  WeightSet weights;
};

// Folds every conv node's damping flag into its stored weights and clears
// the flags. Forward results are unchanged down to the bit: the engine
// multiplies weights by the same factors in the same order either way.
// Baking an already-baked model is a no-op.
BakedModel bake(const ArchGraph& graph, const WeightSet& weights);

}  // namespace rfscope
