// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "rfscope/arch_graph.hpp"
#include "rfscope/tensor.hpp"

namespace rfscope {

struct EvalOptions {
  // Replaces relu with the identity, turning the graph into a purely linear
  // map (modulo maxpool). Used by analytic containment checks.
  bool relu_as_identity = false;
};

// Reproducible parameter initialization: conv weights are zero-mean with
// variance 2/fan_in (fan_in = C_in/g * k_f * k_t), biases zero, affine scale
// one and shift zero. Each node draws from its own counter-based substream
// keyed by (seed, node id), so the result is a pure function of
// (graph, seed), independent of platform and of unrelated graph edits.
WeightSet init_weights(const ArchGraph& graph, uint64_t seed);

struct ActivationStore {
  std::map<std::string, Tensor> by_node;

  const Tensor& at(const std::string& id) const;
};

// Evaluates every node in topological order and returns all activations.
// Conv is cross-correlation (no kernel flip) with stride, dilation, groups
// and zero padding; a conv with a damping flag multiplies its kernel by the
// factor grid first. Maxpool breaks ties toward the smaller flat index.
// coord_concat appends one channel holding f/(F-1). Throws ShapeError on
// inconsistent shapes and Error on non-finite activations.
ActivationStore forward(const ArchGraph& graph, const WeightSet& weights,
                        const Tensor& input, const EvalOptions& opts = {});

// Gradient of sum_c probe[c, probe_coord] with respect to the input, by
// reverse-mode accumulation. Maxpool routes gradient to its argmax, relu
// gates by forward sign, damped convs include the factor grid. Runs its own
// forward pass and releases per-node buffers as soon as they are consumed.
Tensor backward_input(const ArchGraph& graph, const WeightSet& weights,
                      const Tensor& input, Dim2 probe_coord,
                      const EvalOptions& opts = {});

// Central-difference check of backward_input at n_probes input pixels drawn
// from a seeded uniform stream over the probe unit's clipped input window
// (pixels outside it have identically zero gradient on both routes). Returns
// the maximum relative error |analytic - numeric| / max(|analytic|,
// |numeric|, 1e-8).
double grad_check(const ArchGraph& graph, const WeightSet& weights,
                  const Tensor& input, int n_probes, double h,
                  uint64_t seed = 0x5eedc0de, const EvalOptions& opts = {});

}  // namespace rfscope
