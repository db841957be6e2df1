// SPDX-License-Identifier: Apache-2.0
#include "rfscope/damping.hpp"

#include <cmath>

namespace rfscope {

const char* to_string(DampingMode mode) {
  return mode == DampingMode::literal ? "literal" : "centered";
}

DampingMode damping_mode_from_string(const std::string& s) {
  if (s == "literal") return DampingMode::literal;
  if (s == "centered") return DampingMode::centered;
  throw Error("unknown damping mode '" + s + "'");
}

namespace {

std::vector<double> axis_factors(int size, double m, DampingMode mode) {
  std::vector<double> f(size, 1.0);
  if (size <= 1) return f;  // degenerate axis: 1x1 kernels stay undamped
  for (int i = 0; i < size; ++i) {
    double dist, half;
    if (mode == DampingMode::literal) {
      half = size / 2.0;
      dist = std::fabs(i - half);
    } else {
      half = (size - 1) / 2.0;
      dist = std::fabs(i - half);
    }
    f[i] = 1.0 - m * dist / half;
  }
  return f;
}

}  // namespace

DampingMatrix damping_matrix(int t_size, int f_size, double m_t, double m_f,
                             DampingMode mode) {
  if (t_size < 1 || f_size < 1) throw Error("damping matrix sizes must be >= 1");
  if (m_t < 0.0 || m_t >= 1.0 || m_f < 0.0 || m_f >= 1.0) {
    throw Error("damping strengths must lie in [0,1)");
  }
  DampingMatrix c;
  c.t_size = t_size;
  c.f_size = f_size;
  c.m_t = m_t;
  c.m_f = m_f;
  c.mode = mode;
  c.time_factors = axis_factors(t_size, m_t, mode);
  c.freq_factors = axis_factors(f_size, m_f, mode);
  return c;
}

std::vector<double> DampingMatrix::grid() const {
  std::vector<double> g(static_cast<size_t>(t_size) * f_size);
  for (int t = 0; t < t_size; ++t) {
    for (int f = 0; f < f_size; ++f) {
      g[static_cast<size_t>(t) * f_size + f] = factor(t, f);
    }
  }
  return g;
}

ConvWeights damp_weights(const ConvWeights& weights, const DampingMatrix& c) {
  if (weights.kernel.time != c.t_size || weights.kernel.freq != c.f_size) {
    throw ShapeError("damping matrix is " + std::to_string(c.t_size) + "x" +
                     std::to_string(c.f_size) + " but kernel is " +
                     std::to_string(weights.kernel.time) + "x" +
                     std::to_string(weights.kernel.freq) + " (time x freq)");
  }
  ConvWeights out = weights;
  const int co_n = weights.out_channels;
  const int ci_n = weights.in_per_group;
  for (int co = 0; co < co_n; ++co) {
    for (int ci = 0; ci < ci_n; ++ci) {
      for (int kf = 0; kf < weights.kernel.freq; ++kf) {
        for (int kt = 0; kt < weights.kernel.time; ++kt) {
          out.at(co, ci, kf, kt) = weights.at(co, ci, kf, kt) * c.factor(kt, kf);
        }
      }
    }
  }
  return out;
}

BakedModel bake(const ArchGraph& graph, const WeightSet& weights) {
  BakedModel baked{graph, weights};
  for (auto& [id, node] : baked.graph.nodes) {
    if (node.kind != NodeKind::conv || !node.damping) continue;
    DampingMatrix c = damping_matrix(node.kernel.time, node.kernel.freq,
                                     node.damping->m_t, node.damping->m_f);
    auto it = baked.weights.conv.find(id);
    if (it == baked.weights.conv.end()) {
      throw Error("no weights for conv node '" + id + "'");
    }
    it->second = damp_weights(it->second, c);
    node.damping.reset();
  }
  return baked;
}

}  // namespace rfscope
