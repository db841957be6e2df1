// SPDX-License-Identifier: Apache-2.0
#include "rfscope/tensor_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "rfscope/damping.hpp"
#include "rfscope/rf_analysis.hpp"  // effective_kernel, probe window sampling
#include "rfscope/rng.hpp"

namespace rfscope {

const Tensor& ActivationStore::at(const std::string& id) const {
  auto it = by_node.find(id);
  if (it == by_node.end()) throw Error("no activation stored for node '" + id + "'");
  return it->second;
}

namespace {

void check_finite(const Tensor& t, const std::string& node_id) {
  for (double v : t.data) {
    if (!std::isfinite(v)) {
      throw Error("non-finite activation at node '" + node_id + "'");
    }
  }
}

const ConvWeights& conv_params(const WeightSet& weights, const NodeSpec& n) {
  auto it = weights.conv.find(n.id);
  if (it == weights.conv.end()) {
    throw ShapeError("no conv weights for node '" + n.id + "'");
  }
  const ConvWeights& w = it->second;
  if (w.out_channels != n.out_channels ||
      w.in_per_group != n.in_channels / n.groups || !(w.kernel == n.kernel) ||
      w.w.size() != static_cast<size_t>(w.out_channels) * w.in_per_group *
                        w.kernel.freq * w.kernel.time ||
      w.bias.size() != static_cast<size_t>(w.out_channels)) {
    throw ShapeError("weight block of conv '" + n.id +
                     "' does not match the node spec");
  }
  return w;
}

const AffineParams& affine_params(const WeightSet& weights, const NodeSpec& n) {
  auto it = weights.affine.find(n.id);
  if (it == weights.affine.end()) {
    throw ShapeError("no affine parameters for node '" + n.id + "'");
  }
  const AffineParams& a = it->second;
  if (a.scale.size() != static_cast<size_t>(n.in_channels) ||
      a.shift.size() != a.scale.size()) {
    throw ShapeError("affine parameters of '" + n.id +
                     "' do not match the node spec");
  }
  return a;
}

// Geometry of one conv/pool axis: effective kernel, stride, left pad and the
// output extent.
struct AxisGeom {
  int k_eff;
  int stride;
  int pad;
  int out;
};

AxisGeom axis_geom(int in, int k, int d, int s, Padding padding) {
  AxisGeom g;
  g.k_eff = static_cast<int>(effective_kernel(k, d));
  g.stride = s;
  g.pad = pad_left(g.k_eff, padding);
  g.out = spatial_out(in, g.k_eff, s, padding);
  return g;
}

// Valid output range [lo, hi] along one axis for a fixed kernel tap, i.e.
// the coordinates whose input sample o*stride + base lies inside [0, in).
std::pair<int, int> valid_out_range(int base, int stride, int in, int out) {
  int lo = base < 0 ? (-base + stride - 1) / stride : 0;
  int hi = (in - 1 - base) / stride;
  return {std::max(lo, 0), std::min(hi, out - 1)};
}

Tensor conv_forward(const NodeSpec& n, const ConvWeights& wts, const Tensor& in) {
  const AxisGeom gf = axis_geom(in.shape.freq, n.kernel.freq, n.dilation.freq,
                                n.stride.freq, n.padding);
  const AxisGeom gt = axis_geom(in.shape.time, n.kernel.time, n.dilation.time,
                                n.stride.time, n.padding);
  const int groups = n.groups;
  const int ci_per = n.in_channels / groups;
  const int co_per = n.out_channels / groups;
  const int Fi = in.shape.freq, Ti = in.shape.time;
  const int Fo = gf.out, To = gt.out;

  Tensor out({n.out_channels, Fo, To});
  for (int co = 0; co < n.out_channels; ++co) {
    double* plane = &out.data[static_cast<size_t>(co) * Fo * To];
    std::fill(plane, plane + static_cast<size_t>(Fo) * To, wts.bias[co]);
  }

  for (int g = 0; g < groups; ++g) {
    for (int coi = 0; coi < co_per; ++coi) {
      const int co = g * co_per + coi;
      for (int cii = 0; cii < ci_per; ++cii) {
        const int ci = g * ci_per + cii;
        for (int kf = 0; kf < n.kernel.freq; ++kf) {
          const int fbase = kf * n.dilation.freq - gf.pad;
          for (int kt = 0; kt < n.kernel.time; ++kt) {
            const double w = wts.at(co, cii, kf, kt);
            const int tbase = kt * n.dilation.time - gt.pad;
            const auto [to_lo, to_hi] = valid_out_range(tbase, gt.stride, Ti, To);
            for (int fo = 0; fo < Fo; ++fo) {
              const int fi = fo * gf.stride + fbase;
              if (fi < 0 || fi >= Fi) continue;
              const double* in_row =
                  &in.data[(static_cast<size_t>(ci) * Fi + fi) * Ti];
              double* out_row =
                  &out.data[(static_cast<size_t>(co) * Fo + fo) * To];
              if (gt.stride == 1) {
                const double* src = in_row + tbase;
                for (int to = to_lo; to <= to_hi; ++to) out_row[to] += w * src[to];
              } else {
                for (int to = to_lo; to <= to_hi; ++to) {
                  out_row[to] += w * in_row[to * gt.stride + tbase];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

void conv_backward_input(const NodeSpec& n, const ConvWeights& wts,
                         const Tensor& grad_out, const TensorShape& in_shape,
                         Tensor& grad_in) {
  const AxisGeom gf = axis_geom(in_shape.freq, n.kernel.freq, n.dilation.freq,
                                n.stride.freq, n.padding);
  const AxisGeom gt = axis_geom(in_shape.time, n.kernel.time, n.dilation.time,
                                n.stride.time, n.padding);
  const int groups = n.groups;
  const int ci_per = n.in_channels / groups;
  const int co_per = n.out_channels / groups;
  const int Fi = in_shape.freq, Ti = in_shape.time;
  const int Fo = gf.out, To = gt.out;

  for (int g = 0; g < groups; ++g) {
    for (int coi = 0; coi < co_per; ++coi) {
      const int co = g * co_per + coi;
      for (int cii = 0; cii < ci_per; ++cii) {
        const int ci = g * ci_per + cii;
        for (int kf = 0; kf < n.kernel.freq; ++kf) {
          const int fbase = kf * n.dilation.freq - gf.pad;
          for (int kt = 0; kt < n.kernel.time; ++kt) {
            const double w = wts.at(co, cii, kf, kt);
            const int tbase = kt * n.dilation.time - gt.pad;
            const auto [to_lo, to_hi] = valid_out_range(tbase, gt.stride, Ti, To);
            for (int fo = 0; fo < Fo; ++fo) {
              const int fi = fo * gf.stride + fbase;
              if (fi < 0 || fi >= Fi) continue;
              double* in_row =
                  &grad_in.data[(static_cast<size_t>(ci) * Fi + fi) * Ti];
              const double* out_row =
                  &grad_out.data[(static_cast<size_t>(co) * Fo + fo) * To];
              if (gt.stride == 1) {
                double* dst = in_row + tbase;
                for (int to = to_lo; to <= to_hi; ++to) dst[to] += w * out_row[to];
              } else {
                for (int to = to_lo; to <= to_hi; ++to) {
                  in_row[to * gt.stride + tbase] += w * out_row[to];
                }
              }
            }
          }
        }
      }
    }
  }
}

// Applies the damping factor grid when the node carries one. The damped
// weights are materialized and fed through the same kernels as undamped
// ones, so a damped graph and its baked twin follow the identical
// instruction stream.
ConvWeights effective_conv_weights(const NodeSpec& n, const WeightSet& weights) {
  ConvWeights w = conv_params(weights, n);
  if (n.damping && (n.damping->m_t != 0.0 || n.damping->m_f != 0.0)) {
    DampingMatrix c = damping_matrix(n.kernel.time, n.kernel.freq,
                                     n.damping->m_t, n.damping->m_f);
    w = damp_weights(w, c);
  }
  return w;
}

struct PoolResult {
  Tensor out;
  std::vector<uint32_t> argmax;  // flat index into the pool input, per output
};

PoolResult maxpool_forward(const NodeSpec& n, const Tensor& in) {
  const AxisGeom gf =
      axis_geom(in.shape.freq, n.kernel.freq, 1, n.stride.freq, n.padding);
  const AxisGeom gt =
      axis_geom(in.shape.time, n.kernel.time, 1, n.stride.time, n.padding);
  const int C = in.shape.channels;
  const int Fi = in.shape.freq, Ti = in.shape.time;
  const int Fo = gf.out, To = gt.out;

  PoolResult r{Tensor({C, Fo, To}), {}};
  r.argmax.resize(r.out.data.size());
  size_t oi = 0;
  for (int c = 0; c < C; ++c) {
    for (int fo = 0; fo < Fo; ++fo) {
      for (int to = 0; to < To; ++to, ++oi) {
        double best = -std::numeric_limits<double>::infinity();
        uint32_t best_idx = 0;
        // Window scan in ascending flat order; a strict comparison keeps
        // the first (smallest-index) element on ties.
        for (int kf = 0; kf < n.kernel.freq; ++kf) {
          const int fi = fo * gf.stride + kf - gf.pad;
          if (fi < 0 || fi >= Fi) continue;
          for (int kt = 0; kt < n.kernel.time; ++kt) {
            const int ti = to * gt.stride + kt - gt.pad;
            if (ti < 0 || ti >= Ti) continue;
            const size_t idx = (static_cast<size_t>(c) * Fi + fi) * Ti + ti;
            const double v = in.data[idx];
            if (v > best) {
              best = v;
              best_idx = static_cast<uint32_t>(idx);
            }
          }
        }
        r.out.data[oi] = best;
        r.argmax[oi] = best_idx;
      }
    }
  }
  return r;
}

double coord_value(int f, int freq_extent) {
  return freq_extent > 1 ? static_cast<double>(f) / (freq_extent - 1) : 0.0;
}

struct ForwardState {
  std::map<std::string, Tensor> acts;
  std::map<std::string, std::vector<uint32_t>> pool_argmax;
};

ForwardState forward_impl(const ArchGraph& g, const WeightSet& weights,
                          const Tensor& input, const EvalOptions& opts) {
  if (!(input.shape == g.input_shape)) {
    throw ShapeError("input tensor shape does not match the graph input shape");
  }
  if (input.data.size() != static_cast<size_t>(input.shape.volume())) {
    throw ShapeError("input tensor data length does not match its shape");
  }

  ForwardState st;
  for (const auto& id : topo_order(g)) {
    const NodeSpec& n = g.node(id);
    Tensor out;
    switch (n.kind) {
      case NodeKind::input:
        out = input;
        break;
      case NodeKind::conv: {
        const Tensor& in = st.acts.at(n.predecessors[0]);
        out = conv_forward(n, effective_conv_weights(n, weights), in);
        break;
      }
      case NodeKind::maxpool: {
        const Tensor& in = st.acts.at(n.predecessors[0]);
        PoolResult r = maxpool_forward(n, in);
        st.pool_argmax.emplace(id, std::move(r.argmax));
        out = std::move(r.out);
        break;
      }
      case NodeKind::relu: {
        out = st.acts.at(n.predecessors[0]);
        if (!opts.relu_as_identity) {
          for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        }
        break;
      }
      case NodeKind::affine: {
        const AffineParams& a = affine_params(weights, n);
        out = st.acts.at(n.predecessors[0]);
        const size_t plane = static_cast<size_t>(out.shape.freq) * out.shape.time;
        for (int c = 0; c < out.shape.channels; ++c) {
          double* p = &out.data[c * plane];
          for (size_t i = 0; i < plane; ++i) p[i] = p[i] * a.scale[c] + a.shift[c];
        }
        break;
      }
      case NodeKind::add: {
        out = st.acts.at(n.predecessors[0]);
        for (size_t b = 1; b < n.predecessors.size(); ++b) {
          const Tensor& rhs = st.acts.at(n.predecessors[b]);
          if (!(rhs.shape == out.shape)) {
            throw ShapeError("add '" + id + "' has mismatched branch shapes");
          }
          for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += rhs.data[i];
        }
        break;
      }
      case NodeKind::concat: {
        const Tensor& first = st.acts.at(n.predecessors[0]);
        int channels = 0;
        for (const auto& p : n.predecessors) {
          const Tensor& t = st.acts.at(p);
          if (t.shape.freq != first.shape.freq ||
              t.shape.time != first.shape.time) {
            throw ShapeError("concat '" + id + "' has mismatched spatial shapes");
          }
          channels += t.shape.channels;
        }
        out = Tensor({channels, first.shape.freq, first.shape.time});
        size_t off = 0;
        for (const auto& p : n.predecessors) {
          const Tensor& t = st.acts.at(p);
          std::copy(t.data.begin(), t.data.end(), out.data.begin() + off);
          off += t.data.size();
        }
        break;
      }
      case NodeKind::coord_concat: {
        const Tensor& in = st.acts.at(n.predecessors[0]);
        out = Tensor({in.shape.channels + 1, in.shape.freq, in.shape.time});
        std::copy(in.data.begin(), in.data.end(), out.data.begin());
        double* plane = &out.data[in.data.size()];
        for (int f = 0; f < in.shape.freq; ++f) {
          const double v = coord_value(f, in.shape.freq);
          for (int t = 0; t < in.shape.time; ++t) plane[f * in.shape.time + t] = v;
        }
        break;
      }
      case NodeKind::output_probe:
        out = st.acts.at(n.predecessors[0]);
        break;
    }
    check_finite(out, id);
    st.acts.emplace(id, std::move(out));
  }
  return st;
}

}  // namespace

WeightSet init_weights(const ArchGraph& g, uint64_t seed) {
  WeightSet ws;
  for (const auto& id : topo_order(g)) {
    const NodeSpec& n = g.node(id);
    if (n.kind == NodeKind::conv) {
      ConvWeights w;
      w.out_channels = n.out_channels;
      w.in_per_group = n.in_channels / n.groups;
      w.kernel = n.kernel;
      w.w.resize(static_cast<size_t>(w.out_channels) * w.in_per_group *
                 w.kernel.freq * w.kernel.time);
      w.bias.assign(w.out_channels, 0.0);
      const double fan_in =
          static_cast<double>(w.in_per_group) * w.kernel.freq * w.kernel.time;
      const double scale = std::sqrt(2.0 / fan_in);
      SplitMix64 rng(substream_seed(seed, id));
      for (double& v : w.w) v = rng.next_normal() * scale;
      ws.conv.emplace(id, std::move(w));
    } else if (n.kind == NodeKind::affine) {
      AffineParams a;
      a.scale.assign(n.in_channels, 1.0);
      a.shift.assign(n.in_channels, 0.0);
      ws.affine.emplace(id, std::move(a));
    }
  }
  return ws;
}

ActivationStore forward(const ArchGraph& g, const WeightSet& weights,
                        const Tensor& input, const EvalOptions& opts) {
  ForwardState st = forward_impl(g, weights, input, opts);
  ActivationStore store;
  store.by_node = std::move(st.acts);
  return store;
}

Tensor backward_input(const ArchGraph& g, const WeightSet& weights,
                      const Tensor& input, Dim2 probe_coord,
                      const EvalOptions& opts) {
  ForwardState st = forward_impl(g, weights, input, opts);
  const std::string probe_id = g.probe_node().id;
  const TensorShape probe_shape = st.acts.at(probe_id).shape;
  if (probe_coord.freq < 0 || probe_coord.freq >= probe_shape.freq ||
      probe_coord.time < 0 || probe_coord.time >= probe_shape.time) {
    throw ShapeError("probe coordinate out of range");
  }

  std::vector<std::string> order = topo_order(g);
  std::map<std::string, Tensor> grads;
  auto grad_of = [&](const std::string& id) -> Tensor& {
    auto it = grads.find(id);
    if (it == grads.end()) {
      it = grads.emplace(id, Tensor(st.acts.at(id).shape)).first;
    }
    return it->second;
  };

  {
    Tensor& seed = grad_of(probe_id);
    for (int c = 0; c < probe_shape.channels; ++c) {
      seed.at(c, probe_coord.freq, probe_coord.time) = 1.0;
    }
  }

  Tensor input_grad;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::string& id = *it;
    const NodeSpec& n = g.node(id);
    auto git = grads.find(id);
    if (git == grads.end()) continue;  // no downstream path to the probe seed
    Tensor g_out = std::move(git->second);
    grads.erase(git);

    switch (n.kind) {
      case NodeKind::input:
        input_grad = std::move(g_out);
        break;
      case NodeKind::conv: {
        const TensorShape in_shape = st.acts.at(n.predecessors[0]).shape;
        conv_backward_input(n, effective_conv_weights(n, weights), g_out,
                            in_shape, grad_of(n.predecessors[0]));
        break;
      }
      case NodeKind::maxpool: {
        const std::vector<uint32_t>& arg = st.pool_argmax.at(id);
        Tensor& gin = grad_of(n.predecessors[0]);
        for (size_t i = 0; i < g_out.data.size(); ++i) {
          gin.data[arg[i]] += g_out.data[i];
        }
        break;
      }
      case NodeKind::relu: {
        Tensor& gin = grad_of(n.predecessors[0]);
        if (opts.relu_as_identity) {
          for (size_t i = 0; i < g_out.data.size(); ++i) {
            gin.data[i] += g_out.data[i];
          }
        } else {
          const Tensor& out = st.acts.at(id);  // out > 0 iff pre-activation > 0
          for (size_t i = 0; i < g_out.data.size(); ++i) {
            if (out.data[i] > 0.0) gin.data[i] += g_out.data[i];
          }
        }
        break;
      }
      case NodeKind::affine: {
        const AffineParams& a = affine_params(weights, n);
        Tensor& gin = grad_of(n.predecessors[0]);
        const size_t plane =
            static_cast<size_t>(g_out.shape.freq) * g_out.shape.time;
        for (int c = 0; c < g_out.shape.channels; ++c) {
          const double s = a.scale[c];
          double* dst = &gin.data[c * plane];
          const double* src = &g_out.data[c * plane];
          for (size_t i = 0; i < plane; ++i) dst[i] += s * src[i];
        }
        break;
      }
      case NodeKind::add: {
        for (const auto& p : n.predecessors) {
          Tensor& gin = grad_of(p);
          for (size_t i = 0; i < g_out.data.size(); ++i) {
            gin.data[i] += g_out.data[i];
          }
        }
        break;
      }
      case NodeKind::concat: {
        size_t off = 0;
        for (const auto& p : n.predecessors) {
          Tensor& gin = grad_of(p);
          for (size_t i = 0; i < gin.data.size(); ++i) {
            gin.data[i] += g_out.data[off + i];
          }
          off += gin.data.size();
        }
        break;
      }
      case NodeKind::coord_concat: {
        Tensor& gin = grad_of(n.predecessors[0]);
        for (size_t i = 0; i < gin.data.size(); ++i) {
          gin.data[i] += g_out.data[i];  // the coordinate channel is constant
        }
        break;
      }
      case NodeKind::output_probe: {
        Tensor& gin = grad_of(n.predecessors[0]);
        for (size_t i = 0; i < g_out.data.size(); ++i) {
          gin.data[i] += g_out.data[i];
        }
        break;
      }
    }
    st.acts.erase(id);  // retire buffers as the sweep moves upstream
  }
  return input_grad;
}

double grad_check(const ArchGraph& g, const WeightSet& weights,
                  const Tensor& input, int n_probes, double h, uint64_t seed,
                  const EvalOptions& opts) {
  if (n_probes < 1) throw Error("n_probes must be >= 1");
  if (h <= 0.0) throw Error("step size must be positive");

  const std::string probe_id = g.probe_node().id;
  const TensorShape probe_shape = propagate_shapes(g).at(probe_id);
  const Dim2 coord{probe_shape.freq / 2, probe_shape.time / 2};

  auto loss = [&](const Tensor& x) {
    ForwardState st = forward_impl(g, weights, x, opts);
    const Tensor& probe = st.acts.at(probe_id);
    double sum = 0.0;
    for (int c = 0; c < probe.shape.channels; ++c) {
      sum += probe.at(c, coord.freq, coord.time);
    }
    return sum;
  };

  // Sample pixels inside the probe's clipped input window; outside it both
  // gradients are identically zero and the comparison checks nothing.
  const RfWindow window = rf_window(g, probe_id, coord);
  const long long f_lo = window.freq.clipped.lo;
  const long long f_n = window.freq.clipped.width();
  const long long t_lo = window.time.clipped.lo;
  const long long t_n = window.time.clipped.width();

  Tensor analytic = backward_input(g, weights, input, coord, opts);
  SplitMix64 rng(substream_seed(seed, "grad_check"));
  Tensor x = input;
  double max_err = 0.0;
  for (int i = 0; i < n_probes; ++i) {
    const int c = static_cast<int>(rng.next_u64() % input.shape.channels);
    const int f = static_cast<int>(f_lo + rng.next_u64() % f_n);
    const int t = static_cast<int>(t_lo + rng.next_u64() % t_n);
    const double saved = x.at(c, f, t);
    x.at(c, f, t) = saved + h;
    const double lp = loss(x);
    x.at(c, f, t) = saved - h;
    const double lm = loss(x);
    x.at(c, f, t) = saved;

    const double numeric = (lp - lm) / (2.0 * h);
    const double a = analytic.at(c, f, t);
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    max_err = std::max(max_err, std::fabs(a - numeric) / denom);
  }
  return max_err;
}

}  // namespace rfscope
