// SPDX-License-Identifier: Apache-2.0
#include "rfscope/rf_analysis.hpp"

#include <algorithm>
#include <optional>

#include <json.hpp>

namespace rfscope {

long long effective_kernel(long long k, long long d) {
  if (k < 1 || d < 1) throw Error("kernel and dilation must be >= 1");
  return d * (k - 1) + 1;
}

const NodeRf& RfReport::at(const std::string& id) const {
  auto it = per_node.find(id);
  if (it == per_node.end()) throw GraphError("no RF entry for node '" + id + "'");
  return it->second;
}

namespace {

// Window geometry of one conv/pool layer along one axis.
struct AxisLayer {
  long long k_eff = 1;
  long long stride = 1;
  long long pad_left = 0;
};

AxisLayer axis_layer(const NodeSpec& n, bool freq_axis) {
  AxisLayer a;
  int k = freq_axis ? n.kernel.freq : n.kernel.time;
  int s = freq_axis ? n.stride.freq : n.stride.time;
  int d = n.kind == NodeKind::conv
              ? (freq_axis ? n.dilation.freq : n.dilation.time)
              : 1;
  a.k_eff = effective_kernel(k, d);
  a.stride = s;
  a.pad_left = pad_left(static_cast<int>(a.k_eff), n.padding);
  return a;
}

bool is_window_node(NodeKind k) {
  return k == NodeKind::conv || k == NodeKind::maxpool;
}

bool is_merge_node(NodeKind k) {
  return k == NodeKind::add || k == NodeKind::concat;
}

DimRf advance(const DimRf& prev, const AxisLayer& layer) {
  DimRf cur;
  cur.rf = prev.rf + (layer.k_eff - 1) * prev.cum_stride;
  cur.cum_stride = prev.cum_stride * layer.stride;
  cur.window_offset = prev.window_offset - layer.pad_left * prev.cum_stride;
  return cur;
}

DimRf merge(const std::vector<DimRf>& branches, const std::string& node_id) {
  DimRf out = branches[0];
  for (size_t i = 1; i < branches.size(); ++i) {
    if (branches[i].cum_stride != out.cum_stride) {
      throw GraphError("merge node '" + node_id +
                       "' has branches with unequal cumulative strides");
    }
    out.rf = std::max(out.rf, branches[i].rf);
    out.window_offset = std::min(out.window_offset, branches[i].window_offset);
  }
  return out;
}

}  // namespace

RfReport max_rf(const ArchGraph& g) {
  RfReport report;
  report.probe_id = g.probe_node().id;
  for (const auto& id : topo_order(g)) {
    const NodeSpec& n = g.node(id);
    NodeRf rf;
    if (n.kind == NodeKind::input) {
      rf = NodeRf{};  // rf 1, stride 1, offset 0 on both axes
    } else if (is_merge_node(n.kind)) {
      std::vector<DimRf> fs, ts;
      for (const auto& p : n.predecessors) {
        const NodeRf& pr = report.at(p);
        fs.push_back(pr.freq);
        ts.push_back(pr.time);
      }
      rf.freq = merge(fs, id);
      rf.time = merge(ts, id);
    } else {
      const NodeRf& prev = report.at(n.predecessors.at(0));
      if (is_window_node(n.kind)) {
        rf.freq = advance(prev.freq, axis_layer(n, true));
        rf.time = advance(prev.time, axis_layer(n, false));
      } else {
        rf = prev;  // relu / affine / coord_concat / probe are RF-neutral
      }
    }
    report.per_node.emplace(id, rf);
  }
  return report;
}

RfWindow rf_window(const ArchGraph& g, const std::string& node_id,
                   Dim2 out_coord) {
  const NodeSpec& target = g.node(node_id);
  auto shapes = propagate_shapes(g);
  const TensorShape& target_shape = shapes.at(node_id);
  if (out_coord.freq < 0 || out_coord.freq >= target_shape.freq ||
      out_coord.time < 0 || out_coord.time >= target_shape.time) {
    throw GraphError("coordinate out of range for node '" + node_id + "'");
  }
  (void)target;

  // Push the coordinate interval backwards through every layer, taking the
  // union where paths meet.
  struct Pending {
    std::optional<Interval> freq, time;
  };
  std::map<std::string, Pending> pending;
  auto widen = [](std::optional<Interval>& acc, const Interval& iv) {
    if (!acc) {
      acc = iv;
    } else {
      acc->lo = std::min(acc->lo, iv.lo);
      acc->hi = std::max(acc->hi, iv.hi);
    }
  };
  pending[node_id].freq = Interval{out_coord.freq, out_coord.freq};
  pending[node_id].time = Interval{out_coord.time, out_coord.time};

  std::vector<std::string> order = topo_order(g);
  Pending at_input;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto cur = pending.find(*it);
    if (cur == pending.end() || !cur->second.freq) continue;
    const NodeSpec& n = g.node(*it);
    const Interval f = *cur->second.freq;
    const Interval t = *cur->second.time;

    if (n.kind == NodeKind::input) {
      widen(at_input.freq, f);
      widen(at_input.time, t);
      continue;
    }
    Interval pf = f, pt = t;
    if (is_window_node(n.kind)) {
      AxisLayer af = axis_layer(n, true);
      AxisLayer at = axis_layer(n, false);
      pf = {f.lo * af.stride - af.pad_left,
            f.hi * af.stride - af.pad_left + af.k_eff - 1};
      pt = {t.lo * at.stride - at.pad_left,
            t.hi * at.stride - at.pad_left + at.k_eff - 1};
    }
    for (const auto& p : n.predecessors) {
      widen(pending[p].freq, pf);
      widen(pending[p].time, pt);
    }
  }
  if (!at_input.freq) {
    throw GraphError("node '" + node_id + "' is not connected to the input");
  }

  auto clip = [](Interval iv, int extent) {
    return Interval{std::clamp(iv.lo, 0LL, static_cast<long long>(extent - 1)),
                    std::clamp(iv.hi, 0LL, static_cast<long long>(extent - 1))};
  };
  RfWindow w;
  w.freq.unclipped = *at_input.freq;
  w.time.unclipped = *at_input.time;
  w.freq.clipped = clip(w.freq.unclipped, g.input_shape.freq);
  w.time.clipped = clip(w.time.unclipped, g.input_shape.time);
  return w;
}

std::map<std::string, ParamCount> count_params_by_node(const ArchGraph& g) {
  std::map<std::string, ParamCount> out;
  for (const auto& [id, n] : g.nodes) {
    if (n.kind == NodeKind::conv) {
      ParamCount c;
      c.weights = static_cast<long long>(n.kernel.freq) * n.kernel.time *
                  n.in_channels * n.out_channels / n.groups;
      c.biases = n.out_channels;
      out.emplace(id, c);
    } else if (n.kind == NodeKind::affine) {
      out.emplace(id, ParamCount{n.in_channels, n.in_channels});
    }
  }
  return out;
}

long long count_params(const ArchGraph& g) {
  long long total = 0;
  for (const auto& [id, c] : count_params_by_node(g)) total += c.total();
  return total;
}

std::string rf_report_to_json(const RfReport& report) {
  nlohmann::json j;
  for (const auto& [id, rf] : report.per_node) {
    j[id] = {
        {"rf", {rf.freq.rf, rf.time.rf}},
        {"cum_stride", {rf.freq.cum_stride, rf.time.cum_stride}},
        {"window_offset", {rf.freq.window_offset, rf.time.window_offset}},
    };
  }
  return j.dump(2) + "\n";
}

}  // namespace rfscope
