// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "rfscope/arch_graph.hpp"

namespace rfscope {

// Receptive-field summary of one node along one axis. `rf` is the width of
// the input window a single output unit can see, `cum_stride` the product of
// strides from the input up to the node, and `window_offset` the signed
// input coordinate where the window of output coordinate 0 starts (negative
// when zero padding extends past the input's left edge).
struct DimRf {
  long long rf = 1;
  long long cum_stride = 1;
  long long window_offset = 0;

  friend bool operator==(const DimRf&, const DimRf&) = default;
};

struct NodeRf {
  DimRf freq;
  DimRf time;

  friend bool operator==(const NodeRf&, const NodeRf&) = default;
};

struct RfReport {
  std::map<std::string, NodeRf> per_node;
  std::string probe_id;

  const NodeRf& at(const std::string& id) const;
  const NodeRf& probe() const { return at(probe_id); }

  friend bool operator==(const RfReport&, const RfReport&) = default;
};

// Inclusive input-pixel interval along one axis.
struct Interval {
  long long lo = 0;
  long long hi = 0;

  long long width() const { return hi - lo + 1; }
  bool contains(const Interval& inner) const {
    return lo <= inner.lo && inner.hi <= hi;
  }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct AxisWindow {
  Interval unclipped;  // may extend past the input where padding reaches
  Interval clipped;    // intersected with [0, extent-1]
};

struct RfWindow {
  AxisWindow freq;
  AxisWindow time;
};

// Effective kernel extent of a dilated filter: d*(k-1)+1.
long long effective_kernel(long long k, long long d);

// Receptive fields, cumulative strides and window offsets for every node,
// per axis. Conv/pool nodes grow the field by (k_eff-1)*S_prev and multiply
// the cumulative stride; relu/affine/coord_concat/probe pass both through;
// add/concat take the maximum field over their branches and require equal
// cumulative strides (throws GraphError otherwise). Requires a valid graph.
RfReport max_rf(const ArchGraph& graph);

// Projects one output coordinate of `node_id` back onto the input, composing
// the per-layer window maps and taking the union across merge branches.
// Throws GraphError for an unknown node or an out-of-range coordinate.
RfWindow rf_window(const ArchGraph& graph, const std::string& node_id,
                   Dim2 out_coord);

// Learnable-parameter counts: k_f*k_t*C_in*C_out/g weights + C_out biases
// per conv, 2*C per affine.
struct ParamCount {
  long long weights = 0;
  long long biases = 0;

  long long total() const { return weights + biases; }
};

long long count_params(const ArchGraph& graph);
std::map<std::string, ParamCount> count_params_by_node(const ArchGraph& graph);

// JSON object keyed by node id, each entry
// {rf:[f,t], cum_stride:[f,t], window_offset:[f,t]}.
std::string rf_report_to_json(const RfReport& report);

}  // namespace rfscope
