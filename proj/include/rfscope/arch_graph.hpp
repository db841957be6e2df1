// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rfscope/errors.hpp"

namespace rfscope {

// Spatial pair. The frequency axis is always listed first, the time axis
// second; this order is used for kernels, strides, dilations, coordinates
// and receptive fields throughout.
struct Dim2 {
  int freq = 1;
  int time = 1;

  friend bool operator==(const Dim2&, const Dim2&) = default;
};

// (channels, freq, time) extent of a feature map.
struct TensorShape {
  int channels = 1;
  int freq = 1;
  int time = 1;

  long long volume() const {
    return static_cast<long long>(channels) * freq * time;
  }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

enum class NodeKind {
  input,
  conv,
  maxpool,
  relu,
  affine,
  add,
  concat,
  coord_concat,
  output_probe,
};

enum class Padding { same, none };

const char* to_string(NodeKind kind);
const char* to_string(Padding padding);
NodeKind node_kind_from_string(const std::string& s);
Padding padding_from_string(const std::string& s);

// Per-axis damping strengths, each in [0,1). Zero on both axes is the same
// as no damping except that the flag stays set.
struct DampingSpec {
  double m_t = 0.0;
  double m_f = 0.0;

  friend bool operator==(const DampingSpec&, const DampingSpec&) = default;
};

// One layer node. Only the fields relevant to `kind` are meaningful:
// kernel/stride/padding for conv and maxpool, dilation/groups/damping for
// conv only, in/out_channels for conv, affine and coord_concat.
struct NodeSpec {
  std::string id;
  NodeKind kind = NodeKind::conv;
  Dim2 kernel{1, 1};
  Dim2 stride{1, 1};
  Dim2 dilation{1, 1};
  int groups = 1;
  int in_channels = 0;
  int out_channels = 0;
  Padding padding = Padding::same;
  std::optional<DampingSpec> damping;
  std::vector<std::string> predecessors;

  friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

// A directed acyclic graph of layer nodes. Graphs are plain values: build
// (or parse) one, then treat it as immutable; all operations on graphs are
// read-only and safe to run concurrently on the same instance.
struct ArchGraph {
  std::map<std::string, NodeSpec> nodes;  // keyed by NodeSpec::id
  TensorShape input_shape{1, 1, 1};

  bool contains(const std::string& id) const { return nodes.count(id) != 0; }
  const NodeSpec& node(const std::string& id) const;

  // The unique input / output_probe node. Throws GraphError when the graph
  // does not have exactly one.
  const NodeSpec& input_node() const;
  const NodeSpec& probe_node() const;

  friend bool operator==(const ArchGraph&, const ArchGraph&) = default;
};

// Parses the JSON architecture format (see README). Throws ParseError on
// malformed text (with byte position), unknown node kinds, duplicate ids or
// dangling predecessors, and GraphError when the parsed graph fails
// validation.
ArchGraph parse_arch(const std::string& text);

// Canonical text form: keys sorted, nodes sorted by id, two-space
// indentation, LF line endings, irrelevant fields dropped. parse_arch
// inverts it exactly. Throws GraphError on an invalid graph.
std::string serialize_arch(const ArchGraph& graph);

// All invariant violations, as human-readable descriptions naming the node
// involved. Empty means the graph is valid. Never throws: violations are
// data, not failures.
std::vector<std::string> validate(const ArchGraph& graph);

// Deterministic topological order: every node after all its predecessors,
// ties broken by lexicographically smaller id first. Throws GraphError
// naming a node on the cycle when the graph is cyclic.
std::vector<std::string> topo_order(const ArchGraph& graph);

// Successor adjacency (reverse edges of `predecessors`).
std::map<std::string, std::vector<std::string>> successors(const ArchGraph& graph);

// Forward shape propagation from input_shape. Throws GraphError when shapes
// do not propagate consistently (validate reports the same problems as
// violations instead).
std::map<std::string, TensorShape> propagate_shapes(const ArchGraph& graph);

// Output spatial extent of a conv/pool along one axis. `k_eff` is the
// effective (dilation-expanded) kernel. Throws GraphError when the input is
// smaller than the kernel with no padding.
int spatial_out(int in, int k_eff, int stride, Padding padding);

// Left zero-padding of a conv/pool along one axis (0 when padding is none,
// floor((k_eff-1)/2) for same).
int pad_left(int k_eff, Padding padding);

}  // namespace rfscope
