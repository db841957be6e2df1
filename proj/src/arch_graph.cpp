// SPDX-License-Identifier: Apache-2.0
#include "rfscope/arch_graph.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rfscope/rf_analysis.hpp"

namespace rfscope {

using nlohmann::json;

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::input: return "input";
    case NodeKind::conv: return "conv";
    case NodeKind::maxpool: return "maxpool";
    case NodeKind::relu: return "relu";
    case NodeKind::affine: return "affine";
    case NodeKind::add: return "add";
    case NodeKind::concat: return "concat";
    case NodeKind::coord_concat: return "coord_concat";
    case NodeKind::output_probe: return "output_probe";
  }
  return "?";
}

const char* to_string(Padding padding) {
  return padding == Padding::same ? "same" : "none";
}

NodeKind node_kind_from_string(const std::string& s) {
  static const std::map<std::string, NodeKind> table = {
      {"input", NodeKind::input},
      {"conv", NodeKind::conv},
      {"maxpool", NodeKind::maxpool},
      {"relu", NodeKind::relu},
      {"affine", NodeKind::affine},
      {"add", NodeKind::add},
      {"concat", NodeKind::concat},
      {"coord_concat", NodeKind::coord_concat},
      {"output_probe", NodeKind::output_probe},
  };
  auto it = table.find(s);
  if (it == table.end()) throw ParseError("unknown node kind '" + s + "'");
  return it->second;
}

Padding padding_from_string(const std::string& s) {
  if (s == "same") return Padding::same;
  if (s == "none") return Padding::none;
  throw ParseError("unknown padding '" + s + "' (expected 'same' or 'none')");
}

const NodeSpec& ArchGraph::node(const std::string& id) const {
  auto it = nodes.find(id);
  if (it == nodes.end()) throw GraphError("no node with id '" + id + "'");
  return it->second;
}

static const NodeSpec* find_unique(const ArchGraph& g, NodeKind kind) {
  const NodeSpec* found = nullptr;
  for (const auto& [id, n] : g.nodes) {
    if (n.kind != kind) continue;
    if (found) return nullptr;
    found = &n;
  }
  return found;
}

const NodeSpec& ArchGraph::input_node() const {
  const NodeSpec* n = find_unique(*this, NodeKind::input);
  if (!n) throw GraphError("graph must have exactly one input node");
  return *n;
}

const NodeSpec& ArchGraph::probe_node() const {
  const NodeSpec* n = find_unique(*this, NodeKind::output_probe);
  if (!n) throw GraphError("graph must have exactly one output_probe node");
  return *n;
}

std::map<std::string, std::vector<std::string>> successors(const ArchGraph& g) {
  std::map<std::string, std::vector<std::string>> succ;
  for (const auto& [id, n] : g.nodes) {
    succ.emplace(id, std::vector<std::string>{});
  }
  for (const auto& [id, n] : g.nodes) {
    for (const auto& p : n.predecessors) {
      auto it = succ.find(p);
      if (it != succ.end()) it->second.push_back(id);
    }
  }
  return succ;
}

// --- topological order -----------------------------------------------------

std::vector<std::string> topo_order(const ArchGraph& g) {
  std::map<std::string, int> indegree;
  for (const auto& [id, n] : g.nodes) {
    int d = 0;
    for (const auto& p : n.predecessors) {
      if (g.contains(p)) ++d;  // dangling predecessors are validate's problem
    }
    indegree[id] = d;
  }
  auto succ = successors(g);

  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
  for (const auto& [id, d] : indegree) {
    if (d == 0) ready.push(id);
  }

  std::vector<std::string> order;
  order.reserve(g.nodes.size());
  while (!ready.empty()) {
    std::string id = ready.top();
    ready.pop();
    order.push_back(id);
    for (const auto& s : succ[id]) {
      if (--indegree[s] == 0) ready.push(s);
    }
  }

  if (order.size() != g.nodes.size()) {
    // Walk predecessors within the unordered remainder until a node repeats;
    // that node is on a cycle.
    std::set<std::string> remaining;
    for (const auto& [id, d] : indegree) {
      if (d > 0) remaining.insert(id);
    }
    std::string cur = *remaining.begin();
    std::set<std::string> seen;
    while (seen.insert(cur).second) {
      for (const auto& p : g.node(cur).predecessors) {
        if (remaining.count(p)) {
          cur = p;
          break;
        }
      }
    }
    throw GraphError("cycle detected involving node '" + cur + "'");
  }
  return order;
}

// --- shape propagation ------------------------------------------------------

int pad_left(int k_eff, Padding padding) {
  return padding == Padding::same ? (k_eff - 1) / 2 : 0;
}

int spatial_out(int in, int k_eff, int stride, Padding padding) {
  if (padding == Padding::same) {
    // Total padding k_eff-1, split floor-left; output is ceil(in/stride).
    return (in - 1) / stride + 1;
  }
  if (in < k_eff) {
    throw GraphError("spatial extent " + std::to_string(in) +
                     " smaller than kernel extent " + std::to_string(k_eff) +
                     " with no padding");
  }
  return (in - k_eff) / stride + 1;
}

static TensorShape node_output_shape(const NodeSpec& n,
                                     const std::vector<TensorShape>& preds) {
  auto one = [&]() -> const TensorShape& {
    if (preds.size() != 1) {
      throw GraphError("node '" + n.id + "' (" + to_string(n.kind) +
                       ") requires exactly one predecessor");
    }
    return preds[0];
  };
  switch (n.kind) {
    case NodeKind::input:
      throw GraphError("input node '" + n.id + "' cannot have predecessors");
    case NodeKind::conv: {
      const TensorShape& in = one();
      if (in.channels != n.in_channels) {
        throw GraphError("conv '" + n.id + "' declares in_channels " +
                         std::to_string(n.in_channels) + " but receives " +
                         std::to_string(in.channels));
      }
      int kf = static_cast<int>(effective_kernel(n.kernel.freq, n.dilation.freq));
      int kt = static_cast<int>(effective_kernel(n.kernel.time, n.dilation.time));
      return {n.out_channels, spatial_out(in.freq, kf, n.stride.freq, n.padding),
              spatial_out(in.time, kt, n.stride.time, n.padding)};
    }
    case NodeKind::maxpool: {
      const TensorShape& in = one();
      return {in.channels,
              spatial_out(in.freq, n.kernel.freq, n.stride.freq, n.padding),
              spatial_out(in.time, n.kernel.time, n.stride.time, n.padding)};
    }
    case NodeKind::relu:
    case NodeKind::output_probe:
      return one();
    case NodeKind::affine: {
      const TensorShape& in = one();
      if (in.channels != n.in_channels || n.in_channels != n.out_channels) {
        throw GraphError("affine '" + n.id +
                         "' must keep the channel count of its input");
      }
      return in;
    }
    case NodeKind::add: {
      if (preds.size() < 2) {
        throw GraphError("add '" + n.id + "' requires at least 2 predecessors");
      }
      for (size_t i = 1; i < preds.size(); ++i) {
        if (!(preds[i] == preds[0])) {
          throw GraphError("add '" + n.id +
                           "' has predecessors with mismatched shapes");
        }
      }
      return preds[0];
    }
    case NodeKind::concat: {
      if (preds.size() < 2) {
        throw GraphError("concat '" + n.id +
                         "' requires at least 2 predecessors");
      }
      int channels = 0;
      for (const auto& p : preds) {
        if (p.freq != preds[0].freq || p.time != preds[0].time) {
          throw GraphError("concat '" + n.id +
                           "' has predecessors with mismatched spatial shapes");
        }
        channels += p.channels;
      }
      return {channels, preds[0].freq, preds[0].time};
    }
    case NodeKind::coord_concat: {
      const TensorShape& in = one();
      if (in.channels != n.in_channels || n.out_channels != n.in_channels + 1) {
        throw GraphError("coord_concat '" + n.id +
                         "' must have out_channels = in_channels + 1");
      }
      return {in.channels + 1, in.freq, in.time};
    }
  }
  throw GraphError("unhandled node kind");
}

std::map<std::string, TensorShape> propagate_shapes(const ArchGraph& g) {
  std::map<std::string, TensorShape> shapes;
  for (const auto& id : topo_order(g)) {
    const NodeSpec& n = g.node(id);
    if (n.kind == NodeKind::input) {
      shapes[id] = g.input_shape;
      continue;
    }
    std::vector<TensorShape> preds;
    preds.reserve(n.predecessors.size());
    for (const auto& p : n.predecessors) {
      auto it = shapes.find(p);
      if (it == shapes.end()) {
        throw GraphError("node '" + id + "' references unknown predecessor '" +
                         p + "'");
      }
      preds.push_back(it->second);
    }
    shapes[id] = node_output_shape(n, preds);
  }
  return shapes;
}

// --- validate ---------------------------------------------------------------

static bool needs_window(NodeKind k) {
  return k == NodeKind::conv || k == NodeKind::maxpool;
}

std::vector<std::string> validate(const ArchGraph& g) {
  std::vector<std::string> out;
  auto bad = [&](const std::string& msg) { out.push_back(msg); };

  if (g.nodes.empty()) {
    bad("graph has no nodes");
    return out;
  }
  if (g.input_shape.channels < 1 || g.input_shape.freq < 1 ||
      g.input_shape.time < 1) {
    bad("input_shape components must be positive");
  }

  int inputs = 0, probes = 0;
  for (const auto& [id, n] : g.nodes) {
    if (id != n.id) bad("node key '" + id + "' differs from its id field");
    if (n.kind == NodeKind::input) ++inputs;
    if (n.kind == NodeKind::output_probe) ++probes;

    for (const auto& p : n.predecessors) {
      if (!g.contains(p)) {
        bad("node '" + id + "' references missing predecessor '" + p + "'");
      }
    }
    if (n.kind == NodeKind::input && !n.predecessors.empty()) {
      bad("input node '" + id + "' must not have predecessors");
    }

    if (needs_window(n.kind)) {
      if (n.kernel.freq < 1 || n.kernel.time < 1) {
        bad("node '" + id + "' has non-positive kernel");
      }
      if (n.stride.freq < 1 || n.stride.time < 1) {
        bad("node '" + id + "' has non-positive stride");
      }
    }
    if (n.kind == NodeKind::conv) {
      if (n.dilation.freq < 1 || n.dilation.time < 1) {
        bad("conv '" + id + "' has non-positive dilation");
      }
      if (n.groups < 1) {
        bad("conv '" + id + "' has non-positive groups");
      } else {
        if (n.in_channels % n.groups != 0) {
          bad("conv '" + id + "': groups " + std::to_string(n.groups) +
              " does not divide in_channels " + std::to_string(n.in_channels));
        }
        if (n.out_channels % n.groups != 0) {
          bad("conv '" + id + "': groups " + std::to_string(n.groups) +
              " does not divide out_channels " + std::to_string(n.out_channels));
        }
      }
      if (n.in_channels < 1 || n.out_channels < 1) {
        bad("conv '" + id + "' needs positive in_channels and out_channels");
      }
      if (n.damping) {
        auto in_range = [](double m) { return m >= 0.0 && m < 1.0; };
        if (!in_range(n.damping->m_t) || !in_range(n.damping->m_f)) {
          bad("conv '" + id + "' damping strengths must lie in [0,1)");
        }
      }
    }
    if (n.kind == NodeKind::affine &&
        (n.in_channels < 1 || n.in_channels != n.out_channels)) {
      bad("affine '" + id + "' needs in_channels == out_channels >= 1");
    }
    if (n.kind == NodeKind::coord_concat) {
      if (n.predecessors.size() != 1) {
        bad("coord_concat '" + id + "' needs exactly one predecessor");
      }
      if (n.out_channels != n.in_channels + 1) {
        bad("coord_concat '" + id + "' needs out_channels = in_channels + 1");
      }
    }
    if ((n.kind == NodeKind::add || n.kind == NodeKind::concat) &&
        n.predecessors.size() < 2) {
      bad(std::string(to_string(n.kind)) + " '" + id +
          "' needs at least 2 predecessors");
    }
  }
  if (inputs != 1) bad("graph must have exactly one input node");
  if (probes != 1) bad("graph must have exactly one output_probe node");
  if (!out.empty()) return out;

  std::vector<std::string> order;
  try {
    order = topo_order(g);
  } catch (const GraphError& e) {
    bad(e.what());
    return out;
  }

  // Reachability: every node on some input -> probe path.
  {
    const std::string input_id = g.input_node().id;
    const std::string probe_id = g.probe_node().id;
    auto succ = successors(g);

    std::set<std::string> from_input{input_id};
    for (const auto& id : order) {
      if (!from_input.count(id)) continue;
      for (const auto& s : succ[id]) from_input.insert(s);
    }
    std::set<std::string> to_probe{probe_id};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if (!to_probe.count(*it)) continue;
      for (const auto& p : g.node(*it).predecessors) to_probe.insert(p);
    }
    for (const auto& [id, n] : g.nodes) {
      if (!from_input.count(id)) {
        bad("node '" + id + "' is not reachable from the input");
      }
      if (!to_probe.count(id)) {
        bad("node '" + id + "' cannot reach the output_probe");
      }
    }
    if (!out.empty()) return out;
  }

  // Shape propagation: add/concat spatial and channel agreement, conv
  // in_channels consistency, pooling underflow.
  try {
    propagate_shapes(g);
  } catch (const GraphError& e) {
    bad(e.what());
  }
  return out;
}

// --- JSON serialization ------------------------------------------------------

static json dim2_to_json(const Dim2& d) { return json::array({d.freq, d.time}); }

static Dim2 dim2_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() ||
      !j[1].is_number_integer()) {
    throw ParseError(where + " must be a [freq, time] integer pair");
  }
  Dim2 d{j[0].get<int>(), j[1].get<int>()};
  if (d.freq < 1 || d.time < 1) {
    throw ParseError(where + " components must be >= 1");
  }
  return d;
}

// Field sets by node kind; parsing rejects anything else so the canonical
// form stays unambiguous.
static std::set<std::string> allowed_fields(NodeKind k) {
  std::set<std::string> base = {"id", "kind", "predecessors"};
  switch (k) {
    case NodeKind::conv:
      base.insert({"kernel", "stride", "dilation", "groups", "in_channels",
                   "out_channels", "padding", "damping"});
      break;
    case NodeKind::maxpool:
      base.insert({"kernel", "stride", "padding"});
      break;
    case NodeKind::affine:
    case NodeKind::coord_concat:
      base.insert({"in_channels", "out_channels"});
      break;
    default:
      break;
  }
  return base;
}

static json node_to_json(const NodeSpec& n) {
  json j;
  j["id"] = n.id;
  j["kind"] = to_string(n.kind);
  j["predecessors"] = n.predecessors;
  switch (n.kind) {
    case NodeKind::conv:
      j["kernel"] = dim2_to_json(n.kernel);
      j["stride"] = dim2_to_json(n.stride);
      j["dilation"] = dim2_to_json(n.dilation);
      j["groups"] = n.groups;
      j["in_channels"] = n.in_channels;
      j["out_channels"] = n.out_channels;
      j["padding"] = to_string(n.padding);
      if (n.damping) {
        j["damping"] = {{"m_f", n.damping->m_f}, {"m_t", n.damping->m_t}};
      }
      break;
    case NodeKind::maxpool:
      j["kernel"] = dim2_to_json(n.kernel);
      j["stride"] = dim2_to_json(n.stride);
      j["padding"] = to_string(n.padding);
      break;
    case NodeKind::affine:
    case NodeKind::coord_concat:
      j["in_channels"] = n.in_channels;
      j["out_channels"] = n.out_channels;
      break;
    default:
      break;
  }
  return j;
}

static int get_positive_int(const json& j, const std::string& key,
                            const std::string& node_id, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) {
    throw ParseError("field '" + key + "' of node '" + node_id +
                     "' must be an integer");
  }
  int v = j[key].get<int>();
  if (v < 1) {
    throw ParseError("field '" + key + "' of node '" + node_id +
                     "' must be >= 1");
  }
  return v;
}

static NodeSpec node_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("node entries must be objects");
  if (!j.contains("id") || !j["id"].is_string()) {
    throw ParseError("node missing string field 'id'");
  }
  NodeSpec n;
  n.id = j["id"].get<std::string>();
  if (n.id.empty()) throw ParseError("node ids must be non-empty");
  if (!j.contains("kind") || !j["kind"].is_string()) {
    throw ParseError("node '" + n.id + "' missing string field 'kind'");
  }
  n.kind = node_kind_from_string(j["kind"].get<std::string>());

  const auto allowed = allowed_fields(n.kind);
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ParseError("field '" + key + "' is not allowed for kind '" +
                       to_string(n.kind) + "' (node '" + n.id + "')");
    }
  }

  if (j.contains("predecessors")) {
    if (!j["predecessors"].is_array()) {
      throw ParseError("predecessors of node '" + n.id + "' must be an array");
    }
    for (const auto& p : j["predecessors"]) {
      if (!p.is_string()) {
        throw ParseError("predecessors of node '" + n.id +
                         "' must be strings");
      }
      n.predecessors.push_back(p.get<std::string>());
    }
  }

  if (n.kind == NodeKind::conv || n.kind == NodeKind::maxpool) {
    if (!j.contains("kernel") || !j.contains("stride")) {
      throw ParseError("node '" + n.id + "' needs 'kernel' and 'stride'");
    }
    n.kernel = dim2_from_json(j["kernel"], "kernel of node '" + n.id + "'");
    n.stride = dim2_from_json(j["stride"], "stride of node '" + n.id + "'");
    n.padding = j.contains("padding")
                    ? padding_from_string(j["padding"].get<std::string>())
                    : (n.kind == NodeKind::conv ? Padding::same : Padding::none);
  }
  if (n.kind == NodeKind::conv) {
    if (j.contains("dilation")) {
      n.dilation =
          dim2_from_json(j["dilation"], "dilation of node '" + n.id + "'");
    }
    n.groups = get_positive_int(j, "groups", n.id, 1);
    n.in_channels = get_positive_int(j, "in_channels", n.id, 0);
    n.out_channels = get_positive_int(j, "out_channels", n.id, 0);
    if (n.in_channels == 0 || n.out_channels == 0) {
      throw ParseError("conv '" + n.id +
                       "' needs 'in_channels' and 'out_channels'");
    }
    if (j.contains("damping")) {
      const json& d = j["damping"];
      if (!d.is_object() || !d.contains("m_t") || !d.contains("m_f") ||
          !d["m_t"].is_number() || !d["m_f"].is_number()) {
        throw ParseError("damping of node '" + n.id +
                         "' must be an object {m_f, m_t}");
      }
      n.damping = DampingSpec{d["m_t"].get<double>(), d["m_f"].get<double>()};
    }
  }
  if (n.kind == NodeKind::affine || n.kind == NodeKind::coord_concat) {
    n.in_channels = get_positive_int(j, "in_channels", n.id, 0);
    n.out_channels = get_positive_int(j, "out_channels", n.id, 0);
    if (n.in_channels == 0 || n.out_channels == 0) {
      throw ParseError(std::string(to_string(n.kind)) + " '" + n.id +
                       "' needs 'in_channels' and 'out_channels'");
    }
  }
  return n;
}

ArchGraph parse_arch(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("syntax error at byte ") +
                     std::to_string(e.byte) + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("top level must be an object");
  if (!j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != 1) {
    throw ParseError("missing or unsupported 'version' (expected 1)");
  }
  if (!j.contains("input_shape") || !j["input_shape"].is_array() ||
      j["input_shape"].size() != 3) {
    throw ParseError("'input_shape' must be a [channels, freq, time] triple");
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "version" && key != "input_shape" && key != "nodes") {
      throw ParseError("unknown top-level field '" + key + "'");
    }
  }

  ArchGraph g;
  g.input_shape = {j["input_shape"][0].get<int>(),
                   j["input_shape"][1].get<int>(),
                   j["input_shape"][2].get<int>()};
  if (g.input_shape.channels < 1 || g.input_shape.freq < 1 ||
      g.input_shape.time < 1) {
    throw ParseError("'input_shape' components must be >= 1");
  }

  if (!j.contains("nodes") || !j["nodes"].is_array()) {
    throw ParseError("'nodes' must be an array");
  }
  for (const auto& nj : j["nodes"]) {
    NodeSpec n = node_from_json(nj);
    if (g.contains(n.id)) throw ParseError("duplicate node id '" + n.id + "'");
    g.nodes.emplace(n.id, std::move(n));
  }

  for (const auto& [id, n] : g.nodes) {
    for (const auto& p : n.predecessors) {
      if (!g.contains(p)) {
        throw ParseError("node '" + id + "' references missing predecessor '" +
                         p + "'");
      }
    }
  }

  std::vector<std::string> violations = validate(g);
  if (!violations.empty()) {
    std::ostringstream msg;
    msg << "invalid graph:";
    for (const auto& v : violations) msg << "\n  - " << v;
    throw GraphError(msg.str());
  }
  return g;
}

std::string serialize_arch(const ArchGraph& g) {
  std::vector<std::string> violations = validate(g);
  if (!violations.empty()) {
    throw GraphError("cannot serialize invalid graph: " + violations.front());
  }
  json j;
  j["version"] = 1;
  j["input_shape"] = json::array(
      {g.input_shape.channels, g.input_shape.freq, g.input_shape.time});
  json nodes = json::array();
  for (const auto& [id, n] : g.nodes) {  // std::map iterates in id order
    nodes.push_back(node_to_json(n));
  }
  j["nodes"] = std::move(nodes);
  return j.dump(2) + "\n";
}

}  // namespace rfscope
