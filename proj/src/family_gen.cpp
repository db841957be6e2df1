// SPDX-License-Identifier: Apache-2.0
#include "rfscope/family_gen.hpp"

#include <cstdio>
#include <set>

#include "rfscope/rf_analysis.hpp"

namespace rfscope {

const char* to_string(Family family) {
  return family == Family::cp_resnet ? "cp_resnet" : "cp_densenet";
}

Family family_from_string(const std::string& s) {
  if (s == "cp_resnet") return Family::cp_resnet;
  if (s == "cp_densenet") return Family::cp_densenet;
  throw Error("unknown family '" + s +
              "' (expected cp_resnet or cp_densenet)");
}

KernelSchedule kernel_schedule(int rho_f, int rho_t) {
  if (rho_f < 0 || rho_f > 21 || rho_t < 0 || rho_t > 21) {
    throw Error("rho values must lie in [0, 21]");
  }
  KernelSchedule s;
  for (int k = 1; k <= 22; ++k) {
    s.x[k - 1] = Dim2{k <= rho_f ? 3 : 1, k <= rho_t ? 3 : 1};
  }
  return s;
}

namespace {

struct Resolved {
  int rho_f = 0;
  int rho_t = 0;
};

Resolved resolve(const FamilyConfig& cfg) {
  if (cfg.rho.has_value() == cfg.rho_ft.has_value()) {
    throw Error("exactly one of rho / (rho_f, rho_t) must be set");
  }
  Resolved r;
  if (cfg.rho) {
    r.rho_f = r.rho_t = *cfg.rho;
  } else {
    r.rho_f = cfg.rho_ft->rho_f;
    r.rho_t = cfg.rho_ft->rho_t;
  }
  if (r.rho_f < 0 || r.rho_f > 21 || r.rho_t < 0 || r.rho_t > 21) {
    throw Error("rho values must lie in [0, 21]");
  }
  if (cfg.groups < 1) throw Error("groups must be >= 1");
  if (cfg.growth_rate < 1) throw Error("growth_rate must be >= 1");
  if (cfg.extra_pools < 0) throw Error("extra_pools must be >= 0");
  if (cfg.input_time < 1) throw Error("input_time must be >= 1");
  if (cfg.damping) {
    auto ok = [](double m) { return m >= 0.0 && m < 1.0; };
    if (!ok(cfg.damping->m_t) || !ok(cfg.damping->m_f)) {
      throw Error("damping strengths must lie in [0,1)");
    }
  }
  return r;
}

std::string two_digit(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%02d", prefix, i);
  return buf;
}

// Builder that accumulates nodes and tracks the running tail.
struct GraphBuilder {
  ArchGraph g;
  const FamilyConfig& cfg;
  std::string tail;
  int tail_channels = 0;

  explicit GraphBuilder(const FamilyConfig& c) : cfg(c) {}

  void add_node(NodeSpec n) { g.nodes.emplace(n.id, std::move(n)); }

  int conv_groups(int in_ch, int out_ch) const {
    // Grouping is applied wherever the channel counts allow it; the stem
    // (single input channel) always stays ungrouped.
    return (in_ch % cfg.groups == 0 && out_ch % cfg.groups == 0) ? cfg.groups
                                                                 : 1;
  }

  std::string conv(const std::string& id, const std::string& pred, Dim2 kernel,
                   Dim2 stride, int in_ch, int out_ch) {
    NodeSpec n;
    n.id = id;
    n.kind = NodeKind::conv;
    n.kernel = kernel;
    n.stride = stride;
    n.groups = conv_groups(in_ch, out_ch);
    n.in_channels = in_ch;
    n.out_channels = out_ch;
    n.padding = Padding::same;
    n.damping = cfg.damping;
    n.predecessors = {pred};
    add_node(std::move(n));
    return id;
  }

  std::string affine(const std::string& id, const std::string& pred, int ch) {
    NodeSpec n;
    n.id = id;
    n.kind = NodeKind::affine;
    n.in_channels = ch;
    n.out_channels = ch;
    n.predecessors = {pred};
    add_node(std::move(n));
    return id;
  }

  std::string relu(const std::string& id, const std::string& pred) {
    NodeSpec n;
    n.id = id;
    n.kind = NodeKind::relu;
    n.predecessors = {pred};
    add_node(std::move(n));
    return id;
  }

  // conv -> affine -> relu, returning the relu id.
  std::string conv_unit(const std::string& base, const std::string& pred,
                        Dim2 kernel, Dim2 stride, int in_ch, int out_ch) {
    conv(base + "_conv", pred, kernel, stride, in_ch, out_ch);
    affine(base + "_bn", base + "_conv", out_ch);
    return relu(base + "_relu", base + "_bn");
  }

  std::string pool(const std::string& id, const std::string& pred) {
    NodeSpec n;
    n.id = id;
    n.kind = NodeKind::maxpool;
    n.kernel = {2, 2};
    n.stride = {2, 2};
    n.padding = Padding::none;
    n.predecessors = {pred};
    add_node(std::move(n));
    return id;
  }

  void finish_probe() {
    NodeSpec n;
    n.id = "probe";
    n.kind = NodeKind::output_probe;
    n.predecessors = {tail};
    add_node(std::move(n));
  }
};

// Positions (1-based block/layer ordinals) of `n` extra pools spread evenly
// across the ordinals (first_slot..last_slot].
std::multiset<int> extra_pool_positions(int n, int first_slot, int last_slot) {
  std::multiset<int> at;
  int span = last_slot - first_slot;
  for (int i = 1; i <= n; ++i) {
    int offset = (i * span + n) / (n + 1);  // ceil(i*span/(n+1))
    at.insert(first_slot + offset);
  }
  return at;
}

}  // namespace

ArchGraph cp_resnet(const FamilyConfig& cfg) {
  if (cfg.family != Family::cp_resnet) throw Error("config family mismatch");
  Resolved rho = resolve(cfg);
  KernelSchedule schedule = kernel_schedule(rho.rho_f, rho.rho_t);

  GraphBuilder b(cfg);
  b.g.input_shape = {1, 256, cfg.input_time};
  {
    NodeSpec in;
    in.id = "input";
    in.kind = NodeKind::input;
    b.add_node(std::move(in));
  }
  b.tail = b.conv_unit("stem", "input", {5, 5}, {2, 2}, 1, 128);
  b.tail_channels = 128;

  auto pools_after = std::multiset<int>{1, 2, 4};
  for (int p : extra_pool_positions(cfg.extra_pools, 4, 12)) pools_after.insert(p);

  int pool_count = 0;
  for (int block = 1; block <= 12; ++block) {
    std::string base = two_digit("rb", block);
    int in_ch = b.tail_channels;
    int out_ch = block <= 4 ? 128 : (block <= 8 ? 256 : 512);
    Dim2 ka = block == 1 ? Dim2{3, 3} : schedule.slot(2 * block - 3);
    Dim2 kb = block == 1 ? Dim2{1, 1} : schedule.slot(2 * block - 2);

    std::string block_input = b.tail;
    std::string mid = b.conv_unit(base + "_a", block_input, ka, {1, 1}, in_ch, out_ch);
    std::string main = b.conv_unit(base + "_b", mid, kb, {1, 1}, out_ch, out_ch);

    std::string shortcut = block_input;
    if (in_ch != out_ch) {
      b.conv(base + "_proj_conv", block_input, {1, 1}, {1, 1}, in_ch, out_ch);
      shortcut = b.affine(base + "_proj_bn", base + "_proj_conv", out_ch);
    }
    {
      NodeSpec n;
      n.id = base + "_add";
      n.kind = NodeKind::add;
      n.predecessors = {main, shortcut};
      b.add_node(std::move(n));
    }
    b.tail = base + "_add";
    b.tail_channels = out_ch;

    for (size_t i = 0; i < pools_after.count(block); ++i) {
      b.tail = b.pool(base + "_pool" + (i ? std::to_string(i + 1) : ""), b.tail);
    }
    pool_count += static_cast<int>(pools_after.count(block));
  }
  (void)pool_count;
  b.finish_probe();
  return b.g;
}

ArchGraph cp_densenet(const FamilyConfig& cfg) {
  if (cfg.family != Family::cp_densenet) throw Error("config family mismatch");
  Resolved rho = resolve(cfg);
  KernelSchedule schedule = kernel_schedule(rho.rho_f, rho.rho_t);

  const int growth = cfg.growth_rate;
  const int bottleneck_width = 4 * growth;

  GraphBuilder b(cfg);
  b.g.input_shape = {1, 256, cfg.input_time};
  {
    NodeSpec in;
    in.id = "input";
    in.kind = NodeKind::input;
    b.add_node(std::move(in));
  }
  b.tail = b.conv_unit("stem", "input", {5, 5}, {2, 2}, 1, 2 * growth);
  b.tail_channels = 2 * growth;

  auto pools_after = std::multiset<int>{2, 4, 8};
  for (int p : extra_pool_positions(cfg.extra_pools, 8, 24)) pools_after.insert(p);

  for (int layer = 1; layer <= 24; ++layer) {
    std::string base = two_digit("d", layer);
    // Layers 1 and 2 are fixed 3x3 / 1x1; 3..24 follow the schedule.
    Dim2 k = layer == 1   ? Dim2{3, 3}
             : layer == 2 ? Dim2{1, 1}
                          : schedule.slot(layer - 2);
    std::string layer_input = b.tail;
    int in_ch = b.tail_channels;

    std::string bn_out = b.conv_unit(base + "_b", layer_input, {1, 1}, {1, 1},
                                     in_ch, bottleneck_width);
    std::string conv_out =
        b.conv_unit(base, bn_out, k, {1, 1}, bottleneck_width, growth);
    {
      NodeSpec n;
      n.id = base + "_concat";
      n.kind = NodeKind::concat;
      n.predecessors = {layer_input, conv_out};
      b.add_node(std::move(n));
    }
    b.tail = base + "_concat";
    b.tail_channels = in_ch + growth;

    if (layer == 2) {
      // The first transition keeps an extra width-preserving bottleneck in
      // front of its pool.
      b.tail = b.conv_unit("trans1_b", b.tail, {1, 1}, {1, 1}, b.tail_channels,
                           b.tail_channels);
    }
    for (size_t i = 0; i < pools_after.count(layer); ++i) {
      b.tail = b.pool(base + "_pool" + (i ? std::to_string(i + 1) : ""), b.tail);
    }
  }
  b.finish_probe();
  return b.g;
}

std::vector<RhoTableRow> rho_table(Family family) {
  std::vector<RhoTableRow> rows;
  rows.reserve(22);
  for (int rho = 0; rho <= 21; ++rho) {
    FamilyConfig cfg;
    cfg.family = family;
    cfg.rho = rho;
    ArchGraph g =
        family == Family::cp_resnet ? cp_resnet(cfg) : cp_densenet(cfg);
    RfReport report = max_rf(g);
    rows.push_back({rho, report.probe().freq.rf, report.probe().time.rf});
  }
  return rows;
}

}  // namespace rfscope
