// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <vector>

#include "rfscope/arch_graph.hpp"

namespace rfscope {

enum class Family { cp_resnet, cp_densenet };

const char* to_string(Family family);
Family family_from_string(const std::string& s);

// Per-axis schedule strengths. Unlike Dim2 these may be zero.
struct RhoPair {
  int rho_f = 0;
  int rho_t = 0;
};

// Everything needed to generate one member of a family. Exactly one of
// `rho` / `rho_ft` must be set; growth_rate applies to cp_densenet only.
struct FamilyConfig {
  Family family = Family::cp_resnet;
  std::optional<int> rho;
  std::optional<RhoPair> rho_ft;
  int growth_rate = 64;
  int groups = 1;
  std::optional<DampingSpec> damping;
  int extra_pools = 0;
  int input_time = 256;
};

// The 22 per-slot kernel extents: slot k (1-based) is 3 along an axis iff
// k <= rho for that axis, else 1.
struct KernelSchedule {
  std::array<Dim2, 22> x;

  Dim2 slot(int k) const { return x[k - 1]; }  // k in 1..22
};

KernelSchedule kernel_schedule(int rho_f, int rho_t);

// Residual family: a 5x5 stride-2 stem followed by 12 two-conv residual
// blocks with 2x2 pooling after blocks 1, 2 and 4. Blocks 2..12 take their
// kernel extents from the schedule. Channel widths are 128 / 256 / 512 for
// blocks 1-4 / 5-8 / 9-12.
ArchGraph cp_resnet(const FamilyConfig& cfg);

// Densely connected family: the same stem, then 24 dense layers (1x1
// bottleneck, kxk conv emitting growth_rate channels, concat with the layer
// input), pooling after layers 2, 4 and 8. Layers 3..24 take their kernel
// extents from the schedule.
ArchGraph cp_densenet(const FamilyConfig& cfg);

struct RhoTableRow {
  int rho = 0;
  long long rf_freq = 0;
  long long rf_time = 0;
};

// Probe receptive field for every rho in 0..21, computed by generating each
// graph and running max_rf on it.
std::vector<RhoTableRow> rho_table(Family family);

}  // namespace rfscope
