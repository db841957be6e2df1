// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rfscope/family_gen.hpp"
#include "rfscope/rf_analysis.hpp"

using namespace rfscope;

namespace {

constexpr long long kRhoRf[22] = {23,  31,  39,  55,  71,  87,  103, 135,
                                  167, 199, 231, 263, 295, 327, 359, 391,
                                  423, 455, 487, 519, 551, 583};

FamilyConfig config(Family family, int rho) {
  FamilyConfig cfg;
  cfg.family = family;
  cfg.rho = rho;
  return cfg;
}

ArchGraph generate(const FamilyConfig& cfg) {
  return cfg.family == Family::cp_resnet ? cp_resnet(cfg) : cp_densenet(cfg);
}

}  // namespace

TEST_CASE("schedule lower bound: all pointwise") {
  KernelSchedule s = kernel_schedule(0, 0);
  for (int k = 1; k <= 22; ++k) CHECK(s.slot(k) == Dim2{1, 1});
}

TEST_CASE("schedule at strength 5") {
  KernelSchedule s = kernel_schedule(5, 5);
  for (int k = 1; k <= 5; ++k) CHECK(s.slot(k) == Dim2{3, 3});
  for (int k = 6; k <= 22; ++k) CHECK(s.slot(k) == Dim2{1, 1});
}

TEST_CASE("schedule with split strengths (3, 7)") {
  KernelSchedule s = kernel_schedule(3, 7);
  for (int k = 1; k <= 3; ++k) CHECK(s.slot(k) == Dim2{3, 3});
  for (int k = 4; k <= 7; ++k) CHECK(s.slot(k) == Dim2{1, 3});
  for (int k = 8; k <= 22; ++k) CHECK(s.slot(k) == Dim2{1, 1});
  CHECK(s.slot(22).freq == 1);  // the last slot never widens
}

TEST_CASE("schedule rejects out-of-range strengths") {
  CHECK_THROWS_AS(kernel_schedule(-1, 0), Error);
  CHECK_THROWS_AS(kernel_schedule(0, 22), Error);
}

TEST_CASE("config requires exactly one strength form") {
  FamilyConfig none;
  none.family = Family::cp_resnet;
  CHECK_THROWS_AS(cp_resnet(none), Error);
  FamilyConfig both = none;
  both.rho = 3;
  both.rho_ft = RhoPair{1, 1};
  CHECK_THROWS_AS(cp_resnet(both), Error);
  FamilyConfig wrong_family = config(Family::cp_densenet, 0);
  CHECK_THROWS_AS(cp_resnet(wrong_family), Error);
}

TEST_CASE("golden table, both families, all 22 rows") {
  for (Family family : {Family::cp_resnet, Family::cp_densenet}) {
    auto rows = rho_table(family);
    REQUIRE(rows.size() == 22);
    for (int rho = 0; rho <= 21; ++rho) {
      CHECK(rows[rho].rho == rho);
      CHECK_MESSAGE(rows[rho].rf_freq == kRhoRf[rho],
                    to_string(family) << " rho=" << rho);
      CHECK(rows[rho].rf_time == kRhoRf[rho]);
    }
  }
}

TEST_CASE("densenet table equals resnet table element-wise") {
  auto r = rho_table(Family::cp_resnet);
  auto d = rho_table(Family::cp_densenet);
  for (size_t i = 0; i < r.size(); ++i) {
    CHECK(r[i].rf_freq == d[i].rf_freq);
    CHECK(r[i].rf_time == d[i].rf_time);
  }
}

TEST_CASE("per-axis independence over a strength grid") {
  for (int a : {0, 3, 9, 21}) {
    for (int b : {0, 5, 14}) {
      FamilyConfig cfg;
      cfg.family = Family::cp_resnet;
      cfg.rho_ft = RhoPair{a, b};
      RfReport r = max_rf(cp_resnet(cfg));
      CHECK(r.probe().freq.rf == kRhoRf[a]);
      CHECK(r.probe().time.rf == kRhoRf[b]);
    }
  }
}

TEST_CASE("generated graphs always validate") {
  for (Family family : {Family::cp_resnet, Family::cp_densenet}) {
    for (int rho : {0, 5, 21}) {
      FamilyConfig cfg = config(family, rho);
      CHECK(validate(generate(cfg)).empty());
    }
  }
  FamilyConfig variants = config(Family::cp_resnet, 7);
  variants.groups = 4;
  variants.extra_pools = 2;
  variants.damping = DampingSpec{0.9, 0.9};
  CHECK(validate(cp_resnet(variants)).empty());

  FamilyConfig dense = config(Family::cp_densenet, 9);
  dense.growth_rate = 32;
  dense.extra_pools = 1;
  CHECK(validate(cp_densenet(dense)).empty());
}

TEST_CASE("growth rate does not change the RF report") {
  FamilyConfig g64 = config(Family::cp_densenet, 9);
  FamilyConfig g32 = g64;
  g32.growth_rate = 32;
  CHECK(max_rf(cp_densenet(g32)) == max_rf(cp_densenet(g64)));
}

TEST_CASE("densenet rho=0 and rho=9 probe RF") {
  CHECK(max_rf(cp_densenet(config(Family::cp_densenet, 0))).probe().freq.rf == 23);
  CHECK(max_rf(cp_densenet(config(Family::cp_densenet, 9))).probe().time.rf == 199);
}

TEST_CASE("grouping reduces grouped-conv weights exactly by g") {
  FamilyConfig plain = config(Family::cp_resnet, 5);
  FamilyConfig grouped = plain;
  grouped.groups = 4;
  ArchGraph g1 = cp_resnet(plain);
  ArchGraph g4 = cp_resnet(grouped);
  CHECK(max_rf(g1) == max_rf(g4));
  CHECK(count_params(g4) < count_params(g1));

  auto c1 = count_params_by_node(g1);
  auto c4 = count_params_by_node(g4);
  for (const auto& [id, n] : g4.nodes) {
    if (n.kind != NodeKind::conv) continue;
    if (n.groups == 4) {
      CHECK(c4.at(id).weights * 4 == c1.at(id).weights);
    } else {
      CHECK(n.in_channels == 1);  // only the stem stays ungrouped
      CHECK(c4.at(id).weights == c1.at(id).weights);
    }
    CHECK(c4.at(id).biases == c1.at(id).biases);
  }
}

TEST_CASE("extra pools strictly grow the probe RF and keep parameters") {
  FamilyConfig cfg = config(Family::cp_resnet, 6);
  long long prev_rf = 0;
  long long params = count_params(cp_resnet(cfg));
  for (int n : {0, 1, 2}) {
    cfg.extra_pools = n;
    ArchGraph g = cp_resnet(cfg);
    RfReport r = max_rf(g);
    CHECK(r.probe().freq.rf > prev_rf);
    prev_rf = r.probe().freq.rf;
    CHECK(count_params(g) == params);
    CHECK(validate(g).empty());
  }
}

TEST_CASE("damping settings are copied onto every conv") {
  FamilyConfig cfg = config(Family::cp_resnet, 3);
  cfg.damping = DampingSpec{0.0, 0.9};
  ArchGraph g = cp_resnet(cfg);
  int convs = 0;
  for (const auto& [id, n] : g.nodes) {
    if (n.kind != NodeKind::conv) continue;
    ++convs;
    REQUIRE(n.damping.has_value());
    CHECK(n.damping->m_f == 0.9);
    CHECK(n.damping->m_t == 0.0);
  }
  CHECK(convs > 20);
}

TEST_CASE("densenet structure: 24 dense layers, 3 pools, bottlenecks") {
  ArchGraph g = cp_densenet(config(Family::cp_densenet, 0));
  int concats = 0, pools = 0;
  for (const auto& [id, n] : g.nodes) {
    if (n.kind == NodeKind::concat) ++concats;
    if (n.kind == NodeKind::maxpool) ++pools;
  }
  CHECK(concats == 24);
  CHECK(pools == 3);
  // every dense layer concatenates its own input with its conv output
  CHECK(g.node("d01_concat").predecessors.size() == 2);
}

TEST_CASE("resnet structure: stem and 12 residual adds") {
  ArchGraph g = cp_resnet(config(Family::cp_resnet, 0));
  int adds = 0, pools = 0;
  for (const auto& [id, n] : g.nodes) {
    if (n.kind == NodeKind::add) ++adds;
    if (n.kind == NodeKind::maxpool) ++pools;
  }
  CHECK(adds == 12);
  CHECK(pools == 3);
  CHECK(g.node("stem_conv").kernel == Dim2{5, 5});
  CHECK(g.node("stem_conv").stride == Dim2{2, 2});
  CHECK(g.node("stem_conv").out_channels == 128);
  // channel widths double entering blocks 5 and 9
  CHECK(g.node("rb05_a_conv").in_channels == 128);
  CHECK(g.node("rb05_a_conv").out_channels == 256);
  CHECK(g.node("rb09_a_conv").out_channels == 512);
  CHECK(g.contains("rb05_proj_conv"));
  CHECK(!g.contains("rb02_proj_conv"));
}
