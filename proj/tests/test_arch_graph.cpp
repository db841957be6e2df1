// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "rfscope/arch_graph.hpp"
#include "rfscope/family_gen.hpp"
#include "test_util.hpp"

using namespace rfscope;
using namespace rfscope::testutil;

namespace {

const char* kMinimalFile = R"({
  "version": 1,
  "input_shape": [1, 8, 8],
  "nodes": [
    {"id": "input", "kind": "input"},
    {"id": "c0", "kind": "conv", "kernel": [3, 3], "stride": [1, 1],
     "in_channels": 1, "out_channels": 4, "predecessors": ["input"]},
    {"id": "probe", "kind": "output_probe", "predecessors": ["c0"]}
  ]
})";

}  // namespace

TEST_CASE("parse accepts a minimal three-node file") {
  ArchGraph g = parse_arch(kMinimalFile);
  CHECK(g.nodes.size() == 3);
  CHECK(g.input_shape == TensorShape{1, 8, 8});
  CHECK(g.node("c0").kind == NodeKind::conv);
  CHECK(g.node("c0").padding == Padding::same);  // conv default
  CHECK(g.node("c0").dilation == Dim2{1, 1});
  CHECK(g.node("c0").groups == 1);
  CHECK(g.probe_node().predecessors == std::vector<std::string>{"c0"});
}

TEST_CASE("parse reports syntax errors with a byte position") {
  try {
    parse_arch("{\"version\": 1,, }");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
}

TEST_CASE("parse rejects unknown kinds, duplicate ids, dangling predecessors") {
  CHECK_THROWS_AS(
      parse_arch(R"({"version":1,"input_shape":[1,4,4],
        "nodes":[{"id":"input","kind":"wibble"}]})"),
      ParseError);
  CHECK_THROWS_AS(
      parse_arch(R"({"version":1,"input_shape":[1,4,4],"nodes":[
        {"id":"input","kind":"input"},
        {"id":"input","kind":"relu","predecessors":["input"]}]})"),
      ParseError);
  CHECK_THROWS_AS(
      parse_arch(R"({"version":1,"input_shape":[1,4,4],"nodes":[
        {"id":"input","kind":"input"},
        {"id":"probe","kind":"output_probe","predecessors":["ghost"]}]})"),
      ParseError);
}

TEST_CASE("parse rejects fields that do not belong to the node kind") {
  CHECK_THROWS_AS(
      parse_arch(R"({"version":1,"input_shape":[1,4,4],"nodes":[
        {"id":"input","kind":"input"},
        {"id":"r","kind":"relu","kernel":[3,3],"predecessors":["input"]},
        {"id":"probe","kind":"output_probe","predecessors":["r"]}]})"),
      ParseError);
}

TEST_CASE("serialize of a parsed file is canonical and stable") {
  ArchGraph g = parse_arch(kMinimalFile);
  std::string canonical = serialize_arch(g);
  CHECK(parse_arch(canonical) == g);
  CHECK(serialize_arch(parse_arch(canonical)) == canonical);
  // canonical text is LF-terminated, two-space indented
  CHECK(canonical.find('\r') == std::string::npos);
  CHECK(canonical.find("  \"") != std::string::npos);
}

TEST_CASE("graphs equal as data serialize to byte-identical text") {
  ArchGraph a = minimal_conv_graph();
  ArchGraph b = minimal_conv_graph();
  CHECK(serialize_arch(a) == serialize_arch(b));
}

TEST_CASE("generated family member serializes byte-stably across runs") {
  FamilyConfig cfg;
  cfg.family = Family::cp_resnet;
  cfg.rho = 7;
  CHECK(serialize_arch(cp_resnet(cfg)) == serialize_arch(cp_resnet(cfg)));
}

TEST_CASE("validate flags channel-mismatched add branches") {
  ArchGraph g = graph_of({1, 8, 8},
                         {conv_node("a", "input", {1, 1}, {1, 1}, 1, 128),
                          conv_node("b", "input", {1, 1}, {1, 1}, 1, 256),
                          add_node("sum", {"a", "b"}),
                          probe_node("sum")});
  auto violations = validate(g);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].find("sum") != std::string::npos);
}

TEST_CASE("validate flags group divisibility") {
  ArchGraph g = graph_of({128, 8, 8},
                         {conv_node("c", "input", {3, 3}, {1, 1}, 128, 128,
                                    Padding::same, 3),
                          probe_node("c")});
  auto violations = validate(g);
  REQUIRE(!violations.empty());
  CHECK(violations[0].find("groups") != std::string::npos);
  CHECK(violations[0].find("c") != std::string::npos);
}

TEST_CASE("generated cp_densenet rho=0 self-validates") {
  FamilyConfig cfg;
  cfg.family = Family::cp_densenet;
  cfg.rho = 0;
  CHECK(validate(cp_densenet(cfg)).empty());
}

TEST_CASE("validate flags unreachable nodes and missing probe") {
  ArchGraph g = minimal_conv_graph();
  g.nodes.emplace("orphan", relu_node("orphan", "input"));  // feeds nothing
  auto violations = validate(g);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].find("orphan") != std::string::npos);

  ArchGraph no_probe;
  no_probe.input_shape = {1, 4, 4};
  no_probe.nodes.emplace("input", input_node());
  CHECK(!validate(no_probe).empty());
}

TEST_CASE("topo order of a linear chain") {
  ArchGraph g;
  g.input_shape = {1, 4, 4};
  g.nodes.emplace("a", input_node("a"));
  g.nodes.emplace("b", conv_node("b", "a", {1, 1}, {1, 1}, 1, 1));
  g.nodes.emplace("c", probe_node("b", "c"));
  CHECK(topo_order(g) == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("topo order breaks diamond ties lexicographically") {
  ArchGraph g;
  g.input_shape = {1, 4, 4};
  g.nodes.emplace("a", input_node("a"));
  g.nodes.emplace("c", conv_node("c", "a", {1, 1}, {1, 1}, 1, 2));
  g.nodes.emplace("b", conv_node("b", "a", {1, 1}, {1, 1}, 1, 2));
  g.nodes.emplace("d", add_node("d", {"b", "c"}));
  g.nodes.emplace("e", probe_node("d", "e"));
  CHECK(topo_order(g) == std::vector<std::string>{"a", "b", "c", "d", "e"});
}

TEST_CASE("topo order reports a node on the cycle") {
  ArchGraph g;
  g.input_shape = {1, 4, 4};
  g.nodes.emplace("input", input_node());
  g.nodes.emplace("x", relu_node("x", "y"));
  g.nodes.emplace("y", relu_node("y", "x"));
  g.nodes.emplace("probe", probe_node("y"));
  try {
    topo_order(g);
    FAIL("expected GraphError");
  } catch (const GraphError& e) {
    std::string msg = e.what();
    CHECK((msg.find("'x'") != std::string::npos ||
           msg.find("'y'") != std::string::npos));
  }
  CHECK(!validate(g).empty());  // validate reports it as data
}

TEST_CASE("every predecessor precedes its node in generated graphs") {
  FamilyConfig cfg;
  cfg.family = Family::cp_resnet;
  cfg.rho = 0;
  ArchGraph g = cp_resnet(cfg);
  std::vector<std::string> order = topo_order(g);
  auto pos = [&](const std::string& id) {
    return std::find(order.begin(), order.end(), id) - order.begin();
  };
  for (const auto& [id, n] : g.nodes) {
    for (const auto& p : n.predecessors) {
      CHECK(pos(p) < pos(id));
    }
  }
}

TEST_CASE("round-trip identity over random valid graphs") {
  for (uint64_t seed = 0; seed < 60; ++seed) {
    ArchGraph g = random_valid_graph(seed);
    REQUIRE_MESSAGE(validate(g).empty(), "generator must emit valid graphs");
    std::string text = serialize_arch(g);
    ArchGraph back = parse_arch(text);
    CHECK(back == g);
    CHECK(serialize_arch(back) == text);
  }
}
