// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "rfscope/erf_probe.hpp"
#include "rfscope/io.hpp"
#include "rfscope/rng.hpp"
#include "test_util.hpp"

using namespace rfscope;
using namespace rfscope::testutil;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Identity wiring: one pointwise conv with unit weight.
struct IdentityRig {
  ArchGraph graph;
  WeightSet weights;

  explicit IdentityRig(TensorShape shape) {
    graph = graph_of(shape, {conv_node("c", "input", {1, 1}, {1, 1},
                                       shape.channels, shape.channels),
                             probe_node("c")});
    weights = init_weights(graph, 0);
    ConvWeights& w = weights.conv.at("c");
    std::fill(w.w.begin(), w.w.end(), 0.0);
    for (int c = 0; c < shape.channels; ++c) w.at(c, c, 0, 0) = 1.0;
  }
};

GradientMap map_from_grid(int freq, int time, std::vector<double> grid) {
  GradientMap m;
  m.freq = freq;
  m.time = time;
  m.grid = std::move(grid);
  m.n_inputs = 1;
  m.probe_coord = {0, 0};
  return m;
}

}  // namespace

TEST_CASE("identity graph concentrates the map on the probe pixel") {
  IdentityRig rig({1, 9, 9});
  auto inputs = make_noise_inputs(rig.graph.input_shape, 3, 5);
  GradientMap m = gradient_map(rig.graph, rig.weights, inputs);
  CHECK(m.probe_coord == Dim2{4, 4});  // center by default
  for (int f = 0; f < 9; ++f) {
    for (int t = 0; t < 9; ++t) {
      CHECK(m.at(f, t) == ((f == 4 && t == 4) ? 1.0 : 0.0));
    }
  }
  ErfStats s = erf_stats(m);
  CHECK(s.mu_t == 5.0);  // 1-based center
  CHECK(s.sigma_t == 0.0);
  CHECK(s.e_t == 0.0);
  CHECK(s.e_f == 0.0);
}

TEST_CASE("a single input reproduces its own absolute gradient") {
  ArchGraph g = graph_of({1, 10, 10},
                         {conv_node("c0", "input", {3, 3}, {1, 1}, 1, 3),
                          relu_node("r0", "c0"),
                          conv_node("c1", "r0", {3, 3}, {1, 1}, 3, 2),
                          probe_node("c1")});
  WeightSet w = init_weights(g, 3);
  auto inputs = make_noise_inputs(g.input_shape, 1, 4);
  GradientMap m = gradient_map(g, w, inputs);
  Tensor grad = backward_input(g, w, inputs[0], m.probe_coord);
  for (int f = 0; f < 10; ++f) {
    for (int t = 0; t < 10; ++t) {
      CHECK(m.at(f, t) == std::fabs(grad.at(0, f, t)));
    }
  }
}

TEST_CASE("duplicating the input list leaves the map unchanged") {
  ArchGraph g = graph_of({1, 8, 8},
                         {conv_node("c0", "input", {3, 3}, {1, 1}, 1, 2),
                          probe_node("c0")});
  WeightSet w = init_weights(g, 9);
  auto inputs = make_noise_inputs(g.input_shape, 2, 10);
  GradientMap once = gradient_map(g, w, inputs);
  std::vector<Tensor> doubled = inputs;
  doubled.insert(doubled.end(), inputs.begin(), inputs.end());
  GradientMap twice = gradient_map(g, w, doubled);
  CHECK(once.grid == twice.grid);
}

TEST_CASE("worker count does not change the map") {
  ArchGraph g = graph_of({1, 16, 16},
                         {conv_node("c0", "input", {3, 3}, {1, 1}, 1, 4),
                          relu_node("r0", "c0"),
                          conv_node("c1", "r0", {3, 3}, {2, 2}, 4, 4),
                          probe_node("c1")});
  WeightSet w = init_weights(g, 13);
  auto inputs = make_noise_inputs(g.input_shape, 5, 14);
  GradientMap serial = gradient_map(g, w, inputs, std::nullopt, {}, 1);
  GradientMap threaded = gradient_map(g, w, inputs, std::nullopt, {}, 4);
  CHECK(serial.grid == threaded.grid);
}

TEST_CASE("empty input list is rejected") {
  IdentityRig rig({1, 4, 4});
  CHECK_THROWS_AS(gradient_map(rig.graph, rig.weights, {}), Error);
}

TEST_CASE("point-mass marginal statistics") {
  GradientMap m = map_from_grid(4, 5, std::vector<double>(20, 0.0));
  m.at(2, 3) = 2.5;  // all mass in column t=3 (1-based 4)
  ErfStats s = erf_stats(m);
  CHECK(s.mu_t == 4.0);
  CHECK(s.sigma_t == 0.0);
  CHECK(s.e_t == 0.0);
  CHECK(s.mu_f == 3.0);
  CHECK(mass_fraction(m, Axis::time, 4, 4) == 1.0);
  CHECK(mass_fraction(m, Axis::time, 1, 5) == 1.0);
  CHECK(mass_fraction(m, Axis::time, 1, 2) == 0.0);
}

TEST_CASE("discretized gaussian marginal recovers E = 4 sigma near 40") {
  const int size = 256;
  const double mu = 128.0, sigma = 10.0;
  std::vector<double> grid(size * size, 0.0);
  for (int t = 0; t < size; ++t) {
    const double x = (t + 1.0 - mu) / sigma;
    grid[static_cast<size_t>(77) * size + t] = std::exp(-0.5 * x * x);
  }
  GradientMap m = map_from_grid(size, size, std::move(grid));
  ErfStats s = erf_stats(m);

  // independent oracle: weighted moments straight off the sampled profile
  double mass = 0, first = 0;
  for (int t = 1; t <= size; ++t) {
    const double w = std::exp(-0.5 * (t - mu) * (t - mu) / (sigma * sigma));
    mass += w;
    first += t * w;
  }
  const double mu_ref = first / mass;
  double second = 0;
  for (int t = 1; t <= size; ++t) {
    const double w = std::exp(-0.5 * (t - mu) * (t - mu) / (sigma * sigma));
    second += (t - mu_ref) * (t - mu_ref) * w;
  }
  const double sigma_ref = std::sqrt(second / mass);
  CHECK(s.mu_t == doctest::Approx(mu_ref).epsilon(1e-12));
  CHECK(s.sigma_t == doctest::Approx(sigma_ref).epsilon(1e-12));
  CHECK(std::fabs(s.e_t - 40.0) <= 0.02 * 40.0);

  const int lo = static_cast<int>(std::lround(s.mu_t - 2 * s.sigma_t));
  const int hi = static_cast<int>(std::lround(s.mu_t + 2 * s.sigma_t));
  CHECK(mass_fraction(m, Axis::time, lo, hi) ==
        doctest::Approx(0.9545).epsilon(0.011));
}

TEST_CASE("uniform marginal variance matches the discrete formula") {
  const int size = 37;
  GradientMap m = map_from_grid(3, size, std::vector<double>(3 * size, 1.0));
  ErfStats s = erf_stats(m);
  const double expected = std::sqrt((size * size - 1.0) / 12.0);
  CHECK(s.sigma_t == doctest::Approx(expected).epsilon(1e-12));
  CHECK(s.e_t == doctest::Approx(4.0 * expected).epsilon(1e-12));
  CHECK(s.mu_t == doctest::Approx((size + 1.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("symmetric maps center their mean exactly") {
  const int size = 11;
  std::vector<double> grid(size * size, 0.0);
  for (int f = 0; f < size; ++f) {
    for (int t = 0; t < size; ++t) {
      grid[static_cast<size_t>(f) * size + t] =
          1.0 / (1 + std::abs(f - 5) + std::abs(t - 5));
    }
  }
  GradientMap m = map_from_grid(size, size, std::move(grid));
  ErfStats s = erf_stats(m);
  CHECK(s.mu_t == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(s.mu_f == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("degenerate all-zero maps are refused") {
  GradientMap m = map_from_grid(4, 4, std::vector<double>(16, 0.0));
  CHECK_THROWS_AS(erf_stats(m), DegenerateDataError);
  CHECK_THROWS_AS(mass_fraction(m, Axis::time, 1, 4), DegenerateDataError);
}

TEST_CASE("mass_fraction rejects bad intervals") {
  GradientMap m = map_from_grid(4, 4, std::vector<double>(16, 1.0));
  CHECK_THROWS_AS(mass_fraction(m, Axis::time, 3, 2), Error);
  CHECK_THROWS_AS(mass_fraction(m, Axis::time, 0, 2), Error);
  CHECK_THROWS_AS(mass_fraction(m, Axis::freq, 1, 5), Error);
  CHECK(mass_fraction(m, Axis::freq, 1, 4) == 1.0);
}

TEST_CASE("scaling inputs leaves the statistics unchanged without relu") {
  ArchGraph g = graph_of({1, 16, 16},
                         {conv_node("c0", "input", {3, 3}, {1, 1}, 1, 4),
                          relu_node("r0", "c0"),
                          pool_node("p0", "r0"),
                          conv_node("c1", "p0", {3, 3}, {1, 1}, 4, 2),
                          probe_node("c1")});
  WeightSet w = init_weights(g, 19);
  auto inputs = make_noise_inputs(g.input_shape, 3, 20);
  std::vector<Tensor> scaled = inputs;
  for (Tensor& t : scaled) {
    for (double& v : t.data) v *= 3.75;
  }
  EvalOptions opts;
  opts.relu_as_identity = true;
  ErfStats a = erf_stats(gradient_map(g, w, inputs, std::nullopt, opts));
  ErfStats b = erf_stats(gradient_map(g, w, scaled, std::nullopt, opts));
  CHECK(a.mu_t == doctest::Approx(b.mu_t).epsilon(1e-12));
  CHECK(a.sigma_t == doctest::Approx(b.sigma_t).epsilon(1e-12));
  CHECK(a.mu_f == doctest::Approx(b.mu_f).epsilon(1e-12));
  CHECK(a.sigma_f == doctest::Approx(b.sigma_f).epsilon(1e-12));
}

TEST_CASE("PGM export writes one bright pixel for a one-hot map") {
  GradientMap m = map_from_grid(3, 4, std::vector<double>(12, 0.0));
  m.at(1, 2) = 7.0;
  std::string base = temp_path("rfscope_heatmap_onehot");
  export_heatmap(m, std::nullopt, base, HeatmapFormat::pgm, 3);
  std::string pgm = read_file(base + ".pgm");
  CHECK(pgm.rfind("P2\n4 3\n255\n", 0) == 0);
  size_t count255 = 0, pos = 0;
  while ((pos = pgm.find("255", pos + 1)) != std::string::npos) ++count255;
  CHECK(count255 == 2);  // maxval line plus exactly one pixel
  std::filesystem::remove(base + ".pgm");
  std::filesystem::remove(base + ".json");
}

TEST_CASE("CSV export re-imports exactly") {
  GradientMap m = map_from_grid(5, 6, std::vector<double>(30, 0.0));
  SplitMix64 rng(2);
  for (double& v : m.grid) v = rng.next_unit() * 1e-9;
  std::string base = temp_path("rfscope_heatmap_csv");
  export_heatmap(m, std::nullopt, base, HeatmapFormat::csv, 3);
  Tensor back = tensor_from_csv(read_file(base + ".csv"));
  CHECK(back.shape == TensorShape{1, 5, 6});
  CHECK(back.data == m.grid);
  std::filesystem::remove(base + ".csv");
  std::filesystem::remove(base + ".json");
}

TEST_CASE("sidecar carries stats, boxes, probe and seed") {
  IdentityRig rig({1, 9, 9});
  auto inputs = make_noise_inputs(rig.graph.input_shape, 2, 6);
  GradientMap m = gradient_map(rig.graph, rig.weights, inputs);
  RfWindow win = rf_window(rig.graph, "probe", m.probe_coord);
  std::string base = temp_path("rfscope_heatmap_sidecar");
  export_heatmap(m, win, base, HeatmapFormat::pgm, 77);
  std::string sidecar = read_file(base + ".json");
  for (const char* key : {"\"mu\"", "\"sigma\"", "\"E\"", "\"erf_box\"",
                          "\"max_rf_box\"", "\"n_inputs\"", "\"probe\"",
                          "\"seed\""}) {
    CHECK(sidecar.find(key) != std::string::npos);
  }
  CHECK(sidecar.find("\"seed\": 77") != std::string::npos);
  CHECK(sidecar.find("\"n_inputs\": 2") != std::string::npos);
  // identity graph: the RF window is the probe pixel itself, 1-based [5,5]
  CHECK(sidecar.find("5") != std::string::npos);
  std::filesystem::remove(base + ".pgm");
  std::filesystem::remove(base + ".json");
}

TEST_CASE("frequency damping shrinks the frequency-axis spread") {
  // deep pointwise-free stack so the map has real spatial extent
  std::vector<NodeSpec> nodes;
  std::string prev = "input";
  int channels = 1;
  for (int i = 0; i < 8; ++i) {
    std::string conv_id = "c" + std::to_string(i);
    nodes.push_back(conv_node(conv_id, prev, {3, 3}, {1, 1}, channels, 4));
    channels = 4;
    std::string relu_id = "r" + std::to_string(i);
    nodes.push_back(relu_node(relu_id, conv_id));
    prev = relu_id;
  }
  nodes.push_back(probe_node(prev));
  ArchGraph plain = graph_of({1, 48, 48}, nodes);
  ArchGraph damped = plain;
  for (auto& [id, n] : damped.nodes) {
    if (n.kind == NodeKind::conv) n.damping = DampingSpec{0.0, 0.9};
  }
  WeightSet w = init_weights(plain, 23);  // same ids -> same weights
  auto inputs = make_noise_inputs(plain.input_shape, 4, 24);

  ErfStats undamped = erf_stats(gradient_map(plain, w, inputs));
  ErfStats shrunk = erf_stats(gradient_map(damped, w, inputs));
  CHECK(shrunk.e_f < undamped.e_f);
}

TEST_CASE("noise inputs are seeded and shaped") {
  auto a = make_noise_inputs({2, 5, 7}, 3, 11);
  auto b = make_noise_inputs({2, 5, 7}, 3, 11);
  REQUIRE(a.size() == 3);
  CHECK(a[0].shape == TensorShape{2, 5, 7});
  CHECK(a == b);
  CHECK(a[0].data != a[1].data);
  auto c = make_noise_inputs({2, 5, 7}, 1, 12);
  CHECK(c[0].data != a[0].data);
}
