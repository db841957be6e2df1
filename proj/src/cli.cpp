// SPDX-License-Identifier: Apache-2.0
#include "rfscope/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rfscope/damping.hpp"
#include "rfscope/erf_probe.hpp"
#include "rfscope/family_gen.hpp"
#include "rfscope/io.hpp"
#include "rfscope/rf_analysis.hpp"
#include "rfscope/rng.hpp"
#include "rfscope/tensor_engine.hpp"
#include "rfscope/version.hpp"

namespace rfscope {

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDegenerate = 3;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

uint64_t resolve_seed(const std::optional<uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("RFSCOPE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error("RFSCOPE_SEED is not a valid integer");
    }
  }
  return 1;
}

std::string digest_file(const std::string& path) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(read_file(path))));
  return buf;
}

void write_manifest(const std::string& path, const std::string& subcommand,
                    json flags, std::optional<uint64_t> seed,
                    const std::vector<std::string>& input_files) {
  json m;
  m["subcommand"] = subcommand;
  m["flags"] = std::move(flags);
  m["seed"] = seed ? json(*seed) : json(nullptr);
  m["tool_version"] = kVersion;
  json digests = json::object();
  for (const auto& f : input_files) digests[f] = digest_file(f);
  m["input_digests"] = std::move(digests);
  write_file(path, m.dump(2) + "\n");
}

Dim2 parse_coord(const std::string& text) {
  auto comma = text.find(',');
  if (comma == std::string::npos) {
    throw Error("coordinate must be 'freq,time'");
  }
  try {
    return {std::stoi(text.substr(0, comma)), std::stoi(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw Error("coordinate must be 'freq,time' with integer components");
  }
}

// Shared damping override: --damp freq|time|both|none plus optional strength
// overrides.
struct DampFlags {
  std::string mode;  // empty = leave the graph untouched
  double m_t = 0.9;
  double m_f = 0.9;

  std::optional<DampingSpec> spec() const {
    if (mode.empty() || mode == "none") return std::nullopt;
    if (mode == "freq") return DampingSpec{0.0, m_f};
    if (mode == "time") return DampingSpec{m_t, 0.0};
    if (mode == "both") return DampingSpec{m_t, m_f};
    throw Error("damp mode must be one of none, freq, time, both");
  }

  void apply(ArchGraph& g) const {
    if (mode.empty()) return;
    std::optional<DampingSpec> s = spec();
    for (auto& [id, node] : g.nodes) {
      if (node.kind == NodeKind::conv) node.damping = s;
    }
  }
};

void add_damp_flags(CLI::App* cmd, DampFlags& flags) {
  cmd->add_option("--damp", flags.mode,
                  "apply damping to every conv: none, freq, time or both")
      ->check(CLI::IsMember({"none", "freq", "time", "both"}));
  cmd->add_option("--m-t", flags.m_t, "time damping strength in [0,1)");
  cmd->add_option("--m-f", flags.m_f, "frequency damping strength in [0,1)");
}

ArchGraph load_arch(const std::string& path) {
  return parse_arch(read_file(path));
}

// --- analyze ----------------------------------------------------------------

struct AnalyzeArgs {
  std::string arch_file;
  std::string json_path;
  std::string window;
  std::string manifest;
};

int cmd_analyze(const AnalyzeArgs& a) {
  ArchGraph g = load_arch(a.arch_file);
  RfReport report = max_rf(g);

  std::printf("%-24s %-12s %-14s %-12s %s\n", "node", "kind", "rf(f x t)",
              "stride(f x t)", "offset(f,t)");
  for (const auto& id : topo_order(g)) {
    const NodeRf& rf = report.at(id);
    char rf_s[32], st_s[32], of_s[40];
    std::snprintf(rf_s, sizeof(rf_s), "%lld x %lld", rf.freq.rf, rf.time.rf);
    std::snprintf(st_s, sizeof(st_s), "%lld x %lld", rf.freq.cum_stride,
                  rf.time.cum_stride);
    std::snprintf(of_s, sizeof(of_s), "%lld,%lld", rf.freq.window_offset,
                  rf.time.window_offset);
    std::printf("%-24s %-12s %-14s %-12s %s\n", id.c_str(),
                to_string(g.node(id).kind), rf_s, st_s, of_s);
  }
  std::printf("probe max RF: %lld x %lld\n", report.probe().freq.rf,
              report.probe().time.rf);
  std::printf("parameters: %lld\n", count_params(g));

  if (!a.window.empty()) {
    RfWindow w = rf_window(g, g.probe_node().id, parse_coord(a.window));
    std::printf("window unclipped: [%lld,%lld] x [%lld,%lld]\n",
                w.freq.unclipped.lo, w.freq.unclipped.hi, w.time.unclipped.lo,
                w.time.unclipped.hi);
    std::printf("window clipped:   [%lld,%lld] x [%lld,%lld]\n",
                w.freq.clipped.lo, w.freq.clipped.hi, w.time.clipped.lo,
                w.time.clipped.hi);
  }
  if (!a.json_path.empty()) {
    write_file(a.json_path, rf_report_to_json(report));
  }
  if (!a.manifest.empty()) {
    write_manifest(a.manifest, "analyze",
                   {{"arch", a.arch_file},
                    {"json", a.json_path},
                    {"window", a.window}},
                   std::nullopt, {a.arch_file});
  }
  return kExitOk;
}

// --- gen --------------------------------------------------------------------

struct GenArgs {
  std::string family;
  std::optional<int> rho;
  std::optional<int> rho_f;
  std::optional<int> rho_t;
  int growth_rate = 64;
  int groups = 1;
  int extra_pools = 0;
  int input_time = 256;
  DampFlags damp;
  std::string out;
  std::string manifest;
};

ArchGraph generate(const GenArgs& a) {
  FamilyConfig cfg;
  cfg.family = family_from_string(a.family);
  if (a.rho) {
    if (a.rho_f || a.rho_t) {
      throw Error("use either --rho or the --rho-f/--rho-t pair, not both");
    }
    cfg.rho = *a.rho;
  } else if (a.rho_f && a.rho_t) {
    cfg.rho_ft = RhoPair{*a.rho_f, *a.rho_t};
  } else {
    throw Error("one of --rho or the --rho-f/--rho-t pair is required");
  }
  if (cfg.family == Family::cp_resnet && a.growth_rate != 64) {
    throw Error("--growth-rate applies to cp_densenet only");
  }
  cfg.growth_rate = a.growth_rate;
  cfg.groups = a.groups;
  cfg.extra_pools = a.extra_pools;
  cfg.input_time = a.input_time;
  cfg.damping = a.damp.spec();
  return cfg.family == Family::cp_resnet ? cp_resnet(cfg) : cp_densenet(cfg);
}

int cmd_gen(const GenArgs& a) {
  ArchGraph g = generate(a);
  std::string text = serialize_arch(g);
  if (a.out.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_file(a.out, text);
  }
  std::string manifest = a.manifest;
  if (manifest.empty() && !a.out.empty()) manifest = a.out + ".manifest.json";
  if (!manifest.empty()) {
    json flags = {{"family", a.family},
                  {"growth_rate", a.growth_rate},
                  {"groups", a.groups},
                  {"extra_pools", a.extra_pools},
                  {"time", a.input_time},
                  {"damp", a.damp.mode},
                  {"m_t", a.damp.m_t},
                  {"m_f", a.damp.m_f},
                  {"out", a.out}};
    if (a.rho) flags["rho"] = *a.rho;
    if (a.rho_f) flags["rho_f"] = *a.rho_f;
    if (a.rho_t) flags["rho_t"] = *a.rho_t;
    write_manifest(manifest, "gen", flags, std::nullopt, {});
  }
  return kExitOk;
}

// --- table ------------------------------------------------------------------

struct TableArgs {
  std::string family;
  std::string csv;
  std::string manifest;
};

int cmd_table(const TableArgs& a) {
  std::vector<RhoTableRow> rows = rho_table(family_from_string(a.family));
  std::printf("%-5s %s\n", "rho", "max RF");
  for (const auto& r : rows) {
    std::printf("%-5d %lld x %lld\n", r.rho, r.rf_freq, r.rf_time);
  }
  if (!a.csv.empty()) {
    std::string out = "rho,rf_freq,rf_time\n";
    for (const auto& r : rows) {
      out += std::to_string(r.rho) + "," + std::to_string(r.rf_freq) + "," +
             std::to_string(r.rf_time) + "\n";
    }
    write_file(a.csv, out);
  }
  if (!a.manifest.empty()) {
    write_manifest(a.manifest, "table", {{"family", a.family}, {"csv", a.csv}},
                   std::nullopt, {});
  }
  return kExitOk;
}

// --- damp -------------------------------------------------------------------

struct DampArgs {
  int t_size = 3;
  int f_size = 3;
  double m_t = 0.9;
  double m_f = 0.9;
  std::string mode = "literal";
  std::string out;
};

int cmd_damp(const DampArgs& a) {
  DampingMatrix c = damping_matrix(a.t_size, a.f_size, a.m_t, a.m_f,
                                   damping_mode_from_string(a.mode));
  // CSV rows are frequency indices, columns time indices.
  std::vector<double> by_freq(static_cast<size_t>(a.f_size) * a.t_size);
  for (int f = 0; f < a.f_size; ++f) {
    for (int t = 0; t < a.t_size; ++t) {
      by_freq[static_cast<size_t>(f) * a.t_size + t] = c.factor(t, f);
    }
  }
  write_file(a.out + ".csv", matrix_to_csv(a.f_size, a.t_size, by_freq.data()));
  json sidecar = {{"T", a.t_size},
                  {"F", a.f_size},
                  {"m_t", a.m_t},
                  {"m_f", a.m_f},
                  {"mode", a.mode}};
  write_file(a.out + ".json", sidecar.dump(2) + "\n");
  write_manifest(a.out + ".manifest.json", "damp",
                 {{"t_size", a.t_size},
                  {"f_size", a.f_size},
                  {"m_t", a.m_t},
                  {"m_f", a.m_f},
                  {"mode", a.mode},
                  {"out", a.out}},
                 std::nullopt, {});
  return kExitOk;
}

// --- erf --------------------------------------------------------------------

struct ErfArgs {
  std::string arch_file;
  std::string out_dir;
  std::optional<uint64_t> seed;
  int n_inputs = 16;
  std::vector<std::string> input_files;
  std::string weights_file;
  std::string dump_weights;
  DampFlags damp;
  std::string probe = "center";
  std::string format = "pgm";
  int workers = 1;
  bool identity_relu = false;
};

int cmd_erf(const ErfArgs& a) {
  ArchGraph g = load_arch(a.arch_file);
  a.damp.apply(g);
  const uint64_t seed = resolve_seed(a.seed);

  WeightSet weights = a.weights_file.empty()
                          ? init_weights(g, seed)
                          : read_weights_file(a.weights_file, g);
  if (!a.dump_weights.empty()) write_weights_file(a.dump_weights, g, weights);

  std::vector<Tensor> inputs;
  if (!a.input_files.empty()) {
    for (const auto& f : a.input_files) {
      Tensor t = read_input_file(f);
      if (!(t.shape == g.input_shape)) {
        throw Error("input '" + f + "' does not match the graph input shape");
      }
      inputs.push_back(std::move(t));
    }
  } else {
    if (a.n_inputs < 1) throw Error("--n-inputs must be >= 1");
    inputs = make_noise_inputs(g.input_shape, a.n_inputs, seed);
  }

  std::optional<Dim2> probe;
  if (a.probe != "center") probe = parse_coord(a.probe);

  EvalOptions opts;
  opts.relu_as_identity = a.identity_relu;
  GradientMap map = gradient_map(g, weights, inputs, probe, opts, a.workers);
  RfWindow window = rf_window(g, g.probe_node().id, map.probe_coord);

  std::filesystem::create_directories(a.out_dir);
  const std::string base = a.out_dir + "/heatmap";
  if (a.format == "pgm" || a.format == "both") {
    export_heatmap(map, window, base, HeatmapFormat::pgm, seed);
  }
  if (a.format == "csv" || a.format == "both") {
    export_heatmap(map, window, base, HeatmapFormat::csv, seed);
  }

  const ErfStats stats = erf_stats(map);
  std::printf("E_f: %s\n", format_double(stats.e_f).c_str());
  std::printf("E_t: %s\n", format_double(stats.e_t).c_str());

  std::vector<std::string> digests = {a.arch_file};
  for (const auto& f : a.input_files) digests.push_back(f);
  if (!a.weights_file.empty()) digests.push_back(a.weights_file);
  write_manifest(a.out_dir + "/manifest.json", "erf",
                 {{"arch", a.arch_file},
                  {"out", a.out_dir},
                  {"n_inputs", a.n_inputs},
                  {"input_files", a.input_files},
                  {"weights", a.weights_file},
                  {"damp", a.damp.mode},
                  {"m_t", a.damp.m_t},
                  {"m_f", a.damp.m_f},
                  {"probe", a.probe},
                  {"format", a.format},
                  {"identity_relu", a.identity_relu}},
                 seed, digests);
  return kExitOk;
}

// --- gradcheck ----------------------------------------------------------------

struct GradcheckArgs {
  std::string arch_file;
  std::optional<uint64_t> seed;
  int n_probes = 10;
  double h = 1e-5;
  double tol = 1e-5;
  bool identity_relu = false;
  bool corrupt_backward = false;
  std::string manifest;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  ArchGraph g = load_arch(a.arch_file);
  const uint64_t seed = resolve_seed(a.seed);
  WeightSet weights = init_weights(g, seed);
  Tensor input = make_noise_inputs(g.input_shape, 1, seed).front();

  EvalOptions opts;
  opts.relu_as_identity = a.identity_relu;

  double max_err;
  if (!a.corrupt_backward) {
    max_err = grad_check(g, weights, input, a.n_probes, a.h, seed, opts);
  } else {
    // Sentinel path: skew the analytic gradient and let the central
    // differences expose the mismatch. Used to prove the check can fail.
    const std::string probe_id = g.probe_node().id;
    const TensorShape probe_shape = propagate_shapes(g).at(probe_id);
    const Dim2 coord{probe_shape.freq / 2, probe_shape.time / 2};
    Tensor analytic = backward_input(g, weights, input, coord, opts);
    for (double& v : analytic.data) v = v * 1.01 + 1e-3;

    auto loss = [&](const Tensor& x) {
      ActivationStore acts = forward(g, weights, x, opts);
      const Tensor& probe = acts.at(probe_id);
      double sum = 0.0;
      for (int c = 0; c < probe.shape.channels; ++c) {
        sum += probe.at(c, coord.freq, coord.time);
      }
      return sum;
    };
    SplitMix64 rng(substream_seed(seed, "grad_check"));
    Tensor x = input;
    max_err = 0.0;
    for (int i = 0; i < a.n_probes; ++i) {
      const int c = static_cast<int>(rng.next_u64() % x.shape.channels);
      const int f = static_cast<int>(rng.next_u64() % x.shape.freq);
      const int t = static_cast<int>(rng.next_u64() % x.shape.time);
      const double saved = x.at(c, f, t);
      x.at(c, f, t) = saved + a.h;
      const double lp = loss(x);
      x.at(c, f, t) = saved - a.h;
      const double lm = loss(x);
      x.at(c, f, t) = saved;
      const double numeric = (lp - lm) / (2.0 * a.h);
      const double av = analytic.at(c, f, t);
      const double denom = std::max({std::fabs(av), std::fabs(numeric), 1e-8});
      max_err = std::max(max_err, std::fabs(av - numeric) / denom);
    }
  }

  std::printf("max relative error: %s\n", format_double(max_err).c_str());
  if (!a.manifest.empty()) {
    write_manifest(a.manifest, "gradcheck",
                   {{"arch", a.arch_file},
                    {"n_probes", a.n_probes},
                    {"h", a.h},
                    {"tol", a.tol},
                    {"identity_relu", a.identity_relu}},
                   seed, {a.arch_file});
  }
  return max_err <= a.tol ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"receptive-field analysis and regularization toolkit for "
               "convolutional architecture graphs"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  AnalyzeArgs analyze_args;
  CLI::App* analyze = app.add_subcommand(
      "analyze", "per-node receptive fields and parameter counts");
  analyze->add_option("arch", analyze_args.arch_file, "architecture file")
      ->required();
  analyze->add_option("--json", analyze_args.json_path,
                      "write the RF report as JSON");
  analyze->add_option("--window", analyze_args.window,
                      "probe output coordinate 'freq,time' to project onto "
                      "the input");
  analyze->add_option("--manifest", analyze_args.manifest, "manifest path");

  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen", "generate a family member");
  gen->add_option("family", gen_args.family, "cp_resnet or cp_densenet")
      ->required();
  auto* rho_opt = gen->add_option("--rho", gen_args.rho, "schedule strength, 0..21");
  gen->add_option("--rho-f", gen_args.rho_f, "frequency-axis strength, 0..21")
      ->excludes(rho_opt);
  gen->add_option("--rho-t", gen_args.rho_t, "time-axis strength, 0..21")
      ->excludes(rho_opt);
  gen->add_option("--growth-rate", gen_args.growth_rate,
                  "dense-layer output channels (cp_densenet)");
  gen->add_option("--groups", gen_args.groups, "conv channel groups");
  gen->add_option("--extra-pools", gen_args.extra_pools,
                  "additional 2x2 stride-2 pools in the deep half");
  gen->add_option("--time", gen_args.input_time, "input time extent");
  add_damp_flags(gen, gen_args.damp);
  gen->add_option("--out", gen_args.out, "output file (stdout when omitted)");
  gen->add_option("--manifest", gen_args.manifest, "manifest path");

  TableArgs table_args;
  CLI::App* table =
      app.add_subcommand("table", "probe max RF for every rho in 0..21");
  table->add_option("family", table_args.family, "cp_resnet or cp_densenet")
      ->required();
  table->add_option("--csv", table_args.csv, "also write CSV");
  table->add_option("--manifest", table_args.manifest, "manifest path");

  DampArgs damp_args;
  CLI::App* damp = app.add_subcommand("damp", "emit a damping factor grid");
  damp->add_option("--t-size", damp_args.t_size, "kernel time extent")
      ->required();
  damp->add_option("--f-size", damp_args.f_size, "kernel frequency extent")
      ->required();
  damp->add_option("--m-t", damp_args.m_t, "time damping strength in [0,1)");
  damp->add_option("--m-f", damp_args.m_f, "frequency damping strength in [0,1)");
  damp->add_option("--mode", damp_args.mode, "literal or centered")
      ->check(CLI::IsMember({"literal", "centered"}));
  damp->add_option("--out", damp_args.out, "output base path")->required();

  ErfArgs erf_args;
  CLI::App* erf = app.add_subcommand(
      "erf", "measure the effective receptive field from input gradients");
  erf->add_option("arch", erf_args.arch_file, "architecture file")->required();
  erf->add_option("--out", erf_args.out_dir, "output directory")->required();
  erf->add_option("--seed", erf_args.seed,
                  "seed (falls back to RFSCOPE_SEED, then 1)");
  erf->add_option("--n-inputs", erf_args.n_inputs,
                  "number of generated noise inputs");
  erf->add_option("--input-file", erf_args.input_files,
                  "input tensor file(s); overrides --n-inputs");
  erf->add_option("--weights", erf_args.weights_file,
                  "load weights instead of seeding them");
  erf->add_option("--dump-weights", erf_args.dump_weights,
                  "write the weights used");
  add_damp_flags(erf, erf_args.damp);
  erf->add_option("--probe", erf_args.probe,
                  "'center' or an explicit 'freq,time' probe coordinate");
  erf->add_option("--format", erf_args.format, "pgm, csv or both")
      ->check(CLI::IsMember({"pgm", "csv", "both"}));
  erf->add_option("--workers", erf_args.workers, "worker threads over inputs");
  erf->add_flag("--identity-relu", erf_args.identity_relu,
                "replace relu with the identity");

  GradcheckArgs gc_args;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "compare the backward pass against central differences");
  gradcheck->add_option("arch", gc_args.arch_file, "architecture file")
      ->required();
  gradcheck->add_option("--seed", gc_args.seed,
                        "seed (falls back to RFSCOPE_SEED, then 1)");
  gradcheck->add_option("--n-probes", gc_args.n_probes, "pixels to test");
  gradcheck->add_option("--step", gc_args.h, "central-difference step");
  gradcheck->add_option("--tol", gc_args.tol, "max relative error to accept");
  gradcheck->add_flag("--identity-relu", gc_args.identity_relu,
                      "replace relu with the identity");
  gradcheck
      ->add_flag("--corrupt-backward", gc_args.corrupt_backward,
                 "skew the analytic gradient (self-test of the check)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(analyze)) return cmd_analyze(analyze_args);
    if (app.got_subcommand(gen)) return cmd_gen(gen_args);
    if (app.got_subcommand(table)) return cmd_table(table_args);
    if (app.got_subcommand(damp)) return cmd_damp(damp_args);
    if (app.got_subcommand(erf)) return cmd_erf(erf_args);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(gc_args);
  } catch (const DegenerateDataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace rfscope
