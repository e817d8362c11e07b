// SPDX-License-Identifier: Apache-2.0
//
// maskforge: dual-stream patch masking for point clouds.
//
// Subcommands:
//   mask        run the pipeline on one cloud and write the selection
//   trace       tabulate the curriculum schedule across iterations
//   rotcheck    rotation-consistency study over masked patch sets
//   synth-attn  synthesize a geometric attention map and save it as ATN1
//
// Exit codes: 0 success, 1 I/O, 2 bad arguments, 3 format/validation.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "maskforge/attention_io.hpp"
#include "maskforge/curriculum.hpp"
#include "maskforge/errors.hpp"
#include "maskforge/geometry.hpp"
#include "maskforge/grid_mask.hpp"
#include "maskforge/rng.hpp"
#include "maskforge/semantic_mask.hpp"

namespace {

using namespace maskforge;

// Seed-derivation stream tags owned by the harness (the library owns 1..4).
enum : std::uint64_t {
  kStreamRotation = 5,
  kStreamRotBase = 6,
  kStreamRotTest = 7,
  kStreamSynthNoise = 8,
  kStreamTrialMaster = 9,
};

struct PipelineFlags {
  std::string points_path;
  int patches = 64;
  int knn = 32;
  std::string grid = "4,4,4";
  double ratio = 0.75;
  double gamma = 2.0;
  int c_max = 40;
  int c_min = 10;
  double q_start = 0.5;
  double q_end = 0.9;
  int t = 0;
  int T = 100;
  std::optional<std::uint64_t> seed;
  std::string attention_path;
  double synth_bandwidth = 0.5;
  std::string rotation;  // "", "a", "z", "r"
  std::string out;
  std::string format = "json";
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags* f, bool needs_time) {
  cmd->add_option("--points", f->points_path, "input cloud (.pcf is binary, anything else XYZ text)")
      ->required();
  cmd->add_option("--patches", f->patches, "number of patches K");
  cmd->add_option("--knn", f->knn, "points per patch k");
  cmd->add_option("--grid", f->grid, "grid granularity Gx,Gy,Gz");
  cmd->add_option("--ratio", f->ratio, "target mask fraction");
  cmd->add_option("--gamma", f->gamma, "curriculum exponent");
  cmd->add_option("--cmax", f->c_max, "initial component count");
  cmd->add_option("--cmin", f->c_min, "final component count");
  cmd->add_option("--qstart", f->q_start, "threshold quantile at t=0");
  cmd->add_option("--qend", f->q_end, "threshold quantile at t=T");
  if (needs_time) cmd->add_option("--t", f->t, "current iteration");
  cmd->add_option("--T", f->T, "total iterations");
  cmd->add_option("--seed", f->seed, "master seed (default: MASKFORGE_SEED, then 0)");
  cmd->add_option("--attention", f->attention_path, "ATN1 attention file");
  cmd->add_option("--synth-bandwidth", f->synth_bandwidth,
                  "kernel bandwidth for synthesized attention (used when --attention is absent)");
  cmd->add_option("--rotation", f->rotation, "rotate input first: a(ligned), z(-axis), r(andom SO(3))")
      ->check(CLI::IsMember({"a", "z", "r"}));
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MASKFORGE_SEED")) {
    const std::string s(env);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ArgumentError("MASKFORGE_SEED is not a 64-bit unsigned integer: '" + s + "'");
    }
    return v;
  }
  return 0;
}

Granularity parse_grid(const std::string& s) {
  Granularity g{};
  std::size_t pos = 0;
  for (int d = 0; d < 3; ++d) {
    const std::size_t next = d < 2 ? s.find(',', pos) : s.size();
    if (next == std::string::npos) {
      throw ArgumentError("--grid expects Gx,Gy,Gz, got '" + s + "'");
    }
    const std::string part = s.substr(pos, next - pos);
    const auto res = std::from_chars(part.data(), part.data() + part.size(), g[d]);
    if (res.ec != std::errc() || res.ptr != part.data() + part.size()) {
      throw ArgumentError("--grid expects integers, got '" + s + "'");
    }
    pos = next + 1;
  }
  return g;
}

CloudFormat format_from_path(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot != std::string::npos && path.substr(dot) == ".pcf") {
    return CloudFormat::PcfBinary;
  }
  return CloudFormat::XyzAscii;
}

RotationMode rotation_mode(const std::string& s) {
  if (s == "a") return RotationMode::Aligned;
  if (s == "z") return RotationMode::ZAxis;
  return RotationMode::Full;
}

CurriculumConfig build_config(const PipelineFlags& f, std::uint64_t master) {
  CurriculumConfig cfg;
  cfg.T = f.T;
  cfg.gamma = f.gamma;
  cfg.ratio = f.ratio;
  cfg.c_max = f.c_max;
  cfg.c_min = f.c_min;
  cfg.q_start = f.q_start;
  cfg.q_end = f.q_end;
  cfg.granularity = parse_grid(f.grid);
  cfg.seeds = SeedBundle::from_master(master);
  validate_config(cfg);
  return cfg;
}

struct PreparedRun {
  PointCloud cloud;
  PatchSet patches;
  AttentionMap attention;
};

// Shared front half of every subcommand: load, optionally rotate, patchify,
// and obtain an attention map (file or synthesized).
PreparedRun prepare(const PipelineFlags& f, std::uint64_t master,
                    const std::optional<Rotation>& rot = {}) {
  PreparedRun run;
  run.cloud = load_cloud(f.points_path, format_from_path(f.points_path));
  if (rot) {
    run.cloud = apply_rotation(run.cloud, *rot);
  } else if (!f.rotation.empty()) {
    run.cloud = apply_rotation(
        run.cloud, sample_rotation(rotation_mode(f.rotation),
                                   derive_seed(master, kStreamRotation)));
  }
  const std::vector<int> centers = farthest_point_sample(run.cloud, f.patches);
  run.patches = knn_patchify(run.cloud, centers, f.knn);
  if (!f.attention_path.empty()) {
    run.attention = load_attention(f.attention_path);
  } else {
    run.attention = synth_attention(run.patches, f.synth_bandwidth,
                                    derive_seed(master, kStreamSynthNoise));
    run.attention.iteration = f.t;
  }
  return run;
}

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + out_path + "' for writing");
  out << content;
  if (!out) throw IoError("write failed for '" + out_path + "'");
}

int run_mask(const PipelineFlags& f) {
  const std::uint64_t master = resolve_seed(f.seed);
  const CurriculumConfig cfg = build_config(f, master);
  const PreparedRun run = prepare(f, master);
  const MaskSelection sel = run_dual_stream(run.patches, run.attention, f.t, cfg);
  const SelectionFormat fmt =
      f.format == "csv" ? SelectionFormat::Csv : SelectionFormat::Json;
  emit(f.out, fmt == SelectionFormat::Json ? selection_to_json(sel)
                                           : selection_to_csv(sel));
  return 0;
}

int run_trace(const PipelineFlags& f, int steps) {
  if (steps < 2) throw ArgumentError("--steps must be >= 2");
  const std::uint64_t master = resolve_seed(f.seed);
  const CurriculumConfig cfg = build_config(f, master);
  const PreparedRun run = prepare(f, master);

  std::string csv = "t,alpha,C,tau,masked_count\n";
  for (int j = 0; j < steps; ++j) {
    const double pos = static_cast<double>(j) * cfg.T / (steps - 1);
    const int t = static_cast<int>(std::floor(pos + 0.5));
    const PipelineResult res = run_dual_stream_detailed(run.patches, run.attention, t, cfg);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%d,%.17g,%d\n", t, res.alpha,
                  res.components, res.tau, res.selection.masked_count);
    csv += buf;
  }
  emit(f.out, csv);
  return 0;
}

std::set<int> masked_center_ids(const PatchSet& patches, const MaskSelection& sel) {
  std::set<int> ids;
  for (std::size_t i = 0; i < sel.masked.size(); ++i) {
    if (sel.masked[i]) ids.insert(patches.centers[i]);
  }
  return ids;
}

double jaccard(const std::set<int>& a, const std::set<int>& b) {
  std::vector<int> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(inter));
  const std::size_t uni = a.size() + b.size() - inter.size();
  return uni == 0 ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni);
}

// Fraction of non-empty components whose patches fall entirely on one side
// of the cut.
double unsplit_fraction(const Clustering& clustering, const MaskSelection& sel) {
  const int c = clustering.components;
  std::vector<int> total(c, 0), masked(c, 0);
  for (int i = 0; i < clustering.point_count(); ++i) {
    const int label = clustering.assignment[i];
    ++total[label];
    if (sel.masked[i]) ++masked[label];
  }
  int nonempty = 0, unsplit = 0;
  for (int j = 0; j < c; ++j) {
    if (total[j] == 0) continue;
    ++nonempty;
    if (masked[j] == 0 || masked[j] == total[j]) ++unsplit;
  }
  return nonempty == 0 ? 1.0 : static_cast<double>(unsplit) / nonempty;
}

int run_rotcheck(const PipelineFlags& f, const std::string& scenario, int trials) {
  if (trials < 1) throw ArgumentError("--trials must be >= 1");
  const std::uint64_t master = resolve_seed(f.seed);
  const RotationMode base_mode = rotation_mode(scenario.substr(0, 1));
  const RotationMode test_mode = rotation_mode(scenario.substr(1, 1));

  std::vector<double> overlaps, coherences;
  bool ratio_exact = true;
  int z_rank_stable = 0;

  for (int trial = 0; trial < trials; ++trial) {
    // both runs in a trial share one pipeline seed bundle
    PipelineFlags tf = f;
    tf.seed = derive_seed(master, kStreamTrialMaster, trial);
    const std::uint64_t trial_master = *tf.seed;
    const CurriculumConfig cfg = build_config(tf, trial_master);

    const Rotation base_rot =
        sample_rotation(base_mode, derive_seed(master, kStreamRotBase, trial));
    const Rotation test_rot =
        sample_rotation(test_mode, derive_seed(master, kStreamRotTest, trial));
    const PreparedRun base = prepare(tf, trial_master, base_rot);
    const PreparedRun test = prepare(tf, trial_master, test_rot);

    const PipelineResult base_res =
        run_dual_stream_detailed(base.patches, base.attention, f.t, cfg);
    const PipelineResult test_res =
        run_dual_stream_detailed(test.patches, test.attention, f.t, cfg);

    overlaps.push_back(jaccard(masked_center_ids(base.patches, base_res.selection),
                               masked_center_ids(test.patches, test_res.selection)));
    const int expect = static_cast<int>(std::floor(f.ratio * f.patches + 0.5));
    ratio_exact = ratio_exact && base_res.selection.masked_count == expect &&
                  test_res.selection.masked_count == expect;

    // coherence contract only binds at alpha = 1, so measure it at t = T
    const PipelineResult base_end =
        run_dual_stream_detailed(base.patches, base.attention, cfg.T, cfg);
    const PipelineResult test_end =
        run_dual_stream_detailed(test.patches, test.attention, cfg.T, cfg);
    coherences.push_back(unsplit_fraction(*base_end.clustering, base_end.selection));
    coherences.push_back(unsplit_fraction(*test_end.clustering, test_end.selection));

    if (scenario == "zz") {
      // z-rotations leave z-coordinates untouched, so matched center lists
      // must produce identical z-rank columns
      bool stable = base.patches.centers == test.patches.centers;
      if (stable) {
        const AxisRanks br = rank_coordinates(base.patches.center_coords);
        const AxisRanks tr = rank_coordinates(test.patches.center_coords);
        for (int i = 0; stable && i < br.patch_count(); ++i) {
          stable = br.pos[i][2] == tr.pos[i][2];
        }
      }
      if (stable) ++z_rank_stable;
    }
  }

  double overlap_mean = 0.0;
  for (double v : overlaps) overlap_mean += v;
  overlap_mean /= overlaps.size();
  double overlap_var = 0.0;
  for (double v : overlaps) overlap_var += (v - overlap_mean) * (v - overlap_mean);
  const double overlap_std = std::sqrt(overlap_var / overlaps.size());
  double coherence_mean = 0.0;
  for (double v : coherences) coherence_mean += v;
  coherence_mean /= coherences.size();

  static const std::map<std::string, std::string> kNames = {
      {"aa", "A/A"}, {"ar", "A/R"}, {"zz", "Z/Z"}, {"zr", "Z/R"}, {"rr", "R/R"}};
  nlohmann::ordered_json report;
  report["scenario"] = kNames.at(scenario);
  report["trials"] = trials;
  report["overlap_mean"] = overlap_mean;
  report["overlap_std"] = overlap_std;
  report["coherence_mean"] = coherence_mean;
  report["ratio_exact"] = ratio_exact;
  if (scenario == "zz") report["z_rank_stable_trials"] = z_rank_stable;
  emit(f.out, report.dump(2) + "\n");
  return 0;
}

int run_synth_attn(const PipelineFlags& f, double bandwidth) {
  const std::uint64_t master = resolve_seed(f.seed);
  PointCloud cloud = load_cloud(f.points_path, format_from_path(f.points_path));
  const std::vector<int> centers = farthest_point_sample(cloud, f.patches);
  const PatchSet patches = knn_patchify(cloud, centers, f.knn);
  AttentionMap attn = synth_attention(patches, bandwidth,
                                      derive_seed(master, kStreamSynthNoise));
  attn.iteration = f.t;
  if (f.out.empty()) throw ArgumentError("synth-attn requires --out");
  save_attention(attn, f.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-stream point cloud masking engine"};
  app.require_subcommand(1);

  PipelineFlags mask_flags;
  CLI::App* mask = app.add_subcommand("mask", "run the masking pipeline on one cloud");
  add_pipeline_flags(mask, &mask_flags, true);
  mask->add_option("--out", mask_flags.out, "output path (default: stdout)");
  mask->add_option("--format", mask_flags.format, "selection format")
      ->check(CLI::IsMember({"json", "csv"}));

  PipelineFlags trace_flags;
  int trace_steps = 11;
  CLI::App* trace = app.add_subcommand("trace", "tabulate the curriculum schedule");
  add_pipeline_flags(trace, &trace_flags, false);
  trace->add_option("--steps", trace_steps, "number of evenly spaced iterations");
  trace->add_option("--out", trace_flags.out, "output CSV path (default: stdout)");

  PipelineFlags rot_flags;
  std::string scenario;
  int trials = 10;
  CLI::App* rotcheck = app.add_subcommand(
      "rotcheck", "mask-consistency study across base/rotated runs");
  add_pipeline_flags(rotcheck, &rot_flags, true);
  rotcheck
      ->add_option("--scenario", scenario,
                   "base/rotated rotation regimes (a=aligned, z=z-axis, r=random SO(3)); "
                   "this names the two masking runs compared, not a train/test protocol")
      ->required()
      ->check(CLI::IsMember({"aa", "ar", "zz", "zr", "rr"}));
  rotcheck->add_option("--trials", trials, "number of independent trials");
  rotcheck->add_option("--out", rot_flags.out, "report path (default: stdout)");

  PipelineFlags synth_flags;
  double bandwidth = 0.5;
  CLI::App* synth = app.add_subcommand("synth-attn", "synthesize and save an ATN1 attention map");
  synth->add_option("--points", synth_flags.points_path, "input cloud")->required();
  synth->add_option("--patches", synth_flags.patches, "number of patches K");
  synth->add_option("--knn", synth_flags.knn, "points per patch k");
  synth->add_option("--bandwidth", bandwidth, "kernel bandwidth");
  synth->add_option("--t", synth_flags.t, "iteration tag stored in the header");
  synth->add_option("--seed", synth_flags.seed, "master seed");
  synth->add_option("--out", synth_flags.out, "output ATN1 path")->required();

  try {
    app.parse(argc, argv);
    if (mask->parsed()) return run_mask(mask_flags);
    if (trace->parsed()) return run_trace(trace_flags, trace_steps);
    if (rotcheck->parsed()) return run_rotcheck(rot_flags, scenario, trials);
    if (synth->parsed()) return run_synth_attn(synth_flags, bandwidth);
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << std::flush;
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
