// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// gauss_align: colored point-cloud registration pipeline.
//   register  source.ply target.ply -> pose + stage traces + timing (JSON)
//   eval      manifest.json         -> metrics report (JSON or text table)
//   colorize  scan.ply image.ppm calib.json -> colored PLY
//   synth     -> seeded synthetic scan pair with ground truth
//
// Exit codes: 0 success, 1 numerical failure, 2 input error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "gsalign/colorize.hpp"
#include "gsalign/metrics.hpp"
#include "gsalign/pipeline.hpp"
#include "gsalign/ply.hpp"
#include "gsalign/synthetic.hpp"

namespace {

using nlohmann::json;
using namespace gsalign;

constexpr int kExitOk = 0;
constexpr int kExitNumerical = 1;
constexpr int kExitInput = 2;

void write_output(const std::string& out_path, const std::string& payload) {
  if (out_path.empty() || out_path == "-") {
    std::cout << payload << std::endl;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
  out << payload << std::endl;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  json j;
  in >> j;
  return j;
}

RigidTransform pose_from_flat(const json& flat) {
  if (flat.size() != 16) {
    throw std::invalid_argument("pose must hold 16 row-major numbers");
  }
  Mat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = flat.at(4 * r + c).get<double>();
  return RigidTransform::from_matrix(m);
}

json pose_to_flat(const RigidTransform& t) {
  json flat = json::array();
  const Mat4 m = t.matrix();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
  return flat;
}

struct GlobalOptions {
  std::string config_path;
  std::string out_path;
  std::string format = "json";
  std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const GlobalOptions& opts) {
  RunConfig cfg = opts.config_path.empty()
                      ? RunConfig{}
                      : RunConfig::from_json(load_json(opts.config_path));
  if (opts.seed) cfg.seed = *opts.seed;
  cfg.validate();
  return cfg;
}

int cmd_register(const GlobalOptions& opts, const std::string& source_path,
                 const std::string& target_path, bool dump_matches) {
  const RunConfig cfg = resolve_config(opts);
  const ColoredPointCloud source = read_ply(source_path);
  const ColoredPointCloud target = read_ply(target_path);
  if (source.empty() || target.empty()) {
    throw std::invalid_argument("registration needs non-empty clouds");
  }
  const RegistrationReport report = register_clouds(source, target, cfg);
  write_output(opts.out_path, report.to_json(dump_matches).dump(2));
  return kExitOk;
}

// Per-pair inputs resolved from the evaluation manifest.
struct EvalPair {
  std::string name;
  RigidTransform t_est;
  RigidTransform t_gt;
  bool has_gt = false;
  json result;  // full register output (for superpoint matches)
  std::optional<ColoredPointCloud> source, target;
  std::vector<Correspondence> gt_corrs;
};

int cmd_eval(const GlobalOptions& opts, const std::string& manifest_path) {
  const json manifest = load_json(manifest_path);
  const auto base = std::filesystem::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path.string() : (base / path).string();
  };

  MetricThresholds th;
  if (manifest.contains("thresholds")) {
    const json& t = manifest.at("thresholds");
    if (t.contains("delta_corr")) th.delta_corr = t.at("delta_corr");
    if (t.contains("eta")) th.eta = t.at("eta");
    if (t.contains("gamma_rmse")) th.gamma_rmse = t.at("gamma_rmse");
    if (t.contains("zeta")) th.zeta = t.at("zeta");
    if (t.contains("rre_max_deg")) th.rre_max_deg = t.at("rre_max_deg");
    if (t.contains("rte_max_m")) th.rte_max_m = t.at("rte_max_m");
  }
  th.validate();

  MetricsReport report;
  report.thresholds = th;
  std::vector<double> irs, rmses;
  std::vector<std::pair<double, double>> errors;

  for (const json& entry : manifest.at("pairs")) {
    EvalPair pair;
    pair.name = entry.value("name", "pair" + std::to_string(report.pairs.size()));
    if (!entry.contains("gt")) {
      std::cerr << "warning: skipping '" << pair.name
                << "': missing ground truth\n";
      continue;
    }
    const json gt = load_json(resolve(entry.at("gt")));
    pair.t_gt = pose_from_flat(gt.at("pose"));
    pair.result = load_json(resolve(entry.at("result")));
    pair.t_est = pose_from_flat(pair.result.at("pose"));

    PairMetrics pm;
    pm.name = pair.name;
    const auto [rre, rte] = pose_errors(pair.t_est, pair.t_gt);
    pm.rre_deg = rre;
    pm.rte_m = rte;
    errors.emplace_back(rre, rte);

    if (entry.contains("source") && entry.contains("target")) {
      pair.source = read_ply(resolve(entry.at("source")));
      pair.target = read_ply(resolve(entry.at("target")));

      if (gt.contains("correspondences")) {
        std::vector<Correspondence> corrs;
        for (const auto& c : gt.at("correspondences")) {
          corrs.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
        }
        if (!corrs.empty()) {
          const double rmse =
              correspondence_rmse(corrs, pair.source->positions,
                                  pair.target->positions, pair.t_est);
          pm.rmse = rmse;
          rmses.push_back(rmse);
        }
      }

      if (pair.result.contains("matches")) {
        const json& matches = pair.result.at("matches");
        auto parse_points = [](const json& arr) {
          std::vector<Vec3> pts;
          for (const auto& p : arr) pts.emplace_back(p.at(0), p.at(1), p.at(2));
          return pts;
        };
        const auto sp_src = parse_points(matches.at("source_superpoints"));
        const auto sp_tgt = parse_points(matches.at("target_superpoints"));
        std::vector<Correspondence> sp_pairs;
        for (const auto& m : matches.at("pairs")) {
          sp_pairs.push_back({m.at(0).get<int>(), m.at(1).get<int>()});
        }
        if (!sp_pairs.empty()) {
          const double ir =
              inlier_ratio(sp_pairs, sp_src, sp_tgt, pair.t_gt, th.delta_corr);
          pm.ir = ir;
          irs.push_back(ir);

          std::vector<std::vector<int>> patches_src, patches_tgt;
          for (const auto& patch : matches.at("source_patches")) {
            patches_src.push_back(patch.get<std::vector<int>>());
          }
          for (const auto& patch : matches.at("target_patches")) {
            patches_tgt.push_back(patch.get<std::vector<int>>());
          }
          pm.pir = patch_inlier_ratio(sp_pairs, patches_src, patches_tgt,
                                      pair.source->positions,
                                      pair.target->positions, pair.t_gt,
                                      th.zeta);
        }
      }
    }
    report.pairs.push_back(std::move(pm));
  }

  if (report.pairs.empty()) throw std::invalid_argument("no evaluable pairs");
  if (!irs.empty()) report.fmr = feature_matching_recall(irs, th.eta);
  if (!rmses.empty()) {
    report.rr_indoor = registration_recall_indoor(rmses, th.gamma_rmse);
  }
  report.rr_outdoor = registration_recall_outdoor(errors, th);

  write_output(opts.out_path, opts.format == "text"
                                  ? report.to_table()
                                  : report.to_json().dump(2));
  return kExitOk;
}

int cmd_colorize(const GlobalOptions& opts, const std::string& scan_path,
                 const std::string& image_path, const std::string& calib_path) {
  const ColoredPointCloud scan = read_ply(scan_path);
  const PpmImage image = read_ppm(image_path);
  const CameraCalibration calib =
      CameraCalibration::from_json(load_json(calib_path));
  const ColoredPointCloud colored =
      colorize_scan(scan.positions, image, calib);
  const std::string out =
      opts.out_path.empty() ? "colored.ply" : opts.out_path;
  write_ply(colored, out, PlyFormat::BinaryLittleEndian);
  return kExitOk;
}

int cmd_synth(const GlobalOptions& opts, const SyntheticPairSpec& spec_in,
              const std::string& out_dir) {
  SyntheticPairSpec spec = spec_in;
  if (opts.seed) spec.seed = *opts.seed;
  const SyntheticPair pair = generate_pair(spec);
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);
  write_ply(pair.source, (dir / "source.ply").string(),
            PlyFormat::BinaryLittleEndian);
  write_ply(pair.target, (dir / "target.ply").string(),
            PlyFormat::BinaryLittleEndian);

  json gt;
  gt["pose"] = pose_to_flat(pair.t_gt);
  gt["measured_overlap"] = pair.measured_overlap;
  json corrs = json::array();
  for (const auto& c : pair.correspondences) {
    corrs.push_back({c.source, c.target});
  }
  gt["correspondences"] = std::move(corrs);
  gt["spec"] = {{"point_count", spec.point_count},
                {"overlap", spec.overlap},
                {"rotation_deg", spec.rotation_deg},
                {"translation_m", spec.translation_m},
                {"position_noise", spec.position_noise},
                {"color_noise", spec.color_noise},
                {"seed", spec.seed}};
  std::ofstream((dir / "gt.json").string()) << gt.dump(2) << "\n";

  json manifest;
  manifest["pairs"] = json::array({{{"name", "pair0"},
                                    {"source", "source.ply"},
                                    {"target", "target.ply"},
                                    {"gt", "gt.json"},
                                    {"result", "result.json"}}});
  std::ofstream((dir / "manifest.json").string()) << manifest.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Colored point-cloud registration with Gaussian superpoints"};
  app.require_subcommand(1);

  GlobalOptions opts;
  app.add_option("--config", opts.config_path, "Run configuration JSON");
  app.add_option("--out", opts.out_path, "Output path (default stdout)");
  app.add_option("--format", opts.format, "Output format: json or text")
      ->check(CLI::IsMember({"json", "text"}));
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Override RNG seed");

  auto* reg = app.add_subcommand("register", "Register source onto target");
  std::string source_path, target_path;
  bool no_matches = false;
  reg->add_option("source", source_path, "Source PLY")->required();
  reg->add_option("target", target_path, "Target PLY")->required();
  reg->add_flag("--no-matches", no_matches,
                "Omit superpoint matches from the output");

  auto* eval = app.add_subcommand("eval", "Evaluate registration results");
  std::string manifest_path;
  eval->add_option("manifest", manifest_path, "Pairs manifest JSON")->required();

  auto* colorize = app.add_subcommand("colorize", "Color a scan from an image");
  std::string scan_path, image_path, calib_path;
  colorize->add_option("scan", scan_path, "Scan PLY (positions used)")
      ->required();
  colorize->add_option("image", image_path, "P6 PPM image")->required();
  colorize->add_option("calib", calib_path, "Calibration JSON")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scan pair");
  SyntheticPairSpec spec;
  std::string out_dir = "synth_out";
  synth->add_option("--points", spec.point_count, "Points per cloud");
  synth->add_option("--overlap", spec.overlap, "Overlap target in (0, 1]");
  synth->add_option("--rotation-deg", spec.rotation_deg, "Rotation magnitude");
  synth->add_option("--translation-m", spec.translation_m,
                    "Translation magnitude");
  synth->add_option("--pos-noise", spec.position_noise,
                    "Uniform position noise amplitude (m)");
  synth->add_option("--color-noise", spec.color_noise, "Color noise amplitude");
  synth->add_option("--dir", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (seed_opt->count() > 0) opts.seed = seed_value;

  try {
    if (reg->parsed()) return cmd_register(opts, source_path, target_path,
                                           !no_matches);
    if (eval->parsed()) return cmd_eval(opts, manifest_path);
    if (colorize->parsed()) {
      return cmd_colorize(opts, scan_path, image_path, calib_path);
    }
    if (synth->parsed()) return cmd_synth(opts, spec, out_dir);
  } catch (const ParseError& e) {
    std::cout << json{{"error", e.what()}, {"exit_code", kExitInput}}.dump()
              << std::endl;
    return kExitInput;
  } catch (const json::exception& e) {
    std::cout << json{{"error", e.what()}, {"exit_code", kExitInput}}.dump()
              << std::endl;
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cout << json{{"error", e.what()}, {"exit_code", kExitInput}}.dump()
              << std::endl;
    return kExitInput;
  } catch (const std::exception& e) {
    std::cout << json{{"error", e.what()}, {"exit_code", kExitNumerical}}.dump()
              << std::endl;
    return kExitNumerical;
  }
  return kExitOk;
}
