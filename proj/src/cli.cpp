#include "normest/cli.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "normest/data.hpp"
#include "normest/errors.hpp"
#include "normest/estimators.hpp"
#include "normest/eval.hpp"
#include "normest/pipeline.hpp"

namespace normest {

namespace {

namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

double elapsed_ms(clock_type::time_point t0) {
  return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
}

std::unique_ptr<Estimator> make_estimator(const std::string& kind, int jet_order, bool jet_plain,
                                          const std::string& params_path) {
  if (kind == "pca") return std::make_unique<PcaEstimator>();
  if (kind == "jet") {
    return std::make_unique<JetEstimator>(
        jet_order, jet_plain ? JetWeighting::plain : JetWeighting::gaussian_center);
  }
  if (kind == "neural") {
    if (params_path.empty()) throw invalid_spec("neural estimator needs --params FILE");
    return std::make_unique<NeuralEstimator>(NetworkParams::load(params_path));
  }
  throw invalid_spec("unknown estimator '" + kind + "' (expected pca, jet or neural)");
}

// Benchmark category of a shape, parsed from conventional name markers.
// Understands both the PCPNet convention (noise_white_<s>, ddist_minmax[_
// layers]) and the names our own generator produces.
std::string category_of(const std::string& name) {
  if (auto p = name.find("_noise_white_"); p != std::string::npos)
    return "noise_" + name.substr(p + 13);
  if (name.find("_ddist_minmax_layers") != std::string::npos) return "density_stripes";
  if (name.find("_ddist_minmax") != std::string::npos) return "density_gradient";
  if (name.find("_stripes") != std::string::npos) return "density_stripes";
  if (name.find("_gradient") != std::string::npos) return "density_gradient";
  if (auto p = name.find("_noise_"); p != std::string::npos) return "noise_" + name.substr(p + 7);
  return "clean";
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> clean_taus(std::vector<double> taus) {
  if (taus.empty()) return default_taus();
  for (double t : taus)
    if (!(t > 0.0)) throw invalid_spec("--tau values must be positive");
  return taus;
}

MetricRow make_row(const std::string& name, std::span<const Vec3> pred, std::span<const Vec3> gt,
                   const std::vector<double>& taus, double runtime_ms) {
  MetricRow row;
  row.name = name;
  row.rmse_deg = rmse(pred, gt);
  for (double tau : taus) row.pgp[tau] = pgp(pred, gt, tau);
  row.runtime_ms = runtime_ms;
  return row;
}

void fill_categories(MetricReport& report) {
  std::map<std::string, std::vector<const MetricRow*>> buckets;
  for (const auto& row : report.rows) buckets[category_of(row.name)].push_back(&row);
  for (const auto& [label, members] : buckets) {
    MetricReport sub;
    for (const MetricRow* r : members) sub.rows.push_back(*r);
    MetricRow mean = sub.aggregate();
    mean.name = label;
    report.categories[label] = std::move(mean);
  }
}

void print_report(const MetricReport& report) {
  for (const auto& row : report.rows) {
    std::cout << row.name << ": rmse " << row.rmse_deg << " deg";
    for (const auto& [tau, pct] : row.pgp) std::cout << ", pgp" << tau << " " << pct << "%";
    std::cout << "\n";
  }
  if (!report.rows.empty()) {
    MetricRow mean = report.aggregate();
    std::cout << "average: rmse " << mean.rmse_deg << " deg";
    for (const auto& [tau, pct] : mean.pgp) std::cout << ", pgp" << tau << " " << pct << "%";
    std::cout << "\n";
  }
  for (const auto& [label, row] : report.categories) {
    std::cout << "  [" << label << "] rmse " << row.rmse_deg << " deg";
    for (const auto& [tau, pct] : row.pgp) std::cout << ", pgp" << tau << " " << pct << "%";
    std::cout << "\n";
  }
}

// Loads <dir>/<name>.xyz (+ .normals when with_gt) for every listed shape.
std::vector<PointCloud> load_shapes(const std::string& list_path, bool with_gt) {
  std::vector<std::string> names = read_shape_list(list_path);
  if (names.empty()) throw empty_input("shape list is empty: " + list_path);
  fs::path dir = fs::path(list_path).parent_path();
  std::vector<PointCloud> shapes;
  shapes.reserve(names.size());
  for (const auto& name : names) {
    PointCloud cloud = read_xyz((dir / (name + ".xyz")).string());
    cloud.name = name;
    if (with_gt) {
      cloud.gt_normals = read_normals((dir / (name + ".normals")).string());
      if (cloud.gt_normals.size() != cloud.positions.size())
        throw length_mismatch("shape '" + name + "': " + std::to_string(cloud.positions.size()) +
                              " points vs " + std::to_string(cloud.gt_normals.size()) +
                              " ground-truth normals");
    }
    shapes.push_back(std::move(cloud));
  }
  return shapes;
}

// --- subcommand option bags ---

struct EstimateOpts {
  std::string input;
  std::string output;
  std::string manifest;
  std::string estimator = "pca";
  int jet_order = 2;
  bool jet_plain = false;
  std::string params_path;
  InferenceConfig cfg;
  bool no_geo = false, no_half = false, no_gauss = false;
  double gauss_sigma = 0.0;
  bool sigma_given = false;
};

InferenceConfig resolve_cfg(const EstimateOpts& o) {
  InferenceConfig cfg = o.cfg;
  cfg.use_geodesic = !o.no_geo;
  cfg.use_half_patch = !o.no_half;
  cfg.use_gaussian_agg = !o.no_gauss;
  if (o.sigma_given) {
    cfg.sigma_rule = SigmaRule::fixed;
    cfg.fixed_sigma = o.gauss_sigma;
  }
  return cfg;
}

nlohmann::json config_json(const InferenceConfig& cfg) {
  nlohmann::json j;
  j["patch_size"] = cfg.patch_size;
  j["n_frames"] = cfg.n_frames;
  j["graph_k"] = cfg.graph_k;
  j["use_geodesic"] = cfg.use_geodesic;
  j["use_half_patch"] = cfg.use_half_patch;
  j["use_gaussian_agg"] = cfg.use_gaussian_agg;
  j["sigma_rule"] = cfg.sigma_rule == SigmaRule::fixed ? "fixed" : "half_radius_over_2";
  j["fixed_sigma"] = cfg.fixed_sigma;
  j["per_point_mode"] = cfg.per_point_mode;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  return j;
}

int cmd_estimate(const EstimateOpts& o) {
  PointCloud cloud = read_xyz(o.input);
  std::unique_ptr<Estimator> est = make_estimator(o.estimator, o.jet_order, o.jet_plain, o.params_path);
  InferenceConfig cfg = resolve_cfg(o);

  InferStats stats;
  auto t0 = clock_type::now();
  std::vector<Vec3> normals = infer(cloud, *est, cfg, &stats);
  double ms = elapsed_ms(t0);

  write_normals(normals, o.output);
  std::cout << "wrote " << normals.size() << " normals to " << o.output << " (" << stats.patches
            << " patches, " << ms << " ms)\n";

  if (!o.manifest.empty()) {
    nlohmann::json j;
    j["command"] = "estimate";
    j["input"] = o.input;
    j["output"] = o.output;
    j["estimator"] = o.estimator;
    if (o.estimator == "jet") {
      j["jet_order"] = o.jet_order;
      j["jet_weighting"] = o.jet_plain ? "plain" : "gaussian_center";
      j["jet_fallbacks"] = static_cast<const JetEstimator*>(est.get())->fallback_count();
    }
    if (o.estimator == "neural") j["params"] = o.params_path;
    j["config"] = config_json(cfg);
    j["n_points"] = cloud.positions.size();
    j["stats"] = {{"patches", stats.patches},
                  {"knn_fallbacks", stats.knn_fallbacks},
                  {"degenerate_aggregations", stats.degenerate_aggregations}};
    j["runtime_ms"] = ms;
    write_file_atomic(o.manifest, j.dump(2) + "\n");
  }
  return 0;
}

struct TrainOpts {
  std::string shapes_list;
  std::string output;
  std::string loss_csv;
  std::string loss = "gau";
  int fused_dim = 128;
  bool geodesic = false;
  double gauss_sigma = 0.0;
  bool sigma_given = false;
  TrainConfig cfg;
};

int cmd_train(const TrainOpts& o) {
  TrainConfig cfg = o.cfg;
  if (o.loss == "val")
    cfg.loss = LossVariant::val;
  else if (o.loss == "gau")
    cfg.loss = LossVariant::gau;
  else if (o.loss == "half")
    cfg.loss = LossVariant::half;
  else
    throw invalid_spec("unknown loss '" + o.loss + "' (expected val, gau or half)");
  cfg.geodesic_patches = o.geodesic;
  if (o.sigma_given) {
    cfg.sigma_rule = SigmaRule::fixed;
    cfg.fixed_sigma = o.gauss_sigma;
  }

  std::vector<PointCloud> shapes = load_shapes(o.shapes_list, /*with_gt=*/true);
  NetworkParams initial = NetworkParams::init(o.fused_dim, cfg.seed);

  auto t0 = clock_type::now();
  TrainResult result = train(shapes, initial, cfg);
  double ms = elapsed_ms(t0);

  result.params.save(o.output);
  std::cout << "trained " << cfg.epochs << " epoch(s) on " << shapes.size() << " shape(s) in "
            << ms << " ms; params -> " << o.output << "\n";
  if (!result.epoch_loss.empty())
    std::cout << "final epoch loss " << result.epoch_loss.back() << "\n";

  if (!o.loss_csv.empty()) {
    std::string out = "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
      out += std::to_string(e) + "," + std::to_string(result.epoch_loss[e]) + "\n";
    write_file_atomic(o.loss_csv, out);
  }
  return 0;
}

struct EvalOpts {
  std::string shapes_list;
  std::string pred_dir;
  std::string gt_dir;
  std::string csv_path;
  std::string json_path;
  std::vector<double> taus;
};

int cmd_eval(const EvalOpts& o) {
  if (o.csv_path.empty() && o.json_path.empty())
    throw invalid_spec("eval needs --csv and/or --json output path");
  std::vector<double> taus = clean_taus(o.taus);

  std::vector<std::string> names = read_shape_list(o.shapes_list);
  if (names.empty()) throw empty_input("shape list is empty: " + o.shapes_list);
  fs::path gt_dir = o.gt_dir.empty() ? fs::path(o.shapes_list).parent_path() : fs::path(o.gt_dir);

  MetricReport report;
  report.config_echo["command"] = "eval";
  report.config_echo["shapes"] = o.shapes_list;
  report.config_echo["pred_dir"] = o.pred_dir;
  report.config_echo["gt_dir"] = gt_dir.string();

  for (const auto& name : names) {
    std::vector<Vec3> gt = read_normals((gt_dir / (name + ".normals")).string());
    std::vector<Vec3> pred = read_normals((fs::path(o.pred_dir) / (name + ".normals")).string());
    if (pred.size() != gt.size())
      throw length_mismatch("shape '" + name + "': " + std::to_string(pred.size()) +
                            " predictions vs " + std::to_string(gt.size()) + " ground truths");
    report.rows.push_back(make_row(name, pred, gt, taus, 0.0));
  }
  fill_categories(report);
  print_report(report);

  if (!o.csv_path.empty()) emit_report(report, ReportFormat::csv, o.csv_path);
  if (!o.json_path.empty()) emit_report(report, ReportFormat::json, o.json_path);
  return 0;
}

struct SynthOpts {
  std::string kind = "sphere";
  std::string density = "uniform";
  std::string out_dir = ".";
  std::string name_override;
  std::string list_path;
  SynthSpec spec;
};

int cmd_synth(const SynthOpts& o) {
  SynthSpec spec = o.spec;
  if (o.kind == "plane")
    spec.shape = SurfaceShape::plane;
  else if (o.kind == "sphere")
    spec.shape = SurfaceShape::sphere;
  else if (o.kind == "cylinder")
    spec.shape = SurfaceShape::cylinder;
  else if (o.kind == "torus")
    spec.shape = SurfaceShape::torus;
  else if (o.kind == "cube")
    spec.shape = SurfaceShape::cube;
  else
    throw invalid_spec("unknown shape '" + o.kind + "'");

  if (o.density == "uniform")
    spec.density = DensityMode::uniform;
  else if (o.density == "stripes")
    spec.density = DensityMode::stripes;
  else if (o.density == "gradient")
    spec.density = DensityMode::gradient;
  else
    throw invalid_spec("unknown density mode '" + o.density + "'");

  PointCloud cloud = synthesize(spec);
  std::string name = o.name_override.empty() ? cloud.name : o.name_override;

  fs::path dir(o.out_dir);
  if (!dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);  // best effort; write reports failures
  }
  write_xyz(cloud, (dir / (name + ".xyz")).string());
  write_normals(cloud.gt_normals, (dir / (name + ".normals")).string());
  std::cout << name << ": " << cloud.positions.size() << " points -> " << (dir / name).string()
            << ".{xyz,normals}\n";

  if (!o.list_path.empty()) {
    // Rewrite the list with the new name appended (deduplicated), so a
    // crashed run never leaves a half-written list behind.
    std::vector<std::string> names;
    if (fs::exists(o.list_path)) names = read_shape_list(o.list_path);
    bool present = false;
    for (const auto& n : names) present = present || n == name;
    if (!present) names.push_back(name);
    std::string out;
    for (const auto& n : names) out += n + "\n";
    write_file_atomic(o.list_path, out);
  }
  return 0;
}

struct BenchOpts {
  std::string shapes_list;
  std::string csv_path;
  std::string estimators = "pca";
  std::string frames = "8";
  std::string toggles = "all";
  int jet_order = 2;
  bool jet_plain = false;
  std::string params_path;
  std::vector<double> taus;
  InferenceConfig base;
};

void apply_toggle(InferenceConfig& cfg, const std::string& token) {
  if (token == "all") {
    cfg.use_geodesic = cfg.use_half_patch = cfg.use_gaussian_agg = true;
  } else if (token == "nogeo") {
    cfg.use_geodesic = false;
  } else if (token == "nohalf") {
    cfg.use_half_patch = false;
  } else if (token == "nogauss") {
    cfg.use_gaussian_agg = false;
  } else if (token == "plain") {
    cfg.use_geodesic = cfg.use_half_patch = cfg.use_gaussian_agg = false;
  } else {
    throw invalid_spec("unknown toggle '" + token + "' (all, nogeo, nohalf, nogauss, plain)");
  }
}

int cmd_bench(const BenchOpts& o) {
  std::vector<std::string> estimators = split_csv(o.estimators);
  std::vector<std::string> frame_tokens = split_csv(o.frames);
  std::vector<std::string> toggle_tokens = split_csv(o.toggles);
  if (estimators.empty() || frame_tokens.empty() || toggle_tokens.empty())
    throw invalid_spec("bench: empty configuration grid");
  std::vector<int> frames;
  for (const auto& t : frame_tokens) {
    try {
      frames.push_back(std::stoi(t));
    } catch (const std::exception&) {
      throw invalid_spec("bench: bad n_frames value '" + t + "'");
    }
  }
  std::vector<double> taus = clean_taus(o.taus);

  std::vector<PointCloud> shapes = load_shapes(o.shapes_list, /*with_gt=*/true);

  std::string csv = "shape,estimator,n_frames,toggles,rmse_deg";
  for (double t : taus) csv += "," + pgp_column_label(t);
  csv += ",runtime_ms\n";

  for (const auto& shape : shapes) {
    for (const auto& est_name : estimators) {
      for (int nf : frames) {
        for (const auto& toggle : toggle_tokens) {
          std::unique_ptr<Estimator> est =
              make_estimator(est_name, o.jet_order, o.jet_plain, o.params_path);
          InferenceConfig cfg = o.base;
          cfg.n_frames = nf;
          apply_toggle(cfg, toggle);

          auto t0 = clock_type::now();
          std::vector<Vec3> normals = infer(shape, *est, cfg);
          double ms = elapsed_ms(t0);

          MetricRow row = make_row(shape.name, normals, shape.gt_normals, taus, ms);
          std::ostringstream line;
          line << shape.name << "," << est_name << "," << nf << "," << toggle << ","
               << row.rmse_deg;
          for (const auto& [tau, pct] : row.pgp) line << "," << pct;
          line << "," << ms << "\n";
          csv += line.str();
          std::cout << shape.name << " " << est_name << " frames=" << nf << " " << toggle
                    << ": rmse " << row.rmse_deg << " deg (" << ms << " ms)\n";
        }
      }
    }
  }
  write_file_atomic(o.csv_path, csv);
  return 0;
}

void add_infer_flags(CLI::App* sub, InferenceConfig& cfg) {
  sub->add_option("--patch-size", cfg.patch_size, "points per patch");
  sub->add_option("--n-frames", cfg.n_frames, "frames averaged at inference (1, 2, 4 or 8)");
  sub->add_option("--graph-k", cfg.graph_k, "neighbors per point in the proximity graph");
  sub->add_option("--seed", cfg.seed, "RNG seed");
  sub->add_option("--threads", cfg.threads, "worker threads (0 = all cores)");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"normest: unoriented point-cloud normal estimation with frame averaging"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "normest 0.1.0");

  EstimateOpts est_opts;
  CLI::App* est = app.add_subcommand("estimate", "estimate normals for a point cloud");
  est->add_option("-i,--input", est_opts.input, "input .xyz point cloud")->required();
  est->add_option("-o,--output", est_opts.output, "output .normals file")->required();
  est->add_option("--estimator", est_opts.estimator, "pca, jet or neural");
  est->add_option("--jet-order", est_opts.jet_order, "polynomial order for the jet estimator");
  est->add_flag("--jet-plain", est_opts.jet_plain, "disable Gaussian weighting inside the jet fit");
  est->add_option("--params", est_opts.params_path, "network parameters (neural estimator)");
  add_infer_flags(est, est_opts.cfg);
  est->add_flag("--no-geopatch", est_opts.no_geo, "use Euclidean kNN patches everywhere");
  est->add_flag("--no-halfpatch", est_opts.no_half, "keep predictions for whole patches");
  est->add_flag("--no-gaussianpatch", est_opts.no_gauss, "uniform aggregation weights");
  CLI::Option* sig = est->add_option("--gauss-sigma", est_opts.gauss_sigma,
                                     "fixed aggregation sigma (default: half patch radius / 2)");
  est->add_flag("--per-point", est_opts.cfg.per_point_mode,
                "one patch per point, keep only the center prediction");
  est->add_option("--manifest", est_opts.manifest, "write a JSON run manifest here");

  TrainOpts train_opts;
  CLI::App* tr = app.add_subcommand("train", "train the toy network on listed shapes");
  tr->add_option("-s,--shapes", train_opts.shapes_list, "shape list file (names, one per line)")
      ->required();
  tr->add_option("-o,--output", train_opts.output, "output parameter file")->required();
  tr->add_option("--loss", train_opts.loss, "val, gau or half");
  tr->add_option("--epochs", train_opts.cfg.epochs, "training epochs");
  tr->add_option("--batch", train_opts.cfg.batch_size, "patches per optimizer step");
  tr->add_option("--lr-max", train_opts.cfg.lr_max, "cosine schedule peak learning rate");
  tr->add_option("--lr-min", train_opts.cfg.lr_min, "cosine schedule floor learning rate");
  tr->add_option("--patch-size", train_opts.cfg.patch_size, "points per training patch");
  tr->add_option("--steps-per-epoch", train_opts.cfg.steps_per_epoch,
                 "optimizer steps per epoch (0 = derive from data size)");
  tr->add_option("--fused-dim", train_opts.fused_dim, "global feature width");
  tr->add_option("--weight-decay", train_opts.cfg.weight_decay, "AdamW decoupled weight decay");
  tr->add_flag("--geopatch", train_opts.geodesic, "sample geodesic training patches");
  CLI::Option* tsig = tr->add_option("--gauss-sigma", train_opts.gauss_sigma,
                                     "fixed sigma for the Gaussian loss weights");
  tr->add_option("--seed", train_opts.cfg.seed, "RNG seed");
  tr->add_option("--threads", train_opts.cfg.threads, "worker threads (0 = all cores)");
  tr->add_option("--loss-csv", train_opts.loss_csv, "write per-epoch loss history here");

  EvalOpts eval_opts;
  CLI::App* ev = app.add_subcommand("eval", "score predicted normals against ground truth");
  ev->add_option("-s,--shapes", eval_opts.shapes_list, "shape list file")->required();
  ev->add_option("--pred-dir", eval_opts.pred_dir, "directory with <name>.normals predictions")
      ->required();
  ev->add_option("--gt-dir", eval_opts.gt_dir,
                 "directory with ground-truth normals (default: shape list directory)");
  ev->add_option("--csv", eval_opts.csv_path, "CSV report path");
  ev->add_option("--json", eval_opts.json_path, "JSON report path");
  ev->add_option("--tau", eval_opts.taus, "PGP thresholds in degrees (default 5 10)");

  SynthOpts synth_opts;
  CLI::App* sy = app.add_subcommand("synth", "generate a synthetic benchmark shape");
  sy->add_option("--kind", synth_opts.kind, "plane, sphere, cylinder, torus or cube");
  sy->add_option("--n", synth_opts.spec.n_points, "number of points")->required();
  sy->add_option("--noise", synth_opts.spec.noise_sigma,
                 "noise std as a fraction of the bbox diagonal");
  sy->add_option("--density", synth_opts.density, "uniform, stripes or gradient");
  sy->add_option("--seed", synth_opts.spec.seed, "RNG seed");
  sy->add_option("--out-dir", synth_opts.out_dir, "output directory");
  sy->add_option("--name", synth_opts.name_override, "override the generated shape name");
  sy->add_option("--list", synth_opts.list_path, "append the shape name to this list file");

  BenchOpts bench_opts;
  CLI::App* be = app.add_subcommand("bench", "run estimate+eval over a config grid");
  be->add_option("-s,--shapes", bench_opts.shapes_list, "shape list file (with ground truth)")
      ->required();
  be->add_option("--csv", bench_opts.csv_path, "combined CSV output")->required();
  be->add_option("--estimators", bench_opts.estimators, "comma-separated: pca,jet,neural");
  be->add_option("--frames", bench_opts.frames, "comma-separated n_frames values");
  be->add_option("--toggles", bench_opts.toggles,
                 "comma-separated patch toggles: all,nogeo,nohalf,nogauss,plain");
  be->add_option("--jet-order", bench_opts.jet_order, "polynomial order for the jet estimator");
  be->add_flag("--jet-plain", bench_opts.jet_plain, "disable Gaussian weighting inside the jet fit");
  be->add_option("--params", bench_opts.params_path, "network parameters (neural estimator)");
  be->add_option("--tau", bench_opts.taus, "PGP thresholds in degrees (default 5 10)");
  add_infer_flags(be, bench_opts.base);
  be->add_flag("--per-point", bench_opts.base.per_point_mode,
               "one patch per point, keep only the center prediction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : exit_config;
  }

  try {
    est_opts.sigma_given = sig->count() > 0;
    train_opts.sigma_given = tsig->count() > 0;
    if (est->parsed()) return cmd_estimate(est_opts);
    if (tr->parsed()) return cmd_train(train_opts);
    if (ev->parsed()) return cmd_eval(eval_opts);
    if (sy->parsed()) return cmd_synth(synth_opts);
    if (be->parsed()) return cmd_bench(bench_opts);
    std::cerr << "error: no subcommand\n";
    return exit_config;
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_numeric;
  }
}

}  // namespace normest
