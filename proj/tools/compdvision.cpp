#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "compdvision/config.hpp"
#include "compdvision/force.hpp"
#include "compdvision/grasp.hpp"
#include "compdvision/io.hpp"
#include "compdvision/layout.hpp"
#include "compdvision/metrics.hpp"
#include "compdvision/stereo.hpp"
#include "compdvision/sweep.hpp"
#include "compdvision/synthgen.hpp"
#include "compdvision/tactile.hpp"
#include "compdvision/tuner.hpp"

namespace fs = std::filesystem;
using namespace cdv;
using io::Json;

namespace {

struct Common {
  std::uint64_t seed = 0;
  bool no_timing = false;
  std::string sensor;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Seed for every random stream (default 0)");
  cmd->add_flag("--no-timing", c.no_timing, "Omit wall-clock fields so outputs are byte-comparable");
  cmd->add_option("--sensor", c.sensor, "Sensor layout JSON")->check(CLI::ExistingFile);
}

SensorLayout load_layout(const Common& c) {
  return make_layout(c.sensor.empty() ? SensorConfig{} : io::load_config<SensorConfig>(c.sensor));
}

tuner::StereoParams load_params(const std::string& path) {
  return path.empty() ? tuner::StereoParams{} : io::load_config<tuner::StereoParams>(path);
}

std::vector<StereoPair> parse_pairs(const std::string& s) {
  if (s == "left") return {StereoPair::kLeft};
  if (s == "right") return {StereoPair::kRight};
  if (s == "both") return {StereoPair::kLeft, StereoPair::kRight};
  throw Error("pair must be left, right or both");
}

std::ofstream open_text(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw io::IoError("cannot open for writing: " + path.string());
  return out;
}

std::string role_tag(UnitRole r) {
  std::string s(to_string(r));
  for (char& ch : s)
    if (ch == '-') ch = '_';
  return s;
}

Json points_json(const std::vector<Eigen::Vector2d>& pts) {
  Json a = Json::array();
  for (const auto& p : pts) a.push_back({p.x(), p.y()});
  return a;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- synth ----------------------------------------------------------------------------------

struct SynthArgs {
  Common common;
  std::string config;
  std::string out;
  std::optional<double> distance;
  bool sweep = false;
  double sweep_start = 0.0, sweep_end = 70.0, sweep_step = 5.0;
};

void write_scene(const fs::path& dir, const SensorLayout& layout, const synth::SceneSpec& scene) {
  fs::create_directories(dir);
  const auto r = synth::render_compound_frame(layout, scene);
  io::write_ppm(dir / "frame.ppm", r.frame);
  Json truth;
  truth["sensor"] = layout.config;
  truth["scene"] = scene;
  truth["target_distance_mm"] = r.truth.target_distance_mm;
  truth["flange_focal_mm"] = r.truth.flange_focal_mm;
  truth["gt_depth_mm"] = r.truth.gt_depth_mm();
  truth["force"] = r.truth.force;
  truth["markers_initial"] = points_json(r.truth.markers_initial);
  truth["markers_deformed"] = points_json(r.truth.markers_deformed);
  truth["displacement"] = points_json(r.truth.displacement);
  for (const auto& [index, depth] : r.truth.depth_mm) {
    const auto& u = layout.units.at(static_cast<std::size_t>(index));
    const auto name = "gt_depth_" + role_tag(u.role) + ".f32";
    io::write_f32(dir / name, depth, {{"units", "mm"}, {"unit_index", index}, {"role", to_string(u.role)}});
    truth["depth_rasters"].push_back(name);
  }
  io::write_json(dir / "truth.json", truth);
}

int cmd_synth(const SynthArgs& a) {
  const auto layout = load_layout(a.common);
  auto scene = synth::default_scene(layout);
  if (!a.config.empty()) scene = io::load_config<synth::SceneSpec>(a.config, scene);
  scene.rng_seed = a.common.seed;
  if (a.distance) scene.target_distance_mm = *a.distance;
  if (!a.sweep) {
    write_scene(a.out, layout, scene);
    return 0;
  }
  if (!(a.sweep_step > 0.0)) throw Error("sweep step must be positive");
  int n = 0;
  for (double d : sweep::distance_range(a.sweep_start, a.sweep_end, a.sweep_step)) {
    scene.target_distance_mm = d;
    char name[32];
    std::snprintf(name, sizeof name, "d%05.1f", d);
    write_scene(fs::path(a.out) / name, layout, scene);
    ++n;
  }
  std::cout << "wrote " << n << " scenes to " << a.out << '\n';
  return 0;
}

// ---- depth ----------------------------------------------------------------------------------

struct DepthArgs {
  Common common;
  std::vector<std::string> frames;
  std::string calib;
  std::string params;
  std::string pair = "both";
  std::optional<double> distance;
  std::string out;
};

int cmd_depth(const DepthArgs& a) {
  const auto layout = load_layout(a.common);
  const auto params = load_params(a.params);
  std::optional<double> distance = a.distance;
  if (!distance) {
    const auto truth = fs::path(a.frames.front()).parent_path() / "truth.json";
    if (fs::exists(truth)) distance = io::read_json(truth).at("target_distance_mm").get<double>();
  }
  fs::create_directories(a.out);
  auto csv = open_text(fs::path(a.out) / "report.csv");
  csv << metrics::kReportCsvHeader << '\n';
  for (auto pair : parse_pairs(a.pair)) {
    const auto rig = io::load_rig(a.calib, layout, pair);
    const auto& top = layout.unit_with_role(pair == StereoPair::kLeft ? UnitRole::kStereoLeftTop : UnitRole::kStereoRightTop);
    const auto& bottom =
        layout.unit_with_role(pair == StereoPair::kLeft ? UnitRole::kStereoLeftBottom : UnitRole::kStereoRightBottom);
    std::vector<DepthMap> depths;
    std::vector<double> fill, zacc, rmse;
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
      const auto frame = io::read_ppm(a.frames[i]);
      if (frame.width() != layout.frame_width || frame.height() != layout.frame_height)
        throw Error(a.frames[i] + ": frame size does not match the sensor layout");
      const auto r = stereo::estimate_depth_from_tiles(crop(frame, top.rect), crop(frame, bottom.rect), rig, params.sgbm,
                                                       params.wls, params.masking);
      const std::string tag = std::string(to_string(pair)) + (a.frames.size() > 1 ? "_" + std::to_string(i) : "");
      io::write_f32(fs::path(a.out) / ("depth_" + tag + ".f32"), r.depth.with_nan(),
                    {{"units", rig.units == geometry::BaselineUnits::kPixels ? "baseline-px" : "mm"},
                     {"invalid", "NaN"},
                     {"pair", to_string(pair)}});
      io::write_f32(fs::path(a.out) / ("disparity_" + tag + ".f32"), with_nan(r.disparity),
                    {{"units", "px"}, {"invalid", "NaN"}, {"pair", to_string(pair)}});
      io::write_mask(fs::path(a.out) / ("marker_mask_" + tag + ".pgm"), r.marker_mask);
      const auto roi = metrics::make_roi(r.depth.width(), r.depth.height(), params.sgbm.d_max, tuner::kRoiMargin,
                                         r.marker_mask);
      fill.push_back(metrics::fill_rate(r.depth, roi));
      // Pixel-unit baselines give depth in arbitrary units; millimetre metrics do not apply.
      if (distance && rig.units == geometry::BaselineUnits::kMillimetres) {
        try {
          zacc.push_back(metrics::z_accuracy(r.depth, *distance, rig.flange_focal_mm, roi));
          rmse.push_back(metrics::spatial_rmse(r.depth, roi, rig.flange_focal_mm + *distance));
        } catch (const Error& e) {
          std::cerr << "warning: " << a.frames[i] << ": " << e.what() << '\n';
        }
      }
      depths.push_back(r.depth);
    }
    metrics::MetricReport rep;
    rep.distance_mm = distance.value_or(std::nan(""));
    rep.pair = std::string(to_string(pair));
    rep.fill_rate = metrics::median(fill);
    rep.z_accuracy_mm = zacc.empty() ? std::nan("") : metrics::median(zacc);
    rep.rmse_percent = rmse.empty() ? std::nan("") : metrics::median(rmse);
    rep.temporal_noise_mm = std::nan("");
    if (depths.size() >= 2) {
      const auto roi = metrics::make_roi(depths[0].width(), depths[0].height(), params.sgbm.d_max, tuner::kRoiMargin);
      rep.temporal_noise_mm = metrics::temporal_noise(depths, roi);
    }
    csv << sweep::report_row(rep) << '\n';
  }
  return 0;
}

// ---- tactile --------------------------------------------------------------------------------

struct TactileArgs {
  Common common;
  std::string reference;
  std::string frame;
  std::string out;
};

int cmd_tactile(const TactileArgs& a) {
  const auto layout = load_layout(a.common);
  const tactile::MarkerTracker tracker(io::read_ppm(a.reference), layout);
  const auto frame = io::read_ppm(a.frame);
  const auto res = tracker.track(frame);
  fs::create_directories(a.out);
  const fs::path out(a.out);
  io::write_ppm(out / "stitched.ppm", tactile::stitch(frame, tracker.rois()));
  {
    auto csv = open_text(out / "markers.csv");
    csv << "x,y\n";
    for (const auto& m : res.markers) csv << io::fmt(m.centroid.x()) << ',' << io::fmt(m.centroid.y()) << '\n';
  }
  {
    auto csv = open_text(out / "displacement.csv");
    csv << "x,y,dx,dy\n";
    for (const auto& p : res.field.pairs)
      csv << io::fmt(p.initial.x()) << ',' << io::fmt(p.initial.y()) << ',' << io::fmt(p.displacement.x()) << ','
          << io::fmt(p.displacement.y()) << '\n';
  }
  io::write_f32(out / "grid.f32", force::grid_to_image(res.grid), {{"units", "px"}, {"layout", "6x6x2 (dx, dy)"}});
  Json rois;
  rois["canvas"] = {tracker.rois().canvas_width, tracker.rois().canvas_height};
  for (const auto& e : tracker.rois().entries)
    rois["entries"].push_back({{"unit_index", e.unit_index},
                               {"crop", {e.crop.x, e.crop.y, e.crop.width, e.crop.height}},
                               {"placement", {e.placement.x, e.placement.y, e.placement.width, e.placement.height}}});
  rois["reference_markers"] = tracker.reference().size();
  rois["matched"] = res.field.pairs.size();
  rois["unmatched_reference"] = res.field.unmatched_initial;
  rois["unmatched_current"] = res.field.unmatched_current;
  io::write_json(out / "tracking.json", rois);
  return 0;
}

// ---- tune -----------------------------------------------------------------------------------

struct TuneArgs {
  Common common;
  std::string config;
  std::string params;
  std::optional<int> budget;
  std::string out;
};

int cmd_tune(const TuneArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto layout = load_layout(a.common);
  const auto start = load_params(a.params);
  Json cfg = a.config.empty() ? Json::object() : io::read_json(a.config);
  tuner::AnnealOptions opt;
  opt.budget = 300;
  if (cfg.contains("anneal")) cfg.at("anneal").get_to(opt);
  opt.seed = a.common.seed;
  if (a.budget) opt.budget = *a.budget;
  auto bounds = tuner::default_stereo_bounds();
  if (cfg.contains("bounds")) cfg.at("bounds").get_to(bounds);
  const auto distances = cfg.value("distances_mm", sweep::distance_range(10.0, 64.0, 6.0));
  const auto pairs = parse_pairs(cfg.value("pairs", std::string("both")));
  const double train_fraction = cfg.value("train_fraction", 0.6);
  const int sample_threads = cfg.value("sample_threads", 1);

  const auto all = tuner::make_training_set(layout, distances, pairs, a.common.seed);
  const auto [train, held_out] = tuner::split_training_set(all, train_fraction);
  const auto result = tuner::tune_stereo(train, layout, start, opt, bounds, sample_threads);

  fs::create_directories(a.out);
  const fs::path out(a.out);
  {
    auto csv = open_text(out / "trace.csv");
    csv << "eval_idx";
    for (const char* n : tuner::ParamVector::kNames) csv << ',' << n;
    csv << ",cost,feasible,best_cost\n";
    for (const auto& e : result.anneal.trace) {
      csv << e.index;
      for (double v : e.x) csv << ',' << io::fmt(v);
      csv << ',' << io::fmt(e.cost) << ',' << (tuner::feasible(e.cost) ? 1 : 0) << ',' << io::fmt(e.best_cost) << '\n';
    }
  }
  io::write_json(out / "best_params.json", Json(result.best));
  const auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json("infeasible"); };
  Json summary = {{"train_samples", train.size()},
                  {"held_out_samples", held_out.size()},
                  {"evaluations", result.anneal.trace.size()},
                  {"initial_cost", num(result.initial_cost)},
                  {"best_cost", num(result.best_cost)},
                  {"feasible", result.anneal.feasible},
                  {"anneal", opt},
                  {"bounds", bounds}};
  if (!held_out.empty()) {
    summary["held_out_cost_start"] = num(tuner::stereo_cost(start, held_out, layout, sample_threads).cost);
    summary["held_out_cost_best"] = num(tuner::stereo_cost(result.best, held_out, layout, sample_threads).cost);
  }
  if (!a.common.no_timing) summary["runtime_s"] = elapsed_s(t0);
  io::write_json(out / "summary.json", summary);
  std::cout << "best cost " << io::fmt(result.best_cost) << " (start " << io::fmt(result.initial_cost) << ")\n";
  if (!result.anneal.feasible) std::cerr << "warning: no feasible parameter set found\n";
  return 0;
}

// ---- train-force ----------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string config;
  std::string dataset;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> batch;
  std::optional<int> count;
  std::string out;
};

force::ForceDataset obtain_dataset(const std::string& dir, const force::DatasetSpec& spec, const SensorLayout& layout) {
  if (!dir.empty() && fs::exists(fs::path(dir) / "labels.csv")) return force::load_dataset(dir);
  auto ds = force::make_dataset(spec, layout);
  if (!dir.empty()) force::save_dataset(dir, ds);
  return ds;
}

int cmd_train(const TrainArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto layout = load_layout(a.common);
  Json cfg = a.config.empty() ? Json::object() : io::read_json(a.config);
  force::DatasetSpec spec;
  if (cfg.contains("dataset")) cfg.at("dataset").get_to(spec);
  spec.seed = a.common.seed;
  if (a.count) spec.count = *a.count;
  force::TrainParams hp;
  hp.learning_rate = 1e-2;
  hp.epochs = 100;
  if (cfg.contains("train")) cfg.at("train").get_to(hp);
  hp.seed = a.common.seed;
  if (a.epochs) hp.epochs = *a.epochs;
  if (a.lr) hp.learning_rate = *a.lr;
  if (a.batch) hp.batch = *a.batch;

  const auto ds = obtain_dataset(a.dataset, spec, layout);
  const auto train = ds.subset(ds.train), test = ds.subset(ds.test);
  auto net = force::make_net(a.common.seed);
  const auto curve = force::train(net, train, test, hp);
  const auto rmse = force::eval_rmse(net, test);

  fs::create_directories(a.out);
  const fs::path out(a.out);
  force::save_weights(out / "weights.bin", net);
  {
    auto csv = open_text(out / "loss.csv");
    csv << "epoch,train_loss,validation_loss\n";
    for (const auto& p : curve) csv << p.epoch << ',' << io::fmt(p.train_loss) << ',' << io::fmt(p.validation_loss) << '\n';
  }
  Json m = {{"train_samples", train.size()},
            {"test_samples", test.size()},
            {"test_rmse_n", rmse},
            {"hyper", hp},
            {"dataset", spec}};
  if (!a.common.no_timing) m["runtime_s"] = elapsed_s(t0);
  io::write_json(out / "metrics.json", m);
  std::cout << "test RMSE (N): fx " << io::fmt(rmse.fx) << " fy " << io::fmt(rmse.fy) << " fz " << io::fmt(rmse.fz) << '\n';
  return 0;
}

// ---- eval -----------------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string params;
  std::string pair = "both";
  double start = 10.0, end = 70.0, step = 5.0;
  int frames = 5;
  std::string weights;
  std::string dataset;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto layout = load_layout(a.common);
  const auto params = load_params(a.params);
  sweep::SweepSpec spec;
  spec.distances_mm = sweep::distance_range(a.start, a.end, a.step);
  spec.frames = a.frames;
  spec.pairs = parse_pairs(a.pair);
  spec.seed = a.common.seed;
  const auto res = sweep::run_sweep(layout, params, spec);

  fs::create_directories(a.out);
  const fs::path out(a.out);
  {
    auto csv = open_text(out / "report.csv");
    csv << metrics::kReportCsvHeader << '\n';
    for (const auto& r : res.reports) csv << sweep::report_row(r) << '\n';
  }
  {
    auto csv = open_text(out / "frames.csv");
    csv << "distance_mm,pair,frame,fill_rate,z_accuracy_mm,rmse_percent\n";
    for (const auto& f : res.frames)
      csv << io::fmt(f.distance_mm) << ',' << to_string(f.pair) << ',' << f.frame << ',' << io::fmt(f.fill_rate) << ','
          << io::fmt(f.z_accuracy_mm) << ',' << io::fmt(f.rmse_percent) << '\n';
  }
  Json summary = sweep::summary(res);
  if (!a.weights.empty()) {
    const auto net = force::load_weights(a.weights);
    force::DatasetSpec ds_spec;
    ds_spec.seed = a.common.seed;
    const auto ds = obtain_dataset(a.dataset, ds_spec, layout);
    summary["force_test_rmse_n"] = force::eval_rmse(net, ds.subset(ds.test));
  }
  if (!a.common.no_timing) summary["runtime_s"] = elapsed_s(t0);
  io::write_json(out / "summary.json", summary);
  return 0;
}

// ---- grasp ----------------------------------------------------------------------------------

struct GraspArgs {
  Common common;
  std::string script;
  std::string calib;
  std::string weights;
  std::string params;
  std::string pair = "left";
  std::string out;
};

int cmd_grasp(const GraspArgs& a) {
  const auto layout = load_layout(a.common);
  if (!fs::exists(a.weights)) throw io::IoError("weights not found: " + a.weights + " (run train-force first)");
  const auto net = force::load_weights(a.weights);
  auto script = a.script.empty() ? grasp::default_script(layout) : io::load_config<grasp::GraspScript>(a.script);
  script.seed = a.common.seed;
  grasp::GraspOptions opt;
  const auto pairs = parse_pairs(a.pair);
  if (pairs.size() != 1) throw Error("grasp runs on a single stereo pair");
  opt.pair = pairs.front();
  opt.stereo = load_params(a.params);
  if (!a.calib.empty()) opt.rig = io::load_rig(a.calib, layout, opt.pair);
  const auto res = grasp::run_grasp(script, layout, net, opt);

  fs::create_directories(a.out);
  const fs::path out(a.out);
  {
    auto csv = open_text(out / "timeline.csv");
    csv << grasp::kTimelineHeader << (a.common.no_timing ? "" : ",wall_ms") << '\n';
    for (const auto& r : res.rows) {
      csv << r.frame << ',' << r.phase << ',' << io::fmt(r.gt_distance_mm) << ',' << io::fmt(r.median_depth_mm) << ','
          << io::fmt(r.force.fx) << ',' << io::fmt(r.force.fy) << ',' << io::fmt(r.force.fz) << ','
          << io::fmt(r.gt_force.fx) << ',' << io::fmt(r.gt_force.fy) << ',' << io::fmt(r.gt_force.fz);
      if (!a.common.no_timing) csv << ',' << io::fmt(r.wall_ms);
      csv << '\n';
    }
  }
  Json summary = {{"frames", res.rows.size()}, {"script", script}};
  if (!a.common.no_timing) {
    summary["median_wall_ms"] = res.median_wall_ms;
    summary["budget_ms"] = 66.0;
    std::cout << "median per-frame time " << io::fmt(res.median_wall_ms) << " ms\n";
  }
  io::write_json(out / "summary.json", summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compound-eye visuotactile sensor pipeline on synthetic captures"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Render synthetic compound-eye frames with ground truth");
  add_common(synth, synth_args.common);
  synth->add_option("--config", synth_args.config, "Scene JSON")->check(CLI::ExistingFile);
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--distance", synth_args.distance, "Target distance from the sensor surface, mm");
  synth->add_flag("--sweep", synth_args.sweep, "Render a distance sweep (default 0-70 mm, 5 mm steps)");
  synth->add_option("--sweep-start", synth_args.sweep_start);
  synth->add_option("--sweep-end", synth_args.sweep_end);
  synth->add_option("--sweep-step", synth_args.sweep_step);

  DepthArgs depth_args;
  auto* depth = app.add_subcommand("depth", "Estimate depth from one or more frames and report metrics");
  add_common(depth, depth_args.common);
  depth->add_option("--frame", depth_args.frames, "Frame PPM (repeat for temporal noise)")->required()->check(CLI::ExistingFile);
  depth->add_option("--calib", depth_args.calib, "Stereo calibration JSON")->required()->check(CLI::ExistingFile);
  depth->add_option("--params", depth_args.params, "Stereo parameter JSON")->check(CLI::ExistingFile);
  depth->add_option("--pair", depth_args.pair, "left, right or both");
  depth->add_option("--distance", depth_args.distance, "Ground-truth target distance, mm (default: truth.json)");
  depth->add_option("--out", depth_args.out, "Output directory")->required();

  TactileArgs tactile_args;
  auto* tact = app.add_subcommand("tactile", "Track elastomer markers against a reference frame");
  add_common(tact, tactile_args.common);
  tact->add_option("--reference", tactile_args.reference, "Contact-free reference frame")->required()->check(CLI::ExistingFile);
  tact->add_option("--frame", tactile_args.frame, "Current frame")->required()->check(CLI::ExistingFile);
  tact->add_option("--out", tactile_args.out, "Output directory")->required();

  TuneArgs tune_args;
  auto* tune = app.add_subcommand("tune", "Dual-annealing search over stereo parameters");
  add_common(tune, tune_args.common);
  tune->add_option("--config", tune_args.config, "Tuning run JSON")->check(CLI::ExistingFile);
  tune->add_option("--params", tune_args.params, "Starting stereo parameters")->check(CLI::ExistingFile);
  tune->add_option("--budget", tune_args.budget, "Cost evaluations");
  tune->add_option("--out", tune_args.out, "Output directory")->required();

  TrainArgs train_args;
  auto* trainf = app.add_subcommand("train-force", "Train the force regression network");
  add_common(trainf, train_args.common);
  trainf->add_option("--config", train_args.config, "Dataset/training JSON")->check(CLI::ExistingFile);
  trainf->add_option("--dataset", train_args.dataset, "Dataset directory (generated there if absent)");
  trainf->add_option("--epochs", train_args.epochs);
  trainf->add_option("--lr", train_args.lr);
  trainf->add_option("--batch", train_args.batch);
  trainf->add_option("--count", train_args.count, "Samples to generate");
  trainf->add_option("--out", train_args.out, "Output directory")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Depth-quality sweep over synthetic planes");
  add_common(eval, eval_args.common);
  eval->add_option("--params", eval_args.params, "Stereo parameter JSON")->check(CLI::ExistingFile);
  eval->add_option("--pair", eval_args.pair, "left, right or both");
  eval->add_option("--start", eval_args.start);
  eval->add_option("--end", eval_args.end);
  eval->add_option("--step", eval_args.step);
  eval->add_option("--frames", eval_args.frames, "Frames per distance");
  eval->add_option("--weights", eval_args.weights, "Also report force RMSE for these weights")->check(CLI::ExistingFile);
  eval->add_option("--dataset", eval_args.dataset, "Force dataset directory");
  eval->add_option("--out", eval_args.out, "Output directory")->required();

  GraspArgs grasp_args;
  auto* grasp_cmd = app.add_subcommand("grasp", "Scripted grasp timeline with depth and force per frame");
  add_common(grasp_cmd, grasp_args.common);
  grasp_cmd->add_option("--script", grasp_args.script, "Grasp script JSON")->check(CLI::ExistingFile);
  grasp_cmd->add_option("--calib", grasp_args.calib, "Stereo calibration JSON")->check(CLI::ExistingFile);
  grasp_cmd->add_option("--weights", grasp_args.weights, "Force network weights")->required();
  grasp_cmd->add_option("--params", grasp_args.params, "Stereo parameter JSON")->check(CLI::ExistingFile);
  grasp_cmd->add_option("--pair", grasp_args.pair, "left or right");
  grasp_cmd->add_option("--out", grasp_args.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (depth->parsed()) return cmd_depth(depth_args);
    if (tact->parsed()) return cmd_tactile(tactile_args);
    if (tune->parsed()) return cmd_tune(tune_args);
    if (trainf->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (grasp_cmd->parsed()) return cmd_grasp(grasp_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
