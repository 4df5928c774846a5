// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero when any hard
// criterion fails; the throughput criterion is soft and only reported.

#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "compdvision/force.hpp"
#include "compdvision/grasp.hpp"
#include "compdvision/metrics.hpp"
#include "compdvision/stereo.hpp"
#include "compdvision/sweep.hpp"
#include "compdvision/synthgen.hpp"
#include "compdvision/tactile.hpp"
#include "compdvision/tuner.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace cdv;
using Clock = std::chrono::steady_clock;

namespace {

int hard_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail, bool soft = false) {
  std::cout << (pass ? "PASS" : (soft ? "FAIL (soft)" : "FAIL")) << "  " << id << ". " << name << ": " << detail << std::endl;
  if (!pass && !soft) ++hard_failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

const SensorLayout& layout() {
  static const SensorLayout l = make_layout();
  return l;
}

// ---- 1-3: static-plane sweep ----------------------------------------------------------------

void depth_sweep() {
  const auto t0 = Clock::now();
  const auto res = sweep::run_sweep(layout(), {}, sweep::default_sweep());
  const double runtime = seconds_since(t0);

  std::vector<double> fill, rmse;
  std::map<double, std::vector<double>> zacc;
  for (const auto& f : res.frames) {
    fill.push_back(f.fill_rate);
    rmse.push_back(std::isfinite(f.rmse_percent) ? f.rmse_percent : std::numeric_limits<double>::infinity());
    zacc[f.distance_mm].push_back(std::isfinite(f.z_accuracy_mm) ? f.z_accuracy_mm : std::numeric_limits<double>::infinity());
  }
  const double fill_med = metrics::median(fill);
  const double fill_min = *std::min_element(fill.begin(), fill.end());
  report(1, "fill rate", fill_med >= 90.0 && runtime <= 120.0,
         "median " + num(fill_med) + "% (min " + num(fill_min) + "%) over " + std::to_string(fill.size()) +
             " frames, need >= 90%; runtime " + num(runtime, 3) + " s, need <= 120 s");

  const double rmse_med = metrics::median(rmse);
  report(2, "spatial RMSE", rmse_med <= 1.2, "median " + num(rmse_med) + "% of distance, need <= 1.2%");

  const double near = metrics::median(zacc.at(10.0)), far = metrics::median(zacc.at(70.0));
  report(3, "z-accuracy trend", near < far, "median at 10 mm " + num(near) + " mm < at 70 mm " + num(far) + " mm");
}

// ---- 4: SGM against the exhaustive path DP --------------------------------------------------

void sgm_oracle() {
  std::mt19937_64 rng(4);
  const std::array<stereo::Direction, 1> ltr{{{1, 0}}};
  int mismatches = 0;
  for (int instance = 0; instance < 1000; ++instance) {
    const int p1 = 1 + static_cast<int>(rng() % 8);
    const int p2 = p1 + 1 + static_cast<int>(rng() % 24);
    std::vector<std::vector<int>> cost(8, std::vector<int>(4));
    stereo::CostVolume vol(8, 1, 0, 3);
    for (int x = 0; x < 8; ++x)
      for (int d = 0; d < 4; ++d) {
        const int c = static_cast<int>(rng() % 16);
        cost[static_cast<std::size_t>(x)][static_cast<std::size_t>(d)] = c;
        vol.at(x, 0, d) = static_cast<std::uint16_t>(c);
      }
    std::vector<std::uint16_t> acc;
    stereo::aggregate_paths(vol, p1, p2, ltr, acc);
    const auto expect = oracle::sgm_path_bruteforce(cost, p1, p2);
    for (int x = 0; x < 8; ++x)
      for (int d = 0; d < 4; ++d)
        mismatches += acc[vol.offset(x, 0) + static_cast<std::size_t>(d)] != expect[static_cast<std::size_t>(x)][static_cast<std::size_t>(d)];
  }
  report(4, "SGM oracle", mismatches == 0, std::to_string(mismatches) + " mismatches over 1000 instances of 1x8, 4 disparities");
}

// ---- 5: census brightness invariance --------------------------------------------------------

void brightness_invariance() {
  int differing = 0, checked = 0;
  bool headroom = true;
  for (double d : {15.0, 40.0, 65.0}) {
    auto scene = synth::default_scene(layout());
    scene.target_distance_mm = d;
    scene.rng_seed = 5;
    const auto frame = synth::render_compound_frame(layout(), scene).frame;
    for (auto pair : {StereoPair::kLeft, StereoPair::kRight}) {
      const auto r = stereo::estimate_depth(frame, layout(), pair, {}, {});
      ImageU8 l = r.left_gray, rt = r.right_gray;
      headroom = headroom && *std::max_element(l.data().begin(), l.data().end()) <= 215 &&
                 *std::max_element(rt.data().begin(), rt.data().end()) <= 215;
      const stereo::SgbmParams p;
      auto [a, ar] = stereo::compute_disparity(l, rt, p);
      stereo::left_right_check(a, ar, p.lr_threshold);
      for (auto& v : l.data()) v = static_cast<std::uint8_t>(v + 40);
      for (auto& v : rt.data()) v = static_cast<std::uint8_t>(v + 40);
      auto [b, br] = stereo::compute_disparity(l, rt, p);
      stereo::left_right_check(b, br, p.lr_threshold);
      for (std::size_t i = 0; i < a.disparity.size(); ++i)
        differing += a.disparity.data()[i] != b.disparity.data()[i] || a.flags.data()[i] != b.flags.data()[i];
      checked += static_cast<int>(a.disparity.size());
    }
  }
  report(5, "census brightness invariance", headroom && differing == 0,
         std::to_string(differing) + " of " + std::to_string(checked) + " disparities differ after +40 gray levels" +
             (headroom ? "" : " (tiles saturate, shift not representable)"));
}

// ---- 6: temporal noise ----------------------------------------------------------------------

void temporal_noise() {
  auto scene = synth::default_scene(layout());
  scene.target_distance_mm = 35.0;
  const auto frame = synth::render_compound_frame(layout(), scene).frame;
  std::vector<DepthMap> same;
  for (int i = 0; i < 5; ++i) same.push_back(stereo::estimate_depth(frame, layout(), StereoPair::kLeft, {}, {}).depth);
  const auto& base = same.front();
  const auto roi = metrics::make_roi(base.width(), base.height(), stereo::SgbmParams{}.d_max, tuner::kRoiMargin);
  const double zero = metrics::temporal_noise(same, roi);

  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 0.2);
  std::vector<DepthMap> noisy(20, base);
  for (auto& f : noisy)
    for (auto& v : f.depth.data()) v = static_cast<float>(v + n(rng));
  const double sigma = metrics::temporal_noise(noisy, roi);
  report(6, "temporal noise", zero == 0.0 && std::abs(sigma - 0.2) <= 0.15 * 0.2,
         "identical frames " + num(zero) + " mm (need exactly 0); sigma 0.2 injected over 20 frames gives " + num(sigma) +
             " mm (need within 15%)");
}

// ---- 7: tuner -------------------------------------------------------------------------------

void tuner_run() {
  const double distances[] = {10.0, 22.0, 34.0, 46.0, 58.0, 70.0};  // one sample each, pairs alternate
  const StereoPair pairs[] = {StereoPair::kLeft, StereoPair::kRight};
  const auto samples = tuner::make_training_set(layout(), distances, pairs, 7);
  tuner::AnnealOptions opt;
  opt.seed = 7;
  opt.budget = 300;
  const auto t0 = Clock::now();
  const auto a = tuner::tune_stereo(samples, layout(), {}, opt);
  const double runtime = seconds_since(t0);
  const auto b = tuner::tune_stereo(samples, layout(), {}, opt);

  bool monotone = true;
  for (std::size_t i = 1; i < a.anneal.trace.size(); ++i)
    monotone = monotone && a.anneal.trace[i].best_cost <= a.anneal.trace[i - 1].best_cost;
  bool same = a.anneal.trace.size() == b.anneal.trace.size();
  for (std::size_t i = 0; same && i < a.anneal.trace.size(); ++i)
    same = a.anneal.trace[i].x == b.anneal.trace[i].x && a.anneal.trace[i].cost == b.anneal.trace[i].cost;
  const bool feasible = a.anneal.feasible && tuner::feasible(a.best_cost);
  report(7, "tuner", samples.size() == 6 && feasible && a.best_cost <= a.initial_cost && monotone && same && runtime <= 600.0,
         std::to_string(samples.size()) + " samples, " + std::to_string(a.anneal.trace.size()) + " evaluations; best " +
             num(a.best_cost) + " <= defaults " + num(a.initial_cost) + (feasible ? ", feasible" : ", infeasible") +
             (monotone ? ", best non-increasing" : ", best increased") + (same ? ", trace reproduced" : ", trace differs") +
             "; runtime " + num(runtime, 3) + " s, need <= 600 s");
}

// ---- 8: tactile translation -----------------------------------------------------------------

void tactile_shift() {
  const auto ref_layout = synth::default_marker_layout(layout());
  auto moved = ref_layout;
  moved.origin += Eigen::Vector2d(3.0, -2.0);
  auto scene = synth::default_scene(layout());
  scene.markers = ref_layout;
  const auto ref = synth::render_compound_frame(layout(), scene).frame;
  scene.markers = moved;
  const auto cur = synth::render_compound_frame(layout(), scene).frame;

  const tactile::MarkerTracker tracker(ref, layout());
  const auto r = tracker.track(cur);
  double worst = 0.0;
  for (int row = 0; row < 6; ++row)
    for (int col = 0; col < 6; ++col) worst = std::max(worst, (r.grid.displacement(row, col) - Eigen::Vector2d(3.0, -2.0)).norm());
  const auto expected = ref_layout.centres().size();
  const bool counts = tracker.reference().size() == expected && r.markers.size() == expected;
  report(8, "tactile translation", worst <= 0.2 && counts,
         "worst grid-node error " + num(worst) + " px (need <= 0.2); stitched marker count " +
             std::to_string(tracker.reference().size()) + "/" + std::to_string(r.markers.size()) + " of " +
             std::to_string(expected));
}

// ---- 9: marker matching ---------------------------------------------------------------------

void matching_oracle() {
  std::mt19937_64 rng(9);
  const double max_disp = 4.0;
  std::uniform_real_distribution<double> pos(0.0, 200.0), ang(0.0, 2.0 * std::numbers::pi), len(0.0, max_disp);
  int wrong = 0;
  for (int instance = 0; instance < 100; ++instance) {
    std::vector<Eigen::Vector2d> pts;
    while (pts.size() < 20) {
      const Eigen::Vector2d p(pos(rng), pos(rng));
      if (std::all_of(pts.begin(), pts.end(), [&](const Eigen::Vector2d& q) { return (p - q).norm() > 2.0 * max_disp + 1.0; }))
        pts.push_back(p);
    }
    std::vector<int> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Eigen::Vector2d> current(20);
    for (std::size_t i = 0; i < 20; ++i) {
      const double a = ang(rng);
      current[static_cast<std::size_t>(perm[i])] = pts[i] + len(rng) * Eigen::Vector2d(std::cos(a), std::sin(a));
    }
    tactile::MarkerSet mi, mc;
    for (const auto& p : pts) mi.push_back({p, 50.0});
    for (const auto& p : current) mc.push_back({p, 50.0});
    const auto expect = oracle::optimal_assignment(pts, current);
    const auto f = tactile::match_markers(mi, mc, 2.0 * max_disp);
    bool ok = f.pairs.size() == 20;
    for (const auto& p : f.pairs) ok = ok && p.current_index == expect[static_cast<std::size_t>(p.initial_index)];
    wrong += !ok;
  }
  report(9, "matching oracle", wrong == 0, std::to_string(wrong) + " of 100 instances differ from the optimal assignment");
}

// ---- 10-12: force ---------------------------------------------------------------------------

void gradient_check(const force::ForceDataset& ds) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto net = force::make_net(100 + seed);
    worst = std::max(worst, force::grad_check(net, ds.samples[seed * 37], 1e-5, 200, seed).max_relative_error);
  }
  report(10, "gradient check", worst <= 1e-6, "max relative error " + num(worst, 3) + " over 10 seeds, need <= 1e-6");
}

double axis_rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, int k) {
  return std::sqrt((pred.col(k) - truth.col(k)).squaredNorm() / static_cast<double>(truth.rows()));
}

force::ForceNet force_regression(const force::ForceDataset& ds, double dataset_s) {
  const auto tr = ds.subset(ds.train), te = ds.subset(ds.test);
  const auto t0 = Clock::now();
  auto net = force::make_net(0);
  force::train(net, tr, te, {});
  const double runtime = dataset_s + seconds_since(t0);
  const auto rmse = force::as_array(force::eval_rmse(net, te));

  const auto design = [](std::span<const force::ForceSample> set) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(set.size()), force::DisplacementGrid::kValues);
    Eigen::MatrixXd y(static_cast<Eigen::Index>(set.size()), 3);
    for (std::size_t i = 0; i < set.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      for (int k = 0; k < force::DisplacementGrid::kValues; ++k) x(row, k) = set[i].grid.values[static_cast<std::size_t>(k)];
      y.row(row) << set[i].force.fx, set[i].force.fy, set[i].force.fz;
    }
    return std::pair{x, y};
  };
  const auto [xtr, ytr] = design(tr);
  const auto [xte, yte] = design(te);
  const auto fit = oracle::least_squares(xtr, ytr);
  Eigen::MatrixXd pred(xte.rows(), 3);
  for (Eigen::Index i = 0; i < xte.rows(); ++i) pred.row(i) = fit.predict(xte.row(i));

  bool pass = runtime <= 300.0;
  std::string detail;
  const char* axes[] = {"fx", "fy", "fz"};
  for (int k = 0; k < 3; ++k) {
    const double ls = axis_rmse(pred, yte, k), got = rmse[static_cast<std::size_t>(k)];
    pass = pass && got <= 1.1 * ls && got <= 0.08;
    detail += std::string(axes[k]) + " " + num(got, 3) + " N (LS " + num(ls, 3) + "); ";
  }
  report(11, "force regression", pass,
         detail + "need <= 1.1 x LS and <= 0.08 N; " + std::to_string(tr.size()) + "/" + std::to_string(te.size()) +
             " split; runtime " + num(runtime, 3) + " s, need <= 300 s");
  return net;
}

void throughput(const force::ForceNet& net) {
  const auto r = grasp::run_grasp(grasp::default_script(layout()), layout(), net);
  report(12, "grasp throughput", r.median_wall_ms <= 66.0,
         "median " + num(r.median_wall_ms, 3) + " ms per frame over " + std::to_string(r.rows.size()) +
             " frames, need <= 66 ms",
         true);
}

// ---- 13: CLI determinism --------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

void cli_determinism() {
  const fs::path work = fs::temp_directory_path() / "compdvision_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string cli = std::string("\"") + COMPDVISION_CLI + "\"";
  const auto sh = [&](const std::string& args, const fs::path& log) {
    return std::system((cli + " " + args + " > \"" + log.string() + "\" 2>&1").c_str());
  };
  const std::string calib = (work / "calib.json").string();
  const std::string ref = (work / "ref").string(), cur = (work / "cur").string();
  {
    std::ofstream(work / "contact.json") << R"({"contact": {"centre_px": [259.5, 259.5], "normal_depth_mm": 0.3,
                                               "tangential_shift_mm": [0.02, -0.01], "radius_mm": 1.5}})";
    std::ofstream(work / "tune.json") << R"({"distances_mm": [20, 50], "pairs": "left", "train_fraction": 0.5})";
    std::ofstream(work / "script.json") << R"({"phases": [
        {"name": "approach", "frames": 3, "distance_start_mm": 60, "distance_end_mm": 20},
        {"name": "press", "frames": 3, "distance_start_mm": 20, "distance_end_mm": 20,
         "contact_start": {"centre_px": [259.5, 259.5], "normal_depth_mm": 0.0},
         "contact_end": {"centre_px": [259.5, 259.5], "normal_depth_mm": 0.3}}]})";
    std::ofstream(calib) << R"({"focal_px": 150.0, "baseline": 4.0, "baseline_units": "mm", "k1": -0.02,
                                "principal_point": [99.5, 99.5], "flange_focal_mm": 5.0})";
  }
  // Shared inputs for the commands that consume earlier outputs.
  bool setup = sh("synth --seed 1 --out " + ref, work / "setup.log") == 0 &&
               sh("synth --seed 2 --config " + (work / "contact.json").string() + " --out " + cur, work / "setup.log") == 0 &&
               sh("train-force --count 150 --epochs 2 --out " + (work / "tf").string(), work / "setup.log") == 0;
  const std::string weights = (work / "tf" / "weights.bin").string();

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "synth --sweep --sweep-start 20 --sweep-end 30 --config " + (work / "contact.json").string()},
      {"depth", "depth --frame " + ref + "/frame.ppm --frame " + cur + "/frame.ppm --calib " + calib},
      {"tactile", "tactile --reference " + ref + "/frame.ppm --frame " + cur + "/frame.ppm"},
      {"tune", "tune --budget 6 --config " + (work / "tune.json").string()},
      {"train-force", "train-force --count 150 --epochs 3"},
      {"eval", "eval --start 30 --end 40 --step 10 --frames 2"},
      {"grasp", "grasp --weights " + weights + " --script " + (work / "script.json").string()},
  };
  std::vector<std::string> failed;
  std::size_t files = 0;
  for (const auto& [name, args] : commands) {
    std::array<std::map<std::string, std::string>, 2> out;
    bool ok = setup;
    for (int run = 0; run < 2 && ok; ++run) {
      // Same output path both times, so echoed paths cannot differ.
      const auto dir = work / name;
      const auto log = work / (name + ".log");
      fs::remove_all(dir);
      ok = sh(args + " --seed 13 --no-timing --out " + dir.string(), log) == 0;
      out[static_cast<std::size_t>(run)] = tree(dir);
      out[static_cast<std::size_t>(run)]["<stdout+stderr>"] = slurp(log);
    }
    ok = ok && out[0].size() > 1 && out[0] == out[1];
    files += out[0].size() - 1;
    if (!ok) failed.push_back(name);
  }
  fs::remove_all(work);
  std::string detail = std::to_string(commands.size() - failed.size()) + " of " + std::to_string(commands.size()) +
                       " commands byte-identical on rerun (" + std::to_string(files) + " files compared)";
  for (const auto& f : failed) detail += "; differs or failed: " + f;
  report(13, "CLI determinism", setup && failed.empty(), detail);
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const auto step = [](const char* what, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      std::cout << "FAIL  " << what << ": exception: " << e.what() << std::endl;
      ++hard_failures;
    }
  };
  step("1-3 depth sweep", depth_sweep);
  step("4 SGM oracle", sgm_oracle);
  step("5 brightness invariance", brightness_invariance);
  step("6 temporal noise", temporal_noise);
  step("7 tuner", tuner_run);
  step("8 tactile translation", tactile_shift);
  step("9 matching oracle", matching_oracle);
  step("10-12 force", [] {
    const auto t = Clock::now();
    const auto ds = force::make_dataset({}, layout());
    const double dataset_s = seconds_since(t);
    gradient_check(ds);
    const auto net = force_regression(ds, dataset_s);
    throughput(net);
  });
  step("13 CLI determinism", cli_determinism);
  std::cout << (hard_failures == 0 ? "ALL HARD CRITERIA PASS" : std::to_string(hard_failures) + " HARD CRITERIA FAIL")
            << " (" << num(seconds_since(t0), 4) << " s)" << std::endl;
  return hard_failures == 0 ? 0 : 1;
}
