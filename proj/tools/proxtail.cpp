// Command-line front end: dataset generation, single solves, Monte Carlo
// experiments, bound tables, and the inequality verification suite.
//
// Exit codes: 0 success, 1 verification failure, 2 usage/config error,
// 3 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "proxtail/montecarlo.hpp"
#include "proxtail/verify.hpp"
#include "proxtail/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace proxtail;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

[[noreturn]] void config_error(const std::string& msg) {
  throw std::invalid_argument("config: " + msg);
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) config_error(where + " must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) config_error("unknown key " + where + "." + item.key());
  }
}

const json& require_key(const json& obj, const std::string& where, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) config_error("missing required key " + where + "." + key);
  return *it;
}

VectorXd parse_vector(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.empty()) config_error(where + " must be a non-empty array");
  VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) config_error(where + " must contain numbers");
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  return v;
}

struct LoadedConfig {
  json echo;
  ObjectiveSpec spec;
  std::optional<FiniteSumData> data;
  VectorXd x0;
  ErrorModel error_model;
  std::optional<SampleSchedule> schedule;
  int k_max = 0;
  // montecarlo block (defaults when absent)
  int replicates = 0;
  std::uint64_t master_seed = 0;
  int parallelism = 1;
  std::vector<double> epsilon_grid;
  int j_lo = -5, j_hi = 5;
  std::string out_dir;
};

LoadedConfig load_config(const std::string& path, bool need_montecarlo) {
  std::ifstream in(path);
  if (!in) config_error("cannot open " + path);
  json root = json::parse(in);
  check_keys(root, "config", {"problem", "noise", "schedule", "solver", "montecarlo", "output"});

  LoadedConfig cfg;
  cfg.echo = root;

  const json& prob = require_key(root, "config", "problem");
  check_keys(prob, "problem",
             {"kind", "M", "n", "seed", "ridge_mu", "nonsmooth", "diag", "center"});
  const std::string kind = require_key(prob, "problem", "kind").get<std::string>();

  Nonsmooth g;
  if (prob.contains("nonsmooth")) {
    const json& ns = prob["nonsmooth"];
    check_keys(ns, "problem.nonsmooth", {"kind", "weight", "lo", "hi"});
    const std::string nk = require_key(ns, "problem.nonsmooth", "kind").get<std::string>();
    if (nk == "zero") {
      g = Nonsmooth::none();
    } else if (nk == "l1") {
      g = Nonsmooth::l1(require_key(ns, "problem.nonsmooth", "weight").get<double>());
    } else if (nk == "box") {
      g = Nonsmooth::box(parse_vector(require_key(ns, "problem.nonsmooth", "lo"), "lo"),
                         parse_vector(require_key(ns, "problem.nonsmooth", "hi"), "hi"));
    } else {
      config_error("problem.nonsmooth.kind must be zero|l1|box");
    }
  }

  int n = 0;
  double L_data = 0.0;
  if (kind == "logistic") {
    const int M = require_key(prob, "problem", "M").get<int>();
    n = require_key(prob, "problem", "n").get<int>();
    const auto seed = require_key(prob, "problem", "seed").get<std::uint64_t>();
    if (M < 1 || n < 1) config_error("problem.M and problem.n must be positive");
    cfg.data = generate_logistic_dataset(M, n, seed);
    ObjectiveSpec probe = ObjectiveSpec::logistic(n, 1.0, 1.0, 0.0);
    L_data = estimate_lipschitz(probe, &*cfg.data);
  } else if (kind == "quadratic") {
    n = require_key(prob, "problem", "n").get<int>();
    if (n < 1) config_error("problem.n must be positive");
    VectorXd diag = prob.contains("diag") ? parse_vector(prob["diag"], "problem.diag")
                                          : VectorXd::Ones(n);
    VectorXd center = prob.contains("center") ? parse_vector(prob["center"], "problem.center")
                                              : VectorXd::Zero(n);
    if (diag.size() != n || center.size() != n) config_error("diag/center must have length n");
    ObjectiveSpec probe = ObjectiveSpec::quadratic(diag, center, std::max(1e-300, diag.maxCoeff()),
                                                   1.0, 0.0);
    L_data = estimate_lipschitz(probe, nullptr);
    cfg.spec.quad_diag = std::move(diag);
    cfg.spec.quad_center = std::move(center);
    cfg.spec.smooth_kind = SmoothKind::quadratic;
  } else {
    config_error("problem.kind must be logistic|quadratic");
  }

  double mu = 0.0;
  if (prob.contains("ridge_mu")) {
    if (prob["ridge_mu"].is_string()) {
      if (prob["ridge_mu"].get<std::string>() != "auto") config_error("ridge_mu must be a number or \"auto\"");
      mu = 0.01 * L_data;
    } else {
      mu = prob["ridge_mu"].get<double>();
    }
  } else if (kind == "logistic") {
    mu = 0.01 * L_data;  // default ridge so the error-bound constant is available
  }
  if (mu < 0.0) config_error("ridge_mu must be nonnegative");

  const json& solver = require_key(root, "config", "solver");
  check_keys(solver, "solver", {"k_max", "tau", "L", "x0"});

  double L = 0.0;
  const json& L_key = require_key(solver, "solver", "L");
  if (L_key.is_string()) {
    if (L_key.get<std::string>() != "auto") config_error("solver.L must be a number or \"auto\"");
    L = L_data + mu;
  } else {
    L = L_key.get<double>();
  }

  double tau = 0.0;
  const json& tau_key = require_key(solver, "solver", "tau");
  if (tau_key.is_string()) {
    if (tau_key.get<std::string>() != "auto") config_error("solver.tau must be a number or \"auto\"");
    if (!(mu > 0.0) || g.kind != NonsmoothKind::zero) {
      config_error("solver.tau=auto needs ridge_mu > 0 and nonsmooth=zero");
    }
    tau = L / mu;
  } else {
    tau = tau_key.get<double>();
  }

  if (kind == "logistic") {
    cfg.spec = ObjectiveSpec::logistic(n, L, tau, mu, g);
  } else {
    VectorXd diag = std::move(cfg.spec.quad_diag);
    VectorXd center = std::move(cfg.spec.quad_center);
    cfg.spec = ObjectiveSpec::quadratic(std::move(diag), std::move(center), L, tau, mu, g);
  }

  const json& noise = require_key(root, "config", "noise");
  check_keys(noise, "noise", {"kind", "sigma"});
  const std::string nk = require_key(noise, "noise", "kind").get<std::string>();
  if (nk == "none") {
    cfg.error_model = ErrorModel::none();
  } else if (nk == "gaussian") {
    cfg.error_model = ErrorModel::gaussian(require_key(noise, "noise", "sigma").get<double>(), 0);
  } else if (nk == "subsample_with_replacement") {
    cfg.error_model = ErrorModel::subsample(true, 0);
  } else if (nk == "subsample_without_replacement") {
    cfg.error_model = ErrorModel::subsample(false, 0);
  } else {
    config_error("noise.kind must be none|gaussian|subsample_with_replacement|subsample_without_replacement");
  }

  const bool subsampling = cfg.error_model.kind == ErrorKind::subsample_with_replacement ||
                           cfg.error_model.kind == ErrorKind::subsample_without_replacement;
  if (subsampling) {
    if (!cfg.data) config_error("subsampling noise needs a logistic problem");
    const json& sched = require_key(root, "config", "schedule");
    check_keys(sched, "schedule", {"lambda", "beta", "mode"});
    SampleSchedule s;
    s.lambda = require_key(sched, "schedule", "lambda").get<double>();
    s.beta = require_key(sched, "schedule", "beta").get<double>();
    const std::string mode = require_key(sched, "schedule", "mode").get<std::string>();
    if (mode == "iid") {
      s.mode = ScheduleMode::iid;
    } else if (mode == "without_replacement") {
      s.mode = ScheduleMode::without_replacement;
      s.cap_M = cfg.data->count();
    } else {
      config_error("schedule.mode must be iid|without_replacement");
    }
    s.validate();
    cfg.schedule = s;
  } else if (root.contains("schedule")) {
    config_error("schedule given but noise.kind does not subsample");
  }

  const json& kmax_key = require_key(solver, "solver", "k_max");
  if (kmax_key.is_string()) {
    if (kmax_key.get<std::string>() != "auto") config_error("solver.k_max must be an int or \"auto\"");
    if (!cfg.schedule || !cfg.data) config_error("solver.k_max=auto needs a subsampling schedule");
    const double M = cfg.data->count();
    cfg.k_max = static_cast<int>(std::ceil(std::log(M * M) / std::log(1.0 / cfg.schedule->beta)));
  } else {
    cfg.k_max = kmax_key.get<int>();
  }
  if (cfg.k_max < 1) config_error("solver.k_max must be >= 1");

  const json& x0_key = require_key(solver, "solver", "x0");
  if (x0_key.is_string()) {
    if (x0_key.get<std::string>() != "zero") config_error("solver.x0 must be \"zero\" or an array");
    cfg.x0 = VectorXd::Zero(cfg.spec.dimension);
  } else {
    cfg.x0 = parse_vector(x0_key, "solver.x0");
    if (cfg.x0.size() != cfg.spec.dimension) config_error("solver.x0 has wrong length");
  }

  if (need_montecarlo) {
    const json& mc = require_key(root, "config", "montecarlo");
    check_keys(mc, "montecarlo",
               {"replicates", "master_seed", "parallelism", "epsilon_grid", "j_range"});
    cfg.replicates = require_key(mc, "montecarlo", "replicates").get<int>();
    cfg.master_seed = require_key(mc, "montecarlo", "master_seed").get<std::uint64_t>();
    if (mc.contains("parallelism")) cfg.parallelism = mc["parallelism"].get<int>();
    if (mc.contains("epsilon_grid")) {
      for (double v : parse_vector(mc["epsilon_grid"], "montecarlo.epsilon_grid")) {
        cfg.epsilon_grid.push_back(v);
      }
    }
    if (mc.contains("j_range")) {
      const json& jr = mc["j_range"];
      if (!jr.is_array() || jr.size() != 2) config_error("montecarlo.j_range must be [lo, hi]");
      cfg.j_lo = jr[0].get<int>();
      cfg.j_hi = jr[1].get<int>();
    }
  }

  if (root.contains("output")) {
    check_keys(root["output"], "output", {"dir"});
    if (root["output"].contains("dir")) cfg.out_dir = root["output"]["dir"].get<std::string>();
  }
  return cfg;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const json& echo) {
  const std::string dump = echo.dump();
  return hash_hex(fnv1a64(dump.data(), dump.size()));
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) config_error("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) config_error("write failed for " + path.string());
}

json base_manifest(const std::string& command, const LoadedConfig& cfg) {
  json m;
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = cfg.echo;
  m["config_hash"] = config_hash(cfg.echo);
  m["master_seed"] = cfg.master_seed;
  json derived;
  derived["dimension"] = cfg.spec.dimension;
  derived["L"] = cfg.spec.lipschitz;
  derived["ridge_mu"] = cfg.spec.ridge_mu;
  derived["tau"] = cfg.spec.error_bound_tau;
  derived["k_max"] = cfg.k_max;
  m["derived"] = derived;
  return m;
}

int cmd_gen_data(int M, int n, std::uint64_t seed, const std::string& out_path) {
  const FiniteSumData data = generate_logistic_dataset(M, n, seed);
  std::ostringstream buf;
  write_dataset_csv(buf, data);
  write_file(out_path, buf.str());
  const std::string s = buf.str();
  const std::string hash = hash_hex(fnv1a64(s.data(), s.size()));
  json manifest;
  manifest["version"] = kVersion;
  manifest["command"] = "gen-data";
  manifest["M"] = M;
  manifest["n"] = n;
  manifest["seed"] = seed;
  manifest["content_hash"] = hash;
  write_file(out_path + ".manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << out_path << " rows=" << M << " hash=" << hash << "\n";
  return kExitOk;
}

int cmd_solve(const LoadedConfig& cfg, std::uint64_t seed, const fs::path& out_dir) {
  const RateConstants rc = rate_constants(cfg.spec.lipschitz, cfg.spec.error_bound_tau);
  const FiniteSumData* data = cfg.data ? &*cfg.data : nullptr;
  const OptimalValue opt = optimal_value_oracle(cfg.spec, data, cfg.x0);

  ErrorModel model = cfg.error_model;
  model.rng_seed = seed;
  RunOptions opts;
  opts.store_x = false;
  opts.x_star = nullptr;
  const SampleSchedule* sched = cfg.schedule ? &*cfg.schedule : nullptr;
  const Trajectory traj = run(cfg.spec, data, cfg.x0, model, sched, cfg.k_max, rc, opt.h_star, opts);

  const double tol = 1e-9 * std::max(1.0, traj.pi0());
  long violations = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (double s : check_pathwise_bound(traj)) {
    worst = std::min(worst, s);
    if (s < -tol) ++violations;
  }
  long decrease_violations = 0;
  for (bool ok : check_sufficient_decrease(traj)) {
    if (!ok) ++decrease_violations;
  }

  fs::create_directories(out_dir);
  {
    std::ostringstream buf;
    write_trajectory_csv_header(buf);
    write_trajectory_csv_rows(buf, traj, 0);
    write_file(out_dir / "trajectory.csv", buf.str());
  }
  json summary = base_manifest("solve", cfg);
  summary["master_seed"] = seed;
  summary["rho"] = rc.rho;
  summary["theta"] = rc.theta;
  summary["h_star"] = opt.h_star;
  summary["pi0"] = traj.pi0();
  summary["final_pi"] = traj.records.back().pi;
  summary["final_m"] = traj.records.size() >= 2 ? traj.records[traj.records.size() - 2].m : 0;
  summary["pathwise_violations"] = violations;
  summary["pathwise_worst_slack"] = worst;
  summary["max_pathwise_violation"] = std::max(0.0, -worst);
  summary["sufficient_decrease_violations"] = decrease_violations;
  write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  std::cout << "solve: final pi=" << format_double(traj.records.back().pi)
            << " pathwise_violations=" << violations << " outputs in " << out_dir.string() << "\n";
  return kExitOk;
}

// Hypothesis constants calibrated from a deterministic subset of replicates:
// lambda_a scales the variance decay, lambda_b the per-coordinate tail decay.
struct Calibration {
  double lambda_a = 0.0, beta_a = 0.0;
  double lambda_b = 0.0, beta_b = 0.0;
  double sup_S = 0.0, sup_diam_sq = 0.0;
  int replicates_used = 0;
};

Calibration calibrate(const LoadedConfig& cfg, const ResolvedProblem& resolved) {
  Calibration cal;
  if (cfg.error_model.kind == ErrorKind::none) {
    // zero error satisfies every decay hypothesis; any positive scale works
    cal.lambda_a = cal.lambda_b = 1.0;
    cal.beta_a = cal.beta_b = 0.5;
    return cal;
  }
  if (cfg.error_model.kind == ErrorKind::gaussian) {
    const int n = cfg.spec.dimension;
    const double s2 = cfg.error_model.sigma * cfg.error_model.sigma;
    cal.beta_a = cal.beta_b = resolved.constants.rho;
    const double decay = std::pow(resolved.constants.rho, cfg.k_max);
    cal.lambda_a = n * s2 / decay;
    cal.lambda_b = 2.0 * s2 / decay;
    return cal;
  }
  if (!cfg.schedule) return cal;
  ExperimentConfig probe;
  probe.spec = cfg.spec;
  probe.data = cfg.data;
  probe.x0 = cfg.x0;
  probe.error_model = cfg.error_model;
  probe.schedule = cfg.schedule;
  probe.k_max = cfg.k_max;
  probe.replicates = std::min(cfg.replicates, 16);
  probe.master_seed = cfg.master_seed;
  probe.parallelism = cfg.parallelism;
  probe.store_x = true;
  ExperimentResult sample = run_experiment(probe);
  for (const auto& traj : sample.trajectories) {
    for (const auto& rec : traj.records) {
      cal.sup_S = std::max(cal.sup_S, population_variance(cfg.spec, *cfg.data, rec.x));
      const VectorXd d = population_diameter(cfg.spec, *cfg.data, rec.x);
      cal.sup_diam_sq = std::max(cal.sup_diam_sq, d.maxCoeff() * d.maxCoeff());
    }
  }
  cal.replicates_used = probe.replicates;
  cal.beta_a = cal.beta_b = cfg.schedule->beta;
  cal.lambda_a = cfg.schedule->lambda * cal.sup_S;
  cal.lambda_b = cfg.schedule->lambda * cal.sup_diam_sq / 2.0;
  return cal;
}

int cmd_montecarlo(const LoadedConfig& cfg, const fs::path& out_dir) {
  ExperimentConfig ex;
  ex.spec = cfg.spec;
  ex.data = cfg.data;
  ex.x0 = cfg.x0;
  ex.error_model = cfg.error_model;
  ex.schedule = cfg.schedule;
  ex.k_max = cfg.k_max;
  ex.replicates = cfg.replicates;
  ex.master_seed = cfg.master_seed;
  ex.parallelism = cfg.parallelism;
  ex.epsilon_grid = cfg.epsilon_grid;
  ex.j_lo = cfg.j_lo;
  ex.j_hi = cfg.j_hi;
  ExperimentResult result = run_experiment(ex);
  if (result.trajectories.empty()) {
    throw numeric_error("all replicates failed", -1);
  }
  const RateConstants& rc = result.resolved.constants;

  std::vector<double> eps_grid = cfg.epsilon_grid;
  if (eps_grid.empty()) {
    double max_dev = 0.0;
    for (const auto& traj : result.trajectories) {
      double rho_k = 1.0;
      for (const auto& rec : traj.records) {
        max_dev = std::max(max_dev, rec.pi - rho_k * traj.pi0());
        rho_k *= rc.rho;
      }
    }
    if (max_dev <= 0.0) max_dev = 1.0;
    for (int i = 0; i < 20; ++i) {
      eps_grid.push_back(2.0 * max_dev * std::pow(10.0, -3.0 * (19 - i) / 19.0));
    }
  }

  const Calibration cal = calibrate(cfg, result.resolved);
  TailBoundAttachment attach;
  attach.n = cfg.spec.dimension;
  if (cal.lambda_b > 0.0) attach.main_lambda_beta = {cal.lambda_b, cal.beta_b};
  if (cfg.error_model.kind == ErrorKind::gaussian) {
    attach.gaussian_sigma = cfg.error_model.sigma;
  }

  std::vector<int> k_set;
  for (int k = 1; k <= cfg.k_max; ++k) k_set.push_back(k);

  fs::create_directories(out_dir);
  {
    std::ostringstream warn, buf;
    write_quantiles_csv(buf, quantile_series(result.trajectories, cfg.j_lo, cfg.j_hi, &warn));
    write_file(out_dir / "quantiles.csv", buf.str());
    if (!warn.str().empty()) std::cerr << warn.str();
  }
  {
    std::ostringstream buf;
    write_tails_csv(buf, empirical_tail(result.trajectories, rc, eps_grid, k_set, attach));
    write_file(out_dir / "tails.csv", buf.str());
  }
  if (cal.lambda_a > 0.0) {
    std::ostringstream buf;
    write_expectation_csv(buf, expectation_check(result.trajectories, cal.lambda_a, cal.beta_a, rc));
    write_file(out_dir / "expectation.csv", buf.str());
  }

  json manifest = base_manifest("montecarlo", cfg);
  manifest["parallelism"] = cfg.parallelism;
  manifest["replicates"] = cfg.replicates;
  manifest["failures"] = json::array();
  for (const auto& [r, msg] : result.failures) {
    manifest["failures"].push_back({{"replicate", r}, {"message", msg}});
  }
  manifest["derived"]["rho"] = rc.rho;
  manifest["derived"]["theta"] = rc.theta;
  manifest["derived"]["h_star"] = result.resolved.h_star;
  manifest["derived"]["pi0"] = result.trajectories.front().pi0();
  json calib;
  calib["hyp_a_lambda"] = cal.lambda_a;
  calib["hyp_a_beta"] = cal.beta_a;
  calib["hyp_b_lambda"] = cal.lambda_b;
  calib["hyp_b_beta"] = cal.beta_b;
  calib["sup_population_variance"] = cal.sup_S;
  calib["sup_diameter_sq"] = cal.sup_diam_sq;
  calib["replicates_used"] = cal.replicates_used;
  manifest["calibration"] = calib;
  manifest["epsilon_grid"] = eps_grid;
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");

  std::cout << "montecarlo: " << result.trajectories.size() << " replicates, "
            << result.failures.size() << " failures, outputs in " << out_dir.string() << "\n";
  return kExitOk;
}

struct BoundCurve {
  std::string name;   // legend label
  std::string color;
  double width = 1.0;
  std::vector<std::pair<int, double>> points;  // (k, epsilon)
};

// Minimal static line rendering of the bound fan: k on the x axis, log10 of
// the deviation level on the y axis, fixed 800x560 canvas.
std::string render_bounds_svg(const std::vector<BoundCurve>& curves, int k_min, int k_max) {
  double y_lo = 1e300, y_hi = -1e300;
  for (const auto& c : curves) {
    for (const auto& [k, eps] : c.points) {
      if (eps > 0.0) {
        y_lo = std::min(y_lo, std::log10(eps));
        y_hi = std::max(y_hi, std::log10(eps));
      }
    }
  }
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  const double px_l = 70, px_r = 780, px_t = 20, px_b = 520;
  auto sx = [&](double k) { return px_l + (k - k_min) / std::max(1.0, double(k_max - k_min)) * (px_r - px_l); };
  auto sy = [&](double eps) {
    return px_b - (std::log10(eps) - y_lo) / (y_hi - y_lo) * (px_b - px_t);
  };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"560\" "
         "viewBox=\"0 0 800 560\">\n"
      << "<rect width=\"800\" height=\"560\" fill=\"white\"/>\n"
      << "<line x1=\"70\" y1=\"520\" x2=\"780\" y2=\"520\" stroke=\"black\"/>\n"
      << "<line x1=\"70\" y1=\"20\" x2=\"70\" y2=\"520\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double k = k_min + (k_max - k_min) * t / 4.0;
    svg << "<text x=\"" << sx(k) << "\" y=\"538\" font-size=\"12\" "
           "text-anchor=\"middle\">" << static_cast<int>(k) << "</text>\n";
    const double ly = y_lo + (y_hi - y_lo) * t / 4.0;
    svg << "<text x=\"62\" y=\"" << (px_b - (ly - y_lo) / (y_hi - y_lo) * (px_b - px_t) + 4)
        << "\" font-size=\"12\" text-anchor=\"end\">1e" << static_cast<int>(std::round(ly))
        << "</text>\n";
  }
  svg << "<text x=\"425\" y=\"556\" font-size=\"13\" text-anchor=\"middle\">iteration k"
         "</text>\n"
      << "<text x=\"16\" y=\"270\" font-size=\"13\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 16 270)\">deviation level</text>\n";
  for (const auto& c : curves) {
    svg << "<polyline fill=\"none\" stroke=\"" << c.color << "\" stroke-width=\"" << c.width
        << "\" points=\"";
    for (const auto& [k, eps] : c.points) {
      if (eps > 0.0) svg << sx(k) << "," << sy(eps) << " ";
    }
    svg << "\"><title>" << c.name << "</title></polyline>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

int cmd_bounds(int M, double beta, std::optional<double> rho, double L_flag, double tau_flag,
               bool have_L_tau, double lambda, int n, int k_min, int k_max,
               const std::string& probabilities, bool svg, const fs::path& out_dir) {
  RateConstants rc;
  if (have_L_tau) {
    rc = rate_constants(L_flag, tau_flag);
  } else {
    rc = rate_constants_from_rho(rho.value_or(0.9));
  }
  if (k_max <= 0) {
    k_max = static_cast<int>(
        std::ceil(std::log(static_cast<double>(M) * M) / std::log(1.0 / beta)));
  }
  if (k_min < 1 || k_min > k_max) config_error("need 1 <= k-min <= k-max");

  std::vector<double> probs;
  {
    std::stringstream ss(probabilities);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) probs.push_back(std::stod(tok));
    }
  }
  if (probs.empty()) config_error("no probabilities given");
  for (double p : probs) {
    if (!(p > 0.0 && p <= 1.0)) config_error("probabilities must lie in (0,1]");
  }

  std::vector<BoundCurve> curves(probs.size() + 2);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    curves[i] = {"main_tail p=" + format_double(probs[i]), "steelblue", 1.0, {}};
  }
  curves[probs.size()] = {"expectation", "black", 2.5, {}};
  curves[probs.size() + 1] = {"deterministic", "firebrick", 2.5, {}};

  std::ostringstream buf;
  buf << "k,epsilon,bound_name,value\n";
  for (int k = k_min; k <= k_max; ++k) {
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const double eps = invert_main_bound(probs[i], k, lambda, beta, n, rc);
      buf << k << "," << format_double(eps) << ",main_tail," << format_double(probs[i]) << "\n";
      curves[i].points.push_back({k, eps});
    }
    const double expectation = expectation_rate_bound(lambda, beta, rc, k, false);
    buf << k << "," << format_double(expectation) << ",expectation,\n";
    buf << k << "," << format_double(expectation) << ",deterministic,\n";
    curves[probs.size()].points.push_back({k, expectation});
    curves[probs.size() + 1].points.push_back({k, expectation});
  }
  fs::create_directories(out_dir);
  write_file(out_dir / "bounds.csv", buf.str());
  if (svg) {
    write_file(out_dir / "bounds.svg", render_bounds_svg(curves, k_min, k_max));
  }

  json manifest;
  manifest["version"] = kVersion;
  manifest["command"] = "bounds";
  manifest["M"] = M;
  manifest["beta"] = beta;
  manifest["rho"] = rc.rho;
  manifest["theta"] = rc.theta;
  manifest["lambda"] = lambda;
  manifest["n"] = n;
  manifest["k_min"] = k_min;
  manifest["k_max"] = k_max;
  manifest["probabilities"] = probs;
  write_file(out_dir / "bounds_manifest.json", manifest.dump(2) + "\n");
  std::cout << "bounds: wrote " << (out_dir / "bounds.csv").string() << " for k in [" << k_min
            << "," << k_max << "]\n";
  return kExitOk;
}

int cmd_verify(const std::string& suite_name, const std::string& grid, bool negative_control) {
  VerifySuite suite;
  if (suite_name == "lemmas") {
    suite = VerifySuite::lemmas;
  } else if (suite_name == "bounds") {
    suite = VerifySuite::bounds;
  } else if (suite_name == "sampling") {
    suite = VerifySuite::sampling;
  } else if (suite_name == "all") {
    suite = VerifySuite::all;
  } else {
    config_error("suite must be lemmas|bounds|sampling|all");
  }
  VerifyOptions opts;
  opts.negate_qpochhammer = negative_control;
  if (grid == "coarse") {
    opts.coarse = true;
  } else if (grid != "fine") {
    config_error("grid must be coarse|fine");
  }
  const std::vector<CheckResult> results = run_verification(suite, opts);
  print_verification_report(std::cout, results);
  const long violations = count_violations(results);
  if (violations > 0) {
    std::cerr << "verification failed: " << violations << " violations\n";
    return kExitVerifyFailed;
  }
  std::cout << "verification passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inexact proximal-gradient solver with verified tail bounds"};
  app.require_subcommand(1);

  std::string config_path, out_flag;
  std::uint64_t seed_flag = 0;
  bool seed_given = false;
  int parallelism_flag = 0;

  auto add_global = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--out", out_flag, "output directory");
    sub->add_option_function<std::uint64_t>(
           "--seed", [&](std::uint64_t v) { seed_flag = v; seed_given = true; },
           "master seed override");
    sub->add_option("--parallelism", parallelism_flag, "replicate thread count override");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic logistic dataset CSV");
  int gd_M = 0, gd_n = 0;
  std::uint64_t gd_seed = 0;
  std::string gd_out;
  gen->add_option("--M", gd_M, "number of rows")->required()->check(CLI::PositiveNumber);
  gen->add_option("--n", gd_n, "feature dimension")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gd_seed, "dataset seed")->required();
  gen->add_option("--out", gd_out, "output CSV path")->required();

  auto* solve = app.add_subcommand("solve", "run one trajectory with monitors");
  add_global(solve);

  auto* mc = app.add_subcommand("montecarlo", "replicate the experiment and aggregate");
  add_global(mc);

  auto* bounds = app.add_subcommand("bounds", "emit bound-fan CSV data");
  int b_M = 300, b_n = 1, b_kmin = 1, b_kmax = 0;
  double b_beta = 0.9, b_lambda = 1.0, b_L = 1.0, b_tau = 1.0;
  std::optional<double> b_rho;
  std::string b_probs = "1e-10,1e-20,1e-30,1e-40,1e-50,1e-60,1e-70,1e-80,1e-90,1e-100";
  bounds->add_option("--M", b_M, "population size setting the default k range");
  bounds->add_option("--beta", b_beta, "schedule decay rate");
  auto* rho_opt = bounds->add_option_function<double>(
      "--rho", [&](double v) { b_rho = v; }, "contraction factor, direct");
  auto* L_opt = bounds->add_option("--L", b_L, "Lipschitz constant (with --tau)");
  auto* tau_opt = bounds->add_option("--tau", b_tau, "error-bound constant (with --L)");
  L_opt->needs(tau_opt);
  tau_opt->needs(L_opt);
  rho_opt->excludes(L_opt);
  bounds->add_option("--lambda", b_lambda, "error scale");
  bounds->add_option("--n", b_n, "dimension");
  bounds->add_option("--k-min", b_kmin, "first iteration");
  bounds->add_option("--k-max", b_kmax, "last iteration (0 = from M and beta)");
  bounds->add_option("--probabilities", b_probs, "comma-separated tail probabilities");
  bool b_svg = false;
  bounds->add_flag("--svg", b_svg, "also write a static SVG rendering");
  bounds->add_option("--out", out_flag, "output directory");

  auto* verify = app.add_subcommand("verify", "run the inequality verification suites");
  std::string v_suite = "all", v_grid = "fine";
  bool v_negative = false;
  verify->add_option("--suite", v_suite, "lemmas|bounds|sampling|all");
  verify->add_option("--grid", v_grid, "coarse|fine");
  verify->add_flag("--negative-control", v_negative,
                   "flip one inequality to confirm violations are caught");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(gd_M, gd_n, gd_seed, gd_out);
    }
    if (solve->parsed()) {
      if (config_path.empty()) config_error("solve needs --config");
      LoadedConfig cfg = load_config(config_path, false);
      const fs::path out_dir = !out_flag.empty()      ? fs::path(out_flag)
                               : !cfg.out_dir.empty() ? fs::path(cfg.out_dir)
                                                      : fs::path("out");
      return cmd_solve(cfg, seed_given ? seed_flag : 0, out_dir);
    }
    if (mc->parsed()) {
      if (config_path.empty()) config_error("montecarlo needs --config");
      LoadedConfig cfg = load_config(config_path, true);
      if (seed_given) cfg.master_seed = seed_flag;
      if (parallelism_flag > 0) cfg.parallelism = parallelism_flag;
      const fs::path out_dir = !out_flag.empty()      ? fs::path(out_flag)
                               : !cfg.out_dir.empty() ? fs::path(cfg.out_dir)
                                                      : fs::path("out");
      return cmd_montecarlo(cfg, out_dir);
    }
    if (bounds->parsed()) {
      const fs::path out_dir = out_flag.empty() ? fs::path("out") : fs::path(out_flag);
      return cmd_bounds(b_M, b_beta, b_rho, b_L, b_tau, L_opt->count() > 0, b_lambda, b_n, b_kmin,
                        b_kmax, b_probs, b_svg, out_dir);
    }
    if (verify->parsed()) {
      return cmd_verify(v_suite, v_grid, v_negative);
    }
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: config parse: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error";
    if (e.iteration() >= 0) std::cerr << " at iteration " << e.iteration();
    std::cerr << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
