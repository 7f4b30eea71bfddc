// psca: fit, inspect, invert and simulate R-separable covariances from the
// command line. Exit codes: 0 ok, 1 usage, 2 data or format error, 3 numerical
// failure. Diagnostics go to stderr as "psca level=... cmd=... msg=..." lines.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "psca/psca.hpp"

namespace fs = std::filesystem;
using psca::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kNumericalFailure = 3 };

struct StrictFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Global {
  bool deterministic = false;
  bool strict = false;
  bool quiet = false;
  std::string cmd = "psca";
};

Global g;

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out + "\"";
}

void log(const char* level, const std::string& msg) {
  if (g.quiet && std::string(level) == "info") return;
  std::cerr << "psca level=" << level << " cmd=" << g.cmd << " msg=" << quoted(msg) << '\n';
}

void warn_all(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) log("warn", w);
}

void fail_if_strict(bool ok, const std::string& what) {
  if (ok) return;
  log("warn", what);
  if (g.strict) throw StrictFailure(what);
}

template <class E>
E parse_enum(const std::map<std::string, E>& names, const std::string& value, const char* what) {
  auto it = names.find(value);
  if (it == names.end()) throw psca::FormatError(std::string("unknown ") + what + " '" + value + "'");
  return it->second;
}

/// Reads keys of a JSON object into existing defaults; unknown keys are errors.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw psca::FormatError(where_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw psca::FormatError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw psca::FormatError(where_ + ": unknown key '" + item.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json load_json(const std::string& path) {
  try {
    return json::parse(psca::detail::slurp(path));
  } catch (const json::exception& e) {
    throw psca::FormatError(path + ": " + e.what());
  }
}

void read_gneiting(const json& j, psca::GneitingParams& p) {
  Fields f(j, "params");
  f.get("sigma2", p.sigma2);
  f.get("a", p.a);
  f.get("b", p.b);
  f.get("alpha", p.alpha);
  f.get("beta", p.beta);
  f.get("gamma", p.gamma);
  f.get("tau", p.tau);
  f.get("domain_scale", p.domain_scale);
  f.finish();
}

void emit(const std::optional<std::string>& out, const std::string& text) {
  if (out) {
    psca::detail::spit(*out, text);
  } else {
    std::cout << text;
  }
}

psca::PrecondChoice precond_of(const std::string& s) {
  return parse_enum<psca::PrecondChoice>({{"auto", psca::PrecondChoice::kAuto},
                                          {"none", psca::PrecondChoice::kNone},
                                          {"separable", psca::PrecondChoice::kSeparable},
                                          {"stein", psca::PrecondChoice::kStein}},
                                         s, "preconditioner");
}

/// The estimate, positivized with `epsilon` when one is given.
psca::RSepOperator load_operator(const std::string& path, const std::optional<double>& epsilon,
                                 std::uint64_t seed) {
  psca::RSepOperator op = psca::read_estimate(path);
  if (!epsilon) return op;
  auto [pos, rep] = psca::positivize(op, *epsilon, 1e-10, 0, seed);
  std::ostringstream m;
  m << "positivize: lambda_min " << psca::format_double(rep.lambda_min) << ", shift "
    << psca::format_double(rep.applied_shift);
  log("info", m.str());
  fail_if_strict(rep.converged, "eigenvalue bounds did not converge");
  return pos;
}

// Subcommands ------------------------------------------------------------------

struct FitArgs {
  std::vector<std::string> inputs;
  std::string out;
  long r = 1;
  double tol = 1e-10;
  int max_iter = 1000;
  bool no_center = false;
  std::uint64_t seed = 0;
  std::string view = "auto";
  int restarts = 3;
};

int run_fit(const FitArgs& a) {
  std::vector<fs::path> paths(a.inputs.begin(), a.inputs.end());
  auto data = std::make_shared<const psca::SampleSet>(psca::read_samples(paths, !a.no_center));
  const auto policy = parse_enum<psca::ViewPolicy>(
      {{"auto", psca::ViewPolicy::kAuto}, {"data", psca::ViewPolicy::kData}, {"dense", psca::ViewPolicy::kDense}},
      a.view, "view");
  psca::FitOptions fo;
  fo.r = a.r;
  fo.tol = a.tol;
  fo.max_iter = a.max_iter;
  fo.seed = a.seed;
  fo.restarts = a.restarts;
  fo.deterministic = g.deterministic;
  const psca::ScdEstimate est = psca::fit(psca::make_view(data, policy), fo);
  warn_all(est.diagnostics.warnings);
  if (g.strict && !est.diagnostics.all_converged()) throw StrictFailure("fit did not converge");
  psca::write_estimate(est, a.out, 0.0, g.deterministic);
  if (data->centered()) psca::write_matrix(fs::path(a.out) / "mean.psca", data->mean());
  log("info", "fitted " + std::to_string(est.size()) + " components from " + std::to_string(data->size()) +
                  " samples");
  return kOk;
}

int run_scree(const std::string& estimate, const std::optional<std::string>& out) {
  const psca::LoadedEstimate le = psca::read_estimate_full(estimate);
  std::string text = "r,score\n";
  for (const auto& [r, s] : psca::scree(le.estimate)) text += std::to_string(r) + "," + psca::format_double(s) + "\n";
  emit(out, text);
  return kOk;
}

struct SolveArgs {
  std::string estimate;
  std::string input;
  std::string out;
  std::optional<std::string> report;
  std::optional<double> epsilon;
  double tol = 1e-10;
  int max_iter = 0;
  std::string precond = "auto";
  std::string stop = "residual";
  std::uint64_t seed = 0;
};

int run_apply(const SolveArgs& a) {
  const psca::RSepOperator op = load_operator(a.estimate, a.epsilon, a.seed);
  psca::write_matrix(a.out, psca::apply(op, psca::read_matrix(a.input)));
  return kOk;
}

int run_invert(const SolveArgs& a) {
  const psca::RSepOperator op = load_operator(a.estimate, a.epsilon, a.seed);
  psca::SolveOptions so;
  so.tol = a.tol;
  so.max_iter = a.max_iter;
  so.preconditioner = precond_of(a.precond);
  so.stop = parse_enum<psca::StopRule>(
      {{"residual", psca::StopRule::kResidual}, {"iterate", psca::StopRule::kIterateDistance}}, a.stop, "stop rule");
  auto [x, rep] = psca::pcg_solve(op, psca::read_matrix(a.input), so);
  const json report = {{"iterations", rep.iterations},
                       {"final_relative_residual", rep.final_relative_residual},
                       {"final_step", rep.final_step},
                       {"converged", rep.converged},
                       {"breakdown", rep.breakdown},
                       {"preconditioner", psca::to_string(rep.preconditioner_used)},
                       {"ridge", op.ridge}};
  fail_if_strict(rep.converged, "PCG stopped after " + std::to_string(rep.iterations) +
                                    " iterations without reaching the tolerance");
  psca::write_matrix(a.out, x);
  emit(a.report, report.dump(2) + "\n");
  return kOk;
}

struct PredictArgs {
  std::string estimate;
  std::string observed;
  std::string pattern;
  std::string out;
  std::optional<std::string> mean;
  bool no_positivize = false;
  double tol = 1e-10;
  int max_iter = 0;
  std::string precond = "auto";
  std::uint64_t seed = 0;
};

int run_predict(const PredictArgs& a) {
  psca::RSepOperator op = psca::read_estimate(a.estimate);
  if (!a.no_positivize) op = psca::positivize_relative(op, 1e-8, a.seed);
  psca::Matrix x = psca::read_matrix(a.observed);
  psca::Matrix mean = psca::Matrix::Zero(op.k1, op.k2);
  if (a.mean) {
    mean = psca::read_matrix(*a.mean);
    if (mean.rows() != op.k1 || mean.cols() != op.k2) throw psca::ShapeError("mean shape does not match the estimate");
  }
  if (x.rows() != op.k1 || x.cols() != op.k2) throw psca::ShapeError("observed matrix shape does not match the estimate");
  psca::SolveOptions so;
  so.tol = a.tol;
  so.max_iter = a.max_iter;
  so.preconditioner = precond_of(a.precond);
  const psca::BlupResult res = psca::blup_report(op, x - mean, psca::read_pattern(a.pattern), so);
  fail_if_strict(res.solve.converged, "PCG did not reach the tolerance for the observed block");
  psca::write_matrix(a.out, res.prediction + mean);
  return kOk;
}

struct CvArgs {
  std::vector<std::string> inputs;
  std::optional<std::string> out;
  std::string scheme = "frobenius";
  int folds = 10;
  long r_max = 3;
  std::uint64_t seed = 0;
  int patterns = 1;
  bool arbitrary = false;
  bool no_center = false;
  double tol = 1e-10;
  int max_iter = 1000;
};

int run_cv(const CvArgs& a) {
  std::vector<fs::path> paths(a.inputs.begin(), a.inputs.end());
  const psca::SampleSet data = psca::read_samples(paths, !a.no_center);
  psca::CvOptions co;
  co.r_max = a.r_max;
  co.folds = a.folds;
  co.seed = a.seed;
  co.patterns_per_sample = a.patterns;
  co.arbitrary_patterns = a.arbitrary;
  co.fit_tol = a.tol;
  co.fit_max_iter = a.max_iter;
  psca::CvCurve curve;
  if (a.scheme == "frobenius") {
    curve = psca::cv_frobenius(data, co);
  } else if (a.scheme == "prediction") {
    curve = psca::cv_prediction(data, co);
  } else {
    throw psca::InvalidArgument("unknown scheme '" + a.scheme + "'");
  }
  warn_all(curve.warnings);
  if (g.strict && !curve.warnings.empty()) throw StrictFailure("cross-validation reported warnings");
  std::string text = "r,objective,chosen\n";
  for (std::size_t i = 0; i < curve.r_values.size(); ++i) {
    text += std::to_string(curve.r_values[i]) + "," + psca::format_double(curve.objective[i]) + "," +
            (curve.r_values[i] == curve.chosen_r ? "1" : "0") + "\n";
  }
  emit(a.out, text);
  log("info", "chosen r = " + std::to_string(curve.chosen_r));
  return kOk;
}

int run_simulate(const std::string& spec_path, const std::string& out, const std::optional<std::uint64_t>& seed) {
  const json j = load_json(spec_path);
  Fields f(j, spec_path);
  std::string kind = "ortho_blocks", rule = "poly_decay", norm = "none";
  std::size_t n = 100;
  psca::RandomCovSpec spec;
  psca::GneitingParams params;
  f.get("kind", kind);
  f.get("r", spec.r);
  f.get("k1", spec.k1);
  f.get("k2", spec.k2);
  f.get("n", n);
  f.get("seed", spec.seed);
  f.get("score_rule", rule);
  f.get("scores", spec.scores);
  f.get("decay_alpha", spec.decay_alpha);
  f.get("normalization", norm);
  if (const json* p = f.sub("params")) read_gneiting(*p, params);
  f.finish();
  if (seed) spec.seed = *seed;

  fs::create_directories(out);
  std::vector<psca::Matrix> samples;
  if (kind == "gneiting") {
    const psca::DenseCov4 cov = psca::gneiting_dense(params, spec.k1, spec.grid2());
    samples = psca::DenseSampler(cov).draw(n, spec.seed);
    psca::write_cov4(fs::path(out) / "truth.psca", cov);
  } else {
    spec.kind = parse_enum<psca::RandomCovKind>(
        {{"ortho_blocks", psca::RandomCovKind::kOrthoBlocks}, {"smooth_eigen", psca::RandomCovKind::kSmoothEigen}},
        kind, "kind");
    spec.score_rule = parse_enum<psca::ScoreRule>(
        {{"explicit", psca::ScoreRule::kExplicit}, {"poly_decay", psca::ScoreRule::kPolyDecay}}, rule, "score_rule");
    spec.normalization = parse_enum<psca::ScoreNormalization>({{"none", psca::ScoreNormalization::kNone},
                                                               {"sum_one", psca::ScoreNormalization::kSumOne},
                                                               {"frobenius_one", psca::ScoreNormalization::kFrobeniusOne}},
                                                              norm, "normalization");
    const psca::ScdEstimate truth = psca::random_rsep(spec);
    samples = psca::sample_gaussian_matrices(truth, n, psca::derive_seed(spec.seed, {0x5a}));
    psca::write_estimate(truth, fs::path(out) / "truth", 0.0, g.deterministic);
  }
  psca::write_samples(out, samples);
  log("info", "wrote " + std::to_string(samples.size()) + " samples to " + out);
  return kOk;
}

psca::ExperimentReport run_study(const std::string& study, const json& cfg_json,
                                 const std::optional<std::uint64_t>& seed) {
  Fields f(cfg_json, "config");
  if (study == "gneiting") {
    psca::GneitingStudyConfig c;
    f.get("k", c.k);
    f.get("n_values", c.n_values);
    f.get("r_values", c.r_values);
    f.get("seeds", c.seeds);
    f.get("root_seed", c.root_seed);
    f.get("fit_tol", c.fit_tol);
    f.get("fit_max_iter", c.fit_max_iter);
    f.get("oracle_guard", c.oracle_guard);
    if (const json* p = f.sub("params")) read_gneiting(*p, c.params);
    f.finish();
    if (seed) c.root_seed = *seed;
    return psca::run_gneiting_study(c).report();
  }
  if (study == "decay") {
    psca::DecayStudyConfig c;
    f.get("k", c.k);
    f.get("r_true", c.r_true);
    f.get("alphas", c.alphas);
    f.get("n_values", c.n_values);
    f.get("r_fit", c.r_fit);
    f.get("seeds", c.seeds);
    f.get("root_seed", c.root_seed);
    f.get("fit_tol", c.fit_tol);
    f.get("fit_max_iter", c.fit_max_iter);
    f.finish();
    if (seed) c.root_seed = *seed;
    return psca::run_decay_study(c).report();
  }
  if (study == "inversion") {
    psca::InversionStudyConfig c;
    f.get("k_values", c.k_values);
    f.get("kappas", c.kappas);
    f.get("seeds", c.seeds);
    f.get("root_seed", c.root_seed);
    f.get("r", c.r);
    f.get("n", c.n);
    f.get("fit_tol", c.fit_tol);
    f.get("fit_max_iter", c.fit_max_iter);
    f.get("pcg_tol", c.pcg_tol);
    f.get("dominance", c.dominance);
    f.get("dominance_k", c.dominance_k);
    f.get("dominance_r", c.dominance_r);
    f.get("sigma1_grid", c.sigma1_grid);
    f.get("epsilons", c.epsilons);
    f.finish();
    if (seed) c.root_seed = *seed;
    return psca::run_inversion_study(c).report();
  }
  if (study == "cv") {
    psca::CvStudyConfig c;
    f.get("k", c.k);
    f.get("n_values", c.n_values);
    f.get("seeds", c.seeds);
    f.get("root_seed", c.root_seed);
    f.get("score_ratio", c.score_ratio);
    f.get("r_max", c.r_max);
    f.get("folds", c.folds);
    f.get("prediction", c.prediction);
    f.get("patterns_per_sample", c.patterns_per_sample);
    f.finish();
    if (seed) c.root_seed = *seed;
    return psca::run_cv_study(c).report();
  }
  throw psca::InvalidArgument("unknown study '" + study + "' (gneiting, decay, inversion, cv)");
}

int run_experiment(const std::string& study, const std::optional<std::string>& config, const std::string& out,
                   const std::optional<std::uint64_t>& seed) {
  const json cfg = config ? load_json(*config) : json::object();
  const psca::ExperimentReport rep = run_study(study, cfg, seed);
  const fs::path prefix(out);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  psca::detail::spit(prefix.string() + ".csv", rep.to_csv());
  psca::detail::spit(prefix.string() + ".json", rep.to_json().dump(2) + "\n");
  log("info", "wrote " + prefix.string() + ".csv and .json");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"psca: principal separable component analysis"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(psca::kLibraryVersion));
  app.add_flag("--deterministic", g.deterministic, "Reproducible output: fixed timestamps");
  app.add_flag("--strict", g.strict, "Treat non-convergence as failure (exit 3)");
  app.add_flag("-q,--quiet", g.quiet, "Suppress info lines");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit an R-separable estimate to samples");
  fit_cmd->add_option("inputs", fit.inputs, "Sample files, or one directory")->required();
  fit_cmd->add_option("-o,--out", fit.out, "Output directory")->required();
  fit_cmd->add_option("--r", fit.r, "Degree of separability")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--tol", fit.tol, "Power-iteration tolerance");
  fit_cmd->add_option("--max-iter", fit.max_iter, "Power-iteration sweeps per component");
  fit_cmd->add_flag("--no-center", fit.no_center, "Do not subtract the sample mean");
  fit_cmd->add_option("--seed", fit.seed, "Seed for random restarts");
  fit_cmd->add_option("--view", fit.view, "auto, data or dense")->check(CLI::IsMember({"auto", "data", "dense"}));
  fit_cmd->add_option("--restarts", fit.restarts, "Random restarts per component");

  std::string scree_in;
  std::optional<std::string> scree_out;
  auto* scree_cmd = app.add_subcommand("scree", "Print the scores of an estimate as CSV");
  scree_cmd->add_option("estimate", scree_in, "Estimate directory or manifest")->required();
  scree_cmd->add_option("-o,--out", scree_out, "Output CSV (default stdout)");

  SolveArgs inv, app_args;
  auto add_solve = [](CLI::App* cmd, SolveArgs& a, const char* input_help) {
    cmd->add_option("estimate", a.estimate, "Estimate directory or manifest")->required();
    cmd->add_option("input", a.input, input_help)->required();
    cmd->add_option("-o,--out", a.out, "Output matrix (.psca or .csv)")->required();
    cmd->add_option("--epsilon", a.epsilon, "Positivize with this epsilon first");
    cmd->add_option("--seed", a.seed, "Seed for the eigenvalue bounds");
  };
  auto* inv_cmd = app.add_subcommand("invert", "Solve C X = Y by preconditioned CG");
  add_solve(inv_cmd, inv, "Right-hand side Y");
  inv_cmd->add_option("--report", inv.report, "Solve report JSON (default stdout)");
  inv_cmd->add_option("--tol", inv.tol, "Stopping tolerance");
  inv_cmd->add_option("--max-iter", inv.max_iter, "Iteration cap (0: k1 k2)");
  inv_cmd->add_option("--precond", inv.precond, "auto, separable, stein or none")
      ->check(CLI::IsMember({"auto", "separable", "stein", "none"}));
  inv_cmd->add_option("--stop", inv.stop, "residual or iterate")->check(CLI::IsMember({"residual", "iterate"}));
  auto* apply_cmd = app.add_subcommand("apply", "Compute Y = C X");
  add_solve(apply_cmd, app_args, "Input X");

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "Fill in missing entries by BLUP");
  pred_cmd->add_option("estimate", pred.estimate, "Estimate directory or manifest")->required();
  pred_cmd->add_option("observed", pred.observed, "Observed matrix; missing entries are ignored")->required();
  pred_cmd->add_option("pattern", pred.pattern, "Pattern JSON")->required();
  pred_cmd->add_option("-o,--out", pred.out, "Completed matrix")->required();
  pred_cmd->add_option("--mean", pred.mean, "Mean matrix (fit writes mean.psca)");
  pred_cmd->add_flag("--no-positivize", pred.no_positivize, "Use the estimate as is");
  pred_cmd->add_option("--tol", pred.tol, "PCG tolerance");
  pred_cmd->add_option("--max-iter", pred.max_iter, "PCG iteration cap");
  pred_cmd->add_option("--precond", pred.precond, "auto, separable, stein or none")
      ->check(CLI::IsMember({"auto", "separable", "stein", "none"}));
  pred_cmd->add_option("--seed", pred.seed, "Seed for the eigenvalue bounds");

  CvArgs cv;
  auto* cv_cmd = app.add_subcommand("cv", "Cross-validate the degree of separability");
  cv_cmd->add_option("inputs", cv.inputs, "Sample files, or one directory")->required();
  cv_cmd->add_option("-o,--out", cv.out, "Output CSV (default stdout)");
  cv_cmd->add_option("--scheme", cv.scheme, "frobenius or prediction")
      ->check(CLI::IsMember({"frobenius", "prediction"}));
  cv_cmd->add_option("--folds", cv.folds, "Number of folds");
  cv_cmd->add_option("--r-max", cv.r_max, "Largest degree tried");
  cv_cmd->add_option("--seed", cv.seed, "Seed for folds and hold-out patterns");
  cv_cmd->add_option("--patterns", cv.patterns, "Hold-out patterns per sample (prediction)");
  cv_cmd->add_flag("--arbitrary", cv.arbitrary, "Hold out single entries instead of rows and columns");
  cv_cmd->add_flag("--no-center", cv.no_center, "Do not subtract the sample mean");
  cv_cmd->add_option("--tol", cv.tol, "Fit tolerance");
  cv_cmd->add_option("--max-iter", cv.max_iter, "Fit sweeps per component");

  std::string sim_spec, sim_out;
  std::optional<std::uint64_t> sim_seed;
  auto* sim_cmd = app.add_subcommand("simulate", "Draw Gaussian samples from a covariance spec");
  sim_cmd->add_option("spec", sim_spec, "Spec JSON")->required();
  sim_cmd->add_option("-o,--out", sim_out, "Output directory")->required();
  sim_cmd->add_option("--seed", sim_seed, "Override the spec seed");

  std::string study, exp_out;
  std::optional<std::string> exp_config;
  std::optional<std::uint64_t> exp_seed;
  auto* exp_cmd = app.add_subcommand("experiment", "Run a simulation study");
  exp_cmd->add_option("study", study, "gneiting, decay, inversion or cv")
      ->required()
      ->check(CLI::IsMember({"gneiting", "decay", "inversion", "cv"}));
  exp_cmd->add_option("--config", exp_config, "Config JSON overriding the defaults");
  exp_cmd->add_option("-o,--out", exp_out, "Output prefix; writes PREFIX.csv and PREFIX.json")->required();
  exp_cmd->add_option("--seed", exp_seed, "Override root_seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  int code = kOk;
  try {
    if (fit_cmd->parsed()) {
      g.cmd = "fit";
      code = run_fit(fit);
    } else if (scree_cmd->parsed()) {
      g.cmd = "scree";
      code = run_scree(scree_in, scree_out);
    } else if (inv_cmd->parsed()) {
      g.cmd = "invert";
      code = run_invert(inv);
    } else if (apply_cmd->parsed()) {
      g.cmd = "apply";
      code = run_apply(app_args);
    } else if (pred_cmd->parsed()) {
      g.cmd = "predict";
      code = run_predict(pred);
    } else if (cv_cmd->parsed()) {
      g.cmd = "cv";
      code = run_cv(cv);
    } else if (sim_cmd->parsed()) {
      g.cmd = "simulate";
      code = run_simulate(sim_spec, sim_out, sim_seed);
    } else if (exp_cmd->parsed()) {
      g.cmd = "experiment";
      code = run_experiment(study, exp_config, exp_out, exp_seed);
    }
  } catch (const StrictFailure& e) {
    log("error", e.what());
    return kNumericalFailure;
  } catch (const psca::NumericalError& e) {
    log("error", e.what());
    return kNumericalFailure;
  } catch (const psca::InvalidArgument& e) {
    log("error", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    log("error", e.what());
    return kDataError;
  }
  return code;
}
