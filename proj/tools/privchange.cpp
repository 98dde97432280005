// Copyright 2026 The privchange Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// privchange command-line front end.
//
// Exit status: 0 success, 1 usage, 2 parse, 3 model validity,
// 4 solver non-convergence.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "privchange/io.hpp"
#include "privchange/privchange.hpp"

namespace pc = privchange;
namespace io = privchange::io;

namespace {

enum Exit { kOk = 0, kUsage = 1, kParse = 2, kModel = 3, kSolver = 4 };

int exit_code(pc::ErrorKind kind) {
  switch (kind) {
    case pc::ErrorKind::kParseError:
      return kParse;
    case pc::ErrorKind::kInvalidArgument:
    case pc::ErrorKind::kLambdaNonpositive:
      return kUsage;
    case pc::ErrorKind::kNotConverged:
    case pc::ErrorKind::kInfeasible:
    case pc::ErrorKind::kUnbounded:
      return kSolver;
    default:
      return kModel;
  }
}

struct Globals {
  std::uint64_t seed = 0;
  std::string output;
  std::string format;
};

/// Writes to --output when given, otherwise standard output.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) {
        throw pc::Error(pc::ErrorKind::kInvalidArgument,
                        "cannot open output file " + path);
      }
    }
  }
  std::ostream& out() { return file_.is_open() ? file_ : std::cout; }
  bool to_file() const { return file_.is_open(); }

 private:
  std::ofstream file_;
};

std::string pick_format(const Globals& g, const char* fallback) {
  return g.format.empty() ? fallback : g.format;
}

void emit_json(Sink& sink, const io::Json& j) { sink.out() << j.dump(2) << '\n'; }

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) {
      throw pc::Error(pc::ErrorKind::kInvalidArgument,
                      std::string("bad number in ") + what + ": " + item);
    }
    out.push_back(v);
  }
  if (out.empty()) {
    throw pc::Error(pc::ErrorKind::kInvalidArgument,
                    std::string(what) + " must not be empty");
  }
  return out;
}

void check_grid(const std::vector<double>& grid, double lo, double hi,
                const char* what) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= lo && grid[i] <= hi)) {
      throw pc::Error(pc::ErrorKind::kInvalidArgument,
                      std::string(what) + " values must lie in [" +
                          io::csv_number(lo) + ", " + io::csv_number(hi) + "]");
    }
    if (i && grid[i] < grid[i - 1]) {
      throw pc::Error(pc::ErrorKind::kInvalidArgument,
                      std::string(what) + " must be sorted");
    }
  }
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

struct MetricsArgs {
  std::string scenario;
};

int run_metrics(const Globals& g, const MetricsArgs& a) {
  const pc::ChangeScenario sc = io::load_scenario(a.scenario);
  const pc::PrivacyReport rep = pc::privacy_report(sc.m0, sc.m1, sc.pi0, sc.pi1);
  Sink sink(g.output);
  if (pick_format(g, "json") == "csv") {
    io::CsvWriter csv(sink.out());
    csv.header({"i_f", "i_l", "i_l_lower", "privacy_full", "privacy_limited"});
    csv.row({rep.i_f, rep.i_l, rep.i_l_lower, rep.privacy_full,
             rep.privacy_limited});
  } else {
    emit_json(sink, io::to_json(rep));
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// synthesize
// ---------------------------------------------------------------------------

struct SolverFlags {
  std::string config;
  std::optional<int> ccp_max_iters;
  std::optional<double> ccp_tol;
  std::optional<int> inner_max_iters;
  std::optional<double> inner_tol;
  std::optional<double> epsilon_floor;
  std::optional<int> restarts;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config, "Solver configuration file (JSON)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--ccp-max-iters", ccp_max_iters)->check(CLI::PositiveNumber);
    cmd->add_option("--ccp-tol", ccp_tol)->check(CLI::PositiveNumber);
    cmd->add_option("--inner-max-iters", inner_max_iters)
        ->check(CLI::PositiveNumber);
    cmd->add_option("--inner-tol", inner_tol)->check(CLI::PositiveNumber);
    cmd->add_option("--epsilon-floor", epsilon_floor)->check(CLI::PositiveNumber);
    cmd->add_option("--restarts", restarts)->check(CLI::PositiveNumber);
  }

  pc::SynthesisConfig build(std::uint64_t seed) const {
    pc::SynthesisConfig cfg;
    if (!config.empty()) cfg = io::load_config(config);
    cfg.seed = seed;
    if (ccp_max_iters) cfg.ccp_max_iters = *ccp_max_iters;
    if (ccp_tol) cfg.ccp_tol = *ccp_tol;
    if (inner_max_iters) cfg.inner_max_iters = *inner_max_iters;
    if (inner_tol) cfg.inner_tol = *inner_tol;
    if (epsilon_floor) cfg.epsilon_floor = *epsilon_floor;
    if (restarts) cfg.restarts = *restarts;
    cfg.validate();
    return cfg;
  }
};

struct SynthArgs {
  std::string scenario;
  std::string mode = "full";
  std::string objective = "privacy";
  double rho = 0.5;
  double lambda = 1.0;
  SolverFlags solver;
};

int run_synthesize(const Globals& g, const SynthArgs& a) {
  const pc::ChangeScenario sc = io::load_scenario(a.scenario);
  const pc::SynthesisConfig cfg = a.solver.build(g.seed);
  const bool full = a.mode == "full";
  pc::SynthesisResult res;
  if (a.objective == "privacy") {
    res = full ? pc::best_privacy_full(sc.m0, sc.m1)
               : pc::best_privacy_limited(sc.m0, sc.m1, cfg);
  } else {
    res = full ? pc::tradeoff_full(sc.m0, sc.m1, a.rho, a.lambda, cfg)
               : pc::tradeoff_limited(sc.m0, sc.m1, a.rho, a.lambda, cfg);
  }
  io::Json j;
  j["mode"] = a.mode;
  j["objective_kind"] = a.objective;
  j["config"] = io::to_json(cfg);
  j["result"] = io::to_json(res);
  Sink sink(g.output);
  emit_json(sink, j);
  std::ostream& summary = sink.to_file() ? std::cout : std::cerr;
  summary << "objective " << io::csv_number(res.objective) << " rate "
          << io::csv_number(res.rate) << " value " << io::csv_number(res.value)
          << (res.converged ? "" : " (not converged)") << '\n';
  return res.converged ? kOk : kSolver;
}

// ---------------------------------------------------------------------------
// sweep-theta
// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string scenario;
  std::string grid = "0,0.25,0.5,0.75,0.9,1";
  SolverFlags solver;
};

int run_sweep_theta(const Globals& g, const SweepArgs& a) {
  const pc::ChangeScenario sc = io::load_scenario(a.scenario);
  const std::vector<double> grid = parse_list(a.grid, "--grid");
  check_grid(grid, 0.0, 1.0, "--grid");
  pc::SynthesisConfig cfg = a.solver.build(g.seed);

  struct Row {
    double theta, i_f, i_l;
    bool converged;
  };
  std::vector<Row> rows;
  for (double theta : grid) {
    pc::Mdp mixed = sc.m1;
    for (int u = 0; u < sc.m0.n_actions(); ++u) {
      mixed.P[u] = theta * sc.m0.P[u] + (1.0 - theta) * sc.m1.P[u];
    }
    const pc::SynthesisResult full = pc::best_privacy_full(sc.m0, mixed);
    pc::SynthesisResult limited = pc::best_privacy_limited(sc.m0, mixed, cfg);
    cfg.warm_start = std::make_pair(limited.pi0, limited.pi1);
    rows.push_back({theta, full.rate, limited.rate, limited.converged});
  }

  Sink sink(g.output);
  bool all_converged = true;
  if (pick_format(g, "csv") == "json") {
    io::Json arr = io::Json::array();
    for (const Row& r : rows) {
      io::Json j;
      j["theta"] = r.theta;
      j["i_f_best"] = io::number(r.i_f);
      j["i_l_best"] = io::number(r.i_l);
      j["privacy_f"] = io::number(pc::privacy_level(r.i_f));
      j["privacy_l"] = io::number(pc::privacy_level(r.i_l));
      j["converged"] = r.converged;
      arr.push_back(std::move(j));
    }
    emit_json(sink, arr);
  } else {
    io::CsvWriter csv(sink.out());
    csv.header({"theta", "i_f_best", "i_l_best", "privacy_f", "privacy_l"});
    for (const Row& r : rows) {
      csv.row({r.theta, r.i_f, r.i_l, pc::privacy_level(r.i_f),
               pc::privacy_level(r.i_l)});
    }
  }
  for (const Row& r : rows) all_converged = all_converged && r.converged;
  if (!all_converged) std::cerr << "warning: some cells did not converge\n";
  return all_converged ? kOk : kSolver;
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

struct LinearArgs {
  std::string scenario;
  std::string mode = "limited";
  std::string rho = "1";
  std::string lambda = "1";
};

int run_linear(const Globals& g, const LinearArgs& a) {
  const pc::LinearSystem sys = io::load_linear(a.scenario);
  const std::vector<double> rhos = parse_list(a.rho, "--rho");
  const std::vector<double> lambdas = parse_list(a.lambda, "--lambda");
  check_grid(rhos, 0.0, 1.0, "--rho");
  check_grid(lambdas, 0.0, pc::kInf, "--lambda");
  const bool full = a.mode == "full";
  const pc::Index m = sys.m();

  Sink sink(g.output);
  const bool json = pick_format(g, "csv") == "json";
  io::Json arr = io::Json::array();
  io::CsvWriter csv(sink.out());
  if (!json) {
    std::vector<std::string> head = {"rho", "lambda"};
    for (pc::Index i = 0; i < m; ++i) head.push_back("alpha0_" + std::to_string(i));
    for (pc::Index i = 0; i < m; ++i) head.push_back("alpha1_" + std::to_string(i));
    head.push_back("V");
    head.push_back("I");
    csv.header(head);
  }
  for (double rho : rhos) {
    for (double lambda : lambdas) {
      std::optional<pc::LinearTradeoffSolution> sol;
      try {
        sol = full ? pc::tradeoff_full_linear(sys, rho, lambda)
                   : pc::tradeoff_limited_linear(sys, rho, lambda);
      } catch (const pc::Error& e) {
        if (e.kind() != pc::ErrorKind::kLambdaNonpositive) throw;
      }
      if (json) {
        io::Json j;
        j["rho"] = rho;
        j["lambda"] = lambda;
        if (sol) {
          j["solution"] = io::to_json(*sol);
        } else {
          j["solution"] = nullptr;
          j["invalid"] = "lambda must be positive";
        }
        arr.push_back(std::move(j));
        continue;
      }
      std::vector<std::string> cells = {io::csv_number(rho),
                                        io::csv_number(lambda)};
      for (pc::Index i = 0; i < 2 * m + 2; ++i) {
        if (!sol) {
          cells.push_back("invalid");
          continue;
        }
        double v = 0.0;
        if (i < m) {
          v = sol->alpha0(i);
        } else if (i < 2 * m) {
          v = sol->alpha1(i - m);
        } else {
          v = i == 2 * m ? sol->value : sol->rate;
        }
        cells.push_back(io::csv_number(v));
      }
      csv.row_strings(cells);
    }
  }
  if (json) emit_json(sink, arr);
  return kOk;
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

struct DetectArgs {
  std::string scenario;
  std::string mode = "full";
  double threshold = 8.0;
  int runs = 1000;
  std::int64_t horizon = 5000;
  std::string raw;
};

int run_detect(const Globals& g, const DetectArgs& a) {
  const pc::ChangeScenario sc = io::load_scenario(a.scenario);
  const auto mode = a.mode == "full" ? pc::ObservationMode::kFull
                                     : pc::ObservationMode::kLimited;
  std::vector<pc::RawRun> raw_delay;
  std::vector<pc::RawRun> raw_alarm;
  const bool want_raw = !a.raw.empty();
  const pc::DelayReport delay =
      pc::estimate_delay(sc, mode, a.threshold, a.runs, a.horizon, g.seed,
                         want_raw ? &raw_delay : nullptr);
  // Separate stream family for the no-change runs.
  const pc::DelayReport alarm = pc::estimate_false_alarm(
      sc, mode, a.threshold, a.runs, a.horizon, pc::stream_seed(g.seed, ~0ULL),
      want_raw ? &raw_alarm : nullptr);

  Sink sink(g.output);
  if (pick_format(g, "json") == "csv") {
    io::CsvWriter csv(sink.out());
    csv.header({"kind", "mode", "threshold", "mean", "ci_halfwidth", "runs",
                "censored"});
    for (const pc::DelayReport* r : {&delay, &alarm}) {
      csv.row_strings({r->kind == pc::DelayReport::Kind::kDelay ? "delay"
                                                                : "false_alarm",
                       pc::to_string(r->mode), io::csv_number(r->threshold),
                       io::csv_number(r->mean), io::csv_number(r->ci_halfwidth),
                       std::to_string(r->runs), std::to_string(r->censored)});
    }
  } else {
    io::Json j;
    j["delay"] = io::to_json(delay);
    j["false_alarm"] = io::to_json(alarm);
    emit_json(sink, j);
  }
  if (want_raw) {
    std::ofstream out(a.raw, std::ios::binary);
    if (!out) {
      throw pc::Error(pc::ErrorKind::kInvalidArgument,
                      "cannot open raw output " + a.raw);
    }
    io::CsvWriter csv(out);
    csv.header({"kind", "run", "seed", "T", "nu"});
    for (const auto* runs : {&raw_delay, &raw_alarm}) {
      const char* kind = runs == &raw_delay ? "delay" : "false_alarm";
      for (const pc::RawRun& r : *runs) {
        csv.row_strings({kind, std::to_string(r.run), std::to_string(r.seed),
                         r.stopping_time ? std::to_string(*r.stopping_time)
                                         : "censored",
                         r.nu == pc::kNeverChange ? "inf" : std::to_string(r.nu)});
      }
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::int64_t horizon = 200;
  int runs = 1000;
  std::string alpha0;
  std::string alpha1;
  std::string mode = "limited";
  double rho = 1.0;
  double lambda = 1.0;
};

pc::Vector to_vector(const std::vector<double>& v, pc::Index expected,
                     const char* what) {
  if (static_cast<pc::Index>(v.size()) != expected) {
    throw pc::Error(pc::ErrorKind::kInvalidArgument,
                    std::string(what) + " needs " + std::to_string(expected) +
                        " entries");
  }
  return Eigen::Map<const pc::Vector>(v.data(), expected);
}

int run_simulate(const Globals& g, const SimulateArgs& a) {
  const std::string text = io::read_file(a.scenario);
  const bool linear = io::Document(text, a.scenario).has("A");
  Sink sink(g.output);
  const bool json = pick_format(g, "csv") == "json";
  if (linear) {
    const pc::LinearSystem sys = io::parse_linear(text, a.scenario);
    const bool stochastic = a.mode == "full";
    pc::Vector alpha0;
    pc::Vector alpha1;
    if (!a.alpha0.empty() || !a.alpha1.empty()) {
      alpha0 = to_vector(parse_list(a.alpha0.empty() ? "0" : a.alpha0, "--alpha0"),
                         sys.m(), "--alpha0");
      alpha1 = to_vector(parse_list(a.alpha1.empty() ? "0" : a.alpha1, "--alpha1"),
                         sys.m(), "--alpha1");
    } else {
      const auto sol = stochastic ? pc::tradeoff_full_linear(sys, a.rho, a.lambda)
                                  : pc::tradeoff_limited_linear(sys, a.rho, a.lambda);
      alpha0 = sol.alpha0;
      alpha1 = sol.alpha1;
    }
    const pc::LinearMomentStats st = pc::linear_moment_stats(
        sys, alpha0, alpha1, a.horizon, a.runs, g.seed, stochastic);
    if (json) {
      io::Json j;
      j["alpha0"] = io::vector_json(alpha0);
      j["alpha1"] = io::vector_json(alpha1);
      j["runs"] = st.runs;
      j["mean_xsq"] = st.mean;
      j["ci_low"] = st.ci_low;
      j["ci_high"] = st.ci_high;
      emit_json(sink, j);
    } else {
      io::CsvWriter csv(sink.out());
      csv.header({"step", "mean_xsq", "ci_low", "ci_high"});
      for (std::size_t t = 0; t < st.mean.size(); ++t) {
        csv.row({static_cast<double>(t + 1), st.mean[t], st.ci_low[t],
                 st.ci_high[t]});
      }
    }
    return kOk;
  }
  const pc::ChangeScenario sc = io::parse_scenario(text, a.scenario);
  const pc::Trajectory traj = pc::simulate(sc, a.horizon, g.seed);
  const pc::LlrStream zf = pc::llr_full(sc, traj);
  const pc::LlrStream zl = pc::llr_limited(sc, traj);
  if (json) {
    io::Json j;
    j["seed"] = traj.seed;
    j["nu"] = traj.nu;
    j["states"] = traj.states;
    j["actions"] = traj.actions;
    io::Json f = io::Json::array();
    io::Json l = io::Json::array();
    for (std::size_t i = 0; i < zf.z.size(); ++i) {
      f.push_back(io::number(zf.z[i]));
      l.push_back(io::number(zl.z[i]));
    }
    j["llr_full"] = std::move(f);
    j["llr_limited"] = std::move(l);
    emit_json(sink, j);
  } else {
    io::CsvWriter csv(sink.out());
    csv.header({"t", "state", "action", "regime", "llr_full", "llr_limited"});
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
      const auto t = static_cast<std::int64_t>(i + 1);
      csv.row_strings({std::to_string(t), std::to_string(traj.states[i]),
                       std::to_string(traj.actions[i]), t >= sc.nu ? "1" : "0",
                       io::csv_number(zf.z[i]), io::csv_number(zl.z[i])});
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy analysis and synthesis for change-point detection in "
               "controlled Markov processes"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--output,-o", g.output, "Output file (default: stdout)");
  app.add_option("--format", g.format, "Output format")
      ->check(CLI::IsMember({"json", "csv"}));

  MetricsArgs metrics;
  auto* c_metrics = app.add_subcommand("metrics", "Information rates of a scenario");
  c_metrics->add_option("scenario", metrics.scenario)->required();

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synthesize", "Privacy-optimal policies");
  c_synth->add_option("scenario", synth.scenario)->required();
  c_synth->add_option("--mode", synth.mode)
      ->check(CLI::IsMember({"full", "limited"}));
  c_synth->add_option("--objective", synth.objective)
      ->check(CLI::IsMember({"privacy", "tradeoff"}));
  c_synth->add_option("--rho", synth.rho)->check(CLI::Range(0.0, 1.0));
  c_synth->add_option("--lambda", synth.lambda)->check(CLI::NonNegativeNumber);
  synth.solver.add_to(c_synth);

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand(
      "sweep-theta", "Best privacy between M0 and theta*M0 + (1-theta)*M1");
  c_sweep->add_option("scenario", sweep.scenario)->required();
  c_sweep->add_option("--grid", sweep.grid, "Comma-separated theta values");
  sweep.solver.add_to(c_sweep);

  LinearArgs lin;
  auto* c_lin = app.add_subcommand("linear", "Closed-form linear Gaussian trade-offs");
  c_lin->add_option("scenario", lin.scenario)->required();
  c_lin->add_option("--mode", lin.mode)->check(CLI::IsMember({"full", "limited"}));
  c_lin->add_option("--rho", lin.rho, "Value or comma-separated grid");
  c_lin->add_option("--lambda", lin.lambda, "Value or comma-separated grid");

  DetectArgs det;
  auto* c_det = app.add_subcommand("detect", "Monte Carlo CUSUM delay and false alarms");
  c_det->add_option("scenario", det.scenario)->required();
  c_det->add_option("--mode", det.mode)->check(CLI::IsMember({"full", "limited"}));
  c_det->add_option("--threshold", det.threshold)->check(CLI::PositiveNumber);
  c_det->add_option("--runs", det.runs)->check(CLI::PositiveNumber);
  c_det->add_option("--horizon", det.horizon)->check(CLI::PositiveNumber);
  c_det->add_option("--raw", det.raw, "CSV file for per-run stopping times");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand(
      "simulate", "Simulate an MDP trajectory or linear-system moments");
  c_sim->add_option("scenario", sim.scenario)->required();
  c_sim->add_option("--horizon", sim.horizon)->check(CLI::PositiveNumber);
  c_sim->add_option("--runs", sim.runs)->check(CLI::Range(2, 1000000));
  c_sim->add_option("--alpha0", sim.alpha0, "Pre-change offset (linear)");
  c_sim->add_option("--alpha1", sim.alpha1, "Post-change offset (linear)");
  c_sim->add_option("--mode", sim.mode)->check(CLI::IsMember({"full", "limited"}));
  c_sim->add_option("--rho", sim.rho)->check(CLI::Range(0.0, 1.0));
  c_sim->add_option("--lambda", sim.lambda)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*c_metrics) return run_metrics(g, metrics);
    if (*c_synth) return run_synthesize(g, synth);
    if (*c_sweep) return run_sweep_theta(g, sweep);
    if (*c_lin) return run_linear(g, lin);
    if (*c_det) return run_detect(g, det);
    if (*c_sim) return run_simulate(g, sim);
  } catch (const pc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kModel;
  }
  return kUsage;
}
