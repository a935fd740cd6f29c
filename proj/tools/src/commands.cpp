#include "riskmm_cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "riskmm/verify_suite.hpp"
#include "riskmm_cli/config_io.hpp"
#include "riskmm_cli/csv.hpp"
#include "riskmm_cli/svg.hpp"

namespace riskmm::cli {

namespace {

namespace fs = std::filesystem;

std::string out_path(const CommonOptions& options, const std::string& name) {
  fs::create_directories(options.outdir);
  return (fs::path(options.outdir) / name).string();
}

void run_indexed(int jobs, int max_threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(max_threads, jobs));
  if (workers == 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

struct RunOutcome {
  ClosedLoopResult result;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
};

RunOutcome run_one_seed(const CorridorConfig& config, std::uint64_t seed) {
  RunOutcome out;
  out.seed = seed;
  try {
    CorridorProblem problem(config);
    const MMConfig mm = build_mm_config(config);
    std::mt19937_64 rng(seed);
    const ClosedLoopSetup setup = build_closed_loop_setup(config, rng);
    out.result = run_closed_loop(setup, problem.ocp, mm, rng);
    for (const SolverReport& r : out.result.trace.reports) {
      if (r.status == MMStatus::InnerSolverFailure) {
        out.failed = true;
        out.error = "inner solver failure during step";
      }
    }
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

struct Quartiles {
  double q1 = 0, median = 0, q3 = 0;
};

Quartiles quartiles_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto quantile = [&](double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double pos = q * (static_cast<double>(v.size()) - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    if (i + 1 >= v.size()) return v.back();
    return v[i] * (1 - frac) + v[i + 1] * frac;
  };
  return {quantile(0.25), quantile(0.5), quantile(0.75)};
}

void write_trace_csv(const std::string& path, const ClosedLoopResult& run, bool timing) {
  CsvWriter csv("step,p_x,p_y,v_x,v_y,p_x_h,p_y_h,one,u_x,u_y,sampled_mode,solve_ms");
  for (std::size_t t = 0; t < run.trace.inputs.size(); ++t) {
    const Eigen::VectorXd& x = run.trace.states[t];
    std::vector<std::string> row;
    row.push_back(std::to_string(t));
    for (int i = 0; i < x.size(); ++i) row.push_back(format_double(x[i]));
    row.push_back(format_double(run.trace.inputs[t][0]));
    row.push_back(format_double(run.trace.inputs[t][1]));
    row.push_back(std::to_string(run.trace.modes[t]));
    row.push_back(format_double(timing ? run.trace.solve_ms[t] : 0.0));
    csv.add_row(row);
  }
  csv.write(path);
}

}  // namespace

int thread_cap() {
  if (const char* env = std::getenv("RISKMM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v <= 1024) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

CorridorConfig resolve_config(const CommonOptions& options) {
  CorridorConfig config =
      options.config_path.has_value() ? load_config(*options.config_path) : CorridorConfig{};
  config = apply_overrides(config, options.overrides);
  config.validate();
  return config;
}

int cmd_solve(const CommonOptions& options) {
  CorridorConfig config;
  try {
    config = resolve_config(options);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  int exit_code = kExitOk;
  CsvWriter csv("m,loss,optimality_error,inner_iters,wall_ms");
  try {
    CorridorProblem problem(config);
    const MMConfig mm = build_mm_config(config);
    const Eigen::VectorXd x_t = corridor_solve_state(config);

    std::vector<Eigen::VectorXd> init(static_cast<std::size_t>(problem.tree.node_count()));
    for (const TreeNode& n : problem.tree.nodes()) {
      if (!n.children.empty()) init[static_cast<std::size_t>(n.id)] = Eigen::Vector2d::Zero();
    }

    const auto [traj, report] =
        solve_ocp(parse_formulation(config.formulation), x_t, problem.ocp, mm, init);
    (void)traj;
    for (const MMIterationRecord& it : report.iterations) {
      csv.add_row({std::to_string(it.m), format_double(it.true_loss),
                   format_double(it.optimality_error), std::to_string(it.inner_iterations),
                   format_double(config.timing ? it.wall_ms : 0.0)});
    }
    std::cout << "status: "
              << (report.status == MMStatus::Converged           ? "converged"
                  : report.status == MMStatus::MaxIterations     ? "max-iterations"
                  : report.status == MMStatus::Stalled           ? "stalled"
                                                                 : "inner-solver-failure")
              << "  final_loss: " << format_double(report.final_loss)
              << "  optimality_error: " << format_double(report.final_optimality_error) << "  ("
              << report.termination_reason << ")\n";
    if (report.status == MMStatus::InnerSolverFailure) exit_code = kExitSolverFailure;
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    exit_code = kExitSolverFailure;
  }
  csv.write(out_path(options, "solve.csv"));
  return exit_code;
}

int cmd_simulate(const CommonOptions& options) {
  CorridorConfig config;
  try {
    config = resolve_config(options);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  std::vector<RunOutcome> runs(static_cast<std::size_t>(config.repeats));
  run_indexed(config.repeats, thread_cap(), [&](int i) {
    runs[static_cast<std::size_t>(i)] =
        run_one_seed(config, config.seed + static_cast<std::uint64_t>(i));
  });

  int exit_code = kExitOk;
  CsvWriter metrics("seed,avte,min_distance,collisions");
  for (const RunOutcome& run : runs) {
    if (run.failed) {
      std::cerr << "seed " << run.seed << ": " << run.error << "\n";
      exit_code = kExitSolverFailure;
      continue;
    }
    if (!run.result.metrics.defined) continue;
    metrics.add_row({std::to_string(run.seed), format_double(run.result.metrics.avte),
                     format_double(run.result.metrics.min_distance),
                     std::to_string(run.result.metrics.collision_count)});
  }
  metrics.write(out_path(options, "metrics.csv"));
  if (!runs.empty() && !runs.front().failed) {
    write_trace_csv(out_path(options, "trace.csv"), runs.front().result, config.timing);
  } else {
    CsvWriter empty("step,p_x,p_y,v_x,v_y,p_x_h,p_y_h,one,u_x,u_y,sampled_mode,solve_ms");
    empty.write(out_path(options, "trace.csv"));
  }
  return exit_code;
}

int cmd_sweep_gamma(const CommonOptions& options, const std::vector<double>& gammas,
                    const std::vector<std::string>& formulations) {
  CorridorConfig base;
  try {
    base = resolve_config(options);
    if (gammas.empty()) throw std::invalid_argument("sweep-gamma: need at least one gamma");
    for (double g : gammas) {
      if (!(g > 0)) throw std::invalid_argument("sweep-gamma: gamma values must be > 0");
    }
    for (const std::string& f : formulations) parse_formulation(f);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  struct Cell {
    std::string formulation;
    double gamma = 0;
    std::vector<RunOutcome> runs;
    bool failed = false;
  };
  std::vector<Cell> cells;
  for (const std::string& f : formulations) {
    for (double g : gammas) cells.push_back({f, g, {}, false});
  }

  struct Job {
    int cell = 0;
    std::uint64_t seed = 0;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    cells[c].runs.resize(static_cast<std::size_t>(base.repeats));
    for (int r = 0; r < base.repeats; ++r) {
      jobs.push_back({static_cast<int>(c), base.seed + static_cast<std::uint64_t>(r)});
    }
  }

  run_indexed(static_cast<int>(jobs.size()), thread_cap(), [&](int idx) {
    const Job& job = jobs[static_cast<std::size_t>(idx)];
    Cell& cell = cells[static_cast<std::size_t>(job.cell)];
    CorridorConfig config = base;
    config.formulation = cell.formulation;
    config.gamma = cell.gamma;
    cell.runs[static_cast<std::size_t>(job.seed - base.seed)] = run_one_seed(config, job.seed);
  });

  int exit_code = kExitOk;
  CsvWriter csv(
      "formulation,gamma,avte_median,avte_q1,avte_q3,min_distance_median,min_distance_q1,"
      "min_distance_q3");
  std::vector<SweepPoint> points;
  const std::vector<std::string> palette = {"#1f77b4", "#d62728", "#2ca02c",
                                            "#9467bd", "#ff7f0e", "#8c564b"};
  for (Cell& cell : cells) {
    std::vector<double> avte, dist;
    for (const RunOutcome& run : cell.runs) {
      if (run.failed) {
        std::cerr << cell.formulation << " gamma=" << cell.gamma << " seed " << run.seed << ": "
                  << run.error << "\n";
        cell.failed = true;
        exit_code = kExitSolverFailure;
        continue;
      }
      if (!run.result.metrics.defined) continue;
      avte.push_back(run.result.metrics.avte);
      dist.push_back(run.result.metrics.min_distance);
    }
    if (avte.empty()) continue;  // keep partial results for surviving cells

    const Quartiles qa = quartiles_of(avte);
    const Quartiles qd = quartiles_of(dist);
    csv.add_row({cell.formulation, format_double(cell.gamma), format_double(qa.median),
                 format_double(qa.q1), format_double(qa.q3), format_double(qd.median),
                 format_double(qd.q1), format_double(qd.q3)});

    SweepPoint p;
    const double iqr_a = qa.q3 - qa.q1;
    const double iqr_d = qd.q3 - qd.q1;
    p.x_median = qd.median;
    p.x_lo = qd.q1 - iqr_d;
    p.x_hi = qd.q3 + iqr_d;
    p.y_median = qa.median;
    p.y_lo = qa.q1 - iqr_a;
    p.y_hi = qa.q3 + iqr_a;
    std::size_t gi = 0;
    for (std::size_t k = 0; k < gammas.size(); ++k) {
      if (gammas[k] == cell.gamma) gi = k;
    }
    p.color = palette[gi % palette.size()];
    p.marker = cell.formulation == "pessimistic" ? "square" : "circle";
    p.label = cell.formulation + " gamma=" + format_double(cell.gamma);
    points.push_back(p);
  }
  csv.write(out_path(options, "sweep.csv"));

  std::ofstream svg(out_path(options, "sweep.svg"), std::ios::binary);
  svg << render_sweep_svg(points, "min distance [m]", "velocity tracking error");
  return exit_code;
}

int cmd_verify(const std::string& only_filter, const std::string& out_path_arg) {
  const verify::OracleReport report = verify::run_all_checks(only_filter);

  nlohmann::ordered_json j;
  j["checks"] = nlohmann::ordered_json::array();
  for (const verify::OracleCheck& c : report.checks) {
    nlohmann::ordered_json jc;
    jc["name"] = c.name;
    jc["max_violation"] = c.max_violation;
    jc["tolerance"] = c.tolerance;
    jc["pass"] = c.pass;
    if (!c.detail.empty()) jc["detail"] = c.detail;
    j["checks"].push_back(jc);
    std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.name
              << "  (max_violation=" << format_double(c.max_violation)
              << ", tolerance=" << format_double(c.tolerance) << ")\n";
  }
  j["all_pass"] = report.all_pass();

  std::ofstream out(out_path_arg, std::ios::binary);
  if (!out) {
    std::cerr << "cannot write " << out_path_arg << "\n";
    return kExitConfigError;
  }
  out << j.dump(2) << "\n";
  if (report.checks.empty()) {
    std::cerr << "no checks match the filter\n";
    return kExitCheckFailed;
  }
  return report.all_pass() ? kExitOk : kExitCheckFailed;
}

}  // namespace riskmm::cli
