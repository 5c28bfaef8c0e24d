#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ergotrack/closed_form.hpp"
#include "ergotrack/config.hpp"
#include "ergotrack/errors.hpp"
#include "ergotrack/experiments.hpp"

using namespace ergotrack;
using nlohmann::json;

namespace {

constexpr int kValidationFailure = 2;
constexpr int kConsistencyAlarm = 3;

json matrix_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    out.push_back(row);
  }
  return out;
}

void print_table(const std::string& title, const Matrix& m) {
  std::cerr << title << ":\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::cerr << "  ";
    for (Eigen::Index k = 0; k < m.cols(); ++k) std::cerr << std::setw(14) << std::setprecision(8) << m(i, k);
    std::cerr << '\n';
  }
}

// Validation report to stderr; true when the scenario passes.
bool check(const Scenario& sc, bool verbose) {
  const ValidationReport rep = validate_scenario(sc);
  if (verbose || !rep.pass) {
    for (const auto& line : rep.messages) std::cerr << line << '\n';
  }
  return rep.pass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ergotrack: asymptotic tracking strategies, limit costs and convergence sweeps"};
  app.require_subcommand(1);

  std::string config;
  auto* validate = app.add_subcommand("validate", "check admissibility and cost consistency of a scenario");
  validate->add_option("config", config, "scenario JSON file")->required()->check(CLI::ExistingFile);

  double eps = 0.1;
  std::size_t rep = 0;
  std::string out_file;
  auto* simulate = app.add_subcommand("simulate", "dump one controlled path as CSV");
  simulate->add_option("config", config, "scenario JSON file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--eps", eps, "epsilon in (0, 1]");
  simulate->add_option("--rep", rep, "replication index (selects the seed)");
  simulate->add_option("-o,--out", out_file, "output file (stdout if omitted)");

  auto* limit = app.add_subcommand("limit", "limit cost over [0, T] with closed form and lower bound when available");
  limit->add_option("config", config, "scenario JSON file")->required()->check(CLI::ExistingFile);

  std::string out_dir = ".";
  std::size_t threads = 0;
  bool no_limit = false;
  auto* sweep = app.add_subcommand("sweep", "epsilon sweep of renormalized costs");
  sweep->add_option("config", config, "scenario JSON file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out-dir", out_dir, "directory for <name>.csv, <name>.json and <name>.plot.dat");
  sweep->add_option("--threads", threads, "worker threads (0: scenario setting)");
  sweep->add_flag("--no-limit", no_limit, "skip the limit computation");

  auto* report = app.add_subcommand("report", "suboptimality ratio of the limit cost to the lower bound");
  report->add_option("config", config, "scenario JSON file")->required()->check(CLI::ExistingFile);

  auto* solve = app.add_subcommand("solve", "closed-form solutions, printed as JSON");
  solve->require_subcommand(1);
  std::string a_text = "1";
  std::string sd_text = "1";
  std::string d_text = "1";
  std::string q_text = "1";
  double r = 1.0;
  double k = 1.0;
  double l = 1.0;
  bool table = false;
  auto* matrix_b = solve->add_subcommand("matrix-b", "quadratic matrix equation, impulse lower bound and domain");
  matrix_b->add_option("--a", a_text, "diffusion matrix, e.g. [[1,0],[0,1]]");
  matrix_b->add_option("--sigma-d", sd_text, "deviation cost matrix");
  matrix_b->add_option("--r", r, "deviation weight");
  matrix_b->add_option("--k", k, "fixed cost weight");
  matrix_b->add_flag("--table", table, "also print matrices to stderr");
  auto* lq = solve->add_subcommand("lq", "linear-quadratic regular control");
  lq->add_option("--a", a_text, "diffusion matrix");
  lq->add_option("--d", d_text, "deviation cost matrix");
  lq->add_option("--q", q_text, "regular cost matrix");
  lq->add_option("--r", r, "deviation weight");
  lq->add_option("--l", l, "regular weight");
  lq->add_flag("--table", table, "also print matrices to stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // bad arguments or a missing config file count as configuration failures
    return code == 0 ? 0 : 2;
  }

  try {
    if (*solve) {
      const Matrix a = parse_matrix(a_text);
      if (*matrix_b) {
        const ImpulseBound b = impulse_lower_bound(a, parse_matrix(sd_text), r, k);
        json j{{"B", matrix_json(b.solution.B)},
               {"residual", b.solution.residual},
               {"trace_aB", b.solution.I_value},
               {"I", b.I},
               {"threshold", b.threshold},
               {"domain_shape", matrix_json(b.domain_shape)}};
        std::cout << j.dump(2) << '\n';
        if (table) {
          print_table("B", b.solution.B);
          print_table("domain shape", b.domain_shape);
        }
      } else {
        const LQSolution s = solve_lq(a, parse_matrix(d_text), parse_matrix(q_text), r, l);
        json j{{"G", matrix_json(s.G)},
               {"feedback_matrix", matrix_json(s.feedback_matrix)},
               {"I", s.I_value},
               {"residual", s.residual},
               {"degenerate", s.degenerate}};
        if (!s.degenerate) j["stationary_covariance"] = matrix_json(s.stationary_covariance);
        std::cout << j.dump(2) << '\n';
        if (table) {
          print_table("G", s.G);
          print_table("feedback", s.feedback_matrix);
        }
      }
      return 0;
    }

    const Scenario sc = load_scenario(config);
    if (*validate) {
      const bool ok = check(sc, true);
      std::cerr << (ok ? "scenario valid\n" : "scenario invalid\n");
      return ok ? 0 : kValidationFailure;
    }
    if (!check(sc, false)) return kValidationFailure;

    if (*simulate) {
      const ControlledPath path = simulate_single(sc, eps, rep);
      if (out_file.empty()) {
        write_path_csv(std::cout, path);
      } else {
        std::ofstream os(out_file);
        write_path_csv(os, path);
      }
      std::cerr << "steps " << path.grid.n_steps << ", jumps " << path.jumps.size() << ", reflections "
                << path.reflections.size() << ", path identity error " << path_identity_error(path) << '\n';
    } else if (*limit) {
      std::cout << limit_summary_json(scenario_limit(sc)) << '\n';
    } else if (*sweep) {
      SweepOptions opts;
      opts.compute_limit = !no_limit;
      opts.threads = threads;
      const SweepResult res = run_sweep(sc, opts);
      std::filesystem::create_directories(out_dir);
      const std::filesystem::path base = std::filesystem::path(out_dir) / sc.name;
      {
        std::ofstream os(base.string() + ".csv");
        write_sweep_csv(os, res);
      }
      {
        std::ofstream os(base.string() + ".json");
        write_sweep_json(os, res);
      }
      {
        std::ofstream os(base.string() + ".plot.dat");
        write_plot_data(os, res);
      }
      std::printf("%10s %14s %12s %14s\n", "eps", "renorm cost", "std err", "interv. rate");
      for (const auto& row : res.rows) {
        std::printf("%10.4g %14.6f %12.6f %14.6f\n", row.eps, row.mean.total, row.std_error.total,
                    row.intervention_rate);
      }
      if (opts.compute_limit) {
        const LimitSummary& s = res.limit;
        std::printf("limit (%s) %.6f +- %.2g\n", s.estimator.c_str(), s.limit.value, s.limit.std_error);
        if (s.closed_form) std::printf("closed form %.6f\n", s.closed_form->value);
        if (res.suboptimality) std::printf("suboptimality ratio %.4f\n", *res.suboptimality);
      }
      std::printf("wrote %s.{csv,json,plot.dat}\n", base.string().c_str());
    } else if (*report) {
      const SuboptimalityReport rep_ = suboptimality_report(sc);
      json j{{"limit", rep_.limit}, {"limit_error", rep_.limit_error}, {"lower_bound", rep_.lower_bound},
             {"ratio", rep_.ratio}};
      std::cout << j.dump(2) << '\n';
    }
  } catch (const ConsistencyAlarm& e) {
    std::cerr << "consistency alarm: " << e.what() << '\n';
    return kConsistencyAlarm;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
