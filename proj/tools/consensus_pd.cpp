// Command-line driver: solve | certify | validate | compare, all reading the
// same JSON experiment config. Exit codes: 0 success, 1 invalid input or a
// failed check, 2 iteration budget exhausted, 3 numeric overflow.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "consensuspd/algorithm.hpp"
#include "consensuspd/analysis.hpp"
#include "consensuspd/config.hpp"
#include "consensuspd/errors.hpp"
#include "consensuspd/io.hpp"
#include "consensuspd/network.hpp"
#include "consensuspd/problem.hpp"

namespace {

using namespace consensuspd;
namespace fs = std::filesystem;

enum class Command { kSolve, kCertify, kValidate, kCompare };

struct Overrides {
  std::optional<std::string> gamma;  // numeric string or "auto"
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

void apply_overrides(ExperimentConfig& cfg, const Overrides& ov) {
  if (ov.gamma) {
    if (*ov.gamma == "auto") {
      cfg.gamma_auto = true;
    } else {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(*ov.gamma, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != ov.gamma->size() || !(v > 0))
        throw ConfigError("--gamma must be a positive number or 'auto', got '" +
                          *ov.gamma + "'");
      cfg.gamma_auto = false;
      cfg.gamma = v;
    }
  }
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.out_dir) cfg.out_dir = *ov.out_dir;
}

struct ResolvedGamma {
  double gamma = 0;
  bool was_auto = false;
  std::optional<ConstantsLedger> ledger;  // present when certifiable at gamma
};

// 'auto' means half the certified stepsize bound, which needs the init box.
// An explicit stepsize gets a ledger attached opportunistically (for the
// Lyapunov columns) when the box is present and the stepsize is certifiable.
ResolvedGamma resolve_gamma(const ExperimentConfig& cfg,
                            const ConstrainedProblem& pb, const Network& net,
                            const KktPoint& kkt) {
  ResolvedGamma out;
  if (cfg.gamma_auto) {
    if (!cfg.box)
      throw ConfigError(
          "gamma = \"auto\" needs 'init.box': the automatic stepsize is half "
          "the certified bound, which is computed over the initialization "
          "box");
    auto [g, ledger] = auto_gamma(pb, net, kkt, *cfg.box);
    out.gamma = g;
    out.was_auto = true;
    out.ledger = std::move(ledger);
    return out;
  }
  out.gamma = cfg.gamma;
  if (cfg.box) {
    try {
      ConstantsLedger L = assemble_ledger(pb, net, kkt, *cfg.box, cfg.gamma);
      if (cfg.gamma < L.gammabar0)
        out.ledger = std::move(L);
      else
        log_info("stepsize " + format_double(cfg.gamma) +
                 " is not certifiable (bound " + format_double(L.gammabar0) +
                 "); Lyapunov columns will be empty");
    } catch (const std::exception& e) {
      log_info(std::string("certificate ledger unavailable: ") + e.what());
    }
  }
  return out;
}

std::string join_path(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

int exit_code_for(const TrajectoryRecord& rec) {
  return rec.stop_reason == "max_iter" ? 2 : 0;
}

int run_solve(const ExperimentConfig& cfg, std::ostream& out) {
  const ConstrainedProblem pb = build_problem(cfg);
  const Network net = build_network(cfg);
  const KktPoint kkt = solve_kkt_oracle(pb);
  const ResolvedGamma rg = resolve_gamma(cfg, pb, net, kkt);
  const OptimalEquilibrium eq =
      compute_optimal_equilibrium(pb, net, kkt, rg.gamma);

  RunOptions opts;
  opts.max_iter = cfg.max_iter;
  opts.stop_tol = cfg.stop_tol;
  opts.eq = &eq;
  opts.ledger = rg.ledger ? &*rg.ledger : nullptr;
  const TrajectoryRecord rec =
      run(pb, net, rg.gamma, initial_state(cfg, pb), opts);

  const RateFit fit = fit_log_dist(rec.rows);
  atomic_write_file(join_path(cfg.out_dir, "trajectory.csv"),
                    trajectory_csv(rec));
  atomic_write_file(
      join_path(cfg.out_dir, "summary.json"),
      summary_json(rec, fit, rg.gamma, rg.was_auto, cfg.seed).dump(2) + "\n");
  out << "solve: stop=" << rec.stop_reason << " iterations=" << rec.iterations
      << " final_dist=" << format_double(rec.final_dist)
      << " gamma=" << format_double(rg.gamma) << " -> " << cfg.out_dir << "/\n";
  return exit_code_for(rec);
}

int run_certify(const ExperimentConfig& cfg, std::ostream& out) {
  if (!cfg.box)
    throw ConfigError(
        "'init.box' is required for certification (the constants are "
        "computed over the initialization box)");
  const ConstrainedProblem pb = build_problem(cfg);
  const Network net = build_network(cfg);
  const KktPoint kkt = solve_kkt_oracle(pb);

  double gamma = 0;
  ConstantsLedger L;
  if (cfg.gamma_auto) {
    std::tie(gamma, L) = auto_gamma(pb, net, kkt, *cfg.box);
  } else {
    gamma = cfg.gamma;
    L = assemble_ledger(pb, net, kkt, *cfg.box, gamma);
  }
  const RateCertificate cert = rate_certificate(L, gamma);  // refuses bad gamma

  atomic_write_file(join_path(cfg.out_dir, "certificate.json"),
                    certificate_json(L, {cert}).dump(2) + "\n");
  out << "certify: gamma=" << format_double(gamma)
      << " gammabar0=" << format_double(L.gammabar0)
      << " omega=" << format_double(cert.omega) << " -> " << cfg.out_dir
      << "/certificate.json\n";
  return 0;
}

int run_compare(const ExperimentConfig& cfg, std::ostream& out) {
  const ConstrainedProblem pb = build_problem(cfg);
  const Network net = build_network(cfg);
  const KktPoint kkt = solve_kkt_oracle(pb);
  const ResolvedGamma rg = resolve_gamma(cfg, pb, net, kkt);
  const OptimalEquilibrium eq =
      compute_optimal_equilibrium(pb, net, kkt, rg.gamma);
  const AlgorithmState init = initial_state(cfg, pb);

  RunOptions opts;
  opts.max_iter = cfg.max_iter;
  opts.stop_tol = cfg.stop_tol;
  opts.eq = &eq;
  const TrajectoryRecord rec = run(pb, net, rg.gamma, init, opts);

  // Centralized baseline from the matched initial pair (mean of x0, lambda0).
  double theta = init.x.mean();
  VectorXd lam = init.lambda;
  std::string csv = "t, dist_distributed, dist_centralized\n";
  for (const auto& row : rec.rows) {
    const double dth = theta - eq.theta_star;
    const double dist_c =
        std::sqrt(pb.n * dth * dth + (lam - eq.lambda_star).squaredNorm());
    csv += std::to_string(row.t);
    csv += ',';
    csv += format_double(row.dist);
    csv += ',';
    csv += format_double(dist_c);
    csv += '\n';
    std::tie(theta, lam) = step_centralized(pb, theta, lam, rg.gamma);
  }
  atomic_write_file(join_path(cfg.out_dir, "compare.csv"), csv);
  const RateFit fit = fit_log_dist(rec.rows);
  atomic_write_file(
      join_path(cfg.out_dir, "summary.json"),
      summary_json(rec, fit, rg.gamma, rg.was_auto, cfg.seed).dump(2) + "\n");
  out << "compare: stop=" << rec.stop_reason
      << " iterations=" << rec.iterations << " -> " << cfg.out_dir
      << "/compare.csv\n";
  return exit_code_for(rec);
}

int run_validate(const ExperimentConfig& cfg, bool corrupt,
                 std::ostream& out) {
  const ConstrainedProblem pb = build_problem(cfg);
  const Network net = build_network(cfg);
  const KktPoint kkt = solve_kkt_oracle(pb);
  const ResolvedGamma rg = resolve_gamma(cfg, pb, net, kkt);
  const OptimalEquilibrium eq =
      compute_optimal_equilibrium(pb, net, kkt, rg.gamma);
  const long n = pb.n;

  bool all_ok = true;
  const auto report = [&](const char* name, bool ok,
                          const std::string& detail) {
    out << (ok ? "[ok] " : "[FAIL] ") << name << ": " << detail << "\n";
    if (!ok) all_ok = false;
  };
  const auto skip = [&](const char* name, const std::string& why) {
    out << "[skip] " << name << ": " << why << "\n";
  };
  // A probe that throws is a failed probe, not a crashed run.
  const auto probe = [&](const char* name, auto&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      report(name, false, e.what());
    }
  };

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> sym(-3.0, 3.0);
  std::uniform_real_distribution<double> pos(0.0, 3.0);
  const auto random_state = [&] {
    AlgorithmState s;
    s.x = VectorXd::NullaryExpr(n, [&](Eigen::Index) { return sym(rng); });
    s.z = VectorXd::NullaryExpr(n, [&](Eigen::Index) { return sym(rng); });
    s.lambda =
        VectorXd::NullaryExpr(pb.m, [&](Eigen::Index) { return pos(rng); });
    return s;
  };

  probe("conservation", [&] {
    AlgorithmState s = initial_state(cfg, pb);
    // If the conserved quantity starts at zero, a sign fault in the z-update
    // is invisible; shift the start so the check has teeth.
    if (std::abs(s.z.sum()) < 1e-12) s.z.array() += 1.0 / n;
    const double zsum0 = s.z.sum();
    double worst = 0;
    for (int t = 0; t < 1000; ++t) {
      s = step_distributed(pb, net, s, rg.gamma, corrupt);
      worst = std::max(worst, std::abs(s.z.sum() - zsum0));
    }
    const double tol = 1e-9 * (1 + std::abs(zsum0));
    report("conservation", worst <= tol,
           "max |1'z - 1'z0| = " + format_double(worst) + " over 1000 steps " +
               "(tol " + format_double(tol) + ")");
  });

  probe("fixed-point", [&] {
    AlgorithmState star;
    star.x = VectorXd::Constant(n, eq.theta_star);
    star.z = eq.z_e(net.S, 0.7);
    star.lambda = eq.lambda_star;
    const AlgorithmState next =
        step_distributed(pb, net, star, rg.gamma, corrupt);
    const double resid = std::max(
        {(next.x - star.x).cwiseAbs().maxCoeff(),
         (next.z - star.z).cwiseAbs().maxCoeff(),
         pb.m > 0 ? (next.lambda - star.lambda).cwiseAbs().maxCoeff() : 0.0});
    report("fixed-point", resid <= 1e-12,
           "one-step residual at the equilibrium = " + format_double(resid) +
               " (tol 1e-12)");
  });

  probe("commutation", [&] {
    double worst = 0;
    for (int k = 0; k < 1000; ++k) {
      const AlgorithmState s = random_state();
      const CoreState via_core = step_core(pb, net, to_core(net, s), rg.gamma);
      const CoreState via_full =
          to_core(net, step_distributed(pb, net, s, rg.gamma, corrupt));
      double diff = std::abs(via_core.x_m - via_full.x_m);
      if (n > 1) {
        diff = std::max(diff,
                        (via_core.x_perp - via_full.x_perp).cwiseAbs().maxCoeff());
        diff = std::max(diff,
                        (via_core.z_perp - via_full.z_perp).cwiseAbs().maxCoeff());
      }
      diff = std::max(diff,
                      (via_core.lambda - via_full.lambda).cwiseAbs().maxCoeff());
      worst = std::max(worst, diff);
    }
    report("commutation", worst <= 1e-12,
           "max |split-then-step - step-then-split| = " + format_double(worst) +
               " over 1000 random states (tol 1e-12)");
  });

  probe("perturbation-reconstruction", [&] {
    double worst = 0;
    for (int k = 0; k < 1000; ++k) {
      const AlgorithmState s = random_state();
      const CoreState core = to_core(net, s);
      const PerturbationSignals sig = perturbation_signals(pb, net, core, eq);
      const VectorXd consensual = VectorXd::Constant(n, core.x_m);
      const VectorXd phi_x = lagrangian_gradient(pb, s.x, s.lambda);
      const VectorXd phi_c = lagrangian_gradient(pb, consensual, s.lambda);
      const VectorXd phi_star = lagrangian_gradient(
          pb, VectorXd::Constant(n, eq.theta_star), eq.lambda_star);
      const VectorXd g_x = constraint_values(pb, s.x);
      const VectorXd g_c = constraint_values(pb, consensual);
      worst = std::max(worst, std::abs(phi_c.sum() - sig.w - phi_x.sum()));
      worst = std::max(worst, (g_c + sig.d - g_x).cwiseAbs().maxCoeff());
      worst = std::max(worst, (phi_star - sig.v - phi_x).cwiseAbs().maxCoeff());
    }
    report("perturbation-reconstruction", worst <= 1e-12,
           "max reconstruction residual = " + format_double(worst) +
               " over 1000 random states (tol 1e-12)");
  });

  probe("distance-sandwich", [&] {
    double worst = 0;  // signed violation; <= 0 means the sandwich holds
    for (int k = 0; k < 1000; ++k) {
      const AlgorithmState s = random_state();
      const CoreState core = to_core(net, s);
      double tuple = (core.x_m - eq.theta_star) * (core.x_m - eq.theta_star);
      tuple += core.x_perp.squaredNorm();
      tuple += (core.z_perp - eq.z_perp_star).squaredNorm();
      tuple += (core.lambda - eq.lambda_star).squaredNorm();
      tuple = std::sqrt(tuple);
      const double d = distance_to_optimal_set(s, eq, net);
      const double slack = 1e-12 * (1 + tuple);
      worst = std::max(worst, tuple - d - slack);
      worst = std::max(worst, d - std::sqrt(double(n)) * tuple - slack);
    }
    report("distance-sandwich", worst <= 0,
           "max signed violation of tuple <= dist <= sqrt(n)*tuple over 1000 "
           "random states = " +
               format_double(worst));
  });

  if (n == 1) {
    skip("quadratic-form-sandwich", "n = 1 has no consensus-error block");
  } else {
    probe("quadratic-form-sandwich", [&] {
      double worst = 0;
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (int k = 0; k < 1000; ++k) {
        VectorXd xi = VectorXd::NullaryExpr(
            2 * (n - 1), [&](Eigen::Index) { return u(rng); });
        const double q = xi.dot(net.P * xi);
        const double nn = xi.squaredNorm();
        const double slack = 1e-9 * (1 + nn);
        worst = std::max(worst, net.c_l * nn - q - slack);
        worst = std::max(worst, q - net.c_u * nn - slack);
      }
      report("quadratic-form-sandwich", worst <= 0,
             "max signed violation of c_l|xi|^2 <= xi'P xi <= c_u|xi|^2 over "
             "1000 samples = " +
                 format_double(worst));
    });
  }

  if (!cfg.box) {
    skip("candidate-function-sandwich",
         "needs 'init.box' (the sandwich constants come from the certificate "
         "ledger)");
  } else {
    probe("candidate-function-sandwich", [&] {
      // The 1/2..3/2 sandwich is a property of certified stepsizes; test it
      // at the automatic one regardless of the stepsize the run would use.
      const auto [g_cert, L] = auto_gamma(pb, net, kkt, *cfg.box);
      double worst = 0;
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::uniform_real_distribution<double> radius(0.0, L.kappa);
      for (int k = 0; k < 1000; ++k) {
        VectorXd dir = VectorXd::NullaryExpr(
            1 + pb.m, [&](Eigen::Index) { return gauss(rng); });
        const double len = dir.norm();
        if (len < 1e-12) continue;
        dir *= radius(rng) / len;
        const double x_m = eq.theta_star + dir(0);
        const VectorXd lam = eq.lambda_star + dir.tail(pb.m);
        const double nn = dir.squaredNorm();
        const double v = V_opt_value(pb, g_cert, L.beta, x_m, lam,
                                     eq.theta_star, eq.lambda_star);
        const double slack = 1e-9 * (1 + nn);
        worst = std::max(worst, 0.5 * nn - v - slack);
        worst = std::max(worst, v - 1.5 * nn - slack);
      }
      report("candidate-function-sandwich", worst <= 0,
             "max signed violation of |e|^2/2 <= V_opt <= 3|e|^2/2 on the "
             "certified ball = " +
                 format_double(worst));
    });
  }

  if (n != 1) {
    skip("centralized-reduction", "needs n = 1");
  } else {
    probe("centralized-reduction", [&] {
      AlgorithmState s = initial_state(cfg, pb);
      double theta = s.x(0);
      VectorXd lam = s.lambda;
      double worst = 0;
      for (int t = 0; t < 1000; ++t) {
        s = step_distributed(pb, net, s, rg.gamma, corrupt);
        std::tie(theta, lam) = step_centralized(pb, theta, lam, rg.gamma);
        const double scale =
            1 + std::abs(theta) + (pb.m > 0 ? lam.cwiseAbs().maxCoeff() : 0.0);
        double diff = std::abs(s.x(0) - theta);
        if (pb.m > 0)
          diff = std::max(diff, (s.lambda - lam).cwiseAbs().maxCoeff());
        worst = std::max(worst, diff / scale);
      }
      report("centralized-reduction", worst <= 1e-15,
             "max relative single-agent vs centralized deviation = " +
                 format_double(worst) + " over 1000 steps (tol 1e-15)");
    });
  }

  if (!cfg.box) {
    skip("descent-and-envelope",
         "needs 'init.box' (certified descent is a property of the box)");
  } else {
    probe("descent-and-envelope", [&] {
      auto [g_cert, L] = auto_gamma(pb, net, kkt, *cfg.box);
      const OptimalEquilibrium eq_cert =
          compute_optimal_equilibrium(pb, net, kkt, g_cert);
      const RateCertificate cert = rate_certificate(L, g_cert);
      AlgorithmState s0;
      s0.x = cfg.box->x_hi;
      s0.z = cfg.box->z_hi;
      s0.lambda = cfg.box->lam_hi;
      RunOptions opts;
      opts.max_iter = 2000;
      opts.stop_tol = 0.0;  // run the full horizon
      opts.eq = &eq_cert;
      opts.ledger = &L;
      opts.corrupt_z_update = corrupt;
      const TrajectoryRecord rec = run(pb, net, g_cert, s0, opts);
      const DescentReport rep = monitor_descent(rec, L, cert);
      report("descent-and-envelope",
             rep.descent_violations == 0 && rep.envelope_violations == 0,
             std::to_string(rep.descent_violations) + " descent and " +
                 std::to_string(rep.envelope_violations) +
                 " envelope violations over " +
                 std::to_string(rep.steps_checked) + " steps (" +
                 std::to_string(rep.in_level_set) +
                 " rows in the certified level set, gamma = " +
                 format_double(g_cert) + ")");
    });
  }

  out << (all_ok ? "validate: all checks passed\n"
                 : "validate: at least one check FAILED\n");
  return all_ok ? 0 : 1;
}

int run_job(Command cmd, const std::string& config_path, const Overrides& ov,
            bool batch_mode, bool corrupt, std::ostream& out,
            std::ostream& err) {
  try {
    ExperimentConfig cfg = parse_config_file(config_path);
    apply_overrides(cfg, ov);
    if (batch_mode) {
      const std::string base = ov.out_dir ? *ov.out_dir : cfg.out_dir;
      cfg.out_dir =
          (fs::path(base) / fs::path(config_path).stem()).string();
    }
    switch (cmd) {
      case Command::kSolve:
        return run_solve(cfg, out);
      case Command::kCertify:
        return run_certify(cfg, out);
      case Command::kValidate:
        return run_validate(cfg, corrupt, out);
      case Command::kCompare:
        return run_compare(cfg, out);
    }
    return 1;
  } catch (const NumericOverflowError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

std::vector<std::string> split_batch(const std::string& list) {
  std::vector<std::string> paths;
  std::string item;
  std::istringstream in(list);
  while (std::getline(in, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a == std::string::npos)
      throw ConfigError("--batch contains an empty entry");
    paths.push_back(item.substr(a, b - a + 1));
  }
  if (paths.empty()) throw ConfigError("--batch needs at least one config");
  return paths;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed primal-dual consensus optimization driver"};
  app.require_subcommand(1);

  std::string config_path, gamma_str, out_dir, batch_list;
  std::uint64_t seed = 0;
  bool corrupt = false;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)");
    sub->add_option("--gamma", gamma_str, "stepsize: a number or 'auto'");
    sub->add_option("--seed", seed, "seed override (decides sampled probes)");
    sub->add_option("--out", out_dir, "output directory override");
    sub->add_option("--batch", batch_list,
                    "comma-separated config list run in parallel worker "
                    "threads; each writes under <out>/<config-stem>/");
  };
  CLI::App* solve = app.add_subcommand("solve", "run the distributed method");
  CLI::App* certify =
      app.add_subcommand("certify", "emit the constants ledger and rate");
  CLI::App* validate =
      app.add_subcommand("validate", "run the invariant probe suite");
  CLI::App* compare =
      app.add_subcommand("compare", "distributed vs centralized trajectories");
  for (CLI::App* sub : {solve, certify, validate, compare}) add_common(sub);
  validate->add_flag("--corrupt-z-update", corrupt,
                     "negate the z-update (fault injection; the conservation "
                     "check must then fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const CLI::App* sub = app.get_subcommands().front();
  Command cmd = Command::kSolve;
  if (sub == certify) cmd = Command::kCertify;
  if (sub == validate) cmd = Command::kValidate;
  if (sub == compare) cmd = Command::kCompare;

  Overrides ov;
  if (sub->count("--gamma")) ov.gamma = gamma_str;
  if (sub->count("--seed")) ov.seed = seed;
  if (sub->count("--out")) ov.out_dir = out_dir;

  try {
    if (sub->count("--batch")) {
      if (sub->count("--config"))
        throw ConfigError("--config and --batch are mutually exclusive");
      const std::vector<std::string> paths = split_batch(batch_list);
      std::vector<std::ostringstream> logs(paths.size());
      std::vector<int> codes(paths.size(), 0);
      std::vector<std::thread> workers;
      workers.reserve(paths.size());
      for (std::size_t i = 0; i < paths.size(); ++i)
        workers.emplace_back([&, i] {
          codes[i] =
              run_job(cmd, paths[i], ov, true, corrupt, logs[i], logs[i]);
        });
      for (auto& w : workers) w.join();
      int worst = 0;
      for (std::size_t i = 0; i < paths.size(); ++i) {
        std::cout << "== " << paths[i] << " (exit " << codes[i] << ") ==\n"
                  << logs[i].str();
        worst = std::max(worst, codes[i]);
      }
      return worst;
    }
    if (!sub->count("--config"))
      throw ConfigError("--config (or --batch) is required");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return run_job(cmd, config_path, ov, false, corrupt, std::cout, std::cerr);
}
