#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dvr/data_io.hpp"
#include "dvr/diagnostics.hpp"
#include "dvr/error.hpp"
#include "dvr/harness.hpp"
#include "dvr/model.hpp"
#include "dvr/orchestrator.hpp"

namespace dvr::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 1, kDataError = 2, kDivergence = 3 };

namespace detail {

struct RunArgs {
  std::string data;
  std::string loss = "logistic_l2";
  std::optional<double> lambda;
  std::string algo;
  std::size_t workers = 0;
  std::size_t rounds = 0;
  std::optional<double> eta;
  std::optional<std::size_t> m;
  std::optional<double> theta;
  std::optional<double> w;
  std::optional<double> momentum;
  std::string mu;
  std::string aggregate;
  std::string output_rule;
  std::uint64_t seed = 1;
  bool sequential = false;
  std::string out;
};

struct PresetArgs {
  std::string name;
  std::string data;
  std::uint64_t seed = 1;
  std::size_t replicates = 1;
  std::optional<std::size_t> rounds;
  std::string config;
  std::string dump_config;
  std::string out;
};

struct DiagnoseArgs {
  std::string data;
  std::string loss = "logistic_l2";
  std::optional<double> lambda;
  std::size_t workers = 0;
  std::size_t probes = 200;
  std::uint64_t seed = 1;
  std::string out;
};

inline Dataset resolve_data(const std::string& text, LossKind loss, std::uint64_t seed) {
  return load_dataset(parse_data_source(text, seed), loss);
}

inline int do_run(const RunArgs& a, std::ostream& out) {
  const LossKind kind = parse_loss_kind(a.loss);
  const Dataset ds = resolve_data(a.data, kind, a.seed);
  const double lambda = a.lambda.value_or(1.0 / static_cast<double>(ds.size()));
  const LossSpec spec(kind, lambda);
  const Partition partition = partition_equal(ds, a.workers, a.seed);

  std::vector<MetricRow> rows;
  bool diverged = false;
  if (a.rounds > 0) {
    AlgorithmEntry entry{a.algo, parse_algorithm(a.algo), {}};
    auto& o = entry.overrides;
    o.eta = a.eta;
    o.m = a.m;
    o.theta = a.theta;
    o.w = a.w;
    o.momentum = a.momentum;
    if (!a.mu.empty()) o.mu = parse_mu(a.mu);
    if (!a.aggregate.empty()) o.aggregation = parse_aggregation(a.aggregate);
    if (!a.output_rule.empty()) {
      if (a.output_rule != "last" && a.output_rule != "uniform") {
        throw ConfigError("--output-rule must be last or uniform");
      }
      const bool last = a.output_rule == "last";
      o.svrg_output = last ? SvrgOutput::option_i_last : SvrgOutput::option_ii_uniform;
      o.sarah_output = last ? SarahOutput::last_iterate : SarahOutput::uniform_random;
    }
    const SmoothnessInfo smooth = smoothness_constants(spec, ds);
    RunConfig rc = resolve_run_config(entry, smooth, partition, a.rounds, a.seed);
    rc.execution = a.sequential ? Execution::sequential : Execution::concurrent;
    std::optional<double> f_star;
    if (smooth.sigma > 0.0) f_star = reference_optimum(spec, ds, partition, 1e-11).f_star;
    const Trace trace = run(spec, ds, partition, rc);
    append_rows(trace, "run", a.algo, a.seed, f_star, rows);
    diverged = trace.diverged;
    if (diverged) out << "diverged: " << trace.divergence_message << '\n';
  }
  emit_csv(rows, a.out);
  return diverged ? kDivergence : kSuccess;
}

inline int do_preset(const PresetArgs& a, std::ostream& out) {
  ExperimentConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw IoError("cannot open config '" + a.config + "'");
    cfg = parse_kv(in);
  } else {
    if (a.name.empty()) throw ConfigError("preset needs --name or --config");
    PresetOptions opts;
    opts.seed = a.seed;
    opts.replicates = a.replicates;
    opts.rounds = a.rounds;
    if (!a.data.empty()) {
      const DataSource src = parse_data_source(a.data, a.seed);
      if (src.synthetic()) {
        opts.samples = src.samples;
        opts.dim = src.dim;
      } else {
        opts.data_path = src.path;
      }
    }
    cfg = preset(a.name, opts);
  }
  if (!a.dump_config.empty()) {
    std::ofstream dump(a.dump_config, std::ios::binary | std::ios::trunc);
    if (!dump) throw IoError("cannot open '" + a.dump_config + "' for writing");
    dump << to_kv(cfg);
  }
  const std::string target = a.out.empty() ? cfg.output : a.out;
  if (target.empty()) throw ConfigError("preset needs --out (or output in the config)");
  const auto rows = run_experiment(cfg);
  emit_csv(rows, target);
  std::size_t diverged = 0;
  for (const auto& r : rows) diverged += r.diverged ? 1 : 0;
  out << cfg.name << ": " << rows.size() << " rows, " << diverged << " diverged\n";
  return kSuccess;
}

inline int do_diagnose(const DiagnoseArgs& a, std::ostream& out) {
  const LossKind kind = parse_loss_kind(a.loss);
  const Dataset ds = resolve_data(a.data, kind, a.seed);
  const LossSpec spec(kind, a.lambda.value_or(1.0 / static_cast<double>(ds.size())));
  const Partition partition = partition_equal(ds, a.workers, a.seed);
  const SmoothnessInfo smooth = smoothness_constants(spec, ds);

  std::ofstream csv(a.out, std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot open '" + a.out + "' for writing");
  using dvr::detail::format_double;
  csv << "section,worker,name,value,status\n";
  csv << "constants,all,L," << format_double(smooth.L) << ",\n";
  csv << "constants,all,sigma," << format_double(smooth.sigma) << ",\n";

  const SmoothnessEstimate full =
      estimate_c(spec, ds, partition, SmoothnessMode::full, ParamVector(ds.dim, 0.0), a.probes, a.seed);
  for (std::size_t k = 0; k < full.c.size(); ++k) {
    csv << "c_estimate," << k << ",full," << format_double(full.c[k]) << ",lower_bound\n";
  }
  if (smooth.sigma > 0.0) {
    const ReferenceSolution ref = reference_optimum(spec, ds, partition, 1e-11);
    csv << "reference,all,f_star," << format_double(ref.f_star) << ",\n";
    const SmoothnessEstimate restricted = estimate_c(spec, ds, partition, SmoothnessMode::restricted,
                                                     ref.x_star, a.probes, a.seed);
    for (std::size_t k = 0; k < restricted.c.size(); ++k) {
      csv << "c_estimate," << k << ",restricted," << format_double(restricted.c[k]) << ",lower_bound\n";
    }
    // The thresholds refer to the true c; only the sampled estimate is compared.
    const double c_r = restricted.max();
    const double c_f = full.max();
    auto threshold = [&](const char* name, double value, double c) {
      csv << "threshold,all," << name << ',' << format_double(value) << ','
          << (c < value ? "estimate_below" : "estimate_above") << '\n';
    };
    threshold("d_svrg_sigma/4", smooth.sigma / 4.0, c_r);
    threshold("d_sarah_sqrt2*sigma/4", std::sqrt(2.0) * smooth.sigma / 4.0, c_r);
    threshold("d_mig_sigma/8", smooth.sigma / 8.0, c_f);
  }
  IdentityOptions id_opts;
  id_opts.probes = a.probes;
  const IdentityReport report = verify_identities(spec, ds, partition, a.seed, id_opts);
  bool ok = true;
  for (const auto& c : report.checks) {
    csv << "identity,all," << c.name << ',' << format_double(c.worst_residual) << ','
        << (c.skipped ? "skipped" : (c.passed ? "pass" : "fail")) << '\n';
    ok = ok && (c.passed || c.skipped);
  }
  if (!csv) throw IoError("write to '" + a.out + "' failed");
  out << "identities: " << (ok ? "pass" : "fail") << '\n';
  return kSuccess;
}

inline int do_inspect(const std::string& data, std::ostream& out) {
  const DataSource src = parse_data_source(data);
  const Dataset ds = src.synthetic() ? synthesize(LossKind::logistic_l2, src.samples, src.dim, src.seed)
                                     : load_libsvm(src.path);
  std::size_t positive = 0;
  for (const Sample& z : ds.samples) positive += z.label > 0 ? 1 : 0;
  out << "N=" << ds.size() << '\n'
      << "d=" << ds.dim << '\n'
      << "positive=" << positive << '\n'
      << "negative=" << ds.size() - positive << '\n'
      << "max_row_norm_sq=" << dvr::detail::format_double(max_row_norm_sq(ds)) << '\n';
  return kSuccess;
}

}  // namespace detail

/// Entry point shared by the executable and the tests.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distributed variance-reduced optimization testbed"};
  app.require_subcommand(1);

  detail::RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Run one algorithm and write a metrics CSV");
  run_cmd->add_option("--data", run_args.data, "libsvm path or synthetic:N,d")->required();
  run_cmd->add_option("--loss", run_args.loss, "logistic_l2 | logistic_ncvx | quadratic")
      ->capture_default_str();
  run_cmd->add_option("--lambda", run_args.lambda, "Regularization weight (default 1/N)");
  run_cmd->add_option("--algo", run_args.algo, "d_svrg | d_sarah | d_mig | d_rsvrg | d_gd | d_agd")
      ->required();
  run_cmd->add_option("--workers", run_args.workers, "Number of workers")->required();
  run_cmd->add_option("--rounds", run_args.rounds, "Outer rounds T")->required();
  run_cmd->add_option("--eta", run_args.eta, "Step size (default per algorithm)");
  run_cmd->add_option("--m", run_args.m, "Inner iterations (default round(2N/n))");
  run_cmd->add_option("--theta", run_args.theta, "MiG coupling (default 1/2)");
  run_cmd->add_option("--w", run_args.w, "MiG output weight (default 1 + eta*sigma)");
  run_cmd->add_option("--momentum", run_args.momentum,
                      "D-AGD momentum (default (sqrt(kappa)-1)/(sqrt(kappa)+1))");
  run_cmd->add_option("--mu", run_args.mu, "Anchor pull per worker: worker:val,... or *:val");
  run_cmd->add_option("--aggregate", run_args.aggregate,
                      "select | average (default average for d_mig, select otherwise)");
  run_cmd->add_option("--output-rule", run_args.output_rule,
                      "Local output: last | uniform (default uniform; last for nonconvex d_sarah)");
  run_cmd->add_option("--seed", run_args.seed, "Master seed (also data and partition seed)")
      ->capture_default_str();
  run_cmd->add_flag("--sequential", run_args.sequential, "Run workers one after another");
  run_cmd->add_option("--out", run_args.out, "Output CSV path")->required();

  detail::PresetArgs preset_args;
  auto* preset_cmd = app.add_subcommand("preset", "Run an experiment preset");
  preset_cmd->add_option("--name", preset_args.name,
                         "kappa_sweep | worker_sweep | unbalanced | nonconvex");
  preset_cmd->add_option("--data", preset_args.data, "libsvm path or synthetic:N,d (default synthetic:4096,50)");
  preset_cmd->add_option("--seed", preset_args.seed, "First replicate seed")->capture_default_str();
  preset_cmd->add_option("--replicates", preset_args.replicates, "Number of seeds")
      ->capture_default_str();
  preset_cmd->add_option("--rounds", preset_args.rounds, "Outer rounds (default per preset)");
  preset_cmd->add_option("--config", preset_args.config, "Run a key-value experiment config instead");
  preset_cmd->add_option("--dump-config", preset_args.dump_config,
                         "Write the resolved key-value config to this path");
  preset_cmd->add_option("--out", preset_args.out, "Output CSV path");

  detail::DiagnoseArgs diag_args;
  auto* diag_cmd = app.add_subcommand("diagnose", "Estimate c_k and check estimator identities");
  diag_cmd->add_option("--data", diag_args.data, "libsvm path or synthetic:N,d")->required();
  diag_cmd->add_option("--loss", diag_args.loss, "Loss kind")->capture_default_str();
  diag_cmd->add_option("--lambda", diag_args.lambda, "Regularization weight (default 1/N)");
  diag_cmd->add_option("--workers", diag_args.workers, "Number of workers")->required();
  diag_cmd->add_option("--probes", diag_args.probes, "Probe count for c_k")->capture_default_str();
  diag_cmd->add_option("--seed", diag_args.seed, "Seed")->capture_default_str();
  diag_cmd->add_option("--out", diag_args.out, "Output CSV path")->required();

  std::string inspect_data;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print dataset statistics");
  inspect_cmd->add_option("--data", inspect_data, "libsvm path or synthetic:N,d")->required();

  std::vector<const char*> argv;
  argv.push_back("dvr");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kUsage;
  }

  try {
    if (run_cmd->parsed()) return detail::do_run(run_args, out);
    if (preset_cmd->parsed()) return detail::do_preset(preset_args, out);
    if (diag_cmd->parsed()) return detail::do_diagnose(diag_args, out);
    if (inspect_cmd->parsed()) return detail::do_inspect(inspect_data, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace dvr::cli
