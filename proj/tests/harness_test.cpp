#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "test_support.hpp"

namespace dvr {
namespace {

ExperimentConfig quadratic_gd(std::size_t rounds) {
  ExperimentConfig c;
  c.name = "quad";
  c.data = parse_data_source("synthetic:60,4", 3);
  c.loss = LossKind::quadratic;
  c.cases = {{"q", 0.0, 3}};
  c.algorithms = {{"gd", Algorithm::d_gd, {}}};
  c.rounds = rounds;
  return c;
}

TEST(DataSourceTest, ParsesSyntheticAndPaths) {
  const DataSource s = parse_data_source("synthetic:4096,50", 7);
  EXPECT_TRUE(s.synthetic());
  EXPECT_EQ(s.samples, 4096u);
  EXPECT_EQ(s.dim, 50u);
  EXPECT_EQ(s.seed, 7u);
  EXPECT_EQ(to_string(s), "synthetic:4096,50");
  EXPECT_EQ(parse_data_source("data/a9a.svm").path, "data/a9a.svm");
  for (const char* bad : {"synthetic:", "synthetic:10", "synthetic:0,3", "synthetic:5,x", ""}) {
    EXPECT_THROW(parse_data_source(bad), ConfigError) << bad;
  }
}

TEST(ResolveRunConfig, AppliesDefaultsAndOverrides) {
  const Partition p = partition_equal(100, 4, 1);
  const SmoothnessInfo s{0.26, 0.01};
  AlgorithmEntry mig{"mig", Algorithm::d_mig, {}};
  RunConfig rc = resolve_run_config(mig, s, p, 7, 3);
  EXPECT_EQ(rc.rounds, 7u);
  EXPECT_EQ(rc.master_seed, 3u);
  EXPECT_EQ(rc.aggregation, AggregationRule::average);
  auto c = std::get<MigConfig>(rc.solver);
  EXPECT_EQ(c.m, 50u);
  EXPECT_DOUBLE_EQ(c.w, 1.0 + c.eta * 0.01);

  mig.overrides.theta = 0.25;
  c = std::get<MigConfig>(resolve_run_config(mig, s, p, 1, 1).solver);
  EXPECT_DOUBLE_EQ(c.eta, 1.0 / (0.75 * 0.26));
  EXPECT_DOUBLE_EQ(c.w, 1.0 + c.eta * 0.01);

  mig.overrides.eta = 0.1;
  mig.overrides.w = 1.5;
  mig.overrides.m_factor = 2.0;
  c = std::get<MigConfig>(resolve_run_config(mig, s, p, 1, 1).solver);
  EXPECT_EQ(c.eta, 0.1);
  EXPECT_EQ(c.w, 1.5);
  EXPECT_EQ(c.m, 200u);

  AlgorithmEntry reg{"r", Algorithm::d_rsvrg, {}};
  reg.overrides.mu.smallest_worker = 0.5;
  reg.overrides.aggregation = AggregationRule::average;
  const Partition uneven = partition_fractions(100, std::vector<double>{0.6, 0.3, 0.1}, 1);
  rc = resolve_run_config(reg, s, uneven, 1, 1);
  EXPECT_EQ(rc.worker_mu, (std::vector<double>{0.0, 0.0, 0.5}));
  EXPECT_EQ(rc.aggregation, AggregationRule::average);

  AlgorithmEntry bad{"s", Algorithm::d_sarah, {}};
  bad.overrides.mu.broadcast = 0.1;
  EXPECT_THROW(resolve_run_config(bad, s, p, 1, 1), ConfigError);
}

TEST(MuAssignmentTest, ParseFormatResolve) {
  const MuAssignment mu = parse_mu("*:0.1,2:0.5,smallest:0.25");
  EXPECT_EQ(mu.broadcast, 0.1);
  EXPECT_EQ(mu.per_worker.at(2), 0.5);
  EXPECT_EQ(mu.smallest_worker, 0.25);
  EXPECT_EQ(parse_mu(format_mu(mu)), mu);
  const Partition p = partition_fractions(40, std::vector<double>{0.25, 0.25, 0.4, 0.1}, 2);
  EXPECT_EQ(mu.resolve(p), (std::vector<double>{0.1, 0.1, 0.5, 0.25}));
  EXPECT_THROW(parse_mu("0.1"), ConfigError);
  EXPECT_THROW(parse_mu("a:0.1"), ConfigError);
  EXPECT_THROW(parse_mu("9:0.1").resolve(p), ConfigError);
  EXPECT_THROW(parse_mu("0:-1").resolve(p), ConfigError);
}

TEST(RunExperiment, GradientDescentGapDecreases) {
  const auto rows = run_experiment(quadratic_gd(12));
  ASSERT_EQ(rows.size(), 13u);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    EXPECT_EQ(rows[t].round, t);
    ASSERT_TRUE(rows[t].gap);
    EXPECT_GE(*rows[t].gap, -1e-10);
    if (t > 0 && *rows[t - 1].gap > 1e-14) EXPECT_LT(*rows[t].gap, *rows[t - 1].gap);
  }
}

TEST(RunExperiment, ZeroRoundsGivesInitialRowOnly) {
  const ExperimentConfig cfg = quadratic_gd(0);
  const auto rows = run_experiment(cfg);
  ASSERT_EQ(rows.size(), 1u);
  const Dataset ds = synthesize(LossKind::quadratic, 60, 4, 3);
  const Partition p = partition_equal(ds, 3, 3);
  const LossSpec spec(LossKind::quadratic, 0.0);
  const double f0 = global_objective(spec, ds, p, ParamVector(4, 0.0));
  const double f_star = reference_optimum(spec, ds, p, 1e-11).f_star;
  EXPECT_NEAR(*rows[0].gap, f0 - f_star, 1e-12);
}

TEST(RunExperiment, EqualSeedsGiveIdenticalRows) {
  ExperimentConfig cfg = preset("kappa_sweep", {std::nullopt, 256, 5, 1, 1, 3});
  cfg.cases.resize(1);
  cfg.seeds = {4, 4};
  const auto rows = run_experiment(cfg);
  const std::size_t per_run = 4;
  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
    for (std::size_t t = 0; t < per_run; ++t) {
      const MetricRow& x = rows[a * 2 * per_run + t];
      const MetricRow& y = rows[a * 2 * per_run + per_run + t];
      EXPECT_EQ(x.gap, y.gap);
      EXPECT_EQ(x.grad_norm_sq, y.grad_norm_sq);
      EXPECT_EQ(x.algorithm, y.algorithm);
    }
  }
}

TEST(RunExperiment, ConvexPresetInitialGapIsIndependentlyCorrect) {
  const ExperimentConfig cfg = preset("worker_sweep", {std::nullopt, 300, 6, 2, 1, 1});
  const auto rows = run_experiment(cfg);
  const Dataset ds = synthesize(LossKind::logistic_l2, 300, 6, 2);
  for (const MetricRow& r : rows) {
    if (r.round != 0) continue;
    ASSERT_TRUE(r.gap);
    const std::size_t n = std::stoul(r.experiment.substr(2));
    const LossSpec spec(LossKind::logistic_l2, 1.0 / 300);
    const Partition p = partition_equal(ds, n, 2);
    const double f_star = reference_optimum(spec, ds, p, 1e-11).f_star;
    EXPECT_NEAR(*r.gap, std::log(2.0) - f_star, 1e-12) << r.experiment << " " << r.algorithm;
  }
  // Ordered by case, then algorithm, then seed, then round.
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].experiment == rows[i - 1].experiment && rows[i].algorithm == rows[i - 1].algorithm) {
      EXPECT_EQ(rows[i].round, rows[i - 1].round + 1);
    }
  }
}

TEST(RunExperiment, RejectsEmptyConfig) {
  ExperimentConfig c = quadratic_gd(1);
  c.cases.clear();
  EXPECT_THROW(run_experiment(c), ConfigError);
  c = quadratic_gd(1);
  c.algorithms.clear();
  EXPECT_THROW(run_experiment(c), ConfigError);
}

TEST(Presets, KappaSweepLambdas) {
  const ExperimentConfig c = preset("kappa_sweep");
  ASSERT_EQ(c.cases.size(), 3u);
  EXPECT_DOUBLE_EQ(c.cases[0].lambda, std::pow(4096.0, -0.5));
  EXPECT_DOUBLE_EQ(c.cases[1].lambda, std::pow(4096.0, -0.75));
  EXPECT_DOUBLE_EQ(c.cases[2].lambda, 1.0 / 4096);
  EXPECT_EQ(c.data.samples, 4096u);
  EXPECT_EQ(c.data.dim, 50u);
  EXPECT_EQ(c.algorithms.size(), 4u);
}

TEST(Presets, WorkerSweep) {
  const ExperimentConfig c = preset("worker_sweep");
  ASSERT_EQ(c.cases.size(), 3u);
  EXPECT_EQ(c.cases[0].workers, 4u);
  EXPECT_EQ(c.cases[2].workers, 16u);
}

TEST(Presets, UnbalancedRegularizesSmallestWorker) {
  PresetOptions o;
  o.samples = 10000;
  o.replicates = 3;
  const ExperimentConfig c = preset("unbalanced", o);
  EXPECT_EQ(c.partition, PartitionMode::fractions);
  EXPECT_EQ(c.fractions, (std::vector<double>{0.5, 0.3, 0.199, 0.001}));
  EXPECT_DOUBLE_EQ(c.cases[0].lambda, 1e-4);
  ASSERT_EQ(c.algorithms.size(), 2u);
  EXPECT_EQ(c.algorithms[0].algorithm, Algorithm::d_svrg);
  EXPECT_EQ(c.algorithms[1].algorithm, Algorithm::d_rsvrg);
  EXPECT_TRUE(c.algorithms[0].overrides.mu.empty());
  ASSERT_TRUE(c.algorithms[1].overrides.mu.smallest_worker);
  EXPECT_DOUBLE_EQ(*c.algorithms[1].overrides.mu.smallest_worker, 0.1 / std::sqrt(10.0));
  EXPECT_EQ(c.algorithms[0].overrides.m_factor, 2.0);
  EXPECT_EQ(c.algorithms[1].overrides.m_factor, 2.0);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(Presets, NonconvexTracksGradientOnly) {
  const ExperimentConfig c = preset("nonconvex");
  EXPECT_EQ(c.loss, LossKind::logistic_nonconvex);
  EXPECT_FALSE(c.compute_gap);
  EXPECT_EQ(c.algorithms[0].algorithm, Algorithm::d_sarah);
  EXPECT_EQ(c.algorithms[1].algorithm, Algorithm::d_gd);
  EXPECT_THROW(preset("nope"), ConfigError);
}

TEST(Presets, NonconvexRowsHaveNoGap) {
  const auto rows = run_experiment(preset("nonconvex", {std::nullopt, 200, 5, 1, 1, 2}));
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) {
    EXPECT_FALSE(r.gap);
    EXPECT_TRUE(std::isfinite(r.grad_norm_sq));
  }
}

TEST(Csv, EmptyRowsGiveHeaderOnly) {
  std::ostringstream out;
  emit_csv({}, out);
  EXPECT_EQ(out.str(), std::string(kCsvHeader) + "\n");
}

TEST(Csv, RoundTripsExactly) {
  ExperimentConfig cfg = preset("kappa_sweep", {std::nullopt, 256, 5, 1, 1, 3});
  cfg.cases.resize(1);
  auto rows = run_experiment(cfg);
  MetricRow odd;
  odd.experiment = "x";
  odd.algorithm = "y";
  odd.grad_norm_sq = std::nan("");
  odd.diverged = true;
  rows.push_back(odd);
  std::ostringstream out;
  emit_csv(rows, out);
  std::istringstream in(out.str());
  const auto back = parse_csv(in);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    EXPECT_EQ(back[i].experiment, rows[i].experiment);
    EXPECT_EQ(back[i].algorithm, rows[i].algorithm);
    EXPECT_EQ(back[i].seed, rows[i].seed);
    EXPECT_EQ(back[i].round, rows[i].round);
    EXPECT_EQ(back[i].comm_rounds, rows[i].comm_rounds);
    EXPECT_EQ(back[i].grad_evals, rows[i].grad_evals);
    EXPECT_EQ(back[i].gap, rows[i].gap);
    EXPECT_EQ(back[i].grad_norm_sq, rows[i].grad_norm_sq);
    EXPECT_EQ(back[i].diverged, rows[i].diverged);
  }
  EXPECT_TRUE(std::isnan(back.back().grad_norm_sq));
  EXPECT_FALSE(back.back().gap);
  EXPECT_TRUE(back.back().diverged);
  std::ostringstream again;
  emit_csv(back, again);
  EXPECT_EQ(again.str(), out.str());
}

TEST(Csv, DeterministicAcrossRuns) {
  const ExperimentConfig cfg = quadratic_gd(5);
  std::ostringstream a, b;
  emit_csv(run_experiment(cfg), a);
  emit_csv(run_experiment(cfg), b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Csv, RejectsBadInput) {
  std::istringstream wrong_header("a,b\n");
  EXPECT_THROW(parse_csv(wrong_header), DataError);
  std::istringstream short_line(std::string(kCsvHeader) + "\nx,y,1\n");
  EXPECT_THROW(parse_csv(short_line), DataError);
  MetricRow r;
  r.experiment = "has,comma";
  std::ostringstream out;
  EXPECT_THROW(emit_csv({r}, out), ConfigError);
  EXPECT_THROW(emit_csv({}, std::string("/nonexistent/dir/out.csv")), IoError);
}

TEST(KeyValue, PresetsRoundTrip) {
  for (const auto& name : preset_names()) {
    ExperimentConfig c = preset(name, {std::nullopt, 1000, 20, 5, 2, std::nullopt});
    c.output = "out.csv";
    std::istringstream in(to_kv(c));
    EXPECT_EQ(parse_kv(in), c) << name;
  }
}

TEST(KeyValue, ParsesHandWrittenConfig) {
  std::istringstream ok(
      "# comment\n"
      "name = mine\n"
      "data = synthetic:500,10\n"
      "data_seed = 9\n"
      "case = a 0.01 2\n"
      "algorithm = fast d_svrg eta=0.5 m=100 aggregate=average svrg_output=last mu=0:0.1\n"
      "algorithm = acc d_agd schedule=t_over_t_plus_3 momentum=0.9\n"
      "rounds = 3\n"
      "seeds = 1 2\n"
      "gap = false\n");
  const ExperimentConfig c = parse_kv(ok);
  EXPECT_EQ(c.name, "mine");
  EXPECT_EQ(c.data.seed, 9u);
  EXPECT_EQ(c.data.samples, 500u);
  ASSERT_EQ(c.algorithms.size(), 2u);
  EXPECT_EQ(c.algorithms[0].overrides.eta, 0.5);
  EXPECT_EQ(c.algorithms[0].overrides.m, 100u);
  EXPECT_EQ(c.algorithms[0].overrides.svrg_output, SvrgOutput::option_i_last);
  EXPECT_EQ(c.algorithms[1].overrides.schedule, MomentumSchedule::t_over_t_plus_3);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_FALSE(c.compute_gap);
  const auto rows = run_experiment(c);
  EXPECT_EQ(rows.size(), 2u * 2u * 4u);
}

TEST(KeyValue, RejectsUnknownKeys) {
  for (const char* text : {"data = synthetic:10,2\nbogus = 1\n", "name = x\n",
                           "data = synthetic:10,2\nalgorithm = a d_svrg foo=1\n",
                           "data = synthetic:10,2\nrounds = -1\n", "data = synthetic:10,2\nnovalue\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_kv(in), ConfigError) << text;
  }
}

}  // namespace
}  // namespace dvr
