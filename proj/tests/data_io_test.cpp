#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "test_support.hpp"

namespace dvr {
namespace {

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_libsvm(in);
}

TEST(Libsvm, ParsesTwoLineExample) {
  const Dataset ds = parse("+1 3:0.5\n-1 1:1.0\n");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.dim, 3u);
  EXPECT_EQ(ds.samples[0].label, 1.0);
  EXPECT_EQ(ds.samples[0].features, (std::vector<Feature>{{2, 0.5}}));
  EXPECT_EQ(ds.samples[1].label, -1.0);
  EXPECT_EQ(ds.samples[1].features, (std::vector<Feature>{{0, 1.0}}));
}

TEST(Libsvm, EmptyStreamIsAnError) {
  EXPECT_THROW(parse(""), DataError);
  EXPECT_THROW(parse("\n# only a comment\n\n"), DataError);
}

TEST(Libsvm, SkipsCommentsAndBlankLinesAndSortsFeatures) {
  const Dataset ds = parse("# header\n\n1 4:2 2:1 # trailing\r\n");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.dim, 4u);
  EXPECT_EQ(ds.samples[0].features, (std::vector<Feature>{{1, 1.0}, {3, 2.0}}));
}

TEST(Libsvm, RemapsZeroLabels) {
  const Dataset ds = parse("0 1:1\n1 2:1\n");
  EXPECT_EQ(ds.samples[0].label, -1.0);
  EXPECT_EQ(ds.samples[1].label, 1.0);
}

TEST(Libsvm, ReportsMalformedLinesWithLineNumber) {
  const std::vector<std::string> bad{"+1 1:0.5\n2 1:1\n", "+1 1:0.5\nx 1:1\n",
                                     "+1 0:1\n",          "+1 1:abc\n",
                                     "+1 1-2\n",          "+1 2:1 2:3\n",
                                     "0 1:1\n-1 1:1\n"};
  for (const auto& text : bad) {
    EXPECT_THROW(parse(text), DataError) << text;
  }
  try {
    parse("+1 1:0.5\n+1 1:zz\n");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Libsvm, RoundTripsThroughText) {
  const Dataset ds = synthesize(LossKind::logistic_l2, 40, 7, 11);
  std::ostringstream out;
  write_libsvm(ds, out);
  std::istringstream in(out.str());
  const Dataset back = parse_libsvm(in);
  EXPECT_EQ(back.dim, ds.dim);
  EXPECT_EQ(back.samples, ds.samples);
}

TEST(Libsvm, MissingFileIsIoError) {
  EXPECT_THROW(load_libsvm("/nonexistent/dir/file.svm"), IoError);
}

TEST(Libsvm, LoadsFromFile) {
  const auto path = test::temp_path("load.svm");
  {
    std::ofstream f(path);
    f << "+1 1:3 2:4\n-1 2:1\n";
  }
  const Dataset ds = load_libsvm(path.string());
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.dim, 2u);
  std::filesystem::remove(path);
}

TEST(Normalize, ScalesSingleSample) {
  Dataset ds;
  ds.dim = 2;
  ds.samples.push_back(test::dense_sample({3.0, 4.0}, 1.0));
  const Dataset n = normalize_features(ds);
  EXPECT_NEAR(n.samples[0].features[0].value, 0.6, 1e-15);
  EXPECT_NEAR(n.samples[0].features[1].value, 0.8, 1e-15);
}

TEST(Normalize, IdempotentAndPreservesLabels) {
  Stream rng(5);
  Dataset ds;
  ds.dim = 6;
  for (int i = 0; i < 30; ++i) {
    ds.samples.push_back(test::dense_sample(test::random_vector(rng, 6, 3.0), i % 3 ? 1.0 : -1.0));
  }
  const Dataset once = normalize_features(ds);
  const double m = max_row_norm_sq(once);
  EXPECT_NEAR(m, 1.0, 1e-12);
  const Dataset twice = normalize_features(once);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(twice.samples[i].label, ds.samples[i].label);
    for (std::size_t j = 0; j < once.samples[i].features.size(); ++j) {
      EXPECT_NEAR(twice.samples[i].features[j].value, once.samples[i].features[j].value, 1e-12);
    }
  }
}

TEST(Normalize, RejectsAllZeroData) {
  Dataset ds;
  ds.dim = 1;
  ds.samples.push_back(Sample{});
  EXPECT_THROW(normalize_features(ds), DataError);
}

void expect_valid(const Partition& p, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& set : p.assignments) {
    EXPECT_FALSE(set.empty());
    EXPECT_TRUE(std::is_sorted(set.begin(), set.end()));
    for (std::size_t i : set) {
      ASSERT_LT(i, n);
      ++seen[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(seen[i], 1) << "index " << i;
}

TEST(PartitionEqual, EvenSplit) {
  const Partition p = partition_equal(8, 4, 1);
  EXPECT_EQ(p.sizes(), (std::vector<std::size_t>{2, 2, 2, 2}));
  expect_valid(p, 8);
}

TEST(PartitionEqual, UnevenSplit) {
  const Partition p = partition_equal(10, 4, 1);
  auto sizes = p.sizes();
  std::sort(sizes.begin(), sizes.end());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 3, 3}));
  expect_valid(p, 10);
}

TEST(PartitionEqual, DeterministicPerSeed) {
  EXPECT_EQ(partition_equal(100, 3, 9), partition_equal(100, 3, 9));
  EXPECT_NE(partition_equal(100, 3, 9), partition_equal(100, 3, 10));
}

TEST(PartitionEqual, RejectsBadWorkerCounts) {
  EXPECT_THROW(partition_equal(5, 0, 1), ConfigError);
  EXPECT_THROW(partition_equal(5, 6, 1), ConfigError);
}

TEST(PartitionEqual, ExhaustiveValidity) {
  for (std::size_t n = 1; n <= 40; ++n) {
    for (std::size_t k = 1; k <= n; k += 3) expect_valid(partition_equal(n, k, n * 31 + k), n);
  }
}

TEST(PartitionFractions, UnbalancedSizes) {
  const std::vector<double> f{0.5, 0.3, 0.199, 0.001};
  EXPECT_EQ(fraction_sizes(10000, f), (std::vector<std::size_t>{5000, 3000, 1990, 10}));
  const Partition p = partition_fractions(10000, f, 3);
  EXPECT_EQ(p.sizes(), (std::vector<std::size_t>{5000, 3000, 1990, 10}));
  EXPECT_EQ(p.smallest_worker(), 3u);
  expect_valid(p, 10000);
}

TEST(PartitionFractions, SingleWorker) {
  const std::vector<double> f{1.0};
  const Partition p = partition_fractions(17, f, 3);
  ASSERT_EQ(p.worker_count(), 1u);
  EXPECT_EQ(p.assignments[0], test::iota_set(17));
}

TEST(PartitionFractions, RandomFractionsSumToN) {
  Stream rng(21);
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 1 + rng.index(6);
    std::vector<double> f(k);
    double sum = 0.0;
    for (double& v : f) sum += (v = 0.05 + rng.uniform());
    for (double& v : f) v /= sum;
    const std::size_t n = 50 + rng.index(500);
    const auto sizes = fraction_sizes(n, f);
    EXPECT_EQ(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}), n);
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_LE(std::abs(static_cast<double>(sizes[i]) - f[i] * static_cast<double>(n)), 1.0);
    }
  }
}

TEST(PartitionFractions, RejectsBadFractions) {
  EXPECT_THROW(fraction_sizes(10, std::vector<double>{0.5, 0.4}), ConfigError);
  EXPECT_THROW(fraction_sizes(10, std::vector<double>{1.2, -0.2}), ConfigError);
  EXPECT_THROW(fraction_sizes(10, std::vector<double>{0.999, 0.001}), ConfigError);
}

TEST(MakePartition, ValidatesCover) {
  EXPECT_NO_THROW(make_partition({{2, 0}, {1}}, 3));
  EXPECT_THROW(make_partition({{0, 1}, {1, 2}}, 3), ConfigError);
  EXPECT_THROW(make_partition({{0}, {1}}, 3), ConfigError);
  EXPECT_THROW(make_partition({{0, 1, 2}, {}}, 3), ConfigError);
  EXPECT_THROW(make_partition({{0, 5}}, 3), ConfigError);
  EXPECT_EQ(make_partition({{2, 0}, {1}}, 3).assignments[0], (std::vector<std::size_t>{0, 2}));
}

TEST(Synthetic, QuadraticSingleSampleMinimizer) {
  const Dataset ds = synthesize(LossKind::quadratic, 1, 2, 4);
  const LossSpec spec(LossKind::quadratic, 0.0);
  const ParamVector target = test::dense(ds.samples[0], 2);
  EXPECT_EQ(sample_gradient(spec, target, ds.samples[0]), ParamVector(2, 0.0));
}

TEST(Synthetic, DeterministicPerSeed) {
  EXPECT_EQ(synthesize(LossKind::logistic_l2, 50, 5, 3), synthesize(LossKind::logistic_l2, 50, 5, 3));
  EXPECT_NE(synthesize(LossKind::logistic_l2, 50, 5, 3), synthesize(LossKind::logistic_l2, 50, 5, 4));
}

TEST(Synthetic, LogisticIsNormalizedWithBinaryLabels) {
  const Dataset ds = synthesize(LossKind::logistic_nonconvex, 300, 10, 2);
  EXPECT_LE(max_row_norm_sq(ds), 1.0);
  EXPECT_GE(max_row_norm_sq(ds), 1.0 - 1e-12);
  for (const Sample& z : ds.samples) EXPECT_TRUE(z.label == 1.0 || z.label == -1.0);
}

TEST(Synthetic, PlantedModelPredictsWell) {
  const SyntheticData data = synthesize_with_model(LossKind::logistic_l2, 20000, 20, 8);
  std::size_t correct = 0;
  for (const Sample& z : data.dataset.samples) {
    double margin = 0.0;
    for (const Feature& f : z.features) margin += f.value * data.planted[f.index];
    correct += (margin >= 0.0) == (z.label > 0.0) ? 1 : 0;
  }
  const double acc = static_cast<double>(correct) / 20000.0;
  EXPECT_GT(acc, 0.9);
  EXPECT_LT(acc, 0.99);
}

}  // namespace
}  // namespace dvr
