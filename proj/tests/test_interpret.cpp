#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "fimfuse/errors.hpp"
#include "fimfuse/fusion.hpp"
#include "fimfuse/interpret.hpp"
#include "fimfuse/kmeans.hpp"
#include "fimfuse/loss.hpp"
#include "support.hpp"

namespace fimfuse {
namespace {

using interpret::BinaryMatrix;
using testing::random_params;
using testing::small_config;

double nonhateful_loss(const ModelParams<double>& p, const Vec<double>& r) {
  const auto out = fusion::classifier_forward(fusion::FusedInput<double>::materialized(r), p, {});
  const auto& z = out.heads[0].logits;
  const std::vector<double> logits(z.data(), z.data() + z.size());
  return train::softmax_cross_entropy(logits, 0);
}

TEST(GradientMatrix, MatchesFiniteDifferencesAtZero) {
  const int n = 4;
  auto c = small_config(FusionMode::Cross, n, 5, 3, 3, testing::schema_with_aux(2));
  c.num_preoutput_layers = 2;
  const auto p = random_params(c, 1);
  const auto d = interpret::gradient_matrix(p, 77);
  EXPECT_EQ(d.model_crc, 77u);
  ASSERT_EQ(d.values.rows(), n);
  const double h = 1e-5;
  double worst = 0.0;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      Vec<double> r = Vec<double>::Zero(n * n);
      r(a * n + b) = h;
      const double up = nonhateful_loss(p, r);
      r(a * n + b) = -h;
      const double down = nonhateful_loss(p, r);
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - d.values(a, b)) /
                                  std::max({std::abs(fd), std::abs(d.values(a, b)), 1e-8}));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(GradientMatrix, DeadNetworkGivesZero) {
  auto c = small_config(FusionMode::Cross, 3, 4, 2, 2);
  auto p = random_params(c, 2);
  for (const auto& s : p.layout().preoutput) p.weight(s).setZero();
  EXPECT_EQ(interpret::gradient_matrix(p).values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradientMatrix, DeterministicAndCrossOnly) {
  auto c = small_config(FusionMode::Cross, 5, 4, 3, 3);
  const auto p = random_params(c, 3);
  EXPECT_EQ(interpret::gradient_matrix(p).values, interpret::gradient_matrix(p).values);
  c.fusion_mode = FusionMode::Align;
  EXPECT_THROW(interpret::gradient_matrix(ModelParams<double>(c)), ModeError);
}

RowMatrix<double> one_to_hundred() {
  RowMatrix<double> m(10, 10);
  for (int i = 0; i < 100; ++i) m.data()[i] = i + 1;
  return m;
}

TEST(Binarize, OneToHundredHasFortyOnes) {
  const auto m = one_to_hundred();
  const auto b = interpret::binarize_signed_percentile(m, 20, 80);
  EXPECT_EQ(b.popcount(), 40u);
  EXPECT_FALSE(b.degenerate);
  for (int i = 0; i < 100; ++i) {
    const double v = i + 1;
    EXPECT_EQ(b.bits[static_cast<std::size_t>(i)], (v <= 20 || v >= 81) ? 1 : 0) << v;
  }
}

TEST(Binarize, ConstantMatrixIsDegenerate) {
  const RowMatrix<double> m = RowMatrix<double>::Constant(4, 6, 2.5);
  const auto b = interpret::binarize_signed_percentile(m, 20, 80);
  EXPECT_TRUE(b.degenerate);
  EXPECT_EQ(b.popcount(), 0u);
  EXPECT_EQ(b.rows, 4);
  EXPECT_EQ(b.cols, 6);
}

TEST(Binarize, SignFlipKeepsPopcount) {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    RowMatrix<double> m(9, 7);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    const RowMatrix<double> neg = -m;
    EXPECT_EQ(interpret::binarize_signed_percentile(m, 20, 80).popcount(),
              interpret::binarize_signed_percentile(neg, 20, 80).popcount());
    EXPECT_EQ(interpret::binarize_signed_percentile(m, 10, 90).popcount(),
              interpret::binarize_signed_percentile(neg, 10, 90).popcount());
  }
}

TEST(Binarize, OnesFractionOnContinuousMatrices) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const int n = 16 + static_cast<int>(rng.below(32));
    RowMatrix<double> d(n, n);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = rng.normal();
    const double total = static_cast<double>(d.size());
    const double fd = static_cast<double>(interpret::binarize_signed_percentile(d, 20, 80).popcount()) / total;
    EXPECT_GE(fd, 0.39);
    EXPECT_LE(fd, 0.41);
    Vec<double> pi(n), pt(n);
    for (int i = 0; i < n; ++i) {
      pi(i) = rng.normal();
      pt(i) = rng.normal();
    }
    const auto r = fusion::fuse_cross(pi, pt);
    const double fr = static_cast<double>(interpret::binarize_signed_percentile(r, 10, 90).popcount()) / total;
    EXPECT_GE(fr, 0.19);
    EXPECT_LE(fr, 0.21);
  }
}

TEST(Binarize, BadBandsAreConfigError) {
  const auto m = one_to_hundred();
  EXPECT_THROW(interpret::binarize_signed_percentile(m, 80, 20), ConfigError);
  EXPECT_THROW(interpret::binarize_signed_percentile(m, -1, 50), ConfigError);
  EXPECT_THROW(interpret::binarize_signed_percentile(m, 10, 101), ConfigError);
}

BinaryMatrix filled(int n, std::uint8_t v) {
  BinaryMatrix b;
  b.rows = b.cols = n;
  b.bits.assign(static_cast<std::size_t>(n * n), v);
  return b;
}

TEST(Trigger, AnnihilatorIdentityAndLoopOracle) {
  const int n = 4;
  auto c = small_config(FusionMode::Cross, n, 3, 5, 5);
  const auto p = random_params(c, 6);
  Rng rng(7);
  auto rec = testing::random_record(rng, 5, 5, c.tasks, "h");
  rec.label = 1;
  const auto pi = fusion::project<double>(fusion::to_vec<double>(rec.image_vec), p.layout().img_proj, p, {});
  const auto pt = fusion::project<double>(fusion::to_vec<double>(rec.text_vec), p.layout().txt_proj, p, {});
  const auto rbits = interpret::binarize_signed_percentile(fusion::fuse_cross(pi, pt), 10, 90);

  EXPECT_EQ(interpret::trigger_vector(rec, p, filled(n, 0)).popcount(), 0u);
  EXPECT_EQ(interpret::trigger_vector(rec, p, filled(n, 1)).bits, rbits.bits);

  BinaryMatrix mask = filled(n, 0);
  for (auto& b : mask.bits) b = static_cast<std::uint8_t>(rng.below(2));
  const auto t = interpret::trigger_vector(rec, p, mask);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      EXPECT_EQ(t.bits[static_cast<std::size_t>(a * n + b)], mask.at(a, b) && rbits.at(a, b));
  EXPECT_EQ(t.id, "h");
}

TEST(Trigger, RequiresHatefulRecordAndMatchingShape) {
  auto c = small_config(FusionMode::Cross, 3, 3, 2, 2);
  const auto p = random_params(c, 8);
  Rng rng(9);
  auto rec = testing::random_record(rng, 2, 2, c.tasks);
  rec.label = 0;
  EXPECT_THROW(interpret::trigger_vector(rec, p, filled(3, 1)), ConfigError);
  rec.label = 1;
  EXPECT_THROW(interpret::trigger_vector(rec, p, filled(4, 1)), DimensionError);
}

RowMatrix<double> rows_of(const std::vector<std::vector<double>>& v) {
  RowMatrix<double> m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v[0].size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i][j];
  return m;
}

TEST(KMeans, SeparatedBlobs) {
  std::vector<std::vector<double>> pts(5, {0.0, 0.0});
  pts.insert(pts.end(), 5, {10.0, 10.0});
  const auto r = interpret::kmeans(rows_of(pts), 2, 1);
  EXPECT_EQ(r.inertia, 0.0);
  EXPECT_TRUE(r.converged);
  for (int i = 1; i < 5; ++i) EXPECT_EQ(r.assignments[static_cast<std::size_t>(i)], r.assignments[0]);
  for (int i = 6; i < 10; ++i) EXPECT_EQ(r.assignments[static_cast<std::size_t>(i)], r.assignments[5]);
  EXPECT_NE(r.assignments[0], r.assignments[5]);
}

TEST(KMeans, DistinctPointsGiveZeroInertia) {
  Rng rng(10);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 7; ++i) pts.push_back({rng.normal(), rng.normal(), rng.normal()});
  pts.push_back(pts[2]);
  pts.push_back(pts[5]);
  const auto r = interpret::kmeans(rows_of(pts), 7, 3);
  EXPECT_EQ(r.inertia, 0.0);
  EXPECT_EQ(std::set<int>(r.assignments.begin(), r.assignments.end()).size(), 7u);
}

RowMatrix<double> random_binary(Rng& rng, int rows, int cols) {
  RowMatrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(rng.below(2));
  return m;
}

double assignment_inertia(const RowMatrix<double>& pts, const std::vector<int>& assign, int k) {
  RowMatrix<double> cent = RowMatrix<double>::Zero(k, pts.cols());
  std::vector<int> size(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    cent.row(assign[static_cast<std::size_t>(i)]) += pts.row(i);
    ++size[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
  }
  for (int c = 0; c < k; ++c)
    if (size[static_cast<std::size_t>(c)]) cent.row(c) /= size[static_cast<std::size_t>(c)];
  double total = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    total += (pts.row(i) - cent.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
  return total;
}

TEST(KMeans, MonotoneAndBeatsRandomAssignment) {
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    const auto pts = random_binary(rng, 100, 20);
    const auto r = interpret::kmeans(pts, 5, rng.next_u64());
    ASSERT_FALSE(r.inertia_history.empty());
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] + 1e-9);
    EXPECT_NEAR(r.inertia, assignment_inertia(pts, r.assignments, 5), 1e-9);
    std::vector<int> random_assign(100);
    for (auto& a : random_assign) a = static_cast<int>(rng.below(5));
    EXPECT_LE(r.inertia, assignment_inertia(pts, random_assign, 5));
  }
}

TEST(KMeans, DeterministicPerSeed) {
  Rng rng(12);
  const auto pts = random_binary(rng, 60, 16);
  const auto a = interpret::kmeans(pts, 4, 99);
  const auto b = interpret::kmeans(pts, 4, 99);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.inertia_history, b.inertia_history);
}

TEST(KMeans, TooFewPointsIsConfigError) {
  Rng rng(13);
  EXPECT_THROW(interpret::kmeans(random_binary(rng, 3, 4), 5, 1), ConfigError);
}

TEST(KMeans, IdenticalVectorsShareOneCluster) {
  const RowMatrix<double> pts = RowMatrix<double>::Ones(12, 5);
  const auto r = interpret::kmeans(pts, 3, 14);
  EXPECT_EQ(r.inertia, 0.0);
  for (int a : r.assignments) EXPECT_EQ(a, r.assignments[0]);
  std::vector<interpret::TriggerVector> trig(12);
  for (std::size_t i = 0; i < trig.size(); ++i) trig[i] = {"t" + std::to_string(i), std::vector<std::uint8_t>(4, 1)};
  const auto report = interpret::cluster_report(r.assignments, trig, 2, 3, 14, 0);
  int nonempty = 0;
  for (const auto& cl : report.clusters) {
    if (cl.member_ids.empty()) {
      EXPECT_TRUE(cl.ambiguous);
    } else {
      ++nonempty;
      EXPECT_EQ(cl.member_ids.size(), 12u);
    }
  }
  EXPECT_EQ(nonempty, 1);
}

TEST(ClusterReport, AmbiguityBoundaries) {
  std::vector<int> assign;
  std::vector<interpret::TriggerVector> trig;
  const std::size_t sizes[] = {2, 3, 10, 11};
  for (int c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      assign.push_back(c);
      std::vector<std::uint8_t> bits(9, 0);
      bits[static_cast<std::size_t>(c)] = 1;
      bits[8] = i % 2;
      trig.push_back({"c" + std::to_string(c) + "-" + std::to_string(i), bits});
    }
  }
  const auto report = interpret::cluster_report(assign, trig, 3, 4, 5, 0xABCD);
  EXPECT_TRUE(report.clusters[0].ambiguous);
  EXPECT_FALSE(report.clusters[1].ambiguous);
  EXPECT_FALSE(report.clusters[2].ambiguous);
  EXPECT_TRUE(report.clusters[3].ambiguous);
  const auto& top = report.clusters[2].top_cells;
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].row, 0);
  EXPECT_EQ(top[0].col, 2);
  EXPECT_EQ(top[0].frequency, 1.0);
  EXPECT_EQ(top[1].row, 2);
  EXPECT_EQ(top[1].col, 2);
  EXPECT_EQ(top[1].frequency, 0.5);
  const auto j = report.to_json();
  EXPECT_EQ(j.at("model_crc").get<std::uint32_t>(), 0xABCDu);
  EXPECT_EQ(j.at("clusters").size(), 4u);
}

embedstore::Dataset pipeline_dataset() {
  embedstore::SyntheticSpec spec;
  spec.latent_dim = 3;
  spec.d_img = 6;
  spec.d_txt = 6;
  spec.num_train = 120;
  spec.num_dev = 10;
  spec.num_test = 10;
  spec.seed = 15;
  return embedstore::generate_synthetic(spec);
}

TEST(Pipeline, DeterministicAndBounded) {
  const auto ds = pipeline_dataset();
  auto c = small_config(FusionMode::Cross, 6, 8, 6, 6);
  const auto p = random_params(c, 16);
  interpret::PipelineOptions opt;
  opt.k = 5;
  opt.seed = 17;
  const auto a = interpret::run_pipeline(ds, p, 1234, opt);
  opt.threads = 3;
  const auto b = interpret::run_pipeline(ds, p, 1234, opt);
  EXPECT_EQ(a.report.to_json().dump(), b.report.to_json().dump());

  std::size_t hateful = 0;
  for (auto i : ds.indices(embedstore::Split::Train)) hateful += ds.records[i].label;
  ASSERT_EQ(a.triggers.size(), hateful);
  for (std::size_t i = 0, t = 0; i < ds.records.size(); ++i) {
    const auto& rec = ds.records[i];
    if (rec.split != embedstore::Split::Train || rec.label != 1) continue;
    const auto pi = fusion::project<double>(fusion::to_vec<double>(rec.image_vec), p.layout().img_proj, p, {});
    const auto pt = fusion::project<double>(fusion::to_vec<double>(rec.text_vec), p.layout().txt_proj, p, {});
    const auto rbits = interpret::binarize_signed_percentile(fusion::fuse_cross(pi, pt), 10, 90);
    const auto& trig = a.triggers[t++];
    EXPECT_EQ(trig.id, rec.id);
    EXPECT_LE(trig.popcount(), std::min(a.gradient_bits.popcount(), rbits.popcount()));
  }
  for (std::size_t i = 1; i < a.clustering.inertia_history.size(); ++i)
    EXPECT_LE(a.clustering.inertia_history[i], a.clustering.inertia_history[i - 1]);

  opt.seed = 18;
  const auto c2 = interpret::run_pipeline(ds, p, 1234, opt);
  EXPECT_EQ(c2.report.seed, 18u);
}

TEST(Pipeline, TooFewHatefulIsConfigError) {
  const auto ds = pipeline_dataset();
  auto c = small_config(FusionMode::Cross, 3, 4, 6, 6);
  interpret::PipelineOptions opt;
  opt.k = 1000;
  EXPECT_THROW(interpret::run_pipeline(ds, random_params(c, 19), 0, opt), ConfigError);
}

}  // namespace
}  // namespace fimfuse
