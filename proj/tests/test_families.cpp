#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "genprobe/families.hpp"
#include "genprobe/metrics.hpp"
#include "genprobe/stats.hpp"
#include "test_support.hpp"

using namespace genprobe;
using namespace genprobe::families;
using genprobe::testing::scratch_dir;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Best accuracy of a threshold rule on the first coordinate.
double best_threshold_accuracy(const Dataset& d) {
  const auto n = static_cast<std::size_t>(d.x.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return d.x(static_cast<Eigen::Index>(a), 0) < d.x(static_cast<Eigen::Index>(b), 0); });
  // predict 1 above the cut; start with everything predicted 1
  std::size_t correct = static_cast<std::size_t>(std::count(d.labels.begin(), d.labels.end(), 1));
  std::size_t best = std::max(correct, n - correct);
  for (std::size_t k = 0; k < n; ++k) {
    correct += d.labels[order[k]] == 0 ? 1 : 0;
    correct -= d.labels[order[k]] == 1 ? 1 : 0;
    best = std::max({best, correct, n - correct});
  }
  return static_cast<double>(best) / static_cast<double>(n);
}

// Spearman by brute-force pairwise rank counting, sharing nothing with the library.
double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rank = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) {
        less += w < v[i];
        equal += w == v[i];
      }
      r[i] = less + (equal + 1) / 2;
    }
    return r;
  };
  const auto rx = rank(x), ry = rank(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Pipeline-recomputed E_L2 against manifest test accuracy.
std::pair<std::vector<double>, std::vector<double>> recompute(const fs::path& manifest) {
  std::vector<double> metric, acc;
  for (const auto& r : store::read_manifest(manifest)) {
    const auto probe = probe_model(store::read_container(store::resolve_weights(manifest, r)), false);
    metric.push_back(probe.model.q_e_l2);
    acc.push_back(r.test_accuracy);
  }
  return {metric, acc};
}

ToyTrainConfig small_config() {
  ToyTrainConfig c;
  c.hidden = 8;
  c.lr = 0.05;
  c.weight_decay = 1e-3;
  c.epochs = 3;
  c.n_train = 128;
  c.n_test = 128;
  c.batch_size = 32;
  c.data_seed = 5;
  c.init_seed = 6;
  return c;
}

}  // namespace

TEST(Blobs, BalancedAndDeterministic) {
  const auto a = generate_blobs(3, 100), b = generate_blobs(3, 100);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 1), 50);
  EXPECT_EQ(a.x.cols(), 16);
  EXPECT_THROW(generate_blobs(3, 7), Error);
}

TEST(Blobs, SeparatedLimitIsLinearlySeparable) {
  const auto d = generate_blobs(1, 4096, 16, 1000.0);
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    EXPECT_EQ(d.x(i, 0) > 0.0 ? 1 : 0, d.labels[static_cast<std::size_t>(i)]);
  }
}

TEST(Blobs, IndistinguishableClasses) {
  EXPECT_NEAR(best_threshold_accuracy(generate_blobs(2, 4096, 16, 0.0)), 0.5, 0.05);
}

TEST(Blobs, BayesAccuracyAtUnitSeparation) {
  const double phi1 = 0.5 * std::erfc(-1.0 / std::sqrt(2.0));
  EXPECT_NEAR(phi1, 0.841, 1e-3);
  EXPECT_NEAR(best_threshold_accuracy(generate_blobs(7, 4096, 16, 2.0)), phi1, 0.03);
}

TEST(Mlp, GradientMatchesCentralDifferences) {
  const auto data = generate_blobs(11, 64, 16, 2.0);
  const MlpParams p = init_mlp(24, 12);
  const double wd = 1e-3;
  MlpParams grad = p;
  mlp_gradient(p, data.x, data.labels, wd, grad);
  Rng rng(13);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t i = rng.below(p.size());
    MlpParams plus = p, minus = p;
    plus.at(i) += 1e-6;
    minus.at(i) -= 1e-6;
    const long double step = static_cast<long double>(plus.at(i)) - minus.at(i);
    const double numeric = static_cast<double>(
        (mlp_loss<long double>(plus, data.x, data.labels, wd) - mlp_loss<long double>(minus, data.x, data.labels, wd)) /
        step);
    const double analytic = grad.at(i);
    worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8}));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Mlp, ExtendedLossAgreesWithDouble) {
  const auto data = generate_blobs(4, 256);
  const MlpParams p = init_mlp(16, 5);
  const double wide = static_cast<double>(mlp_loss<long double>(p, data.x, data.labels, 0.02));
  EXPECT_NEAR(mlp_loss(p, data.x, data.labels, 0.02), wide, 1e-13);
}

TEST(Mlp, GradientReturnsLoss) {
  const auto data = generate_blobs(1, 32);
  const MlpParams p = init_mlp(8, 2);
  MlpParams g = p;
  EXPECT_DOUBLE_EQ(mlp_gradient(p, data.x, data.labels, 0.01, g), mlp_loss(p, data.x, data.labels, 0.01));
}

TEST(Mlp, FlatIndexCoversAllParameters) {
  MlpParams p = init_mlp(4, 1);
  EXPECT_EQ(p.size(), 4u * 16 + 4 + 4 * 4 + 4 + 2 * 4 + 2);
  p.at(0) = 42.0;
  EXPECT_EQ(p.w1(0, 0), 42.0);
  p.at(p.size() - 1) = 7.0;
  EXPECT_EQ(p.b3(1), 7.0);
}

TEST(Train, ZeroLearningRateKeepsInitialization) {
  const auto dir = scratch_dir("train_lr0");
  auto c = small_config();
  c.lr = 0.0;
  const auto outcome = train_model(c, dir);
  ASSERT_EQ(outcome.records.size(), 3u);
  EXPECT_EQ(outcome.final.w1, outcome.initial.w1);
  EXPECT_EQ(outcome.final.w3, outcome.initial.w3);
  EXPECT_EQ(outcome.final.b2, outcome.initial.b2);
  const auto init_tensors = outcome.initial.weight_tensors();
  for (const auto& r : outcome.records) {
    EXPECT_EQ(store::read_container(dir / r.weights_path), init_tensors);
    EXPECT_EQ(r.test_accuracy, outcome.records[0].test_accuracy);
    EXPECT_EQ(r.train_accuracy, outcome.records[0].train_accuracy);
  }
}

TEST(Train, EasyDataIsLearned) {
  const auto dir = scratch_dir("train_easy");
  ToyTrainConfig c;
  c.separation = 1000.0;
  c.lr = 0.1;
  c.epochs = 5;
  // pinned: at this input scale most initializations collapse to dead units
  c.data_seed = 3;
  c.init_seed = 3;
  const auto recs = train_toy(c, dir);
  ASSERT_EQ(recs.size(), 5u);
  EXPECT_GE(recs.back().test_accuracy, 0.99);
  EXPECT_EQ(store::read_manifest(dir / kManifestName), recs);
}

TEST(Train, RecordsDescribeRun) {
  const auto dir = scratch_dir("train_records");
  const auto recs = train_toy(small_config(), dir);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].model_id, "lr=0.05_wd=0.001_h=8_seed=6");
  EXPECT_EQ(recs[2].epoch, 3u);
  EXPECT_EQ(recs[0].optimizer, "sgd");
  EXPECT_EQ(recs[0].hyperparams.at("hidden"), "8");
  EXPECT_EQ(recs[1].weights_path, "lr=0.05_wd=0.001_h=8_seed=6/epoch_002.gprb");
  const auto tensors = store::read_container(dir / recs[0].weights_path);
  ASSERT_EQ(tensors.size(), 3u);
  EXPECT_EQ(tensors[0].shape(), (std::vector<std::size_t>{8, 16}));
  EXPECT_EQ(tensors[2].shape(), (std::vector<std::size_t>{2, 8}));
  for (const auto& t : tensors) {
    for (double v : t.data()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Train, DeterministicBytes) {
  const auto a = scratch_dir("train_det_a"), b = scratch_dir("train_det_b");
  const auto ra = train_toy(small_config(), a);
  train_toy(small_config(), b);
  EXPECT_EQ(slurp(a / kManifestName), slurp(b / kManifestName));
  for (const auto& r : ra) EXPECT_EQ(slurp(a / r.weights_path), slurp(b / r.weights_path));
}

TEST(Train, DivergenceKeepsRecordsAndThrows) {
  const auto dir = scratch_dir("train_diverge");
  auto c = small_config();
  c.lr = 1e200;
  c.epochs = 5;
  try {
    train_toy(c, dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergenceDetected);
  }
  EXPECT_LT(store::read_manifest(dir / kManifestName).size(), 5u);
}

TEST(Train, InvalidConfigRejected) {
  auto c = small_config();
  c.epochs = 0;
  EXPECT_THROW(train_model(c, scratch_dir("train_bad")), Error);
  c = small_config();
  c.n_train = 7;
  EXPECT_THROW(train_model(c, scratch_dir("train_bad")), Error);
}

TEST(Grid, SingleCellHasOneRecordPerEpoch) {
  const auto dir = scratch_dir("grid_single");
  const std::vector<double> lrs = {0.05}, wds = {0.0};
  const std::vector<std::size_t> widths = {8};
  const std::vector<std::uint64_t> seeds = {1};
  const auto r = grid_family(lrs, wds, widths, seeds, dir, small_config());
  EXPECT_EQ(r.models, 1u);
  EXPECT_EQ(store::read_manifest(r.manifest).size(), 3u);
}

TEST(Grid, CountsAndUniqueIds) {
  const auto dir = scratch_dir("grid_count");
  auto base = small_config();
  base.epochs = 30;
  base.n_train = 64;
  base.n_test = 64;
  const std::vector<double> lrs = {0.01, 0.05}, wds = {0.0, 1e-3};
  const std::vector<std::size_t> widths = {4, 6};
  const std::vector<std::uint64_t> seeds = {1};
  const auto r = grid_family(lrs, wds, widths, seeds, dir, base);
  EXPECT_EQ(r.models, 8u);
  EXPECT_TRUE(r.failures.empty());
  const auto recs = store::read_manifest(r.manifest);
  EXPECT_EQ(recs.size(), 240u);
  std::set<std::string> ids;
  for (const auto& rec : recs) ids.insert(rec.model_id);
  EXPECT_EQ(ids.size(), 8u);
  EXPECT_TRUE(ids.count("lr=0.05_wd=0_h=6_seed=1"));
}

TEST(Grid, FailedCellsDoNotAbortGrid) {
  const auto dir = scratch_dir("grid_fail");
  const std::vector<double> lrs = {0.05, 1e200}, wds = {0.0};
  const std::vector<std::size_t> widths = {8};
  const std::vector<std::uint64_t> seeds = {1};
  const auto r = grid_family(lrs, wds, widths, seeds, dir, small_config());
  EXPECT_EQ(r.models, 1u);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_NE(r.failures[0].find("lr=1e+200"), std::string::npos);
}

TEST(Grid, RejectsOversizeAndEmpty) {
  const std::vector<double> many(600, 0.01), one = {0.01}, none;
  const std::vector<std::size_t> widths = {8};
  const std::vector<std::uint64_t> seeds = {1};
  EXPECT_THROW(grid_family(many, one, widths, seeds, scratch_dir("grid_big")), Error);
  EXPECT_THROW(grid_family(none, one, widths, seeds, scratch_dir("grid_big")), Error);
}

TEST(Synth, LayersFollowPlantedPowerLaw) {
  const auto dir = scratch_dir("synth_layers");
  SpectrumFamilySpec spec;
  spec.seed = 4;
  const auto manifest = synth_family(spec, dir);
  const auto recs = store::read_manifest(manifest);
  ASSERT_EQ(recs.size(), 3u);
  for (const auto& r : recs) {
    const auto tensors = store::read_container(store::resolve_weights(manifest, r));
    ASSERT_EQ(tensors.size(), 3u);
    EXPECT_EQ(tensors[1].name(), "layer1.weight");
    const auto s = singular_values(unfold(tensors[0])[0]);
    // sigma_k = k^-p, so the ratio of the first two values reveals p
    const double p = std::log(s.values()[0] / s.values()[1]) / std::log(2.0);
    EXPECT_GE(p, 0.2);
    EXPECT_LE(p, 2.0);
    EXPECT_NEAR(s.values()[0], 1.0, 1e-12);
    EXPECT_NEAR(s.values()[3], std::pow(4.0, -p), 1e-12);
    EXPECT_EQ(r.train_accuracy - r.test_accuracy, kTrainOffset);
    EXPECT_NEAR(kTrainOffset, 0.05, 1e-7);
    const double planted = std::stod(r.hyperparams.at("planted_E_L2"));
    EXPECT_NEAR(probe_model(tensors, false).model.q_e_l2, planted, 1e-9);
  }
}

TEST(Synth, NoiselessLinksArePerfectlyRanked) {
  for (auto [link, expected] : {std::pair{Link::Linear, 1.0}, {Link::NegatedLinear, -1.0}, {Link::Quadratic, 1.0}}) {
    const auto dir = scratch_dir("synth_link");
    SpectrumFamilySpec spec;
    spec.n_models = 12;
    spec.link = link;
    spec.seed = 21;
    const auto [metric, acc] = recompute(synth_family(spec, dir));
    EXPECT_EQ(stats::spearman(metric, acc), expected);
  }
}

TEST(Synth, NoisyLinkMatchesIndependentRankCorrelation) {
  const auto dir = scratch_dir("synth_noisy");
  SpectrumFamilySpec spec;
  spec.n_models = 100;
  spec.link = Link::Noisy;
  spec.noise_sigma = 0.1;
  spec.seed = 2024;
  const auto [metric, acc] = recompute(synth_family(spec, dir));
  const double rho = stats::spearman(metric, acc);
  EXPECT_NEAR(rho, brute_spearman(metric, acc), 1e-12);
  EXPECT_GT(rho, 0.5);
  EXPECT_LT(rho, 1.0);
}

TEST(Synth, DeterministicBytes) {
  SpectrumFamilySpec spec;
  spec.seed = 77;
  const auto a = scratch_dir("synth_det_a"), b = scratch_dir("synth_det_b");
  synth_family(spec, a);
  synth_family(spec, b);
  for (const auto& entry : fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path();
  }
}

TEST(Synth, InvalidSpecRejected) {
  SpectrumFamilySpec spec;
  spec.n_models = 2;
  EXPECT_THROW(synth_family(spec, scratch_dir("synth_bad")), Error);
  spec = {};
  spec.decay_low = 2.0;
  spec.decay_high = 1.0;
  EXPECT_THROW(synth_family(spec, scratch_dir("synth_bad")), Error);
  EXPECT_THROW(parse_link("cubic"), Error);
}

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(0.001), "0.001");
  EXPECT_EQ(format_number(0.0), "0");
  EXPECT_EQ(std::stod(format_number(1.0 / 3.0)), 1.0 / 3.0);
}
