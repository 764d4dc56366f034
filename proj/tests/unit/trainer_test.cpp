#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ulearn/error.hpp"
#include "ulearn/experiment.hpp"
#include "ulearn/trainer.hpp"

using namespace ulearn;

namespace {

Dataset small_data(std::size_t n = 400) {
  ClassificationSpec s;
  s.n = n;
  s.class_sep = 2.0;
  s.seed = 12;
  return normalize(make_classification(s));
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST(Train, ToyCleanAccuracy) {
  const ExperimentConfig cfg = load_config(std::filesystem::path(ULEARN_SOURCE_DIR) / "configs/toy.json");
  const DataBundle data = prepare_data(cfg);
  const TrainRecord rec = train(initial_model(cfg), *data.train, *data.test, train_config(cfg, false));
  ASSERT_FALSE(rec.failure);
  EXPECT_GE(rec.curves.back().test_acc, 0.70);
}

TEST(Train, ZeroLearningRateFullBatchKeepsInit) {
  const Dataset ds = small_data();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 0.0;
  cfg.batch_size = ds.size();
  const Model m0 = make_model(ModelSpec{12, {}, 10}, 1);
  const TrainRecord rec = train(m0, ds, ds, cfg);
  EXPECT_EQ(rec.final_model(), m0);
}

TEST(Train, SameSeedSameRecord) {
  const Dataset ds = small_data();
  const Model m0 = make_model(ModelSpec{12, {8}, 10}, 2);
  const TrainRecord a = train(m0, ds, ds, quick_config()), b = train(m0, ds, ds, quick_config());
  ASSERT_EQ(a.curves.size(), b.curves.size());
  for (std::size_t e = 0; e < a.curves.size(); ++e) {
    EXPECT_EQ(a.curves[e].train_loss, b.curves[e].train_loss);
    EXPECT_EQ(a.curves[e].test_acc, b.curves[e].test_acc);
  }
  EXPECT_EQ(a.final_model(), b.final_model());
}

TEST(Train, CheckpointAndSnapshotCadence) {
  const Dataset ds = small_data(403);
  TrainConfig cfg = quick_config();
  cfg.batch_size = 10;
  cfg.snapshot_every = 7;
  const TrainRecord rec = train(make_model(ModelSpec{12, {}, 10}, 1), ds, ds, cfg);
  EXPECT_EQ(rec.checkpoints.size(), cfg.epochs);
  EXPECT_EQ(rec.curves.size(), cfg.epochs);
  ASSERT_FALSE(rec.snapshots.empty());
  EXPECT_EQ(rec.snapshots.front().step, 0u);
  const std::size_t steps = cfg.epochs * ((ds.size() + 9) / 10);
  EXPECT_EQ(rec.snapshots.size(), steps / 7 + 1);
  for (std::size_t i = 1; i < rec.snapshots.size(); ++i) {
    EXPECT_GT(rec.snapshots[i].step, rec.snapshots[i - 1].step);
    EXPECT_EQ(rec.snapshots[i].step % 7, 0u);
  }
  EXPECT_EQ(rec.snapshots.front().params, flatten_params(make_model(ModelSpec{12, {}, 10}, 1)));
}

TEST(Train, LearningRateMilestones) {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.lr = 0.1;
  for (std::size_t e = 0; e < 5; ++e) EXPECT_DOUBLE_EQ(cfg.lr_at_epoch(e), 0.1);
  for (std::size_t e = 5; e < 7; ++e) EXPECT_DOUBLE_EQ(cfg.lr_at_epoch(e), 0.01);
  for (std::size_t e = 7; e < 10; ++e) EXPECT_DOUBLE_EQ(cfg.lr_at_epoch(e), 0.001);
}

TEST(Train, InvalidConfigRejected) {
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.snapshot_every = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, NumericFailureKeepsCompletedEpochs) {
  const Dataset ds = small_data();
  TrainConfig cfg = quick_config();
  cfg.epochs = 10;
  cfg.milestones.clear();
  cfg.lr = 1e306;
  cfg.momentum = 0.99;  // the buffer keeps growing until the activations overflow
  const TrainRecord rec = train(make_model(ModelSpec{12, {}, 10}, 1), ds, ds, cfg);
  ASSERT_TRUE(rec.failure.has_value());
  EXPECT_GT(rec.checkpoints.size(), 0u);
  EXPECT_LT(rec.checkpoints.size(), 10u);
  for (const auto& m : rec.checkpoints) {
    for (double v : flatten_params(m)) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_EQ(rec.curves.size(), rec.checkpoints.size());
}

TEST(Train, DefensesRunAndStayFinite) {
  const Dataset ds = small_data();
  for (DefenseKind k : {DefenseKind::mixup, DefenseKind::cutout, DefenseKind::adv_train}) {
    TrainConfig cfg = quick_config();
    cfg.epochs = 10;
    cfg.milestones.clear();
    cfg.defense.kind = k;
    const TrainRecord rec = train(make_model(ModelSpec{12, {}, 10}, 1), ds, ds, cfg);
    EXPECT_FALSE(rec.failure) << to_string(k);
    EXPECT_EQ(rec.checkpoints.size(), cfg.epochs);
    EXPECT_GT(rec.curves.back().train_acc, 0.6) << to_string(k);
  }
}

TEST(Mixup, LambdaOneIsIdentity) {
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_matrix(5, 4, rng);
  const std::vector<int> y{0, 1, 2, 1, 0};
  const std::vector<std::size_t> perm{4, 3, 2, 1, 0};
  const MixupResult r = mixup_with(x, y, 3, 1.0, perm);
  EXPECT_EQ(r.inputs, x);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(r.soft_labels(i, c), static_cast<int>(c) == y[i] ? 1.0 : 0.0);
  }
}

TEST(Mixup, HalfOfIdenticalSamplesIsUnchanged) {
  const Tensor x = Tensor({2, 3}, {0.2, 0.4, 0.6, 0.2, 0.4, 0.6});
  const std::vector<int> y{1, 1};
  const std::vector<std::size_t> perm{1, 0};
  const MixupResult r = mixup_with(x, y, 2, 0.5, perm);
  EXPECT_EQ(r.inputs, x);
  EXPECT_EQ(r.soft_labels(0, 1), 1.0);
}

TEST(Mixup, OutputsStayInUnitRangeAndLabelsSumToOne) {
  std::mt19937_64 data_rng(2);
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Tensor x = oracle::random_matrix(8, 5, data_rng);
    const auto y = oracle::random_labels(8, 4, data_rng);
    const MixupResult r = mixup_batch(x, y, 4, 1.0, rng);
    for (double v : r.inputs.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (std::size_t i = 0; i < 8; ++i) {
      double s = 0.0;
      for (double p : r.soft_labels.row(i)) s += p;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Cutout, WidthZeroAndFull) {
  std::mt19937_64 data_rng(4);
  Rng rng(5);
  const Tensor x = oracle::random_matrix(6, 7, data_rng, 0.1, 0.9);
  EXPECT_EQ(cutout_batch(x, 0, 0.0, rng), x);
  const Tensor full = cutout_batch(x, 7, 0.0, rng);
  for (double v : full.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(cutout_batch(x, 8, 0.0, rng), Error);
}

TEST(Cutout, ExactlyWidthCoordinatesChangeInOneWindow) {
  std::mt19937_64 data_rng(6);
  Rng rng(7);
  const Tensor x = oracle::random_matrix(50, 9, data_rng, 0.1, 0.9);
  const Tensor c = cutout_batch(x, 3, 0.0, rng);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::vector<std::size_t> changed;
    for (std::size_t k = 0; k < 9; ++k) {
      if (c(i, k) != x(i, k)) changed.push_back(k);
    }
    ASSERT_EQ(changed.size(), 3u);
    EXPECT_EQ(changed.back() - changed.front(), 2u);
  }
}

TEST(AdvTrain, ZeroInnerStepsIsPlainSgd) {
  std::mt19937_64 data_rng(8);
  const Tensor x = oracle::random_matrix(8, 12, data_rng);
  const auto y = oracle::random_labels(8, 10, data_rng);
  Model a = make_model(ModelSpec{12, {}, 10}, 3), b = a;
  SgdState sa, sb;
  adv_train_step(a, x, y, AdvOptions{0.03, 0, 0.0}, 0.1, 0.0, sa);
  sgd_step(b, backward(b, x, y), 0.1, 0.0, sb);
  EXPECT_EQ(a, b);
}

TEST(AdvTrain, InnerAscentRaisesLossAndRespectsBudget) {
  std::mt19937_64 data_rng(9);
  const double budget = 8.0 / 255.0;
  int raised = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const Model m = make_model(ModelSpec{12, {8}, 10}, static_cast<std::uint64_t>(t));
    const Tensor x = oracle::random_matrix(16, 12, data_rng);
    const auto y = oracle::random_labels(16, 10, data_rng);
    const AdvStepResult r = craft_adversarial(m, x, y, AdvOptions{budget, 5, 0.0});
    raised += r.adversarial_loss > r.clean_loss;
    EXPECT_LE(r.delta.max_abs(), budget + 1e-15);
    for (std::size_t k = 0; k < x.size(); ++k) {
      EXPECT_GE(x[k] + r.delta[k], 0.0);
      EXPECT_LE(x[k] + r.delta[k], 1.0);
    }
  }
  EXPECT_GE(raised, 95);
}

TEST(ParamCdf, MonotoneFromOneOverPToOne) {
  const Model m = make_model(ModelSpec{12, {}, 10}, 4);
  const auto cdf = param_cdf(m);
  ASSERT_FALSE(cdf.empty());
  EXPECT_NEAR(cdf.front().fraction, 1.0 / 130.0, 1e-15);
  EXPECT_EQ(cdf.back().fraction, 1.0);
  for (std::size_t i = 1; i < cdf.size(); ++i) {
    EXPECT_GT(cdf[i].value, cdf[i - 1].value);
    EXPECT_GE(cdf[i].fraction, cdf[i - 1].fraction);
  }
}

TEST(ParamCdf, AllZeroModelIsSinglePoint) {
  const auto cdf = param_cdf(Model({Layer::dense(3, 2)}));
  ASSERT_EQ(cdf.size(), 1u);
  EXPECT_EQ(cdf[0].value, 0.0);
  EXPECT_EQ(cdf[0].fraction, 1.0);
}

TEST(ParamCdf, MedianOfKnownValues) {
  Layer l = Layer::dense(1, 2);
  l.weight(0, 0) = -3.0;
  l.weight(0, 1) = 1.0;
  l.bias[0] = 2.0;
  l.bias[1] = -4.0;
  EXPECT_EQ(median_abs_param(Model({l})), 2.5);
}

TEST(TrainRecordFiles, RoundTrip) {
  const Dataset ds = small_data();
  const TrainRecord rec = train(make_model(ModelSpec{12, {6}, 10}, 1), ds, ds, quick_config(), "rt");
  const auto dir = std::filesystem::temp_directory_path() / "ulearn_record_rt";
  std::filesystem::remove_all(dir);
  write_record(dir, rec, "0123456789abcdef");
  const TrainRecord back = read_record(dir);
  ASSERT_EQ(back.checkpoints.size(), rec.checkpoints.size());
  for (std::size_t e = 0; e < rec.checkpoints.size(); ++e) EXPECT_EQ(back.checkpoints[e], rec.checkpoints[e]);
  ASSERT_EQ(back.snapshots.size(), rec.snapshots.size());
  EXPECT_EQ(back.snapshots.back().params, rec.snapshots.back().params);
  EXPECT_EQ(back.curves.back().test_acc, rec.curves.back().test_acc);
  std::filesystem::remove_all(dir);
}
