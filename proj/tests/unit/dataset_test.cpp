#include <algorithm>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "ulearn/dataset.hpp"
#include "ulearn/error.hpp"
#include "ulearn/trainer.hpp"

using namespace ulearn;

namespace {

ClassificationSpec toy_spec(std::uint64_t seed) {
  ClassificationSpec s;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(MakeClassification, ToySizes) {
  const Dataset ds = make_classification(toy_spec(1));
  EXPECT_EQ(ds.size(), 5000u);
  EXPECT_EQ(ds.dims(), 12u);
  EXPECT_EQ(ds.n_classes, 10);
  EXPECT_NO_THROW(ds.validate());
  for (std::size_t c : ds.class_counts()) EXPECT_EQ(c, 500u);
}

TEST(MakeClassification, SameSeedIsBitIdentical) {
  const Dataset a = make_classification(toy_spec(7)), b = make_classification(toy_spec(7));
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.features, make_classification(toy_spec(8)).features);
}

TEST(MakeClassification, RedundantDimensions) {
  ClassificationSpec s = toy_spec(2);
  s.n = 600;
  s.d = 8;
  s.n_classes = 3;
  s.n_informative = 3;
  const Dataset ds = make_classification(s);
  EXPECT_EQ(ds.dims(), 8u);
  EXPECT_TRUE(ds.features.all_finite());
}

TEST(MakeClassification, RejectsInvalidCounts) {
  ClassificationSpec s = toy_spec(1);
  s.n_informative = 13;
  EXPECT_THROW(make_classification(s), ConfigError);
  s = toy_spec(1);
  s.n = 5;
  EXPECT_THROW(make_classification(s), ConfigError);
}

TEST(MakeClassification, LargeSeparationIsLinearlyLearnable) {
  ClassificationSpec s = toy_spec(3);
  s.class_sep = 10.0;
  const Dataset ds = normalize(make_classification(s));
  TrainConfig cfg;
  cfg.seed = 1;
  const TrainRecord rec = train(make_model(ModelSpec{12, {}, 10}, 4), ds, ds, cfg);
  EXPECT_GE(rec.curves.back().train_acc, 0.99);
}

TEST(Split, SizesUnionAndStratification) {
  const Dataset ds = make_classification(toy_spec(4));
  const SplitResult sp = split(ds, 0.2, 9);
  EXPECT_EQ(sp.train.size(), 4000u);
  EXPECT_EQ(sp.test.size(), 1000u);
  std::set<std::size_t> all(sp.train_indices.begin(), sp.train_indices.end());
  for (std::size_t i : sp.test_indices) EXPECT_TRUE(all.insert(i).second) << "index in both sides";
  EXPECT_EQ(all.size(), ds.size());
  const auto full = ds.class_counts(), test = sp.test.class_counts();
  for (std::size_t c = 0; c < full.size(); ++c) {
    EXPECT_NEAR(static_cast<double>(test[c]), 0.2 * static_cast<double>(full[c]), 1.0);
  }
  for (std::size_t k = 0; k < sp.test_indices.size(); ++k) {
    EXPECT_EQ(sp.test.labels[k], ds.labels[sp.test_indices[k]]);
  }
}

TEST(Split, UnevenClassesKeepProportions) {
  Dataset ds;
  ds.n_classes = 3;
  const std::vector<std::size_t> counts{7, 13, 31};
  for (std::size_t c = 0; c < counts.size(); ++c) ds.labels.insert(ds.labels.end(), counts[c], static_cast<int>(c));
  ds.features = Tensor::matrix(ds.labels.size(), 2, 0.5);
  const SplitResult sp = split(ds, 0.3, 1);
  const auto test = sp.test.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    EXPECT_LE(std::abs(static_cast<double>(test[c]) - 0.3 * static_cast<double>(counts[c])), 1.0);
    EXPECT_GE(test[c], 1u);
  }
}

TEST(Split, Errors) {
  Dataset ds;
  ds.n_classes = 2;
  ds.labels = {0, 0, 0, 1};
  ds.features = Tensor::matrix(4, 1);
  EXPECT_THROW(split(ds, 0.5, 1), Error);
  ds.labels = {0, 0, 1, 1};
  EXPECT_THROW(split(ds, 0.0, 1), ConfigError);
  EXPECT_THROW(split(ds, 1.0, 1), ConfigError);
}

TEST(Normalize, UnitRangeAndMidpoint) {
  Dataset ds;
  ds.n_classes = 2;
  ds.labels = {0, 1, 0};
  ds.features = Tensor({3, 2}, {-2.0, 5.0, 0.0, 5.0, 2.0, 5.0});
  const Dataset n = normalize(ds);
  EXPECT_EQ(n.features(0, 0), 0.0);
  EXPECT_EQ(n.features(1, 0), 0.5);
  EXPECT_EQ(n.features(2, 0), 1.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(n.features(i, 1), 0.5);
  EXPECT_TRUE(n.feature_scale[1].constant);
  EXPECT_FALSE(n.feature_scale[0].constant);
  EXPECT_EQ(n.feature_scale[0].min, -2.0);
  EXPECT_EQ(n.feature_scale[0].max, 2.0);
}

TEST(Normalize, IdempotentAndMinMaxAreZeroOne) {
  const Dataset n = normalize(make_classification(toy_spec(5)));
  for (std::size_t k = 0; k < n.dims(); ++k) {
    double lo = 1.0, hi = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
      lo = std::min(lo, n.features(i, k));
      hi = std::max(hi, n.features(i, k));
    }
    EXPECT_EQ(lo, 0.0);
    EXPECT_EQ(hi, 1.0);
  }
  const Dataset twice = normalize(n);
  EXPECT_EQ(twice.features, n.features);
  // Scale metadata still refers to the original units.
  EXPECT_EQ(twice.feature_scale[0].min, n.feature_scale[0].min);
  EXPECT_EQ(twice.feature_scale[0].max, n.feature_scale[0].max);
}

TEST(DatasetCsv, RoundTrip) {
  ClassificationSpec s = toy_spec(6);
  s.n = 50;
  s.n_classes = 5;
  const Dataset ds = normalize(make_classification(s));
  const auto path = std::filesystem::temp_directory_path() / "ulearn_dataset_roundtrip.csv";
  write_dataset_csv(path, ds);
  const Dataset back = read_dataset_csv(path);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.n_classes, 5);
  std::filesystem::remove(path);
}

TEST(DatasetValidate, RejectsMissingClassAndBadLabels) {
  Dataset ds;
  ds.n_classes = 3;
  ds.labels = {0, 1, 1};
  ds.features = Tensor::matrix(3, 2);
  EXPECT_THROW(ds.validate(), Error);
  ds.labels = {0, 1, 3};
  EXPECT_THROW(ds.validate(), Error);
}
