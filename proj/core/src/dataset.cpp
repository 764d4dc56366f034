#include "ulearn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "ulearn/error.hpp"
#include "ulearn/io.hpp"
#include "ulearn/random.hpp"

namespace ulearn {

void Dataset::validate() const {
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw ShapeError("feature rows do not match label count");
  }
  if (n_classes <= 0) throw ConfigError("dataset needs at least one class");
  std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw ConfigError("label " + std::to_string(y) + " out of range");
    seen[static_cast<std::size_t>(y)] = true;
  }
  for (int c = 0; c < n_classes; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) throw ConfigError("class " + std::to_string(c) + " has no samples");
  }
  if (!features.all_finite()) throw NumericError("dataset contains non-finite features");
  if (!feature_scale.empty() && feature_scale.size() != dims()) throw ShapeError("feature_scale length mismatch");
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(n_classes, 0)), 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

Dataset make_classification(const ClassificationSpec& spec) {
  if (spec.n_classes < 1) throw ConfigError("n_classes must be positive");
  if (spec.d == 0) throw ConfigError("d must be positive");
  if (spec.n_informative == 0 || spec.n_informative > spec.d) throw ConfigError("n_informative must lie in [1, d]");
  if (spec.clusters_per_class == 0) throw ConfigError("clusters_per_class must be positive");
  const std::size_t n_clusters = static_cast<std::size_t>(spec.n_classes) * spec.clusters_per_class;
  if (spec.n < n_clusters) throw ConfigError("n must be at least n_classes * clusters_per_class");
  if (spec.n_informative < 63 && (std::size_t{1} << spec.n_informative) < n_clusters) {
    throw ConfigError("n_informative too small for 2^n_informative >= number of clusters");
  }

  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const std::size_t inf = spec.n_informative, d = spec.d;

  std::set<std::vector<int>> used;
  std::vector<std::vector<double>> centroids;
  while (centroids.size() < n_clusters) {
    std::vector<int> vertex(inf);
    for (auto& b : vertex) b = coin(rng) ? 1 : 0;
    if (!used.insert(vertex).second) continue;
    std::vector<double> c(inf);
    for (std::size_t k = 0; k < inf; ++k) c[k] = (2.0 * vertex[k] - 1.0) * spec.class_sep;
    centroids.push_back(std::move(c));
  }

  Tensor x = Tensor::matrix(spec.n, d);
  std::vector<int> y(spec.n);
  std::size_t row = 0;
  for (std::size_t k = 0; k < n_clusters; ++k) {
    const std::size_t count = spec.n / n_clusters + (k < spec.n % n_clusters ? 1 : 0);
    Tensor mix = Tensor::matrix(inf, inf);
    for (double& a : mix.data()) a = 2.0 * unit(rng) - 1.0;
    std::vector<double> z(inf);
    for (std::size_t i = 0; i < count; ++i, ++row) {
      for (double& v : z) v = normal(rng);
      auto out = x.row(row);
      for (std::size_t b = 0; b < inf; ++b) {
        double s = centroids[k][b];
        for (std::size_t a = 0; a < inf; ++a) s += z[a] * mix(a, b);
        out[b] = s;
      }
      y[row] = static_cast<int>(k % static_cast<std::size_t>(spec.n_classes));
    }
  }

  if (d > inf) {
    Tensor combo = Tensor::matrix(inf, d - inf);
    for (double& a : combo.data()) a = 2.0 * unit(rng) - 1.0;
    for (std::size_t i = 0; i < spec.n; ++i) {
      auto r = x.row(i);
      for (std::size_t b = 0; b < d - inf; ++b) {
        double s = normal(rng);
        for (std::size_t a = 0; a < inf; ++a) s += r[a] * combo(a, b);
        r[inf + b] = s;
      }
    }
  }

  std::vector<std::size_t> order(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  Dataset ds;
  ds.features = Tensor::matrix(spec.n, d);
  ds.labels.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    std::copy_n(x.row(order[i]).begin(), d, ds.features.row(i).begin());
    ds.labels[i] = y[order[i]];
  }
  ds.n_classes = spec.n_classes;
  ds.feature_scale.assign(d, FeatureScale{});
  ds.seed = spec.seed;
  ds.validate();
  return ds;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  const std::size_t d = ds.dims();
  out.features = Tensor::matrix(indices.size(), d);
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= ds.size()) throw ShapeError("subset index out of range");
    std::copy_n(ds.features.row(indices[i]).begin(), d, out.features.row(i).begin());
    out.labels[i] = ds.labels[indices[i]];
  }
  out.n_classes = ds.n_classes;
  out.feature_scale = ds.feature_scale;
  out.seed = ds.seed;
  return out;
}

SplitResult split(const Dataset& ds, double test_frac, std::uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0)) throw ConfigError("test_frac must lie in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.n_classes));
  for (std::size_t i = 0; i < ds.size(); ++i) by_class.at(static_cast<std::size_t>(ds.labels[i])).push_back(i);

  Rng rng(seed);
  std::vector<bool> is_test(ds.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() < 2) {
      throw ConfigError("class " + std::to_string(c) + " has fewer than 2 samples; cannot split");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    auto take = static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(idx.size())));
    take = std::clamp<std::size_t>(take, 1, idx.size() - 1);
    for (std::size_t k = 0; k < take; ++k) is_test[idx[k]] = true;
  }

  SplitResult res;
  for (std::size_t i = 0; i < ds.size(); ++i) (is_test[i] ? res.test_indices : res.train_indices).push_back(i);
  res.train = subset(ds, res.train_indices);
  res.test = subset(ds, res.test_indices);
  return res;
}

Dataset normalize(const Dataset& ds) {
  Dataset out = ds;
  const std::size_t n = ds.size(), d = ds.dims();
  if (out.feature_scale.size() != d) out.feature_scale.assign(d, FeatureScale{});
  for (std::size_t j = 0; j < d; ++j) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, ds.features(i, j));
      hi = std::max(hi, ds.features(i, j));
    }
    FeatureScale& s = out.feature_scale[j];
    const double prev_lo = s.min, prev_span = s.max - s.min;
    if (!(hi > lo)) {
      for (std::size_t i = 0; i < n; ++i) out.features(i, j) = 0.5;
      s.constant = true;
      continue;
    }
    if (lo == 0.0 && hi == 1.0) continue;  // already normalized; keep metadata exact
    const double span = hi - lo;
    for (std::size_t i = 0; i < n; ++i) out.features(i, j) = (ds.features(i, j) - lo) / span;
    s.min = prev_lo + lo * prev_span;
    s.max = prev_lo + hi * prev_span;
  }
  return out;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& ds) {
  CsvTable t;
  for (std::size_t j = 0; j < ds.dims(); ++j) t.header.push_back("f" + std::to_string(j));
  t.header.push_back("label");
  t.rows.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::string> r;
    r.reserve(ds.dims() + 1);
    for (double v : ds.features.row(i)) r.push_back(format_double(v));
    r.push_back(std::to_string(ds.labels[i]));
    t.rows.push_back(std::move(r));
  }
  write_csv_file(path, t);
}

Dataset read_dataset_csv(const std::filesystem::path& path, int n_classes) {
  const CsvTable t = read_csv_file(path);
  const std::size_t label_col = t.column("label");
  std::vector<std::size_t> feat_cols;
  for (std::size_t j = 0;; ++j) {
    auto c = t.find_column("f" + std::to_string(j));
    if (!c) break;
    feat_cols.push_back(*c);
  }
  if (feat_cols.empty()) throw Error(path.string() + " has no feature columns f0..");
  Dataset ds;
  ds.features = Tensor::matrix(t.rows.size(), feat_cols.size());
  ds.labels.resize(t.rows.size());
  int max_label = -1;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < feat_cols.size(); ++j) ds.features(i, j) = parse_double(t.rows[i][feat_cols[j]]);
    ds.labels[i] = std::stoi(t.rows[i][label_col]);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.n_classes = n_classes > 0 ? n_classes : max_label + 1;
  ds.feature_scale.assign(feat_cols.size(), FeatureScale{});
  ds.validate();
  return ds;
}

namespace {

std::uint32_t read_be32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw Error("truncated IDX header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  std::ifstream img(images, std::ios::binary), lab(labels, std::ios::binary);
  if (!img) throw Error("cannot open " + images.string());
  if (!lab) throw Error("cannot open " + labels.string());
  if (read_be32(img) != 0x00000803) throw Error(images.string() + " is not an IDX3 u8 image file");
  if (read_be32(lab) != 0x00000801) throw Error(labels.string() + " is not an IDX1 u8 label file");
  const std::size_t n = read_be32(img), rows = read_be32(img), cols = read_be32(img);
  if (read_be32(lab) != n) throw Error("IDX image and label counts differ");
  const std::size_t d = rows * cols;
  Dataset ds;
  ds.features = Tensor::matrix(n, d);
  ds.labels.resize(n);
  std::vector<unsigned char> buf(d);
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(d));
    char y = 0;
    lab.read(&y, 1);
    if (!img || !lab) throw Error("truncated IDX payload");
    for (std::size_t j = 0; j < d; ++j) ds.features(i, j) = buf[j] / 255.0;
    ds.labels[i] = static_cast<unsigned char>(y);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.n_classes = max_label + 1;
  ds.feature_scale.assign(d, FeatureScale{0.0, 255.0, false});
  ds.validate();
  return ds;
}

}  // namespace ulearn
