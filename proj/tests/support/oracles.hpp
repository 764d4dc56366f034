// Independent reference implementations used to check the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "ulearn/model.hpp"

namespace oracle {

/// Mean softmax cross-entropy recomputed with plain loops.
inline double ce_loss(const ulearn::Model& model, const ulearn::Tensor& x, std::span<const int> y) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::vector<double> a(x.row(i).begin(), x.row(i).end());
    for (const auto& layer : model.layers()) {
      if (layer.kind == ulearn::LayerKind::relu) {
        for (double& v : a) v = v > 0.0 ? v : 0.0;
        continue;
      }
      std::vector<double> z(layer.out_dim());
      for (std::size_t o = 0; o < z.size(); ++o) {
        double s = layer.bias[o];
        for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * layer.weight(k, o);
        z[o] = s;
      }
      a = std::move(z);
    }
    const double m = *std::max_element(a.begin(), a.end());
    double se = 0.0;
    for (double v : a) se += std::exp(v - m);
    total += m + std::log(se) - a[static_cast<std::size_t>(y[i])];
  }
  return total / static_cast<double>(x.rows());
}

/// Central finite differences of `f` over the flattened parameter vector.
template <typename F>
std::vector<double> fd_gradient(const ulearn::Model& model, F&& f, double h = 1e-5) {
  const std::vector<double> theta = ulearn::flatten_params(model);
  std::vector<double> g(theta.size());
  std::vector<double> p = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    p[i] = theta[i] + h;
    const double up = f(ulearn::unflatten_params(model, p));
    p[i] = theta[i] - h;
    const double down = f(ulearn::unflatten_params(model, p));
    p[i] = theta[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Gradients flattened in flatten_params order (dense layers only).
inline std::vector<double> flatten_grads(const ulearn::Model& model, const ulearn::Gradients& g) {
  std::vector<double> out;
  for (std::size_t l : model.dense_indices()) {
    const auto f = g.at(l).flatten();
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

inline double rel_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / scale;
}

/// Lowest within-cluster SSE over every contiguous split of the sorted values,
/// each cluster scored directly from its own mean.
inline double brute_force_2means_sse(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < v.size(); ++k) {
    double sse = 0.0;
    for (auto [b, e] : {std::pair<std::size_t, std::size_t>{0, k}, {k, v.size()}}) {
      double mean = 0.0;
      for (std::size_t i = b; i < e; ++i) mean += v[i];
      mean /= static_cast<double>(e - b);
      for (std::size_t i = b; i < e; ++i) sse += (v[i] - mean) * (v[i] - mean);
    }
    best = std::min(best, sse);
  }
  return best;
}

inline ulearn::Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ulearn::Tensor t = ulearn::Tensor::matrix(r, c);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline std::vector<int> random_labels(std::size_t n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, classes - 1);
  std::vector<int> y(n);
  for (int& v : y) v = u(rng);
  return y;
}

}  // namespace oracle
