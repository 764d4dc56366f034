#include "ulearn/unlearnability.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ulearn/error.hpp"

namespace ulearn {

double split_sse(std::span<const double> sorted, std::size_t split) {
  auto sse = [](std::span<const double> part) {
    if (part.empty()) return 0.0;
    const double mean = std::accumulate(part.begin(), part.end(), 0.0) / static_cast<double>(part.size());
    double s = 0.0;
    for (double v : part) s += (v - mean) * (v - mean);
    return s;
  };
  return sse(sorted.first(split)) + sse(sorted.subspan(split));
}

KMeans2 kmeans2_1d(std::span<const double> values) {
  if (values.size() < 2) throw ShapeError("kmeans2_1d needs at least two values");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  KMeans2 res;
  if (v.front() == v.back()) {
    res.c1 = res.c2 = v.front();
    res.split = v.size();
    res.degenerate = true;
    return res;
  }

  // Prefix sums of values shifted by the overall mean keep the SSE formula
  // well conditioned.
  const std::size_t n = v.size();
  const double shift = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  std::vector<double> s(n + 1, 0.0), q(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = v[i] - shift;
    s[i + 1] = s[i] + x;
    q[i + 1] = q[i] + x * x;
  }
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_k = 1;
  for (std::size_t k = 1; k < n; ++k) {
    const double nl = static_cast<double>(k), nr = static_cast<double>(n - k);
    const double left = q[k] - s[k] * s[k] / nl;
    const double sr = s[n] - s[k];
    const double right = (q[n] - q[k]) - sr * sr / nr;
    const double total = left + right;
    if (total < best) {
      best = total;
      best_k = k;
    }
  }
  const std::span<const double> sorted(v);
  res.split = best_k;
  res.c1 = std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(best_k), 0.0) / static_cast<double>(best_k);
  res.c2 = std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(best_k), v.end(), 0.0) /
           static_cast<double>(n - best_k);
  res.sse = split_sse(sorted, best_k);
  return res;
}

double learnable_threshold(const SalMatrix& clean) {
  if (clean.epochs == 0) throw ShapeError("learnable threshold needs at least one epoch");
  double sum = 0.0;
  for (std::size_t t = 0; t < clean.epochs; ++t) {
    const auto vals = clean.epoch_values(t);
    if (vals.empty()) throw NumericError("clean SAL epoch " + std::to_string(t + 1) + " has no values");
    if (vals.size() == 1) {
      sum += vals.front();
      continue;
    }
    const KMeans2 km = kmeans2_1d(vals);
    sum += 0.5 * (km.c1 + km.c2);
  }
  return sum / static_cast<double>(clean.epochs);
}

std::size_t count_learnable(std::span<const double> sal_epoch, double beta) {
  return static_cast<std::size_t>(std::count_if(sal_epoch.begin(), sal_epoch.end(), [&](double v) { return v > beta; }));
}

std::vector<std::size_t> learnable_counts(const SalMatrix& m, double beta) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < m.epochs; ++t) out.push_back(count_learnable(m.epoch_values(t), beta));
  return out;
}

double lp_average(const SalMatrix& m, double beta) {
  if (m.epochs == 0) return 0.0;
  const auto c = learnable_counts(m, beta);
  return static_cast<double>(std::accumulate(c.begin(), c.end(), std::size_t{0})) / static_cast<double>(m.epochs);
}

UdReport unlearnable_distance(const SalMatrix& poisoned, const SalMatrix& clean) {
  if (poisoned.layer_ids != clean.layer_ids) throw ShapeError("SAL matrices come from different architectures");
  UdReport r;
  r.probe = clean.probe;
  r.run_clean = clean.run_id;
  r.run_poisoned = poisoned.run_id;
  r.beta = learnable_threshold(clean);
  r.lambda_clean = learnable_counts(clean, r.beta);
  r.lambda_poisoned = learnable_counts(poisoned, r.beta);
  r.lp_clean = lp_average(clean, r.beta);
  r.lp_poisoned = lp_average(poisoned, r.beta);
  if (r.lp_clean == 0.0) {
    r.error = "clean run has no learnable layers; UD undefined";
  } else {
    r.ud = r.lp_poisoned / r.lp_clean;
  }
  return r;
}

std::string ud_report_json(const UdReport& r, const std::string& config_hash) {
  nlohmann::json j{{"format", "ulearn-ud"},
                   {"version", 1},
                   {"beta", r.beta},
                   {"lp_clean", r.lp_clean},
                   {"lp_poisoned", r.lp_poisoned},
                   {"ud", r.ud ? nlohmann::json(*r.ud) : nlohmann::json(nullptr)},
                   {"lambda_clean", r.lambda_clean},
                   {"lambda_poisoned", r.lambda_poisoned},
                   {"probe",
                    {{"epsilon", r.probe.epsilon},
                     {"norm", to_string(r.probe.norm)},
                     {"ascent_iters", r.probe.ascent_iters},
                     {"eval_subset", r.probe.eval_subset},
                     {"seed", r.probe.seed}}},
                   {"runs", {{"clean", r.run_clean}, {"poisoned", r.run_poisoned}}},
                   {"config_hash", config_hash}};
  if (!r.error.empty()) j["error"] = r.error;
  return j.dump(2) + "\n";
}

}  // namespace ulearn
