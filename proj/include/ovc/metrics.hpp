#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovc/autodiff.hpp"
#include "ovc/dataio.hpp"
#include "ovc/profile.hpp"

namespace ovc::metrics {

/// Normalized earth mover's distance between two rating distributions:
///   sqrt( mean_k (CDF_p(k) - CDF_q(k))^2 ).
inline double emd_loss(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) {
    throw DimensionError("emd_loss: length mismatch " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
  }
  double cp = 0.0, cq = 0.0, acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    cp += p[k];
    cq += q[k];
    acc += (cp - cq) * (cp - cq);
  }
  return std::sqrt(acc / static_cast<double>(p.size()));
}

inline double emd_loss(const data::RatingDistribution& p, const data::RatingDistribution& q) {
  return emd_loss(std::span<const double>(p.p), std::span<const double>(q.p));
}

/// Batch EMD on the tape: `pred` is [batch x K], `target` a constant of the
/// same shape. Returns the mean over rows. Rows with zero loss contribute a
/// zero gradient.
inline ad::Var emd_loss(const ad::Var& pred, const Tensor& target) {
  if (pred.value().rank() != 2 || pred.shape() != target.shape()) {
    throw DimensionError("emd_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  const std::size_t batch = pred.value().dim(0), k = pred.value().dim(1);
  std::vector<double> row_loss(batch);
  Tensor cdf_diff({batch, k});
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double cp = 0.0, cq = 0.0, acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      cp += target[b * k + j];
      cq += pred.value()[b * k + j];
      cdf_diff[b * k + j] = cq - cp;
      acc += (cq - cp) * (cq - cp);
    }
    row_loss[b] = std::sqrt(acc / static_cast<double>(k));
    total += row_loss[b];
  }
  const auto ip = pred.id();
  return pred.tape().record(
      Tensor::scalar(total / static_cast<double>(batch)), {pred},
      [=, cdf_diff = std::move(cdf_diff), row_loss = std::move(row_loss)](ad::Tape& t, const Tensor& g) {
        Tensor& gp = t.grad(ip);
        for (std::size_t b = 0; b < batch; ++b) {
          if (row_loss[b] == 0.0) continue;
          const double scale = g[0] / static_cast<double>(batch) / (static_cast<double>(k) * row_loss[b]);
          // d/dq_j sums the CDF terms k >= j.
          double suffix = 0.0;
          for (std::size_t j = k; j-- > 0;) {
            suffix += cdf_diff[b * k + j];
            gp[b * k + j] += scale * suffix;
          }
        }
      });
}

/// mu = sum_j j * p_j over buckets j = 1..K.
inline double dist_mean(std::span<const double> p) {
  double mu = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) mu += static_cast<double>(j + 1) * p[j];
  return mu;
}

inline double dist_std(std::span<const double> p) {
  const double mu = dist_mean(p);
  double var = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double d = static_cast<double>(j + 1) - mu;
    var += d * d * p[j];
  }
  return std::sqrt(std::max(0.0, var));
}

inline double dist_mean(const data::RatingDistribution& d) { return dist_mean(std::span<const double>(d.p)); }
inline double dist_std(const data::RatingDistribution& d) { return dist_std(std::span<const double>(d.p)); }

/// Pearson linear correlation coefficient.
inline double plcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("plcc: sequences differ in length");
  if (x.size() < 2) throw std::invalid_argument("plcc: need at least 2 samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("plcc: zero variance, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks; tied values share the average of their ranks.
inline std::vector<double> fractional_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank-order correlation: Pearson correlation of fractional ranks.
inline double srcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("srcc: sequences differ in length");
  if (x.size() < 2) throw std::invalid_argument("srcc: need at least 2 samples");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  try {
    return plcc(rx, ry);
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("srcc: constant sequence, correlation undefined");
  }
}

inline constexpr double kBinaryCutoff = 5.0;

/// Fraction of images whose high/low label (mean > 5) agrees; a mean of
/// exactly 5 counts as low.
inline double binary_accuracy(std::span<const double> pred_means, std::span<const double> gt_means) {
  if (pred_means.size() != gt_means.size()) throw DimensionError("binary_accuracy: count mismatch");
  if (pred_means.empty()) throw std::invalid_argument("binary_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred_means.size(); ++i)
    hits += (pred_means[i] > kBinaryCutoff) == (gt_means[i] > kBinaryCutoff);
  return static_cast<double>(hits) / static_cast<double>(pred_means.size());
}

inline double binary_accuracy(std::span<const data::RatingDistribution> pred,
                              std::span<const data::RatingDistribution> gt) {
  std::vector<double> pm, gm;
  for (const auto& d : pred) pm.push_back(dist_mean(d));
  for (const auto& d : gt) gm.push_back(dist_mean(d));
  return binary_accuracy(pm, gm);
}

/// Evaluation summary. A correlation is empty when it is undefined (for
/// example every prediction has the same mean).
struct EvalReport {
  std::optional<double> srcc_mean;
  std::optional<double> plcc_mean;
  std::optional<double> srcc_std;
  std::optional<double> plcc_std;
  double accuracy = 0.0;
  double mean_emd = 0.0;
  std::size_t count = 0;
};

/// Distributions -> (mu, sigma) -> SRCC/PLCC on means and on standard
/// deviations separately, plus binary accuracy and mean EMD.
inline EvalReport evaluate(std::span<const data::RatingDistribution> pred,
                           std::span<const data::RatingDistribution> gt) {
  if (pred.size() != gt.size()) throw DimensionError("evaluate: prediction and ground-truth counts differ");
  if (pred.empty()) throw std::invalid_argument("evaluate: no samples");
  std::vector<double> pm, gm, ps, gs;
  EvalReport rep;
  rep.count = pred.size();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pm.push_back(dist_mean(pred[i]));
    gm.push_back(dist_mean(gt[i]));
    ps.push_back(dist_std(pred[i]));
    gs.push_back(dist_std(gt[i]));
    rep.mean_emd += emd_loss(pred[i], gt[i]);
  }
  rep.mean_emd /= static_cast<double>(pred.size());
  auto guarded = [](auto fn, const std::vector<double>& a, const std::vector<double>& b) -> std::optional<double> {
    try {
      return fn(a, b);
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
  };
  auto s = [](std::span<const double> a, std::span<const double> b) { return srcc(a, b); };
  auto p = [](std::span<const double> a, std::span<const double> b) { return plcc(a, b); };
  rep.srcc_mean = guarded(s, pm, gm);
  rep.plcc_mean = guarded(p, pm, gm);
  rep.srcc_std = guarded(s, ps, gs);
  rep.plcc_std = guarded(p, ps, gs);
  rep.accuracy = binary_accuracy(pm, gm);
  return rep;
}

/// Fixed key order; undefined correlations serialize as null.
inline nlohmann::ordered_json to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  nlohmann::ordered_json j;
  j["srcc_mean"] = opt(r.srcc_mean);
  j["plcc_mean"] = opt(r.plcc_mean);
  j["srcc_std"] = opt(r.srcc_std);
  j["plcc_std"] = opt(r.plcc_std);
  j["accuracy"] = r.accuracy;
  j["mean_emd"] = r.mean_emd;
  j["count"] = r.count;
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  EvalReport r;
  r.srcc_mean = opt("srcc_mean");
  r.plcc_mean = opt("plcc_mean");
  r.srcc_std = opt("srcc_std");
  r.plcc_std = opt("plcc_std");
  r.accuracy = j.at("accuracy").get<double>();
  r.mean_emd = j.at("mean_emd").get<double>();
  r.count = j.value("count", std::size_t{0});
  return r;
}

}  // namespace ovc::metrics
