#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovc/dataio.hpp"
#include "ovc/metrics.hpp"
#include "ovc/model.hpp"

namespace ovc::train {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of every parameter, then gradients are
/// zeroed. Moments are created lazily on first use.
inline void adam_step(ad::ParameterStore& params, AdamState& s, double lr) {
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (auto& [name, p] : params) {
    if (p.grad.shape() != p.value.shape()) {
      throw DimensionError("adam_step: gradient of '" + name + "' has shape " + shape_str(p.grad.shape()) +
                           ", parameter " + shape_str(p.value.shape()));
    }
    auto [mi, fresh_m] = s.m.try_emplace(name, Tensor(p.value.shape()));
    auto [vi, fresh_v] = s.v.try_emplace(name, Tensor(p.value.shape()));
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    if (m.shape() != p.value.shape() || v.shape() != p.value.shape()) {
      throw DimensionError("adam_step: moment shape mismatch for '" + name + "'");
    }
    auto w = p.value.data();
    auto g = p.grad.data();
    auto md = m.data();
    auto vd = v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      md[i] = s.beta1 * md[i] + (1.0 - s.beta1) * g[i];
      vd[i] = s.beta2 * vd[i] + (1.0 - s.beta2) * g[i] * g[i];
      w[i] -= lr * (md[i] / c1) / (std::sqrt(vd[i] / c2) + s.epsilon);
    }
    p.grad.fill(0.0);
  }
}

enum class LrSchedule { step_decay, constant };

inline LrSchedule parse_schedule(std::string_view s) {
  if (s == "step" || s == "step_decay") return LrSchedule::step_decay;
  if (s == "constant") return LrSchedule::constant;
  throw std::invalid_argument("unknown lr schedule '" + std::string(s) + "' (expected step or constant)");
}

/// Base rate for epochs 1-2, divided by 10 at epochs 3, 6, 9, ...
inline double lr_at_epoch(std::size_t epoch, double base_lr = 3e-5, LrSchedule schedule = LrSchedule::step_decay) {
  if (epoch == 0) throw std::invalid_argument("lr_at_epoch: epochs are 1-based");
  if (schedule == LrSchedule::constant || epoch < 3) return base_lr;
  return base_lr * std::pow(10.0, -static_cast<double>((epoch - 3) / 3 + 1));
}

struct TrainConfig {
  model::ModelConfig model = model::make_config(Profile::desk);
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  double base_lr = 3e-5;
  LrSchedule schedule = LrSchedule::step_decay;
  std::uint64_t seed = 0;
  /// When set, training stops after this many updates; the epoch count is
  /// extended as needed to reach it.
  std::optional<std::size_t> max_steps;
  bool evaluate_each_epoch = true;

  void validate() const {
    if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
    if (epochs == 0 && !max_steps) throw std::invalid_argument("epochs must be positive");
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("learning rate must be positive");
    if (max_steps && *max_steps == 0) throw std::invalid_argument("max steps must be positive");
    model.validate();
  }
};

/// Paper defaults at full scale; the desk profile trains with batch 8.
inline TrainConfig default_config(Profile profile) {
  TrainConfig c;
  c.model = model::make_config(profile);
  c.batch_size = profile == Profile::full ? 128 : 8;
  return c;
}

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

inline std::string to_jsonl(const StepLog& s) {
  nlohmann::ordered_json j;
  j["step"] = s.step;
  j["epoch"] = s.epoch;
  j["lr"] = s.lr;
  j["loss"] = s.loss;
  return j.dump();
}

struct EpochSummary {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean of step losses in the epoch
  std::optional<metrics::EvalReport> eval;
};

struct TrainResult {
  model::Model final_model;
  model::Model best_model;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  std::vector<EpochSummary> epochs;
  std::vector<StepLog> log;
};

namespace detail {

/// Consecutive chunks of `batch` indices; a trailing singleton joins the
/// previous chunk so train-mode batch norm always sees two samples.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch)
    out.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + batch));
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

inline Tensor target_tensor(std::span<const data::ImageRecord* const> recs) {
  Tensor t({recs.size(), kNumBuckets});
  for (std::size_t b = 0; b < recs.size(); ++b) {
    const auto d = recs[b]->distribution();
    for (std::size_t k = 0; k < kNumBuckets; ++k) t[b * kNumBuckets + k] = d.p[k];
  }
  return t;
}

inline bool better(const metrics::EvalReport& a, const std::optional<metrics::EvalReport>& best) {
  if (!best) return true;
  const double inf = std::numeric_limits<double>::infinity();
  const double sa = a.srcc_mean.value_or(-inf), sb = best->srcc_mean.value_or(-inf);
  if (sa != sb) return sa > sb;
  return a.mean_emd < best->mean_emd;
}

}  // namespace detail

inline std::vector<const data::ImageRecord*> records_in(const data::Dataset& ds, Split split) {
  std::vector<const data::ImageRecord*> out;
  for (const auto& r : ds.records)
    if (r.split == split) out.push_back(&r);
  return out;
}

inline metrics::EvalReport evaluate_model(const model::Model& m, std::span<const data::ImageRecord* const> recs) {
  const auto preds = model::predict(m, recs);
  std::vector<data::RatingDistribution> p, g;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    p.push_back(preds[i].distribution);
    g.push_back(recs[i]->distribution());
  }
  return metrics::evaluate(p, g);
}

using StepCallback = std::function<void(const StepLog&)>;

/// Mini-batch Adam on mean batch EMD. After each epoch the model is scored
/// in eval mode on the test split (the train split when there is none) and
/// the best epoch by SRCC of means is retained.
inline TrainResult train(const data::Dataset& ds, const TrainConfig& cfg, const StepCallback& on_step = {}) {
  cfg.validate();
  if (ds.profile != cfg.model.profile) {
    throw std::invalid_argument("dataset profile " + std::string(to_string(ds.profile)) + " does not match model profile " +
                                std::string(to_string(cfg.model.profile)));
  }
  const auto train_recs = records_in(ds, Split::train);
  if (train_recs.empty()) throw std::invalid_argument("train: dataset has no train-split records");
  auto eval_recs = records_in(ds, Split::test);
  if (eval_recs.empty()) eval_recs = train_recs;

  TrainResult res{model::init_model(cfg.model, cfg.seed), {}, 0, 0, {}, {}};
  model::Model& m = res.final_model;
  m.params.zero_grad();
  AdamState adam;
  std::mt19937_64 rng(cfg.seed ^ 0x5eedba7c4ULL);
  std::optional<metrics::EvalReport> best;

  const std::size_t per_epoch = detail::make_batches(std::vector<std::size_t>(train_recs.size()), cfg.batch_size).size();
  const std::size_t epochs = cfg.max_steps ? (*cfg.max_steps + per_epoch - 1) / per_epoch : cfg.epochs;

  std::vector<std::size_t> order(train_recs.size());
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, cfg.base_lr, cfg.schedule);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    EpochSummary summary{epoch, lr, 0.0, std::nullopt};
    std::size_t epoch_steps = 0;
    for (const auto& idx : detail::make_batches(order, cfg.batch_size)) {
      if (cfg.max_steps && res.steps == *cfg.max_steps) break;
      std::vector<const data::ImageRecord*> batch;
      for (std::size_t i : idx) batch.push_back(train_recs[i]);
      ad::Tape tape;
      model::Graph g = model::Graph::training(tape, m, ad::Mode::train);
      const auto out = model::forward(g, model::make_batch(batch, cfg.model));
      const ad::Var loss = metrics::emd_loss(out.distribution, detail::target_tensor(batch));
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss " + std::to_string(value) + " at step " + std::to_string(res.steps + 1) +
                            " (epoch " + std::to_string(epoch) + ")");
      }
      tape.backward(loss);
      adam_step(m.params, adam, lr);
      ++res.steps;
      ++epoch_steps;
      summary.train_loss += value;
      res.log.push_back({res.steps, epoch, lr, value});
      if (on_step) on_step(res.log.back());
    }
    if (epoch_steps == 0) break;
    summary.train_loss /= static_cast<double>(epoch_steps);
    if (cfg.evaluate_each_epoch || epoch == epochs) {
      summary.eval = evaluate_model(m, eval_recs);
      if (detail::better(*summary.eval, best)) {
        best = summary.eval;
        res.best_model = m;
        res.best_epoch = epoch;
      }
    }
    res.epochs.push_back(summary);
  }
  if (!best) {
    res.best_model = m;
    res.best_epoch = res.epochs.empty() ? 0 : res.epochs.back().epoch;
  }
  return res;
}

}  // namespace ovc::train
