#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ovc/autodiff.hpp"
#include "ovc/geometry.hpp"
#include "ovc/ops.hpp"
#include "ovc/profile.hpp"

namespace ovc::model {

/// Ablation arms: equal-weight regional concatenation, object-level
/// re-weighting only, and re-weighting followed by graph aggregation.
enum class ModelArm { baseline, oar, oar_gaa };
enum class GlobalMode { narrow, wide };

inline std::string_view to_string(ModelArm a) {
  switch (a) {
    case ModelArm::baseline: return "baseline";
    case ModelArm::oar: return "oar";
    case ModelArm::oar_gaa: return "oar_gaa";
  }
  return "?";
}

inline ModelArm parse_arm(std::string_view s) {
  if (s == "baseline") return ModelArm::baseline;
  if (s == "oar") return ModelArm::oar;
  if (s == "oar_gaa" || s == "oar+gaa") return ModelArm::oar_gaa;
  throw std::invalid_argument("unknown model arm '" + std::string(s) + "' (expected baseline, oar or oar_gaa)");
}

inline std::string_view to_string(GlobalMode m) { return m == GlobalMode::wide ? "wide" : "narrow"; }

inline GlobalMode parse_global_mode(std::string_view s) {
  if (s == "narrow") return GlobalMode::narrow;
  if (s == "wide") return GlobalMode::wide;
  throw std::invalid_argument("unknown global mode '" + std::string(s) + "' (expected narrow or wide)");
}

/// Which pairwise relations feed the edge scorer.
struct RelationToggles {
  bool visual = true;    // s_ij, L1 distance of projected nodes
  bool semantic = true;  // c_ij, concatenated projections
  bool spatial = true;   // d_ij, [center distance, Hausdorff, IoU]

  friend bool operator==(const RelationToggles&, const RelationToggles&) = default;
};

struct ModelConfig {
  Profile profile = Profile::desk;
  ProfileDims dims = kDeskDims;
  ModelArm arm = ModelArm::oar_gaa;
  GlobalMode global_mode = GlobalMode::narrow;
  RelationToggles relations;

  std::size_t regions() const noexcept { return kNumRegions; }
  /// Attention predictor input: L reduced regionals followed by the reduced global.
  std::size_t attention_input_dim() const noexcept { return kNumRegions * dims.reduced_regional + dims.reduced_global; }
  /// Distribution head input: L concatenated region (or node) features.
  std::size_t head_input_dim() const noexcept { return kNumRegions * dims.reduced_regional; }
  std::size_t node_dim() const noexcept { return dims.node_dim(); }
  std::size_t edge_input_dim() const noexcept {
    return (relations.visual ? 1 : 0) + (relations.semantic ? 2 * dims.attention_dim : 0) + (relations.spatial ? 3 : 0);
  }
  std::size_t conv_block_width() const noexcept { return dims.reduced_global / 3; }
  bool uses_global() const noexcept { return arm != ModelArm::baseline; }

  void validate() const {
    if (global_mode == GlobalMode::wide && dims.reduced_global % 3 != 0) {
      throw std::invalid_argument("wide global path needs a reduced-global width divisible by 3");
    }
    if (arm == ModelArm::oar_gaa && edge_input_dim() == 0) {
      throw std::invalid_argument("graph attention needs at least one relation enabled");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline ModelConfig make_config(Profile profile, ModelArm arm = ModelArm::oar_gaa,
                               GlobalMode global_mode = GlobalMode::narrow, RelationToggles relations = {}) {
  ModelConfig c{profile, dims_for(profile), arm, global_mode, relations};
  c.validate();
  return c;
}

/// Learnable weights plus the batch-norm running statistics of the
/// attention predictor.
struct Model {
  ModelConfig config;
  ad::ParameterStore params;
  ad::BatchNormState attention_bn;
};

namespace detail {

inline void add_fc(ad::ParameterStore& store, std::mt19937_64& rng, const std::string& prefix, std::size_t out,
                   std::size_t in, bool bias = true) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor w({out, in});
  for (double& v : w.data()) v = u(rng);
  store.add(prefix + (bias ? ".weight" : ""), std::move(w));
  if (bias) store.add(prefix + ".bias", Tensor({out}, 0.0));
}

}  // namespace detail

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, BN gamma 1 / beta 0.
inline Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m{config, {}, ad::BatchNormState(config.uses_global() ? config.dims.attention_hidden : 0)};
  std::mt19937_64 rng(seed);
  const ProfileDims& d = config.dims;
  detail::add_fc(m.params, rng, "fcn_r", d.reduced_regional, d.regional_dim);
  detail::add_fc(m.params, rng, "fcn_d", kNumBuckets, config.head_input_dim());
  if (config.uses_global()) {
    if (config.global_mode == GlobalMode::narrow) {
      detail::add_fc(m.params, rng, "fcn_g", d.reduced_global, d.global_dim);
    } else {
      for (int b = 0; b < 3; ++b)
        detail::add_fc(m.params, rng, "conv_g.block" + std::to_string(b), config.conv_block_width(), d.global_dim);
    }
    detail::add_fc(m.params, rng, "fcn_o.fc1", d.attention_hidden, config.attention_input_dim());
    m.params.add("fcn_o.bn.gamma", Tensor({d.attention_hidden}, 1.0));
    m.params.add("fcn_o.bn.beta", Tensor({d.attention_hidden}, 0.0));
    detail::add_fc(m.params, rng, "fcn_o.fc2", kNumRegions, d.attention_hidden);
  }
  if (config.arm == ModelArm::oar_gaa) {
    detail::add_fc(m.params, rng, "fcn_gn", d.node_global, d.reduced_global);
    detail::add_fc(m.params, rng, "gaa.w_att", d.attention_dim, config.node_dim(), false);
    detail::add_fc(m.params, rng, "fcn_e.fc1", config.edge_input_dim(), config.edge_input_dim());
    detail::add_fc(m.params, rng, "fcn_e.fc2", 1, config.edge_input_dim());
    detail::add_fc(m.params, rng, "gaa.w_agg", d.reduced_regional, config.node_dim(), false);
  }
  return m;
}

/// Binds model parameters onto a tape. Training graphs accumulate gradients
/// into the model; inference graphs read a shared model without mutating it.
class Graph {
 public:
  static Graph training(ad::Tape& tape, Model& model, ad::Mode mode) {
    Graph g(tape, model.config, &model.params, model.params, mode);
    g.bn_ = &model.attention_bn;
    g.bn_->mode = mode;
    return g;
  }

  static Graph inference(ad::Tape& tape, const Model& model) {
    Graph g(tape, model.config, nullptr, model.params, ad::Mode::eval);
    g.bn_copy_ = model.attention_bn;
    g.bn_copy_.mode = ad::Mode::eval;
    return g;
  }

  Graph(Graph&& other) noexcept
      : tape_(other.tape_), config_(other.config_), trainable_(other.trainable_), frozen_(other.frozen_),
        mode_(other.mode_), bn_(other.bn_), bn_copy_(std::move(other.bn_copy_)) {}

  ad::Var param(const std::string& name) {
    return trainable_ ? tape_.parameter(*trainable_, name) : tape_.parameter(*frozen_, name);
  }
  ad::Tape& tape() { return tape_; }
  const ModelConfig& config() const { return config_; }
  ad::Mode mode() const { return mode_; }
  ad::BatchNormState& batch_norm_state() { return bn_ ? *bn_ : bn_copy_; }

 private:
  Graph(ad::Tape& tape, const ModelConfig& config, ad::ParameterStore* trainable, const ad::ParameterStore& frozen,
        ad::Mode mode)
      : tape_(tape), config_(config), trainable_(trainable), frozen_(&frozen), mode_(mode) {}

  ad::Tape& tape_;
  const ModelConfig& config_;
  ad::ParameterStore* trainable_;
  const ad::ParameterStore* frozen_;
  ad::Mode mode_;
  ad::BatchNormState* bn_ = nullptr;
  ad::BatchNormState bn_copy_;
};

/// Fully connected layer `prefix.weight` / `prefix.bias`.
inline ad::Var fc(Graph& g, const ad::Var& x, const std::string& prefix) {
  return ad::linear(x, g.param(prefix + ".weight"), g.param(prefix + ".bias"));
}

}  // namespace ovc::model
