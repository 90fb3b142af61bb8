#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ovc/checkpoint.hpp"
#include "ovc/dataio.hpp"
#include "ovc/gaa.hpp"
#include "ovc/model_config.hpp"
#include "ovc/oar.hpp"

namespace ovc::model {

struct ForwardOutput {
  ad::Var distribution;              // [B x K]
  std::optional<ad::Var> attention;  // object-level, [B x L]
  std::optional<ad::Var> alpha;      // graph, [B*L x L]
};

inline ForwardOutput forward(Graph& g, const BatchInputs& in) {
  switch (g.config().arm) {
    case ModelArm::baseline: {
      const ad::Var regional = reduce_regional(g, g.tape().constant(in.regional));
      return {distribution_head(g, regional, in.batch), std::nullopt, std::nullopt};
    }
    case ModelArm::oar: {
      OarOutput o = oar_forward(g, in, true);
      return {*o.distribution, o.attention, std::nullopt};
    }
    case ModelArm::oar_gaa: {
      GaaOutput o = gaa_forward(g, in);
      return {o.distribution, o.attention, o.alpha};
    }
  }
  throw std::logic_error("forward: unknown arm");
}

struct Prediction {
  data::RatingDistribution distribution{};
  std::optional<std::array<double, kNumRegions>> attention;
};

/// Eval-mode predictions for `records`, in order, processed `batch_size` at a time.
inline std::vector<Prediction> predict(const Model& model, std::span<const data::ImageRecord* const> records,
                                       std::size_t batch_size = 64) {
  if (batch_size == 0) throw std::invalid_argument("predict: batch size must be positive");
  std::vector<Prediction> out;
  out.reserve(records.size());
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const auto chunk = records.subspan(start, std::min(batch_size, records.size() - start));
    ad::Tape tape;
    Graph g = Graph::inference(tape, model);
    const ForwardOutput f = forward(g, make_batch(chunk, model.config));
    const Tensor& dist = f.distribution.value();
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      Prediction p;
      for (std::size_t k = 0; k < kNumBuckets; ++k) p.distribution.p[k] = dist.at(b, k);
      if (f.attention) {
        p.attention.emplace();
        for (std::size_t i = 0; i < kNumRegions; ++i) (*p.attention)[i] = f.attention->value().at(b, i);
      }
      out.push_back(p);
    }
  }
  return out;
}

inline Checkpoint to_checkpoint(const Model& m, std::vector<std::pair<std::string, std::string>> extra = {}) {
  Checkpoint c;
  const auto flag = [](bool b) { return std::string(b ? "1" : "0"); };
  c.metadata = {{"profile", std::string(to_string(m.config.profile))},
                {"arm", std::string(to_string(m.config.arm))},
                {"global_mode", std::string(to_string(m.config.global_mode))},
                {"relation.visual", flag(m.config.relations.visual)},
                {"relation.semantic", flag(m.config.relations.semantic)},
                {"relation.spatial", flag(m.config.relations.spatial)}};
  for (auto& kv : extra) c.metadata.push_back(std::move(kv));
  for (const auto& [name, p] : m.params) c.parameters.emplace(name, p.value);
  if (m.config.uses_global()) {
    c.buffers.emplace("fcn_o.bn.running_mean", m.attention_bn.running_mean);
    c.buffers.emplace("fcn_o.bn.running_var", m.attention_bn.running_var);
  }
  return c;
}

inline ModelConfig config_from_checkpoint(const Checkpoint& c) {
  const auto need = [&](const char* key) -> const std::string& {
    const std::string* v = c.find_meta(key);
    if (!v) throw CheckpointError(std::string("checkpoint metadata lacks '") + key + "'");
    return *v;
  };
  const auto flag = [&](const char* key) {
    const std::string& v = need(key);
    if (v != "0" && v != "1") throw CheckpointError(std::string("bad flag for '") + key + "': " + v);
    return v == "1";
  };
  try {
    return make_config(parse_profile(need("profile")), parse_arm(need("arm")), parse_global_mode(need("global_mode")),
                       {flag("relation.visual"), flag("relation.semantic"), flag("relation.spatial")});
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint metadata: ") + e.what());
  }
}

/// Rebuilds a model; the stored tensor set must match the configuration exactly.
inline Model from_checkpoint(const Checkpoint& c) {
  Model m = init_model(config_from_checkpoint(c), 0);
  if (c.parameters.size() != m.params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(c.parameters.size()) + " parameters, model expects " +
                          std::to_string(m.params.size()));
  }
  for (const auto& [name, t] : c.parameters) {
    if (!m.params.contains(name)) throw CheckpointError("unexpected parameter '" + name + "' in checkpoint");
    if (m.params.at(name).value.shape() != t.shape()) {
      throw CheckpointError("parameter '" + name + "' has shape " + shape_str(t.shape()) + ", expected " +
                            shape_str(m.params.at(name).value.shape()));
    }
    m.params.set_value(name, t);
  }
  if (m.config.uses_global()) {
    const auto buffer = [&](const char* name, Tensor& dst) {
      auto it = c.buffers.find(name);
      if (it == c.buffers.end()) throw CheckpointError(std::string("checkpoint lacks buffer '") + name + "'");
      if (it->second.shape() != dst.shape()) throw CheckpointError(std::string("buffer '") + name + "' has wrong shape");
      dst = it->second;
    };
    buffer("fcn_o.bn.running_mean", m.attention_bn.running_mean);
    buffer("fcn_o.bn.running_var", m.attention_bn.running_var);
  }
  return m;
}

}  // namespace ovc::model
