#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ovc/dataio.hpp"
#include "ovc/geometry.hpp"
#include "ovc/model_config.hpp"
#include "ovc/ops.hpp"

// Object-level attention-based re-weighting. All ops are batched: a batch of
// B images carries B*L regional rows, image-major, regions in stored order.

namespace ovc::model {

/// Model inputs for a batch of images.
struct BatchInputs {
  std::size_t batch = 0;
  Tensor regional;                    // [B*L x d_r]
  Tensor global;                      // narrow [B x d_g] or wide [B*25 x d_g]
  std::vector<geometry::Box> boxes;   // B*L boxes
};

inline BatchInputs make_batch(std::span<const data::ImageRecord* const> records, const ModelConfig& config) {
  const ProfileDims& d = config.dims;
  const std::size_t B = records.size();
  BatchInputs in;
  in.batch = B;
  in.regional = Tensor({B * kNumRegions, d.regional_dim});
  const bool wide = config.global_mode == GlobalMode::wide;
  in.global = wide ? Tensor({B * d.grid_cells(), d.global_dim}) : Tensor({B, d.global_dim});
  for (std::size_t b = 0; b < B; ++b) {
    const data::ImageRecord& r = *records[b];
    if (r.regions.size() != kNumRegions) {
      throw DimensionError("record " + r.id + ": expected " + std::to_string(kNumRegions) + " regions");
    }
    for (std::size_t i = 0; i < kNumRegions; ++i) {
      const auto& f = r.regions[i].feature;
      if (f.size() != d.regional_dim) throw DimensionError("record " + r.id + ": regional feature length mismatch");
      std::copy(f.begin(), f.end(), &in.regional.data()[(b * kNumRegions + i) * d.regional_dim]);
      in.boxes.push_back(r.regions[i].box);
    }
    const auto& g = wide ? r.global_grid : r.global_feature;
    const std::size_t expect = wide ? d.grid_cells() * d.global_dim : d.global_dim;
    if (g.size() != expect) {
      throw DimensionError("record " + r.id + ": " + std::string(to_string(config.global_mode)) +
                           " global feature has length " + std::to_string(g.size()) + ", expected " +
                           std::to_string(expect));
    }
    std::copy(g.begin(), g.end(), &in.global.data()[b * expect]);
  }
  return in;
}

/// Regional reduction: ReLU(FC(d_r -> r)) applied to every region row.
inline ad::Var reduce_regional(Graph& g, const ad::Var& regional) {
  if (regional.value().rank() != 2 || regional.value().dim(1) != g.config().dims.regional_dim) {
    throw DimensionError("reduce_regional: expected rows of length " + std::to_string(g.config().dims.regional_dim) +
                         ", got " + shape_str(regional.shape()));
  }
  return ad::relu(fc(g, regional, "fcn_r"));
}

/// Global reduction. Narrow: ReLU(FC(d_g -> g)). Wide: three parallel 1x1
/// convolution blocks (ReLU) over the 5x5 grid, channel-concatenated, then
/// global average pooling.
inline ad::Var reduce_global(Graph& g, const ad::Var& global) {
  const ModelConfig& c = g.config();
  const auto& s = global.shape();
  if (s.size() != 2 || s[1] != c.dims.global_dim) {
    throw DimensionError("reduce_global: expected rows of length " + std::to_string(c.dims.global_dim) + ", got " +
                         shape_str(s));
  }
  if (c.global_mode == GlobalMode::narrow) return ad::relu(fc(g, global, "fcn_g"));
  if (s[0] % c.dims.grid_cells() != 0) {
    throw DimensionError("reduce_global: wide input needs 25 grid rows per image, got " + shape_str(s));
  }
  std::vector<ad::Var> blocks;
  for (int b = 0; b < 3; ++b) blocks.push_back(ad::relu(fc(g, global, "conv_g.block" + std::to_string(b))));
  return ad::segment_mean(ad::concat(blocks, 1), c.dims.grid_cells());
}

/// a = sigmoid(FCN_o(v_1 ++ ... ++ v_L ++ v_global)) in (0,1)^L.
inline ad::Var predict_object_attention(Graph& g, const ad::Var& reduced_regional, const ad::Var& reduced_global) {
  const ModelConfig& c = g.config();
  const std::size_t B = reduced_global.value().dim(0);
  if (reduced_regional.value().dim(0) != B * kNumRegions) {
    throw DimensionError("predict_object_attention: " + std::to_string(reduced_regional.value().dim(0)) +
                         " regional rows for " + std::to_string(B) + " images (expected " +
                         std::to_string(kNumRegions) + " per image)");
  }
  const ad::Var flat = ad::reshape(reduced_regional, {B, kNumRegions * c.dims.reduced_regional});
  ad::Var h = fc(g, ad::concat({flat, reduced_global}, 1), "fcn_o.fc1");
  h = ad::batch_norm(h, g.param("fcn_o.bn.gamma"), g.param("fcn_o.bn.beta"), g.batch_norm_state());
  h = ad::relu(h);
  return ad::sigmoid(fc(g, h, "fcn_o.fc2"));
}

/// v~_i = a_i * v_i for every region row.
inline ad::Var reweight(const ad::Var& reduced_regional, const ad::Var& attention) {
  if (reduced_regional.value().dim(0) != attention.value().size()) {
    throw DimensionError("reweight: " + shape_str(reduced_regional.shape()) + " rows vs attention " +
                         shape_str(attention.shape()));
  }
  return ad::scale_rows(reduced_regional, attention);
}

/// FCN_d: concatenated L region/node features -> softmax over K buckets.
inline ad::Var distribution_head(Graph& g, const ad::Var& region_rows, std::size_t batch) {
  const ad::Var flat = ad::reshape(region_rows, {batch, g.config().head_input_dim()});
  return ad::softmax(fc(g, flat, "fcn_d"), 1);
}

struct OarOutput {
  ad::Var attention;        // [B x L]
  ad::Var weighted;         // [B*L x r]
  ad::Var reduced_global;   // [B x g]
  std::optional<ad::Var> distribution;
};

/// Re-weighting stage; with `with_head` the weighted regionals also go
/// through the distribution head (the OAR-only model).
inline OarOutput oar_forward(Graph& g, const BatchInputs& in, bool with_head) {
  ad::Tape& t = g.tape();
  const ad::Var regional = reduce_regional(g, t.constant(in.regional));
  const ad::Var global = reduce_global(g, t.constant(in.global));
  const ad::Var a = predict_object_attention(g, regional, global);
  OarOutput out{a, reweight(regional, a), global, std::nullopt};
  if (with_head) out.distribution = distribution_head(g, out.weighted, in.batch);
  return out;
}

}  // namespace ovc::model
