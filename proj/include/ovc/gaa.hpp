#pragma once

#include <array>
#include <span>
#include <vector>

#include "ovc/geometry.hpp"
#include "ovc/model_config.hpp"
#include "ovc/oar.hpp"
#include "ovc/ops.hpp"

// Graph attention-based aggregation over the complete OVC graph (self-loops
// included). Edge rows are ordered (image, central node i, neighbour j);
// alpha_ij weights the contribution of node j to central node i.

namespace ovc::model {

/// h_i = [v~_i ++ ReLU(FC(g -> node_global))(v_global)]; the global suffix is
/// shared by every node of an image.
inline ad::Var build_nodes(Graph& g, const ad::Var& weighted, const ad::Var& reduced_global) {
  const std::size_t B = reduced_global.value().dim(0);
  if (weighted.value().rank() != 2 || weighted.value().dim(0) != B * kNumRegions ||
      weighted.value().dim(1) != g.config().dims.reduced_regional) {
    throw DimensionError("build_nodes: weighted regionals " + shape_str(weighted.shape()) + " for " +
                         std::to_string(B) + " images");
  }
  const ad::Var node_global = ad::relu(fc(g, reduced_global, "fcn_gn"));
  std::vector<std::size_t> rows(B * kNumRegions);
  for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r / kNumRegions;
  return ad::concat({weighted, ad::gather_rows(node_global, std::move(rows))}, 1);
}

/// tanh(W_att h) for every node, computed once and shared by all pairs.
inline ad::Var project_nodes(Graph& g, const ad::Var& nodes) {
  return ad::tanh(ad::linear(nodes, g.param("gaa.w_att")));
}

/// Edge scorer input [s_ij ++ c_ij ++ d_ij] for all ordered pairs of nodes
/// within each graph of `nodes_per_graph` nodes. Disabled relations are
/// dropped from the concatenation.
inline ad::Var relation_features(Graph& g, const ad::Var& projected, std::span<const geometry::Box> boxes,
                                 std::size_t nodes_per_graph) {
  const std::size_t total = projected.value().dim(0);
  if (boxes.size() != total || nodes_per_graph == 0 || total % nodes_per_graph != 0) {
    throw DimensionError("relation_features: " + std::to_string(total) + " nodes, " + std::to_string(boxes.size()) +
                         " boxes, " + std::to_string(nodes_per_graph) + " nodes per graph");
  }
  const std::size_t n = nodes_per_graph, graphs = total / n;
  std::vector<std::size_t> central, neighbour;
  central.reserve(total * n);
  neighbour.reserve(total * n);
  Tensor spatial({total * n, 3});
  for (std::size_t b = 0; b < graphs; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t row = central.size();
        central.push_back(b * n + i);
        neighbour.push_back(b * n + j);
        const auto d = geometry::spatial_features(boxes[b * n + i], boxes[b * n + j]);
        for (std::size_t k = 0; k < 3; ++k) spatial[row * 3 + k] = d[k];
      }
  const RelationToggles& on = g.config().relations;
  const ad::Var ti = ad::gather_rows(projected, std::move(central));
  const ad::Var tj = ad::gather_rows(projected, std::move(neighbour));
  std::vector<ad::Var> parts;
  if (on.visual) parts.push_back(ad::l1_distance(ti, tj));
  if (on.semantic) {
    parts.push_back(ti);
    parts.push_back(tj);
  }
  if (on.spatial) parts.push_back(g.tape().constant(std::move(spatial)));
  return ad::concat(parts, 1);
}

/// e_ij = FCN_e(edge input); alpha_i. = softmax_j(e_i.). Returns [G*n x n].
inline ad::Var edge_attention(Graph& g, const ad::Var& edge_input, std::size_t nodes_per_graph) {
  const ad::Var hidden = ad::relu(fc(g, edge_input, "fcn_e.fc1"));
  const ad::Var logits = fc(g, hidden, "fcn_e.fc2");
  const std::size_t rows = logits.value().dim(0) / nodes_per_graph;
  return ad::softmax(ad::reshape(logits, {rows, nodes_per_graph}), 1);
}

/// h'_i = eLU(sum_j alpha_ij W_agg h_j). Returns [G*n x r].
inline ad::Var aggregate(Graph& g, const ad::Var& nodes, const ad::Var& alpha, std::size_t nodes_per_graph) {
  const std::size_t total = nodes.value().dim(0), n = nodes_per_graph, graphs = total / n;
  const ad::Var projected = ad::linear(nodes, g.param("gaa.w_agg"));
  const std::size_t r = projected.value().dim(1);
  const ad::Var mixed = ad::bmm(ad::reshape(alpha, {graphs, n, n}), ad::reshape(projected, {graphs, n, r}));
  return ad::elu(ad::reshape(mixed, {total, r}));
}

struct GaaStage {
  ad::Var alpha;   // [G*n x n]
  ad::Var output;  // [G*n x r]
};

/// Graph stage alone: nodes and boxes in, aggregated node features out.
inline GaaStage gaa_stage(Graph& g, const ad::Var& nodes, std::span<const geometry::Box> boxes,
                          std::size_t nodes_per_graph) {
  const ad::Var projected = project_nodes(g, nodes);
  const ad::Var alpha = edge_attention(g, relation_features(g, projected, boxes, nodes_per_graph), nodes_per_graph);
  return {alpha, aggregate(g, nodes, alpha, nodes_per_graph)};
}

struct GaaOutput {
  ad::Var distribution;  // [B x K]
  ad::Var attention;     // object-level, [B x L]
  ad::Var alpha;         // graph, [B*L x L]
  ad::Var nodes;         // [B*L x node_dim]
  ad::Var aggregated;    // [B*L x r]
};

/// OAR stage -> nodes -> graph attention -> aggregation -> node features
/// concatenated in node order -> FCN_d.
inline GaaOutput gaa_forward(Graph& g, const BatchInputs& in) {
  const OarOutput oar = oar_forward(g, in, false);
  const ad::Var nodes = build_nodes(g, oar.weighted, oar.reduced_global);
  const GaaStage stage = gaa_stage(g, nodes, in.boxes, kNumRegions);
  return {distribution_head(g, stage.output, in.batch), oar.attention, stage.alpha, nodes, stage.output};
}

/// Relation features of one ordered node pair, evaluated outside any
/// training graph.
struct PairRelation {
  double visual = 0.0;
  std::vector<double> semantic;
  std::array<double, 3> spatial{};
};

inline PairRelation pair_relation(const Model& model, std::span<const double> hi, std::span<const double> hj,
                                  const geometry::Box& bi, const geometry::Box& bj) {
  ad::Tape tape;
  Graph g = Graph::inference(tape, model);
  const std::size_t dim = model.config.node_dim();
  if (hi.size() != dim || hj.size() != dim) throw DimensionError("pair_relation: node feature length mismatch");
  const ad::Var ti = project_nodes(g, tape.constant(Tensor({1, dim}, std::vector<double>(hi.begin(), hi.end()))));
  const ad::Var tj = project_nodes(g, tape.constant(Tensor({1, dim}, std::vector<double>(hj.begin(), hj.end()))));
  PairRelation out;
  out.visual = ad::l1_distance(ti, tj).value().item();
  const auto& a = ti.value().values();
  const auto& b = tj.value().values();
  out.semantic.assign(a.begin(), a.end());
  out.semantic.insert(out.semantic.end(), b.begin(), b.end());
  out.spatial = geometry::spatial_features(bi, bj);
  return out;
}

}  // namespace ovc::model
