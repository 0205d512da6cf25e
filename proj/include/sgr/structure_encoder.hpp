#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "sgr/context_encoder.hpp"
#include "sgr/error.hpp"
#include "sgr/params.hpp"
#include "sgr/scene_graph.hpp"
#include "sgr/tape.hpp"
#include "sgr/vocab.hpp"

namespace sgr {

// Flattened view of one scene: which nodes are active and which directed
// attention links (i attends j) exist, each carrying the model-level
// relation rows whose embeddings are summed for that link.
struct SceneStructure {
    int num_nodes = 0;
    std::vector<uint8_t> active;
    struct Link {
        int i = 0; // attending node
        int j = 0; // attended node
        std::vector<int> rel_rows;
    };
    std::vector<Link> links;
};

// Assembles the attention structure for one time step:
//   - static edges of the complete graph, in both directions
//   - LocateIn links between each existing entity and its current location
//     node, in both directions
//   - a self-loop on every node with its own [SELF] relation
//   - Global attends every active node via [GLOBAL-LINK]
// A link survives only if both endpoints are active. Masked entities are
// excluded from every neighborhood including their own, so their rows carry
// no link at all and the encoder output for them is exactly zero.
inline SceneStructure build_structure(const CompleteGraph& g, const SceneGraph& scene,
                                      const RelationVocab& rels) {
    require(scene.num_entities == g.num_entities && scene.loc_cols == g.loc_cols(),
            "build_structure: scene does not belong to this complete graph");
    SceneStructure s;
    s.num_nodes = g.num_nodes();
    s.active = scene.node_mask(g);

    std::map<std::pair<int, int>, std::vector<int>> merged;
    auto add_link = [&](int i, int j, int rel_row) {
        if (!s.active[i] || !s.active[j]) return;
        merged[{i, j}].push_back(rel_row);
    };
    for (const StaticEdge& e : g.static_edges) {
        int row = rels.id(g.relation_vocab[e.relation]);
        add_link(e.i, e.j, row);
        add_link(e.j, e.i, row);
    }
    for (int e = 0; e < g.num_entities; ++e) {
        if (!scene.exists(e)) continue;
        int loc_node = g.node_of_column(scene.location[e]);
        add_link(g.entity_node(e), loc_node, RelationVocab::kLocateIn);
        add_link(loc_node, g.entity_node(e), RelationVocab::kLocateIn);
    }
    for (int i = 0; i < s.num_nodes; ++i) add_link(i, i, RelationVocab::kSelfLoop);
    for (int j = 0; j < s.num_nodes; ++j)
        if (j != g.global_index) add_link(g.global_index, j, RelationVocab::kGlobalLink);

    for (auto& [key, rows] : merged) {
        std::sort(rows.begin(), rows.end());
        rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
        s.links.push_back({key.first, key.second, std::move(rows)});
    }
    return s;
}

inline void init_structure_params(ParamStore& ps, const ModelConfig& cfg, int num_relations,
                                  std::mt19937_64& rng) {
    auto uni = [&](int r, int c) {
        double b = 1.0 / std::sqrt(static_cast<double>(c));
        return random_uniform(r, c, -b, b, rng);
    };
    ps.add("gat.w1", uni(cfg.d, cfg.d));
    ps.add("gat.w2", uni(num_relations, cfg.d));
    ps.add("gat.a", uni(3 * cfg.d, 1));
}

struct SceneEncoding {
    Tape::Val alpha;    // M x M attention, masked entries exactly 0
    Tape::Val h;        // M x d node representations
    Tape::Val h_global; // 1 x d
};

// Single-head relation-aware graph attention:
//   e_ij   = LeakyReLU_0.2( a^T [ W1 h_i || W1 h_j || W2 r_ij ] )
//   alpha  = row-softmax of e over each neighborhood
//   h_i    = ELU( sum_j alpha_ij h_j )
// The attended values are the raw node features, not the W1 projections.
// The additive term decomposes as a1.W1h_i + a2.W1h_j + a3.W2r_ij, so the
// score matrix is an outer sum of two vectors plus a sparse relation term.
inline SceneEncoding encode_scene(Tape& tape, const BoundParams& bp, const SceneStructure& s,
                                  Tape::Val feats, int global_index) {
    const Tensor& fv = tape.value(feats);
    require(fv.rows() == s.num_nodes, "encode_scene: feature row count does not match structure");
    const int d = fv.cols();
    const int m = s.num_nodes;

    Tape::Val wh = tape.matmul(feats, bp["gat.w1"]);
    Tape::Val a1 = tape.slice_rows(bp["gat.a"], 0, d);
    Tape::Val a2 = tape.slice_rows(bp["gat.a"], d, 2 * d);
    Tape::Val a3 = tape.slice_rows(bp["gat.a"], 2 * d, 3 * d);
    Tape::Val s_i = tape.matmul(wh, a1); // M x 1, contribution of the attending node
    Tape::Val s_j = tape.matmul(wh, a2); // M x 1, contribution of the attended node

    std::vector<std::vector<int>> groups;
    std::vector<std::pair<int, int>> coords;
    for (const auto& link : s.links) {
        groups.push_back(link.rel_rows);
        coords.emplace_back(link.i, link.j);
    }
    Tape::Val scores = tape.add_outer(s_i, tape.transpose(s_j));
    if (!coords.empty()) {
        Tape::Val rel_feats = tape.gather_rows_sum(bp["gat.w2"], groups); // E x d
        Tape::Val s_rel = tape.matmul(rel_feats, a3);                     // E x 1
        scores = tape.add(scores, tape.scatter_to_dense(s_rel, coords, m, m));
    }
    scores = tape.leaky_relu(scores, 0.2);

    const double ninf = -std::numeric_limits<double>::infinity();
    Tensor mask(m, m, ninf);
    for (const auto& link : s.links) mask.at(link.i, link.j) = 0.0;

    SceneEncoding enc;
    enc.alpha = tape.softmax_rows_masked(scores, mask);
    enc.h = tape.elu(tape.matmul(enc.alpha, feats));
    enc.h_global = tape.slice_rows(enc.h, global_index, global_index + 1);
    return enc;
}

} // namespace sgr
