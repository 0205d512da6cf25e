#pragma once

#include <random>
#include <string>
#include <vector>

#include "sgr/context_encoder.hpp"
#include "sgr/corpus.hpp"
#include "sgr/error.hpp"
#include "sgr/params.hpp"
#include "sgr/scene_graph.hpp"
#include "sgr/structure_encoder.hpp"
#include "sgr/vocab.hpp"

namespace sgr {

inline void init_predictor_params(ParamStore& ps, const ModelConfig& cfg, std::mt19937_64& rng) {
    auto uni = [&](int r, int c) {
        double b = 1.0 / std::sqrt(static_cast<double>(c));
        return random_uniform(r, c, -b, b, rng);
    };
    const int h = cfg.predictor_hidden();
    ps.add("head.mask_w", uni(3 * cfg.d, h));
    ps.add("head.mask_b", Tensor(1, h));
    ps.add("head.mask_v", uni(h, 1));
    ps.add("head.mask_c", Tensor(1, 1));
    ps.add("head.loc_w", uni(4 * cfg.d, h));
    ps.add("head.loc_b", Tensor(1, h));
    ps.add("head.loc_v", uni(h, 1));
    ps.add("head.loc_c", Tensor(1, 1));
}

// The full parameter set plus the vocabularies it is keyed on. Parameter
// creation order is fixed (context encoder, structure encoder, predictor) so
// optimizer state and checkpoints line up across runs.
struct Model {
    ModelConfig cfg;
    Vocab vocab;
    RelationVocab rels;
    ParamStore params;

    static Model init(const ModelConfig& cfg, Vocab vocab, RelationVocab rels,
                      unsigned long seed) {
        cfg.validate();
        Model m;
        m.cfg = cfg;
        m.vocab = std::move(vocab);
        m.rels = std::move(rels);
        std::mt19937_64 rng(seed);
        init_context_params(m.params, cfg, m.vocab.size(), rng);
        init_structure_params(m.params, cfg, m.rels.size(), rng);
        init_predictor_params(m.params, cfg, rng);
        return m;
    }
};

// Everything derivable from one instance before any parameters are touched:
// the complete graph (knowledge already folded in), gold scenes when
// annotated, token ids for each concept surface and for each of the T+1
// step inputs (the virtual init input first).
struct PreparedInstance {
    ProcedureInstance instance;
    CompleteGraph graph;
    std::vector<SceneGraph> gold;                 // empty when unannotated
    std::vector<std::vector<int>> concept_tokens; // per node
    std::vector<std::vector<int>> step_tokens;    // T+1 sequences

    int num_steps() const { return instance.num_steps(); }
    int num_entities() const { return instance.num_entities(); }
    bool has_gold() const { return !gold.empty(); }
};

inline std::vector<int> concept_token_ids(const Vocab& vocab, const ConceptNode& node) {
    std::vector<int> ids = {Vocab::kCls};
    switch (node.kind) {
        case NodeKind::Global: ids.push_back(Vocab::kGlobal); break;
        case NodeKind::UnkLoc: ids.push_back(Vocab::kUnkLoc); break;
        default:
            for (const std::string& t : tokenize(node.surface)) ids.push_back(vocab.id(t));
    }
    ids.push_back(Vocab::kSep);
    return ids;
}

inline PreparedInstance prepare_instance(const ProcedureInstance& inst, const Vocab& vocab,
                                         const ModelConfig& cfg,
                                         const std::vector<KnowledgeTriple>& extra_triples = {}) {
    PreparedInstance pi;
    pi.instance = inst;
    pi.graph = build_complete_graph(inst);
    enhance_with_knowledge(pi.graph, inst.knowledge_triples);
    if (!extra_triples.empty()) enhance_with_knowledge(pi.graph, extra_triples);
    if (inst.has_gold()) pi.gold = construct_gold_graphs(inst, pi.graph);
    for (const ConceptNode& node : pi.graph.nodes)
        pi.concept_tokens.push_back(concept_token_ids(vocab, node));
    pi.step_tokens.push_back(vocab.ids(init_step_input(inst.prompt, cfg.l_max)));
    for (const std::string& sentence : inst.sentences)
        pi.step_tokens.push_back(vocab.ids(restructure_input(sentence, inst.entities, cfg.l_max)));
    return pi;
}

} // namespace sgr
