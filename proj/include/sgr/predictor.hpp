#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sgr/context_encoder.hpp"
#include "sgr/error.hpp"
#include "sgr/model.hpp"
#include "sgr/params.hpp"
#include "sgr/scene_graph.hpp"
#include "sgr/state_reasoner.hpp"
#include "sgr/structure_encoder.hpp"
#include "sgr/tape.hpp"

namespace sgr {

// Probabilities for one predicted scene.
struct ScenePrediction {
    Tensor mask_probs; // N x 1
    Tensor loc_probs;  // N x (L+1), rows sum to 1
};

struct StepLogits {
    Tape::Val mask_logits; // N x 1
    Tape::Val loc_logits;  // N x (L+1)
};

// Both prediction heads for one timestep transition. The two summary vectors
// are shared across every score; each entity contributes its static concept
// feature, and each (entity, location) pair additionally the location's.
inline StepLogits predict_step_logits(Tape& tape, const BoundParams& bp, const ModelConfig& cfg,
                                      Tape::Val h_global, Tape::Val h_cls,
                                      Tape::Val concept_feats, const CompleteGraph& g) {
    require(tape.value(h_global).cols() == cfg.d && tape.value(h_cls).cols() == cfg.d,
            "predict_step: summary width does not match config");
    require(tape.value(concept_feats).rows() == g.num_nodes(),
            "predict_step: concept features do not match graph");
    const int n = g.num_entities;
    const int lc = g.loc_cols();

    Tape::Val ent_feats = tape.slice_rows(concept_feats, 0, n);
    std::vector<int> loc_nodes;
    for (int l = 0; l < g.num_locations; ++l) loc_nodes.push_back(g.location_node(l));
    loc_nodes.push_back(g.unkloc_index);
    Tape::Val loc_feats = tape.gather_rows(concept_feats, loc_nodes);

    StepLogits out;
    {
        Tape::Val in = tape.concat_cols(
            {tape.repeat_rows(h_global, n), tape.repeat_rows(h_cls, n), ent_feats});
        Tape::Val hid = tape.tanh_act(
            tape.add_row_broadcast(tape.matmul(in, bp["head.mask_w"]), bp["head.mask_b"]));
        out.mask_logits =
            tape.add_row_broadcast(tape.matmul(hid, bp["head.mask_v"]), bp["head.mask_c"]);
    }
    {
        std::vector<int> ent_rep, loc_tile;
        for (int e = 0; e < n; ++e)
            for (int l = 0; l < lc; ++l) {
                ent_rep.push_back(e);
                loc_tile.push_back(l);
            }
        Tape::Val in = tape.concat_cols({tape.repeat_rows(h_global, n * lc),
                                         tape.repeat_rows(h_cls, n * lc),
                                         tape.gather_rows(ent_feats, ent_rep),
                                         tape.gather_rows(loc_feats, loc_tile)});
        Tape::Val hid = tape.tanh_act(
            tape.add_row_broadcast(tape.matmul(in, bp["head.loc_w"]), bp["head.loc_b"]));
        Tape::Val scores =
            tape.add_row_broadcast(tape.matmul(hid, bp["head.loc_v"]), bp["head.loc_c"]);
        out.loc_logits = tape.reshape(scores, n, lc);
    }
    return out;
}

inline ScenePrediction prediction_from_logits(Tape& tape, const StepLogits& logits) {
    ScenePrediction p;
    p.mask_probs = tape.value(tape.sigmoid(logits.mask_logits));
    p.loc_probs = tape.value(tape.softmax_rows(logits.loc_logits));
    return p;
}

// Threshold-and-argmax decoding: an entity is present iff its mask
// probability is at least 0.5; present entities take the highest-probability
// location column, ties broken toward the lowest index.
inline SceneGraph decode_scene(const ScenePrediction& pred, const CompleteGraph& g) {
    SceneGraph scene = SceneGraph::empty(g);
    require(pred.mask_probs.rows() == g.num_entities && pred.loc_probs.rows() == g.num_entities,
            "decode_scene: prediction does not match graph entity count");
    require(pred.loc_probs.cols() == g.loc_cols(),
            "decode_scene: prediction does not match graph location columns");
    for (int e = 0; e < g.num_entities; ++e) {
        if (pred.mask_probs.at(e, 0) < 0.5) continue;
        int best = 0;
        for (int l = 1; l < g.loc_cols(); ++l)
            if (pred.loc_probs.at(e, l) > pred.loc_probs.at(e, best)) best = l;
        scene.set(e, true, best);
    }
    return scene;
}

// Encoder invocation counters behind the scene-wise efficiency property.
// Step counts grow once per timestep; concept counts once per node during
// per-instance setup.
struct InvocationCounters {
    long step_context_calls = 0;
    long structure_calls = 0;
    long concept_context_calls = 0;
};

enum class RolloutMode { TeacherForced, Autoregressive };

struct RolloutStep {
    StepLogits logits;
    ScenePrediction probs;
    SceneGraph decoded;
};

struct RolloutResult {
    std::vector<RolloutStep> steps; // T+1, the virtual init step first
    std::vector<SceneGraph> decoded_scenes() const {
        std::vector<SceneGraph> out;
        out.reserve(steps.size());
        for (const auto& s : steps) out.push_back(s.decoded);
        return out;
    }
};

// Algorithm: the virtual init step encodes the fully-masked scene together
// with "[INIT] prompt" and predicts y_0; each later step t encodes the
// previous scene (gold under teacher forcing, the decoded prediction when
// autoregressive) together with the restructured sentence S_t and predicts
// y_t. One structure-encoder and one step-level context-encoder call per
// timestep, whatever the entity count.
inline RolloutResult rollout(Tape& tape, const BoundParams& bp, const ModelConfig& cfg,
                             const RelationVocab& rels, const PreparedInstance& pi,
                             RolloutMode mode, InvocationCounters* counters = nullptr) {
    if (mode == RolloutMode::TeacherForced)
        require(pi.has_gold(), pi.instance.para_id + ": teacher forcing requires gold graphs");
    const int T = pi.num_steps();

    std::vector<Tape::Val> concept_rows;
    concept_rows.reserve(pi.concept_tokens.size());
    for (const auto& ids : pi.concept_tokens) {
        concept_rows.push_back(encode_context(tape, bp, cfg, ids));
        if (counters) ++counters->concept_context_calls;
    }
    Tape::Val concept_feats = tape.concat_rows(concept_rows);

    RolloutResult out;
    SceneGraph input_scene = SceneGraph::empty(pi.graph);
    for (int t = 0; t <= T; ++t) {
        SceneStructure structure = build_structure(pi.graph, input_scene, rels);
        SceneEncoding enc =
            encode_scene(tape, bp, structure, concept_feats, pi.graph.global_index);
        if (counters) ++counters->structure_calls;
        Tape::Val h_cls = encode_context(tape, bp, cfg, pi.step_tokens[t]);
        if (counters) ++counters->step_context_calls;

        RolloutStep step;
        step.logits = predict_step_logits(tape, bp, cfg, enc.h_global, h_cls, concept_feats,
                                          pi.graph);
        step.probs = prediction_from_logits(tape, step.logits);
        step.decoded = decode_scene(step.probs, pi.graph);
        input_scene = mode == RolloutMode::TeacherForced ? pi.gold[t] : step.decoded;
        out.steps.push_back(std::move(step));
    }
    return out;
}

// Inference: autoregressive rollout, then the state reasoner turns the
// decoded scenes into repaired trajectories and prediction rows.
inline std::vector<PredictionRecord> predict_instance(const Model& model,
                                                      const PreparedInstance& pi,
                                                      InvocationCounters* counters = nullptr) {
    Tape tape;
    BoundParams bp = bind_params(tape, model.params, /*requires_grad=*/false);
    RolloutResult ro =
        rollout(tape, bp, model.cfg, model.rels, pi, RolloutMode::Autoregressive, counters);
    std::vector<EntityTrajectory> trajs =
        apply_constraints(infer_states(pi.instance, pi.graph, ro.decoded_scenes()));
    return emit_predictions(pi.instance.para_id, trajs);
}

// Reference harness for the efficiency comparison: the same encoders looped
// once per entity, as an entity-wise tracker would run them. Predictions for
// entity e are taken from pass e; the assembled result is identical to a
// single scene-wise rollout, but the counters grow N times as fast.
inline std::vector<PredictionRecord> entitywise_reference_predict(
    const Model& model, const PreparedInstance& pi, InvocationCounters* counters = nullptr) {
    const int n = pi.num_entities();
    std::vector<RolloutResult> passes;
    for (int e = 0; e < n; ++e) {
        Tape tape;
        BoundParams bp = bind_params(tape, model.params, /*requires_grad=*/false);
        passes.push_back(
            rollout(tape, bp, model.cfg, model.rels, pi, RolloutMode::Autoregressive, counters));
    }
    std::vector<SceneGraph> scenes;
    for (size_t t = 0; t < passes[0].steps.size(); ++t) {
        SceneGraph merged = SceneGraph::empty(pi.graph);
        for (int e = 0; e < n; ++e) {
            const SceneGraph& own = passes[e].steps[t].decoded;
            merged.set(e, own.exists(e), own.location[e]);
        }
        scenes.push_back(std::move(merged));
    }
    std::vector<EntityTrajectory> trajs =
        apply_constraints(infer_states(pi.instance, pi.graph, scenes));
    return emit_predictions(pi.instance.para_id, trajs);
}

// Teacher-forced fit statistics against gold: decoded mask bits over all
// steps and entities, and decoded location argmax over supervised (present)
// entries. The overfit acceptance experiment reads these.
struct FitStats {
    long mask_correct = 0, mask_total = 0;
    long loc_correct = 0, loc_total = 0;
    double mask_accuracy() const { return mask_total ? double(mask_correct) / mask_total : 1.0; }
    double loc_accuracy() const { return loc_total ? double(loc_correct) / loc_total : 1.0; }
};

inline void accumulate_fit(FitStats& fs, const RolloutResult& ro, const PreparedInstance& pi) {
    require(pi.has_gold(), pi.instance.para_id + ": fit statistics require gold graphs");
    for (size_t t = 0; t < ro.steps.size(); ++t) {
        const SceneGraph& dec = ro.steps[t].decoded;
        const SceneGraph& gold = pi.gold[t];
        for (int e = 0; e < pi.num_entities(); ++e) {
            ++fs.mask_total;
            if (dec.exists(e) == gold.exists(e)) ++fs.mask_correct;
            if (gold.exists(e)) {
                ++fs.loc_total;
                int best = 0;
                const Tensor& lp = ro.steps[t].probs.loc_probs;
                for (int l = 1; l < lp.cols(); ++l)
                    if (lp.at(e, l) > lp.at(e, best)) best = l;
                if (best == gold.location[e]) ++fs.loc_correct;
            }
        }
    }
}

inline FitStats teacher_forced_fit(const Model& model, const std::vector<PreparedInstance>& pis) {
    FitStats fs;
    for (const auto& pi : pis) {
        Tape tape;
        BoundParams bp = bind_params(tape, model.params, /*requires_grad=*/false);
        RolloutResult ro = rollout(tape, bp, model.cfg, model.rels, pi, RolloutMode::TeacherForced);
        accumulate_fit(fs, ro, pi);
    }
    return fs;
}

} // namespace sgr
