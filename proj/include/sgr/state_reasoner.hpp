#pragma once

#include <string>
#include <vector>

#include "sgr/corpus.hpp"
#include "sgr/error.hpp"
#include "sgr/scene_graph.hpp"

namespace sgr {

// Per-entity state sequence recovered from a scene graph sequence. Location
// strings are candidate surfaces, "?" (UnkLoc) or "-" (absent).
struct EntityTrajectory {
    std::string entity;
    std::string initial_location = "-";
    std::vector<StateLabel> states;      // steps 1..T
    std::vector<std::string> locations;  // steps 1..T
};

namespace detail {

inline std::string column_surface(const CompleteGraph& g, int col) {
    if (col < 0) return "-";
    if (col == g.unk_col()) return "?";
    return g.nodes[g.location_node(col)].surface;
}

inline bool first_label_valid(bool exists0, StateLabel s) {
    return exists0 ? (s == StateLabel::Exist || s == StateLabel::Move || s == StateLabel::Destroy)
                   : (s == StateLabel::OA || s == StateLabel::Create);
}

} // namespace detail

// Reads the state sequence off adjacent scene pairs (y_{t-1}, y_t):
//   0 -> 1  Create        1 -> 0  Destroy
//   1 -> 1  Move if the LocateIn column changed, else Exist
//   0 -> 0  O_A while the entity has never existed so far, O_B afterwards
inline std::vector<EntityTrajectory> infer_states(const ProcedureInstance& inst,
                                                  const CompleteGraph& g,
                                                  const std::vector<SceneGraph>& scenes) {
    const int T = inst.num_steps();
    require(static_cast<int>(scenes.size()) == T + 1,
            inst.para_id + ": expected " + std::to_string(T + 1) + " scenes, got " +
                std::to_string(scenes.size()));
    std::vector<EntityTrajectory> out;
    for (int e = 0; e < inst.num_entities(); ++e) {
        EntityTrajectory traj;
        traj.entity = inst.entities[e];
        traj.initial_location = detail::column_surface(g, scenes[0].location[e]);
        bool ever_existed = scenes[0].exists(e);
        for (int t = 1; t <= T; ++t) {
            bool prev = scenes[t - 1].exists(e);
            bool cur = scenes[t].exists(e);
            StateLabel s;
            if (!prev && cur) s = StateLabel::Create;
            else if (prev && !cur) s = StateLabel::Destroy;
            else if (prev && cur)
                s = scenes[t].location[e] != scenes[t - 1].location[e] ? StateLabel::Move
                                                                       : StateLabel::Exist;
            else s = ever_existed ? StateLabel::OB : StateLabel::OA;
            ever_existed = ever_existed || cur;
            traj.states.push_back(s);
            traj.locations.push_back(detail::column_surface(g, scenes[t].location[e]));
        }
        out.push_back(std::move(traj));
    }
    return out;
}

// True when the trajectory obeys the transition table, the label/location
// consistency rules and the Move/Exist change rules.
inline bool is_valid_trajectory(const EntityTrajectory& traj) {
    bool exists0 = traj.initial_location != "-";
    if (traj.states.size() != traj.locations.size()) return false;
    if (traj.states.empty()) return true;
    if (!detail::first_label_valid(exists0, traj.states[0])) return false;
    for (size_t t = 1; t < traj.states.size(); ++t) {
        bool prev_ex = state_exists(traj.states[t - 1]);
        StateLabel s = traj.states[t];
        bool ok;
        if (prev_ex)
            ok = s == StateLabel::Exist || s == StateLabel::Move || s == StateLabel::Destroy;
        else if (traj.states[t - 1] == StateLabel::OA)
            ok = s == StateLabel::OA || s == StateLabel::Create;
        else // Destroy or O_B
            ok = s == StateLabel::OB || s == StateLabel::Create;
        if (!ok) return false;
    }
    for (size_t t = 0; t < traj.states.size(); ++t) {
        StateLabel s = traj.states[t];
        const std::string& loc = traj.locations[t];
        if (state_exists(s)) {
            if (loc == "-") return false;
        } else if (loc != "-") {
            return false;
        }
        std::string prev_loc = t == 0 ? traj.initial_location : traj.locations[t - 1];
        if (s == StateLabel::Move && loc == prev_loc) return false;
        if (s == StateLabel::Exist && loc != prev_loc) return false;
    }
    return true;
}

// Repairs an arbitrary trajectory into a valid one. The existence
// bit-sequence acts as the witness: bits are read off the labels (an
// event-bearing label asserts existence, anything else absence), then labels
// and locations are re-derived from the bits exactly as infer_states would.
// Running the repair on an already-valid trajectory reproduces it, so the
// operation is idempotent.
inline EntityTrajectory apply_constraints(const EntityTrajectory& traj) {
    const size_t T = traj.states.size();
    require(traj.locations.size() == T,
            "apply_constraints: states and locations must have equal length");
    EntityTrajectory out;
    out.entity = traj.entity;

    bool exists0;
    std::string init = traj.initial_location;
    if (init == "-") exists0 = false;
    else if (!init.empty()) exists0 = true;
    else {
        // no initial annotation at all: infer from the first label
        exists0 = !traj.states.empty() && (traj.states[0] == StateLabel::Exist ||
                                           traj.states[0] == StateLabel::Move ||
                                           traj.states[0] == StateLabel::Destroy);
        init = exists0 ? "?" : "-";
    }
    out.initial_location = exists0 ? init : "-";

    std::vector<bool> exists(T);
    for (size_t t = 0; t < T; ++t) exists[t] = state_exists(traj.states[t]);

    bool ever = exists0;
    std::string prev_loc = out.initial_location;
    for (size_t t = 0; t < T; ++t) {
        bool prev = t == 0 ? exists0 : exists[t - 1];
        bool cur = exists[t];
        StateLabel s;
        std::string loc;
        if (!prev && cur) {
            s = StateLabel::Create;
            loc = traj.locations[t] == "-" ? "?" : traj.locations[t];
        } else if (prev && !cur) {
            s = StateLabel::Destroy;
            loc = "-";
        } else if (prev && cur) {
            loc = traj.locations[t] == "-" ? "?" : traj.locations[t];
            s = loc != prev_loc ? StateLabel::Move : StateLabel::Exist;
        } else {
            s = ever ? StateLabel::OB : StateLabel::OA;
            loc = "-";
        }
        ever = ever || cur;
        out.states.push_back(s);
        out.locations.push_back(loc);
        prev_loc = cur ? loc : "-";
    }
    return out;
}

inline std::vector<EntityTrajectory> apply_constraints(
    const std::vector<EntityTrajectory>& trajs) {
    std::vector<EntityTrajectory> out;
    out.reserve(trajs.size());
    for (const auto& t : trajs) out.push_back(apply_constraints(t));
    return out;
}

// Flattens trajectories into prediction rows, one per (entity, step):
//   before_t = location after step t-1 (the initial location when t = 1)
//   after_t  = location after step t
// State labels map to actions as C->CREATE, D->DESTROY, M->MOVE and
// everything else ->NONE.
inline std::vector<PredictionRecord> emit_predictions(const std::string& para_id,
                                                      const std::vector<EntityTrajectory>& trajs) {
    std::vector<PredictionRecord> out;
    for (const auto& traj : trajs) {
        std::string prev = traj.initial_location;
        for (size_t t = 0; t < traj.states.size(); ++t) {
            PredictionRecord r;
            r.para_id = para_id;
            r.step = static_cast<int>(t) + 1;
            r.entity = traj.entity;
            switch (traj.states[t]) {
                case StateLabel::Create: r.action = Action::Create; break;
                case StateLabel::Destroy: r.action = Action::Destroy; break;
                case StateLabel::Move: r.action = Action::Move; break;
                default: r.action = Action::None; break;
            }
            r.before = prev;
            r.after = traj.locations[t];
            prev = traj.locations[t];
            out.push_back(std::move(r));
        }
    }
    return out;
}

// Gold trajectories straight from the annotation, used to turn gold JSONL
// into the same TSV row format the model emits.
inline std::vector<EntityTrajectory> gold_trajectories(const ProcedureInstance& inst) {
    require(inst.has_gold(), inst.para_id + ": gold_trajectories requires annotations");
    std::vector<InitialState> init = initial_states(inst);
    std::vector<EntityTrajectory> out;
    for (int e = 0; e < inst.num_entities(); ++e) {
        EntityTrajectory traj;
        traj.entity = inst.entities[e];
        traj.initial_location = init[e].exists ? init[e].location : "-";
        for (int t = 0; t < inst.num_steps(); ++t) {
            traj.states.push_back((*inst.gold_states)[e][t]);
            const std::string& loc = (*inst.gold_locations)[e][t];
            traj.locations.push_back(loc == "?" || loc == "-" ? loc : normalize_span(loc));
        }
        out.push_back(std::move(traj));
    }
    return out;
}

} // namespace sgr
