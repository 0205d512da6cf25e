#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "sgr/corpus.hpp"
#include "sgr/error.hpp"

namespace sgr {

enum class NodeKind { Entity, Location, Global, UnkLoc, Knowledge };

struct ConceptNode {
    std::string surface; // normalized span
    NodeKind kind;
};

// Static (time-independent) edge between two concept nodes. `relation`
// indexes the graph's relation vocabulary and is never LocateIn, which only
// appears time-indexed inside scene graphs.
struct StaticEdge {
    int i = 0;
    int j = 0;
    int relation = 0;
};

// Relation vocabulary slots that exist in every graph.
namespace rel {
inline constexpr int kLocateIn = 0;
inline constexpr int kEntEnt = 1;
inline constexpr int kLocLoc = 2;
inline constexpr const char* kNames[3] = {"LocateIn", "EntEnt", "LocLoc"};
} // namespace rel

// Time-independent scaffold shared by all scenes of one procedure. Node
// layout is fixed: entities, then location candidates, then Global and
// UnkLoc, then any knowledge nodes appended by enhancement. Appending keeps
// earlier indices stable.
struct CompleteGraph {
    std::vector<ConceptNode> nodes;
    int num_entities = 0;
    int num_locations = 0;
    int global_index = -1;
    int unkloc_index = -1;
    std::vector<std::string> relation_vocab; // [LocateIn, EntEnt, LocLoc, ...]
    std::vector<StaticEdge> static_edges;

    int num_nodes() const { return static_cast<int>(nodes.size()); }
    int entity_node(int e) const { return e; }
    int location_node(int l) const { return num_entities + l; }

    // LocateIn columns: one per location candidate plus a final UnkLoc column.
    int loc_cols() const { return num_locations + 1; }
    int unk_col() const { return num_locations; }

    int node_of_column(int col) const {
        return col == unk_col() ? unkloc_index : location_node(col);
    }

    int find_node(const std::string& surface) const {
        for (int i = 0; i < num_nodes(); ++i)
            if (nodes[i].surface == surface) return i;
        return -1;
    }

    int find_location(const std::string& surface) const {
        for (int l = 0; l < num_locations; ++l)
            if (nodes[location_node(l)].surface == surface) return l;
        return -1;
    }

    int relation_index(const std::string& name) {
        for (size_t i = 0; i < relation_vocab.size(); ++i)
            if (relation_vocab[i] == name) return static_cast<int>(i);
        relation_vocab.push_back(name);
        return static_cast<int>(relation_vocab.size()) - 1;
    }
};

// One time step. Entity existence bits plus, for each existing entity, the
// LocateIn column it occupies (-1 when absent). Non-entity nodes are always
// active, so the mask only varies on entity positions.
struct SceneGraph {
    int num_entities = 0;
    int loc_cols = 0;
    std::vector<uint8_t> entity_mask; // size num_entities
    std::vector<int> location;        // size num_entities; column or -1

    static SceneGraph empty(const CompleteGraph& g) {
        SceneGraph s;
        s.num_entities = g.num_entities;
        s.loc_cols = g.loc_cols();
        s.entity_mask.assign(g.num_entities, 0);
        s.location.assign(g.num_entities, -1);
        return s;
    }

    bool exists(int e) const { return entity_mask[e] != 0; }

    void set(int e, bool present, int col) {
        require(present == (col >= 0), "SceneGraph::set: existence and location disagree");
        require(col < loc_cols, "SceneGraph::set: location column out of range");
        entity_mask[e] = present ? 1 : 0;
        location[e] = col;
    }

    // Node-level activity mask over all M concepts.
    std::vector<uint8_t> node_mask(const CompleteGraph& g) const {
        std::vector<uint8_t> m(g.num_nodes(), 1);
        for (int e = 0; e < num_entities; ++e) m[g.entity_node(e)] = entity_mask[e];
        return m;
    }

    bool operator==(const SceneGraph& o) const {
        return num_entities == o.num_entities && loc_cols == o.loc_cols &&
               entity_mask == o.entity_mask && location == o.location;
    }
};

// Builds the complete graph from an instance whose location candidates have
// already been prepared. Static edges record same-sentence co-mentions:
// EntEnt between entities, LocLoc between candidates.
inline CompleteGraph build_complete_graph(const ProcedureInstance& inst) {
    require(inst.num_entities() > 0,
            inst.para_id + ": cannot build a scene graph with zero entities");
    CompleteGraph g;
    g.relation_vocab.assign(rel::kNames, rel::kNames + 3);
    g.num_entities = inst.num_entities();
    g.num_locations = static_cast<int>(inst.location_candidates.size());
    for (const std::string& e : inst.entities) g.nodes.push_back({normalize_span(e), NodeKind::Entity});
    for (const std::string& c : inst.location_candidates) {
        require(c == normalize_span(c),
                inst.para_id + ": location candidate '" + c + "' is not normalized");
        g.nodes.push_back({c, NodeKind::Location});
    }
    g.global_index = g.num_nodes();
    g.nodes.push_back({"[GLOBAL]", NodeKind::Global});
    g.unkloc_index = g.num_nodes();
    g.nodes.push_back({"[UNKLOC]", NodeKind::UnkLoc});

    std::set<std::tuple<int, int, int>> seen;
    auto add_edge = [&](int i, int j, int relation) {
        if (i == j) return;
        int a = std::min(i, j), b = std::max(i, j);
        if (seen.insert({a, b, relation}).second) g.static_edges.push_back({a, b, relation});
    };
    std::vector<std::vector<std::string>> cand_tokens;
    for (const std::string& c : inst.location_candidates) cand_tokens.push_back(tokenize(c));
    for (const std::string& sentence : inst.sentences) {
        std::vector<std::string> toks = tokenize(sentence);
        std::vector<int> ents, locs;
        for (int e = 0; e < g.num_entities; ++e)
            if (!match_entity(toks, inst.entities[e], e).empty()) ents.push_back(e);
        for (int l = 0; l < g.num_locations; ++l)
            if (span_mentioned(toks, cand_tokens[l])) locs.push_back(l);
        for (size_t a = 0; a < ents.size(); ++a)
            for (size_t b = a + 1; b < ents.size(); ++b)
                add_edge(g.entity_node(ents[a]), g.entity_node(ents[b]), rel::kEntEnt);
        for (size_t a = 0; a < locs.size(); ++a)
            for (size_t b = a + 1; b < locs.size(); ++b)
                add_edge(g.location_node(locs[a]), g.location_node(locs[b]), rel::kLocLoc);
    }
    return g;
}

struct EnhanceStats {
    int added_nodes = 0;
    int added_edges = 0;
    int dropped = 0;   // no endpoint matched any node
    int malformed = 0; // empty field
};

// Adds knowledge edges to the graph. Endpoints match nodes by exact
// normalized surface; an endpoint with no match becomes a fresh Knowledge
// node provided the other endpoint matched something. Triples where neither
// endpoint matches are dropped, malformed ones (an empty field) are counted
// separately. Knowledge relations extend the graph's relation vocabulary in
// first-seen order.
inline EnhanceStats enhance_with_knowledge(CompleteGraph& g,
                                           const std::vector<KnowledgeTriple>& triples) {
    EnhanceStats stats;
    std::set<std::tuple<int, int, int>> seen;
    for (const StaticEdge& e : g.static_edges)
        seen.insert({std::min(e.i, e.j), std::max(e.i, e.j), e.relation});
    for (const KnowledgeTriple& t : triples) {
        std::string head = normalize_span(t.head);
        std::string tail = normalize_span(t.tail);
        std::string relname = normalize_span(t.relation);
        if (head.empty() || tail.empty() || relname.empty()) {
            ++stats.malformed;
            continue;
        }
        int hi = g.find_node(head);
        int ti = g.find_node(tail);
        if (hi < 0 && ti < 0) {
            ++stats.dropped;
            continue;
        }
        if (hi < 0) {
            hi = g.num_nodes();
            g.nodes.push_back({head, NodeKind::Knowledge});
            ++stats.added_nodes;
        }
        if (ti < 0) {
            ti = g.num_nodes();
            g.nodes.push_back({tail, NodeKind::Knowledge});
            ++stats.added_nodes;
        }
        if (hi == ti) continue;
        int r = g.relation_index(relname);
        int a = std::min(hi, ti), b = std::max(hi, ti);
        if (seen.insert({a, b, r}).second) {
            g.static_edges.push_back({a, b, r});
            ++stats.added_edges;
        }
    }
    return stats;
}

namespace detail {

inline int gold_column(const CompleteGraph& g, const std::string& loc,
                       const std::string& where) {
    if (loc == "?") return g.unk_col();
    std::string norm = normalize_span(loc);
    int l = g.find_location(norm);
    require(l >= 0, where + ": gold location '" + loc + "' is not a candidate");
    return l;
}

inline bool valid_transition(bool prev_exists, StateLabel prev, bool prev_virtual,
                             StateLabel next) {
    if (prev_virtual)
        return prev_exists ? (next == StateLabel::Exist || next == StateLabel::Move ||
                              next == StateLabel::Destroy)
                           : (next == StateLabel::OA || next == StateLabel::Create);
    switch (prev) {
        case StateLabel::OA:
            return next == StateLabel::OA || next == StateLabel::Create;
        case StateLabel::Create:
        case StateLabel::Exist:
        case StateLabel::Move:
            return next == StateLabel::Exist || next == StateLabel::Move ||
                   next == StateLabel::Destroy;
        case StateLabel::Destroy:
        case StateLabel::OB:
            return next == StateLabel::OB || next == StateLabel::Create;
    }
    return false;
}

} // namespace detail

// Initial (step-0) existence and location for each entity. Uses the explicit
// initial_locations annotation when present, otherwise backfills from the
// step-1 state: E keeps its step-1 location (E means unchanged), M and D
// imply prior existence somewhere unknown, anything else means absent.
struct InitialState {
    bool exists = false;
    std::string location = "-"; // span, "?" or "-"
};

inline std::vector<InitialState> initial_states(const ProcedureInstance& inst) {
    require(inst.has_gold(), inst.para_id + ": initial_states requires gold annotations");
    std::vector<InitialState> out(inst.num_entities());
    for (int e = 0; e < inst.num_entities(); ++e) {
        const StateLabel s1 = (*inst.gold_states)[e][0];
        if (inst.initial_locations) {
            std::string loc = (*inst.initial_locations)[e];
            if (loc != "?" && loc != "-") loc = normalize_span(loc);
            out[e] = {loc != "-", loc};
        } else if (s1 == StateLabel::Exist) {
            out[e] = {true, normalize_span((*inst.gold_locations)[e][0])};
        } else if (s1 == StateLabel::Move || s1 == StateLabel::Destroy) {
            out[e] = {true, "?"};
        } else {
            out[e] = {false, "-"};
        }
    }
    return out;
}

// Gold scene graph sequence y_0..y_T for a training instance, with full
// validation of the annotation: location consistency with the state label,
// legal state transitions, and Move/Exist column change rules. Errors name
// the offending entity and step.
inline std::vector<SceneGraph> construct_gold_graphs(const ProcedureInstance& inst,
                                                     const CompleteGraph& g) {
    require(inst.has_gold(), inst.para_id + ": cannot build gold graphs without annotations");
    const int T = inst.num_steps();
    const int N = inst.num_entities();
    std::vector<InitialState> init = initial_states(inst);
    std::vector<SceneGraph> scenes(T + 1, SceneGraph::empty(g));

    for (int e = 0; e < N; ++e) {
        std::string who = inst.para_id + " entity '" + inst.entities[e] + "'";
        if (init[e].exists) {
            int col = detail::gold_column(g, init[e].location, who + " step 0");
            scenes[0].set(e, true, col);
        }
        for (int t = 1; t <= T; ++t) {
            std::string where = who + " step " + std::to_string(t);
            StateLabel s = (*inst.gold_states)[e][t - 1];
            const std::string& loc = (*inst.gold_locations)[e][t - 1];
            StateLabel prev = t > 1 ? (*inst.gold_states)[e][t - 2] : StateLabel::OA;
            require(detail::valid_transition(init[e].exists, prev, t == 1, s),
                    where + ": illegal transition into state " +
                        std::string(state_label_name(s)));
            if (!state_exists(s)) {
                require(loc == "-", where + ": state " + state_label_name(s) +
                                        " requires location '-', got '" + loc + "'");
                continue;
            }
            require(loc != "-", where + ": state " + state_label_name(s) +
                                    " requires a location, got '-'");
            int col = detail::gold_column(g, loc, where);
            int prev_col = scenes[t - 1].location[e];
            if (s == StateLabel::Move)
                require(col != prev_col, where + ": Move must change the location column");
            if (s == StateLabel::Exist)
                require(col == prev_col, where + ": Exist must keep the location column");
            scenes[t].set(e, true, col);
        }
    }
    return scenes;
}

} // namespace sgr
