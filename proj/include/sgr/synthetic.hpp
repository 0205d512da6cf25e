#pragma once

#include <random>
#include <string>
#include <vector>

#include "sgr/corpus.hpp"
#include "sgr/error.hpp"
#include "sgr/tensor.hpp"

namespace sgr {

// Rule-grammar corpus with exact gold annotations by construction. Every
// sentence template pairs one verb phrase with one state transition, so the
// mapping is learnable by a small model; prompts carry a unique paragraph
// token so the virtual init step can be fit too.
struct SynthConfig {
    int paragraphs = 30;
    unsigned long seed = 7;
    int min_entities = 2, max_entities = 4;
    int min_steps = 3, max_steps = 6;
    int min_locations = 3, max_locations = 5;
    bool with_knowledge = false;
    std::string id_prefix = "syn";

    void validate() const {
        require(paragraphs > 0, "SynthConfig: paragraphs must be positive");
        require(min_entities >= 1 && min_entities <= max_entities,
                "SynthConfig: bad entity range");
        require(min_steps >= 1 && min_steps <= max_steps, "SynthConfig: bad step range");
        require(min_locations >= 2 && min_locations <= max_locations,
                "SynthConfig: bad location range (need at least 2 for moves)");
    }
};

namespace detail {

inline const std::vector<std::string>& synth_entities() {
    static const std::vector<std::string> v = {
        "water", "steam", "gas",   "mixture", "dough", "bread", "lava",  "rock",
        "sand",  "seed",  "plant", "energy",  "smoke", "juice", "paste", "powder"};
    return v;
}

inline const std::vector<std::string>& synth_locations() {
    static const std::vector<std::string> v = {
        "soil",  "root",  "stem",   "leaf",   "oven",   "pan",    "bowl",  "tank",
        "river", "ocean", "cloud",  "ground", "engine", "furnace", "field", "pot"};
    return v;
}

inline std::vector<std::string> sample_distinct(const std::vector<std::string>& pool, int k,
                                                std::mt19937_64& rng) {
    require(k <= static_cast<int>(pool.size()), "sample_distinct: pool too small");
    std::vector<std::string> copy = pool;
    for (size_t i = copy.size(); i > 1; --i) std::swap(copy[i - 1], copy[rng() % i]);
    copy.resize(k);
    return copy;
}

inline int range_pick(int lo, int hi, std::mt19937_64& rng) {
    return lo + static_cast<int>(rng() % static_cast<unsigned long>(hi - lo + 1));
}

} // namespace detail

inline std::vector<ProcedureInstance> generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::vector<ProcedureInstance> out;
    for (int k = 1; k <= cfg.paragraphs; ++k) {
        ProcedureInstance inst;
        inst.para_id = cfg.id_prefix + "-" + std::to_string(k);
        inst.prompt = "process p" + std::to_string(k);
        const int n = detail::range_pick(cfg.min_entities, cfg.max_entities, rng);
        const int lc = detail::range_pick(cfg.min_locations, cfg.max_locations, rng);
        const int t_steps = detail::range_pick(cfg.min_steps, cfg.max_steps, rng);
        inst.entities = detail::sample_distinct(detail::synth_entities(), n, rng);
        std::vector<std::string> locs = detail::sample_distinct(detail::synth_locations(), lc, rng);
        inst.location_candidates = locs;

        // world state per entity: current location ("-" absent, "?" unknown)
        std::vector<std::string> cur(n);
        std::vector<char> ever(n, 0);
        std::vector<std::string> initial(n);
        for (int e = 0; e < n; ++e) {
            if (uniform01(rng) < 0.6) {
                cur[e] = uniform01(rng) < 0.75 ? locs[rng() % locs.size()] : "?";
                ever[e] = 1;
            } else {
                cur[e] = "-";
            }
            initial[e] = cur[e];
        }
        inst.initial_locations = initial;

        std::vector<std::vector<StateLabel>> states(n);
        std::vector<std::vector<std::string>> locations(n);
        for (int step = 0; step < t_steps; ++step) {
            int actor = static_cast<int>(rng() % n);
            std::string sentence;
            StateLabel actor_state = StateLabel::Exist;
            std::string actor_loc;
            bool noop = false;
            if (cur[actor] == "-") {
                if (uniform01(rng) < 0.8) {
                    actor_loc = locs[rng() % locs.size()];
                    sentence = "the " + inst.entities[actor] + " is formed in the " + actor_loc + " .";
                } else {
                    actor_loc = "?";
                    sentence = "the " + inst.entities[actor] + " is formed .";
                }
                actor_state = StateLabel::Create;
            } else {
                double r = uniform01(rng);
                if (r < 0.55 || (r < 0.85 && cur[actor] == "?")) {
                    std::vector<std::string> targets;
                    for (const auto& l : locs)
                        if (l != cur[actor]) targets.push_back(l);
                    actor_loc = targets[rng() % targets.size()];
                    if (cur[actor] == "?")
                        sentence = "the " + inst.entities[actor] + " moves to the " + actor_loc + " .";
                    else
                        sentence = "the " + inst.entities[actor] + " moves from the " + cur[actor] +
                                   " to the " + actor_loc + " .";
                    actor_state = StateLabel::Move;
                } else if (r < 0.7) {
                    actor_loc = "-";
                    sentence = "the " + inst.entities[actor] + " is destroyed .";
                    actor_state = StateLabel::Destroy;
                } else if (r < 0.85) {
                    actor_loc = cur[actor];
                    sentence = "the " + inst.entities[actor] + " stays in the " + actor_loc + " .";
                    actor_state = StateLabel::Exist;
                } else {
                    noop = true;
                    sentence = "the process continues .";
                }
            }
            inst.sentences.push_back(sentence);
            for (int e = 0; e < n; ++e) {
                StateLabel s;
                std::string loc;
                if (e == actor && !noop) {
                    s = actor_state;
                    loc = actor_loc;
                    cur[e] = s == StateLabel::Destroy ? "-" : actor_loc;
                } else if (cur[e] != "-") {
                    s = StateLabel::Exist;
                    loc = cur[e];
                } else {
                    s = ever[e] ? StateLabel::OB : StateLabel::OA;
                    loc = "-";
                }
                if (cur[e] != "-") ever[e] = 1;
                states[e].push_back(s);
                locations[e].push_back(loc);
            }
        }
        inst.gold_states = states;
        inst.gold_locations = locations;
        if (cfg.with_knowledge)
            for (const auto& l : locs) inst.knowledge_triples.push_back({l, "part of", "world"});
        out.push_back(std::move(inst));
    }
    return out;
}

// Random valid annotation sets for the construct->reason round-trip check:
// arbitrary legal state/location sequences (recreation included) over
// placeholder sentences. The text is irrelevant; only the annotation
// structure is exercised.
inline std::vector<ProcedureInstance> generate_random_annotations(int count, unsigned long seed,
                                                                  int max_steps = 10,
                                                                  int max_entities = 6,
                                                                  int max_locations = 8) {
    require(count > 0 && max_steps >= 1 && max_entities >= 1 && max_locations >= 2,
            "generate_random_annotations: bad limits");
    static const std::vector<std::string> loc_pool = {"alpha", "beta",  "gamma", "delta",
                                                      "epsilon", "zeta", "eta",  "theta"};
    static const std::vector<std::string> ent_pool = {"block", "wire", "panel",
                                                      "lever", "gear", "spring"};
    require(max_locations <= static_cast<int>(loc_pool.size()) &&
                max_entities <= static_cast<int>(ent_pool.size()),
            "generate_random_annotations: limits exceed the built-in pools");
    std::mt19937_64 rng(seed);
    std::vector<ProcedureInstance> out;
    for (int k = 1; k <= count; ++k) {
        ProcedureInstance inst;
        inst.para_id = "rand-" + std::to_string(k);
        const int t_steps = detail::range_pick(1, max_steps, rng);
        const int n = detail::range_pick(1, max_entities, rng);
        const int lc = detail::range_pick(2, max_locations, rng);
        inst.entities = detail::sample_distinct(ent_pool, n, rng);
        std::vector<std::string> locs = detail::sample_distinct(loc_pool, lc, rng);
        inst.location_candidates = locs;
        for (int t = 1; t <= t_steps; ++t)
            inst.sentences.push_back("step " + std::to_string(t) + " happens .");

        auto pick_loc = [&](const std::string& avoid) {
            // a location string (span or "?") different from `avoid`
            std::vector<std::string> opts;
            for (const auto& l : locs)
                if (l != avoid) opts.push_back(l);
            if (avoid != "?") opts.push_back("?");
            return opts[rng() % opts.size()];
        };

        std::vector<std::vector<StateLabel>> states(n);
        std::vector<std::vector<std::string>> locations(n);
        std::vector<std::string> initial(n);
        for (int e = 0; e < n; ++e) {
            std::string cur = "-";
            if (uniform01(rng) < 0.6)
                cur = uniform01(rng) < 0.7 ? locs[rng() % locs.size()] : "?";
            initial[e] = cur;
            for (int t = 0; t < t_steps; ++t) {
                if (cur != "-") {
                    double r = uniform01(rng);
                    if (r < 0.4) {
                        states[e].push_back(StateLabel::Exist);
                    } else if (r < 0.75) {
                        cur = pick_loc(cur);
                        states[e].push_back(StateLabel::Move);
                    } else {
                        cur = "-";
                        states[e].push_back(StateLabel::Destroy);
                    }
                } else if (uniform01(rng) < 0.45) {
                    cur = uniform01(rng) < 0.7 ? locs[rng() % locs.size()] : "?";
                    states[e].push_back(StateLabel::Create);
                } else {
                    bool ever = initial[e] != "-";
                    for (int s = 0; s < t && !ever; ++s)
                        ever = state_exists(states[e][s]);
                    states[e].push_back(ever ? StateLabel::OB : StateLabel::OA);
                }
                locations[e].push_back(cur);
            }
        }
        inst.gold_states = states;
        inst.gold_locations = locations;
        inst.initial_locations = initial;
        out.push_back(std::move(inst));
    }
    return out;
}

} // namespace sgr
