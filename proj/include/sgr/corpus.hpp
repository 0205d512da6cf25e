#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgr/error.hpp"
#include "sgr/strings.hpp"

namespace sgr {

// Participant state at one step of a procedure.
//   OA / OB  not yet created / already destroyed
//   Create, Exist, Move, Destroy  the four event-bearing states
enum class StateLabel { OA, OB, Exist, Move, Create, Destroy };

inline const char* state_label_name(StateLabel s) {
    switch (s) {
        case StateLabel::OA: return "O_A";
        case StateLabel::OB: return "O_B";
        case StateLabel::Exist: return "E";
        case StateLabel::Move: return "M";
        case StateLabel::Create: return "C";
        case StateLabel::Destroy: return "D";
    }
    return "?";
}

inline StateLabel parse_state_label(const std::string& s, const std::string& where) {
    if (s == "O_A") return StateLabel::OA;
    if (s == "O_B") return StateLabel::OB;
    if (s == "E") return StateLabel::Exist;
    if (s == "M") return StateLabel::Move;
    if (s == "C") return StateLabel::Create;
    if (s == "D") return StateLabel::Destroy;
    contract_fail(where + ": unknown state label '" + s + "'");
}

inline bool state_exists(StateLabel s) {
    return s == StateLabel::Exist || s == StateLabel::Move || s == StateLabel::Create;
}

struct KnowledgeTriple {
    std::string head, relation, tail;
};

// One annotated procedure. Gold fields are optional: absent on raw test
// input, present (all three) on training and dev data. Location strings use
// "?" for unknown and "-" for nonexistent throughout.
struct ProcedureInstance {
    std::string para_id;
    std::string prompt;                                    // may be empty
    std::vector<std::string> sentences;                    // steps 1..T
    std::vector<std::string> entities;                     // tracked participants
    std::vector<std::string> location_candidates;          // normalized spans
    std::vector<KnowledgeTriple> knowledge_triples;
    std::optional<std::vector<std::vector<StateLabel>>> gold_states;     // N x T
    std::optional<std::vector<std::vector<std::string>>> gold_locations; // N x T
    std::optional<std::vector<std::string>> initial_locations;           // N, step-0 locations

    int num_steps() const { return static_cast<int>(sentences.size()); }
    int num_entities() const { return static_cast<int>(entities.size()); }
    bool has_gold() const { return gold_states.has_value() && gold_locations.has_value(); }
};

enum class Split { Train, Dev, Test };

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "dev") return Split::Dev;
    if (s == "test") return Split::Test;
    contract_fail("unknown split '" + s + "' (expected train, dev or test)");
}

// ---- tokenizer ----
//
// Lowercase the text, then emit maximal alphanumeric runs, apostrophe-led
// suffixes such as 's, and every other non-space character as a token of its
// own. "The leaf's cells" -> [the, leaf, 's, cells].
inline std::vector<std::string> tokenize(const std::string& text) {
    std::string lower = to_lower(text);
    std::vector<std::string> out;
    size_t i = 0;
    const size_t n = lower.size();
    auto is_alnum = [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    };
    while (i < n) {
        char c = lower[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (is_alnum(c)) {
            size_t j = i;
            while (j < n && is_alnum(lower[j])) ++j;
            out.push_back(lower.substr(i, j - i));
            i = j;
        } else if (c == '\'' && i + 1 < n && is_alnum(lower[i + 1])) {
            size_t j = i + 1;
            while (j < n && is_alnum(lower[j])) ++j;
            out.push_back(lower.substr(i, j - i));
            i = j;
        } else {
            out.push_back(std::string(1, c));
            ++i;
        }
    }
    return out;
}

// Canonical surface form used for candidates, locations and graph nodes:
// lowercase tokens joined by single spaces.
inline std::string normalize_span(const std::string& s) {
    return join(tokenize(s), " ");
}

// ---- entity mentions ----

struct MentionSpan {
    int entity = -1; // index into instance.entities
    int start = 0;   // token index, inclusive
    int end = 0;     // token index, exclusive
};

// Aliases are separated by '/' in the entity string; a mention of any alias
// counts. Matching is per entity, left to right, longest alias first,
// non-overlapping within that entity's own matches.
inline std::vector<MentionSpan> match_entity(const std::vector<std::string>& tokens,
                                             const std::string& entity, int entity_index) {
    std::vector<std::vector<std::string>> aliases;
    for (const std::string& alias : split(entity, '/')) {
        std::vector<std::string> toks = tokenize(alias);
        if (!toks.empty()) aliases.push_back(std::move(toks));
    }
    std::sort(aliases.begin(), aliases.end(),
              [](const auto& a, const auto& b) { return a.size() > b.size(); });
    std::vector<MentionSpan> out;
    size_t pos = 0;
    while (pos < tokens.size()) {
        bool matched = false;
        for (const auto& alias : aliases) {
            if (pos + alias.size() > tokens.size()) continue;
            bool ok = true;
            for (size_t k = 0; k < alias.size(); ++k)
                if (tokens[pos + k] != alias[k]) { ok = false; break; }
            if (ok) {
                out.push_back({entity_index, static_cast<int>(pos),
                               static_cast<int>(pos + alias.size())});
                pos += alias.size();
                matched = true;
                break;
            }
        }
        if (!matched) ++pos;
    }
    return out;
}

inline std::vector<MentionSpan> match_entities(const std::vector<std::string>& tokens,
                                               const std::vector<std::string>& entities) {
    std::vector<MentionSpan> out;
    for (size_t e = 0; e < entities.size(); ++e) {
        auto spans = match_entity(tokens, entities[e], static_cast<int>(e));
        out.insert(out.end(), spans.begin(), spans.end());
    }
    return out;
}

// Occurrences of a multi-token span (already normalized) in a token list.
inline bool span_mentioned(const std::vector<std::string>& tokens,
                           const std::vector<std::string>& span_tokens) {
    if (span_tokens.empty() || span_tokens.size() > tokens.size()) return false;
    for (size_t i = 0; i + span_tokens.size() <= tokens.size(); ++i) {
        bool ok = true;
        for (size_t k = 0; k < span_tokens.size(); ++k)
            if (tokens[i + k] != span_tokens[k]) { ok = false; break; }
        if (ok) return true;
    }
    return false;
}

// ---- location candidate generation ----

namespace lex {

inline const std::unordered_set<std::string>& prepositions() {
    static const std::unordered_set<std::string> s = {
        "in", "into", "from", "to", "on", "at", "through", "inside"};
    return s;
}

inline const std::unordered_set<std::string>& determiners() {
    static const std::unordered_set<std::string> s = {
        "the", "a", "an", "its", "their", "his", "her", "this", "that",
        "these", "those", "some", "each", "every", "another", "other"};
    return s;
}

inline const std::unordered_set<std::string>& pronouns() {
    static const std::unordered_set<std::string> s = {
        "it", "them", "they", "him", "her", "us", "me", "you", "which", "there"};
    return s;
}

// Small closed list of common procedural-text nouns; used for the bare
// sentence-final rule and to admit the second word of a bigram candidate.
inline const std::unordered_set<std::string>& nouns() {
    static const std::unordered_set<std::string> s = {
        "water",  "soil",    "root",   "roots",  "leaf",   "leaves",  "stem",
        "plant",  "plants",  "sun",    "sunlight", "cloud", "clouds", "rain",
        "ocean",  "river",   "ground", "air",    "gas",    "gases",   "rock",
        "rocks",  "magma",   "lava",   "sediment", "mixture", "minerals",
        "seed",   "seeds",   "oven",   "pan",    "bowl",   "flour",   "dough",
        "bread",  "egg",     "eggs",   "sugar",  "butter", "milk",    "heat",
        "energy", "animal",  "animals", "body",  "blood",  "heart",   "food",
        "stomach", "tree",   "trees",  "wood",   "fire",   "ash",     "smoke",
        "engine", "fuel",    "tank",   "machine", "dioxide", "carbon",
        "vapor",  "steam",   "surface", "area",  "cell",   "cells",   "field",
        "furnace", "pot",    "glacier", "ice",   "snow",   "mountain"};
    return s;
}

} // namespace lex

inline bool is_word_token(const std::string& t) {
    return !t.empty() && ((t[0] >= 'a' && t[0] <= 'z') || (t[0] >= '0' && t[0] <= '9'));
}

// Heuristic location candidates for one instance, in first-appearance order:
//   1. noun phrases after a preposition (determiners skipped; unigram plus a
//      bigram when the following word is a known noun)
//   2. bare sentence-final nouns from the closed noun list
inline std::vector<std::string> heuristic_candidates(const ProcedureInstance& inst) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    auto push = [&](const std::string& cand) {
        if (cand.empty() || seen.count(cand)) return;
        seen.insert(cand);
        out.push_back(cand);
    };
    auto acceptable_head = [&](const std::string& t) {
        return is_word_token(t) && !lex::prepositions().count(t) &&
               !lex::determiners().count(t) && !lex::pronouns().count(t);
    };
    for (const std::string& sentence : inst.sentences) {
        std::vector<std::string> toks = tokenize(sentence);
        for (size_t i = 0; i < toks.size(); ++i) {
            if (!lex::prepositions().count(toks[i])) continue;
            size_t p = i + 1;
            while (p < toks.size() && lex::determiners().count(toks[p])) ++p;
            if (p >= toks.size() || !acceptable_head(toks[p])) continue;
            if (p + 1 < toks.size() && lex::nouns().count(toks[p + 1]))
                push(toks[p] + " " + toks[p + 1]);
            push(toks[p]);
        }
        // bare sentence-final noun, skipping trailing punctuation
        int last = static_cast<int>(toks.size()) - 1;
        while (last >= 0 && !is_word_token(toks[last])) --last;
        if (last >= 0 && lex::nouns().count(toks[last])) push(toks[last]);
    }
    return out;
}

// Fill instance.location_candidates: file-provided spans first, then the
// heuristic scan, then (train/dev only) any gold location missing so far.
// Order is stable and duplicates are dropped.
inline void prepare_candidates(ProcedureInstance& inst, Split split) {
    std::vector<std::string> merged;
    std::set<std::string> seen;
    auto push = [&](const std::string& raw) {
        std::string cand = normalize_span(raw);
        if (cand.empty() || seen.count(cand)) return;
        seen.insert(cand);
        merged.push_back(cand);
    };
    for (const std::string& c : inst.location_candidates) push(c);
    for (const std::string& c : heuristic_candidates(inst)) push(c);
    if (split != Split::Test) {
        if (inst.gold_locations)
            for (const auto& row : *inst.gold_locations)
                for (const std::string& loc : row)
                    if (loc != "?" && loc != "-") push(loc);
        if (inst.initial_locations)
            for (const std::string& loc : *inst.initial_locations)
                if (loc != "?" && loc != "-") push(loc);
    }
    inst.location_candidates = std::move(merged);
}

// ---- JSONL corpus files ----

inline ProcedureInstance parse_instance_json(const nlohmann::json& j, const std::string& where) {
    auto need = [&](const char* field) -> const nlohmann::json& {
        if (!j.contains(field))
            contract_fail(where + ": missing required field '" + std::string(field) + "'");
        return j.at(field);
    };
    ProcedureInstance inst;
    inst.para_id = need("para_id").get<std::string>();
    if (j.contains("prompt")) inst.prompt = j.at("prompt").get<std::string>();
    inst.sentences = need("sentences").get<std::vector<std::string>>();
    require(!inst.sentences.empty(), where + ": instance must have at least one sentence");
    inst.entities = need("entities").get<std::vector<std::string>>();
    if (j.contains("location_candidates"))
        inst.location_candidates = j.at("location_candidates").get<std::vector<std::string>>();
    if (j.contains("knowledge_triples")) {
        for (const auto& t : j.at("knowledge_triples")) {
            require(t.is_array() && t.size() == 3,
                    where + ": knowledge_triples entries must be [head, relation, tail]");
            inst.knowledge_triples.push_back(
                {t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>()});
        }
    }
    const int T = inst.num_steps();
    const int N = inst.num_entities();
    bool has_states = j.contains("gold_states");
    bool has_locs = j.contains("gold_locations");
    require(has_states == has_locs,
            where + ": gold_states and gold_locations must be given together");
    if (has_states) {
        auto states_raw = j.at("gold_states").get<std::vector<std::vector<std::string>>>();
        auto locs = j.at("gold_locations").get<std::vector<std::vector<std::string>>>();
        require(static_cast<int>(states_raw.size()) == N && static_cast<int>(locs.size()) == N,
                where + ": gold annotations must have one row per entity");
        std::vector<std::vector<StateLabel>> states(N);
        for (int e = 0; e < N; ++e) {
            require(static_cast<int>(states_raw[e].size()) == T &&
                        static_cast<int>(locs[e].size()) == T,
                    where + ": gold annotations must have one column per step");
            for (const std::string& s : states_raw[e])
                states[e].push_back(parse_state_label(s, where));
        }
        inst.gold_states = std::move(states);
        inst.gold_locations = std::move(locs);
    }
    if (j.contains("initial_locations")) {
        auto init = j.at("initial_locations").get<std::vector<std::string>>();
        require(static_cast<int>(init.size()) == N,
                where + ": initial_locations must have one entry per entity");
        inst.initial_locations = std::move(init);
    }
    return inst;
}

inline std::vector<ProcedureInstance> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) io_fail("cannot open corpus file " + path);
    std::vector<ProcedureInstance> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            contract_fail(path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
        }
        out.push_back(parse_instance_json(j, path + ":" + std::to_string(lineno)));
    }
    return out;
}

inline nlohmann::json instance_to_json(const ProcedureInstance& inst) {
    nlohmann::json j;
    j["para_id"] = inst.para_id;
    if (!inst.prompt.empty()) j["prompt"] = inst.prompt;
    j["sentences"] = inst.sentences;
    j["entities"] = inst.entities;
    if (!inst.location_candidates.empty()) j["location_candidates"] = inst.location_candidates;
    if (!inst.knowledge_triples.empty()) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& t : inst.knowledge_triples)
            arr.push_back({t.head, t.relation, t.tail});
        j["knowledge_triples"] = arr;
    }
    if (inst.gold_states) {
        std::vector<std::vector<std::string>> rows;
        for (const auto& row : *inst.gold_states) {
            std::vector<std::string> r;
            for (StateLabel s : row) r.push_back(state_label_name(s));
            rows.push_back(std::move(r));
        }
        j["gold_states"] = rows;
        j["gold_locations"] = *inst.gold_locations;
    }
    if (inst.initial_locations) j["initial_locations"] = *inst.initial_locations;
    return j;
}

inline void save_corpus(const std::vector<ProcedureInstance>& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) io_fail("cannot write corpus file " + path);
    for (const auto& inst : corpus) out << instance_to_json(inst).dump() << "\n";
}

// ---- prediction records (TSV) ----

enum class Action { None, Create, Destroy, Move };

inline const char* action_name(Action a) {
    switch (a) {
        case Action::None: return "NONE";
        case Action::Create: return "CREATE";
        case Action::Destroy: return "DESTROY";
        case Action::Move: return "MOVE";
    }
    return "NONE";
}

inline Action parse_action(const std::string& s, const std::string& where) {
    if (s == "NONE") return Action::None;
    if (s == "CREATE") return Action::Create;
    if (s == "DESTROY") return Action::Destroy;
    if (s == "MOVE") return Action::Move;
    contract_fail(where + ": unknown action '" + s + "'");
}

// One row of the prediction format:
//   para_id <TAB> step <TAB> entity <TAB> action <TAB> before <TAB> after
// Steps are 1-based; locations use "?" (unknown) and "-" (nonexistent).
struct PredictionRecord {
    std::string para_id;
    int step = 0;
    std::string entity;
    Action action = Action::None;
    std::string before = "-";
    std::string after = "-";
};

inline void save_predictions(const std::vector<PredictionRecord>& records,
                             const std::string& path) {
    std::ofstream out(path);
    if (!out) io_fail("cannot write predictions file " + path);
    for (const auto& r : records)
        out << r.para_id << '\t' << r.step << '\t' << r.entity << '\t' << action_name(r.action)
            << '\t' << r.before << '\t' << r.after << '\n';
}

inline std::vector<PredictionRecord> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) io_fail("cannot open predictions file " + path);
    std::vector<PredictionRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::string where = path + ":" + std::to_string(lineno);
        std::vector<std::string> f = split(line, '\t');
        require(f.size() == 6, where + ": expected 6 tab-separated fields, got " +
                                   std::to_string(f.size()));
        PredictionRecord r;
        r.para_id = f[0];
        try {
            r.step = std::stoi(f[1]);
        } catch (...) {
            contract_fail(where + ": step is not an integer: '" + f[1] + "'");
        }
        require(r.step >= 1, where + ": step must be 1-based");
        r.entity = f[2];
        r.action = parse_action(f[3], where);
        r.before = f[4];
        r.after = f[5];
        out.push_back(std::move(r));
    }
    return out;
}

// ---- knowledge triple files ----
// One triple per line: head <TAB> relation <TAB> tail, all lowercase.

inline std::vector<KnowledgeTriple> load_triples(const std::string& path) {
    std::ifstream in(path);
    if (!in) io_fail("cannot open triples file " + path);
    std::vector<KnowledgeTriple> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> f = split(line, '\t');
        require(f.size() == 3, path + ":" + std::to_string(lineno) +
                                   ": expected 3 tab-separated fields");
        out.push_back({to_lower(trim(f[0])), to_lower(trim(f[1])), to_lower(trim(f[2]))});
    }
    return out;
}

} // namespace sgr
