#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgr/corpus.hpp"
#include "sgr/error.hpp"

namespace sgr {

struct QuestionScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Document-level ProPara scores. Per paragraph and question the tuple sets
// are compared with the empty-denominator convention (P or R with an empty
// own side is 1 when the other side is empty too, else 0); precision, recall
// and F1 are each averaged over paragraphs; the overall score is the
// unweighted mean of the four per-question F1s.
struct DocLevelReport {
    QuestionScore inputs, outputs, conversions, moves;
    double overall_f1 = 0.0;
    int paragraphs = 0;
    int missing_entities = 0; // gold entities with no prediction rows at all
};

struct SentLevelReport {
    double cat1_accuracy = 0.0, cat2_accuracy = 0.0, cat3_accuracy = 0.0;
    long cat1_correct = 0, cat1_total = 0;
    long cat2_correct = 0, cat2_total = 0;
    long cat3_correct = 0, cat3_total = 0;
    double macro_avg = 0.0; // unweighted mean of the three accuracies
    double micro_avg = 0.0; // total correct / total questions
    int missing_entities = 0;
};

struct RecipesReport {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    long pred_triples = 0, gold_triples = 0, matched = 0;
};

namespace detail {

inline double safe_ratio(long hits, long total, long other_total) {
    if (total == 0) return other_total == 0 ? 1.0 : 0.0;
    return static_cast<double>(hits) / static_cast<double>(total);
}

inline double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

// para -> entity -> rows sorted by step
using ParaMap = std::map<std::string, std::map<std::string, std::vector<PredictionRecord>>>;

inline ParaMap group_rows(const std::vector<PredictionRecord>& rows) {
    ParaMap out;
    for (const auto& r : rows) out[r.para_id][r.entity].push_back(r);
    for (auto& [pid, ents] : out)
        for (auto& [ent, rs] : ents)
            std::sort(rs.begin(), rs.end(),
                      [](const PredictionRecord& a, const PredictionRecord& b) {
                          return a.step < b.step;
                      });
    return out;
}

inline bool exists_before_first_step(const std::vector<PredictionRecord>& rows) {
    if (rows.empty()) return false;
    const PredictionRecord& r = rows.front();
    if (r.action == Action::Destroy || r.action == Action::Move) return true;
    if (r.action == Action::Create) return false;
    return r.before != "-";
}

inline bool exists_after_last_step(const std::vector<PredictionRecord>& rows) {
    bool exists = exists_before_first_step(rows);
    for (const auto& r : rows) {
        if (r.action == Action::Create) exists = true;
        else if (r.action == Action::Destroy) exists = false;
    }
    return exists;
}

struct ParaTuples {
    std::set<std::string> inputs;
    std::set<std::string> outputs;
    // (step, location, destroyed entities, created entities)
    std::set<std::tuple<int, std::string, std::vector<std::string>, std::vector<std::string>>>
        conversions;
    std::set<std::tuple<std::string, int, std::string, std::string>> moves;
};

inline ParaTuples derive_tuples(const std::map<std::string, std::vector<PredictionRecord>>& para) {
    ParaTuples out;
    // (step, location) -> destroyed / created entity lists
    std::map<std::pair<int, std::string>, std::vector<std::string>> destroyed, created;
    for (const auto& [entity, rows] : para) {
        bool before = exists_before_first_step(rows);
        bool after = exists_after_last_step(rows);
        int first_destroy = -1;
        bool recreated = false;
        for (const auto& r : rows) {
            if (r.action == Action::Destroy) {
                if (first_destroy < 0) first_destroy = r.step;
                destroyed[{r.step, r.before}].push_back(entity);
            } else if (r.action == Action::Create) {
                if (first_destroy >= 0 && r.step > first_destroy) recreated = true;
                created[{r.step, r.after}].push_back(entity);
            } else if (r.action == Action::Move) {
                out.moves.insert({entity, r.step, r.before, r.after});
            }
        }
        if (before && first_destroy >= 0 && !recreated) out.inputs.insert(entity);
        if (after && !before) out.outputs.insert(entity);
    }
    for (auto& [key, dst] : destroyed) {
        auto it = created.find(key);
        if (it == created.end()) continue;
        std::vector<std::string> cr = it->second;
        std::sort(dst.begin(), dst.end());
        std::sort(cr.begin(), cr.end());
        out.conversions.insert({key.first, key.second, dst, cr});
    }
    return out;
}

template <typename Set>
inline void score_sets(const Set& pred, const Set& gold, double& p_sum, double& r_sum,
                       double& f_sum) {
    long hits = 0;
    for (const auto& t : pred)
        if (gold.count(t)) ++hits;
    double p = safe_ratio(hits, static_cast<long>(pred.size()), static_cast<long>(gold.size()));
    double r = safe_ratio(hits, static_cast<long>(gold.size()), static_cast<long>(pred.size()));
    p_sum += p;
    r_sum += r;
    f_sum += f1_of(p, r);
}

} // namespace detail

// Q1 inputs / Q2 outputs / Q3 conversions / Q4 moves. The evaluation
// paragraph set comes from the gold rows; prediction rows for unknown
// paragraphs are ignored.
inline DocLevelReport eval_document_level(const std::vector<PredictionRecord>& pred_rows,
                                          const std::vector<PredictionRecord>& gold_rows) {
    detail::ParaMap pred = detail::group_rows(pred_rows);
    detail::ParaMap gold = detail::group_rows(gold_rows);
    DocLevelReport rep;
    double p[4] = {0, 0, 0, 0}, r[4] = {0, 0, 0, 0}, f[4] = {0, 0, 0, 0};
    for (const auto& [pid, gold_para] : gold) {
        static const std::map<std::string, std::vector<PredictionRecord>> kEmpty;
        auto it = pred.find(pid);
        const auto& pred_para = it == pred.end() ? kEmpty : it->second;
        for (const auto& [entity, rows] : gold_para)
            if (!pred_para.count(entity)) ++rep.missing_entities;
        detail::ParaTuples pt = detail::derive_tuples(pred_para);
        detail::ParaTuples gt = detail::derive_tuples(gold_para);
        detail::score_sets(pt.inputs, gt.inputs, p[0], r[0], f[0]);
        detail::score_sets(pt.outputs, gt.outputs, p[1], r[1], f[1]);
        detail::score_sets(pt.conversions, gt.conversions, p[2], r[2], f[2]);
        detail::score_sets(pt.moves, gt.moves, p[3], r[3], f[3]);
        ++rep.paragraphs;
    }
    require(rep.paragraphs > 0, "eval_document_level: gold rows name no paragraphs");
    QuestionScore* qs[4] = {&rep.inputs, &rep.outputs, &rep.conversions, &rep.moves};
    for (int q = 0; q < 4; ++q) {
        qs[q]->precision = p[q] / rep.paragraphs;
        qs[q]->recall = r[q] / rep.paragraphs;
        qs[q]->f1 = f[q] / rep.paragraphs;
        rep.overall_f1 += qs[q]->f1 / 4.0;
    }
    return rep;
}

// Sentence-level questions, ten per (paragraph, entity) pair taken from gold:
//   Cat-1  "is the entity created/destroyed/moved?"      3 always asked
//   Cat-2  "when does the first such event happen?"      asked per gold event
//   Cat-3  "where?" (create: destination; destroy: source; move: from and to)
inline SentLevelReport eval_sentence_level(const std::vector<PredictionRecord>& pred_rows,
                                           const std::vector<PredictionRecord>& gold_rows) {
    detail::ParaMap pred = detail::group_rows(pred_rows);
    detail::ParaMap gold = detail::group_rows(gold_rows);
    SentLevelReport rep;

    struct FirstEvent {
        bool present = false;
        int step = 0;
        std::string loc_a; // create: after; destroy: before; move: from
        std::string loc_b; // move: to
    };
    auto first_event = [](const std::vector<PredictionRecord>& rows, Action a) {
        FirstEvent ev;
        for (const auto& r : rows) {
            if (r.action != a) continue;
            ev.present = true;
            ev.step = r.step;
            ev.loc_a = a == Action::Create ? r.after : r.before;
            ev.loc_b = r.after;
            break;
        }
        return ev;
    };

    static const std::vector<PredictionRecord> kNoRows;
    for (const auto& [pid, gold_para] : gold) {
        auto pit = pred.find(pid);
        for (const auto& [entity, grows] : gold_para) {
            const std::vector<PredictionRecord>* prows = &kNoRows;
            if (pit != pred.end()) {
                auto eit = pit->second.find(entity);
                if (eit != pit->second.end()) prows = &eit->second;
                else ++rep.missing_entities;
            } else {
                ++rep.missing_entities;
            }
            for (Action a : {Action::Create, Action::Destroy, Action::Move}) {
                FirstEvent ge = first_event(grows, a);
                FirstEvent pe = first_event(*prows, a);
                ++rep.cat1_total;
                if (ge.present == pe.present) ++rep.cat1_correct;
                if (!ge.present) continue;
                ++rep.cat2_total;
                if (pe.present && pe.step == ge.step) ++rep.cat2_correct;
                ++rep.cat3_total;
                if (pe.present && pe.loc_a == ge.loc_a) ++rep.cat3_correct;
                if (a == Action::Move) {
                    ++rep.cat3_total;
                    if (pe.present && pe.loc_b == ge.loc_b) ++rep.cat3_correct;
                }
            }
        }
    }
    auto acc = [](long c, long t) { return t == 0 ? 1.0 : static_cast<double>(c) / t; };
    rep.cat1_accuracy = acc(rep.cat1_correct, rep.cat1_total);
    rep.cat2_accuracy = acc(rep.cat2_correct, rep.cat2_total);
    rep.cat3_accuracy = acc(rep.cat3_correct, rep.cat3_total);
    rep.macro_avg = (rep.cat1_accuracy + rep.cat2_accuracy + rep.cat3_accuracy) / 3.0;
    long total = rep.cat1_total + rep.cat2_total + rep.cat3_total;
    long correct = rep.cat1_correct + rep.cat2_correct + rep.cat3_correct;
    rep.micro_avg = acc(correct, total);
    return rep;
}

// Location-change triples for the Recipes protocol: every MOVE row plus
// every CREATE row with a concrete destination yields
// (para_id, entity, step, new_location); scored corpus-wide.
inline RecipesReport eval_recipes(const std::vector<PredictionRecord>& pred_rows,
                                  const std::vector<PredictionRecord>& gold_rows) {
    using Triple = std::tuple<std::string, std::string, int, std::string>;
    auto derive = [](const std::vector<PredictionRecord>& rows) {
        std::set<Triple> out;
        for (const auto& r : rows) {
            if (r.action == Action::Move)
                out.insert({r.para_id, r.entity, r.step, r.after});
            else if (r.action == Action::Create && r.after != "-" && r.after != "?")
                out.insert({r.para_id, r.entity, r.step, r.after});
        }
        return out;
    };
    std::set<Triple> pred = derive(pred_rows);
    std::set<Triple> gold = derive(gold_rows);
    RecipesReport rep;
    rep.pred_triples = static_cast<long>(pred.size());
    rep.gold_triples = static_cast<long>(gold.size());
    for (const auto& t : pred)
        if (gold.count(t)) ++rep.matched;
    rep.precision = detail::safe_ratio(rep.matched, rep.pred_triples, rep.gold_triples);
    rep.recall = detail::safe_ratio(rep.matched, rep.gold_triples, rep.pred_triples);
    rep.f1 = detail::f1_of(rep.precision, rep.recall);
    return rep;
}

// ---- reporting ----

inline nlohmann::json to_json(const QuestionScore& q) {
    return {{"precision", q.precision}, {"recall", q.recall}, {"f1", q.f1}};
}

inline nlohmann::json to_json(const DocLevelReport& r) {
    return {{"inputs", to_json(r.inputs)},
            {"outputs", to_json(r.outputs)},
            {"conversions", to_json(r.conversions)},
            {"moves", to_json(r.moves)},
            {"overall_f1", r.overall_f1},
            {"paragraphs", r.paragraphs},
            {"missing_entities", r.missing_entities}};
}

inline nlohmann::json to_json(const SentLevelReport& r) {
    return {{"cat1", {{"accuracy", r.cat1_accuracy}, {"correct", r.cat1_correct}, {"total", r.cat1_total}}},
            {"cat2", {{"accuracy", r.cat2_accuracy}, {"correct", r.cat2_correct}, {"total", r.cat2_total}}},
            {"cat3", {{"accuracy", r.cat3_accuracy}, {"correct", r.cat3_correct}, {"total", r.cat3_total}}},
            {"macro_avg", r.macro_avg},
            {"micro_avg", r.micro_avg},
            {"missing_entities", r.missing_entities}};
}

inline nlohmann::json to_json(const RecipesReport& r) {
    return {{"precision", r.precision}, {"recall", r.recall},       {"f1", r.f1},
            {"pred_triples", r.pred_triples}, {"gold_triples", r.gold_triples},
            {"matched", r.matched}};
}

} // namespace sgr
