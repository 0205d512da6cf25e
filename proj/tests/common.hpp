#pragma once

// Shared fixtures and independent oracles for the test suite. Everything in
// here is deliberately written with plain loops over plain containers, not
// by calling back into the library's own helpers, so that a bug in the
// library cannot hide inside its oracle.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "sgr/corpus.hpp"
#include "sgr/scene_graph.hpp"
#include "sgr/structure_encoder.hpp"
#include "sgr/tensor.hpp"

namespace oracle {

using sgr::Action;
using sgr::PredictionRecord;

// ---- document-level scoring oracle --------------------------------------
//
// Works off reconstructed location trajectories: row (step t, before, after)
// means loc_{t-1} = before and loc_t = after. From the trajectory the four
// question tuple sets are read off directly.

struct EntityTrace {
    std::vector<int> steps;
    std::vector<Action> actions;
    std::vector<std::string> locs; // loc_0 .. loc_T
};

inline EntityTrace trace_of(std::vector<PredictionRecord> rows) {
    std::sort(rows.begin(), rows.end(),
              [](const PredictionRecord& a, const PredictionRecord& b) { return a.step < b.step; });
    EntityTrace tr;
    if (rows.empty()) return tr;
    tr.locs.push_back(rows.front().before);
    for (const auto& r : rows) {
        tr.steps.push_back(r.step);
        tr.actions.push_back(r.action);
        tr.locs.push_back(r.after);
    }
    return tr;
}

struct DocTuples {
    std::set<std::string> inputs, outputs;
    std::set<std::string> conversions; // serialized tuples
    std::set<std::string> moves;
};

inline DocTuples doc_tuples(const std::map<std::string, std::vector<PredictionRecord>>& by_entity) {
    DocTuples out;
    // (step|location) -> sorted entity names
    std::map<std::string, std::vector<std::string>> destroyed_at, created_at;
    for (const auto& [entity, rows] : by_entity) {
        EntityTrace tr = trace_of(rows);
        if (tr.steps.empty()) continue;
        bool before = tr.locs.front() != "-";
        bool after = tr.locs.back() != "-";
        int first_destroy = -1;
        bool recreated = false;
        for (size_t k = 0; k < tr.steps.size(); ++k) {
            std::string key;
            switch (tr.actions[k]) {
                case Action::Destroy:
                    if (first_destroy < 0) first_destroy = tr.steps[k];
                    key = std::to_string(tr.steps[k]) + "|" + tr.locs[k];
                    destroyed_at[key].push_back(entity);
                    break;
                case Action::Create:
                    if (first_destroy >= 0 && tr.steps[k] > first_destroy) recreated = true;
                    key = std::to_string(tr.steps[k]) + "|" + tr.locs[k + 1];
                    created_at[key].push_back(entity);
                    break;
                case Action::Move:
                    out.moves.insert(entity + "|" + std::to_string(tr.steps[k]) + "|" +
                                     tr.locs[k] + "|" + tr.locs[k + 1]);
                    break;
                case Action::None:
                    break;
            }
        }
        if (before && first_destroy >= 0 && !recreated) out.inputs.insert(entity);
        if (!before && after) out.outputs.insert(entity);
    }
    for (const auto& [key, dst] : destroyed_at) {
        auto it = created_at.find(key);
        if (it == created_at.end()) continue;
        std::vector<std::string> d = dst, c = it->second;
        std::sort(d.begin(), d.end());
        std::sort(c.begin(), c.end());
        std::string ser = key;
        for (const auto& e : d) ser += "|d:" + e;
        for (const auto& e : c) ser += "|c:" + e;
        out.conversions.insert(ser);
    }
    return out;
}

struct PRF {
    double p = 0.0, r = 0.0, f1 = 0.0;
};

inline PRF prf(const std::set<std::string>& pred, const std::set<std::string>& gold) {
    std::vector<std::string> both;
    std::set_intersection(pred.begin(), pred.end(), gold.begin(), gold.end(),
                          std::back_inserter(both));
    double hits = static_cast<double>(both.size());
    PRF s;
    s.p = pred.empty() ? (gold.empty() ? 1.0 : 0.0) : hits / pred.size();
    s.r = gold.empty() ? (pred.empty() ? 1.0 : 0.0) : hits / gold.size();
    s.f1 = (s.p + s.r) == 0.0 ? 0.0 : 2.0 * s.p * s.r / (s.p + s.r);
    return s;
}

struct OracleDocReport {
    PRF q[4]; // inputs, outputs, conversions, moves, each paragraph-averaged
    double overall = 0.0;
};

inline OracleDocReport oracle_document_level(const std::vector<PredictionRecord>& pred_rows,
                                             const std::vector<PredictionRecord>& gold_rows) {
    std::map<std::string, std::map<std::string, std::vector<PredictionRecord>>> pred, gold;
    for (const auto& r : pred_rows) pred[r.para_id][r.entity].push_back(r);
    for (const auto& r : gold_rows) gold[r.para_id][r.entity].push_back(r);
    OracleDocReport rep;
    int paras = 0;
    for (const auto& [pid, gpara] : gold) {
        DocTuples gt = doc_tuples(gpara);
        DocTuples pt = pred.count(pid) ? doc_tuples(pred[pid]) : DocTuples{};
        const std::set<std::string>* ps[4] = {&pt.inputs, &pt.outputs, &pt.conversions, &pt.moves};
        const std::set<std::string>* gs[4] = {&gt.inputs, &gt.outputs, &gt.conversions, &gt.moves};
        for (int i = 0; i < 4; ++i) {
            PRF s = prf(*ps[i], *gs[i]);
            rep.q[i].p += s.p;
            rep.q[i].r += s.r;
            rep.q[i].f1 += s.f1;
        }
        ++paras;
    }
    for (int i = 0; i < 4; ++i) {
        rep.q[i].p /= paras;
        rep.q[i].r /= paras;
        rep.q[i].f1 /= paras;
        rep.overall += rep.q[i].f1 / 4.0;
    }
    return rep;
}

// ---- sentence-level oracle -----------------------------------------------
//
// Enumerates every question as an explicit record, then counts.

struct Question {
    int category = 0; // 1, 2 or 3
    bool correct = false;
};

struct OracleSentReport {
    double cat[3] = {0, 0, 0};
    double macro = 0.0, micro = 0.0;
};

inline OracleSentReport oracle_sentence_level(const std::vector<PredictionRecord>& pred_rows,
                                              const std::vector<PredictionRecord>& gold_rows) {
    using Key = std::pair<std::string, std::string>;
    std::map<Key, std::vector<PredictionRecord>> pred, gold;
    for (const auto& r : pred_rows) pred[{r.para_id, r.entity}].push_back(r);
    for (const auto& r : gold_rows) gold[{r.para_id, r.entity}].push_back(r);

    // first event of a type: (found, step, loc_a, loc_b)
    auto first = [](std::vector<PredictionRecord> rows, Action a) {
        std::sort(rows.begin(), rows.end(),
                  [](const PredictionRecord& x, const PredictionRecord& y) { return x.step < y.step; });
        std::tuple<bool, int, std::string, std::string> out{false, -1, "", ""};
        for (const auto& r : rows)
            if (r.action == a) {
                out = {true, r.step, a == Action::Create ? r.after : r.before, r.after};
                break;
            }
        return out;
    };

    std::vector<Question> qs;
    for (const auto& [key, grows] : gold) {
        std::vector<PredictionRecord> prows;
        if (auto it = pred.find(key); it != pred.end()) prows = it->second;
        for (Action a : {Action::Create, Action::Destroy, Action::Move}) {
            auto [gfound, gstep, gla, glb] = first(grows, a);
            auto [pfound, pstep, pla, plb] = first(prows, a);
            qs.push_back({1, gfound == pfound});
            if (!gfound) continue;
            qs.push_back({2, pfound && pstep == gstep});
            qs.push_back({3, pfound && pla == gla});
            if (a == Action::Move) qs.push_back({3, pfound && plb == glb});
        }
    }
    OracleSentReport rep;
    long tot[3] = {0, 0, 0}, cor[3] = {0, 0, 0};
    for (const Question& q : qs) {
        ++tot[q.category - 1];
        if (q.correct) ++cor[q.category - 1];
    }
    long all_tot = 0, all_cor = 0;
    for (int c = 0; c < 3; ++c) {
        rep.cat[c] = tot[c] == 0 ? 1.0 : double(cor[c]) / tot[c];
        rep.macro += rep.cat[c] / 3.0;
        all_tot += tot[c];
        all_cor += cor[c];
    }
    rep.micro = all_tot == 0 ? 1.0 : double(all_cor) / all_tot;
    return rep;
}

// ---- recipes oracle -------------------------------------------------------

inline PRF oracle_recipes(const std::vector<PredictionRecord>& pred_rows,
                          const std::vector<PredictionRecord>& gold_rows) {
    auto triples = [](const std::vector<PredictionRecord>& rows) {
        std::set<std::string> out;
        for (const auto& r : rows) {
            bool take = r.action == Action::Move ||
                        (r.action == Action::Create && r.after != "-" && r.after != "?");
            if (take)
                out.insert(r.para_id + "|" + r.entity + "|" + std::to_string(r.step) + "|" +
                           r.after);
        }
        return out;
    };
    return prf(triples(pred_rows), triples(gold_rows));
}

// ---- straight-line GAT oracle ---------------------------------------------
//
// Recomputes Eqs. 1-3 with dense per-pair loops from the same structure and
// parameter tensors the library uses.

struct GatOracleOut {
    std::vector<std::vector<double>> alpha; // M x M
    std::vector<std::vector<double>> h;     // M x d
};

inline GatOracleOut gat_oracle(const sgr::SceneStructure& s, const sgr::Tensor& feats,
                               const sgr::Tensor& w1, const sgr::Tensor& w2,
                               const sgr::Tensor& a) {
    const int m = s.num_nodes, d = feats.cols();
    // Wh = feats . w1
    std::vector<std::vector<double>> wh(m, std::vector<double>(d, 0.0));
    for (int i = 0; i < m; ++i)
        for (int c = 0; c < d; ++c)
            for (int k = 0; k < d; ++k) wh[i][c] += feats.at(i, k) * w1.at(k, c);

    auto dot_a = [&](const std::vector<double>& v, int off) {
        double acc = 0.0;
        for (int k = 0; k < d; ++k) acc += v[k] * a.at(off + k, 0);
        return acc;
    };

    std::vector<std::vector<bool>> linked(m, std::vector<bool>(m, false));
    std::vector<std::vector<double>> e(m, std::vector<double>(m, 0.0));
    for (const auto& link : s.links) {
        std::vector<double> rel(d, 0.0);
        for (int row : link.rel_rows)
            for (int k = 0; k < d; ++k) rel[k] += w2.at(row, k);
        double raw = dot_a(wh[link.i], 0) + dot_a(wh[link.j], d) + dot_a(rel, 2 * d);
        e[link.i][link.j] = raw > 0.0 ? raw : 0.2 * raw;
        linked[link.i][link.j] = true;
    }

    GatOracleOut out;
    out.alpha.assign(m, std::vector<double>(m, 0.0));
    out.h.assign(m, std::vector<double>(m ? d : 0, 0.0));
    for (int i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < m; ++j)
            if (linked[i][j]) mx = std::max(mx, e[i][j]);
        double z = 0.0;
        if (mx != -std::numeric_limits<double>::infinity()) {
            for (int j = 0; j < m; ++j)
                if (linked[i][j]) z += std::exp(e[i][j] - mx);
            for (int j = 0; j < m; ++j)
                if (linked[i][j]) out.alpha[i][j] = std::exp(e[i][j] - mx) / z;
        }
        for (int c = 0; c < d; ++c) {
            double acc = 0.0;
            for (int j = 0; j < m; ++j) acc += out.alpha[i][j] * feats.at(j, c);
            out.h[i][c] = acc > 0.0 ? acc : std::expm1(acc);
        }
    }
    return out;
}

// ---- straight-line transformer oracle --------------------------------------
//
// One post-norm encoder stack on plain vectors. Parameter tensors are read
// from the store by the caller and passed in as matrices.

using Mat = std::vector<std::vector<double>>;

inline Mat mat_of(const sgr::Tensor& t) {
    Mat m(t.rows(), std::vector<double>(t.cols()));
    for (int i = 0; i < t.rows(); ++i)
        for (int j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
    return m;
}

inline Mat mm(const Mat& a, const Mat& b) {
    Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t k = 0; k < b.size(); ++k)
            for (size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
    return c;
}

inline void add_row(Mat& x, const Mat& bias) {
    for (auto& row : x)
        for (size_t j = 0; j < row.size(); ++j) row[j] += bias[0][j];
}

struct LayerWeights {
    Mat wq, wk, wv, wo, ff1, ff2;
    Mat wq_b, wk_b, wv_b, wo_b, ff1_b, ff2_b;
    Mat ln1_g, ln1_b, ln2_g, ln2_b;
};

inline void layer_norm_rows(Mat& x, const Mat& g, const Mat& b) {
    for (auto& row : x) {
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= row.size();
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= row.size();
        double inv = 1.0 / std::sqrt(var + 1e-5);
        for (size_t j = 0; j < row.size(); ++j)
            row[j] = (row[j] - mean) * inv * g[0][j] + b[0][j];
    }
}

inline Mat transformer_oracle(const std::vector<int>& ids, const Mat& tok_emb, const Mat& pos_emb,
                              const std::vector<LayerWeights>& layers, int heads) {
    const int n = static_cast<int>(ids.size());
    const int d = static_cast<int>(tok_emb[0].size());
    const int dh = d / heads;
    Mat x(n, std::vector<double>(d));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x[i][j] = tok_emb[ids[i]][j] + pos_emb[i][j];

    for (const LayerWeights& L : layers) {
        Mat q = mm(x, L.wq), k = mm(x, L.wk), v = mm(x, L.wv);
        add_row(q, L.wq_b);
        add_row(k, L.wk_b);
        add_row(v, L.wv_b);
        Mat cat(n, std::vector<double>(d, 0.0));
        for (int h = 0; h < heads; ++h) {
            for (int i = 0; i < n; ++i) {
                std::vector<double> scores(n, 0.0);
                double mx = -1e300;
                for (int j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (int c = 0; c < dh; ++c) s += q[i][h * dh + c] * k[j][h * dh + c];
                    scores[j] = s / std::sqrt(double(dh));
                    mx = std::max(mx, scores[j]);
                }
                double z = 0.0;
                for (int j = 0; j < n; ++j) z += std::exp(scores[j] - mx);
                for (int c = 0; c < dh; ++c) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j)
                        acc += std::exp(scores[j] - mx) / z * v[j][h * dh + c];
                    cat[i][h * dh + c] = acc;
                }
            }
        }
        Mat attn = mm(cat, L.wo);
        add_row(attn, L.wo_b);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) x[i][j] += attn[i][j];
        layer_norm_rows(x, L.ln1_g, L.ln1_b);

        Mat hmid = mm(x, L.ff1);
        add_row(hmid, L.ff1_b);
        for (auto& row : hmid)
            for (double& vv : row)
                if (vv <= 0.0) vv = std::expm1(vv);
        Mat ff = mm(hmid, L.ff2);
        add_row(ff, L.ff2_b);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) x[i][j] += ff[i][j];
        layer_norm_rows(x, L.ln2_g, L.ln2_b);
    }
    return x;
}

// ---- regex tokenizer oracle -------------------------------------------------
// Lowercase, then: alnum runs | apostrophe followed by letters | any single
// non-space other char.

inline std::vector<std::string> tokenize_oracle(const std::string& text) {
    std::string lower;
    for (char ch : text) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    std::vector<std::string> out;
    size_t i = 0;
    auto alnum = [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'); };
    while (i < lower.size()) {
        char c = lower[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (alnum(c)) {
            size_t j = i;
            while (j < lower.size() && alnum(lower[j])) ++j;
            out.push_back(lower.substr(i, j - i));
            i = j;
        } else if (c == '\'' && i + 1 < lower.size() && lower[i + 1] >= 'a' && lower[i + 1] <= 'z') {
            size_t j = i + 1;
            while (j < lower.size() && lower[j] >= 'a' && lower[j] <= 'z') ++j;
            out.push_back(lower.substr(i, j - i));
            i = j;
        } else {
            out.push_back(std::string(1, c));
            ++i;
        }
    }
    return out;
}

// ---- shared fixtures --------------------------------------------------------

// A Figure-1 style photosynthesis paragraph with full gold annotations.
inline sgr::ProcedureInstance figure_fixture() {
    sgr::ProcedureInstance inst;
    inst.para_id = "fig-1";
    inst.prompt = "photosynthesis";
    inst.sentences = {
        "roots absorb water from the soil .",
        "the water flows to the leaf .",
        "the leaf and the sun make sugar from water .",
    };
    inst.entities = {"water", "sugar"};
    inst.location_candidates = {"soil", "root", "leaf"};
    inst.initial_locations = std::vector<std::string>{"soil", "-"};
    inst.gold_states = {
        {sgr::StateLabel::Move, sgr::StateLabel::Move, sgr::StateLabel::Destroy},
        {sgr::StateLabel::OA, sgr::StateLabel::OA, sgr::StateLabel::Create},
    };
    inst.gold_locations = {
        {"root", "leaf", "-"},
        {"-", "-", "leaf"},
    };
    return inst;
}

// Three hand-built paragraphs of prediction/gold rows for evaluator tests.
// Designed to exercise every question type, conversions included.
struct EvalFixture {
    std::vector<PredictionRecord> gold;
    std::vector<PredictionRecord> pred;
};

inline PredictionRecord row(const std::string& pid, int step, const std::string& ent,
                            Action a, const std::string& before, const std::string& after) {
    PredictionRecord r;
    r.para_id = pid;
    r.step = step;
    r.entity = ent;
    r.action = a;
    r.before = before;
    r.after = after;
    return r;
}

inline EvalFixture eval_fixture() {
    EvalFixture fx;
    auto& g = fx.gold;
    auto& p = fx.pred;

    // p1: water destroyed where sugar is created (a conversion), sugar output.
    g.push_back(row("p1", 1, "water", Action::Move, "soil", "root"));
    g.push_back(row("p1", 2, "water", Action::Move, "root", "leaf"));
    g.push_back(row("p1", 3, "water", Action::Destroy, "leaf", "-"));
    g.push_back(row("p1", 1, "sugar", Action::None, "-", "-"));
    g.push_back(row("p1", 2, "sugar", Action::None, "-", "-"));
    g.push_back(row("p1", 3, "sugar", Action::Create, "-", "leaf"));
    // pred: second move wrong destination, conversion location therefore off.
    p.push_back(row("p1", 1, "water", Action::Move, "soil", "root"));
    p.push_back(row("p1", 2, "water", Action::Move, "root", "stem"));
    p.push_back(row("p1", 3, "water", Action::Destroy, "stem", "-"));
    p.push_back(row("p1", 1, "sugar", Action::None, "-", "-"));
    p.push_back(row("p1", 2, "sugar", Action::None, "-", "-"));
    p.push_back(row("p1", 3, "sugar", Action::Create, "-", "leaf"));

    // p2: destroy-then-recreate (not an input), mover with unknown source.
    g.push_back(row("p2", 1, "seed", Action::Destroy, "soil", "-"));
    g.push_back(row("p2", 2, "seed", Action::Create, "-", "soil"));
    g.push_back(row("p2", 3, "seed", Action::None, "soil", "soil"));
    g.push_back(row("p2", 1, "rain", Action::Move, "?", "soil"));
    g.push_back(row("p2", 2, "rain", Action::None, "soil", "soil"));
    g.push_back(row("p2", 3, "rain", Action::Destroy, "soil", "-"));
    // pred: seed never recreated -> spurious input; rain move step late.
    p.push_back(row("p2", 1, "seed", Action::Destroy, "soil", "-"));
    p.push_back(row("p2", 2, "seed", Action::None, "-", "-"));
    p.push_back(row("p2", 3, "seed", Action::None, "-", "-"));
    p.push_back(row("p2", 1, "rain", Action::None, "?", "?"));
    p.push_back(row("p2", 2, "rain", Action::Move, "?", "soil"));
    p.push_back(row("p2", 3, "rain", Action::Destroy, "soil", "-"));

    // p3: nothing happens in gold; prediction invents an output.
    g.push_back(row("p3", 1, "rock", Action::None, "cave", "cave"));
    g.push_back(row("p3", 2, "rock", Action::None, "cave", "cave"));
    p.push_back(row("p3", 1, "rock", Action::None, "cave", "cave"));
    p.push_back(row("p3", 2, "rock", Action::Create, "-", "cave"));
    return fx;
}

} // namespace oracle
