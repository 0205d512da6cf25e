#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "sgr/error.hpp"
#include "sgr/evaluator.hpp"
#include "sgr/model.hpp"
#include "sgr/params.hpp"
#include "sgr/predictor.hpp"
#include "sgr/state_reasoner.hpp"
#include "sgr/tape.hpp"

namespace sgr {

struct TrainProgress {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_doc_f1 = std::numeric_limits<double>::quiet_NaN(); // latest, NaN before first eval
    const Model* model = nullptr;
};

struct TrainConfig {
    double learning_rate = 5e-5;
    int batch_size = 16;
    int epochs = 100;
    unsigned long seed = 1;
    int dev_every = 10; // dev-eval cadence in epochs
    ModelConfig model;
    // Optional monitor, consulted after every epoch; returning true stops
    // training early with the best checkpoint so far retained.
    std::function<bool(const TrainProgress&)> should_stop;

    void validate() const {
        require(learning_rate > 0 && batch_size > 0 && epochs > 0 && dev_every > 0,
                "TrainConfig: hyperparameters must be positive");
        model.validate();
    }
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    bool dev_evaluated = false;
    double dev_doc_f1 = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_dev_f1 = 0.0;
};

// Reference form of the per-instance loss, straight over probabilities:
//   sum over steps 0..T and entities of
//     - binary cross-entropy of the mask probability against the gold bit
//     - for entities with gold mask 1, categorical cross-entropy of the
//       location row against the gold column
// Perfectly confident correct predictions give exactly zero.
inline double step_loss(const std::vector<ScenePrediction>& predictions,
                        const std::vector<SceneGraph>& gold_graphs) {
    require(predictions.size() == gold_graphs.size(),
            "step_loss: prediction/gold length mismatch");
    constexpr double kTiny = 1e-300;
    double total = 0.0;
    for (size_t t = 0; t < predictions.size(); ++t) {
        const ScenePrediction& p = predictions[t];
        const SceneGraph& g = gold_graphs[t];
        require(p.mask_probs.rows() == g.num_entities && p.loc_probs.rows() == g.num_entities,
                "step_loss: prediction does not match gold entity count");
        for (int e = 0; e < g.num_entities; ++e) {
            double mp = p.mask_probs.at(e, 0);
            total += g.exists(e) ? -std::log(std::max(mp, kTiny))
                                 : -std::log(std::max(1.0 - mp, kTiny));
            if (g.exists(e))
                total += -std::log(std::max(p.loc_probs.at(e, g.location[e]), kTiny));
        }
    }
    return total;
}

// Same loss on the tape, fused with the logits for numerical stability.
// Its value agrees with step_loss over the rollout's probabilities.
inline Tape::Val rollout_loss(Tape& tape, const RolloutResult& ro, const PreparedInstance& pi) {
    require(pi.has_gold(), pi.instance.para_id + ": loss requires gold graphs");
    require(ro.steps.size() == pi.gold.size(), "rollout_loss: rollout/gold length mismatch");
    Tape::Val total{};
    for (size_t t = 0; t < ro.steps.size(); ++t) {
        const SceneGraph& g = pi.gold[t];
        const int n = g.num_entities;
        Tensor mask_targets(n, 1);
        std::vector<int> cols(n, 0);
        std::vector<double> weights(n, 0.0);
        for (int e = 0; e < n; ++e) {
            mask_targets.at(e, 0) = g.exists(e) ? 1.0 : 0.0;
            if (g.exists(e)) {
                cols[e] = g.location[e];
                weights[e] = 1.0;
            }
        }
        Tape::Val step = tape.add(
            tape.bce_with_logits_sum(ro.steps[t].logits.mask_logits, mask_targets),
            tape.softmax_xent_sum(ro.steps[t].logits.loc_logits, cols, weights));
        total = t == 0 ? step : tape.add(total, step);
    }
    return total;
}

// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
class AdamOptimizer {
public:
    AdamOptimizer(ParamStore& params, double lr)
        : params_(&params), lr_(lr) {
        for (size_t i = 0; i < params.count(); ++i) {
            m_.emplace_back(params.value(i).rows(), params.value(i).cols());
            v_.emplace_back(params.value(i).rows(), params.value(i).cols());
        }
    }

    void step(const std::vector<Tensor>& grads) {
        require(grads.size() == params_->count(), "AdamOptimizer: gradient count mismatch");
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, t_);
        const double c2 = 1.0 - std::pow(kBeta2, t_);
        for (size_t i = 0; i < grads.size(); ++i) {
            Tensor& p = params_->value(i);
            require(grads[i].same_shape(p), "AdamOptimizer: gradient shape mismatch for " +
                                                params_->name(i));
            for (size_t k = 0; k < p.data.size(); ++k) {
                double g = grads[i].data[k];
                m_[i].data[k] = kBeta1 * m_[i].data[k] + (1.0 - kBeta1) * g;
                v_[i].data[k] = kBeta2 * v_[i].data[k] + (1.0 - kBeta2) * g * g;
                double mhat = m_[i].data[k] / c1;
                double vhat = v_[i].data[k] / c2;
                p.data[k] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
            }
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    ParamStore* params_;
    double lr_;
    long t_ = 0;
    std::vector<Tensor> m_, v_;
};

namespace detail {

// Deterministic Fisher-Yates draw from the raw engine; std::shuffle's
// behavior varies across standard libraries.
inline void shuffle_indices(std::vector<int>& idx, std::mt19937_64& rng) {
    for (size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng() % i]);
}

inline double dev_doc_f1(const Model& model, const std::vector<PreparedInstance>& dev,
                         const std::vector<PredictionRecord>& dev_gold_rows) {
    std::vector<PredictionRecord> pred_rows;
    for (const auto& pi : dev) {
        auto rows = predict_instance(model, pi);
        pred_rows.insert(pred_rows.end(), rows.begin(), rows.end());
    }
    return eval_document_level(pred_rows, dev_gold_rows).overall_f1;
}

} // namespace detail

// Full training run: teacher-forced maximum-likelihood updates with Adam,
// periodic autoregressive evaluation on the dev set, and retention of the
// parameters with the best dev document-level F1. With an empty dev set the
// final parameters are returned instead and no selection happens.
inline TrainResult train(std::vector<ProcedureInstance> train_set,
                         std::vector<ProcedureInstance> dev_set, const TrainConfig& config,
                         const std::vector<KnowledgeTriple>& extra_triples = {}) {
    config.validate();
    require(!train_set.empty(), "train: empty training corpus");
    for (auto& inst : train_set) {
        require(inst.has_gold(), inst.para_id + ": training requires gold annotations");
        prepare_candidates(inst, Split::Train);
    }
    for (auto& inst : dev_set) {
        require(inst.has_gold(), inst.para_id + ": dev evaluation requires gold annotations");
        prepare_candidates(inst, Split::Dev);
    }

    Vocab vocab = Vocab::build(train_set);
    for (const auto& t : extra_triples) {
        for (const std::string& tok : tokenize(t.head)) vocab.add(tok);
        for (const std::string& tok : tokenize(t.tail)) vocab.add(tok);
    }
    std::vector<CompleteGraph> rel_graphs;
    for (const auto& inst : train_set) {
        CompleteGraph g = build_complete_graph(inst);
        enhance_with_knowledge(g, inst.knowledge_triples);
        enhance_with_knowledge(g, extra_triples);
        rel_graphs.push_back(std::move(g));
    }
    RelationVocab rels = RelationVocab::build(rel_graphs);

    TrainResult result;
    result.model = Model::init(config.model, std::move(vocab), std::move(rels), config.seed);
    Model& model = result.model;

    std::vector<PreparedInstance> train_pis, dev_pis;
    for (const auto& inst : train_set)
        train_pis.push_back(prepare_instance(inst, model.vocab, model.cfg, extra_triples));
    for (const auto& inst : dev_set)
        dev_pis.push_back(prepare_instance(inst, model.vocab, model.cfg, extra_triples));

    std::vector<PredictionRecord> dev_gold_rows;
    for (const auto& inst : dev_set) {
        auto rows = emit_predictions(inst.para_id, gold_trajectories(inst));
        dev_gold_rows.insert(dev_gold_rows.end(), rows.begin(), rows.end());
    }

    AdamOptimizer adam(model.params, config.learning_rate);
    std::mt19937_64 order_rng(config.seed + 0x9e3779b97f4a7c15ULL);
    std::vector<int> order(train_pis.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    ParamStore best_params;
    double latest_dev = std::numeric_limits<double>::quiet_NaN();
    bool stopped_early = false;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        detail::shuffle_indices(order, order_rng);
        double loss_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            size_t stop = std::min(order.size(), start + config.batch_size);
            std::vector<Tensor> acc;
            for (size_t i = 0; i < model.params.count(); ++i)
                acc.emplace_back(model.params.value(i).rows(), model.params.value(i).cols());
            for (size_t k = start; k < stop; ++k) {
                const PreparedInstance& pi = train_pis[order[k]];
                try {
                    Tape tape;
                    BoundParams bp = bind_params(tape, model.params, /*requires_grad=*/true);
                    RolloutResult ro = rollout(tape, bp, model.cfg, model.rels, pi,
                                               RolloutMode::TeacherForced);
                    Tape::Val loss = rollout_loss(tape, ro, pi);
                    loss_sum += tape.value(loss).item();
                    tape.backward(loss);
                    std::vector<Tensor> grads = collect_gradients(tape, bp);
                    for (size_t i = 0; i < acc.size(); ++i)
                        for (size_t d = 0; d < acc[i].data.size(); ++d)
                            acc[i].data[d] += grads[i].data[d];
                } catch (const Error& e) {
                    contract_fail("training aborted at epoch " + std::to_string(epoch) +
                                  ", instance " + pi.instance.para_id + ": " + e.what());
                }
            }
            double inv = 1.0 / static_cast<double>(stop - start);
            for (auto& t : acc)
                for (double& v : t.data) v *= inv;
            adam.step(acc);
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / static_cast<double>(train_pis.size());
        require(std::isfinite(log.train_loss),
                "training aborted: non-finite epoch loss at epoch " + std::to_string(epoch));
        bool last_epoch = epoch == config.epochs;
        if (!dev_pis.empty() && (epoch % config.dev_every == 0 || last_epoch)) {
            log.dev_evaluated = true;
            log.dev_doc_f1 = detail::dev_doc_f1(model, dev_pis, dev_gold_rows);
            latest_dev = log.dev_doc_f1;
            if (result.best_epoch < 0 || log.dev_doc_f1 > result.best_dev_f1) {
                result.best_dev_f1 = log.dev_doc_f1;
                result.best_epoch = epoch;
                best_params = model.params;
            }
        }
        result.log.push_back(log);

        if (config.should_stop) {
            TrainProgress progress{epoch, log.train_loss, latest_dev, &model};
            if (config.should_stop(progress)) {
                stopped_early = true;
                break;
            }
        }
    }

    // Dev-based selection applies to completed runs. A monitor-initiated stop
    // keeps the parameters the monitor just approved.
    if (!stopped_early && result.best_epoch >= 0) model.params = best_params;
    return result;
}

// Training log as CSV: epoch, train_loss, dev_doc_f1 (blank between evals).
inline void save_train_log(const std::vector<EpochLog>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) io_fail("cannot write training log " + path);
    out << "epoch,train_loss,dev_doc_f1\n";
    out.precision(17);
    for (const auto& row : log) {
        out << row.epoch << "," << row.train_loss << ",";
        if (row.dev_evaluated) out << row.dev_doc_f1;
        out << "\n";
    }
}

} // namespace sgr
