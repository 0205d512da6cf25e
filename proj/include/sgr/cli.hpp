#pragma once

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sgr/checkpoint.hpp"
#include "sgr/corpus.hpp"
#include "sgr/error.hpp"
#include "sgr/evaluator.hpp"
#include "sgr/grad_check.hpp"
#include "sgr/model.hpp"
#include "sgr/predictor.hpp"
#include "sgr/scene_graph.hpp"
#include "sgr/state_reasoner.hpp"
#include "sgr/synthetic.hpp"
#include "sgr/trainer.hpp"

namespace sgr::cli {

// ---- train config files: line-based key=value ----

inline void apply_config_file(TrainConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) io_fail("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        auto parts = split(s, '=');
        require(parts.size() == 2, path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(parts[0]);
        std::string val = trim(parts[1]);
        try {
            if (key == "learning_rate") cfg.learning_rate = std::stod(val);
            else if (key == "batch_size") cfg.batch_size = std::stoi(val);
            else if (key == "epochs") cfg.epochs = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoul(val);
            else if (key == "dev_every") cfg.dev_every = std::stoi(val);
            else if (key == "d") cfg.model.d = std::stoi(val);
            else if (key == "layers") cfg.model.layers = std::stoi(val);
            else if (key == "heads") cfg.model.heads = std::stoi(val);
            else if (key == "ff_mult") cfg.model.ff_mult = std::stoi(val);
            else if (key == "l_max") cfg.model.l_max = std::stoi(val);
            else if (key == "head_hidden") cfg.model.head_hidden = std::stoi(val);
            else contract_fail(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        } catch (const Error&) {
            throw;
        } catch (...) {
            contract_fail(path + ":" + std::to_string(lineno) + ": bad value for '" + key + "'");
        }
    }
}

// ---- subcommand bodies ----

inline int cmd_preprocess(const std::string& data, const std::string& out_path, Split split) {
    std::vector<ProcedureInstance> corpus = load_corpus(data);
    std::ofstream out(out_path);
    if (!out) io_fail("cannot write " + out_path);
    for (auto& inst : corpus) {
        prepare_candidates(inst, split);
        nlohmann::json j = instance_to_json(inst);
        nlohmann::json mentions = nlohmann::json::array();
        for (const auto& sentence : inst.sentences) {
            std::vector<std::string> toks = tokenize(sentence);
            nlohmann::json row = nlohmann::json::array();
            for (const MentionSpan& m : match_entities(toks, inst.entities))
                row.push_back({{"entity", inst.entities[m.entity]},
                               {"start", m.start},
                               {"end", m.end}});
            mentions.push_back(row);
        }
        j["mentions"] = mentions;
        out << j.dump() << "\n";
    }
    std::cout << "preprocessed " << corpus.size() << " instances -> " << out_path << "\n";
    return 0;
}

inline int cmd_train(const std::string& data, const std::string& dev_path,
                     const std::string& config_path, const std::string& checkpoint_path,
                     const std::string& log_path, const std::string& triples_path,
                     const std::string& vocab_path, bool seed_given, unsigned long seed) {
    TrainConfig cfg;
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    if (seed_given) cfg.seed = seed;

    std::vector<ProcedureInstance> train_set = load_corpus(data);
    std::vector<ProcedureInstance> dev_set;
    if (!dev_path.empty()) dev_set = load_corpus(dev_path);
    std::vector<KnowledgeTriple> extra;
    if (!triples_path.empty()) extra = load_triples(triples_path);

    TrainResult result = train(std::move(train_set), std::move(dev_set), cfg, extra);
    save_checkpoint(result.model, checkpoint_path);
    if (!log_path.empty()) save_train_log(result.log, log_path);
    if (!vocab_path.empty()) result.model.vocab.save(vocab_path);

    const EpochLog& last = result.log.back();
    std::cout << "trained " << last.epoch << " epochs, final train loss " << last.train_loss;
    if (result.best_epoch >= 0)
        std::cout << ", best dev doc F1 " << result.best_dev_f1 << " at epoch "
                  << result.best_epoch;
    std::cout << "\ncheckpoint -> " << checkpoint_path << "\n";
    return 0;
}

inline nlohmann::json scenes_to_json(const PreparedInstance& pi,
                                     const std::vector<SceneGraph>& scenes) {
    nlohmann::json steps = nlohmann::json::array();
    for (size_t t = 0; t < scenes.size(); ++t) {
        nlohmann::json ents = nlohmann::json::array();
        for (int e = 0; e < pi.num_entities(); ++e) {
            std::string loc = "-";
            if (scenes[t].exists(e)) {
                int col = scenes[t].location[e];
                loc = col == pi.graph.unk_col() ? "?" : pi.graph.nodes[pi.graph.location_node(col)].surface;
            }
            ents.push_back({{"entity", pi.instance.entities[e]},
                            {"exists", scenes[t].exists(e)},
                            {"location", loc}});
        }
        steps.push_back({{"step", t}, {"entities", ents}});
    }
    return {{"para_id", pi.instance.para_id}, {"scenes", steps}};
}

inline int cmd_predict(const std::string& checkpoint_path, const std::string& data,
                       const std::string& out_path, Split split,
                       const std::string& triples_path, bool count_invocations,
                       const std::string& dump_scenes_path) {
    Model model = load_checkpoint(checkpoint_path);
    std::vector<ProcedureInstance> corpus = load_corpus(data);
    std::vector<KnowledgeTriple> extra;
    if (!triples_path.empty()) extra = load_triples(triples_path);

    std::vector<PredictionRecord> rows;
    nlohmann::json dumps = nlohmann::json::array();
    long total_steps = 0, total_scene_ctx = 0, total_entitywise_ctx = 0;
    for (auto& inst : corpus) {
        prepare_candidates(inst, split);
        PreparedInstance pi = prepare_instance(inst, model.vocab, model.cfg, extra);
        InvocationCounters counters;
        Tape tape;
        BoundParams bp = bind_params(tape, model.params, /*requires_grad=*/false);
        RolloutResult ro = rollout(tape, bp, model.cfg, model.rels, pi,
                                   RolloutMode::Autoregressive, &counters);
        std::vector<SceneGraph> scenes = ro.decoded_scenes();
        std::vector<EntityTrajectory> trajs =
            apply_constraints(infer_states(pi.instance, pi.graph, scenes));
        auto inst_rows = emit_predictions(pi.instance.para_id, trajs);
        rows.insert(rows.end(), inst_rows.begin(), inst_rows.end());
        if (!dump_scenes_path.empty()) dumps.push_back(scenes_to_json(pi, scenes));
        if (count_invocations) {
            InvocationCounters ref;
            entitywise_reference_predict(model, pi, &ref);
            std::cout << "para " << inst.para_id << " T=" << inst.num_steps()
                      << " N=" << inst.num_entities()
                      << " scene_context_calls=" << counters.step_context_calls
                      << " structure_calls=" << counters.structure_calls
                      << " concept_context_calls=" << counters.concept_context_calls
                      << " entitywise_context_calls=" << ref.step_context_calls << "\n";
            total_scene_ctx += counters.step_context_calls;
            total_entitywise_ctx += ref.step_context_calls;
            total_steps += inst.num_steps() + 1;
        }
    }
    save_predictions(rows, out_path);
    if (!dump_scenes_path.empty()) {
        std::ofstream dout(dump_scenes_path);
        if (!dout) io_fail("cannot write " + dump_scenes_path);
        dout << dumps.dump(2) << "\n";
    }
    if (count_invocations)
        std::cout << "total: scene-wise context calls " << total_scene_ctx << " (= Σ T_i+1 = "
                  << total_steps << "), entity-wise reference " << total_entitywise_ctx << "\n";
    std::cout << "wrote " << rows.size() << " prediction rows -> " << out_path << "\n";
    return 0;
}

inline std::vector<PredictionRecord> load_gold_rows(const std::string& path) {
    if (ends_with(path, ".jsonl")) {
        std::vector<PredictionRecord> rows;
        for (const auto& inst : load_corpus(path)) {
            require(inst.has_gold(), inst.para_id + ": gold JSONL instance lacks annotations");
            auto r = emit_predictions(inst.para_id, gold_trajectories(inst));
            rows.insert(rows.end(), r.begin(), r.end());
        }
        return rows;
    }
    return load_predictions(path);
}

inline int cmd_evaluate(const std::string& pred_path, const std::string& gold_path,
                        const std::string& out_path, const std::string& task) {
    std::vector<PredictionRecord> pred = load_predictions(pred_path);
    std::vector<PredictionRecord> gold = load_gold_rows(gold_path);
    nlohmann::json report;
    std::ostringstream table;
    if (task == "all" || task == "propara") {
        DocLevelReport doc = eval_document_level(pred, gold);
        SentLevelReport sent = eval_sentence_level(pred, gold);
        report["document_level"] = to_json(doc);
        report["sentence_level"] = to_json(sent);
        table << "document-level  P       R       F1\n";
        auto row = [&](const char* name, const QuestionScore& q) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "  %-12s  %.4f  %.4f  %.4f\n", name, q.precision,
                          q.recall, q.f1);
            table << buf;
        };
        row("inputs", doc.inputs);
        row("outputs", doc.outputs);
        row("conversions", doc.conversions);
        row("moves", doc.moves);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "  overall F1    %.4f\n", doc.overall_f1);
        table << buf;
        std::snprintf(buf, sizeof(buf),
                      "sentence-level  cat1 %.4f  cat2 %.4f  cat3 %.4f  macro %.4f  micro %.4f\n",
                      sent.cat1_accuracy, sent.cat2_accuracy, sent.cat3_accuracy, sent.macro_avg,
                      sent.micro_avg);
        table << buf;
        if (doc.missing_entities > 0)
            table << "warning: " << doc.missing_entities
                  << " gold entities had no prediction rows (scored as all-miss)\n";
    }
    if (task == "all" || task == "recipes") {
        RecipesReport rec = eval_recipes(pred, gold);
        report["recipes"] = to_json(rec);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "recipes         P %.4f  R %.4f  F1 %.4f\n",
                      rec.precision, rec.recall, rec.f1);
        table << buf;
    }
    std::cout << table.str() << report.dump(2) << "\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) io_fail("cannot write " + out_path);
        out << report.dump(2) << "\n";
    }
    return 0;
}

inline int cmd_roundtrip(const std::string& data, int random_count, unsigned long seed) {
    std::vector<ProcedureInstance> corpus;
    if (!data.empty()) {
        corpus = load_corpus(data);
        for (auto& inst : corpus) prepare_candidates(inst, Split::Train);
    }
    if (random_count > 0) {
        auto extra = generate_random_annotations(random_count, seed);
        corpus.insert(corpus.end(), extra.begin(), extra.end());
    }
    require(!corpus.empty(), "roundtrip-check: nothing to check (use --data and/or --random)");
    long mismatches = 0, checked = 0;
    for (const auto& inst : corpus) {
        require(inst.has_gold(), inst.para_id + ": round-trip check requires gold annotations");
        CompleteGraph g = build_complete_graph(inst);
        std::vector<SceneGraph> scenes = construct_gold_graphs(inst, g);
        std::vector<EntityTrajectory> trajs = infer_states(inst, g, scenes);
        for (int e = 0; e < inst.num_entities(); ++e) {
            ++checked;
            bool ok = true;
            for (int t = 0; t < inst.num_steps(); ++t) {
                std::string gold_loc = (*inst.gold_locations)[e][t];
                if (gold_loc != "?" && gold_loc != "-") gold_loc = normalize_span(gold_loc);
                if (trajs[e].states[t] != (*inst.gold_states)[e][t] ||
                    trajs[e].locations[t] != gold_loc)
                    ok = false;
            }
            if (!ok) {
                ++mismatches;
                std::cout << "mismatch: " << inst.para_id << " entity '" << inst.entities[e]
                          << "'\n";
            }
        }
    }
    std::cout << "round-trip: " << checked << " entity trajectories over " << corpus.size()
              << " instances, " << mismatches << " mismatches\n";
    return mismatches == 0 ? 0 : 1;
}

inline int cmd_gradcheck(int d, unsigned long seed, double tolerance, double eps) {
    ModelConfig mc;
    mc.d = d;
    mc.layers = 1;
    mc.heads = 2;
    mc.ff_mult = 2;
    mc.l_max = 32;
    SynthConfig sc;
    sc.paragraphs = 1;
    sc.seed = seed;
    sc.min_entities = sc.max_entities = 2;
    sc.min_steps = sc.max_steps = 2;
    sc.min_locations = sc.max_locations = 2;
    std::vector<ProcedureInstance> corpus = generate_synthetic(sc);
    prepare_candidates(corpus[0], Split::Train);
    Vocab vocab = Vocab::build(corpus);
    RelationVocab rels;
    Model model = Model::init(mc, vocab, rels, seed);
    PreparedInstance pi = prepare_instance(corpus[0], model.vocab, model.cfg);

    LossFn fn = [&](Tape& tape, const BoundParams& bp) {
        RolloutResult ro = rollout(tape, bp, model.cfg, model.rels, pi,
                                   RolloutMode::TeacherForced);
        return rollout_loss(tape, ro, pi);
    };
    GradCheckReport report = grad_check(fn, model.params, tolerance, eps);
    for (const auto& e : report.entries) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "  %-16s max rel err %.3e (analytic %.6e numeric %.6e)\n",
                      e.param.c_str(), e.max_rel_err, e.analytic, e.numeric);
        std::cout << buf;
    }
    std::cout << (report.passed ? "PASS" : "FAIL") << ": max relative error "
              << report.max_rel_err << " vs tolerance " << tolerance << "\n";
    return report.passed ? 0 : 1;
}

inline int cmd_gen_synthetic(const SynthConfig& cfg, const std::string& out_path) {
    std::vector<ProcedureInstance> corpus = generate_synthetic(cfg);
    save_corpus(corpus, out_path);
    std::cout << "generated " << corpus.size() << " paragraphs -> " << out_path << "\n";
    return 0;
}

// ---- entry point ----

inline int run(const std::vector<std::string>& args) {
    CLI::App app{"scene-wise procedural text understanding", "sgr"};
    app.require_subcommand(1);

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "enrich a JSONL corpus with candidates/mentions");
    std::string pre_data, pre_out, pre_split = "train";
    pre->add_option("--data", pre_data, "input JSONL")->required();
    pre->add_option("--out", pre_out, "output JSONL")->required();
    pre->add_option("--split", pre_split, "train|dev|test (default train)");

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    std::string tr_data, tr_dev, tr_config, tr_ckpt, tr_log, tr_triples, tr_vocab;
    unsigned long tr_seed = 0;
    tr->add_option("--data", tr_data, "training JSONL")->required();
    tr->add_option("--dev", tr_dev, "dev JSONL for model selection");
    tr->add_option("--config", tr_config, "key=value config file");
    tr->add_option("--checkpoint", tr_ckpt, "output checkpoint")->required();
    tr->add_option("--log", tr_log, "training log CSV");
    tr->add_option("--triples", tr_triples, "global knowledge triples TSV");
    tr->add_option("--save-vocab", tr_vocab, "also write the vocabulary");
    auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "override config seed");

    // predict
    auto* pr = app.add_subcommand("predict", "run inference to a prediction TSV");
    std::string pr_ckpt, pr_data, pr_out, pr_split = "test", pr_triples, pr_dump;
    bool pr_count = false;
    pr->add_option("--checkpoint", pr_ckpt, "model checkpoint")->required();
    pr->add_option("--data", pr_data, "input JSONL")->required();
    pr->add_option("--out", pr_out, "output TSV")->required();
    pr->add_option("--split", pr_split, "train|dev|test (default test)");
    pr->add_option("--triples", pr_triples, "global knowledge triples TSV");
    pr->add_flag("--count-invocations", pr_count, "report encoder invocation counts");
    pr->add_option("--dump-scenes", pr_dump, "also dump decoded scenes as JSON");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score predictions against gold");
    std::string ev_pred, ev_gold, ev_out, ev_task = "all";
    ev->add_option("--pred", ev_pred, "prediction TSV")->required();
    ev->add_option("--gold", ev_gold, "gold TSV or annotated JSONL")->required();
    ev->add_option("--out", ev_out, "metrics JSON file");
    ev->add_option("--task", ev_task, "all|propara|recipes (default all)");

    // roundtrip-check
    auto* rt = app.add_subcommand("roundtrip-check", "verify construct->reason identity");
    std::string rt_data;
    int rt_random = 0;
    unsigned long rt_seed = 1;
    rt->add_option("--data", rt_data, "gold JSONL to check");
    rt->add_option("--random", rt_random, "also check N random annotation sets");
    rt->add_option("--seed", rt_seed, "seed for --random");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check on a toy fixture");
    int gc_d = 8;
    unsigned long gc_seed = 1;
    double gc_tol = 1e-4, gc_eps = 1e-5;
    gc->add_option("--d", gc_d, "hidden size (default 8)");
    gc->add_option("--seed", gc_seed, "seed");
    gc->add_option("--tolerance", gc_tol, "relative error tolerance");
    gc->add_option("--eps", gc_eps, "finite-difference step");

    // gen-synthetic
    auto* gs = app.add_subcommand("gen-synthetic", "generate a synthetic corpus");
    SynthConfig gs_cfg;
    std::string gs_out;
    gs->add_option("--paragraphs", gs_cfg.paragraphs, "paragraph count (default 30)");
    gs->add_option("--seed", gs_cfg.seed, "seed (default 7)");
    gs->add_option("--out", gs_out, "output JSONL")->required();
    gs->add_option("--min-entities", gs_cfg.min_entities, "");
    gs->add_option("--max-entities", gs_cfg.max_entities, "");
    gs->add_option("--min-steps", gs_cfg.min_steps, "");
    gs->add_option("--max-steps", gs_cfg.max_steps, "");
    gs->add_option("--min-locations", gs_cfg.min_locations, "");
    gs->add_option("--max-locations", gs_cfg.max_locations, "");
    gs->add_flag("--knowledge", gs_cfg.with_knowledge, "attach knowledge triples");
    gs->add_option("--prefix", gs_cfg.id_prefix, "para_id prefix (default syn)");

    try {
        // CLI11's string-vector overload wants the arguments reversed.
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*pre) return cmd_preprocess(pre_data, pre_out, parse_split(pre_split));
        if (*tr)
            return cmd_train(tr_data, tr_dev, tr_config, tr_ckpt, tr_log, tr_triples, tr_vocab,
                             tr_seed_opt->count() > 0, tr_seed);
        if (*pr)
            return cmd_predict(pr_ckpt, pr_data, pr_out, parse_split(pr_split), pr_triples,
                               pr_count, pr_dump);
        if (*ev) {
            require(ev_task == "all" || ev_task == "propara" || ev_task == "recipes",
                    "evaluate: --task must be all, propara or recipes");
            return cmd_evaluate(ev_pred, ev_gold, ev_out, ev_task);
        }
        if (*rt) return cmd_roundtrip(rt_data, rt_random, rt_seed);
        if (*gc) return cmd_gradcheck(gc_d, gc_seed, gc_tol, gc_eps);
        if (*gs) return cmd_gen_synthetic(gs_cfg, gs_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::IO ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

} // namespace sgr::cli
