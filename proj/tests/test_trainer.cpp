#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "common.hpp"
#include "sgr/checkpoint.hpp"
#include "sgr/synthetic.hpp"
#include "sgr/trainer.hpp"

using namespace sgr;

namespace {

std::vector<ProcedureInstance> synth(int n, unsigned long seed) {
    SynthConfig sc;
    sc.paragraphs = n;
    sc.seed = seed;
    return generate_synthetic(sc);
}

// One-entity one-step fixture over a single concrete location.
// loc_cols = 2 (the location plus UnkLoc), so a uniform location row is 1/2.
struct UniformFixture {
    ProcedureInstance inst;
    CompleteGraph graph;
    std::vector<SceneGraph> gold;
    std::vector<ScenePrediction> uniform;
};

UniformFixture uniform_fixture() {
    UniformFixture fx;
    fx.inst.para_id = "u";
    fx.inst.prompt = "p";
    fx.inst.sentences = {"the thing stays in the box ."};
    fx.inst.entities = {"thing"};
    fx.inst.location_candidates = {"box"};
    fx.inst.initial_locations = std::vector<std::string>{"box"};
    fx.inst.gold_states = {{StateLabel::Exist}};
    fx.inst.gold_locations = {{"box"}};
    fx.graph = build_complete_graph(fx.inst);
    fx.gold = construct_gold_graphs(fx.inst, fx.graph);
    for (size_t t = 0; t < fx.gold.size(); ++t) {
        ScenePrediction p;
        p.mask_probs = Tensor(1, 1, 0.5);
        p.loc_probs = Tensor(1, fx.graph.loc_cols(), 1.0 / fx.graph.loc_cols());
        fx.uniform.push_back(p);
    }
    return fx;
}

bool params_equal(const ParamStore& a, const ParamStore& b) {
    if (a.count() != b.count()) return false;
    for (size_t i = 0; i < a.count(); ++i) {
        if (a.name(i) != b.name(i)) return false;
        if (!a.value(i).same_shape(b.value(i))) return false;
        for (size_t k = 0; k < a.value(i).data.size(); ++k)
            if (a.value(i).data[k] != b.value(i).data[k]) return false;
    }
    return true;
}

} // namespace

TEST_CASE("step_loss is exactly zero on perfect predictions") {
    UniformFixture fx = uniform_fixture();
    std::vector<ScenePrediction> perfect;
    for (const SceneGraph& g : fx.gold) {
        ScenePrediction p;
        p.mask_probs = Tensor(1, 1, g.exists(0) ? 1.0 : 0.0);
        p.loc_probs = Tensor(1, fx.graph.loc_cols());
        if (g.exists(0)) p.loc_probs.at(0, g.location[0]) = 1.0;
        perfect.push_back(p);
    }
    REQUIRE(step_loss(perfect, fx.gold) == 0.0);
}

TEST_CASE("uniform predictions cost -ln(1/2)*2 per supervised step") {
    UniformFixture fx = uniform_fixture();
    // T=1: two scenes (virtual init + step 1), entity exists in both.
    double want = 2.0 * (-std::log(0.5) - std::log(0.5));
    REQUIRE(step_loss(fx.uniform, fx.gold) == Catch::Approx(want).margin(1e-9));
}

TEST_CASE("step_loss rejects misaligned inputs") {
    UniformFixture fx = uniform_fixture();
    std::vector<ScenePrediction> short_pred(fx.uniform.begin(), fx.uniform.end() - 1);
    REQUIRE_THROWS_AS(step_loss(short_pred, fx.gold), Error);
}

TEST_CASE("tape loss value matches the scalar recomputation") {
    auto corpus = synth(2, 55);
    for (auto& inst : corpus) prepare_candidates(inst, Split::Train);
    ModelConfig mc;
    mc.d = 12;
    mc.layers = 1;
    mc.heads = 2;
    Model model = Model::init(mc, Vocab::build(corpus), RelationVocab{}, 5);
    for (const auto& inst : corpus) {
        PreparedInstance pi = prepare_instance(inst, model.vocab, model.cfg);
        Tape tape;
        BoundParams bp = bind_params(tape, model.params, false);
        RolloutResult ro = rollout(tape, bp, model.cfg, model.rels, pi, RolloutMode::TeacherForced);
        double tape_loss = tape.value(rollout_loss(tape, ro, pi)).item();
        std::vector<ScenePrediction> probs;
        for (const auto& s : ro.steps) probs.push_back(s.probs);
        REQUIRE(tape_loss == Catch::Approx(step_loss(probs, pi.gold)).margin(1e-9));
    }
}

TEST_CASE("adam matches a hand-computed update") {
    ParamStore ps;
    ps.add("w", Tensor::scalar(1.0));
    AdamOptimizer adam(ps, 0.1);

    double m = 0.0, v = 0.0, w = 1.0;
    auto hand_step = [&](double g, long t) {
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        double mhat = m / (1.0 - std::pow(0.9, t));
        double vhat = v / (1.0 - std::pow(0.999, t));
        w -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    };

    adam.step({Tensor::scalar(0.4)});
    hand_step(0.4, 1);
    REQUIRE(ps.get("w").item() == Catch::Approx(w).margin(1e-15));

    adam.step({Tensor::scalar(-0.2)});
    hand_step(-0.2, 2);
    REQUIRE(ps.get("w").item() == Catch::Approx(w).margin(1e-15));
}

TEST_CASE("training is bit-deterministic given the seed") {
    auto corpus = synth(4, 5);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 2;
    tc.model.d = 8;
    tc.model.layers = 1;
    tc.model.heads = 2;
    tc.model.l_max = 64;
    TrainResult a = train(corpus, {}, tc);
    TrainResult b = train(corpus, {}, tc);
    REQUIRE(params_equal(a.model.params, b.model.params));
    REQUIRE(a.log.size() == b.log.size());
    for (size_t i = 0; i < a.log.size(); ++i)
        REQUIRE(a.log[i].train_loss == b.log[i].train_loss);
}

TEST_CASE("training loss decreases over the first 10 epochs") {
    auto corpus = synth(30, 7);
    TrainConfig tc;
    tc.epochs = 10;
    tc.model.d = 16;
    tc.model.layers = 1;
    tc.model.heads = 2;
    tc.model.l_max = 64;
    TrainResult res = train(corpus, {}, tc);
    REQUIRE(res.log.size() == 10);
    for (size_t i = 1; i < res.log.size(); ++i)
        REQUIRE(res.log[i].train_loss < res.log[i - 1].train_loss + 1e-6);
}

TEST_CASE("monitor stop keeps the approved parameters") {
    auto corpus = synth(3, 9);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 4;
    tc.model.d = 8;
    tc.model.layers = 1;
    tc.model.heads = 2;
    tc.model.l_max = 64;
    TrainResult plain = train(corpus, {}, tc);

    TrainConfig monitored = tc;
    monitored.epochs = 50;
    monitored.should_stop = [](const TrainProgress& p) { return p.epoch == 3; };
    TrainResult stopped = train(corpus, {}, monitored);
    REQUIRE(stopped.log.size() == 3);
    REQUIRE(params_equal(plain.model.params, stopped.model.params));
}

TEST_CASE("dev selection restores the best parameters on completed runs") {
    auto corpus = synth(4, 13);
    TrainConfig tc;
    tc.epochs = 4;
    tc.dev_every = 1;
    tc.batch_size = 4;
    tc.model.d = 8;
    tc.model.layers = 1;
    tc.model.heads = 2;
    tc.model.l_max = 64;
    TrainResult res = train(corpus, corpus, tc);
    REQUIRE(res.best_epoch >= 1);
    REQUIRE(res.best_epoch <= 4);
    double best = -1.0;
    for (const auto& log : res.log) {
        REQUIRE(log.dev_evaluated);
        best = std::max(best, log.dev_doc_f1);
    }
    REQUIRE(res.best_dev_f1 == best);
}

TEST_CASE("training contract errors") {
    TrainConfig tc;
    REQUIRE_THROWS_AS(train({}, {}, tc), Error);

    auto corpus = synth(1, 3);
    corpus[0].gold_states.reset();
    corpus[0].gold_locations.reset();
    REQUIRE_THROWS_AS(train(corpus, {}, tc), Error);

    TrainConfig bad;
    bad.learning_rate = 0.0;
    REQUIRE_THROWS_AS(train(synth(1, 3), {}, bad), Error);
}

TEST_CASE("train log CSV format") {
    auto dir = std::filesystem::temp_directory_path() / "sgr-trainer-tests";
    std::filesystem::create_directories(dir);
    std::vector<EpochLog> log(2);
    log[0].epoch = 1;
    log[0].train_loss = 12.5;
    log[1].epoch = 2;
    log[1].train_loss = 10.25;
    log[1].dev_evaluated = true;
    log[1].dev_doc_f1 = 0.75;
    std::string path = (dir / "log.csv").string();
    save_train_log(log, path);
    std::ifstream in(path);
    std::string l0, l1, l2;
    std::getline(in, l0);
    std::getline(in, l1);
    std::getline(in, l2);
    REQUIRE(l0 == "epoch,train_loss,dev_doc_f1");
    REQUIRE(l1.substr(0, 2) == "1,");
    REQUIRE(l1.back() == ','); // no dev evaluation -> trailing blank column
    REQUIRE(l2.find("0.75") != std::string::npos);
}
