#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "common.hpp"
#include "sgr/checkpoint.hpp"
#include "sgr/predictor.hpp"
#include "sgr/synthetic.hpp"

using namespace sgr;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "sgr-checkpoint-tests";
    std::filesystem::create_directories(dir);
    return dir;
}

Model fresh_model() {
    SynthConfig sc;
    sc.paragraphs = 3;
    sc.seed = 41;
    sc.with_knowledge = true;
    auto corpus = generate_synthetic(sc);
    std::vector<CompleteGraph> graphs;
    for (auto& inst : corpus) {
        prepare_candidates(inst, Split::Train);
        CompleteGraph g = build_complete_graph(inst);
        enhance_with_knowledge(g, inst.knowledge_triples);
        graphs.push_back(std::move(g));
    }
    ModelConfig mc;
    mc.d = 10;
    mc.layers = 2;
    mc.heads = 2;
    return Model::init(mc, Vocab::build(corpus), RelationVocab::build(graphs), 11);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("checkpoint round trip preserves everything bit for bit") {
    Model m = fresh_model();
    auto dir = temp_dir();
    std::string p1 = (dir / "a.ckpt").string();
    std::string p2 = (dir / "b.ckpt").string();

    save_checkpoint(m, p1);
    Model re = load_checkpoint(p1);

    CHECK(re.cfg.d == m.cfg.d);
    CHECK(re.cfg.layers == m.cfg.layers);
    CHECK(re.cfg.heads == m.cfg.heads);
    CHECK(re.cfg.ff_mult == m.cfg.ff_mult);
    CHECK(re.cfg.l_max == m.cfg.l_max);
    CHECK(re.cfg.head_hidden == m.cfg.head_hidden);

    REQUIRE(re.vocab.size() == m.vocab.size());
    for (int i = 0; i < m.vocab.size(); ++i) CHECK(re.vocab.token(i) == m.vocab.token(i));
    REQUIRE(re.rels.size() == m.rels.size());
    for (int i = 0; i < m.rels.size(); ++i) CHECK(re.rels.name(i) == m.rels.name(i));

    REQUIRE(re.params.count() == m.params.count());
    for (size_t i = 0; i < m.params.count(); ++i) {
        REQUIRE(re.params.name(i) == m.params.name(i));
        const Tensor& a = m.params.value(i);
        const Tensor& b = re.params.value(i);
        REQUIRE(a.same_shape(b));
        for (size_t k = 0; k < a.data.size(); ++k) {
            INFO(m.params.name(i) << " flat index " << k);
            REQUIRE(a.data[k] == b.data[k]);
        }
    }

    // save -> load -> save is byte-identical
    save_checkpoint(re, p2);
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("checkpoints survive extreme parameter values") {
    Model m = fresh_model();
    // hex-float serialization must keep subnormals and huge magnitudes exact
    Tensor& t = m.params.value(0);
    t.data[0] = 5e-324;        // smallest subnormal
    t.data[1] = -1.7976931348623157e308;
    t.data[2] = 0.0;
    t.data[3] = -0.1 + 0.3;    // not representable exactly in decimal
    auto path = (temp_dir() / "extreme.ckpt").string();
    save_checkpoint(m, path);
    Model re = load_checkpoint(path);
    const Tensor& rt = re.params.value(0);
    CHECK(rt.data[0] == 5e-324);
    CHECK(rt.data[1] == -1.7976931348623157e308);
    CHECK(rt.data[2] == 0.0);
    CHECK(rt.data[3] == -0.1 + 0.3);
}

TEST_CASE("load_checkpoint rejects malformed files") {
    auto dir = temp_dir();
    Model m = fresh_model();
    std::string good = (dir / "good.ckpt").string();
    save_checkpoint(m, good);

    SECTION("missing file") {
        try {
            load_checkpoint((dir / "nope.ckpt").string());
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::IO);
        }
    }
    SECTION("wrong magic") {
        std::string bad = (dir / "magic.ckpt").string();
        std::ofstream(bad) << "SOMETHING-ELSE\n";
        try {
            load_checkpoint(bad);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("checkpoint") != std::string::npos);
        }
    }
    SECTION("truncated") {
        std::string content = slurp(good);
        std::string bad = (dir / "trunc.ckpt").string();
        std::ofstream(bad, std::ios::binary) << content.substr(0, content.size() / 2);
        REQUIRE_THROWS_AS(load_checkpoint(bad), Error);
    }
    SECTION("bad config value") {
        std::string bad = (dir / "cfg.ckpt").string();
        std::ofstream(bad) << kCheckpointMagic
                           << "\nconfig d=abc layers=1 heads=1 ff_mult=2 l_max=1 head_hidden=1\n";
        REQUIRE_THROWS_WITH(load_checkpoint(bad), Catch::Matchers::ContainsSubstring("d=abc"));
    }
    SECTION("unknown config key") {
        std::string bad = (dir / "key.ckpt").string();
        std::ofstream(bad) << kCheckpointMagic
                           << "\nconfig d=8 layers=1 heads=1 ff_mult=2 l_max=4 head_hidden=8 "
                              "flux=3\n";
        REQUIRE_THROWS_WITH(load_checkpoint(bad), Catch::Matchers::ContainsSubstring("flux"));
    }
    SECTION("corrupted tensor value") {
        std::string content = slurp(good);
        // replace the first hex float after a tensor header with garbage
        size_t pos = content.find("\n0x");
        if (pos == std::string::npos) pos = content.find("\n-0x");
        REQUIRE(pos != std::string::npos);
        content.replace(pos + 1, 3, "zzz");
        std::string bad = (dir / "val.ckpt").string();
        std::ofstream(bad, std::ios::binary) << content;
        REQUIRE_THROWS_AS(load_checkpoint(bad), Error);
    }
}

TEST_CASE("a loaded checkpoint drives rollouts identically") {
    Model m = fresh_model();
    auto path = (temp_dir() / "drive.ckpt").string();
    save_checkpoint(m, path);
    Model re = load_checkpoint(path);

    SynthConfig sc;
    sc.paragraphs = 1;
    sc.seed = 41;
    auto corpus = generate_synthetic(sc);
    prepare_candidates(corpus[0], Split::Test);
    PreparedInstance pi_a = prepare_instance(corpus[0], m.vocab, m.cfg);
    PreparedInstance pi_b = prepare_instance(corpus[0], re.vocab, re.cfg);

    Tape ta, tb;
    RolloutResult ra = rollout(ta, bind_params(ta, m.params, false), m.cfg, m.rels, pi_a,
                               RolloutMode::Autoregressive);
    RolloutResult rb = rollout(tb, bind_params(tb, re.params, false), re.cfg, re.rels, pi_b,
                               RolloutMode::Autoregressive);
    REQUIRE(ra.steps.size() == rb.steps.size());
    for (size_t t = 0; t < ra.steps.size(); ++t) {
        const Tensor& ma = ra.steps[t].probs.mask_probs;
        const Tensor& mb = rb.steps[t].probs.mask_probs;
        REQUIRE(ma.same_shape(mb));
        for (size_t k = 0; k < ma.data.size(); ++k) REQUIRE(ma.data[k] == mb.data[k]);
    }
}
