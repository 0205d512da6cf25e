#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "common.hpp"
#include "sgr/corpus.hpp"
#include "sgr/synthetic.hpp"

using namespace sgr;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    fs::path p = fs::temp_directory_path() / "sgr-corpus-tests";
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("tokenizer examples") {
    REQUIRE(tokenize("leaf's cells") == std::vector<std::string>{"leaf", "'s", "cells"});
    REQUIRE(tokenize("The Sun RISES.") == std::vector<std::string>{"the", "sun", "rises", "."});
    REQUIRE(tokenize("co-occurs") == std::vector<std::string>{"co", "-", "occurs"});
    REQUIRE(tokenize("  spaced\tout\n") == std::vector<std::string>{"spaced", "out"});
    REQUIRE(tokenize("H2O!") == std::vector<std::string>{"h2o", "!"});
    REQUIRE(tokenize("") == std::vector<std::string>{});
    REQUIRE(tokenize("don't") == std::vector<std::string>{"don", "'t"});
}

TEST_CASE("tokenizer agrees with the regex oracle") {
    std::vector<std::string> samples = {
        "Roots absorb water from the soil.",
        "the plant's leaves -- all of them -- wilt, then die!",
        "it's 42 degrees; CO2 rises (fast).",
        "'quoted' words and trailing apostrophe' here",
        "a--b ''x",
    };
    for (const auto& s : samples) REQUIRE(tokenize(s) == oracle::tokenize_oracle(s));
}

TEST_CASE("normalize_span canonicalizes spacing and case") {
    REQUIRE(normalize_span("  The   LEAF ") == "the leaf");
    REQUIRE(normalize_span("carbon dioxide") == "carbon dioxide");
}

TEST_CASE("entity matching honors aliases, longest first, non-overlap") {
    auto toks = tokenize("the water vapor turns into water droplets");
    auto spans = match_entity(toks, "water vapor/water", 3);
    REQUIRE(spans.size() == 2);
    REQUIRE(spans[0].start == 1);
    REQUIRE(spans[0].end == 3); // "water vapor", longest alias wins
    REQUIRE(spans[1].start == 5);
    REQUIRE(spans[1].end == 6); // plain "water"
    REQUIRE(spans[0].entity == 3);

    REQUIRE(match_entity(tokenize("nothing here"), "water", 0).empty());
}

TEST_CASE("heuristic candidates: preposition rule and final noun") {
    ProcedureInstance inst;
    inst.sentences = {
        "water evaporates from the warm ocean .",
        "clouds drift into them in the carbon dioxide layer .",
        "rain falls and feeds the river",
    };
    auto cands = heuristic_candidates(inst);
    // "from the warm ocean" -> determiner skipped, head "warm", bigram too
    REQUIRE(std::find(cands.begin(), cands.end(), "warm") != cands.end());
    REQUIRE(std::find(cands.begin(), cands.end(), "warm ocean") != cands.end());
    // bigram admitted because "dioxide" is on the noun list
    REQUIRE(std::find(cands.begin(), cands.end(), "carbon dioxide") != cands.end());
    REQUIRE(std::find(cands.begin(), cands.end(), "carbon") != cands.end());
    // "into them": pronoun head, rejected
    REQUIRE(std::find(cands.begin(), cands.end(), "them") == cands.end());
    // sentence-final noun
    REQUIRE(std::find(cands.begin(), cands.end(), "river") != cands.end());
}

TEST_CASE("prepare_candidates injects gold locations on train but not test") {
    ProcedureInstance inst = oracle::figure_fixture();
    inst.location_candidates.clear();

    ProcedureInstance train = inst;
    prepare_candidates(train, Split::Train);
    REQUIRE(std::find(train.location_candidates.begin(), train.location_candidates.end(),
                      "root") != train.location_candidates.end());

    ProcedureInstance test = inst;
    test.gold_states.reset();
    test.gold_locations.reset();
    test.initial_locations.reset();
    prepare_candidates(test, Split::Test);
    // "root" never appears after a preposition or sentence-finally
    REQUIRE(std::find(test.location_candidates.begin(), test.location_candidates.end(),
                      "root") == test.location_candidates.end());
    // but "soil" does ("from the soil .")
    REQUIRE(std::find(test.location_candidates.begin(), test.location_candidates.end(),
                      "soil") != test.location_candidates.end());
}

TEST_CASE("prepare_candidates keeps file-provided spans first and dedupes") {
    ProcedureInstance inst;
    inst.sentences = {"dust settles in the soil ."};
    inst.location_candidates = {"The Soil", "crater"};
    prepare_candidates(inst, Split::Test);
    REQUIRE(inst.location_candidates.front() == "the soil");
    REQUIRE(std::count(inst.location_candidates.begin(), inst.location_candidates.end(),
                       "soil") == 1);
}

TEST_CASE("instance JSONL round-trip is exact") {
    auto dir = temp_dir();
    SynthConfig sc;
    sc.paragraphs = 4;
    sc.seed = 99;
    auto corpus = generate_synthetic(sc);
    corpus.push_back(oracle::figure_fixture());
    std::string path = (dir / "roundtrip.jsonl").string();
    save_corpus(corpus, path);
    auto loaded = load_corpus(path);
    REQUIRE(loaded.size() == corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i)
        REQUIRE(instance_to_json(loaded[i]) == instance_to_json(corpus[i]));
}

TEST_CASE("instance parsing reports the offending field") {
    auto bad = [](const char* body) {
        return parse_instance_json(nlohmann::json::parse(body), "t");
    };
    // no sentences
    REQUIRE_THROWS_WITH(bad(R"({"para_id":"x","prompt":"p","sentences":[],"entities":["e"]})"),
                        Catch::Matchers::ContainsSubstring("sentence"));
    // gold_states without gold_locations
    REQUIRE_THROWS_WITH(
        bad(R"({"para_id":"x","prompt":"p","sentences":["a ."],"entities":["e"],
                "gold_states":[["E"]]})"),
        Catch::Matchers::ContainsSubstring("gold"));
    // ragged gold row
    REQUIRE_THROWS_WITH(
        bad(R"({"para_id":"x","prompt":"p","sentences":["a .","b ."],"entities":["e"],
                "gold_states":[["E"]],"gold_locations":[["soil"]]})"),
        Catch::Matchers::ContainsSubstring("one column per step"));
    // unknown state label
    REQUIRE_THROWS_WITH(
        bad(R"({"para_id":"x","prompt":"p","sentences":["a ."],"entities":["e"],
                "gold_states":[["X"]],"gold_locations":[["soil"]]})"),
        Catch::Matchers::ContainsSubstring("state"));
}

TEST_CASE("state labels round-trip through their names") {
    for (StateLabel s : {StateLabel::OA, StateLabel::OB, StateLabel::Exist, StateLabel::Move,
                         StateLabel::Create, StateLabel::Destroy}) {
        REQUIRE(parse_state_label(state_label_name(s), "t") == s);
    }
    REQUIRE(std::string(state_label_name(StateLabel::OA)) == "O_A");
    REQUIRE(state_exists(StateLabel::Exist));
    REQUIRE(state_exists(StateLabel::Move));
    REQUIRE(state_exists(StateLabel::Create));
    REQUIRE_FALSE(state_exists(StateLabel::Destroy));
    REQUIRE_FALSE(state_exists(StateLabel::OA));
    REQUIRE_FALSE(state_exists(StateLabel::OB));
}

TEST_CASE("prediction TSV round-trip and validation") {
    auto dir = temp_dir();
    std::string path = (dir / "pred.tsv").string();
    std::vector<PredictionRecord> rows = {
        oracle::row("p1", 1, "water", Action::Move, "soil", "root"),
        oracle::row("p1", 2, "water", Action::Destroy, "root", "-"),
        oracle::row("p2", 1, "carbon dioxide", Action::Create, "-", "?"),
        oracle::row("p2", 2, "carbon dioxide", Action::None, "?", "?"),
    };
    save_predictions(rows, path);
    auto loaded = load_predictions(path);
    REQUIRE(loaded.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(loaded[i].para_id == rows[i].para_id);
        REQUIRE(loaded[i].step == rows[i].step);
        REQUIRE(loaded[i].entity == rows[i].entity);
        REQUIRE(loaded[i].action == rows[i].action);
        REQUIRE(loaded[i].before == rows[i].before);
        REQUIRE(loaded[i].after == rows[i].after);
    }

    std::string bad = (dir / "bad.tsv").string();
    {
        std::ofstream out(bad);
        out << "p1\t0\twater\tMOVE\tsoil\troot\n"; // step must be >= 1
    }
    REQUIRE_THROWS_AS(load_predictions(bad), Error);
    {
        std::ofstream out(bad);
        out << "p1\t1\twater\tTELEPORT\tsoil\troot\n";
    }
    REQUIRE_THROWS_AS(load_predictions(bad), Error);
    REQUIRE_THROWS_AS(load_predictions((dir / "absent.tsv").string()), Error);
}

TEST_CASE("IO errors carry the IO kind") {
    try {
        load_corpus("/nonexistent/nowhere.jsonl");
        FAIL("expected an error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::IO);
    }
}

TEST_CASE("knowledge triples load lowercased") {
    auto dir = temp_dir();
    std::string path = (dir / "triples.tsv").string();
    {
        std::ofstream out(path);
        out << "Engine\tpart-of\tCar\n";
        out << "leaf\tpart-of\tplant\n";
    }
    auto triples = load_triples(path);
    REQUIRE(triples.size() == 2);
    REQUIRE(triples[0].head == "engine");
    REQUIRE(triples[0].relation == "part-of");
    REQUIRE(triples[0].tail == "car");
}

TEST_CASE("split parsing") {
    REQUIRE(parse_split("train") == Split::Train);
    REQUIRE(parse_split("dev") == Split::Dev);
    REQUIRE(parse_split("test") == Split::Test);
    REQUIRE_THROWS_AS(parse_split("validation"), Error);
}
