#pragma once

#include <array>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sgr/corpus.hpp"
#include "sgr/error.hpp"
#include "sgr/scene_graph.hpp"
#include "sgr/strings.hpp"

namespace sgr {

// Token vocabulary. Special tokens occupy fixed leading slots; corpus tokens
// follow in first-seen order. Unknown tokens map to [UNK].
class Vocab {
public:
    static constexpr int kCls = 0;
    static constexpr int kSep = 1;
    static constexpr int kInit = 2;
    static constexpr int kUnk = 3;
    static constexpr int kPad = 4;
    static constexpr int kGlobal = 5;
    static constexpr int kUnkLoc = 6;

    static const std::array<const char*, 7>& specials() {
        static const std::array<const char*, 7> s = {"[CLS]", "[SEP]", "[INIT]", "[UNK]",
                                                     "[PAD]", "[GLOBAL]", "[UNKLOC]"};
        return s;
    }

    Vocab() {
        for (const char* t : specials()) add(t);
    }

    int add(const std::string& token) {
        auto it = index_.find(token);
        if (it != index_.end()) return it->second;
        int id = static_cast<int>(tokens_.size());
        index_[token] = id;
        tokens_.push_back(token);
        return id;
    }

    int id(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return index_.count(token) != 0; }
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const {
        require(id >= 0 && id < size(), "Vocab: token id out of range");
        return tokens_[id];
    }

    std::vector<int> ids(const std::vector<std::string>& tokens) const {
        std::vector<int> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) out.push_back(id(t));
        return out;
    }

    // Every token observable in the corpus: prompts, sentences, entity
    // surfaces, candidate surfaces and knowledge surfaces.
    static Vocab build(const std::vector<ProcedureInstance>& corpus) {
        Vocab v;
        auto add_text = [&](const std::string& text) {
            for (const std::string& t : tokenize(text)) v.add(t);
        };
        for (const auto& inst : corpus) {
            add_text(inst.prompt);
            for (const auto& s : inst.sentences) add_text(s);
            for (const auto& e : inst.entities) add_text(e);
            for (const auto& c : inst.location_candidates) add_text(c);
            for (const auto& t : inst.knowledge_triples) {
                add_text(t.head);
                add_text(t.tail);
            }
        }
        return v;
    }

    // One token per line.
    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) io_fail("cannot write vocab file " + path);
        for (const auto& t : tokens_) out << t << "\n";
    }

    static Vocab load(const std::string& path) {
        std::ifstream in(path);
        if (!in) io_fail("cannot open vocab file " + path);
        Vocab v;
        v.tokens_.clear();
        v.index_.clear();
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            require(!v.index_.count(line), path + ": duplicate token '" + line + "'");
            v.index_[line] = static_cast<int>(v.tokens_.size());
            v.tokens_.push_back(line);
        }
        for (size_t i = 0; i < specials().size(); ++i)
            require(v.size() > static_cast<int>(i) && v.tokens_[i] == specials()[i],
                    path + ": special tokens missing or out of order");
        return v;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

// Model-level relation vocabulary. Graph-local relation names are resolved
// against this table when scenes are encoded; relations never seen during
// training fall back to the [UNKREL] row.
class RelationVocab {
public:
    static constexpr int kLocateIn = 0;
    static constexpr int kEntEnt = 1;
    static constexpr int kLocLoc = 2;
    static constexpr int kGlobalLink = 3;
    static constexpr int kSelfLoop = 4;
    static constexpr int kUnkRel = 5;

    RelationVocab() {
        for (const char* n : {"LocateIn", "EntEnt", "LocLoc", "[GLOBAL-LINK]", "[SELF]", "[UNKREL]"})
            add(n);
    }

    int add(const std::string& name) {
        auto it = index_.find(name);
        if (it != index_.end()) return it->second;
        int id = static_cast<int>(names_.size());
        index_[name] = id;
        names_.push_back(name);
        return id;
    }

    int id(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? kUnkRel : it->second;
    }

    int size() const { return static_cast<int>(names_.size()); }
    const std::string& name(int id) const {
        require(id >= 0 && id < size(), "RelationVocab: id out of range");
        return names_[id];
    }

    // Collects knowledge relations from every training graph's local
    // vocabulary, in corpus order.
    static RelationVocab build(const std::vector<CompleteGraph>& graphs) {
        RelationVocab rv;
        for (const auto& g : graphs)
            for (const auto& name : g.relation_vocab) rv.add(name);
        return rv;
    }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
};

} // namespace sgr
