#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "sgr/error.hpp"
#include "sgr/model.hpp"
#include "sgr/strings.hpp"

namespace sgr {

inline constexpr const char* kCheckpointMagic = "SGR-CKPT-1";

// Text checkpoint: magic line, config line, vocab and relation sections,
// then every parameter tensor with values printed as C hex floats, which
// round-trip doubles exactly.
inline void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) io_fail("cannot write checkpoint " + path);
    out << kCheckpointMagic << "\n";
    const ModelConfig& c = model.cfg;
    out << "config d=" << c.d << " layers=" << c.layers << " heads=" << c.heads
        << " ff_mult=" << c.ff_mult << " l_max=" << c.l_max << " head_hidden=" << c.head_hidden
        << "\n";
    out << "vocab " << model.vocab.size() << "\n";
    for (int i = 0; i < model.vocab.size(); ++i) out << model.vocab.token(i) << "\n";
    out << "relations " << model.rels.size() << "\n";
    for (int i = 0; i < model.rels.size(); ++i) out << model.rels.name(i) << "\n";
    out << "tensors " << model.params.count() << "\n";
    char buf[64];
    for (size_t i = 0; i < model.params.count(); ++i) {
        const Tensor& t = model.params.value(i);
        out << "tensor " << model.params.name(i) << " " << t.rows() << " " << t.cols() << "\n";
        for (int r = 0; r < t.rows(); ++r) {
            for (int cidx = 0; cidx < t.cols(); ++cidx) {
                std::snprintf(buf, sizeof(buf), "%a", t.at(r, cidx));
                out << (cidx ? " " : "") << buf;
            }
            out << "\n";
        }
    }
    out << "end\n";
    if (!out) io_fail("error while writing checkpoint " + path);
}

namespace detail {

inline std::string next_line(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) io_fail(path + ": truncated checkpoint");
    return line;
}

} // namespace detail

inline Model load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) io_fail("cannot open checkpoint " + path);
    require(detail::next_line(in, path) == kCheckpointMagic,
            path + ": not a " + std::string(kCheckpointMagic) + " checkpoint");

    std::string line = detail::next_line(in, path);
    require(starts_with(line, "config "), path + ": missing config line");
    ModelConfig cfg;
    {
        std::istringstream is(line.substr(7));
        std::string kv;
        while (is >> kv) {
            auto parts = split(kv, '=');
            require(parts.size() == 2, path + ": bad config entry '" + kv + "'");
            int v = 0;
            try {
                v = std::stoi(parts[1]);
            } catch (...) {
                contract_fail(path + ": bad config value '" + kv + "'");
            }
            if (parts[0] == "d") cfg.d = v;
            else if (parts[0] == "layers") cfg.layers = v;
            else if (parts[0] == "heads") cfg.heads = v;
            else if (parts[0] == "ff_mult") cfg.ff_mult = v;
            else if (parts[0] == "l_max") cfg.l_max = v;
            else if (parts[0] == "head_hidden") cfg.head_hidden = v;
            else contract_fail(path + ": unknown config key '" + parts[0] + "'");
        }
    }
    cfg.validate();

    Model m;
    m.cfg = cfg;

    line = detail::next_line(in, path);
    require(starts_with(line, "vocab "), path + ": missing vocab section");
    int vocab_n = std::stoi(line.substr(6));
    {
        Vocab v;
        for (int i = 0; i < vocab_n; ++i) {
            std::string tok = detail::next_line(in, path);
            if (i < static_cast<int>(Vocab::specials().size()))
                require(tok == Vocab::specials()[i], path + ": special token mismatch at " +
                                                         std::to_string(i));
            else
                v.add(tok);
        }
        m.vocab = std::move(v);
        require(m.vocab.size() == vocab_n, path + ": duplicate tokens in vocab section");
    }

    line = detail::next_line(in, path);
    require(starts_with(line, "relations "), path + ": missing relations section");
    int rel_n = std::stoi(line.substr(10));
    {
        RelationVocab rv;
        for (int i = 0; i < rel_n; ++i) {
            std::string name = detail::next_line(in, path);
            if (i < rv.size()) require(name == rv.name(i),
                                       path + ": built-in relation mismatch at " +
                                           std::to_string(i));
            else rv.add(name);
        }
        m.rels = std::move(rv);
        require(m.rels.size() == rel_n, path + ": duplicate names in relations section");
    }

    line = detail::next_line(in, path);
    require(starts_with(line, "tensors "), path + ": missing tensors section");
    int tensor_n = std::stoi(line.substr(8));
    for (int k = 0; k < tensor_n; ++k) {
        line = detail::next_line(in, path);
        std::istringstream is(line);
        std::string tag, name;
        int rows = 0, cols = 0;
        is >> tag >> name >> rows >> cols;
        require(tag == "tensor" && !name.empty() && rows >= 0 && cols >= 0 && !is.fail(),
                path + ": bad tensor header '" + line + "'");
        Tensor t(rows, cols);
        for (int r = 0; r < rows; ++r) {
            std::string row = detail::next_line(in, path);
            const char* p = row.c_str();
            char* endp = nullptr;
            for (int cidx = 0; cidx < cols; ++cidx) {
                double v = std::strtod(p, &endp);
                require(endp != p, path + ": bad value in tensor " + name);
                t.at(r, cidx) = v;
                p = endp;
            }
        }
        m.params.add(name, std::move(t));
    }
    require(detail::next_line(in, path) == "end", path + ": missing end marker");
    return m;
}

} // namespace sgr
