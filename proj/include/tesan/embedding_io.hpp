// word2vec-style text embeddings: "<count> <dim>" header, then one
// "<code> <v1> ... <vd>" line per concept. Values are written with
// shortest-round-trip precision.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tesan/common.hpp"
#include "tesan/journeys.hpp"
#include "tesan/params.hpp"

namespace tesan {

template <typename T>
void save_embeddings(const Mat<T>& table, const Vocabulary& vocab, const std::string& path) {
    if (vocab.size() == 0) throw Error("empty vocabulary");
    if (table.cols() != static_cast<Eigen::Index>(vocab.size()))
        throw Error("embedding table has " + std::to_string(table.cols()) +
                    " columns for a vocabulary of " + std::to_string(vocab.size()));
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot write '" + path + "'");
    os << vocab.size() << ' ' << table.rows() << '\n';
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        os << vocab.codes[i];
        for (Eigen::Index k = 0; k < table.rows(); ++k)
            os << ' ' << format_value(table(k, static_cast<Eigen::Index>(i)));
        os << '\n';
    }
    if (!os) throw Error("failed writing '" + path + "'");
}

/// Embeddings as read back from disk; values[:, i] belongs to codes[i].
struct Embeddings {
    std::vector<std::string> codes;
    Eigen::MatrixXd values;  // d x n
    std::map<std::string, int> code_to_col;

    int dim() const { return static_cast<int>(values.rows()); }
    std::size_t size() const { return codes.size(); }
};

inline Embeddings load_embeddings(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read '" + path + "'");
    std::string line;
    if (!std::getline(is, line)) throw Error("'" + path + "' is empty");
    std::istringstream header(line);
    std::size_t count = 0, dim = 0;
    if (!(header >> count >> dim) || count == 0 || dim == 0)
        throw Error("bad embedding header '" + line + "' (expected '<count> <dim>')");

    Embeddings emb;
    emb.codes.reserve(count);
    emb.values.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(count));
    std::size_t row = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (row == count)
            throw Error("expected " + std::to_string(count) + " rows, found more");
        std::istringstream ls(line);
        std::string code;
        if (!(ls >> code)) throw Error("malformed embedding line " + std::to_string(row + 2));
        for (std::size_t k = 0; k < dim; ++k) {
            double v = 0;
            if (!(ls >> v))
                throw Error("embedding line " + std::to_string(row + 2) + " has fewer than " +
                            std::to_string(dim) + " values");
            emb.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(row)) = v;
        }
        double extra;
        if (ls >> extra)
            throw Error("embedding line " + std::to_string(row + 2) + " has more than " +
                        std::to_string(dim) + " values");
        if (!emb.code_to_col.emplace(code, static_cast<int>(row)).second)
            throw Error("duplicate code '" + code + "' in '" + path + "'");
        emb.codes.push_back(code);
        ++row;
    }
    if (row != count)
        throw Error("expected " + std::to_string(count) + " rows, found " + std::to_string(row));
    return emb;
}

}  // namespace tesan
