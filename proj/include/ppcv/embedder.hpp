#pragma once

/**
 * Deterministic lexical embedder: term-frequency vector over lowercase
 * unigrams and adjacent bigrams, represented sparsely and compared with
 * cosine similarity. This is the default similarity backend; remote
 * embedding models plug in through the same sparse representation
 * (dense vectors map to indices 0..D-1).
 */

#include "ppcv/common.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ppcv::embedder {

/// Sparse vector: (feature id, weight) pairs sorted by feature id.
using SparseVec = std::vector<std::pair<std::uint64_t, double>>;

inline std::vector<std::string> lexical_terms(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));

    std::vector<std::string> terms = words;
    for (std::size_t i = 0; i + 1 < words.size(); ++i)
        terms.push_back(words[i] + "\x1f" + words[i + 1]);
    return terms;
}

inline SparseVec lexical_embed(const std::string& text) {
    std::map<std::uint64_t, double> counts;
    for (const auto& term : lexical_terms(text)) counts[fnv1a64(term)] += 1.0;
    return SparseVec(counts.begin(), counts.end());
}

inline SparseVec from_dense(const std::vector<double>& v) {
    SparseVec out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] != 0.0) out.emplace_back(i, v[i]);
    return out;
}

inline double cosine(const SparseVec& a, const SparseVec& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [_, w] : a) na += w * w;
    for (const auto& [_, w] : b) nb += w * w;
    if (na == 0.0 || nb == 0.0) return 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].first < b[j].first) {
            ++i;
        } else if (a[i].first > b[j].first) {
            ++j;
        } else {
            dot += a[i].second * b[j].second;
            ++i;
            ++j;
        }
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace ppcv::embedder
