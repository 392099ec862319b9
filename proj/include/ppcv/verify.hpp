#pragma once

/**
 * Stage 2: repair and select.
 *
 * The trace is truncated just before the critical position and each of the
 * top-K alternative tokens (the original trace token pinned at index 0) is
 * appended to form K synthetic prefixes. Every prefix is rolled out
 * greedily under the original question and under each paraphrase, giving a
 * K x (N+1) answer matrix. Row k's consistency score c_k counts the
 * paraphrase answers that match the row's original-question answer; the
 * weighted variant replaces the count with a sum of softmax weights
 * exp(-lambda * s_n) (normalized), so less similar paraphrases count for
 * more. Selection is a cascade: max c_k, then max weighted score among the
 * tied rows, then smallest k — with absent answers skipped and the initial
 * greedy answer as the final fallback.
 */

#include "ppcv/backend.hpp"
#include "ppcv/dataset.hpp"
#include "ppcv/parallel.hpp"
#include "ppcv/paraphrase.hpp"
#include "ppcv/serde.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace ppcv::verify {

struct AlternativeTokenSet {
    int critical_position = 0;
    std::vector<TopToken> tokens;  // tokens[0] is the original trace token
    int original_index = 0;        // always 0 by construction
    bool truncated = false;
};

struct RolloutCell {
    std::string trace_ref;  // trace fingerprint; full text lives in the blob store
    std::optional<std::string> answer;  // normalized extracted answer
};

struct RolloutMatrix {
    std::string question_id;
    int critical_position = 0;
    std::vector<TopToken> alternatives;            // row order, [0] = original token
    std::vector<std::vector<RolloutCell>> cells;   // [k][n], n = 0 is the original question
    std::vector<int> consistency;                  // c_k
    std::vector<double> weights;                   // w_n, n in [1, N]
    std::vector<double> weighted_consistency;      // weighted score per row
};

enum class SelectionRule { plain, weighted_tiebreak, original_fallback, no_candidate_fallback };

inline const char* to_string(SelectionRule r) {
    switch (r) {
        case SelectionRule::plain: return "plain";
        case SelectionRule::weighted_tiebreak: return "weighted_tiebreak";
        case SelectionRule::original_fallback: return "original_fallback";
        case SelectionRule::no_candidate_fallback: return "no_candidate_fallback";
    }
    return "?";
}

struct FinalAnswer {
    std::string question_id;
    std::optional<std::string> answer;  // normalized
    int chosen_k = 0;
    SelectionRule rule = SelectionRule::plain;
    std::vector<int> consistency;
    std::vector<double> weighted_consistency;
};

// ---------------------------------------------------------------------------
// Alternative sampling
// ---------------------------------------------------------------------------

inline AlternativeTokenSet sample_alternatives(const Question& q0, const ReasoningTrace& trace,
                                               int critical_position, int k, LmBackend& backend,
                                               const PromptConfig& cfg) {
    if (critical_position < 0 || critical_position >= static_cast<int>(trace.tokens.size()))
        throw ConfigError("sample_alternatives: critical position out of range");
    if (k < 1) throw ConfigError("sample_alternatives: k must be >= 1");
    const auto prefix = trace_prefix(trace, critical_position);
    auto topk = backend.top_k_alternatives(render_question(q0), prefix, k, cfg);

    const auto& original = trace.tokens[static_cast<std::size_t>(critical_position)];
    AlternativeTokenSet out;
    out.critical_position = critical_position;
    out.truncated = topk.truncated;

    // dedupe, then pin the original token at index 0
    std::vector<TopToken> rest;
    std::optional<TopToken> original_entry;
    for (auto& t : topk.tokens) {
        if (std::any_of(rest.begin(), rest.end(), [&](const auto& r) { return r.id == t.id; }))
            continue;
        if (t.id == original.token_id) {
            if (!original_entry) original_entry = t;
            continue;
        }
        rest.push_back(std::move(t));
    }
    if (!original_entry) {
        // original token fell outside top-K; force it in and keep at most k
        original_entry = TopToken{original.token_id, original.token_text, 0.0};
        if (static_cast<int>(rest.size()) >= k) rest.resize(static_cast<std::size_t>(k - 1));
    }
    out.tokens.push_back(*original_entry);
    for (auto& t : rest) out.tokens.push_back(std::move(t));
    if (static_cast<int>(out.tokens.size()) > k) out.tokens.resize(static_cast<std::size_t>(k));
    return out;
}

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

inline std::vector<int> consistency_scores(const std::vector<std::vector<RolloutCell>>& cells,
                                           AnswerKind kind) {
    std::vector<int> out;
    out.reserve(cells.size());
    for (const auto& row : cells) {
        int c = 0;
        if (!row.empty() && row[0].answer) {
            for (std::size_t n = 1; n < row.size(); ++n)
                if (row[n].answer && answers_equal(*row[0].answer, *row[n].answer, kind)) ++c;
        }
        out.push_back(c);
    }
    return out;
}

inline std::vector<double> similarity_weights(const std::vector<double>& sims, double lambda) {
    if (sims.empty()) return {};
    if (lambda < 0.0) throw ConfigError("similarity_weights: lambda must be >= 0");
    std::vector<double> w(sims.size());
    double total = 0.0;
    for (std::size_t i = 0; i < sims.size(); ++i) {
        w[i] = std::exp(-lambda * sims[i]);
        total += w[i];
    }
    for (auto& v : w) v /= total;
    return w;
}

inline std::vector<double> weighted_consistency(const std::vector<std::vector<RolloutCell>>& cells,
                                                const std::vector<double>& weights,
                                                AnswerKind kind) {
    std::vector<double> out;
    out.reserve(cells.size());
    for (const auto& row : cells) {
        double c = 0.0;
        if (!row.empty() && row[0].answer) {
            for (std::size_t n = 1; n < row.size(); ++n)
                if (row[n].answer && answers_equal(*row[0].answer, *row[n].answer, kind))
                    c += weights.at(n - 1);
        }
        out.push_back(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rollout matrix
// ---------------------------------------------------------------------------

using TraceSink = std::function<void(const ReasoningTrace&)>;

inline RolloutMatrix rollout_matrix(const Question& q0,
                                    const paraphrase::ParaphraseSet& paraphrases,
                                    const ReasoningTrace& trace, const AlternativeTokenSet& alts,
                                    const PromptConfig& cfg, LmBackend& backend, double lambda,
                                    int concurrency = 1, const TraceSink& sink = nullptr) {
    if (cfg.decoding.mode != Decoding::Mode::greedy)
        throw ConfigError("rollout_matrix: stage 2 rollouts are greedy");
    const std::size_t rows = alts.tokens.size();
    const std::size_t cols = paraphrases.items.size() + 1;

    RolloutMatrix m;
    m.question_id = q0.id;
    m.critical_position = alts.critical_position;
    m.alternatives = alts.tokens;
    m.cells.assign(rows, std::vector<RolloutCell>(cols));

    std::atomic<std::size_t> failures{0};
    std::mutex sink_mutex;
    parallel_for(rows * cols, concurrency, [&](std::size_t idx) {
        const std::size_t k = idx / cols;
        const std::size_t n = idx % cols;
        auto prefix = trace_prefix(trace, alts.critical_position);
        TokenRecord alt;
        alt.position = alts.critical_position;
        alt.token_id = alts.tokens[k].id;
        alt.token_text = alts.tokens[k].text;
        prefix.push_back(std::move(alt));
        const std::string question_text =
            n == 0 ? render_question(q0)
                   : render_with_stem(q0, paraphrases.items[n - 1].text);
        try {
            const auto rollout = backend.generate_continuation(question_text, prefix, cfg);
            RolloutCell cell;
            cell.trace_ref = trace_fingerprint(rollout);
            cell.answer = harness::extract_normalized(rollout.text, q0.kind);
            if (sink) {
                std::lock_guard<std::mutex> lock(sink_mutex);
                sink(rollout);
            }
            m.cells[k][n] = std::move(cell);
        } catch (const BackendError&) {
            failures.fetch_add(1);  // cell stays answer-absent
        }
    });
    if (failures.load() * 2 > rows * cols)
        throw BackendError("rollout_matrix: more than half of the rollouts failed");

    std::vector<double> sims;
    sims.reserve(paraphrases.items.size());
    for (const auto& p : paraphrases.items) sims.push_back(p.similarity);
    m.consistency = consistency_scores(m.cells, q0.kind);
    m.weights = similarity_weights(sims, lambda);
    m.weighted_consistency = weighted_consistency(m.cells, m.weights, q0.kind);
    return m;
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

/**
 * Cascade: argmax c_k; ties rescored by the weighted score (when enabled);
 * remaining ties take the smallest k, preferring the original trajectory.
 * Rows whose original-question answer is absent are skipped in rank order;
 * when every row is absent the initial greedy answer is returned.
 */
inline FinalAnswer select_answer(const RolloutMatrix& m,
                                 const std::optional<std::string>& initial_answer,
                                 bool use_weighted_tiebreak = true) {
    FinalAnswer fa;
    fa.question_id = m.question_id;
    fa.consistency = m.consistency;
    fa.weighted_consistency = m.weighted_consistency;

    std::vector<std::size_t> order(m.cells.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (m.consistency[a] != m.consistency[b]) return m.consistency[a] > m.consistency[b];
        if (use_weighted_tiebreak && m.weighted_consistency[a] != m.weighted_consistency[b])
            return m.weighted_consistency[a] > m.weighted_consistency[b];
        return a < b;
    });

    for (std::size_t k : order) {
        if (!m.cells[k][0].answer) continue;
        fa.answer = m.cells[k][0].answer;
        fa.chosen_k = static_cast<int>(k);
        bool tied = false, weighted_resolved = false;
        for (std::size_t other = 0; other < m.cells.size(); ++other) {
            if (other == k || m.consistency[other] != m.consistency[k]) continue;
            tied = true;
            if (m.weighted_consistency[other] != m.weighted_consistency[k]) weighted_resolved = true;
        }
        fa.rule = (tied && weighted_resolved && use_weighted_tiebreak)
                      ? SelectionRule::weighted_tiebreak
                      : SelectionRule::plain;
        return fa;
    }
    fa.answer = initial_answer;
    fa.chosen_k = 0;
    fa.rule = SelectionRule::original_fallback;
    return fa;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const RolloutCell& c) {
    j = {{"trace_ref", c.trace_ref}};
    j["answer"] = c.answer ? nlohmann::json(*c.answer) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, RolloutCell& c) {
    j.at("trace_ref").get_to(c.trace_ref);
    if (!j.at("answer").is_null()) c.answer = j.at("answer").get<std::string>();
}

inline void to_json(nlohmann::json& j, const RolloutMatrix& m) {
    j = {{"question_id", m.question_id},
         {"critical_position", m.critical_position},
         {"alternatives", m.alternatives},
         {"cells", m.cells},
         {"consistency", m.consistency},
         {"weights", m.weights},
         {"weighted_consistency", m.weighted_consistency}};
}

inline void from_json(const nlohmann::json& j, RolloutMatrix& m) {
    j.at("question_id").get_to(m.question_id);
    j.at("critical_position").get_to(m.critical_position);
    j.at("alternatives").get_to(m.alternatives);
    j.at("cells").get_to(m.cells);
    j.at("consistency").get_to(m.consistency);
    j.at("weights").get_to(m.weights);
    j.at("weighted_consistency").get_to(m.weighted_consistency);
}

inline void to_json(nlohmann::json& j, const FinalAnswer& f) {
    j = {{"question_id", f.question_id},
         {"chosen_k", f.chosen_k},
         {"selection_rule", to_string(f.rule)},
         {"consistency", f.consistency},
         {"weighted_consistency", f.weighted_consistency}};
    j["answer"] = f.answer ? nlohmann::json(*f.answer) : nlohmann::json(nullptr);
}

}  // namespace ppcv::verify
