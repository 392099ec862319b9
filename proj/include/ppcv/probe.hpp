#pragma once

/**
 * Stage 1: locate the critical token.
 *
 * The initial greedy trace is scored token-by-token under each paraphrased
 * question. A position becomes a candidate when the paraphrase-conditioned
 * top-1 token differs from the trace token there; the verifier score at a
 * position is
 *
 *     delta = top1_prob - forced_prob
 *
 * maximized first over paraphrases, then over positions, smallest position
 * winning ties. A floored forced probability can only enlarge delta, so
 * floored entries carry an upper-bound flag all the way into the report.
 *
 * oracle_criticality is the sampled ground-truth check: it truncates the
 * trace so the probed token is the last kept, rolls out stochastic
 * continuations, and reports the fraction that still reach the gold
 * answer — both at the position and for the next several positions.
 */

#include "ppcv/backend.hpp"
#include "ppcv/dataset.hpp"
#include "ppcv/parallel.hpp"
#include "ppcv/paraphrase.hpp"
#include "ppcv/serde.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace ppcv::probe {

struct PerParaphraseEntry {
    int paraphrase_index = 0;  // n in [1, N]
    TokenId top1_token_id = 0;
    double top1_prob = 0.0;
    double expected_prob = 0.0;  // P(token = a_i) under q_n, possibly floored
    double delta = 0.0;
    bool floored = false;
};

struct ProbeCandidate {
    int position = 0;
    TokenId expected_token_id = 0;  // a_i from the original trace
    std::vector<PerParaphraseEntry> per_paraphrase;
    double delta_max = 0.0;
};

struct CriticalToken {
    int position = 0;
    TokenId token_id = 0;  // the trace token a_c
    double delta_max = 0.0;
};

struct ProbeReport {
    std::string question_id;
    std::string trace_fingerprint;
    std::pair<int, int> window{0, 0};  // [start, end) actually probed
    std::vector<ProbeCandidate> candidates;
    std::optional<CriticalToken> critical;
    bool fallback = false;  // no candidate found; stage 2 is skipped
    std::vector<int> failed_paraphrases;
    bool any_floored = false;
};

inline double delta_score(const DistributionSlice& slice) {
    return slice.top1_prob - slice.forced_prob;
}

struct ProbeWindow {
    double start_frac = 0.0;
    double end_frac = 1.0;
};

inline std::pair<int, int> resolve_window(const ProbeWindow& w, int trace_len) {
    if (!(w.start_frac >= 0.0 && w.start_frac < w.end_frac && w.end_frac <= 1.0))
        throw ConfigError("probe window must satisfy 0 <= start < end <= 1");
    int start = static_cast<int>(std::floor(w.start_frac * trace_len));
    int end = static_cast<int>(std::ceil(w.end_frac * trace_len));
    start = std::clamp(start, 0, trace_len);
    end = std::clamp(end, start + 1, trace_len);
    return {start, std::max(start, end)};
}

/// Argmax of delta_max over candidates; ties break to the smallest
/// position. nullopt on empty candidates (the NoCandidates signal).
inline std::optional<CriticalToken> select_critical(const std::vector<ProbeCandidate>& candidates) {
    const ProbeCandidate* best = nullptr;
    for (const auto& c : candidates) {
        if (!best || c.delta_max > best->delta_max ||
            (c.delta_max == best->delta_max && c.position < best->position))
            best = &c;
    }
    if (!best) return std::nullopt;
    return CriticalToken{best->position, best->expected_token_id, best->delta_max};
}

inline ProbeReport probe_positions(const Question& q, const ReasoningTrace& trace,
                                   const paraphrase::ParaphraseSet& paraphrases,
                                   const PromptConfig& cfg, const ProbeWindow& window,
                                   LmBackend& backend, int top_l = 5, int concurrency = 1) {
    if (trace.tokens.empty()) throw DataError("probe_positions: empty trace");
    const auto [wstart, wend] = resolve_window(window, static_cast<int>(trace.tokens.size()));

    const std::size_t n = paraphrases.items.size();
    std::vector<std::optional<std::vector<DistributionSlice>>> scored(n);
    std::vector<int> failed;
    std::mutex failed_mutex;
    parallel_for(n, concurrency, [&](std::size_t i) {
        const auto& p = paraphrases.items[i];
        try {
            scored[i] = backend.score_forced(render_with_stem(q, p.text), trace.tokens, cfg, top_l);
        } catch (const BackendError& e) {
            std::lock_guard<std::mutex> lock(failed_mutex);
            failed.push_back(p.index);
        }
    });
    std::sort(failed.begin(), failed.end());
    if (!failed.empty() && failed.size() == n)
        throw BackendError("probe_positions: scoring failed for every paraphrase");

    std::map<int, ProbeCandidate> by_position;
    for (std::size_t i = 0; i < n; ++i) {
        if (!scored[i]) continue;
        const auto& slices = *scored[i];
        if (slices.size() != trace.tokens.size())
            throw BackendError("probe_positions: slice count does not match trace length");
        for (int pos = wstart; pos < wend; ++pos) {
            const auto& slice = slices[static_cast<std::size_t>(pos)];
            if (slice.top1_token_id == trace.tokens[static_cast<std::size_t>(pos)].token_id)
                continue;  // matches the expected token: not a candidate
            PerParaphraseEntry entry;
            entry.paraphrase_index = paraphrases.items[i].index;
            entry.top1_token_id = slice.top1_token_id;
            entry.top1_prob = slice.top1_prob;
            entry.expected_prob = slice.forced_prob;
            entry.delta = delta_score(slice);
            entry.floored = slice.forced_prob_floored;
            auto& cand = by_position[pos];
            cand.position = pos;
            cand.expected_token_id = trace.tokens[static_cast<std::size_t>(pos)].token_id;
            cand.per_paraphrase.push_back(entry);
        }
    }

    ProbeReport report;
    report.question_id = q.id;
    report.trace_fingerprint = trace_fingerprint(trace);
    report.window = {wstart, wend};
    report.failed_paraphrases = failed;
    for (auto& [pos, cand] : by_position) {
        std::sort(cand.per_paraphrase.begin(), cand.per_paraphrase.end(),
                  [](const auto& a, const auto& b) { return a.paraphrase_index < b.paraphrase_index; });
        cand.delta_max = 0.0;
        for (const auto& e : cand.per_paraphrase) {
            cand.delta_max = std::max(cand.delta_max, e.delta);
            report.any_floored = report.any_floored || e.floored;
        }
        report.candidates.push_back(std::move(cand));
    }
    report.critical = select_critical(report.candidates);
    report.fallback = !report.critical.has_value();
    return report;
}

// ---------------------------------------------------------------------------
// Criticality oracle
// ---------------------------------------------------------------------------

struct CriticalityStats {
    int position = 0;
    int rollouts = 0;
    double correctness_at = 0.0;
    std::vector<double> correctness_following;
};

struct OracleOptions {
    int top_k = 4;
    double temperature = 1.0;
    int following_positions = 6;  // positions after the probed one to re-check
    int max_new_tokens = 256;
    int concurrency = 1;
};

/**
 * Monte-Carlo criticality estimate. The prefix keeps tokens [0, position],
 * i.e. rollouts are initiated from the probed token. Each rollout's
 * sampling stream is keyed by (seed, question id, rollout index), so
 * results are independent of execution order.
 */
inline CriticalityStats oracle_criticality(const Question& q, const ReasoningTrace& trace,
                                           int position, int rollouts, LmBackend& backend,
                                           std::uint64_t seed, const OracleOptions& opts = {}) {
    if (rollouts < 1) throw ConfigError("oracle_criticality: rollouts must be >= 1");
    if (position < 0 || position >= static_cast<int>(trace.tokens.size()))
        throw ConfigError("oracle_criticality: position out of range");
    if (q.gold.normalized.empty())
        throw DataError("oracle_criticality: gold answer required");
    if (!backend.capabilities().sampling)
        throw ConfigError("oracle_criticality: backend does not support sampling");

    const auto correctness_from = [&](int pos_inclusive) {
        const auto prefix = trace_prefix(trace, pos_inclusive + 1);
        std::vector<int> correct(static_cast<std::size_t>(rollouts), 0);
        parallel_for(static_cast<std::size_t>(rollouts), opts.concurrency, [&](std::size_t r) {
            PromptConfig cfg;
            cfg.instruction_prefix = prompts::cot_instruction(q.kind);
            cfg.instruction_id = prompts::cot_instruction_id(q.kind);
            cfg.max_new_tokens = opts.max_new_tokens;
            cfg.decoding.mode = Decoding::Mode::top_k_sampling;
            cfg.decoding.top_k = opts.top_k;
            cfg.decoding.temperature = opts.temperature;
            cfg.decoding.seed = fnv1a64(q.id + ":" + std::to_string(r), seed);
            const auto rollout = backend.generate_continuation(render_question(q), prefix, cfg);
            const auto ans = harness::extract_normalized(rollout.text, q.kind);
            correct[r] = ans && answers_equal(*ans, q.gold.normalized, q.kind) ? 1 : 0;
        });
        int total = 0;
        for (int c : correct) total += c;
        return static_cast<double>(total) / static_cast<double>(rollouts);
    };

    CriticalityStats stats;
    stats.position = position;
    stats.rollouts = rollouts;
    stats.correctness_at = correctness_from(position);
    const int last = static_cast<int>(trace.tokens.size()) - 1;
    for (int p = position + 1; p <= std::min(position + opts.following_positions, last); ++p)
        stats.correctness_following.push_back(correctness_from(p));
    return stats;
}

// ---------------------------------------------------------------------------
// Report serialization (probe subcommand emits JSONL)
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const PerParaphraseEntry& e) {
    j = {{"paraphrase_index", e.paraphrase_index}, {"top1_token_id", e.top1_token_id},
         {"top1_prob", e.top1_prob},               {"expected_prob", e.expected_prob},
         {"delta", e.delta},                       {"floored", e.floored}};
}

inline void to_json(nlohmann::json& j, const ProbeCandidate& c) {
    j = {{"position", c.position},
         {"expected_token_id", c.expected_token_id},
         {"per_paraphrase", c.per_paraphrase},
         {"delta_max", c.delta_max}};
}

inline void to_json(nlohmann::json& j, const ProbeReport& r) {
    j = {{"question_id", r.question_id},
         {"trace_fingerprint", r.trace_fingerprint},
         {"window", {r.window.first, r.window.second}},
         {"candidates", r.candidates},
         {"fallback", r.fallback},
         {"failed_paraphrases", r.failed_paraphrases},
         {"any_floored", r.any_floored}};
    if (r.critical) {
        j["critical"] = {{"position", r.critical->position},
                         {"token_id", r.critical->token_id},
                         {"delta_max", r.critical->delta_max}};
    } else {
        j["critical"] = nullptr;
    }
}

}  // namespace ppcv::probe
