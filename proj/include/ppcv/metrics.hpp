#pragma once

/**
 * Evaluation metrics: pass@k, latency decomposition T1-T4 and report
 * emission. Reports are byte-deterministic for a fixed record set (sorted
 * keys, shortest-round-trip float formatting), so re-emitting a report
 * from the same records never produces a diff.
 */

#include "ppcv/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ppcv::harness {

/// Wall-clock seconds per pipeline component. T1 paraphrase generation,
/// T2 initial trace, T3 forced-path scoring, T4 truncated rollouts.
struct LatencyBreakdown {
    double t1_paraphrase = 0.0;
    double t2_initial = 0.0;
    double t3_forward = 0.0;
    double t4_rollouts = 0.0;
    double wall_total = 0.0;
};

inline void to_json(nlohmann::json& j, const LatencyBreakdown& l) {
    j = {{"t1_paraphrase", l.t1_paraphrase},
         {"t2_initial", l.t2_initial},
         {"t3_forward", l.t3_forward},
         {"t4_rollouts", l.t4_rollouts},
         {"wall_total", l.wall_total}};
}

inline void from_json(const nlohmann::json& j, LatencyBreakdown& l) {
    j.at("t1_paraphrase").get_to(l.t1_paraphrase);
    j.at("t2_initial").get_to(l.t2_initial);
    j.at("t3_forward").get_to(l.t3_forward);
    j.at("t4_rollouts").get_to(l.t4_rollouts);
    j.at("wall_total").get_to(l.wall_total);
}

// ---------------------------------------------------------------------------
// pass@k
// ---------------------------------------------------------------------------

namespace detail {

inline unsigned __int128 binomial_exact(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 c = 1;
    for (int i = 1; i <= k; ++i) {
        c = c * static_cast<unsigned __int128>(n - k + i);
        c /= static_cast<unsigned __int128>(i);  // exact: C(m, i) divisibility
    }
    return c;
}

}  // namespace detail

/**
 * Unbiased estimator 1 - C(n-c, k) / C(n, k) over n samples with c
 * correct, computed with exact integer binomials.
 */
inline double pass_at_k(int n, int c, int k) {
    if (n < 1 || c < 0 || c > n) throw ConfigError("pass_at_k: need 0 <= c <= n, n >= 1");
    if (k < 1 || k > n) throw ConfigError("pass_at_k: need 1 <= k <= n");
    if (n > 170) throw ConfigError("pass_at_k: n too large for the exact integer path");
    if (c == 0) return 0.0;
    if (n - c < k) return 1.0;  // every k-subset contains a correct sample
    const auto miss = detail::binomial_exact(n - c, k);
    const auto total = detail::binomial_exact(n, k);
    return 1.0 - static_cast<double>(static_cast<long double>(miss) /
                                     static_cast<long double>(total));
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Per-question evaluation summary feeding the report.
struct QuestionStats {
    std::string question_id;
    int n_samples = 1;
    int c_correct = 0;
    bool correct = false;  // sample 0's outcome; accuracy is the mean of these
    LatencyBreakdown timings;
    std::uint64_t tokens_generated = 0;
    bool fallback = false;       // ppcv only
    bool any_floored = false;    // ppcv only
};

struct MetricsReport {
    std::string mode;
    int questions = 0;
    double accuracy = 0.0;  // pass@1 under deterministic single-sample runs
    std::map<int, double> pass_k;
    LatencyBreakdown latency_means;
    double throughput_tokens_per_sec = 0.0;
    double fallback_rate = 0.0;
    double floored_rate = 0.0;
    std::vector<QuestionStats> per_question;  // sorted by question_id
};

inline MetricsReport compute_metrics(const std::string& mode, std::vector<QuestionStats> stats,
                                     const std::vector<int>& ks = {1, 4}) {
    std::sort(stats.begin(), stats.end(),
              [](const auto& a, const auto& b) { return a.question_id < b.question_id; });
    MetricsReport r;
    r.mode = mode;
    r.questions = static_cast<int>(stats.size());
    if (stats.empty()) return r;

    double tokens = 0.0, wall = 0.0;
    for (const auto& s : stats) {
        r.accuracy += s.correct ? 1.0 : 0.0;
        r.latency_means.t1_paraphrase += s.timings.t1_paraphrase;
        r.latency_means.t2_initial += s.timings.t2_initial;
        r.latency_means.t3_forward += s.timings.t3_forward;
        r.latency_means.t4_rollouts += s.timings.t4_rollouts;
        r.latency_means.wall_total += s.timings.wall_total;
        tokens += static_cast<double>(s.tokens_generated);
        wall += s.timings.wall_total;
        r.fallback_rate += s.fallback ? 1.0 : 0.0;
        r.floored_rate += s.any_floored ? 1.0 : 0.0;
    }
    const double nq = static_cast<double>(stats.size());
    r.accuracy /= nq;
    r.latency_means.t1_paraphrase /= nq;
    r.latency_means.t2_initial /= nq;
    r.latency_means.t3_forward /= nq;
    r.latency_means.t4_rollouts /= nq;
    r.latency_means.wall_total /= nq;
    r.throughput_tokens_per_sec = wall > 0.0 ? tokens / wall : 0.0;
    r.fallback_rate /= nq;
    r.floored_rate /= nq;

    for (int k : ks) {
        double sum = 0.0;
        int counted = 0;
        for (const auto& s : stats) {
            if (k > s.n_samples) continue;  // undefined for this question
            sum += pass_at_k(s.n_samples, s.c_correct, k);
            ++counted;
        }
        if (counted > 0) r.pass_k[k] = sum / static_cast<double>(counted);
    }
    r.per_question = std::move(stats);
    return r;
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["mode"] = r.mode;
    j["questions"] = r.questions;
    j["accuracy"] = r.accuracy;
    nlohmann::json pk;
    for (const auto& [k, v] : r.pass_k) pk[std::to_string(k)] = v;
    j["pass_at_k"] = pk;
    j["latency_means"] = r.latency_means;
    j["throughput_tokens_per_sec"] = r.throughput_tokens_per_sec;
    j["fallback_rate"] = r.fallback_rate;
    j["floored_delta_rate"] = r.floored_rate;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : r.per_question) {
        per.push_back({{"question_id", s.question_id},
                       {"n", s.n_samples},
                       {"c", s.c_correct},
                       {"correct", s.correct}});
    }
    j["per_question"] = per;
    return j;
}

inline std::string report_table(const MetricsReport& r) {
    std::ostringstream out;
    char line[160];
    out << "mode: " << r.mode << "  questions: " << r.questions << "\n";
    std::snprintf(line, sizeof(line), "accuracy (pass@1): %.4f\n", r.accuracy);
    out << line;
    for (const auto& [k, v] : r.pass_k) {
        std::snprintf(line, sizeof(line), "pass@%d: %.4f\n", k, v);
        out << line;
    }
    std::snprintf(line, sizeof(line),
                  "latency per question [s]  T1 %.4f  T2 %.4f  T3 %.4f  T4 %.4f  wall %.4f\n",
                  r.latency_means.t1_paraphrase, r.latency_means.t2_initial,
                  r.latency_means.t3_forward, r.latency_means.t4_rollouts,
                  r.latency_means.wall_total);
    out << line;
    std::snprintf(line, sizeof(line), "throughput: %.1f output tokens/s\n",
                  r.throughput_tokens_per_sec);
    out << line;
    std::snprintf(line, sizeof(line), "fallback rate: %.4f  floored-delta rate: %.4f\n",
                  r.fallback_rate, r.floored_rate);
    out << line;
    return out.str();
}

/// Writes report.json (stable bytes) plus a readable table next to it.
inline MetricsReport emit_report(const std::string& mode, const std::vector<QuestionStats>& stats,
                                 const std::string& out_path, const std::vector<int>& ks = {1, 4}) {
    if (stats.empty()) throw DataError("emit_report: no records");
    auto report = compute_metrics(mode, stats, ks);
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write report: " + out_path);
    out << report_to_json(report).dump(2) << "\n";
    if (!out) throw DataError("short write on report: " + out_path);
    std::ofstream table(out_path + ".txt");
    table << report_table(report);
    return report;
}

}  // namespace ppcv::harness
