#pragma once

// Exhaustive continuation oracle over the toy transition tables. This is
// test-only machinery, independent of the probe/verify/runner code paths
// it is used to check: it walks every positive-probability continuation of
// a prefix and accumulates the exact probability mass per final answer.

#include "ppcv/dataset.hpp"
#include "ppcv/toy_world.hpp"

#include <map>
#include <string>
#include <vector>

namespace ppcv::testsupport {

inline void enumerate_rec(const toy::Template& t, int variant, std::vector<std::string>& prefix,
                          double mass, std::map<std::string, double>& answers) {
    const toy::Dist d = toy::next_distribution(t, variant, prefix);
    for (const auto& [tok, p] : d) {
        if (p <= 0.0) continue;
        if (tok == toy::kEndToken) {
            std::string text;
            for (const auto& w : prefix) {
                if (!text.empty()) text += ' ';
                text += w;
            }
            auto ans = harness::extract_normalized(text, AnswerKind::numeric);
            answers[ans ? *ans : std::string("<absent>")] += mass * p;
            continue;
        }
        prefix.push_back(tok);
        enumerate_rec(t, variant, prefix, mass * p, answers);
        prefix.pop_back();
    }
}

/// Exact answer distribution over all continuations of `prefix`.
inline std::map<std::string, double> enumerate_answers(const toy::Template& t, int variant,
                                                       std::vector<std::string> prefix) {
    std::map<std::string, double> answers;
    enumerate_rec(t, variant, prefix, 1.0, answers);
    return answers;
}

/// Exact probability that a continuation of `prefix` ends in the gold answer.
inline double exact_correctness(const toy::Template& t, int variant,
                                std::vector<std::string> prefix) {
    const auto answers = enumerate_answers(t, variant, std::move(prefix));
    double correct = 0.0;
    for (const auto& [ans, mass] : answers)
        if (ans != "<absent>" && answers_equal(ans, t.gold, AnswerKind::numeric)) correct += mass;
    return correct;
}

}  // namespace ppcv::testsupport
