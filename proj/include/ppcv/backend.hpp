#pragma once

/**
 * Language-model port: generation, forced-path scoring, top-K alternative
 * extraction and embeddings. Implementations must be safe for concurrent
 * calls and deterministic under greedy decoding for a fixed identity and
 * prompt (the remote backend gets this through the cache layer, the toy
 * backend is a pure function of its inputs).
 *
 * Capability checks happen up front: a pipeline that needs forced-path
 * scoring rejects an incapable backend at configuration time, not mid-run.
 */

#include "ppcv/embedder.hpp"
#include "ppcv/types.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ppcv {

/// Per-position view of the next-token distribution along a forced path.
struct DistributionSlice {
    int position = 0;
    TokenId forced_token_id = 0;   // the trace token a_i, or an alternative
    double forced_prob = 0.0;      // in (0, 1]
    TokenId top1_token_id = 0;
    double top1_prob = 0.0;
    std::vector<std::pair<TokenId, double>> topl;  // prob-descending, may be empty
    bool forced_prob_floored = false;  // forced token absent from top-L; prob is a floor
};

enum class BackendKind { remote, toy };

struct BackendIdentity {
    BackendKind kind = BackendKind::toy;
    std::string model_id;
    std::string tokenizer_fingerprint;

    std::string cache_key_part() const {
        return std::string(kind == BackendKind::toy ? "toy" : "remote") + ":" + model_id + ":" +
               tokenizer_fingerprint;
    }
};

struct Capabilities {
    bool forced_scoring = false;   // echoed prompt logprobs
    bool sampling = false;         // temperature > 0 rollouts
    bool remote_embeddings = false;
};

/// One next-token candidate from top_k_alternatives.
struct TopToken {
    TokenId id = 0;
    std::string text;
    double prob = 0.0;
    bool operator==(const TopToken&) const = default;
};

/// Result of top_k_alternatives; `truncated` flags k beyond what the
/// backend can return (vocabulary or top-logprob limit).
struct TopKResult {
    std::vector<TopToken> tokens;  // prob-descending, ties by ascending id
    bool truncated = false;
};

class LmBackend {
public:
    virtual ~LmBackend() = default;

    virtual BackendIdentity identity() const = 0;
    virtual Capabilities capabilities() const = 0;

    /// Rolls out a trace for (cfg.instruction_prefix, question_text) under
    /// cfg.decoding. Greedy mode is deterministic per (identity, prompt).
    virtual ReasoningTrace generate(const std::string& question_text, const PromptConfig& cfg) = 0;

    /// Continues from a forced prefix; the returned trace begins with
    /// prefix verbatim. An empty prefix degenerates to generate().
    virtual ReasoningTrace generate_continuation(const std::string& question_text,
                                                 std::span<const TokenRecord> prefix,
                                                 const PromptConfig& cfg) = 0;

    /// One slice per forced position, order-aligned with `forced`. When the
    /// forced token is absent from the returned top-L the slice's
    /// forced_prob is floored (min of last returned prob and the backend's
    /// prob floor) and flagged.
    virtual std::vector<DistributionSlice> score_forced(const std::string& question_text,
                                                        std::span<const TokenRecord> forced,
                                                        const PromptConfig& cfg, int top_l) = 0;

    /// The k highest-probability next tokens after `prefix`, probability
    /// descending, deterministic ties broken by ascending token id.
    virtual TopKResult top_k_alternatives(const std::string& question_text,
                                          std::span<const TokenRecord> prefix, int k,
                                          const PromptConfig& cfg) = 0;

    /// Text embedding; deterministic for the lexical embedder.
    virtual embedder::SparseVec embed(const std::string& text) = 0;

    virtual std::vector<TokenRecord> tokenize(const std::string& text) const = 0;
    virtual std::string detokenize(std::span<const TokenRecord> tokens) const = 0;
};

inline std::vector<TokenRecord> trace_prefix(const ReasoningTrace& t, int end_exclusive) {
    return {t.tokens.begin(), t.tokens.begin() + end_exclusive};
}

}  // namespace ppcv
