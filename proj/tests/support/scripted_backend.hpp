#pragma once

// Canned-response backend for exercising parser and retry paths without a
// toy world. generate() pops responses in FIFO order; scoring and top-k
// are unsupported by design.

#include "ppcv/backend.hpp"

#include <deque>
#include <sstream>
#include <string>
#include <vector>

namespace ppcv::testsupport {

class ScriptedBackend final : public LmBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> responses)
        : responses_(responses.begin(), responses.end()) {}

    int calls = 0;

    BackendIdentity identity() const override {
        return {BackendKind::toy, "scripted", digest_hex("scripted")};
    }
    Capabilities capabilities() const override { return {false, false, false}; }

    ReasoningTrace generate(const std::string& question_text, const PromptConfig& cfg) override {
        ++calls;
        if (responses_.empty()) throw BackendError("scripted backend exhausted");
        ReasoningTrace t;
        t.question_ref = digest_hex(question_text).substr(0, 12);
        t.prompt_fingerprint = prompt_fingerprint(cfg.instruction_prefix, question_text, cfg.decoding);
        t.text = responses_.front();
        responses_.pop_front();
        t.tokens = tokenize(t.text);
        return t;
    }

    ReasoningTrace generate_continuation(const std::string& question_text,
                                         std::span<const TokenRecord>,
                                         const PromptConfig& cfg) override {
        return generate(question_text, cfg);
    }

    std::vector<DistributionSlice> score_forced(const std::string&, std::span<const TokenRecord>,
                                                const PromptConfig&, int) override {
        throw BackendError("scripted backend: no forced scoring");
    }

    TopKResult top_k_alternatives(const std::string&, std::span<const TokenRecord>, int,
                                  const PromptConfig&) override {
        throw BackendError("scripted backend: no top-k");
    }

    embedder::SparseVec embed(const std::string& text) override {
        return embedder::lexical_embed(text);
    }

    std::vector<TokenRecord> tokenize(const std::string& text) const override {
        std::vector<TokenRecord> out;
        std::istringstream in(text);
        std::string w;
        while (in >> w) out.push_back({static_cast<int>(out.size()), token_id_of(w), w});
        return out;
    }

    std::string detokenize(std::span<const TokenRecord> tokens) const override {
        std::string s;
        for (const auto& t : tokens) {
            if (!s.empty()) s += ' ';
            s += t.token_text;
        }
        return s;
    }

private:
    std::deque<std::string> responses_;
};

}  // namespace ppcv::testsupport
