#pragma once

/**
 * OpenAI-compatible completions client.
 *
 * Generation      POST /v1/completions  max_tokens=N, logprobs=1
 * Forced scoring  POST /v1/completions  max_tokens=0, echo=true, logprobs=L
 *                 (vLLM-style prompt-logprobs servers qualify)
 * Top-K           POST /v1/completions  max_tokens=1, logprobs=K
 * Embeddings      POST /v1/embeddings   (opt-in; requires embed_model)
 *
 * Temperature 0 encodes greedy decoding. Token ids are content hashes of
 * the server's token strings, consistent with the rest of the pipeline;
 * positions are server-token positions. The client keeps no connection
 * state, so concurrent calls are safe; determinism for remote runs is
 * provided by the cache layer, not the server.
 */

#include "ppcv/backend.hpp"
#include "ppcv/common.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace ppcv::remote {

struct RemoteConfig {
    std::string endpoint;     // e.g. "http://127.0.0.1:8000"
    std::string api_key;      // optional bearer token
    std::string model;
    std::string embed_model;  // empty = embeddings capability off
    double prob_floor = 1e-6;
    int max_retries = 3;
    int timeout_seconds = 120;

    static RemoteConfig from_env() {
        RemoteConfig c;
        if (const char* v = std::getenv("PPCV_ENDPOINT")) c.endpoint = v;
        if (const char* v = std::getenv("PPCV_API_KEY")) c.api_key = v;
        if (const char* v = std::getenv("PPCV_MODEL")) c.model = v;
        if (const char* v = std::getenv("PPCV_EMBED_MODEL")) c.embed_model = v;
        return c;
    }
};

class RemoteBackend final : public LmBackend {
public:
    explicit RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.endpoint.empty()) throw ConfigError("remote backend: endpoint not configured");
        if (cfg_.model.empty()) throw ConfigError("remote backend: model not configured");
    }

    BackendIdentity identity() const override {
        return {BackendKind::remote, cfg_.model, digest_hex("openai-completions:" + cfg_.model)};
    }

    Capabilities capabilities() const override { return {true, true, !cfg_.embed_model.empty()}; }

    ReasoningTrace generate(const std::string& question_text, const PromptConfig& cfg) override {
        return generate_continuation(question_text, {}, cfg);
    }

    ReasoningTrace generate_continuation(const std::string& question_text,
                                         std::span<const TokenRecord> prefix,
                                         const PromptConfig& cfg) override {
        nlohmann::json body = completion_body(question_text, cfg);
        body["prompt"] = base_prompt(question_text, cfg) + concat(prefix);
        body["max_tokens"] = cfg.max_new_tokens;
        body["logprobs"] = 1;  // token strings ride on the logprobs arrays
        body["echo"] = false;

        const auto choice = post_completion(body);
        ReasoningTrace trace;
        trace.question_ref = digest_hex(question_text).substr(0, 12);
        trace.prompt_fingerprint =
            prompt_fingerprint(cfg.instruction_prefix, question_text, cfg.decoding);
        trace.tokens.assign(prefix.begin(), prefix.end());
        for (const auto& tok : choice.at("logprobs").at("tokens")) {
            TokenRecord r;
            r.position = static_cast<int>(trace.tokens.size());
            r.token_text = tok.get<std::string>();
            r.token_id = token_id_of(r.token_text);
            trace.tokens.push_back(std::move(r));
        }
        trace.text = concat(trace.tokens);
        trace.finished = choice.value("finish_reason", "stop") == "length"
                             ? FinishReason::length_limit
                             : FinishReason::stop_token;
        return trace;
    }

    std::vector<DistributionSlice> score_forced(const std::string& question_text,
                                                std::span<const TokenRecord> forced,
                                                const PromptConfig& cfg, int top_l) override {
        if (forced.empty()) throw BackendError("score_forced: empty forced path");
        nlohmann::json body = completion_body(question_text, cfg);
        body["prompt"] = base_prompt(question_text, cfg) + concat(forced);
        body["max_tokens"] = 0;
        body["echo"] = true;
        body["logprobs"] = top_l;

        const auto choice = post_completion(body);
        const auto& lp = choice.at("logprobs");
        const auto& tokens = lp.at("tokens");
        const auto& token_logprobs = lp.at("token_logprobs");
        const auto& top_logprobs = lp.at("top_logprobs");
        if (tokens.size() < forced.size())
            throw BackendError("score_forced: server returned fewer prompt tokens than forced path");
        const std::size_t offset = tokens.size() - forced.size();

        std::vector<DistributionSlice> slices;
        slices.reserve(forced.size());
        for (std::size_t i = 0; i < forced.size(); ++i) {
            const auto& server_token = tokens[offset + i];
            if (server_token.get<std::string>() != forced[i].token_text)
                throw BackendError("score_forced: tokenization misaligned at forced position " +
                                   std::to_string(i) + " (server '" +
                                   server_token.get<std::string>() + "' vs '" +
                                   forced[i].token_text + "')");
            slices.push_back(make_slice(static_cast<int>(i), forced[i].token_text,
                                        token_logprobs.at(offset + i),
                                        top_logprobs.at(offset + i)));
        }
        return slices;
    }

    TopKResult top_k_alternatives(const std::string& question_text,
                                  std::span<const TokenRecord> prefix, int k,
                                  const PromptConfig& cfg) override {
        if (k < 1) throw BackendError("top_k_alternatives: k must be >= 1");
        nlohmann::json body = completion_body(question_text, cfg);
        body["prompt"] = base_prompt(question_text, cfg) + concat(prefix);
        body["max_tokens"] = 1;
        body["echo"] = false;
        body["logprobs"] = k;

        const auto choice = post_completion(body);
        const auto& tops = choice.at("logprobs").at("top_logprobs");
        TopKResult out;
        if (tops.empty() || tops.at(0).is_null()) {
            out.truncated = true;
            return out;
        }
        for (const auto& [text, lp] : tops.at(0).items())
            out.tokens.push_back({token_id_of(text), text, std::exp(lp.get<double>())});
        std::sort(out.tokens.begin(), out.tokens.end(), [](const auto& a, const auto& b) {
            if (a.prob != b.prob) return a.prob > b.prob;
            return a.id < b.id;
        });
        out.truncated = static_cast<int>(out.tokens.size()) < k;
        return out;
    }

    embedder::SparseVec embed(const std::string& text) override {
        if (cfg_.embed_model.empty())
            throw BackendError("remote backend: embeddings not configured");
        nlohmann::json body;
        body["model"] = cfg_.embed_model;
        body["input"] = nlohmann::json::array({text});
        const auto resp = post_json("/v1/embeddings", body);
        const auto vec = resp.at("data").at(0).at("embedding").get<std::vector<double>>();
        return embedder::from_dense(vec);
    }

    // Remote tokenization lives on the server; traces carry the server's
    // token strings, whose concatenation reproduces the text.
    std::vector<TokenRecord> tokenize(const std::string&) const override {
        throw BackendError("remote backend has no local tokenizer");
    }

    std::string detokenize(std::span<const TokenRecord> tokens) const override {
        return concat(tokens);
    }

private:
    static std::string concat(std::span<const TokenRecord> tokens) {
        std::string s;
        for (const auto& t : tokens) s += t.token_text;
        return s;
    }

    static std::string base_prompt(const std::string& question_text, const PromptConfig& cfg) {
        std::string p = cfg.instruction_prefix;
        if (!p.empty()) p += "\n\n";
        p += question_text;
        p += "\n\n";
        return p;
    }

    nlohmann::json completion_body(const std::string&, const PromptConfig& cfg) const {
        nlohmann::json body;
        body["model"] = cfg_.model;
        const bool greedy = cfg.decoding.mode == Decoding::Mode::greedy;
        body["temperature"] = greedy ? 0.0 : cfg.decoding.temperature;
        body["seed"] = cfg.decoding.seed;
        if (!greedy && cfg.decoding.top_k > 0) body["top_k"] = cfg.decoding.top_k;
        if (!cfg.stop_sequences.empty()) body["stop"] = cfg.stop_sequences;
        return body;
    }

    DistributionSlice make_slice(int position, const std::string& forced_text,
                                 const nlohmann::json& token_logprob,
                                 const nlohmann::json& tops) const {
        DistributionSlice s;
        s.position = position;
        s.forced_token_id = token_id_of(forced_text);
        double forced_in_topl = -1.0;
        if (!tops.is_null()) {
            for (const auto& [text, lp] : tops.items()) {
                const double p = std::exp(lp.get<double>());
                s.topl.emplace_back(token_id_of(text), p);
                if (text == forced_text) forced_in_topl = p;
            }
            std::sort(s.topl.begin(), s.topl.end(), [](const auto& a, const auto& b) {
                if (a.second != b.second) return a.second > b.second;
                return a.first < b.first;
            });
        }
        if (!token_logprob.is_null()) {
            s.forced_prob = std::exp(token_logprob.get<double>());
        } else if (forced_in_topl >= 0.0) {
            s.forced_prob = forced_in_topl;
        } else if (!s.topl.empty()) {
            s.forced_prob = std::min(s.topl.back().second, cfg_.prob_floor);
            s.forced_prob_floored = true;
        } else {
            s.forced_prob = cfg_.prob_floor;
            s.forced_prob_floored = true;
        }
        // top-1 over everything the server exposed at this position
        if (!s.topl.empty() && (s.forced_prob_floored || s.topl.front().second >= s.forced_prob)) {
            s.top1_token_id = s.topl.front().first;
            s.top1_prob = s.topl.front().second;
        } else {
            s.top1_token_id = s.forced_token_id;
            s.top1_prob = s.forced_prob;
        }
        return s;
    }

    nlohmann::json post_completion(const nlohmann::json& body) {
        const auto resp = post_json("/v1/completions", body);
        if (!resp.contains("choices") || resp.at("choices").empty())
            throw BackendError("completion response carries no choices");
        return resp.at("choices").at(0);
    }

    nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(100 * attempt));
            httplib::Client client(cfg_.endpoint);
            client.set_read_timeout(cfg_.timeout_seconds, 0);
            client.set_write_timeout(cfg_.timeout_seconds, 0);
            httplib::Headers headers;
            if (!cfg_.api_key.empty())
                headers.insert({"Authorization", "Bearer " + cfg_.api_key});
            const auto res = client.Post(path, headers, body.dump(), "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 200) {
                try {
                    return nlohmann::json::parse(res->body);
                } catch (const nlohmann::json::exception& e) {
                    throw BackendError(std::string("malformed server response: ") + e.what());
                }
            }
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
            if (res->status < 500 && res->status != 429)
                throw BackendError(last_error);  // not retryable
        }
        throw BackendError(last_error, /*retryable=*/true);
    }

    RemoteConfig cfg_;
};

}  // namespace ppcv::remote
