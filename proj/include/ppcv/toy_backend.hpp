#pragma once

/**
 * Deterministic in-repo toy language model over a ToyWorld.
 *
 * Tokens are whitespace-delimited words. Greedy decoding is a pure
 * function of (world, prompt); stochastic decoding draws from a generator
 * seeded entirely by cfg.decoding.seed, so parallel execution order never
 * changes results (the harness keys that seed by question id and rollout
 * index).
 *
 * Besides plain question prompts the backend answers two meta-request
 * shapes used by the paraphrase module: paraphrase requests (returns the
 * matched template's paraphrase table as a bracketed list, rotated by the
 * active instruction's offset) and instruction-induction requests
 * (returns the world's instruction pool).
 */

#include "ppcv/backend.hpp"
#include "ppcv/prompts.hpp"
#include "ppcv/toy_world.hpp"

#include <algorithm>
#include <chrono>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace ppcv::toy {

struct ToyOptions {
    double prob_floor = 1e-6;
    // Per-call service delay; zero in normal use. Lets scheduling tests
    // observe wall-clock effects of the fan-out without a real server.
    std::chrono::microseconds simulated_latency{0};
};

class ToyBackend final : public LmBackend {
public:
    explicit ToyBackend(ToyWorld world, ToyOptions opts = {})
        : world_(std::move(world)), opts_(opts) {
        validate_world(world_);
        for (std::size_t t = 0; t < world_.templates.size(); ++t)
            for (std::size_t v = 0; v < world_.templates[t].variants.size(); ++v)
                lookup_[world_.templates[t].variants[v]] = {static_cast<int>(t), static_cast<int>(v)};
    }

    const ToyWorld& world() const { return world_; }

    BackendIdentity identity() const override {
        return {BackendKind::toy, "toy-arith-w" + std::to_string(world_.seed),
                digest_hex("ppcv-toy-whitespace-v1")};
    }

    Capabilities capabilities() const override { return {true, true, false}; }

    std::vector<TokenRecord> tokenize(const std::string& text) const override {
        std::vector<TokenRecord> out;
        std::istringstream in(text);
        std::string word;
        while (in >> word) {
            TokenRecord r;
            r.position = static_cast<int>(out.size());
            r.token_id = token_id_of(word);
            r.token_text = word;
            out.push_back(std::move(r));
        }
        return out;
    }

    std::string detokenize(std::span<const TokenRecord> tokens) const override {
        std::string text;
        for (const auto& t : tokens) {
            if (!text.empty()) text += ' ';
            text += t.token_text;
        }
        return text;
    }

    ReasoningTrace generate(const std::string& question_text, const PromptConfig& cfg) override {
        return generate_continuation(question_text, {}, cfg);
    }

    ReasoningTrace generate_continuation(const std::string& question_text,
                                         std::span<const TokenRecord> prefix,
                                         const PromptConfig& cfg) override {
        simulate_latency();
        ReasoningTrace trace;
        trace.question_ref = digest_hex(question_text).substr(0, 12);
        trace.prompt_fingerprint =
            prompt_fingerprint(cfg.instruction_prefix, question_text, cfg.decoding);
        trace.tokens.assign(prefix.begin(), prefix.end());

        if (question_text.find(prompts::kApeProposeMarker) != std::string::npos) {
            emit_text(trace, ape_response(question_text), cfg);
            return trace;
        }
        if (question_text.find(prompts::kParaphraseMarker) != std::string::npos) {
            emit_text(trace, paraphrase_response(question_text, cfg.instruction_prefix), cfg);
            return trace;
        }

        const auto loc = resolve_question(question_text);
        if (!loc) {
            emit_text(trace, "I cannot parse this question . boxed{0}", cfg);
            return trace;
        }
        const Template& tmpl = world_.templates[static_cast<std::size_t>(loc->first)];
        const int variant = loc->second;

        std::mt19937_64 rng(cfg.decoding.seed);
        std::vector<std::string> emitted;
        emitted.reserve(trace.tokens.size());
        for (const auto& t : trace.tokens) emitted.push_back(t.token_text);

        int new_tokens = 0;
        trace.finished = FinishReason::stop_token;
        while (true) {
            if (new_tokens >= cfg.max_new_tokens) {
                trace.finished = FinishReason::length_limit;
                break;
            }
            const Dist d = next_distribution(tmpl, variant, emitted);
            const std::string tok = cfg.decoding.mode == Decoding::Mode::greedy
                                        ? greedy_token(d)
                                        : sample_token(d, cfg.decoding, rng);
            if (tok == kEndToken) break;
            TokenRecord rec;
            rec.position = static_cast<int>(trace.tokens.size());
            rec.token_id = token_id_of(tok);
            rec.token_text = tok;
            trace.tokens.push_back(rec);
            emitted.push_back(tok);
            ++new_tokens;
        }
        trace.text = detokenize(trace.tokens);
        return trace;
    }

    std::vector<DistributionSlice> score_forced(const std::string& question_text,
                                                std::span<const TokenRecord> forced,
                                                const PromptConfig& cfg, int top_l) override {
        simulate_latency();
        if (forced.empty()) throw BackendError("score_forced: empty forced path");
        if (top_l < 1) throw BackendError("score_forced: top_l must be >= 1");
        const auto loc = resolve_question(question_text);
        if (!loc) throw BackendError("toy backend: unknown question for forced scoring");
        const Template& tmpl = world_.templates[static_cast<std::size_t>(loc->first)];
        const int variant = loc->second;
        (void)cfg;

        std::vector<DistributionSlice> slices;
        slices.reserve(forced.size());
        std::vector<std::string> prefix;
        prefix.reserve(forced.size());
        for (std::size_t i = 0; i < forced.size(); ++i) {
            const Dist d = next_distribution(tmpl, variant, prefix);
            slices.push_back(make_slice(static_cast<int>(i), forced[i].token_text, d, top_l));
            prefix.push_back(forced[i].token_text);
        }
        return slices;
    }

    TopKResult top_k_alternatives(const std::string& question_text,
                                  std::span<const TokenRecord> prefix, int k,
                                  const PromptConfig& cfg) override {
        simulate_latency();
        if (k < 1) throw BackendError("top_k_alternatives: k must be >= 1");
        const auto loc = resolve_question(question_text);
        if (!loc) throw BackendError("toy backend: unknown question for top-k");
        const Template& tmpl = world_.templates[static_cast<std::size_t>(loc->first)];
        (void)cfg;
        std::vector<std::string> words;
        words.reserve(prefix.size());
        for (const auto& t : prefix) words.push_back(t.token_text);
        const Dist d = next_distribution(tmpl, loc->second, words);
        auto ranked = ranked_tokens(d);
        TopKResult out;
        out.truncated = static_cast<int>(ranked.size()) < k;
        const std::size_t take = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < take; ++i)
            out.tokens.push_back({token_id_of(ranked[i].first), ranked[i].first, ranked[i].second});
        return out;
    }

    embedder::SparseVec embed(const std::string& text) override {
        return embedder::lexical_embed(text);
    }

private:
    static std::vector<std::pair<std::string, double>> ranked_tokens(const Dist& d) {
        std::vector<std::pair<std::string, double>> v(d.begin(), d.end());
        std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return token_id_of(a.first) < token_id_of(b.first);
        });
        return v;
    }

    DistributionSlice make_slice(int position, const std::string& forced_text, const Dist& d,
                                 int top_l) const {
        DistributionSlice s;
        s.position = position;
        s.forced_token_id = token_id_of(forced_text);
        const auto ranked = ranked_tokens(d);
        s.top1_token_id = token_id_of(ranked.front().first);
        s.top1_prob = ranked.front().second;
        const std::size_t l = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(top_l));
        bool forced_in_topl = false;
        for (std::size_t i = 0; i < l; ++i) {
            s.topl.emplace_back(token_id_of(ranked[i].first), ranked[i].second);
            if (ranked[i].first == forced_text) {
                forced_in_topl = true;
                s.forced_prob = ranked[i].second;
            }
        }
        if (!forced_in_topl) {
            s.forced_prob = std::min(s.topl.back().second, opts_.prob_floor);
            s.forced_prob_floored = true;
        }
        return s;
    }

    std::string sample_token(const Dist& d, const Decoding& dec, std::mt19937_64& rng) const {
        auto ranked = ranked_tokens(d);
        const std::size_t k = dec.top_k > 0
                                  ? std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(dec.top_k))
                                  : ranked.size();
        ranked.resize(k);
        const double temp = dec.temperature;
        if (temp <= 0.0) return ranked.front().first;
        double total = 0.0;
        std::vector<double> weights(ranked.size());
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            weights[i] = std::pow(ranked[i].second, 1.0 / temp);
            total += weights[i];
        }
        std::uniform_real_distribution<double> uni(0.0, total);
        double u = uni(rng);
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            u -= weights[i];
            if (u <= 0.0) return ranked[i].first;
        }
        return ranked.back().first;
    }

    std::optional<std::pair<int, int>> resolve_question(const std::string& text) const {
        if (auto it = lookup_.find(text); it != lookup_.end()) return it->second;
        // Prompt wrappers may embed the question; take the longest known
        // variant contained in the text.
        const std::pair<int, int>* best = nullptr;
        std::size_t best_len = 0;
        for (const auto& [variant_text, loc] : lookup_) {
            if (variant_text.size() > best_len && text.find(variant_text) != std::string::npos) {
                best = &loc;
                best_len = variant_text.size();
            }
        }
        if (best) return *best;
        return std::nullopt;
    }

    std::string paraphrase_response(const std::string& request, const std::string& instruction) const {
        const auto loc = resolve_question(request);
        if (!loc) return "I cannot find the question .";
        const Template& tmpl = world_.templates[static_cast<std::size_t>(loc->first)];
        const int n_variants = static_cast<int>(tmpl.variants.size()) - 1;
        int n = parse_count(request, "create ");
        n = std::clamp(n, 1, n_variants);
        const int offset = instruction_offset(instruction);
        std::string out;
        for (int i = 0; i < n; ++i) {
            const int v = 1 + (offset + i) % n_variants;
            out += "[" + std::to_string(i + 1) + "] " + tmpl.variants[static_cast<std::size_t>(v)] + "\n";
        }
        return out;
    }

    std::string ape_response(const std::string& request) const {
        int m = parse_count(request, "Write ");
        m = std::clamp(m, 1, static_cast<int>(world_.instruction_pool.size()));
        std::string out;
        for (int i = 0; i < m; ++i)
            out += "[" + std::to_string(i + 1) + "] " + world_.instruction_pool[static_cast<std::size_t>(i)].text + "\n";
        return out;
    }

    int instruction_offset(const std::string& instruction) const {
        for (const auto& instr : world_.instruction_pool)
            if (instruction.find(instr.text) != std::string::npos) return instr.offset;
        if (instruction.find(prompts::kParaphraseMath) != std::string::npos) return 0;
        return static_cast<int>(fnv1a64(instruction) % 5);
    }

    static int parse_count(const std::string& text, const std::string& marker) {
        const auto pos = text.find(marker);
        if (pos == std::string::npos) return 3;
        int n = 0;
        std::size_t i = pos + marker.size();
        while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
            n = n * 10 + (text[i] - '0');
            ++i;
        }
        return n > 0 ? n : 3;
    }

    void emit_text(ReasoningTrace& trace, const std::string& text, const PromptConfig& cfg) {
        auto toks = tokenize(text);
        trace.finished = FinishReason::stop_token;
        int new_tokens = 0;
        for (auto& t : toks) {
            if (new_tokens >= cfg.max_new_tokens) {
                trace.finished = FinishReason::length_limit;
                break;
            }
            t.position = static_cast<int>(trace.tokens.size());
            trace.tokens.push_back(std::move(t));
            ++new_tokens;
        }
        trace.text = detokenize(trace.tokens);
    }

    void simulate_latency() const {
        if (opts_.simulated_latency.count() > 0)
            std::this_thread::sleep_for(opts_.simulated_latency);
    }

    ToyWorld world_;
    ToyOptions opts_;
    std::map<std::string, std::pair<int, int>> lookup_;
};

}  // namespace ppcv::toy
