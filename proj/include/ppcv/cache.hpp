#pragma once

/**
 * Content-addressed response cache.
 *
 * Keys digest the backend identity, the request kind and the canonicalized
 * request payload (nlohmann objects serialize with sorted keys, so two
 * logically identical requests always collide). Entries live under a
 * two-level hex shard of the digest:
 *
 *   <dir>/ab/cd/abcd...ef.json
 *   { "key": {...}, "created_at": <unix seconds>,
 *     "payload_hash": "<hex>", "payload": {...} }
 *
 * Publishes are atomic (write-temp-then-rename). Entries are immutable: a
 * put of a differing payload under an existing key is an integrity error,
 * which also backstops digest collisions. Corrupt entries are quarantined
 * (renamed aside) and treated as absent.
 *
 * The cache is the determinism boundary for remote backends: replaying a
 * run against a warm cache yields identical records regardless of server
 * drift. CachingBackend is a cheap per-scope wrapper so hit counters can
 * be attributed per question even when rollouts fan out across threads.
 */

#include "ppcv/backend.hpp"
#include "ppcv/serde.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <string>

namespace ppcv::cache {

struct CacheKey {
    std::string digest;         // 32 hex chars
    nlohmann::json key_fields;  // stored in the entry header for inspection
};

inline CacheKey make_key(const BackendIdentity& identity, const std::string& kind,
                         const nlohmann::json& request) {
    nlohmann::json fields;
    fields["backend"] = identity.cache_key_part();
    fields["kind"] = kind;
    fields["request"] = request;
    return CacheKey{digest_hex(fields.dump()), std::move(fields)};
}

class DiskCache {
public:
    explicit DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::optional<nlohmann::json> get(const CacheKey& key) const {
        const auto path = path_for(key.digest);
        std::ifstream in(path);
        if (!in) return std::nullopt;
        nlohmann::json entry;
        try {
            in >> entry;
            nlohmann::json payload = entry.at("payload");
            if (entry.at("payload_hash").get<std::string>() != digest_hex(payload.dump()))
                throw DataError("payload hash mismatch");
            return std::make_optional(std::move(payload));
        } catch (const std::exception& e) {
            quarantine(path, e.what());
            return std::nullopt;
        }
    }

    void put(const CacheKey& key, const nlohmann::json& payload) const {
        const auto path = path_for(key.digest);
        const std::string payload_hash = digest_hex(payload.dump());
        if (std::filesystem::exists(path)) {
            if (auto existing = get(key)) {
                if (digest_hex(existing->dump()) != payload_hash)
                    throw CacheError("cache immutability violation for key " + key.digest);
                return;  // idempotent duplicate
            }
            // fell through: entry was corrupt and has been quarantined
        }
        std::filesystem::create_directories(path.parent_path());
        nlohmann::json entry;
        entry["key"] = key.key_fields;
        entry["created_at"] = static_cast<std::int64_t>(
            std::chrono::duration_cast<std::chrono::seconds>(
                std::chrono::system_clock::now().time_since_epoch())
                .count());
        entry["payload_hash"] = payload_hash;
        entry["payload"] = payload;

        const auto tmp = path.parent_path() / (path.filename().string() + ".tmp." + temp_suffix());
        {
            std::ofstream out(tmp);
            if (!out) throw CacheError("cannot write cache entry: " + tmp.string());
            out << entry.dump();
            out.flush();
            if (!out) throw CacheError("short write on cache entry: " + tmp.string());
        }
        std::filesystem::rename(tmp, path);  // atomic publish
    }

private:
    static std::string temp_suffix() {
        static std::atomic<std::uint64_t> counter{0};
        thread_local std::mt19937_64 rng(std::random_device{}());
        return to_hex(rng()) + "." + std::to_string(counter.fetch_add(1));
    }

    std::filesystem::path path_for(const std::string& digest) const {
        return dir_ / digest.substr(0, 2) / digest.substr(2, 2) / (digest + ".json");
    }

    static void quarantine(const std::filesystem::path& path, const std::string& why) {
        std::error_code ec;
        std::filesystem::rename(path, path.string() + ".corrupt", ec);
        std::cerr << "warning: quarantined corrupt cache entry " << path << " (" << why << ")\n";
    }

    std::filesystem::path dir_;
};

/**
 * LmBackend decorator adding read-through caching and call metering.
 * Instances are cheap; the runner creates one per question over a shared
 * DiskCache so hits and generated-token counts attribute correctly even
 * when the verify fan-out spreads calls across worker threads.
 */
class CachingBackend final : public LmBackend {
public:
    CachingBackend(LmBackend& inner, std::shared_ptr<const DiskCache> disk)
        : inner_(inner), disk_(std::move(disk)) {}

    std::uint64_t cache_hits() const { return hits_.load(); }
    std::uint64_t tokens_generated() const { return tokens_out_.load(); }

    BackendIdentity identity() const override { return inner_.identity(); }
    Capabilities capabilities() const override { return inner_.capabilities(); }
    std::vector<TokenRecord> tokenize(const std::string& text) const override {
        return inner_.tokenize(text);
    }
    std::string detokenize(std::span<const TokenRecord> tokens) const override {
        return inner_.detokenize(tokens);
    }

    ReasoningTrace generate(const std::string& question_text, const PromptConfig& cfg) override {
        return generate_continuation(question_text, {}, cfg);
    }

    ReasoningTrace generate_continuation(const std::string& question_text,
                                         std::span<const TokenRecord> prefix,
                                         const PromptConfig& cfg) override {
        nlohmann::json req = request_base(question_text, cfg);
        req["prefix"] = prefix_texts(prefix);
        req["max_new_tokens"] = cfg.max_new_tokens;
        const auto trace = cached<ReasoningTrace>("generate", req, [&] {
            return inner_.generate_continuation(question_text, prefix, cfg);
        });
        tokens_out_ += trace.tokens.size() - prefix.size();
        return trace;
    }

    std::vector<DistributionSlice> score_forced(const std::string& question_text,
                                                std::span<const TokenRecord> forced,
                                                const PromptConfig& cfg, int top_l) override {
        nlohmann::json req = request_base(question_text, cfg);
        req["forced"] = prefix_texts(forced);
        req["top_l"] = top_l;
        return cached<std::vector<DistributionSlice>>(
            "score", req, [&] { return inner_.score_forced(question_text, forced, cfg, top_l); });
    }

    TopKResult top_k_alternatives(const std::string& question_text,
                                  std::span<const TokenRecord> prefix, int k,
                                  const PromptConfig& cfg) override {
        nlohmann::json req = request_base(question_text, cfg);
        req["prefix"] = prefix_texts(prefix);
        req["k"] = k;
        return cached<TopKResult>(
            "topk", req, [&] { return inner_.top_k_alternatives(question_text, prefix, k, cfg); });
    }

    embedder::SparseVec embed(const std::string& text) override {
        nlohmann::json req;
        req["text"] = text;
        return cached<embedder::SparseVec>("embed", req, [&] { return inner_.embed(text); });
    }

private:
    static std::vector<std::string> prefix_texts(std::span<const TokenRecord> tokens) {
        std::vector<std::string> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) out.push_back(t.token_text);
        return out;
    }

    nlohmann::json request_base(const std::string& question_text, const PromptConfig& cfg) const {
        nlohmann::json req;
        req["question"] = question_text;
        req["instruction_hash"] = digest_hex(cfg.instruction_prefix);
        req["instruction_id"] = cfg.instruction_id;
        req["stop"] = cfg.stop_sequences;
        req["decoding"] = decoding_to_json(cfg.decoding);
        return req;
    }

    template <typename T, typename Fn>
    T cached(const std::string& kind, const nlohmann::json& req, Fn&& compute) {
        if (!disk_) return compute();
        const auto key = make_key(inner_.identity(), kind, req);
        if (auto payload = disk_->get(key)) {
            ++hits_;
            return payload->get<T>();
        }
        T value = compute();
        disk_->put(key, nlohmann::json(value));
        return value;
    }

    LmBackend& inner_;
    std::shared_ptr<const DiskCache> disk_;
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> tokens_out_{0};
};

}  // namespace ppcv::cache
