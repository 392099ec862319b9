#pragma once

/**
 * Run configuration. A config file (TOML, flat key = value pairs under
 * [run] / [remote] sections) seeds the defaults; CLI flags override file
 * values; the resolved snapshot lands in the run manifest so a resumed
 * run can refuse mismatched settings.
 */

#include "ppcv/remote.hpp"
#include "ppcv/runner.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace ppcv::config {

struct RunConfig {
    std::string backend = "toy";  // toy | remote
    std::string toy_world;        // toy fixture path
    remote::RemoteConfig remote = remote::RemoteConfig::from_env();
    harness::RunOptions options;
    std::string cache_dir;  // empty = caching off
    std::string out_dir;
    std::string dataset;
    std::string mode = "ppcv";
    std::string paraphrase_store;  // optional JSONL reused across runs
};

// ---------------------------------------------------------------------------
// TOML subset: [section] headers, key = value, "#" comments, quoted
// strings, integers, floats, booleans. Nested tables and arrays are out
// of scope for this config surface.
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> parse_toml_subset(std::istream& in) {
    std::map<std::string, std::string> out;
    std::string line, section;
    int lineno = 0;
    auto trim = [](std::string s) {
        const char* ws = " \t\r";
        const auto b = s.find_first_not_of(ws);
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(ws);
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            // a '#' inside a quoted value is content, not a comment
            const auto quote_open = line.find('"');
            if (quote_open == std::string::npos || hash < quote_open) line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        out[(section.empty() ? key : section + "." + key)] = value;
    }
    return out;
}

inline probe::ProbeWindow parse_window(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("probe window must look like 0.0:1.0");
    probe::ProbeWindow w;
    w.start_frac = std::stod(s.substr(0, colon));
    w.end_frac = std::stod(s.substr(colon + 1));
    return w;
}

inline void apply_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    const auto kv = parse_toml_subset(in);
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    auto to_int = [](const std::string& s) { return std::stoi(s); };
    auto to_u64 = [](const std::string& s) { return static_cast<std::uint64_t>(std::stoull(s)); };
    auto to_bool = [](const std::string& s) {
        if (s == "true") return true;
        if (s == "false") return false;
        throw ConfigError("expected true/false, got: " + s);
    };

    if (auto* v = get("run.backend")) cfg.backend = *v;
    if (auto* v = get("run.mode")) cfg.mode = *v;
    if (auto* v = get("run.dataset")) cfg.dataset = *v;
    if (auto* v = get("run.out_dir")) cfg.out_dir = *v;
    if (auto* v = get("run.cache_dir")) cfg.cache_dir = *v;
    if (auto* v = get("run.toy_world")) cfg.toy_world = *v;
    if (auto* v = get("run.paraphrase_store")) cfg.paraphrase_store = *v;
    if (auto* v = get("run.n_paraphrases")) cfg.options.n_paraphrases = to_int(*v);
    if (auto* v = get("run.n_paraphrases_mc")) cfg.options.n_paraphrases_mc = to_int(*v);
    if (auto* v = get("run.top_k")) cfg.options.top_k = to_int(*v);
    if (auto* v = get("run.lambda")) cfg.options.lambda = std::stod(*v);
    if (auto* v = get("run.weighted")) cfg.options.weighted = to_bool(*v);
    if (auto* v = get("run.probe_window")) cfg.options.window = parse_window(*v);
    if (auto* v = get("run.top_l")) cfg.options.top_l = to_int(*v);
    if (auto* v = get("run.max_new_tokens")) cfg.options.max_new_tokens = to_int(*v);
    if (auto* v = get("run.samples")) cfg.options.sc_samples = to_int(*v);
    if (auto* v = get("run.pmv_rollouts")) cfg.options.pmv_rollouts = to_int(*v);
    if (auto* v = get("run.temperature")) cfg.options.temperature = std::stod(*v);
    if (auto* v = get("run.sampling_top_k")) cfg.options.sampling_top_k = to_int(*v);
    if (auto* v = get("run.concurrency")) cfg.options.concurrency = to_int(*v);
    if (auto* v = get("run.seed")) cfg.options.seed = to_u64(*v);
    if (auto* v = get("run.eval_samples")) cfg.options.eval_samples = to_int(*v);
    if (auto* v = get("run.limit")) cfg.options.limit = to_int(*v);
    if (auto* v = get("remote.endpoint")) cfg.remote.endpoint = *v;
    if (auto* v = get("remote.api_key")) cfg.remote.api_key = *v;
    if (auto* v = get("remote.model")) cfg.remote.model = *v;
    if (auto* v = get("remote.embed_model")) cfg.remote.embed_model = *v;
}

inline void validate(const RunConfig& cfg) {
    const auto& o = cfg.options;
    if (cfg.backend != "toy" && cfg.backend != "remote")
        throw ConfigError("backend must be toy or remote");
    if (o.n_paraphrases < 1 || o.n_paraphrases_mc < 1)
        throw ConfigError("n_paraphrases must be >= 1");
    if (o.top_k < 1) throw ConfigError("top_k must be >= 1");
    if (o.lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (!(o.window.start_frac >= 0.0 && o.window.start_frac < o.window.end_frac &&
          o.window.end_frac <= 1.0))
        throw ConfigError("probe window must satisfy 0 <= start < end <= 1");
    if (o.top_l < 1) throw ConfigError("top_l must be >= 1");
    if (o.max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
    if (o.sc_samples < 1 || o.pmv_rollouts < 1) throw ConfigError("sample counts must be >= 1");
    if (o.concurrency < 1) throw ConfigError("concurrency must be >= 1");
    if (o.eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
}

inline nlohmann::json snapshot(const RunConfig& cfg) {
    nlohmann::json j = harness::options_to_json(cfg.options);
    j["backend_kind"] = cfg.backend;
    j["toy_world"] = cfg.toy_world;
    j["cache_dir"] = cfg.cache_dir;
    j["dataset"] = cfg.dataset;
    j["mode"] = cfg.mode;
    if (cfg.backend == "remote") {
        j["remote_endpoint"] = cfg.remote.endpoint;
        j["remote_model"] = cfg.remote.model;
    }
    return j;
}

}  // namespace ppcv::config
