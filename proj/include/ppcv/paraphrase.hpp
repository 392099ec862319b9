#pragma once

/**
 * Paraphrase generation, similarity scoring and instruction optimization.
 *
 * Paraphrases come back from the model as a bracketed-serial-number list
 * ("[1] ... [2] ..."). Parsing is strict; a malformed response earns one
 * reformat retry, after which the set is padded from the last valid
 * variant and flagged as degraded. A variant equal to the original
 * question is regenerated once and otherwise kept with similarity 1.0,
 * where it contributes no probing signal and minimal consistency weight.
 *
 * The instruction-optimization loop proposes candidate instructions from
 * exemplar (original, paraphrase) pairs, scores each candidate by the mean
 * solve-rate change it induces on a dev split (paraphrased minus
 * original), and keeps the argmax with ties resolved toward the incumbent.
 */

#include "ppcv/backend.hpp"
#include "ppcv/dataset.hpp"
#include "ppcv/parallel.hpp"
#include "ppcv/prompts.hpp"
#include "ppcv/serde.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <vector>

namespace ppcv::paraphrase {

struct ParaphraseInstruction {
    std::string id;  // digest of text
    std::string text;
    std::optional<double> fitness;  // mean solve-rate change on the dev split
    int generation = 0;             // optimization round that produced it

    static ParaphraseInstruction from_text(std::string text, int generation = 0) {
        ParaphraseInstruction p;
        p.id = digest_hex(text);
        p.text = std::move(text);
        p.generation = generation;
        return p;
    }
};

struct ParaphraseSet {
    std::string question_id;
    std::string instruction_id;
    std::vector<Paraphrase> items;
    bool degraded = false;    // padding was needed
    std::string embedder_id;  // similarity provenance
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Extracts entries from "[1] ... [2] ...". Serials must start at 1 and
/// ascend by 1; anything else yields only the prefix that conforms.
inline std::vector<std::string> parse_bracketed_list(const std::string& text) {
    static const std::regex marker(R"(\[(\d+)\])");
    std::vector<std::pair<int, std::pair<std::size_t, std::size_t>>> spans;  // serial -> [from,to)
    for (auto it = std::sregex_iterator(text.begin(), text.end(), marker);
         it != std::sregex_iterator(); ++it) {
        spans.push_back({std::stoi((*it)[1].str()),
                         {static_cast<std::size_t>(it->position() + it->length()), 0}});
        if (spans.size() > 1) spans[spans.size() - 2].second.second = static_cast<std::size_t>(it->position());
    }
    if (!spans.empty()) spans.back().second.second = text.size();

    auto trim = [](std::string s) {
        const char* ws = " \t\r\n";
        const auto b = s.find_first_not_of(ws);
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(ws);
        return s.substr(b, e - b + 1);
    };

    std::vector<std::string> out;
    int expected = 1;
    for (const auto& [serial, range] : spans) {
        if (serial != expected) break;
        auto entry = trim(text.substr(range.first, range.second - range.first));
        if (entry.empty()) break;
        out.push_back(std::move(entry));
        ++expected;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Similarity
// ---------------------------------------------------------------------------

inline const char* kLexicalEmbedderId = "lexical-tf-v1";

inline double similarity(const std::string& q0_text, const std::string& qn_text,
                         LmBackend& backend) {
    const bool remote = backend.capabilities().remote_embeddings;
    const auto a = remote ? backend.embed(q0_text) : embedder::lexical_embed(q0_text);
    const auto b = remote ? backend.embed(qn_text) : embedder::lexical_embed(qn_text);
    return std::clamp(embedder::cosine(a, b), 0.0, 1.0);
}

inline std::string embedder_id(const LmBackend& backend) {
    return backend.capabilities().remote_embeddings
               ? "remote:" + backend.identity().model_id
               : kLexicalEmbedderId;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

inline ParaphraseSet generate_paraphrases(const Question& q, int n,
                                          const ParaphraseInstruction& instr, LmBackend& backend,
                                          int max_new_tokens = 512) {
    if (n < 1) throw ConfigError("generate_paraphrases: n must be >= 1");
    const bool mc = q.kind == AnswerKind::multiple_choice;

    PromptConfig cfg;
    cfg.instruction_prefix = instr.text;
    cfg.instruction_id = instr.id;
    cfg.max_new_tokens = max_new_tokens;

    auto ask = [&](const std::string& request) {
        return parse_bracketed_list(backend.generate(request, cfg).text);
    };

    auto variants = ask(prompts::paraphrase_request(q.text, n, mc));
    if (static_cast<int>(variants.size()) < n) {
        const auto retry = ask(prompts::paraphrase_reformat_request(q.text, n, mc));
        if (retry.size() > variants.size()) variants = retry;
    }

    // reject verbatim copies of the original once, then tolerate them
    const bool had_degenerate =
        std::any_of(variants.begin(), variants.end(), [&](const auto& v) { return v == q.text; });
    if (had_degenerate) {
        const auto retry = ask(prompts::paraphrase_reformat_request(q.text, n, mc));
        const bool retry_clean =
            static_cast<int>(retry.size()) >= n &&
            std::none_of(retry.begin(), retry.end(), [&](const auto& v) { return v == q.text; });
        if (retry_clean) variants = retry;
    }

    ParaphraseSet set;
    set.question_id = q.id;
    set.instruction_id = instr.id;
    set.embedder_id = embedder_id(backend);
    if (variants.empty())
        throw DataError("paraphrase generation produced no parseable variants for " + q.id);
    if (static_cast<int>(variants.size()) < n) {
        set.degraded = true;
        while (static_cast<int>(variants.size()) < n) variants.push_back(variants.back());
    }
    variants.resize(static_cast<std::size_t>(n));

    for (int i = 0; i < n; ++i) {
        Paraphrase p;
        p.index = i + 1;
        p.text = variants[static_cast<std::size_t>(i)];
        p.similarity = similarity(q.text, p.text, backend);
        set.items.push_back(std::move(p));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Store (JSONL, one record per question; reused across runs)
// ---------------------------------------------------------------------------

inline void save_store(const std::map<std::string, ParaphraseSet>& sets, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write paraphrase store: " + path);
    for (const auto& [qid, set] : sets) {
        nlohmann::json j;
        j["question_id"] = set.question_id;
        j["instruction_id"] = set.instruction_id;
        j["paraphrases"] = set.items;
        j["degraded"] = set.degraded;
        j["embedder_id"] = set.embedder_id;
        out << j.dump() << "\n";
    }
}

inline std::map<std::string, ParaphraseSet> load_store(const std::string& path) {
    std::map<std::string, ParaphraseSet> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        ParaphraseSet set;
        set.question_id = j.at("question_id").get<std::string>();
        set.instruction_id = j.at("instruction_id").get<std::string>();
        set.items = j.at("paraphrases").get<std::vector<Paraphrase>>();
        set.degraded = j.value("degraded", false);
        set.embedder_id = j.value("embedder_id", std::string(kLexicalEmbedderId));
        out[set.question_id] = std::move(set);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Instruction optimization
// ---------------------------------------------------------------------------

struct ApeOptions {
    int n_paraphrases = 4;
    int max_new_tokens = 256;
    int concurrency = 1;
    int exemplar_questions = 2;
};

namespace detail {

inline bool solve_greedy(const Question& q, const std::string& stem, LmBackend& backend,
                         int max_new_tokens) {
    PromptConfig cfg;
    cfg.instruction_prefix = prompts::cot_instruction(q.kind);
    cfg.instruction_id = prompts::cot_instruction_id(q.kind);
    cfg.max_new_tokens = max_new_tokens;
    const auto trace = backend.generate(render_with_stem(q, stem), cfg);
    const auto ans = harness::extract_normalized(trace.text, q.kind);
    return ans && answers_equal(*ans, q.gold.normalized, q.kind);
}

inline double instruction_fitness(const ParaphraseInstruction& instr, std::span<const Question> dev,
                                  double original_rate, LmBackend& backend, const ApeOptions& opts) {
    std::vector<double> per_question(dev.size(), 0.0);
    parallel_for(dev.size(), opts.concurrency, [&](std::size_t i) {
        const auto set = generate_paraphrases(dev[i], opts.n_paraphrases, instr, backend);
        int solved = 0;
        for (const auto& p : set.items)
            solved += solve_greedy(dev[i], p.text, backend, opts.max_new_tokens) ? 1 : 0;
        per_question[i] = static_cast<double>(solved) / static_cast<double>(set.items.size());
    });
    double mean = 0.0;
    for (double v : per_question) mean += v;
    mean /= static_cast<double>(dev.size());
    return mean - original_rate;
}

}  // namespace detail

/**
 * Iterative propose / evaluate / select over paraphrasing instructions.
 * Monotone: the returned instruction's fitness on the dev split is never
 * below the seed's.
 */
inline ParaphraseInstruction ape_optimize(const ParaphraseInstruction& seed_instr,
                                          std::span<const Question> dev, int rounds,
                                          int candidates_per_round, LmBackend& backend,
                                          const ApeOptions& opts = {}) {
    if (dev.empty()) throw ConfigError("ape_optimize: dev split is empty");
    if (rounds < 1) throw ConfigError("ape_optimize: rounds must be >= 1");

    double original_rate = 0.0;
    for (const auto& q : dev)
        original_rate += detail::solve_greedy(q, q.text, backend, opts.max_new_tokens) ? 1.0 : 0.0;
    original_rate /= static_cast<double>(dev.size());

    ParaphraseInstruction incumbent = seed_instr;
    incumbent.fitness = detail::instruction_fitness(incumbent, dev, original_rate, backend, opts);

    for (int round = 1; round <= rounds; ++round) {
        // exemplar pairs produced by the incumbent
        std::string exemplars;
        const int nex = std::min<int>(opts.exemplar_questions, static_cast<int>(dev.size()));
        for (int i = 0; i < nex; ++i) {
            const auto set = generate_paraphrases(dev[static_cast<std::size_t>(i)], 1, incumbent, backend);
            exemplars += "Original: " + dev[static_cast<std::size_t>(i)].text + "\n";
            exemplars += "Paraphrase: " + set.items.front().text + "\n\n";
        }

        PromptConfig cfg;
        cfg.instruction_id = prompts::kApeProposeId;
        cfg.max_new_tokens = opts.max_new_tokens;
        const auto proposal =
            backend.generate(prompts::ape_propose_request(exemplars, candidates_per_round), cfg);
        std::vector<std::string> texts;
        for (auto& t : parse_bracketed_list(proposal.text))
            if (std::find(texts.begin(), texts.end(), t) == texts.end()) texts.push_back(std::move(t));
        if (texts.empty()) {
            std::cerr << "warning: round " << round << " produced no parseable instructions\n";
            continue;
        }

        ParaphraseInstruction best = incumbent;
        for (const auto& text : texts) {
            if (text == incumbent.text) continue;
            auto candidate = ParaphraseInstruction::from_text(text, round);
            candidate.fitness = detail::instruction_fitness(candidate, dev, original_rate, backend, opts);
            if (*candidate.fitness > *best.fitness) best = candidate;  // ties favor the incumbent
        }
        incumbent = best;
    }
    return incumbent;
}

}  // namespace ppcv::paraphrase
