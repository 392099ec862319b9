#pragma once

/**
 * Immutable domain types shared by every pipeline stage.
 *
 * A Question is the original problem q0; Paraphrase carries one of its
 * rephrasings together with the similarity score used by the weighted
 * consistency stage. ReasoningTrace is a tokenized rollout; positions are
 * always backend-token positions, never characters.
 */

#include "ppcv/common.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ppcv {

enum class AnswerKind { numeric, multiple_choice };

inline const char* to_string(AnswerKind k) {
    return k == AnswerKind::numeric ? "numeric" : "multiple_choice";
}

struct GoldAnswer {
    std::string raw;
    std::string normalized;  // normalize_answer(raw, kind)
};

struct Choice {
    char letter = 0;  // uppercase A-Z
    std::string text;
};

struct Question {
    std::string id;
    std::string text;
    GoldAnswer gold;
    AnswerKind kind = AnswerKind::numeric;
    std::vector<Choice> choices;  // non-empty iff kind == multiple_choice
};

struct Paraphrase {
    int index = 0;       // n in [1, N], contiguous
    std::string text;
    double similarity = 0.0;  // s_n in [0, 1]
};

struct TokenRecord {
    int position = 0;  // equals the record's index in its owning trace
    TokenId token_id = 0;
    std::string token_text;
};

enum class FinishReason { stop_token, length_limit };

struct Decoding {
    enum class Mode { greedy, top_k_sampling };
    Mode mode = Mode::greedy;
    int top_k = 0;            // sampling only
    double temperature = 1.0; // sampling only
    std::uint64_t seed = 0;   // sampling only
};

struct PromptConfig {
    std::string instruction_prefix;
    std::string instruction_id;  // versioned template id, hashed into cache keys
    int max_new_tokens = 256;
    std::vector<std::string> stop_sequences;
    Decoding decoding;
};

struct ReasoningTrace {
    std::string question_ref;        // question or paraphrase identity, e.g. "q7" or "q7#p2"
    std::string prompt_fingerprint;  // hash of (instruction prefix, question text, decoding)
    std::vector<TokenRecord> tokens;
    std::string text;                // exact detokenization of tokens
    FinishReason finished = FinishReason::stop_token;
};

inline std::string prompt_fingerprint(const std::string& instruction_prefix,
                                      const std::string& question_text,
                                      const Decoding& d) {
    std::string blob = instruction_prefix;
    blob += '\x1f';
    blob += question_text;
    blob += '\x1f';
    blob += std::to_string(static_cast<int>(d.mode));
    blob += ':' + std::to_string(d.top_k);
    blob += ':' + std::to_string(d.temperature);
    blob += ':' + std::to_string(d.seed);
    return digest_hex(blob);
}

inline std::string trace_fingerprint(const ReasoningTrace& t) {
    std::string blob = t.prompt_fingerprint;
    blob += '\x1f';
    blob += t.text;
    return digest_hex(blob);
}

/// Prompt-facing rendering: multiple-choice questions carry their options
/// verbatim below the stem; paraphrasing swaps only the stem.
inline std::string render_with_stem(const Question& q, const std::string& stem) {
    if (q.kind != AnswerKind::multiple_choice) return stem;
    std::string out = stem;
    for (const auto& c : q.choices) {
        out += "\n(";
        out += c.letter;
        out += ") " + c.text;
    }
    return out;
}

inline std::string render_question(const Question& q) { return render_with_stem(q, q.text); }

/// Enforces the Question invariants; throws DataError naming the offence.
inline void validate_question(const Question& q) {
    if (q.id.empty()) throw DataError("question with empty id");
    if (q.text.empty()) throw DataError("question " + q.id + ": empty text");
    const bool mc = q.kind == AnswerKind::multiple_choice;
    if (mc && q.choices.empty())
        throw DataError("question " + q.id + ": multiple_choice requires choices");
    if (!mc && !q.choices.empty())
        throw DataError("question " + q.id + ": numeric question must not carry choices");
    std::vector<bool> seen(26, false);
    for (const auto& c : q.choices) {
        if (c.letter < 'A' || c.letter > 'Z')
            throw DataError("question " + q.id + ": choice letter must be uppercase A-Z");
        if (seen[static_cast<std::size_t>(c.letter - 'A')])
            throw DataError("question " + q.id + ": duplicate choice letter");
        seen[static_cast<std::size_t>(c.letter - 'A')] = true;
    }
}

}  // namespace ppcv
