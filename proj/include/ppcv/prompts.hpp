#pragma once

/**
 * Versioned prompt templates. Template ids and content hashes flow into
 * cache keys and run manifests, so editing a template invalidates stale
 * cache entries instead of silently reusing them.
 */

#include "ppcv/common.hpp"
#include "ppcv/types.hpp"

#include <string>

namespace ppcv::prompts {

// ---------------------------------------------------------------------------
// Zero-shot reasoning instructions
// ---------------------------------------------------------------------------

inline const char* kMathCotId = "math-cot-v1";
inline const char* kMathCot =
    "You are a specialized AI assistant designed to solve mathematical problems.\n"
    "Please solve the following problem step by step, and put your final answer within boxed{}.";

inline const char* kArcCotId = "arc-cot-v1";
inline const char* kArcCot =
    "You are a specialized AI assistant designed to solve complex reasoning problems.\n"
    "Your task is to carefully read the following question, apply logical reasoning, "
    "scientific knowledge, and commonsense inference, and arrive at the correct answer. "
    "Always explain your reasoning step by step in clear language. At the end of your "
    "response, output the final choice in the following format: The answer is: (option), "
    "where option is the correct option letter (A, B, C, D, etc.), enclosed in parentheses.";

inline const char* cot_instruction(AnswerKind kind) {
    return kind == AnswerKind::numeric ? kMathCot : kArcCot;
}

inline const char* cot_instruction_id(AnswerKind kind) {
    return kind == AnswerKind::numeric ? kMathCotId : kArcCotId;
}

// ---------------------------------------------------------------------------
// Paraphrasing instructions
// ---------------------------------------------------------------------------

// Default seed instruction for math questions; the ape subcommand refines it.
inline const char* kParaphraseMathId = "paraphrase-math-v1";
inline const char* kParaphraseMath =
    "You are a paraphrasing assistant specialized in math problems. Your task is to "
    "paraphrase a given math word problem. The core objective is to create a new, diverse "
    "expression of the problem while strictly preserving all numerical values, mathematical "
    "relationships, and the core logic required to solve it.";

inline const char* kParaphraseMcId = "paraphrase-mc-v1";
inline const char* kParaphraseMc =
    "You are given a multiple-choice question from a reasoning benchmark. Your task is to "
    "generate multiple different paraphrased versions of the question. Each version must "
    "preserve the original meaning, answer choices, and scientific/commonsense accuracy. "
    "Keep the question logically equivalent to the original, do not change the correct "
    "answer, and keep the multiple-choice options (A, B, C, D, etc.) unchanged.";

// The request block appended after the paraphrasing instruction. The toy
// backend keys off kParaphraseMarker to recognize these prompts.
inline const char* kParaphraseMarker = "paraphrased versions of the question below";

inline std::string paraphrase_request(const std::string& question_text, int n, bool multiple_choice) {
    std::string req = "Please create " + std::to_string(n) + " " + kParaphraseMarker + ". ";
    if (multiple_choice) {
        req += "Only paraphrase the question and leave the multiple-choice options untouched. ";
    } else {
        req +=
            "Do NOT change any numbers or quantities. Maintain the exact mathematical "
            "operations and relationships. And vary the context and language. ";
    }
    req += "Please output paraphrased questions starting with a bracketed serial number "
           "like [1] [2] and ending with a new line.\n\n";
    req += question_text;
    return req;
}

// Stricter retry wording used when the first response was unparseable.
inline std::string paraphrase_reformat_request(const std::string& question_text, int n,
                                               bool multiple_choice) {
    return "Your previous output was not in the requested format.\n" +
           paraphrase_request(question_text, n, multiple_choice);
}

// ---------------------------------------------------------------------------
// Instruction-induction prompt for the ape loop
// ---------------------------------------------------------------------------

inline const char* kApeProposeId = "ape-propose-v1";
inline const char* kApeProposeMarker = "candidate instructions";

inline std::string ape_propose_request(const std::string& exemplar_block, int m) {
    return "Below are original questions paired with good paraphrased versions of them.\n\n" +
           exemplar_block + "\nWrite " + std::to_string(m) + " " + kApeProposeMarker +
           " that would make an assistant produce such paraphrases from the originals. Output "
           "each instruction starting with a bracketed serial number like [1] [2] and ending "
           "with a new line.";
}

inline std::string template_hash(const std::string& text) { return digest_hex(text); }

}  // namespace ppcv::prompts
