#pragma once

/**
 * Dataset ingestion and answer extraction.
 *
 * Datasets are JSONL, one object per line:
 *   {"id": "q1", "question": "...", "answer": "51", "type": "numeric"}
 *   {"id": "q2", "question": "...", "answer": "B", "type": "multiple_choice",
 *    "choices": [{"letter": "A", "text": "..."}, ...]}
 *
 * extract_answer is the marker-based answer function: the last boxed{...}
 * occurrence for numeric answers, the letter of the last
 * "The answer is: (X)" occurrence for multiple choice. Absence is a value,
 * not an error.
 */

#include "ppcv/answers.hpp"
#include "ppcv/types.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace ppcv::harness {

inline std::optional<std::string> extract_answer(const std::string& text, AnswerKind kind) {
    if (kind == AnswerKind::numeric) {
        const std::string marker = "boxed{";
        auto pos = text.rfind(marker);
        if (pos == std::string::npos) return std::nullopt;
        const auto start = pos + marker.size();
        const auto end = text.find('}', start);
        if (end == std::string::npos) return std::nullopt;
        return text.substr(start, end - start);
    }
    const std::string marker = "The answer is:";
    auto pos = text.rfind(marker);
    if (pos == std::string::npos) return std::nullopt;
    auto open = text.find('(', pos);
    if (open == std::string::npos) return std::nullopt;
    auto close = text.find(')', open);
    if (close == std::string::npos || close != open + 2) return std::nullopt;
    return text.substr(open, 3);  // "(X)"
}

/// Φ composed with normalization; nullopt when no marker or unparseable.
inline std::optional<std::string> extract_normalized(const std::string& text, AnswerKind kind) {
    auto raw = extract_answer(text, kind);
    if (!raw) return std::nullopt;
    return normalize_answer(*raw, kind);
}

inline AnswerKind parse_kind(const std::string& s) {
    if (s == "numeric") return AnswerKind::numeric;
    if (s == "multiple_choice") return AnswerKind::multiple_choice;
    throw DataError("unknown answer type: " + s);
}

inline std::vector<Question> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset: " + path);
    std::vector<Question> out;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& field, const std::string& why) {
        throw DataError(path + ":" + std::to_string(lineno) + ": field '" + field + "': " + why);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail("<line>", e.what());
        }
        Question q;
        if (!j.contains("id") || !j["id"].is_string()) fail("id", "missing or not a string");
        q.id = j["id"].get<std::string>();
        if (!j.contains("question") || !j["question"].is_string())
            fail("question", "missing or not a string");
        q.text = j["question"].get<std::string>();
        if (!j.contains("type") || !j["type"].is_string()) fail("type", "missing or not a string");
        try {
            q.kind = parse_kind(j["type"].get<std::string>());
        } catch (const DataError& e) {
            fail("type", e.what());
        }
        if (!j.contains("answer") || !j["answer"].is_string())
            fail("answer", "missing or not a string");
        q.gold.raw = j["answer"].get<std::string>();
        auto norm = normalize_answer(q.gold.raw, q.kind);
        if (!norm) fail("answer", "unparseable gold answer: " + q.gold.raw);
        q.gold.normalized = *norm;
        if (j.contains("choices")) {
            for (const auto& cj : j["choices"]) {
                Choice c;
                const auto letter = cj.at("letter").get<std::string>();
                if (letter.size() != 1) fail("choices", "letter must be one character");
                c.letter = letter[0];
                c.text = cj.at("text").get<std::string>();
                q.choices.push_back(std::move(c));
            }
        }
        try {
            validate_question(q);
        } catch (const DataError& e) {
            fail("<record>", e.what());
        }
        out.push_back(std::move(q));
    }
    if (out.empty())
        std::cerr << "warning: dataset " << path << " is empty\n";
    return out;
}

}  // namespace ppcv::harness
