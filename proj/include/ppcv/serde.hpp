#pragma once

/// JSON conversions for the core and backend types; used by the cache,
/// the run-record store and the CLI emitters.

#include "ppcv/backend.hpp"
#include "ppcv/types.hpp"

#include <nlohmann/json.hpp>

namespace ppcv {

inline void to_json(nlohmann::json& j, const TokenRecord& t) {
    j = {{"position", t.position}, {"token_id", t.token_id}, {"token_text", t.token_text}};
}

inline void from_json(const nlohmann::json& j, TokenRecord& t) {
    j.at("position").get_to(t.position);
    j.at("token_id").get_to(t.token_id);
    j.at("token_text").get_to(t.token_text);
}

inline void to_json(nlohmann::json& j, const ReasoningTrace& t) {
    j = {{"question_ref", t.question_ref},
         {"prompt_fingerprint", t.prompt_fingerprint},
         {"tokens", t.tokens},
         {"text", t.text},
         {"finished", t.finished == FinishReason::stop_token ? "stop_token" : "length_limit"}};
}

inline void from_json(const nlohmann::json& j, ReasoningTrace& t) {
    j.at("question_ref").get_to(t.question_ref);
    j.at("prompt_fingerprint").get_to(t.prompt_fingerprint);
    j.at("tokens").get_to(t.tokens);
    j.at("text").get_to(t.text);
    t.finished = j.at("finished").get<std::string>() == "stop_token" ? FinishReason::stop_token
                                                                     : FinishReason::length_limit;
}

inline void to_json(nlohmann::json& j, const DistributionSlice& s) {
    j = {{"position", s.position},
         {"forced_token_id", s.forced_token_id},
         {"forced_prob", s.forced_prob},
         {"top1_token_id", s.top1_token_id},
         {"top1_prob", s.top1_prob},
         {"topl", s.topl},
         {"forced_prob_floored", s.forced_prob_floored}};
}

inline void from_json(const nlohmann::json& j, DistributionSlice& s) {
    j.at("position").get_to(s.position);
    j.at("forced_token_id").get_to(s.forced_token_id);
    j.at("forced_prob").get_to(s.forced_prob);
    j.at("top1_token_id").get_to(s.top1_token_id);
    j.at("top1_prob").get_to(s.top1_prob);
    j.at("topl").get_to(s.topl);
    j.at("forced_prob_floored").get_to(s.forced_prob_floored);
}

inline void to_json(nlohmann::json& j, const TopToken& t) {
    j = {{"id", t.id}, {"text", t.text}, {"prob", t.prob}};
}

inline void from_json(const nlohmann::json& j, TopToken& t) {
    j.at("id").get_to(t.id);
    j.at("text").get_to(t.text);
    j.at("prob").get_to(t.prob);
}

inline void to_json(nlohmann::json& j, const TopKResult& r) {
    j = {{"tokens", r.tokens}, {"truncated", r.truncated}};
}

inline void from_json(const nlohmann::json& j, TopKResult& r) {
    j.at("tokens").get_to(r.tokens);
    j.at("truncated").get_to(r.truncated);
}

inline void to_json(nlohmann::json& j, const Paraphrase& p) {
    j = {{"index", p.index}, {"text", p.text}, {"similarity", p.similarity}};
}

inline void from_json(const nlohmann::json& j, Paraphrase& p) {
    j.at("index").get_to(p.index);
    j.at("text").get_to(p.text);
    j.at("similarity").get_to(p.similarity);
}

inline nlohmann::json decoding_to_json(const Decoding& d) {
    return {{"mode", d.mode == Decoding::Mode::greedy ? "greedy" : "top_k_sampling"},
            {"top_k", d.top_k},
            {"temperature", d.temperature},
            {"seed", d.seed}};
}

}  // namespace ppcv
