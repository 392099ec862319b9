#include "ppcv/remote.hpp"

#include "support/mock_server.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

using namespace ppcv;
using namespace ppcv::testsupport;
using nlohmann::json;

namespace {

remote::RemoteConfig mock_config(const MockOpenAiServer& server) {
    remote::RemoteConfig cfg;
    cfg.endpoint = server.endpoint();
    cfg.model = "mock-model";
    cfg.max_retries = 2;
    cfg.timeout_seconds = 10;
    return cfg;
}

PromptConfig simple_cfg() {
    PromptConfig cfg;
    cfg.instruction_prefix = "Solve it.";
    cfg.instruction_id = "test-v1";
    cfg.max_new_tokens = 32;
    return cfg;
}

std::vector<TokenRecord> records_of(std::initializer_list<const char*> texts) {
    std::vector<TokenRecord> out;
    for (const char* t : texts) out.push_back({static_cast<int>(out.size()), token_id_of(t), t});
    return out;
}

json load_golden(const char* name) {
    std::ifstream in(std::string(PPCV_TEST_DATA_DIR) + "/" + name);
    REQUIRE(in.good());
    json j;
    in >> j;
    return j;
}

}  // namespace

TEST_CASE("generation parses tokens, text and finish reason") {
    MockOpenAiServer server;
    server.completions = [](const json& req) -> std::pair<int, json> {
        CHECK(req.at("max_tokens") == 32);
        CHECK(req.at("temperature") == 0.0);
        CHECK(req.at("echo") == false);
        CHECK(req.at("logprobs") == 1);
        json resp = {{"choices",
                      {{{"text", "The answer"},
                        {"finish_reason", "length"},
                        {"logprobs",
                         {{"tokens", {"The", " answer"}},
                          {"token_logprobs", {-0.1, -0.2}},
                          {"top_logprobs", json::array({nullptr, nullptr})}}}}}}};
        return {200, resp};
    };
    remote::RemoteBackend backend(mock_config(server));
    const auto trace = backend.generate("What is 4 plus 5 ?", simple_cfg());
    REQUIRE(trace.tokens.size() == 2);
    CHECK(trace.tokens[0].token_text == "The");
    CHECK(trace.tokens[1].token_text == " answer");
    CHECK(trace.tokens[1].position == 1);
    CHECK(trace.text == "The answer");
    CHECK(trace.finished == FinishReason::length_limit);
}

TEST_CASE("continuation prepends the forced prefix verbatim") {
    MockOpenAiServer server;
    server.completions = [](const json& req) -> std::pair<int, json> {
        // the prompt must end with the detokenized prefix
        const auto prompt = req.at("prompt").get<std::string>();
        CHECK(prompt.find("Solve it.\n\nWhat is 4 plus 5 ?\n\nThe answer") == 0);
        json resp = {{"choices",
                      {{{"text", " is 9"},
                        {"finish_reason", "stop"},
                        {"logprobs",
                         {{"tokens", {" is", " 9"}},
                          {"token_logprobs", {-0.1, -0.2}},
                          {"top_logprobs", json::array({nullptr, nullptr})}}}}}}};
        return {200, resp};
    };
    remote::RemoteBackend backend(mock_config(server));
    const auto prefix = records_of({"The", " answer"});
    const auto trace = backend.generate_continuation("What is 4 plus 5 ?", prefix, simple_cfg());
    REQUIRE(trace.tokens.size() == 4);
    CHECK(trace.tokens[0].token_text == "The");
    CHECK(trace.tokens[3].token_text == " 9");
    CHECK(trace.text == "The answer is 9");
}

// Acceptance-grade wire conformance: the forced-scoring request must set
// echo-with-logprobs and zero max_tokens (golden request fixture), and the
// parser must read per-token top-L including the floor path for a forced
// token outside the returned top-L.
TEST_CASE("forced scoring round-trips the golden wire fixtures") {
    MockOpenAiServer server;
    const json golden_response = load_golden("wire_score_response.json");
    server.completions = [&](const json&) -> std::pair<int, json> {
        return {200, golden_response};
    };
    remote::RemoteBackend backend(mock_config(server));
    const auto forced = records_of({" answer", " is", " 9"});
    const auto slices = backend.score_forced("What is 4 plus 5 ?", forced, simple_cfg(), 5);

    const auto captured = server.captured();
    REQUIRE(captured.size() == 1);
    CHECK(captured[0] == load_golden("wire_score_request.json"));

    REQUIRE(slices.size() == 3);
    // position 0: forced token present with exact logprob, top-1 = forced
    CHECK(slices[0].forced_prob == Catch::Approx(0.7).margin(1e-12));
    CHECK_FALSE(slices[0].forced_prob_floored);
    CHECK(slices[0].top1_token_id == token_id_of(" answer"));
    CHECK(slices[0].top1_prob == Catch::Approx(0.7).margin(1e-12));
    // position 1: forced token outside top-L -> floored to min(3e-4, 1e-6)
    CHECK(slices[1].forced_prob_floored);
    CHECK(slices[1].forced_prob == Catch::Approx(1e-6).margin(1e-18));
    CHECK(slices[1].top1_token_id == token_id_of(" was"));
    CHECK(slices[1].top1_prob == Catch::Approx(0.8).margin(1e-12));
    // position 2: forced token has exact prob 0.1 but top-1 is " 8" at 0.7
    CHECK_FALSE(slices[2].forced_prob_floored);
    CHECK(slices[2].forced_prob == Catch::Approx(0.1).margin(1e-12));
    CHECK(slices[2].top1_token_id == token_id_of(" 8"));
    CHECK(slices[2].top1_prob - slices[2].forced_prob == Catch::Approx(0.6).margin(1e-12));
}

TEST_CASE("misaligned server tokenization is rejected") {
    MockOpenAiServer server;
    server.completions = [](const json&) -> std::pair<int, json> {
        json resp = {{"choices",
                      {{{"text", ""},
                        {"finish_reason", "stop"},
                        {"logprobs",
                         {{"tokens", {"ctx", " DIFFERENT", " is", " 9"}},
                          {"token_logprobs", {nullptr, -0.1, -0.1, -0.1}},
                          {"top_logprobs", json::array({nullptr, nullptr, nullptr, nullptr})}}}}}}};
        return {200, resp};
    };
    remote::RemoteBackend backend(mock_config(server));
    const auto forced = records_of({" answer", " is", " 9"});
    CHECK_THROWS_WITH(backend.score_forced("q", forced, simple_cfg(), 5),
                      Catch::Matchers::ContainsSubstring("misaligned"));
}

TEST_CASE("top-k alternatives request and ordering") {
    MockOpenAiServer server;
    server.completions = [](const json& req) -> std::pair<int, json> {
        CHECK(req.at("max_tokens") == 1);
        CHECK(req.at("logprobs") == 10);
        json resp = {{"choices",
                      {{{"text", " 9"},
                        {"finish_reason", "length"},
                        {"logprobs",
                         {{"tokens", {" 9"}},
                          {"token_logprobs", {-0.6}},
                          {"top_logprobs",
                           json::array({{{" 9", -0.5978370007556204},
                                         {" 8", -1.203972804325936},
                                         {" 12", -3.506557897319982}}})}}}}}}};
        return {200, resp};
    };
    remote::RemoteBackend backend(mock_config(server));
    const auto r = backend.top_k_alternatives("q", {}, 10, simple_cfg());
    REQUIRE(r.tokens.size() == 3);
    CHECK(r.tokens[0].text == " 9");
    CHECK(r.tokens[0].prob == Catch::Approx(0.55).margin(1e-12));
    CHECK(r.tokens[1].text == " 8");
    CHECK(r.tokens[2].text == " 12");
    CHECK(r.truncated);  // fewer than k came back
}

TEST_CASE("client errors are not retried, server errors are") {
    MockOpenAiServer server;
    int calls = 0;
    SECTION("400 fails fast") {
        server.completions = [&](const json&) -> std::pair<int, json> {
            ++calls;
            return {400, json{{"error", "bad request"}}};
        };
        remote::RemoteBackend backend(mock_config(server));
        CHECK_THROWS_AS(backend.generate("q", simple_cfg()), BackendError);
        CHECK(calls == 1);
    }
    SECTION("500 retries then surfaces a retryable error") {
        server.completions = [&](const json&) -> std::pair<int, json> {
            ++calls;
            return {500, json{{"error", "boom"}}};
        };
        remote::RemoteBackend backend(mock_config(server));
        try {
            backend.generate("q", simple_cfg());
            FAIL("expected BackendError");
        } catch (const BackendError& e) {
            CHECK(e.retryable);
        }
        CHECK(calls == 3);  // initial + 2 retries
    }
}

TEST_CASE("embeddings are an opt-in capability") {
    MockOpenAiServer server;
    server.embeddings = [](const json& req) -> std::pair<int, json> {
        CHECK(req.at("model") == "mock-embed");
        json resp = {{"data", {{{"embedding", {0.0, 0.6, 0.8}}}}}};
        return {200, resp};
    };
    SECTION("configured") {
        auto cfg = mock_config(server);
        cfg.embed_model = "mock-embed";
        remote::RemoteBackend backend(cfg);
        CHECK(backend.capabilities().remote_embeddings);
        const auto v = backend.embed("hello");
        REQUIRE(v.size() == 2);  // zero entries are dropped
        CHECK(v[0].first == 1);
        CHECK(v[0].second == 0.6);
    }
    SECTION("not configured") {
        remote::RemoteBackend backend(mock_config(server));
        CHECK_FALSE(backend.capabilities().remote_embeddings);
        CHECK_THROWS_AS(backend.embed("hello"), BackendError);
    }
}
