#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <random>

#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"
#include "maskjudge/judge.hpp"
#include "mock_servers.hpp"
#include "test_util.hpp"

using namespace maskjudge;
using namespace maskjudge::judge;

namespace {

VlmConfig mock_config(const std::string& endpoint) {
  VlmConfig cfg;
  cfg.endpoint = endpoint;
  cfg.require_api_key = false;
  cfg.backoff_base = std::chrono::milliseconds(5);
  cfg.requests_per_minute = 1000;
  return cfg;
}

MaskedImage tiny(std::uint8_t fill = 90) { return MaskedImage{RasterImage(4, 4, 3, fill)}; }

std::string random_text(std::mt19937& rng) {
  static const std::vector<std::string> words{
      "the",    "dog",  "visible", "region", "covers", "most", "of",    "object", "head", "tail",
      "dark",   "area", "shows",   "a",      "wheel",  "sky",  "grass", "partly", "clear", "mask",
      "pixels", "edge", "bright",  "object's", "x-ray", "(left)", "50%", "3rd", "crisp,", "sharp;"};
  std::uniform_int_distribution<std::size_t> len(1, 14), pick(0, words.size() - 1);
  std::string out;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += words[pick(rng)];
  }
  out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out + ".";
}

}  // namespace

TEST_SUITE("judge") {
  TEST_CASE("builtin prompts substitute the label") {
    const std::string p = build_prompt(builtin_template(PromptVariant::Masked), "  golden retriever ");
    CHECK(p.find("golden retriever") != std::string::npos);
    CHECK(p.find(kPlaceholder) == std::string::npos);
    CHECK(p.find("Score") != std::string::npos);
    const std::string h = build_prompt(builtin_template(PromptVariant::Heatmap), "cat");
    CHECK(h != build_prompt(builtin_template(PromptVariant::Masked), "cat"));
    CHECK(build_prompt(builtin_template(PromptVariant::Masked), "{object}").find("{object}") != std::string::npos);
    CHECK_THROWS_AS(build_prompt(builtin_template(PromptVariant::Masked), "   "), Error);
  }

  TEST_CASE("custom templates need the placeholder") {
    testutil::TempDir dir;
    testutil::write_file(dir / "good.txt", "Rate the {object}. Reply with Evaluation, Justification, Score.");
    testutil::write_file(dir / "bad.txt", "Rate the thing.");
    CHECK(build_prompt(load_template_file(dir / "good.txt"), "cup").find("Rate the cup.") == 0);
    try {
      load_template_file(dir / "bad.txt");
      FAIL("expected validation error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Validation);
    }
  }

  TEST_CASE("reply corpus") {
    const auto dir = testutil::fixtures() / "replies";
    const auto expected = nlohmann::json::parse(io::read_text(dir / "expected.json"));
    std::size_t good = 0, bad = 0;
    for (const auto& [name, exp] : expected.items()) {
      CAPTURE(name);
      const std::string raw = io::read_text(dir / name);
      if (exp.value("malformed", false)) {
        ++bad;
        CHECK_THROWS_AS(parse_assessment(raw), ParseError);
        continue;
      }
      ++good;
      const VlmAssessment a = parse_assessment(raw);
      CHECK(a.evaluation == exp["evaluation"].get<std::string>());
      CHECK(a.justification == exp["justification"].get<std::string>());
      CHECK(a.score == exp["score"].get<int>());
      CHECK(a.raw == raw);
    }
    CHECK(good + bad >= 25);
    CHECK(bad >= 5);
  }

  TEST_CASE("parse errors keep the raw reply") {
    try {
      parse_assessment("Evaluation: fine\nScore: 3");
      FAIL("expected parse error");
    } catch (const ParseError& e) {
      CHECK(e.raw() == "Evaluation: fine\nScore: 3");
      CHECK(std::string(e.what()).find("justification") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_assessment("Evaluation: a\nJustification: b\nScore: 3.5"), ParseError);
  }

  TEST_CASE("format then parse round-trips") {
    std::mt19937 rng(2024);
    for (int i = 0; i < 1000; ++i) {
      VlmAssessment a;
      a.evaluation = random_text(rng);
      a.justification = random_text(rng);
      a.score = static_cast<int>(rng() % 6);
      const VlmAssessment b = parse_assessment(format_assessment(a));
      CHECK(b.evaluation == a.evaluation);
      CHECK(b.justification == a.justification);
      CHECK(b.score == a.score);
    }
  }

  TEST_CASE("cache keys") {
    const std::vector<std::uint8_t> img{1, 2, 3};
    const auto k = AssessmentCache::key("p", img, "m", 0.0);
    CHECK(k.size() == 64);
    CHECK(k == AssessmentCache::key("p", img, "m", 0.0));
    CHECK(k != AssessmentCache::key("p", img, "m2", 0.0));
    CHECK(k != AssessmentCache::key("p", img, "m", 0.2));
    CHECK(k != AssessmentCache::key("q", img, "m", 0.0));
    const std::vector<std::uint8_t> other{1, 2, 4};
    CHECK(k != AssessmentCache::key("p", other, "m", 0.0));
  }

  TEST_CASE("cached judgments skip the network") {
    mocks::MockVlmServer server([](const mocks::ChatRequest&) { return mocks::ChatReply{200, mocks::canonical_reply(4)}; });
    testutil::TempDir dir;
    VlmConfig cfg = mock_config(server.endpoint());
    cfg.cache_dir = (dir / "cache").string();
    {
      VlmJudge judge(cfg);
      const auto a = judge.request_assessment("prompt one", tiny());
      CHECK(a.score == 4);
      CHECK(a.model_name == cfg.model_name);
      CHECK(judge.network_requests() == 1);
    }
    VlmJudge again(cfg);
    const auto b = again.request_assessment("prompt one", tiny());
    CHECK(b.score == 4);
    CHECK(again.network_requests() == 0);
    CHECK(again.cache_hits() == 1);
    CHECK(server.requests() == 1);
  }

  TEST_CASE("persistent rate limiting fails with the backoff schedule") {
    mocks::MockVlmServer server([](const mocks::ChatRequest&) { return mocks::ChatReply{429, "slow down"}; });
    VlmConfig cfg = mock_config(server.endpoint());
    cfg.max_retries = 3;
    VlmJudge judge(cfg);
    try {
      judge.request_assessment("p", tiny());
      FAIL("expected rate-limit error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::RateLimit);
      CHECK(std::string(e.what()).find("5ms, 10ms, 20ms") != std::string::npos);
    }
    CHECK(server.requests() == 4);
  }

  TEST_CASE("server errors are retried, client errors are not") {
    int calls = 0;
    mocks::MockVlmServer server([&calls](const mocks::ChatRequest&) {
      return ++calls < 3 ? mocks::ChatReply{503, "busy"} : mocks::ChatReply{200, mocks::canonical_reply(2)};
    });
    VlmJudge judge(mock_config(server.endpoint()));
    CHECK(judge.request_assessment("p", tiny()).score == 2);
    CHECK(server.requests() == 3);

    mocks::MockVlmServer denied([](const mocks::ChatRequest&) { return mocks::ChatReply{401, "bad key"}; });
    VlmJudge judge2(mock_config(denied.endpoint()));
    try {
      judge2.request_assessment("p", tiny());
      FAIL("expected credential error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Credential);
    }
    CHECK(denied.requests() == 1);
  }

  TEST_CASE("API key comes from the named environment variable") {
    std::string seen;
    mocks::MockVlmServer server([&seen](const mocks::ChatRequest& r) {
      seen = r.authorization;
      return mocks::ChatReply{200, mocks::canonical_reply(3)};
    });
    VlmConfig cfg = mock_config(server.endpoint());
    cfg.require_api_key = true;
    cfg.api_key_env = "MASKJUDGE_TEST_KEY_UNSET";
    ::unsetenv("MASKJUDGE_TEST_KEY_UNSET");
    try {
      VlmJudge(cfg).request_assessment("p", tiny());
      FAIL("expected credential error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Credential);
      CHECK(std::string(e.what()).find("MASKJUDGE_TEST_KEY_UNSET") != std::string::npos);
    }
    CHECK(server.requests() == 0);
    ::setenv("MASKJUDGE_TEST_KEY", "sk-test-123", 1);
    cfg.api_key_env = "MASKJUDGE_TEST_KEY";
    VlmJudge(cfg).request_assessment("p", tiny());
    CHECK(seen == "Bearer sk-test-123");
    ::unsetenv("MASKJUDGE_TEST_KEY");
  }

  TEST_CASE("one reprompt after an unparseable reply") {
    int calls = 0;
    std::string second_prompt;
    mocks::MockVlmServer server([&](const mocks::ChatRequest& r) {
      if (++calls == 1) return mocks::ChatReply{200, "I think it looks fine."};
      second_prompt = r.prompt;
      return mocks::ChatReply{200, mocks::canonical_reply(5)};
    });
    VlmJudge judge(mock_config(server.endpoint()));
    CHECK(judge.request_assessment("base prompt", tiny()).score == 5);
    CHECK(judge.reprompts() == 1);
    CHECK(second_prompt.find(kReprompt) != std::string::npos);

    mocks::MockVlmServer stubborn([](const mocks::ChatRequest&) { return mocks::ChatReply{200, "no idea"}; });
    VlmJudge judge2(mock_config(stubborn.endpoint()));
    try {
      judge2.request_assessment("p", tiny());
      FAIL("expected parse error");
    } catch (const ParseError& e) {
      CHECK(e.raw() == "no idea");
    }
    CHECK(stubborn.requests() == 2);
  }

  TEST_CASE("rate limiter bounds requests per window") {
    mocks::MockVlmServer server([](const mocks::ChatRequest&) { return mocks::ChatReply{200, mocks::canonical_reply(1)}; });
    VlmConfig cfg = mock_config(server.endpoint());
    cfg.requests_per_minute = 3;
    cfg.rate_window = std::chrono::milliseconds(250);
    VlmJudge judge(cfg);
    for (int i = 0; i < 7; ++i) judge.request_assessment("prompt " + std::to_string(i), tiny());
    const auto ts = server.timestamps();
    REQUIRE(ts.size() == 7);
    for (std::size_t i = 0; i + 3 < ts.size(); ++i) {
      CHECK(ts[i + 3] - ts[i] >= std::chrono::milliseconds(240));
    }
  }

  TEST_CASE("config validation") {
    VlmConfig cfg;
    CHECK_THROWS_AS(cfg.validate(), Error);  // no endpoint
    cfg.endpoint = "ftp://example.com";
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.endpoint = "https://api.example.com/v1";
    CHECK_NOTHROW(cfg.validate());
    cfg.temperature = -1;
    CHECK_THROWS_AS(cfg.validate(), Error);
  }
}
