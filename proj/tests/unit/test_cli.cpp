#include <doctest.h>

#include <json.hpp>

#include "maskjudge/io.hpp"
#include "maskjudge/png_io.hpp"
#include "mock_servers.hpp"
#include "test_util.hpp"

using testutil::run_command;
using testutil::shell_quote;

namespace {

std::string cli(const std::string& args) { return shell_quote(testutil::cli_path()) + " " + args; }

std::string fixture(const std::string& rel) { return shell_quote((testutil::fixtures() / rel).string()); }

mocks::MockVlmServer::Handler always(int score) {
  return [score](const mocks::ChatRequest&) { return mocks::ChatReply{200, mocks::canonical_reply(score)}; };
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    REQUIRE_FALSE(testutil::cli_path().empty());
    CHECK(run_command(cli("--help")).exit_code == 0);
    for (const char* sub : {"mask", "saliency", "judge", "run", "sweep", "report", "serve"}) {
      CAPTURE(sub);
      CHECK(run_command(cli(std::string(sub) + " --help")).exit_code == 0);
    }
    CHECK(run_command(cli("")).exit_code == 2);
    CHECK(run_command(cli("mask --bogus")).exit_code == 2);
    CHECK(run_command(cli("frobnicate")).exit_code == 2);
  }

  TEST_CASE("mask uses and echoes defaults") {
    testutil::TempDir dir;
    const auto out = dir / "masked.png";
    const auto r = run_command(cli("mask --image " + fixture("golden/input.png") + " --map " +
                                   fixture("golden/map.png") + " --out " + shell_quote(out.string())));
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("alpha=25 beta=0.4") != std::string::npos);
    const auto img = maskjudge::png::decode_raster(maskjudge::io::read_bytes(out));
    CHECK(img.width == 64);
    CHECK(img.height == 64);
    CHECK(maskjudge::io::read_bytes(out) ==
          maskjudge::io::read_bytes(testutil::fixtures() / "golden" / "expected_masked.png"));

    const auto missing = run_command(cli("mask --image " + fixture("golden/input.png") + " --map " +
                                         shell_quote((dir / "none.png").string()) + " --out " +
                                         shell_quote(out.string())));
    CHECK(missing.exit_code == 2);
    CHECK(missing.output.find("map not found") != std::string::npos);
    CHECK(run_command(cli("mask --image " + fixture("golden/input.png") + " --map " + fixture("golden/map.png") +
                          " --out " + shell_quote(out.string()) + " --beta 3"))
              .exit_code == 2);
  }

  TEST_CASE("run, refuse to clobber, resume") {
    mocks::MockVlmServer server(always(4));
    testutil::TempDir dir;
    const std::string base = "run --manifest " + fixture("e2e/manifest.jsonl") + " --out-dir " +
                             shell_quote((dir / "out").string()) + " --mock-vlm " + server.endpoint();
    const auto first = run_command(cli(base));
    CHECK(first.exit_code == 0);
    CHECK(first.output.find("20 new samples") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "out" / "report.json"));
    CHECK(std::filesystem::exists(dir / "out" / "run_meta.json"));
    CHECK(run_command(cli(base)).exit_code == 2);
    const auto resumed = run_command(cli(base + " --resume"));
    CHECK(resumed.exit_code == 0);
    CHECK(resumed.output.find("0 new samples") != std::string::npos);
    CHECK(server.requests() == 20);

    const auto rep = run_command(cli("report --out-dir " + shell_quote((dir / "out").string()) + " --model-label net"));
    CHECK(rep.exit_code == 0);
    CHECK(rep.output.find("Dominant stage") != std::string::npos);
    CHECK(maskjudge::io::read_text(dir / "out" / "report.csv").find("net,") != std::string::npos);
  }

  TEST_CASE("flags override the config file, which overrides defaults") {
    mocks::MockVlmServer server(always(3));
    testutil::TempDir dir;
    testutil::write_file(dir / "cfg.toml", "alpha = 15\nbeta = 0.6\nthreshold = 4\n[vlm]\nmodel = \"judge-7\"\n");
    const auto r = run_command(cli("run --manifest " + fixture("e2e/manifest.jsonl") + " --config " +
                                   shell_quote((dir / "cfg.toml").string()) + " --alpha 10 --out-dir " +
                                   shell_quote((dir / "out").string()) + " --mock-vlm " + server.endpoint()));
    REQUIRE(r.exit_code == 0);
    const auto meta = nlohmann::json::parse(maskjudge::io::read_text(dir / "out" / "run_meta.json"));
    CHECK(meta["config"]["alpha"] == 10.0);
    CHECK(meta["config"]["beta"] == 0.6);
    CHECK(meta["config"]["threshold"] == 4);
    CHECK(meta["config"]["vlm"]["model"] == "judge-7");
    CHECK(meta.contains("started_at"));
    CHECK(meta.contains("version"));
    testutil::write_file(dir / "typo.toml", "alhpa = 15\n");
    CHECK(run_command(cli("run --manifest " + fixture("e2e/manifest.jsonl") + " --config " +
                          shell_quote((dir / "typo.toml").string()) + " --mock-vlm " + server.endpoint()))
              .exit_code == 2);
  }

  TEST_CASE("majority failure exits 1 and keeps partial results") {
    std::atomic<int> calls{0};
    mocks::MockVlmServer server([&calls](const mocks::ChatRequest&) {
      return calls++ < 5 ? mocks::ChatReply{200, mocks::canonical_reply(4)} : mocks::ChatReply{400, "nope"};
    });
    testutil::TempDir dir;
    const auto r = run_command(cli("run --concurrency 1 --manifest " + fixture("e2e/manifest.jsonl") +
                                   " --out-dir " + shell_quote((dir / "out").string()) + " --mock-vlm " +
                                   server.endpoint()));
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("samples failed") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "out" / "results.jsonl"));
    CHECK(std::filesystem::exists(dir / "out" / "report.json"));
  }

  TEST_CASE("sweep grid flag and missing human scores") {
    mocks::MockVlmServer server(always(2));
    testutil::TempDir dir;
    testutil::write_file(dir / "h.csv", "sample_id,human_score\nw00,1\nw01,2\nw02,3\nw03,4\nw04,5\n");
    const auto missing = run_command(cli("sweep --manifest " + fixture("sweep/manifest.jsonl") + " --human-scores " +
                                         shell_quote((dir / "h.csv").string()) + " --out-dir " +
                                         shell_quote((dir / "out").string()) + " --mock-vlm " + server.endpoint()));
    CHECK(missing.exit_code == 2);
    CHECK(missing.output.find("w05") != std::string::npos);
    CHECK(missing.output.find("w09") != std::string::npos);

    const auto one = run_command(cli("sweep --grid 10:0.5 --manifest " + fixture("sweep/manifest.jsonl") +
                                     " --human-scores " + fixture("sweep/human_scores.csv") + " --out-dir " +
                                     shell_quote((dir / "out").string()) + " --mock-vlm " + server.endpoint()));
    CHECK(one.exit_code == 0);
    const std::string table = maskjudge::io::read_text(dir / "out" / "sweep.csv");
    CHECK(table.rfind("alpha,beta,pc,n,note\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : table) lines += c == '\n';
    CHECK(lines == 2);
    CHECK(table.find("10,0.5,") != std::string::npos);
  }

  TEST_CASE("saliency and judge subcommands") {
    mocks::MockPredictionServer backend("target");
    mocks::MockVlmServer judge(always(5));
    testutil::TempDir dir;
    const auto map = dir / "map.png";
    const auto sal = run_command(cli("saliency --image " + fixture("golden/input.png") + " --label target --backend " +
                                     backend.endpoint() + " --masks 50 --out " + shell_quote(map.string())));
    CHECK(sal.exit_code == 0);
    CHECK(backend.requests() == 50);
    CHECK(std::filesystem::exists(map));
    const auto j = run_command(cli("judge --json --image " + fixture("golden/expected_masked.png") +
                                   " --label dog --mock-vlm " + judge.endpoint()));
    CHECK(j.exit_code == 0);
    CHECK(j.output.find("\"score\": 5") != std::string::npos);
    testutil::write_file(dir / "live.toml", "[vlm]\nendpoint = \"" + judge.endpoint() + "\"\n");
    const auto nokey = run_command("env -u VLM_API_KEY " + cli("judge --image " + fixture("golden/expected_masked.png") +
                                                              " --label dog --config " +
                                                              shell_quote((dir / "live.toml").string())));
    CHECK(nokey.exit_code == 2);
    CHECK(nokey.output.find("VLM_API_KEY") != std::string::npos);
    CHECK(judge.requests() == 1);
  }
}
