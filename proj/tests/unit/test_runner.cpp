#include <doctest.h>

#include <json.hpp>

#include <fstream>

#include "maskjudge/annotations.hpp"
#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"
#include "maskjudge/png_io.hpp"
#include "maskjudge/runner.hpp"
#include "mock_servers.hpp"
#include "test_util.hpp"

using namespace maskjudge;
using namespace maskjudge::runner;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected maskjudge::Error");
  return ErrorKind::Io;
}

RunConfig mock_run_config(const std::filesystem::path& out, const std::string& endpoint) {
  RunConfig cfg;
  cfg.out_dir = out;
  cfg.vlm.endpoint = endpoint;
  cfg.vlm.require_api_key = false;
  cfg.vlm.backoff_base = std::chrono::milliseconds(1);
  cfg.vlm.max_retries = 1;
  cfg.vlm.requests_per_minute = 100000;
  return cfg;
}

mocks::MockVlmServer::Handler e2e_scorer() {
  const auto doc = nlohmann::json::parse(io::read_text(testutil::fixtures() / "e2e" / "expected.json"));
  const auto b = doc["box"];
  return mocks::centroid_scorer({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
}

ResultRow ok_row(const std::string& id, int score, double alpha = 25, double beta = 0.4) {
  ResultRow r;
  r.sample_id = id;
  r.predicted_label = "cat";
  r.true_label = "cat";
  r.alpha = alpha;
  r.beta = beta;
  r.model_name = "m";
  r.score = score;
  r.evaluation = "e";
  r.justification = "j";
  r.correct = true;
  r.ok = true;
  return r;
}

}  // namespace

TEST_SUITE("runner") {
  TEST_CASE("manifest parsing") {
    const std::string three =
        R"({"sample_id":"a","image_path":"i/a.png","map_path":"m/a.png","predicted_label":"cat","true_label":"cat"})"
        "\n"
        R"({"sample_id":"b","image_path":"/abs/b.png","predicted_label":"dog","true_label":"cat"})"
        "\n\n"
        R"({"sample_id":"c","image_path":"i/c.png","map_path":"m/c.png","predicted_label":"x","true_label":"y"})"
        "\n";
    const auto recs = parse_manifest(three, "/base");
    REQUIRE(recs.size() == 3);
    CHECK(recs[0].image_path == std::filesystem::path("/base/i/a.png"));
    CHECK(recs[1].image_path == std::filesystem::path("/abs/b.png"));
    CHECK(recs[1].map_path.empty());

    try {
      parse_manifest(R"({"sample_id":"a","image_path":"x","predicted_label":"p","true_label":"t"})"
                     "\n"
                     R"({"sample_id":"a","image_path":"y","predicted_label":"p","true_label":"t"})");
      FAIL("expected duplicate error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Validation);
      CHECK(std::string(e.what()).find("'a'") != std::string::npos);
    }
    try {
      parse_manifest(R"({"sample_id":"a","image_path":"x","predicted_label":"p","true_label":"t"})"
                     "\n"
                     R"({"sample_id":"b","image_path":"y","predicted_label":"p"})");
      FAIL("expected missing-field error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
      CHECK(std::string(e.what()).find("true_label") != std::string::npos);
    }
    CHECK(kind_of([] { load_manifest("/nonexistent/manifest.jsonl"); }) == ErrorKind::NotFound);
    CHECK(kind_of([] { parse_manifest("{not json"); }) == ErrorKind::Validation);
  }

  TEST_CASE("config file") {
    const auto kv = KeyValueConfig::parse(
        "# audit settings\nalpha = 15\nbeta = 0.6   # midpoint\n\n[vlm]\nendpoint = \"http://localhost:9/v1\"\n"
        "model = \"judge-x\"\n");
    RunConfig cfg;
    apply_config(kv, cfg);
    CHECK(cfg.mask_params.alpha == 15);
    CHECK(cfg.mask_params.beta == 0.6);
    CHECK(cfg.vlm.endpoint == "http://localhost:9/v1");
    CHECK(cfg.vlm.model_name == "judge-x");
    CHECK(cfg.threshold.min_high_score == 3);
    CHECK(kind_of([] {
            RunConfig c;
            apply_config(KeyValueConfig::parse("alpah = 3"), c);
          }) == ErrorKind::Validation);
    CHECK(kind_of([] {
            RunConfig c;
            apply_config(KeyValueConfig::parse("alpha = fast"), c);
          }) == ErrorKind::Validation);
    CHECK(kind_of([] { KeyValueConfig::parse("[vlm\nx=1"); }) == ErrorKind::Validation);
  }

  TEST_CASE("result store keeps finalized rows and skips torn lines") {
    testutil::TempDir dir;
    {
      ResultStore store(dir.path());
      store.append(ok_row("a", 4));
      ResultRow bad = ok_row("b", 0);
      bad.ok = false;
      bad.error = "timeout";
      store.append(bad);
    }
    {
      std::ofstream torn(dir / "results.jsonl", std::ios::app | std::ios::binary);
      torn << R"({"sample_id":"c","alpha":25,"beta":0.4,"model_na)";
    }
    ResultStore store(dir.path());
    CHECK(store.finalized().size() == 1);
    CHECK(store.failures().size() == 1);
    CHECK(store.is_finalized(result_key("a", {25, 0.4}, "m")));
    CHECK_FALSE(store.is_finalized(result_key("b", {25, 0.4}, "m")));
    store.append(ok_row("b", 2));
    store.append(ok_row("a", 5));
    ResultStore again(dir.path());
    const auto rows = again.finalized();
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].sample_id == "a");
    CHECK(rows[0].score == 5);
    CHECK(rows[1].score == 2);
    CHECK(again.failures().empty());
    const std::string text = testutil::read_file(dir / "results.jsonl");
    std::size_t lines = 0;
    for (char c : text) lines += c == '\n';
    CHECK(lines == 5);  // 4 rows plus the terminated torn fragment
  }

  TEST_CASE("result rows serialize the documented fields") {
    ResultRow r = ok_row("a", 3);
    r.masked_image_path = "masked/a.png";
    const auto j = r.to_json();
    for (const char* k : {"sample_id", "alpha", "beta", "model_name", "score", "evaluation", "justification",
                          "correct", "masked_image_path", "status"}) {
      CHECK(j.contains(k));
    }
    CHECK(j["status"] == "ok");
    CHECK(ResultRow::from_json(j).key() == r.key());
  }

  TEST_CASE("pipeline matches the hand-classified quadrants and resumes") {
    mocks::MockVlmServer server(e2e_scorer());
    testutil::TempDir dir;
    const auto manifest = load_manifest(testutil::fixtures() / "e2e" / "manifest.jsonl");
    RunConfig cfg = mock_run_config(dir / "out", server.endpoint());
    const RunSummary s = run_pipeline(manifest, cfg);
    CHECK(s.new_samples == 20);
    CHECK(s.failed == 0);
    CHECK(server.requests() == 20);
    REQUIRE(s.matrix);
    const auto expected = nlohmann::json::parse(io::read_text(testutil::fixtures() / "e2e" / "expected.json"));
    CHECK(s.matrix->ch == expected["counts"]["CH"].get<std::size_t>());
    CHECK(s.matrix->cl == expected["counts"]["CL"].get<std::size_t>());
    CHECK(s.matrix->wh == expected["counts"]["WH"].get<std::size_t>());
    CHECK(s.matrix->wl == expected["counts"]["WL"].get<std::size_t>());
    const auto report = nlohmann::json::parse(io::read_text(dir / "out" / "report.json"));
    for (const auto& row : report["samples"]) {
      CHECK(row["quadrant"] == expected["quadrants"][row["sample_id"].get<std::string>()]);
    }
    CHECK(std::filesystem::exists(dir / "out" / "report.csv"));
    CHECK(std::filesystem::exists(dir / "out" / "summary.txt"));
    CHECK(std::filesystem::exists(dir / "out" / "run_meta.json"));

    // Masked artifacts never exceed their source.
    ResultStore store(dir / "out");
    for (const auto& row : store.finalized()) {
      const auto masked = png::decode_raster(io::read_bytes(dir / "out" / row.masked_image_path));
      const auto rec = std::find_if(manifest.begin(), manifest.end(),
                                    [&](const ManifestRecord& m) { return m.sample_id == row.sample_id; });
      const auto source = png::decode_raster(io::read_bytes(rec->image_path));
      REQUIRE(masked.samples.size() == source.samples.size());
      for (std::size_t i = 0; i < source.samples.size(); ++i) REQUIRE(masked.samples[i] <= source.samples[i]);
    }

    const RunSummary again = run_pipeline(manifest, cfg);
    CHECK(again.new_samples == 0);
    CHECK(again.skipped == 20);
    CHECK(again.network_requests == 0);
    CHECK(server.requests() == 20);
  }

  TEST_CASE("empty manifest writes nothing") {
    testutil::TempDir dir;
    RunConfig cfg = mock_run_config(dir / "out", "http://127.0.0.1:9");
    CHECK(kind_of([&] { run_pipeline({}, cfg); }) == ErrorKind::EmptySet);
    CHECK_FALSE(std::filesystem::exists(dir / "out"));
  }

  TEST_CASE("missing inputs are reported before any work") {
    testutil::TempDir dir;
    auto manifest = load_manifest(testutil::fixtures() / "e2e" / "manifest.jsonl");
    manifest[3].map_path = dir / "nope.png";
    RunConfig cfg = mock_run_config(dir / "out", "http://127.0.0.1:9");
    try {
      run_pipeline(manifest, cfg);
      FAIL("expected NotFound");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NotFound);
      CHECK(std::string(e.what()).find("map not found") != std::string::npos);
    }
    CHECK_FALSE(std::filesystem::exists(dir / "out" / "results.jsonl"));
  }

  TEST_CASE("failure policy keeps partial results") {
    int calls = 0;
    std::mutex m;
    mocks::MockVlmServer server([&](const mocks::ChatRequest&) {
      std::lock_guard lock(m);
      return ++calls % 3 == 0 ? mocks::ChatReply{200, mocks::canonical_reply(4)} : mocks::ChatReply{400, "bad request"};
    });
    testutil::TempDir dir;
    const auto manifest = load_manifest(testutil::fixtures() / "e2e" / "manifest.jsonl");
    RunConfig cfg = mock_run_config(dir / "out", server.endpoint());
    cfg.concurrency = 1;
    try {
      run_pipeline(manifest, cfg);
      FAIL("expected RunFailed");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::RunFailed);
      CHECK(std::string(e.what()).find("HTTP 400") != std::string::npos);
    }
    ResultStore store(dir / "out");
    CHECK(store.finalized().size() > 0);
    CHECK(store.failures().size() > 10);
    const auto report = nlohmann::json::parse(io::read_text(dir / "out" / "report.json"));
    CHECK(report["failed"].size() == store.failures().size());
  }

  TEST_CASE("reports name the dominant stage") {
    testutil::TempDir dir;
    std::vector<ResultRow> rows;
    for (int i = 0; i < 5; ++i) {
      ResultRow r = ok_row("w" + std::to_string(i), 5);
      r.true_label = "dog";
      r.correct = false;
      rows.push_back(r);
    }
    rows.push_back(ok_row("c", 5));
    const ReportFiles files = write_report(dir.path(), "net", rows, {}, metrics::Threshold{});
    const std::string summary = io::read_text(files.summary);
    CHECK(summary.find("Dominant stage: Attend to wrong object") != std::string::npos);
    const std::string once = io::read_text(files.json);
    write_report(dir.path(), "net", rows, {}, metrics::Threshold{});
    CHECK(io::read_text(files.json) == once);
    ResultStore empty(dir / "empty");
    CHECK(kind_of([&] { emit_report(empty, metrics::Threshold{}, "net"); }) == ErrorKind::EmptySet);
  }

  TEST_CASE("grid parsing") {
    const auto g = default_grid();
    REQUIRE(g.size() == 3);
    CHECK(g[0] == MaskParams{25, 0.4});
    CHECK(g[1] == MaskParams{15, 0.6});
    CHECK(g[2] == MaskParams{25, 0.7});
    const auto one = parse_grid("10:0.5");
    REQUIRE(one.size() == 1);
    CHECK(one[0] == MaskParams{10, 0.5});
    CHECK(parse_grid("25:0.4, 15:0.6").size() == 2);
    CHECK(kind_of([] { parse_grid("10"); }) == ErrorKind::Validation);
    CHECK(kind_of([] { parse_grid("10:2"); }) == ErrorKind::Validation);
  }

  TEST_CASE("human score files") {
    testutil::TempDir dir;
    testutil::write_file(dir / "h.csv", "sample_id,human_score\na,2\nb,5\na,4\n");
    const HumanScores h = load_human_scores_csv(dir / "h.csv");
    CHECK(h.at("a") == 3.0);
    CHECK(h.at("b") == 5.0);
    testutil::write_file(dir / "bad.csv", "id,score\na,2\n");
    CHECK(kind_of([&] { load_human_scores_csv(dir / "bad.csv"); }) == ErrorKind::Validation);
    testutil::write_file(dir / "range.csv", "sample_id,human_score\na,9\n");
    CHECK(kind_of([&] { load_human_scores_csv(dir / "range.csv"); }) == ErrorKind::Range);
  }

  TEST_CASE("sweep with echo and inverse judges") {
    const auto fx = testutil::fixtures() / "sweep";
    const auto manifest = load_manifest(fx / "manifest.jsonl");
    const HumanScores human = load_human_scores_csv(fx / "human_scores.csv");
    std::map<std::string, int> echo, inverse;
    for (const auto& rec : manifest) {
      const int h = static_cast<int>(human.at(rec.sample_id));
      echo[rec.predicted_label] = h;
      inverse[rec.predicted_label] = 5 - h;
    }
    mocks::MockVlmServer echo_server(mocks::label_scorer(echo));
    mocks::MockVlmServer inverse_server(mocks::label_scorer(inverse));
    testutil::TempDir dir;
    const auto grid = parse_grid("25:0.4");
    auto rows = run_sweep(manifest, mock_run_config(dir / "echo", echo_server.endpoint()), grid, human);
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].pc);
    CHECK(*rows[0].pc == doctest::Approx(1.0).epsilon(1e-12));
    rows = run_sweep(manifest, mock_run_config(dir / "inverse", inverse_server.endpoint()), grid, human);
    REQUIRE(rows[0].pc);
    CHECK(*rows[0].pc == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::filesystem::exists(dir / "inverse" / "sweep.csv"));
  }

  TEST_CASE("sweep refuses samples without human scores") {
    const auto fx = testutil::fixtures() / "sweep";
    const auto manifest = load_manifest(fx / "manifest.jsonl");
    HumanScores human = load_human_scores_csv(fx / "human_scores.csv");
    human.erase("w03");
    human.erase("w07");
    testutil::TempDir dir;
    try {
      run_sweep(manifest, mock_run_config(dir.path(), "http://127.0.0.1:9"), default_grid(), human);
      FAIL("expected precondition error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Precondition);
      CHECK(std::string(e.what()).find("w03") != std::string::npos);
      CHECK(std::string(e.what()).find("w07") != std::string::npos);
    }
  }

  TEST_CASE("annotation store: last write wins and means across annotators") {
    testutil::TempDir dir;
    {
      AnnotationStore store(dir / "annotations.jsonl");
      store.add(parse_annotation({{"sample_id", "s1"}, {"annotator_id", "ann"}, {"human_score", 1}, {"vlm_text_accepted", false}}));
      store.add(parse_annotation({{"sample_id", "s1"}, {"annotator_id", "ann"}, {"human_score", 2}, {"vlm_text_accepted", true}}));
      store.add(parse_annotation({{"sample_id", "s1"}, {"annotator_id", "bo"}, {"human_score", 4}, {"vlm_text_accepted", true}}));
    }
    AnnotationStore store(dir / "annotations.jsonl");
    CHECK(store.records().size() == 2);
    CHECK(store.mean_scores().at("s1") == 3.0);
    try {
      parse_annotation({{"sample_id", "s1"}, {"annotator_id", ""}, {"human_score", 9}});
      FAIL("expected validation error");
    } catch (const Error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("human_score") != std::string::npos);
      CHECK(msg.find("annotator_id") != std::string::npos);
      CHECK(msg.find("vlm_text_accepted") != std::string::npos);
    }
  }
}
