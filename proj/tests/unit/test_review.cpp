#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"
#include "maskjudge/review_server.hpp"
#include "maskjudge/runner.hpp"
#include "mock_servers.hpp"
#include "test_util.hpp"

using namespace maskjudge;
using namespace maskjudge::runner;
using nlohmann::json;

namespace {

struct Fixture {
  testutil::TempDir dir;
  std::vector<ManifestRecord> manifest;
  std::unique_ptr<ReviewServer> server;
  int port = 0;

  Fixture() {
    manifest = load_manifest(testutil::fixtures() / "e2e" / "manifest.jsonl");
    mocks::MockVlmServer judge([](const mocks::ChatRequest& r) {
      double cx = 0, cy = 0;
      mocks::visible_centroid(r.image, cx, cy);
      return mocks::ChatReply{200, mocks::canonical_reply(cx < 32 ? 4 : 1)};
    });
    RunConfig cfg;
    cfg.out_dir = dir / "out";
    cfg.vlm.endpoint = judge.endpoint();
    cfg.vlm.require_api_key = false;
    run_pipeline(manifest, cfg);
    server = std::make_unique<ReviewServer>(ReviewOptions{cfg.out_dir, manifest, metrics::Threshold{}, {}});
    port = server->bind("127.0.0.1:0");
    server->start();
  }

  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

json get_json(httplib::Client& c, const std::string& path) {
  auto res = c.Get(path);
  REQUIRE(res);
  REQUIRE(res->status == 200);
  return json::parse(res->body);
}

int post(httplib::Client& c, const json& body) {
  auto res = c.Post("/api/annotations", body.dump(), "application/json");
  REQUIRE(res);
  return res->status;
}

}  // namespace

TEST_SUITE("review") {
  TEST_CASE("samples, paging and filters") {
    Fixture fx;
    auto c = fx.client();
    auto page = get_json(c, "/api/samples?page_size=8");
    CHECK(page["total"] == 20);
    CHECK(page["pages"] == 3);
    CHECK(page["items"].size() == 8);
    page = get_json(c, "/api/samples?page=3&page_size=8");
    CHECK(page["items"].size() == 4);
    const auto ch = get_json(c, "/api/samples?filter=CH&page_size=100");
    for (const auto& item : ch["items"]) CHECK(item["quadrant"] == "CH");
    CHECK(c.Get("/api/samples?filter=XX")->status == 400);
    CHECK(c.Get("/api/samples?page=0")->status == 400);
  }

  TEST_CASE("sample detail and images") {
    Fixture fx;
    auto c = fx.client();
    const auto s = get_json(c, "/api/samples/s01");
    CHECK(s["assessment"]["score"].is_number_integer());
    CHECK(s["images"]["masked"] == "/api/images/s01/masked");
    auto masked = c.Get("/api/images/s01/masked");
    REQUIRE(masked);
    CHECK(masked->status == 200);
    CHECK(masked->get_header_value("Content-Type") == "image/png");
    const ResultStore store(fx.dir / "out");
    const auto row = store.latest_for_sample("s01");
    CHECK(masked->body == testutil::read_file(fx.dir / "out" / row->masked_image_path));
    CHECK(c.Get("/api/images/s01/original")->status == 200);
    CHECK(c.Get("/api/samples/nope")->status == 404);
    CHECK(c.Get("/")->status == 200);
  }

  TEST_CASE("annotations update the report") {
    Fixture fx;
    auto c = fx.client();
    auto report = get_json(c, "/api/report");
    CHECK(report["pc"].is_null());
    CHECK_FALSE(report["pc_error"].is_null());
    CHECK(report["ar"].is_null());
    CHECK(report["matrix"]["n"] == 20);

    CHECK(post(c, {{"sample_id", "s01"}, {"annotator_id", "ann"}, {"human_score", 9}, {"vlm_text_accepted", true}}) == 400);
    auto bad = c.Post("/api/annotations", R"({"sample_id": "s01"})", "application/json");
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body)["fields"].size() >= 3);
    CHECK(post(c, {{"sample_id", "zzz"}, {"annotator_id", "ann"}, {"human_score", 3}, {"vlm_text_accepted", true}}) == 400);

    CHECK(post(c, {{"sample_id", "s06"}, {"annotator_id", "ann"}, {"human_score", 2}, {"vlm_text_accepted", true}}) == 201);
    CHECK(post(c, {{"sample_id", "s06"}, {"annotator_id", "bo"}, {"human_score", 4}, {"vlm_text_accepted", false}}) == 201);
    CHECK(post(c, {{"sample_id", "s09"}, {"annotator_id", "ann"}, {"human_score", 0}, {"vlm_text_accepted", true}}) == 201);
    report = get_json(c, "/api/report");
    CHECK(report["pc_pairs"] == 2);
    CHECK(report["ar_accepted"] == 2);
    CHECK(report["ar_total"] == 3);
    CHECK(report["ar"].get<double>() == doctest::Approx(200.0 / 3.0));

    const auto detail = get_json(c, "/api/samples/s06");
    CHECK(detail["annotations"].size() == 2);
    const auto unannotated = get_json(c, "/api/samples?filter=unannotated&annotator=ann&page_size=100");
    CHECK(unannotated["total"] == 18);

    // PC pairs the judge score with the mean human score (3.0 for s06).
    const ResultStore store(fx.dir / "out");
    const std::vector<double> vlm{static_cast<double>(store.latest_for_sample("s06")->score),
                                  static_cast<double>(store.latest_for_sample("s09")->score)};
    const std::vector<double> human{3.0, 0.0};
    REQUIRE(vlm[0] != vlm[1]);
    CHECK(report["pc"].get<double>() == doctest::Approx(static_cast<double>(testutil::oracle_pearson(vlm, human))));
    CHECK(std::filesystem::exists(fx.dir / "out" / "annotations.jsonl"));
  }

  TEST_CASE("busy port is a startup error") {
    Fixture fx;
    ReviewServer second(ReviewOptions{fx.dir / "out", fx.manifest, metrics::Threshold{}, {}});
    try {
      second.bind("127.0.0.1:" + std::to_string(fx.port));
      FAIL("expected bind failure");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Io);
    }
  }
}
