#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskjudge/metrics.hpp"
#include "maskjudge/runner.hpp"

namespace maskjudge::runner {

struct ReviewOptions {
  std::filesystem::path out_dir;  // holds results.jsonl; annotations.jsonl is written here
  std::vector<ManifestRecord> manifest;
  metrics::Threshold threshold{};
  std::filesystem::path ui_dir;  // static assets served at /, optional
};

/// HTTP annotation service:
///   GET  /api/samples?page=&page_size=&filter=all|unannotated|CH|CL|WH|WL&annotator=
///   GET  /api/samples/{id}
///   GET  /api/images/{id}/original|masked
///   POST /api/annotations
///   GET  /api/report
class ReviewServer {
 public:
  explicit ReviewServer(ReviewOptions options);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// "host:port"; port 0 picks a free port. Returns the bound port. Throws
  /// Io when the address is unavailable.
  int bind(const std::string& bind_addr);
  /// Serves on a background thread until stop().
  void start();
  /// Serves on the calling thread until stop().
  void run();
  void stop();

  /// Body of GET /api/report.
  nlohmann::json report() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Binds and serves until the process is stopped.
void serve_review(ReviewOptions options, const std::string& bind_addr);

}  // namespace maskjudge::runner
