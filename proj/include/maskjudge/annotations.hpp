#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "maskjudge/runner.hpp"

namespace maskjudge::runner {

struct AnnotationRecord {
  std::string sample_id;
  std::string annotator_id;
  int human_score = 0;
  bool vlm_text_accepted = false;
  std::string created_at;

  nlohmann::json to_json() const;
};

/// Validates a POSTed annotation body. Throws Validation listing every bad
/// field ("human_score: must be an integer in 0-5", ...).
AnnotationRecord parse_annotation(const nlohmann::json& body);

/// Durable annotation log (`annotations.jsonl`). One record per
/// (sample_id, annotator_id); the last write wins. Thread-safe.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::filesystem::path path);

  void add(AnnotationRecord record);
  std::vector<AnnotationRecord> records() const;
  std::vector<AnnotationRecord> for_sample(const std::string& sample_id) const;
  /// Per-sample arithmetic mean over annotators.
  HumanScores mean_scores() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, AnnotationRecord> latest_;
  std::ofstream out_;
};

}  // namespace maskjudge::runner
