#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "maskjudge/config_file.hpp"
#include "maskjudge/image.hpp"
#include "maskjudge/judge.hpp"
#include "maskjudge/metrics.hpp"
#include "maskjudge/occlusion.hpp"

namespace maskjudge::runner {

std::string_view version() noexcept;

// ---------------------------------------------------------------- manifest

struct ManifestRecord {
  std::string sample_id;
  std::filesystem::path image_path;
  std::filesystem::path map_path;  // empty: generate by occlusion
  std::string predicted_label;
  std::string true_label;
  /// Heatmap overlay sent instead of the masked image when the heatmap
  /// prompt variant is selected.
  std::filesystem::path overlay_path;
};

/// Reads a JSONL manifest. Relative paths resolve against the manifest's
/// directory. Throws Validation naming the line for missing fields and the
/// ids for duplicates.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);
std::vector<ManifestRecord> parse_manifest(std::string_view jsonl,
                                           const std::filesystem::path& base_dir = {});

// ------------------------------------------------------------------ config

struct RunConfig {
  MaskParams mask_params{};
  metrics::Threshold threshold{};
  judge::VlmConfig vlm{};
  /// "masked", "heatmap", or a path to a custom template file.
  std::string prompt_variant = "masked";
  std::size_t concurrency = 4;
  std::filesystem::path out_dir = "maskjudge-out";
  /// Name of the audited vision model, used as the report row label.
  std::string model_label = "model";
  double max_failure_fraction = 0.5;
  /// Prediction backend used when a record has no map_path.
  std::string occlusion_backend;
  OcclusionConfig occlusion{};

  void validate() const;
  judge::PromptTemplate prompt_template() const;
  nlohmann::json to_json() const;
};

/// Applies recognized keys on top of `cfg`. Unknown keys are rejected.
void apply_config(const KeyValueConfig& file, RunConfig& cfg);

// ------------------------------------------------------------ result store

struct ResultRow {
  std::string sample_id;
  std::string predicted_label;
  std::string true_label;
  double alpha = 0;
  double beta = 0;
  std::string model_name;
  int score = 0;
  std::string evaluation;
  std::string justification;
  bool correct = false;
  std::string masked_image_path;  // relative to the store directory
  bool ok = false;
  std::string error;

  std::string key() const;
  nlohmann::json to_json() const;
  static ResultRow from_json(const nlohmann::json& j);
};

std::string result_key(std::string_view sample_id, const MaskParams& params, std::string_view model_name);

/// Append-only JSONL log (`results.jsonl`). A line is final once its
/// newline is written; torn trailing lines are ignored on reload. For each
/// key the latest ok row wins; failed rows only surface when no ok row
/// exists for the key.
class ResultStore {
 public:
  explicit ResultStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path log_path() const { return dir_ / "results.jsonl"; }

  bool is_finalized(const std::string& key) const;
  void append(const ResultRow& row);

  /// Finalized rows in sample_id order.
  std::vector<ResultRow> finalized() const;
  /// Latest failure for keys with no ok row, in sample_id order.
  std::vector<ResultRow> failures() const;
  /// Finalized rows, optionally restricted to one parameter set and model;
  /// with several matches per sample the latest wins.
  std::vector<ResultRow> select(const std::optional<MaskParams>& params,
                                const std::optional<std::string>& model_name) const;
  std::optional<ResultRow> latest_for_sample(const std::string& sample_id) const;

  /// Re-reads the log from disk.
  void reload();

 private:
  void ingest(ResultRow row, std::size_t seq);

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::map<std::string, std::pair<std::size_t, ResultRow>> ok_;
  std::map<std::string, std::pair<std::size_t, ResultRow>> failed_;
  std::size_t seq_ = 0;
  std::ofstream out_;
};

// ---------------------------------------------------------------- pipeline

struct RunSummary {
  std::size_t total = 0;
  std::size_t new_samples = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::uint64_t network_requests = 0;
  std::uint64_t cache_hits = 0;
  std::optional<metrics::ConfusionMatrix> matrix;
};

/// Masks, judges and persists every manifest record not yet finalized in
/// cfg.out_dir, then writes reports. Throws EmptySet for an empty manifest
/// and RunFailed when more than cfg.max_failure_fraction of the samples end
/// without a finalized row (results and reports are kept).
RunSummary run_pipeline(const std::vector<ManifestRecord>& manifest, const RunConfig& cfg);

// ------------------------------------------------------------------ report

struct ReportFiles {
  std::filesystem::path json;
  std::filesystem::path csv;
  std::filesystem::path summary;
  metrics::ConfusionMatrix matrix;
};

std::vector<metrics::SampleResult> to_sample_results(const std::vector<ResultRow>& rows);

/// Table-style CSV: header "Model,CH,CL,WH,WL,Avg" and one row.
std::string report_csv(const std::string& model_label, const metrics::ConfusionMatrix& m);
std::string report_summary(const std::string& model_label, const metrics::ConfusionMatrix& m,
                           const metrics::Threshold& t, std::size_t failed);
nlohmann::json report_json(const std::string& model_label, const std::vector<ResultRow>& rows,
                           const std::vector<ResultRow>& failures, const metrics::Threshold& t);

/// Writes report.json, report.csv and summary.txt into `dir`.
ReportFiles write_report(const std::filesystem::path& dir, const std::string& model_label,
                         const std::vector<ResultRow>& rows, const std::vector<ResultRow>& failures,
                         const metrics::Threshold& threshold);

/// write_report over the store's finalized rows, into the store directory.
ReportFiles emit_report(const ResultStore& store, const metrics::Threshold& threshold,
                        const std::string& model_label,
                        const std::optional<MaskParams>& params = std::nullopt,
                        const std::optional<std::string>& model_name = std::nullopt);

// ------------------------------------------------------------------- sweep

/// sample_id -> averaged human score.
using HumanScores = std::map<std::string, double>;

/// CSV with header sample_id,human_score; repeated ids are averaged.
HumanScores load_human_scores_csv(const std::filesystem::path& path);

std::vector<MaskParams> default_grid();
/// "25:0.4,15:0.6" -> two grid points.
std::vector<MaskParams> parse_grid(std::string_view spec);

struct SweepRow {
  MaskParams params;
  std::optional<double> pc;
  std::size_t n = 0;
  std::string note;
};

/// Runs the pipeline once per grid point (each in its own subdirectory of
/// base_cfg.out_dir) and correlates judge scores with human scores. Rows
/// are sorted by PC, highest first. Writes sweep.csv.
std::vector<SweepRow> run_sweep(const std::vector<ManifestRecord>& manifest, const RunConfig& base_cfg,
                                const std::vector<MaskParams>& grid, const HumanScores& human);

std::filesystem::path sweep_dir(const std::filesystem::path& base, const MaskParams& params);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace maskjudge::runner
