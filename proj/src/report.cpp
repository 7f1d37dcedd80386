#include <cstdio>

#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"
#include "maskjudge/runner.hpp"

namespace maskjudge::runner {

using metrics::ConfusionMatrix;
using metrics::Quadrant;

std::vector<metrics::SampleResult> to_sample_results(const std::vector<ResultRow>& rows) {
  std::vector<metrics::SampleResult> out;
  out.reserve(rows.size());
  for (const ResultRow& r : rows) {
    out.push_back(metrics::SampleResult::make(r.sample_id, r.predicted_label, r.true_label, r.score));
  }
  return out;
}

std::string report_csv(const std::string& model_label, const ConfusionMatrix& m) {
  char avg[32];
  std::snprintf(avg, sizeof(avg), "%.2f", m.avg_score);
  return "Model,CH,CL,WH,WL,Avg\n" + model_label + "," + metrics::format_pct(m.ch_pct) + "," +
         metrics::format_pct(m.cl_pct) + "," + metrics::format_pct(m.wh_pct) + "," +
         metrics::format_pct(m.wl_pct) + "," + avg + "\n";
}

std::string report_summary(const std::string& model_label, const ConfusionMatrix& m,
                           const metrics::Threshold& t, std::size_t failed) {
  char line[256];
  std::string out = "Model: " + model_label + "\n";
  out += "Samples: " + std::to_string(m.n) + " scored";
  if (failed) out += ", " + std::to_string(failed) + " failed (excluded)";
  out += "\nHigh score threshold: >= " + std::to_string(t.min_high_score) + "\n\n";
  for (Quadrant q : metrics::kQuadrants) {
    std::snprintf(line, sizeof(line), "  %s  %-24s %5s%%  (%zu)\n", std::string(metrics::quadrant_code(q)).c_str(),
                  std::string(metrics::stage_name(q)).c_str(), metrics::format_pct(m.pct(q)).c_str(),
                  m.count(q));
    out += line;
  }
  std::snprintf(line, sizeof(line), "\nAverage attention score: %.2f\nerr: %s%%\n", m.avg_score,
                metrics::format_pct(m.err_pct).c_str());
  out += line;
  const Quadrant dom = m.dominant();
  out += "Dominant stage: " + std::string(metrics::stage_name(dom)) + " (" +
         std::string(metrics::quadrant_code(dom)) + ", " + metrics::format_pct(m.pct(dom)) + "%)\n";
  return out;
}

nlohmann::json report_json(const std::string& model_label, const std::vector<ResultRow>& rows,
                           const std::vector<ResultRow>& failures, const metrics::Threshold& t) {
  const auto results = to_sample_results(rows);
  const ConfusionMatrix m = metrics::build_confusion_matrix(results, t);
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Quadrant q = metrics::classify_quadrant(results[i], t);
    samples.push_back({{"sample_id", rows[i].sample_id},
                       {"predicted_label", rows[i].predicted_label},
                       {"true_label", rows[i].true_label},
                       {"correct", results[i].correct},
                       {"score", rows[i].score},
                       {"quadrant", metrics::quadrant_code(q)},
                       {"stage", metrics::stage_name(q)},
                       {"alpha", rows[i].alpha},
                       {"beta", rows[i].beta},
                       {"model_name", rows[i].model_name},
                       {"masked_image_path", rows[i].masked_image_path}});
  }
  nlohmann::json failed = nlohmann::json::array();
  for (const ResultRow& f : failures) failed.push_back({{"sample_id", f.sample_id}, {"error", f.error}});
  const Quadrant dom = m.dominant();
  return {{"model", model_label},
          {"threshold", t.min_high_score},
          {"matrix",
           {{"n", m.n},
            {"ch", m.ch},
            {"cl", m.cl},
            {"wh", m.wh},
            {"wl", m.wl},
            {"ch_pct", m.ch_pct},
            {"cl_pct", m.cl_pct},
            {"wh_pct", m.wh_pct},
            {"wl_pct", m.wl_pct},
            {"avg_score", m.avg_score},
            {"err_pct", m.err_pct}}},
          {"dominant", {{"quadrant", metrics::quadrant_code(dom)}, {"stage", metrics::stage_name(dom)}}},
          {"samples", samples},
          {"failed", failed}};
}

ReportFiles write_report(const std::filesystem::path& dir, const std::string& model_label,
                         const std::vector<ResultRow>& rows, const std::vector<ResultRow>& failures,
                         const metrics::Threshold& threshold) {
  if (rows.empty()) throw Error(ErrorKind::EmptySet, "no finalized results to report");
  ReportFiles files;
  files.matrix = metrics::build_confusion_matrix(to_sample_results(rows), threshold);
  files.json = dir / "report.json";
  files.csv = dir / "report.csv";
  files.summary = dir / "summary.txt";
  io::write_atomic(files.json, report_json(model_label, rows, failures, threshold).dump(2) + "\n");
  io::write_atomic(files.csv, report_csv(model_label, files.matrix));
  io::write_atomic(files.summary, report_summary(model_label, files.matrix, threshold, failures.size()));
  return files;
}

ReportFiles emit_report(const ResultStore& store, const metrics::Threshold& threshold,
                        const std::string& model_label, const std::optional<MaskParams>& params,
                        const std::optional<std::string>& model_name) {
  const std::vector<ResultRow> rows = store.select(params, model_name);
  std::vector<ResultRow> failures;
  for (ResultRow& f : store.failures()) {
    if (params && (f.alpha != params->alpha || f.beta != params->beta)) continue;
    if (model_name && f.model_name != *model_name) continue;
    failures.push_back(std::move(f));
  }
  return write_report(store.dir(), model_label, rows, failures, threshold);
}

}  // namespace maskjudge::runner
