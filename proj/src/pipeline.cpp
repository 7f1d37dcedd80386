#include <atomic>
#include <cctype>
#include <charconv>
#include <condition_variable>
#include <deque>
#include <iostream>
#include <set>
#include <thread>

#include "maskjudge/codec.hpp"
#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"
#include "maskjudge/png_io.hpp"
#include "maskjudge/runner.hpp"
#include "maskjudge/saliency.hpp"

namespace maskjudge::runner {
namespace {

// Unbounded MPSC channel feeding the single result writer.
template <typename T>
class Channel {
 public:
  void push(T v) {
    {
      std::lock_guard lock(mutex_);
      items_.push_back(std::move(v));
    }
    cv_.notify_one();
  }
  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }
  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool closed_ = false;
};

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string file_stem_for(const std::string& sample_id) {
  std::string safe = sample_id;
  for (char& c : safe) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  if (safe != sample_id || safe.empty() || safe[0] == '.') {
    const std::string h = codec::sha256_hex(std::span(
        reinterpret_cast<const std::uint8_t*>(sample_id.data()), sample_id.size()));
    safe += "_" + h.substr(0, 8);
  }
  return safe;
}

struct Context {
  const RunConfig& cfg;
  judge::VlmJudge& judge;
  judge::PromptTemplate tmpl;
  std::filesystem::path dir;
};

ResultRow process(const ManifestRecord& rec, Context& ctx) {
  ResultRow row;
  row.sample_id = rec.sample_id;
  row.predicted_label = rec.predicted_label;
  row.true_label = rec.true_label;
  row.alpha = ctx.cfg.mask_params.alpha;
  row.beta = ctx.cfg.mask_params.beta;
  row.model_name = ctx.cfg.vlm.model_name;
  row.correct = metrics::labels_match(rec.predicted_label, rec.true_label);
  try {
    if (!std::filesystem::exists(rec.image_path)) {
      throw Error(ErrorKind::NotFound, "image not found: " + rec.image_path.string());
    }
    const RasterImage image = png::decode_raster(io::read_bytes(rec.image_path));

    std::optional<AttentionMap> map;
    if (!rec.map_path.empty()) {
      if (!std::filesystem::exists(rec.map_path)) {
        throw Error(ErrorKind::NotFound, "map not found: " + rec.map_path.string());
      }
      map = load_attention_map_file(rec.map_path.string());
    } else if (!ctx.cfg.occlusion_backend.empty()) {
      HttpPredictionBackend backend(ctx.cfg.occlusion_backend);
      map = generate_occlusion_map(image, rec.predicted_label, backend, ctx.cfg.occlusion);
    }

    std::vector<std::uint8_t> masked_png;
    if (map) {
      const AttentionMap resized = resize_map(*map, image.width, image.height);
      const MaskedImage masked = apply_mask(image, activate_mask(resized, ctx.cfg.mask_params));
      masked_png = png::encode(masked.image);
      const std::string rel = "masked/" + file_stem_for(rec.sample_id) + "__a" + shortest(row.alpha) +
                              "_b" + shortest(row.beta) + ".png";
      io::write_atomic(ctx.dir / rel, masked_png);
      row.masked_image_path = rel;
    }

    std::vector<std::uint8_t> judged;
    if (ctx.tmpl.variant == judge::PromptVariant::Heatmap && !rec.overlay_path.empty()) {
      judged = io::read_bytes(rec.overlay_path);
    } else if (!masked_png.empty()) {
      judged = std::move(masked_png);
    } else {
      throw Error(ErrorKind::Validation,
                  "record has no map_path and no occlusion backend is configured");
    }

    const std::string prompt = judge::build_prompt(ctx.tmpl, rec.predicted_label);
    const judge::VlmAssessment a = ctx.judge.request_assessment_png(prompt, judged);
    row.score = a.score;
    row.evaluation = a.evaluation;
    row.justification = a.justification;
    row.model_name = a.model_name;
    row.ok = true;
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
  }
  return row;
}

}  // namespace

std::string_view version() noexcept { return MASKJUDGE_VERSION; }

RunSummary run_pipeline(const std::vector<ManifestRecord>& manifest, const RunConfig& cfg_in) {
  if (manifest.empty()) throw Error(ErrorKind::EmptySet, "manifest has no records");
  std::string missing;
  for (const ManifestRecord& rec : manifest) {
    std::error_code ec;
    if (!std::filesystem::exists(rec.image_path, ec)) {
      missing += "\n  " + rec.sample_id + ": image not found: " + rec.image_path.string();
    }
    if (rec.map_path.empty() && cfg_in.occlusion_backend.empty()) {
      throw Error(ErrorKind::Validation, "sample " + rec.sample_id +
                                             " has no map_path and no occlusion backend is configured");
    }
    if (!rec.map_path.empty() && !std::filesystem::exists(rec.map_path, ec)) {
      missing += "\n  " + rec.sample_id + ": map not found: " + rec.map_path.string();
    }
  }
  if (!missing.empty()) throw Error(ErrorKind::NotFound, "manifest references missing files:" + missing);
  RunConfig cfg = cfg_in;
  if (cfg.vlm.cache_dir.empty()) {
    cfg.vlm.cache_dir = (cfg.out_dir / "vlm_cache").string();
  } else if (cfg.vlm.cache_dir == "off") {
    cfg.vlm.cache_dir.clear();
  }
  cfg.validate();
  const std::string started = codec::utc_now_iso8601();

  ResultStore store(cfg.out_dir);
  judge::VlmJudge judge(cfg.vlm);
  Context ctx{cfg, judge, cfg.prompt_template(), cfg.out_dir};

  RunSummary summary;
  summary.total = manifest.size();
  std::vector<const ManifestRecord*> todo;
  for (const ManifestRecord& rec : manifest) {
    if (store.is_finalized(result_key(rec.sample_id, cfg.mask_params, cfg.vlm.model_name))) {
      ++summary.skipped;
    } else {
      todo.push_back(&rec);
    }
  }
  summary.new_samples = todo.size();

  Channel<ResultRow> completed;
  std::exception_ptr writer_error;
  std::jthread writer([&] {
    while (auto row = completed.pop()) {
      try {
        store.append(*row);
      } catch (...) {
        if (!writer_error) writer_error = std::current_exception();
      }
    }
  });
  {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    const std::size_t n_workers = std::min(cfg.concurrency, std::max<std::size_t>(todo.size(), 1));
    for (std::size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < todo.size(); i = next.fetch_add(1)) {
          completed.push(process(*todo[i], ctx));
        }
      });
    }
  }
  completed.close();
  writer.join();
  if (writer_error) std::rethrow_exception(writer_error);

  std::set<std::string> ids;
  for (const ManifestRecord& rec : manifest) ids.insert(rec.sample_id);
  std::vector<ResultRow> rows;
  for (ResultRow& r : store.select(cfg.mask_params, cfg.vlm.model_name)) {
    if (ids.count(r.sample_id)) rows.push_back(std::move(r));
  }
  std::vector<ResultRow> failures;
  for (ResultRow& r : store.failures()) {
    if (ids.count(r.sample_id) && r.alpha == cfg.mask_params.alpha && r.beta == cfg.mask_params.beta &&
        r.model_name == cfg.vlm.model_name) {
      failures.push_back(std::move(r));
    }
  }
  summary.failed = manifest.size() - rows.size();
  summary.network_requests = judge.network_requests();
  summary.cache_hits = judge.cache_hits();
  if (!rows.empty()) {
    summary.matrix = write_report(cfg.out_dir, cfg.model_label, rows, failures, cfg.threshold).matrix;
  }

  nlohmann::json meta{{"tool", "maskjudge"},
                      {"version", version()},
                      {"started_at", started},
                      {"finished_at", codec::utc_now_iso8601()},
                      {"config", cfg.to_json()},
                      {"summary",
                       {{"total", summary.total},
                        {"new_samples", summary.new_samples},
                        {"skipped", summary.skipped},
                        {"failed", summary.failed},
                        {"network_requests", summary.network_requests},
                        {"cache_hits", summary.cache_hits}}}};
  io::write_atomic(cfg.out_dir / "run_meta.json", meta.dump(2));

  const double failed_fraction = static_cast<double>(summary.failed) / static_cast<double>(summary.total);
  if (failed_fraction > cfg.max_failure_fraction) {
    std::string first_error = failures.empty() ? "" : " (first error: " + failures.front().error + ")";
    throw Error(ErrorKind::RunFailed, std::to_string(summary.failed) + " of " +
                                          std::to_string(summary.total) + " samples failed" + first_error);
  }
  return summary;
}

}  // namespace maskjudge::runner
