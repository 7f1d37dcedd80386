#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"
#include "maskjudge/runner.hpp"

namespace maskjudge::runner {
namespace {

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view s, const std::string& what) {
  s = trim(s);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::Validation, what + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

}  // namespace

HumanScores load_human_scores_csv(const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  std::map<std::string, std::pair<double, int>> sums;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string_view line = trim(std::string_view(text).substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "sample_id,human_score") {
        throw Error(ErrorKind::Validation, path.string() + ": header must be 'sample_id,human_score'");
      }
      continue;
    }
    const std::size_t comma = line.rfind(',');
    if (comma == std::string_view::npos) {
      throw Error(ErrorKind::Validation, path.string() + ":" + std::to_string(line_no) + ": expected two columns");
    }
    const std::string id(trim(line.substr(0, comma)));
    const double score = parse_number(line.substr(comma + 1), path.string() + ":" + std::to_string(line_no));
    if (score < 0 || score > 5) {
      throw Error(ErrorKind::Range, path.string() + ":" + std::to_string(line_no) + ": score outside 0-5");
    }
    auto& [sum, count] = sums[id];
    sum += score;
    ++count;
  }
  HumanScores out;
  for (const auto& [id, sc] : sums) out[id] = sc.first / sc.second;
  return out;
}

std::vector<MaskParams> default_grid() {
  return {MaskParams{25.0, 0.4}, MaskParams{15.0, 0.6}, MaskParams{25.0, 0.7}};
}

std::vector<MaskParams> parse_grid(std::string_view spec) {
  std::vector<MaskParams> grid;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    std::size_t comma = spec.find(',', pos);
    if (comma == std::string_view::npos) comma = spec.size();
    const std::string_view item = trim(spec.substr(pos, comma - pos));
    pos = comma + 1;
    if (item.empty()) continue;
    const std::size_t colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw Error(ErrorKind::Validation, "grid point '" + std::string(item) + "' must be alpha:beta");
    }
    MaskParams p{parse_number(item.substr(0, colon), "grid alpha"),
                 parse_number(item.substr(colon + 1), "grid beta")};
    p.validate();
    grid.push_back(p);
  }
  if (grid.empty()) throw Error(ErrorKind::Validation, "grid is empty");
  return grid;
}

std::filesystem::path sweep_dir(const std::filesystem::path& base, const MaskParams& params) {
  return base / "sweep" / ("alpha_" + shortest(params.alpha) + "_beta_" + shortest(params.beta));
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "alpha,beta,pc,n,note\n";
  char buf[64];
  for (const SweepRow& r : rows) {
    std::string note = r.note;
    std::replace(note.begin(), note.end(), ',', ';');
    if (r.pc) {
      std::snprintf(buf, sizeof(buf), "%.17g", *r.pc);
    } else {
      buf[0] = '\0';
    }
    out += shortest(r.params.alpha) + "," + shortest(r.params.beta) + "," + buf + "," +
           std::to_string(r.n) + "," + note + "\n";
  }
  return out;
}

std::vector<SweepRow> run_sweep(const std::vector<ManifestRecord>& manifest, const RunConfig& base_cfg,
                                const std::vector<MaskParams>& grid, const HumanScores& human) {
  if (manifest.empty()) throw Error(ErrorKind::EmptySet, "manifest has no records");
  if (grid.empty()) throw Error(ErrorKind::Validation, "grid is empty");
  std::string uncovered;
  for (const ManifestRecord& rec : manifest) {
    if (!human.count(rec.sample_id)) uncovered += (uncovered.empty() ? "" : ", ") + rec.sample_id;
  }
  if (!uncovered.empty()) {
    throw Error(ErrorKind::Precondition, "missing human scores for: " + uncovered);
  }

  // One cache for the whole sweep so repeated sweeps re-use replies.
  RunConfig shared = base_cfg;
  if (shared.vlm.cache_dir.empty()) shared.vlm.cache_dir = (base_cfg.out_dir / "vlm_cache").string();

  std::vector<SweepRow> rows;
  for (const MaskParams& params : grid) {
    RunConfig cfg = shared;
    cfg.mask_params = params;
    cfg.out_dir = sweep_dir(base_cfg.out_dir, params);
    SweepRow row{params, std::nullopt, 0, ""};
    try {
      run_pipeline(manifest, cfg);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::RunFailed) throw;
      row.note = "run failed";
    }
    ResultStore store(cfg.out_dir);
    std::vector<double> vlm, people;
    for (const ResultRow& r : store.select(params, cfg.vlm.model_name)) {
      const auto it = human.find(r.sample_id);
      if (it == human.end()) continue;
      vlm.push_back(r.score);
      people.push_back(it->second);
    }
    row.n = vlm.size();
    try {
      row.pc = metrics::pearson(vlm, people);
    } catch (const Error& e) {
      row.note = e.what();
    }
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.pc && b.pc) return *a.pc > *b.pc;
    return a.pc.has_value() && !b.pc.has_value();
  });
  io::write_atomic(base_cfg.out_dir / "sweep.csv", sweep_csv(rows));
  return rows;
}

}  // namespace maskjudge::runner
