#include <algorithm>
#include <charconv>

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

template <typename Map>
std::vector<ResultRow> by_sample(const Map& m) {
  std::vector<std::pair<std::size_t, ResultRow>> tmp;
  for (const auto& [key, entry] : m) tmp.push_back(entry);
  std::sort(tmp.begin(), tmp.end(), [](const auto& a, const auto& b) {
    return std::tie(a.second.sample_id, a.first) < std::tie(b.second.sample_id, b.first);
  });
  std::vector<ResultRow> out;
  out.reserve(tmp.size());
  for (auto& [seq, row] : tmp) out.push_back(std::move(row));
  return out;
}

}  // namespace

std::string result_key(std::string_view sample_id, const MaskParams& params, std::string_view model_name) {
  return std::string(sample_id) + "|" + shortest(params.alpha) + "|" + shortest(params.beta) + "|" +
         std::string(model_name);
}

std::string ResultRow::key() const {
  return result_key(sample_id, MaskParams{alpha, beta}, model_name);
}

nlohmann::json ResultRow::to_json() const {
  nlohmann::json j{{"sample_id", sample_id},
                   {"alpha", alpha},
                   {"beta", beta},
                   {"model_name", model_name},
                   {"score", ok ? nlohmann::json(score) : nlohmann::json()},
                   {"evaluation", evaluation},
                   {"justification", justification},
                   {"correct", correct},
                   {"masked_image_path", masked_image_path},
                   {"predicted_label", predicted_label},
                   {"true_label", true_label},
                   {"status", ok ? "ok" : "failed"}};
  if (!ok) j["error"] = error;
  return j;
}

ResultRow ResultRow::from_json(const nlohmann::json& j) {
  ResultRow r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.alpha = j.at("alpha").get<double>();
  r.beta = j.at("beta").get<double>();
  r.model_name = j.at("model_name").get<std::string>();
  r.ok = j.at("status").get<std::string>() == "ok";
  if (r.ok) r.score = j.at("score").get<int>();
  r.evaluation = j.value("evaluation", "");
  r.justification = j.value("justification", "");
  r.correct = j.value("correct", false);
  r.masked_image_path = j.value("masked_image_path", "");
  r.predicted_label = j.value("predicted_label", "");
  r.true_label = j.value("true_label", "");
  r.error = j.value("error", "");
  return r;
}

ResultStore::ResultStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  reload();
}

void ResultStore::reload() {
  std::lock_guard lock(mutex_);
  ok_.clear();
  failed_.clear();
  seq_ = 0;
  if (out_.is_open()) out_.close();

  bool torn_tail = false;
  if (std::filesystem::exists(log_path())) {
    const std::string text = io::read_text(log_path());
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      if (nl == std::string::npos) {
        torn_tail = true;  // unterminated: the writer died mid-line
        break;
      }
      const nlohmann::json j = nlohmann::json::parse(text.substr(pos, nl - pos), nullptr, false);
      pos = nl + 1;
      if (j.is_discarded() || !j.is_object()) continue;
      try {
        ingest(ResultRow::from_json(j), seq_++);
      } catch (const nlohmann::json::exception&) {
        // Incomplete record; never surfaces.
      }
    }
  }
  out_.open(log_path(), std::ios::binary | std::ios::app);
  if (!out_) throw Error(ErrorKind::Io, "cannot open " + log_path().string() + " for appending");
  if (torn_tail) {
    out_ << '\n';
    out_.flush();
  }
}

void ResultStore::ingest(ResultRow row, std::size_t seq) {
  const std::string key = row.key();
  if (row.ok) {
    ok_[key] = {seq, std::move(row)};
  } else {
    failed_[key] = {seq, std::move(row)};
  }
}

bool ResultStore::is_finalized(const std::string& key) const {
  std::lock_guard lock(mutex_);
  return ok_.count(key) != 0;
}

void ResultStore::append(const ResultRow& row) {
  const std::string line = row.to_json().dump() + "\n";
  std::lock_guard lock(mutex_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw Error(ErrorKind::Io, "failed to append to " + log_path().string());
  ingest(row, seq_++);
}

std::vector<ResultRow> ResultStore::finalized() const {
  std::lock_guard lock(mutex_);
  return by_sample(ok_);
}

std::vector<ResultRow> ResultStore::failures() const {
  std::lock_guard lock(mutex_);
  std::map<std::string, std::pair<std::size_t, ResultRow>> open;
  for (const auto& [key, entry] : failed_) {
    if (!ok_.count(key)) open.emplace(key, entry);
  }
  return by_sample(open);
}

std::vector<ResultRow> ResultStore::select(const std::optional<MaskParams>& params,
                                           const std::optional<std::string>& model_name) const {
  std::lock_guard lock(mutex_);
  std::map<std::string, std::pair<std::size_t, ResultRow>> latest;
  for (const auto& [key, entry] : ok_) {
    const ResultRow& r = entry.second;
    if (params && (r.alpha != params->alpha || r.beta != params->beta)) continue;
    if (model_name && r.model_name != *model_name) continue;
    auto it = latest.find(r.sample_id);
    if (it == latest.end() || it->second.first < entry.first) latest[r.sample_id] = entry;
  }
  return by_sample(latest);
}

std::optional<ResultRow> ResultStore::latest_for_sample(const std::string& sample_id) const {
  std::lock_guard lock(mutex_);
  std::optional<std::pair<std::size_t, ResultRow>> best;
  for (const auto& [key, entry] : ok_) {
    if (entry.second.sample_id == sample_id && (!best || best->first < entry.first)) best = entry;
  }
  if (!best) return std::nullopt;
  return best->second;
}

}  // namespace maskjudge::runner
