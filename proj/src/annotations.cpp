#include "maskjudge/annotations.hpp"

#include "maskjudge/codec.hpp"
#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"

namespace maskjudge::runner {

nlohmann::json AnnotationRecord::to_json() const {
  return {{"sample_id", sample_id},
          {"annotator_id", annotator_id},
          {"human_score", human_score},
          {"vlm_text_accepted", vlm_text_accepted},
          {"created_at", created_at}};
}

AnnotationRecord parse_annotation(const nlohmann::json& body) {
  if (!body.is_object()) throw Error(ErrorKind::Validation, "body: must be a JSON object");
  std::vector<std::string> errors;
  AnnotationRecord r;
  auto text = [&](const char* name, std::string& out) {
    if (!body.contains(name) || !body[name].is_string() || body[name].get<std::string>().empty()) {
      errors.push_back(std::string(name) + ": must be a non-empty string");
    } else {
      out = body[name].get<std::string>();
    }
  };
  text("sample_id", r.sample_id);
  text("annotator_id", r.annotator_id);
  if (!body.contains("human_score") || !body["human_score"].is_number_integer() ||
      body["human_score"].get<long long>() < 0 || body["human_score"].get<long long>() > 5) {
    errors.push_back("human_score: must be an integer in 0-5");
  } else {
    r.human_score = body["human_score"].get<int>();
  }
  if (!body.contains("vlm_text_accepted") || !body["vlm_text_accepted"].is_boolean()) {
    errors.push_back("vlm_text_accepted: must be a boolean");
  } else {
    r.vlm_text_accepted = body["vlm_text_accepted"].get<bool>();
  }
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "; ") + e;
    throw Error(ErrorKind::Validation, msg);
  }
  r.created_at = codec::utc_now_iso8601();
  return r;
}

AnnotationStore::AnnotationStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  bool torn_tail = false;
  if (std::filesystem::exists(path_)) {
    const std::string text = io::read_text(path_);
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      if (nl == std::string::npos) {
        torn_tail = true;
        break;
      }
      const nlohmann::json j = nlohmann::json::parse(text.substr(pos, nl - pos), nullptr, false);
      pos = nl + 1;
      if (j.is_discarded()) continue;
      try {
        AnnotationRecord r = parse_annotation(j);
        r.created_at = j.value("created_at", "");
        latest_[{r.sample_id, r.annotator_id}] = std::move(r);
      } catch (const Error&) {
      }
    }
  }
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw Error(ErrorKind::Io, "cannot open " + path_.string());
  if (torn_tail) out_ << '\n' << std::flush;
}

void AnnotationStore::add(AnnotationRecord record) {
  const std::string line = record.to_json().dump() + "\n";
  std::lock_guard lock(mutex_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw Error(ErrorKind::Io, "failed to append to " + path_.string());
  latest_[{record.sample_id, record.annotator_id}] = std::move(record);
}

std::vector<AnnotationRecord> AnnotationStore::records() const {
  std::lock_guard lock(mutex_);
  std::vector<AnnotationRecord> out;
  out.reserve(latest_.size());
  for (const auto& [key, r] : latest_) out.push_back(r);
  return out;
}

std::vector<AnnotationRecord> AnnotationStore::for_sample(const std::string& sample_id) const {
  std::lock_guard lock(mutex_);
  std::vector<AnnotationRecord> out;
  for (auto it = latest_.lower_bound({sample_id, ""}); it != latest_.end() && it->first.first == sample_id; ++it) {
    out.push_back(it->second);
  }
  return out;
}

HumanScores AnnotationStore::mean_scores() const {
  std::lock_guard lock(mutex_);
  std::map<std::string, std::pair<double, int>> sums;
  for (const auto& [key, r] : latest_) {
    auto& [sum, n] = sums[r.sample_id];
    sum += r.human_score;
    ++n;
  }
  HumanScores out;
  for (const auto& [id, s] : sums) out[id] = s.first / s.second;
  return out;
}

}  // namespace maskjudge::runner
