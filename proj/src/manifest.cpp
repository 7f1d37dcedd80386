#include <algorithm>
#include <set>

#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"
#include "maskjudge/runner.hpp"

namespace maskjudge::runner {
namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

std::vector<ManifestRecord> parse_manifest(std::string_view jsonl, const std::filesystem::path& base_dir) {
  std::vector<ManifestRecord> out;
  std::map<std::string, std::vector<std::size_t>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    const std::string_view line = jsonl.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const std::string where = "manifest line " + std::to_string(line_no);
    const nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
      throw Error(ErrorKind::Validation, where + ": not a JSON object");
    }
    auto field = [&](const char* name, bool required) -> std::string {
      if (!doc.contains(name) || doc[name].is_null()) {
        if (required) throw Error(ErrorKind::Validation, where + ": missing field '" + name + "'");
        return {};
      }
      if (!doc[name].is_string()) {
        throw Error(ErrorKind::Validation, where + ": field '" + name + "' must be a string");
      }
      std::string v = doc[name].get<std::string>();
      if (required && v.empty()) {
        throw Error(ErrorKind::Validation, where + ": field '" + name + "' is empty");
      }
      return v;
    };
    ManifestRecord r;
    r.sample_id = field("sample_id", true);
    r.image_path = resolve(base_dir, field("image_path", true));
    r.map_path = resolve(base_dir, field("map_path", false));
    r.predicted_label = field("predicted_label", true);
    r.true_label = field("true_label", true);
    r.overlay_path = resolve(base_dir, field("overlay_path", false));
    seen[r.sample_id].push_back(line_no);
    out.push_back(std::move(r));
  }
  std::string dupes;
  for (const auto& [id, lines] : seen) {
    if (lines.size() < 2) continue;
    dupes += (dupes.empty() ? "" : ", ") + std::string("'") + id + "' (lines";
    for (std::size_t l : lines) dupes += " " + std::to_string(l);
    dupes += ")";
  }
  if (!dupes.empty()) throw Error(ErrorKind::Validation, "duplicate sample_id: " + dupes);
  return out;
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::NotFound, "manifest not found: " + path.string());
  }
  return parse_manifest(io::read_text(path), path.parent_path());
}

}  // namespace maskjudge::runner
