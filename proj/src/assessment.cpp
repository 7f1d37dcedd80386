#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>

#include "maskjudge/error.hpp"
#include "maskjudge/judge.hpp"

namespace maskjudge::judge {
namespace {

enum Field { kEvaluation = 0, kJustification = 1, kScore = 2 };
constexpr std::array<std::string_view, 3> kLabels{"evaluation", "justification", "score"};

bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool is_decoration(char c) {
  return c == ' ' || c == '\t' || c == '*' || c == '"' || c == '\'' || c == '`' || c == '_' ||
         c == '-' || c == '#' || c == '>';
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Drops lines that open or close a fenced code block.
std::string strip_fences(std::string_view raw) {
  std::string out;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    std::size_t nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    std::string_view line = raw.substr(pos, nl - pos);
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos || line.substr(first, 3) != "```") {
      out.append(line);
      out.push_back('\n');
    }
    pos = nl + 1;
  }
  return out;
}

// Leading characters skipped and trailing characters trimmed from values;
// covers brackets, emphasis, quotes, and list punctuation.
std::string clean_value(std::string_view v) {
  auto lead = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == '*' || c == '"' || c == '\'' ||
           c == '[' || c == '`' || c == ':' || c == '_';
  };
  auto trail = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == '*' || c == '"' || c == '\'' ||
           c == ']' || c == '`' || c == ',' || c == ';' || c == '}' || c == '{' || c == '-' ||
           c == '#' || c == '>' || c == '_';
  };
  while (!v.empty() && lead(v.front())) v.remove_prefix(1);
  while (!v.empty() && trail(v.back())) v.remove_suffix(1);
  return std::string(v);
}

struct LabelHit {
  std::size_t start = 0;        // first character belonging to the label line
  std::size_t value_start = 0;  // just past the ':'
};

// A label counts when it starts a field: only decoration separates it from
// the start of text, a newline, or a field/sentence separator, and only
// decoration separates it from the following ':'.
std::optional<LabelHit> find_label(const std::string& lower, std::string_view label) {
  std::size_t pos = 0;
  while ((pos = lower.find(label, pos)) != std::string::npos) {
    const std::size_t end = pos + label.size();
    const bool word_start = pos == 0 || !is_word(lower[pos - 1]);
    std::size_t j = end;
    while (j < lower.size() && (lower[j] == ' ' || lower[j] == '\t' || lower[j] == '*' ||
                                lower[j] == '"' || lower[j] == '\'' || lower[j] == '_')) {
      ++j;
    }
    const bool colon = j < lower.size() && lower[j] == ':' && (end == lower.size() || !is_word(lower[end]));
    std::size_t b = pos;
    while (b > 0 && is_decoration(lower[b - 1])) --b;
    // Numbered list marker such as "2." or "3)" at the start of a line.
    if (b > 1 && (lower[b - 1] == '.' || lower[b - 1] == ')')) {
      std::size_t d = b - 1;
      while (d > 0 && std::isdigit(static_cast<unsigned char>(lower[d - 1]))) --d;
      std::size_t s = d;
      while (s > 0 && (lower[s - 1] == ' ' || lower[s - 1] == '\t')) --s;
      if (d < b - 1 && (s == 0 || lower[s - 1] == '\n')) b = s;
    }
    const bool field_start =
        b == 0 || lower[b - 1] == '\n' || lower[b - 1] == '\r' || lower[b - 1] == '{' ||
        lower[b - 1] == ',' || lower[b - 1] == '.' || lower[b - 1] == ';' || lower[b - 1] == '!' ||
        lower[b - 1] == '?' || lower[b - 1] == '(';
    if (word_start && colon && field_start) {
      return LabelHit{b, j + 1};
    }
    pos = end;
  }
  return std::nullopt;
}

int parse_score(std::string_view value, const std::string& raw) {
  std::size_t i = 0;
  while (i < value.size() && !std::isdigit(static_cast<unsigned char>(value[i]))) ++i;
  if (i == value.size()) throw ParseError("score has no integer value", raw);
  if (i > 0 && value[i - 1] == '-') throw ParseError("score is negative", raw);
  std::size_t j = i;
  while (j < value.size() && std::isdigit(static_cast<unsigned char>(value[j]))) ++j;
  if (j + 1 < value.size() && (value[j] == '.' || value[j] == ',') &&
      std::isdigit(static_cast<unsigned char>(value[j + 1]))) {
    throw ParseError("score is not an integer", raw);
  }
  if (j - i > 2) throw ParseError("score is outside 0-5", raw);
  const int score = std::stoi(std::string(value.substr(i, j - i)));
  if (score < 0 || score > 5) {
    throw ParseError("score " + std::to_string(score) + " is outside 0-5", raw);
  }
  return score;
}

std::optional<VlmAssessment> parse_json_object(const std::string& text, const std::string& raw) {
  const std::size_t open = text.find('{');
  const std::size_t close = text.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
  nlohmann::json doc = nlohmann::json::parse(text.substr(open, close - open + 1), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  std::array<const nlohmann::json*, 3> found{};
  for (const auto& [key, value] : doc.items()) {
    const std::string k = lowercase(clean_value(key));
    for (std::size_t f = 0; f < kLabels.size(); ++f) {
      if (k == kLabels[f] && !found[f]) found[f] = &value;
    }
  }
  if (!found[kEvaluation] || !found[kJustification] || !found[kScore]) return std::nullopt;
  auto text_of = [](const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  VlmAssessment a;
  a.evaluation = clean_value(text_of(*found[kEvaluation]));
  a.justification = clean_value(text_of(*found[kJustification]));
  const nlohmann::json& s = *found[kScore];
  if (s.is_number_integer()) {
    const auto v = s.get<long long>();
    if (v < 0 || v > 5) throw ParseError("score " + std::to_string(v) + " is outside 0-5", raw);
    a.score = static_cast<int>(v);
  } else if (s.is_number()) {
    throw ParseError("score is not an integer", raw);
  } else {
    a.score = parse_score(text_of(s), raw);
  }
  if (a.evaluation.empty() || a.justification.empty()) {
    throw ParseError("evaluation or justification is empty", raw);
  }
  return a;
}

}  // namespace

VlmAssessment parse_assessment(std::string_view raw_view) {
  const std::string raw(raw_view);
  const std::string text = strip_fences(raw);

  if (auto a = parse_json_object(text, raw)) {
    a->raw = raw;
    return *a;
  }

  const std::string lower = lowercase(text);
  std::array<std::optional<LabelHit>, 3> hits;
  std::string missing;
  for (std::size_t f = 0; f < kLabels.size(); ++f) {
    hits[f] = find_label(lower, kLabels[f]);
    if (!hits[f]) missing += (missing.empty() ? "" : ", ") + std::string(kLabels[f]);
  }
  if (!missing.empty()) throw ParseError("reply is missing field(s): " + missing, raw);

  auto value_of = [&](std::size_t f) {
    std::size_t end = text.size();
    for (std::size_t g = 0; g < hits.size(); ++g) {
      if (g != f && hits[g]->start >= hits[f]->value_start) end = std::min(end, hits[g]->start);
    }
    return std::string_view(text).substr(hits[f]->value_start, end - hits[f]->value_start);
  };

  VlmAssessment a;
  a.raw = raw;
  a.evaluation = clean_value(value_of(kEvaluation));
  a.justification = clean_value(value_of(kJustification));
  if (a.evaluation.empty()) throw ParseError("evaluation is empty", raw);
  if (a.justification.empty()) throw ParseError("justification is empty", raw);
  a.score = parse_score(clean_value(value_of(kScore)), raw);
  return a;
}

std::string format_assessment(const VlmAssessment& a) {
  return "Evaluation: " + a.evaluation + "\nJustification: " + a.justification +
         "\nScore: " + std::to_string(a.score);
}

}  // namespace maskjudge::judge
