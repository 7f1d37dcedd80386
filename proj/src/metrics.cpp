#include "maskjudge/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include "maskjudge/error.hpp"

namespace maskjudge::metrics {
namespace {

std::string normalize_label(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view quadrant_code(Quadrant q) noexcept {
  switch (q) {
    case Quadrant::CH: return "CH";
    case Quadrant::CL: return "CL";
    case Quadrant::WH: return "WH";
    case Quadrant::WL: return "WL";
  }
  return "?";
}

std::string_view stage_name(Quadrant q) noexcept {
  switch (q) {
    case Quadrant::CH: return "Correct";
    case Quadrant::CL: return "Misunderstood object";
    case Quadrant::WH: return "Attend to wrong object";
    case Quadrant::WL: return "Lack of understanding";
  }
  return "?";
}

void Threshold::validate() const {
  if (min_high_score < 1 || min_high_score > 5) {
    throw Error(ErrorKind::Validation,
                "threshold must lie in [1,5], got " + std::to_string(min_high_score));
  }
}

bool labels_match(std::string_view predicted, std::string_view truth) {
  return normalize_label(predicted) == normalize_label(truth);
}

SampleResult SampleResult::make(std::string sample_id, std::string predicted_label,
                                std::string true_label, int score) {
  SampleResult r{std::move(sample_id), std::move(predicted_label), std::move(true_label), score, false};
  r.correct = labels_match(r.predicted_label, r.true_label);
  return r;
}

Quadrant classify_quadrant(const SampleResult& r, const Threshold& t) {
  const bool high = r.score >= t.min_high_score;
  if (r.correct) return high ? Quadrant::CH : Quadrant::CL;
  return high ? Quadrant::WH : Quadrant::WL;
}

std::size_t ConfusionMatrix::count(Quadrant q) const noexcept {
  switch (q) {
    case Quadrant::CH: return ch;
    case Quadrant::CL: return cl;
    case Quadrant::WH: return wh;
    case Quadrant::WL: return wl;
  }
  return 0;
}

double ConfusionMatrix::pct(Quadrant q) const noexcept {
  switch (q) {
    case Quadrant::CH: return ch_pct;
    case Quadrant::CL: return cl_pct;
    case Quadrant::WH: return wh_pct;
    case Quadrant::WL: return wl_pct;
  }
  return 0;
}

Quadrant ConfusionMatrix::dominant() const noexcept {
  Quadrant best = Quadrant::CH;
  for (Quadrant q : kQuadrants) {
    if (count(q) > count(best)) best = q;
  }
  return best;
}

ConfusionMatrix build_confusion_matrix(std::span<const SampleResult> results, const Threshold& t) {
  t.validate();
  if (results.empty()) throw Error(ErrorKind::EmptySet, "no results to build a confusion matrix from");
  ConfusionMatrix m;
  long long score_sum = 0;
  for (const SampleResult& r : results) {
    if (r.score < 0 || r.score > 5) {
      throw Error(ErrorKind::Range, "score " + std::to_string(r.score) + " of sample '" +
                                        r.sample_id + "' is outside 0-5");
    }
    switch (classify_quadrant(r, t)) {
      case Quadrant::CH: ++m.ch; break;
      case Quadrant::CL: ++m.cl; break;
      case Quadrant::WH: ++m.wh; break;
      case Quadrant::WL: ++m.wl; break;
    }
    score_sum += r.score;
  }
  m.n = results.size();
  const double n = static_cast<double>(m.n);
  m.ch_pct = 100.0 * static_cast<double>(m.ch) / n;
  m.cl_pct = 100.0 * static_cast<double>(m.cl) / n;
  m.wh_pct = 100.0 * static_cast<double>(m.wh) / n;
  m.wl_pct = 100.0 * static_cast<double>(m.wl) / n;
  m.avg_score = static_cast<double>(score_sum) / n;
  m.err_pct = 100.0 - m.ch_pct;
  return m;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorKind::DegenerateInput, "pearson: length mismatch (" + std::to_string(x.size()) +
                                                " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw Error(ErrorKind::DegenerateInput, "pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorKind::DegenerateInput, "pearson: constant input vector");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double acceptance_rate(std::span<const bool> accepted) {
  if (accepted.empty()) throw Error(ErrorKind::EmptySet, "no judgments to compute an acceptance rate from");
  const auto n_ok = std::count(accepted.begin(), accepted.end(), true);
  return 100.0 * static_cast<double>(n_ok) / static_cast<double>(accepted.size());
}

double err_model_correlation(std::span<const ModelRun> runs) {
  std::vector<double> err, normal;
  err.reserve(runs.size());
  normal.reserve(runs.size());
  for (const ModelRun& r : runs) {
    err.push_back(r.err_pct);
    normal.push_back(r.biased ? 0.0 : 1.0);
  }
  return pearson(err, normal);
}

std::string format_pct(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", pct);
  return buf;
}

}  // namespace maskjudge::metrics
