#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace maskjudge::metrics {

/// Correct/Wrong prediction crossed with High/Low judge score.
enum class Quadrant { CH = 0, CL = 1, WH = 2, WL = 3 };

inline constexpr std::array<Quadrant, 4> kQuadrants{Quadrant::CH, Quadrant::CL, Quadrant::WH,
                                                    Quadrant::WL};

std::string_view quadrant_code(Quadrant q) noexcept;
/// "Correct", "Misunderstood object", "Attend to wrong object",
/// "Lack of understanding".
std::string_view stage_name(Quadrant q) noexcept;

/// Scores >= min_high_score count as high.
struct Threshold {
  int min_high_score = 3;

  void validate() const;
};

/// Trimmed, case-insensitive label equality.
bool labels_match(std::string_view predicted, std::string_view truth);

struct SampleResult {
  std::string sample_id;
  std::string predicted_label;
  std::string true_label;
  int score = 0;
  bool correct = false;

  /// Fills `correct` from the labels.
  static SampleResult make(std::string sample_id, std::string predicted_label,
                           std::string true_label, int score);
};

Quadrant classify_quadrant(const SampleResult& r, const Threshold& t);

struct ConfusionMatrix {
  std::size_t ch = 0, cl = 0, wh = 0, wl = 0;
  std::size_t n = 0;
  double ch_pct = 0, cl_pct = 0, wh_pct = 0, wl_pct = 0;
  double avg_score = 0;
  double err_pct = 0;

  std::size_t count(Quadrant q) const noexcept;
  double pct(Quadrant q) const noexcept;
  /// Largest quadrant; ties resolve in CH, CL, WH, WL order.
  Quadrant dominant() const noexcept;
};

ConfusionMatrix build_confusion_matrix(std::span<const SampleResult> results, const Threshold& t);

/// Sample Pearson correlation. Throws DegenerateInput on length mismatch,
/// fewer than two points, or a constant vector.
double pearson(std::span<const double> x, std::span<const double> y);

/// Percentage of accepted judgments.
double acceptance_rate(std::span<const bool> accepted);

struct ModelRun {
  double err_pct = 0;
  bool biased = false;
};

/// Pearson between err% and the training condition encoded normal=1,
/// biased=0, so a negative value means higher err goes with biased training.
double err_model_correlation(std::span<const ModelRun> runs);

/// One decimal, for reports.
std::string format_pct(double pct);

}  // namespace maskjudge::metrics
