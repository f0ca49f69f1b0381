#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdzseg/image.hpp"

namespace pdzseg {

inline constexpr int kNoGoClass = 0;
inline constexpr int kDissectionClass = 1;

struct ClassCounts {
  std::uint64_t true_positive = 0;
  std::uint64_t false_positive = 0;
  std::uint64_t false_negative = 0;

  bool operator==(const ClassCounts&) const = default;
};

struct ConfusionCounts {
  std::vector<ClassCounts> per_class;

  explicit ConfusionCounts(int num_classes = 2) : per_class(static_cast<std::size_t>(num_classes)) {}

  int num_classes() const { return static_cast<int>(per_class.size()); }
  ConfusionCounts& operator+=(const ConfusionCounts& other);

  bool operator==(const ConfusionCounts&) const = default;
};

// Exact per-class pixel counts. Throws kShapeMismatch, kBadLabel.
ConfusionCounts confusion_counts(const ClassMask& pred, const ClassMask& gt, int num_classes = 2);

// TP / (TP + FP + FN); throws kUndefinedMetric on an empty union.
double iou(const ConfusionCounts& counts, int k);
// 2TP / (2TP + FP + FN); throws kUndefinedMetric on an empty union.
double dice(const ConfusionCounts& counts, int k);

std::string class_name(int k);

struct ClassScore {
  std::string name;
  std::optional<double> iou;   // empty when not applicable
  std::optional<double> dice;
};

struct MetricsReport {
  std::string split;
  std::string prompt_kind;
  std::optional<std::string> corruption;
  std::string aggregation = "micro";
  std::vector<ClassScore> per_class;
  std::optional<double> mean_iou;
  std::optional<double> mean_dice;
  std::size_t n_images = 0;
  ConfusionCounts counts;

  std::optional<double> dissection_iou() const { return per_class.at(kDissectionClass).iou; }
};

// Scores from summed counts; means are the unweighted class average and
// are left empty when any class is undefined.
MetricsReport summarize(const ConfusionCounts& counts, std::size_t n_images, const std::string& split,
                        const std::string& prompt_kind, const std::optional<std::string>& corruption);

nlohmann::json report_to_json(const MetricsReport& report);

// Aligned percentage table: one row per report, class IoU/Dice then means.
std::string render_table(const std::vector<MetricsReport>& reports);

}  // namespace pdzseg
