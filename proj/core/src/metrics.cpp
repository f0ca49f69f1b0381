#include "pdzseg/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "pdzseg/error.hpp"

namespace pdzseg {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  if (other.num_classes() != num_classes()) throw Error(ErrorKind::kShapeMismatch, "class count differs");
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    per_class[k].true_positive += other.per_class[k].true_positive;
    per_class[k].false_positive += other.per_class[k].false_positive;
    per_class[k].false_negative += other.per_class[k].false_negative;
  }
  return *this;
}

ConfusionCounts confusion_counts(const ClassMask& pred, const ClassMask& gt, int num_classes) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw Error(ErrorKind::kShapeMismatch, "prediction " + std::to_string(pred.height()) + "x" +
                                               std::to_string(pred.width()) + " vs ground truth " +
                                               std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  }
  // joint histogram, then read the counts off it
  std::vector<std::uint64_t> joint(static_cast<std::size_t>(num_classes) * num_classes, 0);
  const auto p = pred.labels();
  const auto g = gt.labels();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] >= num_classes || g[i] >= num_classes) {
      throw Error(ErrorKind::kBadLabel, "label outside 0.." + std::to_string(num_classes - 1));
    }
    ++joint[static_cast<std::size_t>(g[i]) * num_classes + p[i]];
  }
  ConfusionCounts out(num_classes);
  for (int k = 0; k < num_classes; ++k) {
    auto& c = out.per_class[k];
    for (int j = 0; j < num_classes; ++j) {
      const std::uint64_t v = joint[static_cast<std::size_t>(k) * num_classes + j];
      if (j == k) {
        c.true_positive += v;
      } else {
        c.false_negative += v;
        out.per_class[j].false_positive += v;
      }
    }
  }
  return out;
}

double iou(const ConfusionCounts& counts, int k) {
  const auto& c = counts.per_class.at(k);
  const std::uint64_t denom = c.true_positive + c.false_positive + c.false_negative;
  if (denom == 0) throw Error(ErrorKind::kUndefinedMetric, "IoU of " + class_name(k) + " has an empty union");
  return static_cast<double>(c.true_positive) / static_cast<double>(denom);
}

double dice(const ConfusionCounts& counts, int k) {
  const auto& c = counts.per_class.at(k);
  const std::uint64_t denom = 2 * c.true_positive + c.false_positive + c.false_negative;
  if (denom == 0) throw Error(ErrorKind::kUndefinedMetric, "Dice of " + class_name(k) + " has an empty union");
  return 2.0 * static_cast<double>(c.true_positive) / static_cast<double>(denom);
}

std::string class_name(int k) {
  if (k == kNoGoClass) return "no_go";
  if (k == kDissectionClass) return "dissection";
  return "class_" + std::to_string(k);
}

MetricsReport summarize(const ConfusionCounts& counts, std::size_t n_images, const std::string& split,
                        const std::string& prompt_kind, const std::optional<std::string>& corruption) {
  MetricsReport r;
  r.split = split;
  r.prompt_kind = prompt_kind;
  r.corruption = corruption;
  r.n_images = n_images;
  r.counts = counts;
  double sum_iou = 0.0;
  double sum_dice = 0.0;
  bool all_defined = true;
  for (int k = 0; k < counts.num_classes(); ++k) {
    ClassScore s{class_name(k), std::nullopt, std::nullopt};
    try {
      s.iou = iou(counts, k);
      s.dice = dice(counts, k);
      sum_iou += *s.iou;
      sum_dice += *s.dice;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kUndefinedMetric) throw;
      all_defined = false;
    }
    r.per_class.push_back(std::move(s));
  }
  if (all_defined && counts.num_classes() > 0) {
    r.mean_iou = sum_iou / counts.num_classes();
    r.mean_dice = sum_dice / counts.num_classes();
  }
  return r;
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string pct(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
  return buf;
}

}  // namespace

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& s : r.per_class) per_class[s.name] = {{"iou", opt_json(s.iou)}, {"dice", opt_json(s.dice)}};
  nlohmann::json counts = nlohmann::json::object();
  for (int k = 0; k < r.counts.num_classes(); ++k) {
    const auto& c = r.counts.per_class[k];
    counts[class_name(k)] = {{"tp", c.true_positive}, {"fp", c.false_positive}, {"fn", c.false_negative}};
  }
  return {{"split", r.split},
          {"prompt_kind", r.prompt_kind},
          {"corruption", r.corruption ? nlohmann::json(*r.corruption) : nlohmann::json(nullptr)},
          {"aggregation", r.aggregation},
          {"per_class", per_class},
          {"mean_iou", opt_json(r.mean_iou)},
          {"mean_dice", opt_json(r.mean_dice)},
          {"n_images", r.n_images},
          {"counts", counts}};
}

std::string render_table(const std::vector<MetricsReport>& reports) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"prompt", "corruption", "dissection IoU", "dissection Dice", "no-go IoU", "no-go Dice", "mean IoU",
                  "mean Dice", "images"});
  for (const auto& r : reports) {
    auto score = [&](int k, bool want_iou) {
      if (k >= static_cast<int>(r.per_class.size())) return std::string("n/a");
      return pct(want_iou ? r.per_class[k].iou : r.per_class[k].dice);
    };
    rows.push_back({r.prompt_kind, r.corruption.value_or("-"), score(kDissectionClass, true),
                    score(kDissectionClass, false), score(kNoGoClass, true), score(kNoGoClass, false), pct(r.mean_iou),
                    pct(r.mean_dice), std::to_string(r.n_images)});
  }
  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      const auto& cell = rows[r][i];
      if (i == 0) {
        out << cell << std::string(widths[i] - cell.size(), ' ');
      } else {
        out << "  " << std::string(widths[i] - cell.size(), ' ') << cell;
      }
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  return out.str();
}

}  // namespace pdzseg
