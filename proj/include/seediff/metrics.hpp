#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "seediff/errors.hpp"

namespace seediff {

/// Pixel tallies for one class. Merging tallies is associative and
/// commutative, so shards can be counted independently.
struct IouTally {
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;

  IouTally& operator+=(const IouTally& o) {
    intersection += o.intersection;
    union_ += o.union_;
    return *this;
  }
  /// intersection / union; 1 when both masks were empty.
  double iou() const {
    return union_ == 0 ? 1.0
                       : static_cast<double>(intersection) / static_cast<double>(union_);
  }
  bool operator==(const IouTally&) const = default;
};

/// Counts |pred & gt| and |pred | gt|; any non-zero byte is foreground.
inline IouTally tally(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) {
    throw InputError("mask sizes differ: " + std::to_string(pred.size()) + " vs " +
                     std::to_string(gt.size()));
  }
  IouTally t;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    t.intersection += p && g;
    t.union_ += p || g;
  }
  return t;
}

inline double iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  return tally(pred, gt).iou();
}

struct MaskPair {
  std::span<const std::uint8_t> pred;
  std::span<const std::uint8_t> gt;
  std::string label;
};

enum class MiouMode {
  pooled,     // sum intersections and unions per class, then divide
  per_image,  // average per-image IoU within each class
};

struct EvalReport {
  std::map<std::string, double> per_class;
  std::map<std::string, IouTally> counts;
  std::map<std::string, std::size_t> images;
  double miou = 0.0;
  MiouMode mode = MiouMode::pooled;

  nlohmann::json to_json() const {
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [label, value] : per_class) {
      const auto& c = counts.at(label);
      classes[label] = {{"iou", value},
                        {"intersection", c.intersection},
                        {"union", c.union_},
                        {"images", images.at(label)}};
    }
    return {{"miou", miou},
            {"mode", mode == MiouMode::pooled ? "pooled" : "per_image"},
            {"empty_convention", "iou = 1 when prediction and ground truth are both empty"},
            {"classes", classes}};
  }
};

inline EvalReport evaluate(std::span<const MaskPair> pairs, MiouMode mode = MiouMode::pooled) {
  if (pairs.empty()) throw InputError("evaluate needs at least one mask pair");
  EvalReport report;
  report.mode = mode;
  std::map<std::string, double> iou_sums;
  for (const auto& p : pairs) {
    const IouTally t = tally(p.pred, p.gt);
    report.counts[p.label] += t;
    report.images[p.label] += 1;
    iou_sums[p.label] += t.iou();
  }
  double sum = 0.0;
  for (const auto& [label, counts] : report.counts) {
    const double v = mode == MiouMode::pooled
                         ? counts.iou()
                         : iou_sums[label] / static_cast<double>(report.images[label]);
    report.per_class[label] = v;
    sum += v;
  }
  report.miou = sum / static_cast<double>(report.per_class.size());
  return report;
}

}  // namespace seediff
