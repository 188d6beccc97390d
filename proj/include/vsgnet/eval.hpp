#pragma once

#include <algorithm>
#include <array>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "vsgnet/data.hpp"

namespace vsg {

struct ScoredTriplet {
  std::string image_id;
  Box human;
  std::optional<Box> object;  // empty: prediction declares a human-only action
  int action_id = 0;
  double score = 0.0;
};

enum class Scenario { kOne = 1, kTwo = 2 };

inline Scenario parse_scenario(int v) {
  if (v == 1) return Scenario::kOne;
  if (v == 2) return Scenario::kTwo;
  throw UsageError("scenario must be 1 or 2");
}

inline void write_predictions(const std::string& path,
                              const std::vector<ScoredTriplet>& preds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (const auto& p : preds) {
    Json j{{"image_id", p.image_id},
           {"human_box", detail::box_to_json(p.human)},
           {"object_box", p.object ? detail::box_to_json(*p.object) : Json(nullptr)},
           {"action_id", p.action_id},
           {"score", p.score}};
    out << j.dump() << "\n";
  }
}

inline std::vector<ScoredTriplet> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file: " + path);
  std::vector<ScoredTriplet> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    ScoredTriplet p;
    p.image_id = j.at("image_id").get<std::string>();
    p.human = detail::box_from_json(j.at("human_box"), where);
    if (j.contains("object_box") && !j.at("object_box").is_null())
      p.object = detail::box_from_json(j.at("object_box"), where);
    p.action_id = j.at("action_id").get<int>();
    p.score = j.at("score").get<double>();
    if (!std::isfinite(p.score)) throw DataError(where + ": non-finite score");
    out.push_back(std::move(p));
  }
  return out;
}

// Canonical ranking: score descending, ties broken by record content so the
// result does not depend on the order predictions arrive in.
inline bool pred_before(const ScoredTriplet& a, const ScoredTriplet& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.image_id != b.image_id) return a.image_id < b.image_id;
  if (a.action_id != b.action_id) return a.action_id < b.action_id;
  auto key = [](const ScoredTriplet& p) {
    const Box o = p.object.value_or(Box{-1, -1, -1, -1});
    return std::array<double, 9>{p.human.x1, p.human.y1, p.human.x2, p.human.y2,
                                 p.object ? 1.0 : 0.0, o.x1, o.y1, o.x2, o.y2};
  };
  return key(a) < key(b);
}

struct MatchResult {
  bool correct = false;
  int gt_index = -1;
};

// Greedy single-consumption matching of one prediction against the
// unconsumed ground truths of the same image and action. A match needs human
// IoU above threshold; ground truths with an object also need object IoU
// above threshold. Human-only ground truths require an empty predicted
// object box under Scenario 1 and ignore it under Scenario 2. Among valid
// candidates the highest match quality wins (min of required IoUs), ties by
// lowest ground-truth index.
inline MatchResult match_prediction(const ScoredTriplet& pred,
                                    const std::vector<GroundTruthTriplet>& gts,
                                    std::vector<char>& consumed, Scenario scenario,
                                    double iou_thresh = 0.5) {
  MatchResult best;
  double best_quality = -1.0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (consumed[i]) continue;
    const auto& gt = gts[i];
    if (gt.image_id != pred.image_id || gt.action_id != pred.action_id) continue;
    const double hiou = box_iou(pred.human, gt.human);
    if (hiou < iou_thresh) continue;
    double quality;
    if (gt.object) {
      if (!pred.object) continue;
      const double oiou = box_iou(*pred.object, *gt.object);
      if (oiou < iou_thresh) continue;
      quality = std::min(hiou, oiou);
    } else {
      if (scenario == Scenario::kOne && pred.object) continue;
      quality = hiou;
    }
    if (quality > best_quality) {
      best_quality = quality;
      best.correct = true;
      best.gt_index = static_cast<int>(i);
    }
  }
  if (best.correct) consumed[static_cast<std::size_t>(best.gt_index)] = 1;
  return best;
}

// Area under the interpolated precision-recall curve, all-point
// interpolation; recall denominator is the ground-truth count. Undefined
// (nullopt) when there are no ground truths.
inline std::optional<double> average_precision(const std::vector<char>& correct,
                                               std::size_t num_gt) {
  if (num_gt == 0) return std::nullopt;
  const std::size_t n = correct.size();
  if (n == 0) return 0.0;
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (correct[k]) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  // max precision over each suffix
  for (std::size_t k = n - 1; k-- > 0;)
    precision[k] = std::max(precision[k], precision[k + 1]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (recall[k] > prev_recall) {
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
  }
  return ap;
}

struct APReport {
  Scenario scenario = Scenario::kOne;
  std::vector<std::optional<double>> per_action;
  double mean_ap = 0.0;  // over actions with ground truth
  std::vector<int> skipped_actions;
  std::optional<double> map_full, map_rare, map_non_rare;
};

inline APReport evaluate(std::vector<ScoredTriplet> preds,
                         const std::vector<GroundTruthTriplet>& gts,
                         Scenario scenario, int num_actions,
                         double iou_thresh = 0.5) {
  std::sort(preds.begin(), preds.end(), pred_before);
  APReport report;
  report.scenario = scenario;
  report.per_action.resize(static_cast<std::size_t>(num_actions));
  double sum = 0.0;
  int defined = 0;
  for (int a = 0; a < num_actions; ++a) {
    std::vector<GroundTruthTriplet> gts_a;
    for (const auto& g : gts)
      if (g.action_id == a) gts_a.push_back(g);
    std::vector<char> consumed(gts_a.size(), 0);
    std::vector<char> correct;
    for (const auto& p : preds) {
      if (p.action_id != a) continue;
      correct.push_back(match_prediction(p, gts_a, consumed, scenario, iou_thresh).correct);
    }
    const auto ap = average_precision(correct, gts_a.size());
    report.per_action[static_cast<std::size_t>(a)] = ap;
    if (ap) {
      sum += *ap;
      ++defined;
    } else {
      report.skipped_actions.push_back(a);
    }
  }
  report.mean_ap = defined > 0 ? sum / defined : 0.0;
  return report;
}

// Rare / non-rare partition by training-sample count (default: rare means
// fewer than 10 training instances).
inline void partition_report(APReport& report, const std::vector<long>& train_counts,
                             int rare_threshold = 10) {
  if (train_counts.size() != report.per_action.size())
    throw DataError("partition_report: need one training count per action class");
  double rare_sum = 0.0, nonrare_sum = 0.0;
  int rare_n = 0, nonrare_n = 0;
  for (std::size_t a = 0; a < report.per_action.size(); ++a) {
    if (!report.per_action[a]) continue;
    if (train_counts[a] < rare_threshold) {
      rare_sum += *report.per_action[a];
      ++rare_n;
    } else {
      nonrare_sum += *report.per_action[a];
      ++nonrare_n;
    }
  }
  report.map_full = report.mean_ap;
  report.map_rare = rare_n > 0 ? std::optional<double>(rare_sum / rare_n) : std::nullopt;
  report.map_non_rare =
      nonrare_n > 0 ? std::optional<double>(nonrare_sum / nonrare_n) : std::nullopt;
}

inline Json report_to_json(const APReport& r) {
  Json per = Json::array();
  for (const auto& ap : r.per_action) per.push_back(ap ? Json(*ap) : Json(nullptr));
  Json j{{"scenario", r.scenario == Scenario::kOne ? 1 : 2},
         {"per_action_ap", per},
         {"mean_ap", r.mean_ap},
         {"skipped_actions", r.skipped_actions}};
  if (r.map_full) j["map_full"] = *r.map_full;
  if (r.map_rare) j["map_rare"] = *r.map_rare;
  if (r.map_non_rare) j["map_non_rare"] = *r.map_non_rare;
  return j;
}

inline void print_report(std::ostream& out, const APReport& r,
                         const std::vector<std::string>* action_names = nullptr) {
  out << "Scenario " << (r.scenario == Scenario::kOne ? 1 : 2) << " AP by action\n";
  for (std::size_t a = 0; a < r.per_action.size(); ++a) {
    std::string name = action_names && a < action_names->size()
                           ? (*action_names)[a]
                           : "action_" + std::to_string(a);
    out << "  " << std::left << std::setw(20) << name << std::right;
    if (r.per_action[a])
      out << std::fixed << std::setprecision(4) << std::setw(8) << *r.per_action[a] << "\n";
    else
      out << std::setw(8) << "n/a (no ground truth)\n";
  }
  out << "  " << std::left << std::setw(20) << "mean" << std::right << std::fixed
      << std::setprecision(4) << std::setw(8) << r.mean_ap << "\n";
  if (r.map_rare || r.map_non_rare) {
    out << "  partitions: full " << std::setprecision(4) << r.mean_ap;
    if (r.map_rare) out << ", rare " << *r.map_rare;
    if (r.map_non_rare) out << ", non-rare " << *r.map_non_rare;
    out << "\n";
  }
}

}  // namespace vsg
