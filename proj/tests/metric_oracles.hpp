#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "streamad/metrics.hpp"

// Independent brute-force implementations of the metric definitions, used to
// cross-check the production code in both the unit and acceptance suites.
namespace streamad::oracles {


// Threshold-sweep ROC oracle: trapezoid over (FPR, TPR) points at every
// distinct score, ties grouped.
inline double auroc_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::set<double> uniq(scores.begin(), scores.end());
  std::vector<double> thresholds(uniq.rbegin(), uniq.rend());
  double n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg) += 1;
  double area = 0, prev_fpr = 0, prev_tpr = 0;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i] >= t) (labels[i] ? tp : fp) += 1;
    const double tpr = tp / n_pos, fpr = fp / n_neg;
    area += 0.5 * (tpr + prev_tpr) * (fpr - prev_fpr);
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  area += 0.5 * (1 + prev_tpr) * (1 - prev_fpr);
  return area;
}

// Exhaustive-threshold F1 oracle.
inline double f1_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::set<double> uniq(scores.begin(), scores.end());
  std::vector<double> thresholds(uniq.begin(), uniq.end());
  thresholds.push_back(*uniq.begin() - 1);
  double best = 0;
  for (double t : thresholds) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool pred = scores[i] > t;
      if (pred && labels[i]) tp += 1;
      if (pred && !labels[i]) fp += 1;
      if (!pred && labels[i]) fn += 1;
    }
    const double denom = 2 * tp + fp + fn;
    best = std::max(best, denom > 0 ? 2 * tp / denom : 0.0);
  }
  return best;
}

// Step-wise PR oracle.
inline double pr_auc_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::set<double> uniq(scores.begin(), scores.end());
  std::vector<double> thresholds(uniq.rbegin(), uniq.rend());
  double n_pos = 0;
  for (int l : labels) n_pos += l;
  double area = 0, prev_recall = 0;
  for (double t : thresholds) {
    double tp = 0, pp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i] >= t) {
        pp += 1;
        tp += labels[i];
      }
    const double recall = tp / n_pos, precision = tp / pp;
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

// Brute-force per-threshold PRO/FPR enumeration with the same trapezoid
// integration rule, recomputed independently at every threshold.
inline double aupro_oracle(const std::vector<FloatMap>& maps,
                    const std::vector<MaskU8>& masks, double fpr_limit) {
  std::vector<std::vector<int>> region_labels(masks.size());
  std::vector<double> areas;
  std::vector<int> offsets(masks.size());
  double n_normal = 0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    offsets[i] = static_cast<int>(areas.size());
    int n = connected_components_8(masks[i], region_labels[i]);
    for (int r = 0; r < n; ++r) areas.push_back(0);
    for (std::size_t p = 0; p < masks[i].data.size(); ++p) {
      if (region_labels[i][p])
        areas[offsets[i] + region_labels[i][p] - 1] += 1;
      else
        n_normal += 1;
    }
  }
  std::set<float> uniq;
  for (const auto& m : maps) uniq.insert(m.data.begin(), m.data.end());
  std::vector<float> thresholds(uniq.rbegin(), uniq.rend());

  double area = 0, prev_fpr = 0, prev_pro = 0;
  for (float t : thresholds) {
    double fp = 0;
    std::vector<double> hits(areas.size(), 0);
    for (std::size_t i = 0; i < maps.size(); ++i)
      for (std::size_t p = 0; p < maps[i].data.size(); ++p)
        if (maps[i].data[p] >= t) {
          if (region_labels[i][p])
            hits[offsets[i] + region_labels[i][p] - 1] += 1;
          else
            fp += 1;
        }
    const double fpr = fp / n_normal;
    double pro = 0;
    for (std::size_t r = 0; r < areas.size(); ++r) pro += hits[r] / areas[r];
    pro /= areas.size();
    if (fpr >= fpr_limit) {
      double pro_at = pro;
      if (fpr > prev_fpr)
        pro_at = prev_pro + (pro - prev_pro) * (fpr_limit - prev_fpr) / (fpr - prev_fpr);
      area += 0.5 * (prev_pro + pro_at) * (fpr_limit - prev_fpr);
      return area / fpr_limit;
    }
    area += 0.5 * (prev_pro + pro) * (fpr - prev_fpr);
    prev_fpr = fpr;
    prev_pro = pro;
  }
  area += prev_pro * (fpr_limit - prev_fpr);
  return area / fpr_limit;
}

}  // namespace streamad::oracles
