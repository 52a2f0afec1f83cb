#pragma once

#include <string>
#include <vector>

#include "streamad/image.hpp"

namespace streamad {

// values[t][i] = metric on task i's test set after training through task t.
// Entries with i > t are NaN (undefined).
struct ResultMatrix {
  std::string metric_name;
  std::vector<std::vector<double>> values;

  explicit ResultMatrix(std::string name = "", int n_tasks = 0);
  int n_tasks() const { return static_cast<int>(values.size()); }
  void set(int after_task, int eval_task, double v);
  double get(int after_task, int eval_task) const;

  std::string to_csv() const;
  static ResultMatrix from_csv(const std::string& csv, const std::string& name);
};

struct MemoryReport {
  double architecture_mb = 0;
  double additional_mb = 0;
  double total_mb() const { return architecture_mb + additional_mb; }
};

// Area under ROC via the rank statistic (Mann-Whitney U), ties averaged.
// Throws std::invalid_argument unless both classes are present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Maximum F1 over all thresholds (prediction positive when score > threshold);
// lowest maximizing threshold on ties.
struct F1Result {
  double f1;
  double threshold;
};
F1Result f1_max(const std::vector<double>& scores, const std::vector<int>& labels);

// Area under the precision-recall curve, step-wise right-continuous
// interpolation of precision as a function of recall.
double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Per-region-overlap curve vs global pixel FPR, integrated by trapezoid from 0
// to fpr_limit and normalized by fpr_limit. Regions are 8-connected components
// of each mask.
double aupro(const std::vector<FloatMap>& maps, const std::vector<MaskU8>& masks,
             double fpr_limit = 0.3);

// 8-connected component labels; returns the number of regions, labels 1..n in
// `labels_out` (0 = background).
int connected_components_8(const MaskU8& mask, std::vector<int>& labels_out);

double average_over_tasks(const ResultMatrix& r);

// Mean over past tasks of 100 * (R[i][i] - R[T-1][i]) / R[i][i]; negative
// values indicate improvement. Zero diagonal -> std::invalid_argument.
double average_forgetting(const ResultMatrix& r);

// 100 * (joint_final - cl_final) / joint_final.
double relative_gap(double cl_final, double joint_final);

// architecture: parameters at 4 bytes each; additional: raw byte count.
MemoryReport memory_report(std::size_t architecture_params,
                           std::size_t additional_bytes);

struct TimingEvent {
  int task_id;
  double seconds;
};
struct TimingReport {
  std::vector<double> per_task_seconds;
  double total_seconds = 0;
};
TimingReport timing_report(const std::vector<TimingEvent>& run_log);

}  // namespace streamad
