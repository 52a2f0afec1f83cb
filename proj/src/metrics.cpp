#include "streamad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace streamad {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("scores/labels size mismatch or empty");
  for (int l : labels)
    if (l != 0 && l != 1) throw std::invalid_argument("labels must be 0/1");
}
}  // namespace

ResultMatrix::ResultMatrix(std::string name, int n_tasks)
    : metric_name(std::move(name)),
      values(n_tasks, std::vector<double>(n_tasks, kNaN)) {}

void ResultMatrix::set(int after_task, int eval_task, double v) {
  if (eval_task > after_task)
    throw std::invalid_argument("upper-triangular entries are undefined");
  values.at(after_task).at(eval_task) = v;
}

double ResultMatrix::get(int after_task, int eval_task) const {
  return values.at(after_task).at(eval_task);
}

std::string ResultMatrix::to_csv() const {
  std::ostringstream out;
  out << "after_task";
  for (int i = 0; i < n_tasks(); ++i) out << ",task_" << i;
  out << "\n";
  out.precision(17);
  for (int t = 0; t < n_tasks(); ++t) {
    out << t;
    for (int i = 0; i < n_tasks(); ++i) {
      out << ",";
      if (i <= t && !std::isnan(values[t][i])) out << values[t][i];
    }
    out << "\n";
  }
  return out.str();
}

ResultMatrix ResultMatrix::from_csv(const std::string& csv, const std::string& name) {
  std::istringstream in(csv);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    bool first = true;
    while (std::getline(ls, cell, ',')) {
      if (first) {
        first = false;
        continue;
      }
      row.push_back(cell.empty() ? kNaN : std::stod(cell));
    }
    rows.push_back(std::move(row));
  }
  ResultMatrix r(name, static_cast<int>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < rows[t].size() && i < rows.size(); ++i)
      r.values[t][i] = rows[t][i];
  return r;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_binary(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  double n_pos = 0, n_neg = 0, rank_sum = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] == 1) {
      n_pos += 1;
      rank_sum += rank[k];
    } else {
      n_neg += 1;
    }
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auroc needs both classes");
  const double u = rank_sum - n_pos * (n_pos + 1) / 2.0;
  return u / (n_pos * n_neg);
}

F1Result f1_max(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_binary(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total_pos = 0;
  for (int l : labels) total_pos += l;

  double best_f1 = -1, best_thr = 0;
  auto consider = [&](double thr, double tp, double pred_pos) {
    const double denom = pred_pos + total_pos;
    const double f1 = denom > 0 ? 2 * tp / denom : 0.0;
    if (f1 > best_f1 || (f1 == best_f1 && thr < best_thr)) {
      best_f1 = f1;
      best_thr = thr;
    }
  };

  // Prediction is positive when score > threshold. Candidate thresholds: every
  // distinct score (cut just below each group) and one below the minimum.
  double tp = 0, pred_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double v = scores[order[i]];
    for (std::size_t k = i; k <= j; ++k) {
      tp += labels[order[k]];
      pred_pos += 1;
    }
    // threshold just below v: everything with score >= v predicted positive
    const double thr = j + 1 < n ? scores[order[j + 1]] : v - 1.0;
    consider(thr, tp, pred_pos);
    i = j + 1;
  }
  return {best_f1, best_thr};
}

double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_binary(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total_pos = 0;
  for (int l : labels) total_pos += l;
  if (total_pos == 0) throw std::invalid_argument("pr_auc needs positives");

  double area = 0, tp = 0, pred_pos = 0, prev_recall = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      tp += labels[order[k]];
      pred_pos += 1;
    }
    const double recall = tp / total_pos;
    const double precision = tp / pred_pos;
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return area;
}

int connected_components_8(const MaskU8& mask, std::vector<int>& labels_out) {
  labels_out.assign(static_cast<std::size_t>(mask.h) * mask.w, 0);
  int next = 0;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < mask.h; ++y) {
    for (int x = 0; x < mask.w; ++x) {
      if (!mask.at(y, x) || labels_out[y * mask.w + x]) continue;
      ++next;
      labels_out[y * mask.w + x] = next;
      queue.emplace_back(y, x);
      while (!queue.empty()) {
        auto [cy, cx] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || nx < 0 || ny >= mask.h || nx >= mask.w) continue;
            if (!mask.at(ny, nx) || labels_out[ny * mask.w + nx]) continue;
            labels_out[ny * mask.w + nx] = next;
            queue.emplace_back(ny, nx);
          }
        }
      }
    }
  }
  return next;
}

double aupro(const std::vector<FloatMap>& maps, const std::vector<MaskU8>& masks,
             double fpr_limit) {
  if (maps.size() != masks.size() || maps.empty())
    throw std::invalid_argument("aupro: maps/masks size mismatch or empty");
  if (fpr_limit <= 0 || fpr_limit > 1)
    throw std::invalid_argument("aupro: fpr_limit must be in (0, 1]");

  struct Pixel {
    float score;
    int region;  // -1 = normal pixel
  };
  std::vector<Pixel> pixels;
  std::vector<double> region_area;
  std::size_t n_normal = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const FloatMap& m = maps[i];
    const MaskU8& gt = masks[i];
    if (gt.h != m.h || gt.w != m.w)
      throw std::invalid_argument("aupro: map/mask shape mismatch");
    std::vector<int> labels;
    const int n_regions = connected_components_8(gt, labels);
    const int offset = static_cast<int>(region_area.size());
    region_area.resize(offset + n_regions, 0.0);
    for (std::size_t p = 0; p < m.data.size(); ++p) {
      if (labels[p]) {
        region_area[offset + labels[p] - 1] += 1;
        pixels.push_back({m.data[p], offset + labels[p] - 1});
      } else {
        pixels.push_back({m.data[p], -1});
        ++n_normal;
      }
    }
  }
  if (region_area.empty())
    throw std::invalid_argument("aupro: no anomalous pixels in any mask");
  if (n_normal == 0) throw std::invalid_argument("aupro: no normal pixels");

  std::sort(pixels.begin(), pixels.end(),
            [](const Pixel& a, const Pixel& b) { return a.score > b.score; });

  std::vector<double> region_hits(region_area.size(), 0.0);
  const double inv_regions = 1.0 / static_cast<double>(region_area.size());
  double fp = 0, pro_sum = 0;  // pro_sum accumulates sum of per-region fractions
  double prev_fpr = 0, prev_pro = 0, area = 0;
  bool done = false;

  std::size_t i = 0;
  while (i < pixels.size() && !done) {
    std::size_t j = i;
    while (j + 1 < pixels.size() && pixels[j + 1].score == pixels[i].score) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      if (pixels[k].region < 0) {
        fp += 1;
      } else {
        region_hits[pixels[k].region] += 1;
        pro_sum += 1.0 / region_area[pixels[k].region];
      }
    }
    const double fpr = fp / static_cast<double>(n_normal);
    const double pro = pro_sum * inv_regions;
    if (fpr >= fpr_limit) {
      // clip: linear interpolation of pro at fpr_limit
      double pro_at_limit = pro;
      if (fpr > prev_fpr)
        pro_at_limit =
            prev_pro + (pro - prev_pro) * (fpr_limit - prev_fpr) / (fpr - prev_fpr);
      area += 0.5 * (prev_pro + pro_at_limit) * (fpr_limit - prev_fpr);
      done = true;
    } else {
      area += 0.5 * (prev_pro + pro) * (fpr - prev_fpr);
      prev_fpr = fpr;
      prev_pro = pro;
    }
    i = j + 1;
  }
  if (!done)  // curve never reached fpr_limit; extend flat to the limit
    area += prev_pro * (fpr_limit - prev_fpr);
  return area / fpr_limit;
}

double average_over_tasks(const ResultMatrix& r) {
  const int t = r.n_tasks();
  if (t == 0) throw std::invalid_argument("empty result matrix");
  double sum = 0;
  for (int i = 0; i < t; ++i) sum += r.get(t - 1, i);
  return sum / t;
}

double average_forgetting(const ResultMatrix& r) {
  const int t = r.n_tasks();
  if (t == 0) throw std::invalid_argument("empty result matrix");
  if (t == 1) return 0.0;
  double sum = 0;
  for (int i = 0; i < t - 1; ++i) {
    const double just_learned = r.get(i, i);
    if (just_learned == 0)
      throw std::invalid_argument("average_forgetting undefined: zero diagonal");
    sum += 100.0 * (just_learned - r.get(t - 1, i)) / just_learned;
  }
  return sum / (t - 1);
}

double relative_gap(double cl_final, double joint_final) {
  if (joint_final <= 0)
    throw std::invalid_argument("relative_gap: joint_final must be > 0");
  return 100.0 * (joint_final - cl_final) / joint_final;
}

MemoryReport memory_report(std::size_t architecture_params,
                           std::size_t additional_bytes) {
  MemoryReport r;
  r.architecture_mb = static_cast<double>(architecture_params) * 4.0 / 1e6;
  r.additional_mb = static_cast<double>(additional_bytes) / 1e6;
  return r;
}

TimingReport timing_report(const std::vector<TimingEvent>& run_log) {
  TimingReport r;
  for (const auto& e : run_log) {
    if (e.task_id >= static_cast<int>(r.per_task_seconds.size()))
      r.per_task_seconds.resize(e.task_id + 1, 0.0);
    r.per_task_seconds[e.task_id] += e.seconds;
    r.total_seconds += e.seconds;
  }
  return r;
}

}  // namespace streamad
