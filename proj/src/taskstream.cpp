#include "streamad/taskstream.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <stdexcept>

namespace fs = std::filesystem;

namespace streamad {

namespace {

std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> sorted_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void validate_stream(const TaskStream& stream) {
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    const Task& task = stream.tasks[t];
    if (task.index != static_cast<int>(t))
      throw std::invalid_argument("task indices must be 0..T-1 in order");
    if (task.train.empty())
      throw std::invalid_argument("task '" + task.name + "' has empty train split");
    bool has_normal = false, has_anomalous = false;
    auto check = [&](const Sample& s, Split split) {
      if (s.split != split) throw std::invalid_argument("sample in wrong split");
      if (s.task_id != task.index) throw std::invalid_argument("sample task_id mismatch");
      if (s.image.h != stream.image_h || s.image.w != stream.image_w)
        throw std::invalid_argument("sample image size mismatch");
      if (s.mask && (s.mask->h != s.image.h || s.mask->w != s.image.w))
        throw std::invalid_argument("mask/image shape mismatch");
      bool mask_nonzero = s.mask && s.mask->count_nonzero() > 0;
      if ((s.label == Label::anomalous) != mask_nonzero)
        throw std::invalid_argument(
            "label==anomalous iff mask exists with >=1 nonzero pixel");
    };
    for (const Sample& s : task.train) {
      check(s, Split::train);
      if (s.label != Label::normal)
        throw std::invalid_argument("train split must be all-normal");
    }
    for (const Sample& s : task.test) {
      check(s, Split::test);
      (s.label == Label::normal ? has_normal : has_anomalous) = true;
    }
    if (!has_normal || !has_anomalous)
      throw std::invalid_argument("test split needs both classes in task '" +
                                  task.name + "'");
  }
}

TaskStream load_mvtec_stream(const std::string& root,
                             const std::vector<std::string>& categories,
                             int image_h, int image_w) {
  TaskStream stream;
  stream.image_h = image_h;
  stream.image_w = image_w;
  int index = 0;
  for (const std::string& cat : categories) {
    fs::path cat_dir = fs::path(root) / cat;
    if (!fs::is_directory(cat_dir))
      throw std::invalid_argument("missing category directory: " + cat_dir.string());
    Task task;
    task.name = cat;
    task.index = index;

    for (const auto& p : sorted_files(cat_dir / "train" / "good")) {
      Sample s;
      s.image = resize_bilinear(load_image_rgb(p.string()), image_h, image_w);
      s.label = Label::normal;
      s.task_id = index;
      s.split = Split::train;
      task.train.push_back(std::move(s));
    }

    fs::path test_dir = cat_dir / "test";
    if (!fs::is_directory(test_dir))
      throw std::invalid_argument("missing test directory: " + test_dir.string());
    for (const auto& defect_dir : sorted_dirs(test_dir)) {
      const std::string defect = defect_dir.filename().string();
      const bool is_good = defect == "good";
      auto images = sorted_files(defect_dir);
      std::vector<fs::path> masks;
      if (!is_good) {
        fs::path gt_dir = cat_dir / "ground_truth" / defect;
        if (!fs::is_directory(gt_dir))
          throw std::runtime_error("missing ground_truth for defect '" + defect +
                                   "' in category '" + cat + "'");
        masks = sorted_files(gt_dir);
        if (masks.size() != images.size())
          throw std::runtime_error("mask/image count mismatch in '" + cat + "/" +
                                   defect + "'");
      }
      for (std::size_t i = 0; i < images.size(); ++i) {
        Sample s;
        s.image = resize_bilinear(load_image_rgb(images[i].string()), image_h, image_w);
        s.task_id = index;
        s.split = Split::test;
        if (is_good) {
          s.label = Label::normal;
        } else {
          s.label = Label::anomalous;
          s.mask = resize_nearest(load_mask(masks[i].string()), image_h, image_w);
          if (s.mask->count_nonzero() == 0)
            throw std::runtime_error("empty ground-truth mask: " + masks[i].string());
        }
        task.test.push_back(std::move(s));
      }
    }
    stream.tasks.push_back(std::move(task));
    ++index;
  }
  validate_stream(stream);
  return stream;
}

namespace {

struct TaskPattern {
  double base[3];   // per-channel base level, [64, 192]
  double amp;       // texture amplitude
  double fx, fy;    // texture frequency (cycles per pixel)
  double phase;
};

ImageU8 render_normal(const TaskPattern& p, int h, int w, double jitter_phase,
                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> noise(-4.0, 4.0);
  ImageU8 img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double tex = p.amp * std::sin(2 * M_PI * (p.fx * x + p.fy * y) + p.phase +
                                    jitter_phase);
      double n = noise(rng);
      for (int c = 0; c < 3; ++c) {
        double v = p.base[c] + tex + n;
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return img;
}

// Shifts every defect pixel by +-96 away from its background value, so the
// contrast to the clean rendering is at least 64 levels per channel.
void stamp_defect(ImageU8& img, MaskU8& mask, int y0, int x0, int dh, int dw) {
  for (int y = y0; y < y0 + dh; ++y) {
    for (int x = x0; x < x0 + dw; ++x) {
      for (int c = 0; c < 3; ++c) {
        int bg = img.at(y, x, c);
        int v = bg < 128 ? bg + 96 : bg - 96;
        img.at(y, x, c) = static_cast<std::uint8_t>(v);
      }
      mask.at(y, x) = 1;
    }
  }
}

}  // namespace

TaskStream make_synthetic_stream(int n_tasks, int n_train, int n_test,
                                 int image_h, int image_w, std::uint64_t seed,
                                 bool stamp_defects) {
  if (n_tasks < 1) throw std::invalid_argument("n_tasks must be >= 1");
  if (image_h < 32 || image_w < 32)
    throw std::invalid_argument("image_size must be at least 32x32");
  if (n_test < 2)
    throw std::invalid_argument("n_test must be >= 2 (need both classes in test)");

  TaskStream stream;
  stream.image_h = image_h;
  stream.image_w = image_w;
  for (int t = 0; t < n_tasks; ++t) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + t + 1);
    TaskPattern pat;
    std::uniform_real_distribution<double> base_d(64.0, 192.0);
    for (double& b : pat.base) b = base_d(rng);
    pat.amp = std::uniform_real_distribution<double>(20.0, 32.0)(rng);
    pat.fx = std::uniform_real_distribution<double>(0.05, 0.15)(rng);
    pat.fy = std::uniform_real_distribution<double>(0.05, 0.15)(rng);
    pat.phase = std::uniform_real_distribution<double>(0.0, 2 * M_PI)(rng);

    Task task;
    task.name = "synthetic_" + std::to_string(t);
    task.index = t;

    std::uniform_real_distribution<double> jitter(0.0, 2 * M_PI);
    for (int i = 0; i < n_train; ++i) {
      Sample s;
      s.image = render_normal(pat, image_h, image_w, jitter(rng), rng);
      s.label = Label::normal;
      s.task_id = t;
      s.split = Split::train;
      task.train.push_back(std::move(s));
    }

    const int n_anom = (n_test + 1) / 2;
    for (int i = 0; i < n_test; ++i) {
      Sample s;
      s.image = render_normal(pat, image_h, image_w, jitter(rng), rng);
      s.task_id = t;
      s.split = Split::test;
      if (i < n_anom) {
        int dh = std::uniform_int_distribution<int>(image_h / 8, image_h / 4)(rng);
        int dw = std::uniform_int_distribution<int>(image_w / 8, image_w / 4)(rng);
        int y0 = std::uniform_int_distribution<int>(0, image_h - dh)(rng);
        int x0 = std::uniform_int_distribution<int>(0, image_w - dw)(rng);
        MaskU8 mask(image_h, image_w);
        if (stamp_defects) {
          stamp_defect(s.image, mask, y0, x0, dh, dw);
        } else {
          for (int y = y0; y < y0 + dh; ++y)
            for (int x = x0; x < x0 + dw; ++x) mask.at(y, x) = 1;
        }
        s.mask = std::move(mask);
        s.label = Label::anomalous;
      } else {
        s.label = Label::normal;
      }
      task.test.push_back(std::move(s));
    }
    stream.tasks.push_back(std::move(task));
  }
  validate_stream(stream);
  return stream;
}

void save_stream_mvtec_layout(const TaskStream& stream, const std::string& root) {
  char buf[16];
  for (const Task& task : stream.tasks) {
    fs::path cat = fs::path(root) / task.name;
    fs::create_directories(cat / "train" / "good");
    fs::create_directories(cat / "test" / "good");
    fs::create_directories(cat / "test" / "defect");
    fs::create_directories(cat / "ground_truth" / "defect");
    int i = 0;
    for (const Sample& s : task.train) {
      std::snprintf(buf, sizeof(buf), "%03d.png", i++);
      save_image_rgb((cat / "train" / "good" / buf).string(), s.image);
    }
    int n_good = 0, n_defect = 0;
    for (const Sample& s : task.test) {
      if (s.label == Label::normal) {
        std::snprintf(buf, sizeof(buf), "%03d.png", n_good++);
        save_image_rgb((cat / "test" / "good" / buf).string(), s.image);
      } else {
        std::snprintf(buf, sizeof(buf), "%03d.png", n_defect);
        save_image_rgb((cat / "test" / "defect" / buf).string(), s.image);
        std::snprintf(buf, sizeof(buf), "%03d_mask.png", n_defect++);
        save_mask((cat / "ground_truth" / "defect" / buf).string(), *s.mask);
      }
    }
  }
}

std::vector<std::vector<Sample>> iter_batches(const Task& task, Split split,
                                              int batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const std::vector<Sample>& pool = split == Split::train ? task.train : task.test;
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<Sample>> batches;
  for (std::size_t i = 0; i < idx.size(); i += batch_size) {
    std::vector<Sample> b;
    for (std::size_t j = i; j < std::min(idx.size(), i + batch_size); ++j)
      b.push_back(pool[idx[j]]);
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace streamad
