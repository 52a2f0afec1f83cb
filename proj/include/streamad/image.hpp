#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace streamad {

// 8-bit RGB image, row-major, interleaved channels.
struct ImageU8 {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;  // h*w*3

  ImageU8() = default;
  ImageU8(int h_, int w_, std::uint8_t fill = 0)
      : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_ * 3, fill) {}

  std::uint8_t& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  }
  bool operator==(const ImageU8&) const = default;
};

// Binary mask, values 0/1.
struct MaskU8 {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;  // h*w

  MaskU8() = default;
  MaskU8(int h_, int w_, std::uint8_t fill = 0)
      : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_, fill) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
  std::size_t count_nonzero() const;
  bool operator==(const MaskU8&) const = default;
};

// Single-channel float map (anomaly scores).
struct FloatMap {
  int h = 0;
  int w = 0;
  std::vector<float> data;  // h*w

  FloatMap() = default;
  FloatMap(int h_, int w_, float fill = 0.f)
      : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_, fill) {}

  float& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  float at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
  float max() const;
};

ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w);
// Nearest-neighbor then re-binarized: any nonzero source pixel maps to 1.
MaskU8 resize_nearest(const MaskU8& mask, int out_h, int out_w);
FloatMap resize_bilinear(const FloatMap& map, int out_h, int out_w);
FloatMap gaussian_smooth(const FloatMap& map, double sigma);

ImageU8 load_image_rgb(const std::string& path);
MaskU8 load_mask(const std::string& path);
void save_image_rgb(const std::string& path, const ImageU8& img);
void save_mask(const std::string& path, const MaskU8& mask);

}  // namespace streamad
