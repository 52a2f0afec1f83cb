#include "streamad/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <stdexcept>
#include <string>

namespace streamad {

namespace {

cv::Mat to_mat(const ImageU8& img) {
  cv::Mat m(img.h, img.w, CV_8UC3);
  std::memcpy(m.data, img.data.data(), img.data.size());
  return m;
}

ImageU8 from_mat(const cv::Mat& m) {
  ImageU8 img(m.rows, m.cols);
  std::memcpy(img.data.data(), m.data, img.data.size());
  return img;
}

}  // namespace

std::size_t MaskU8::count_nonzero() const {
  std::size_t n = 0;
  for (auto v : data) n += v != 0;
  return n;
}

float FloatMap::max() const {
  float m = data.empty() ? 0.f : data[0];
  for (float v : data) m = std::max(m, v);
  return m;
}

ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w) {
  if (img.h == out_h && img.w == out_w) return img;
  cv::Mat dst;
  cv::resize(to_mat(img), dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
  return from_mat(dst);
}

MaskU8 resize_nearest(const MaskU8& mask, int out_h, int out_w) {
  if (mask.h == out_h && mask.w == out_w) {
    MaskU8 out = mask;
    for (auto& v : out.data) v = v ? 1 : 0;
    return out;
  }
  cv::Mat src(mask.h, mask.w, CV_8UC1, const_cast<std::uint8_t*>(mask.data.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_NEAREST);
  MaskU8 out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) out.at(y, x) = dst.at<std::uint8_t>(y, x) ? 1 : 0;
  return out;
}

FloatMap resize_bilinear(const FloatMap& map, int out_h, int out_w) {
  if (map.h == out_h && map.w == out_w) return map;
  cv::Mat src(map.h, map.w, CV_32FC1, const_cast<float*>(map.data.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
  FloatMap out(out_h, out_w);
  std::memcpy(out.data.data(), dst.data, out.data.size() * sizeof(float));
  return out;
}

FloatMap gaussian_smooth(const FloatMap& map, double sigma) {
  if (sigma <= 0) return map;
  cv::Mat src(map.h, map.w, CV_32FC1, const_cast<float*>(map.data.data()));
  cv::Mat dst;
  int k = 2 * static_cast<int>(std::ceil(3 * sigma)) + 1;
  cv::GaussianBlur(src, dst, cv::Size(k, k), sigma, sigma, cv::BORDER_REFLECT);
  FloatMap out(map.h, map.w);
  std::memcpy(out.data.data(), dst.data, out.data.size() * sizeof(float));
  return out;
}

ImageU8 load_image_rgb(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot read image: " + path);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return from_mat(rgb);
}

MaskU8 load_mask(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("cannot read mask: " + path);
  MaskU8 out(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) out.at(y, x) = m.at<std::uint8_t>(y, x) ? 1 : 0;
  return out;
}

void save_image_rgb(const std::string& path, const ImageU8& img) {
  cv::Mat bgr;
  cv::cvtColor(to_mat(img), bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path, bgr)) throw std::runtime_error("cannot write image: " + path);
}

void save_mask(const std::string& path, const MaskU8& mask) {
  cv::Mat m(mask.h, mask.w, CV_8UC1);
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) m.at<std::uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
  if (!cv::imwrite(path, m)) throw std::runtime_error("cannot write mask: " + path);
}

}  // namespace streamad
