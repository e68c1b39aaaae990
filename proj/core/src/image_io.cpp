#include "rpnr/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <vector>

#include "strings.hpp"

namespace rpnr {
namespace {

namespace fs = std::filesystem;

cv::Mat read(const fs::path& path, int flags) {
  if (!fs::exists(path)) throw IoError(detail::cat("no such file: ", path.string()));
  // Decode from memory so the extension does not matter (e.g. ".png16").
  std::ifstream in(path, std::ios::binary);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  cv::Mat mat = bytes.empty() ? cv::Mat() : cv::imdecode(bytes, flags);
  if (mat.empty()) throw IoError(detail::cat("cannot decode image: ", path.string()));
  return mat;
}

void write(const fs::path& path, const cv::Mat& mat) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<unsigned char> bytes;
  if (!cv::imencode(".png", mat, bytes)) {
    throw IoError(detail::cat("cannot encode image: ", path.string()));
  }
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(detail::cat("cannot write image: ", path.string()));
}

// OpenCV stores interleaved BGR; rasters are planar RGB.
Raster from_mat(const cv::Mat& mat, double scale) {
  cv::Mat f;
  mat.convertTo(f, CV_32F, scale);
  const int channels = f.channels();
  Raster out(f.rows, f.cols, channels);
  for (int y = 0; y < f.rows; ++y) {
    const float* row = f.ptr<float>(y);
    for (int x = 0; x < f.cols; ++x) {
      for (int c = 0; c < channels; ++c) {
        const int dst = channels == 3 ? 2 - c : c;
        out(y, x, dst) = row[x * channels + c];
      }
    }
  }
  return out;
}

cv::Mat to_mat(const Raster& raster, int depth, double scale, double offset = 0.0) {
  const int channels = raster.channels();
  cv::Mat f(raster.height(), raster.width(), CV_32FC(channels));
  for (int y = 0; y < raster.height(); ++y) {
    float* row = f.ptr<float>(y);
    for (int x = 0; x < raster.width(); ++x) {
      for (int c = 0; c < channels; ++c) {
        const int src = channels == 3 ? 2 - c : c;
        row[x * channels + c] = raster(y, x, src);
      }
    }
  }
  cv::Mat out;
  // convertTo rounds to nearest and saturates.
  f.convertTo(out, CV_MAKETYPE(depth, channels), scale, offset);
  return out;
}

cv::Mat as_color(const cv::Mat& mat) {
  if (mat.channels() == 3) return mat;
  cv::Mat out;
  cv::cvtColor(mat, out, mat.channels() == 4 ? cv::COLOR_BGRA2BGR : cv::COLOR_GRAY2BGR);
  return out;
}

cv::Mat as_gray(const cv::Mat& mat) {
  if (mat.channels() == 1) return mat;
  cv::Mat out;
  cv::cvtColor(mat, out, mat.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
  return out;
}

double unit_scale(const cv::Mat& mat) {
  switch (mat.depth()) {
    case CV_8U:
      return 1.0 / 255.0;
    case CV_16U:
      return 1.0 / 65535.0;
    default:
      throw IoError("unsupported PNG bit depth");
  }
}

}  // namespace

Image load_image(const fs::path& path) {
  const cv::Mat mat = as_color(read(path, cv::IMREAD_UNCHANGED));
  return Image(from_mat(mat, unit_scale(mat)));
}

void save_image(const fs::path& path, const Image& image) {
  write(path, to_mat(image, CV_8U, 255.0));
}

AlbedoField load_albedo(const fs::path& path) { return AlbedoField(load_image(path)); }

void save_albedo(const fs::path& path, const AlbedoField& albedo) {
  write(path, to_mat(albedo, CV_8U, 255.0));
}

Mask load_mask(const fs::path& path) {
  cv::Mat gray = as_gray(read(path, cv::IMREAD_UNCHANGED));
  if (gray.depth() == CV_16U) gray.convertTo(gray, CV_8U, 1.0 / 257.0);
  cv::Mat binary;
  cv::threshold(gray, binary, 127, 1, cv::THRESH_BINARY);
  return Mask(from_mat(binary, 1.0));
}

void save_mask(const fs::path& path, const Mask& mask) { write(path, to_mat(mask, CV_8U, 255.0)); }

ShadingField load_shading16(const fs::path& path) {
  const cv::Mat mat = as_gray(read(path, cv::IMREAD_UNCHANGED));
  return ShadingField(from_mat(mat, unit_scale(mat)));
}

void save_shading16(const fs::path& path, const Raster& shading) {
  if (shading.channels() != 1) throw ShapeError("shading PNG expects a single channel");
  write(path, to_mat(shading, CV_16U, 65535.0));
}

NormalField load_normals16(const fs::path& path) {
  const cv::Mat mat = as_color(read(path, cv::IMREAD_UNCHANGED));
  NormalField normals(from_mat(mat, unit_scale(mat)));
  for (std::size_t i = 0; i < normals.plane_size(); ++i) {
    double n[3];
    double len = 0.0;
    for (int c = 0; c < 3; ++c) {
      n[c] = 2.0 * normals.plane(c)[i] - 1.0;
      len += n[c] * n[c];
    }
    len = std::sqrt(len);
    for (int c = 0; c < 3; ++c) {
      normals.plane(c)[i] = len > 0.0 ? static_cast<float>(n[c] / len) : (c == 2 ? 1.0f : 0.0f);
    }
  }
  return normals;
}

void save_normals16(const fs::path& path, const NormalField& normals) {
  write(path, to_mat(normals, CV_16U, 65535.0 / 2.0, 65535.0 / 2.0));
}

}  // namespace rpnr
