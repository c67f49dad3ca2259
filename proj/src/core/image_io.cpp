// Copyright 2026 The lupidet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "lupidet/image_io.hpp"

#include <fstream>
#include <iterator>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "lupidet/error.hpp"

namespace lupidet::io {
namespace {

ImageRaster from_mat(const cv::Mat& mat) {
  if (mat.depth() != CV_8U) throw ValidationError("only 8-bit images are supported");
  cv::Mat converted;
  switch (mat.channels()) {
    case 1:
      converted = mat;
      break;
    case 3:
      cv::cvtColor(mat, converted, cv::COLOR_BGR2RGB);
      break;
    default:
      throw ValidationError("unsupported channel count " + std::to_string(mat.channels()));
  }
  if (!converted.isContinuous()) converted = converted.clone();
  std::vector<std::uint8_t> pixels(converted.datastart, converted.dataend);
  return ImageRaster(converted.rows, converted.cols, converted.channels(), std::move(pixels));
}

cv::Mat to_mat(const ImageRaster& raster) {
  const int type = raster.channels() == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat view(raster.height(), raster.width(), type,
               const_cast<std::uint8_t*>(raster.pixels().data()));
  cv::Mat out;
  if (raster.channels() == 3) {
    cv::cvtColor(view, out, cv::COLOR_RGB2BGR);
  } else {
    out = view.clone();
  }
  return out;
}

}  // namespace

ImageRaster load_rgb(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (mat.empty()) throw IoError("cannot read image " + path.string());
  return from_mat(mat);
}

ImageRaster load_unchanged(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw IoError("cannot read image " + path.string());
  if (mat.channels() == 4) throw ValidationError(path.string() + ": 4-channel images are not supported");
  return from_mat(mat);
}

std::vector<std::uint8_t> encode_png(const ImageRaster& raster) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", to_mat(raster), bytes)) throw IoError("png encoding failed");
  return bytes;
}

void save_png(const std::filesystem::path& path, const ImageRaster& raster) {
  auto bytes = encode_png(raster);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

bool write_if_changed(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    std::vector<std::uint8_t> existing((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
    if (existing.size() == bytes.size() && std::equal(existing.begin(), existing.end(), bytes.begin())) {
      return false;
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return true;
}

bool write_if_changed(const std::filesystem::path& path, const std::string& text) {
  return write_if_changed(
      path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ImageRaster resize_bilinear(const ImageRaster& raster, int height, int width) {
  if (raster.height() == height && raster.width() == width) return raster;
  cv::Mat src(raster.height(), raster.width(), raster.channels() == 1 ? CV_8UC1 : CV_8UC3,
              const_cast<std::uint8_t*>(raster.pixels().data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  std::vector<std::uint8_t> pixels(dst.datastart, dst.dataend);
  return ImageRaster(height, width, raster.channels(), std::move(pixels));
}

std::vector<float> resize_bilinear(std::span<const float> grid, int height, int width,
                                   int out_height, int out_width) {
  if (grid.size() != static_cast<std::size_t>(height) * width) {
    throw ValidationError("grid size does not match its shape");
  }
  cv::Mat src(height, width, CV_32FC1, const_cast<float*>(grid.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(out_width, out_height), 0, 0, cv::INTER_LINEAR);
  return std::vector<float>(dst.ptr<float>(), dst.ptr<float>() + dst.total());
}

}  // namespace lupidet::io
