#include "simcond/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "simcond/errors.hpp"

namespace simcond {

ImageShape shape_of(const Image& image) {
  if (image.dim() != 3) throw DimensionError("image must be (C, H, W), got rank " + std::to_string(image.dim()));
  return {static_cast<int>(image.size(0)), static_cast<int>(image.size(1)), static_cast<int>(image.size(2))};
}

void validate_image(const Image& image, const ImageShape* expected, double range_tol) {
  const ImageShape s = shape_of(image);
  if (expected && !(s == *expected)) {
    throw DimensionError("image shape (" + std::to_string(s.channels) + "," + std::to_string(s.height) + "," +
                         std::to_string(s.width) + ") does not match expected (" +
                         std::to_string(expected->channels) + "," + std::to_string(expected->height) + "," +
                         std::to_string(expected->width) + ")");
  }
  if (!torch::isfinite(image).all().item<bool>()) throw ValidationError("image contains non-finite pixels");
  const double lo = image.min().item<double>();
  const double hi = image.max().item<double>();
  if (lo < -1.0 - range_tol || hi > 1.0 + range_tol) {
    throw ValidationError("image pixels outside [-1, 1]: [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

torch::Tensor resize_batch(const torch::Tensor& batch, int height, int width) {
  if (batch.dim() != 4) throw DimensionError("resize_batch expects (N, C, H, W)");
  if (batch.size(2) == height && batch.size(3) == width) return batch;
  namespace F = torch::nn::functional;
  return F::interpolate(batch, F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{height, width})
                                   .mode(torch::kBilinear)
                                   .align_corners(false));
}

std::vector<std::uint8_t> to_rgb8(const Image& image) {
  const ImageShape s = shape_of(image);
  auto hwc = ((image.detach().to(torch::kFloat64).clamp(-1.0, 1.0) + 1.0) * 127.5)
                 .round()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .contiguous();
  const auto* p = hwc.data_ptr<std::uint8_t>();
  return std::vector<std::uint8_t>(p, p + static_cast<size_t>(s.channels) * s.height * s.width);
}

Image from_rgb8(const std::vector<std::uint8_t>& pixels, int height, int width, int channels) {
  if (pixels.size() != static_cast<size_t>(height) * width * channels) {
    throw DimensionError("pixel buffer size does not match dimensions");
  }
  auto t = torch::from_blob(const_cast<std::uint8_t*>(pixels.data()), {height, width, channels}, torch::kUInt8)
               .to(torch::kFloat32)
               .permute({2, 0, 1})
               .contiguous();
  return t / 127.5 - 1.0;
}

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  const ImageShape s = shape_of(image);
  if (s.channels != 1 && s.channels != 3) throw DimensionError("PNG output supports 1 or 3 channels");
  const auto pixels = to_rgb8(image);

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, s.width, s.height, 8, s.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t stride = static_cast<size_t>(s.width) * s.channels;
  for (int y = 0; y < s.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<std::uint8_t> pixels;
  int width = 0, height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng read failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const size_t stride = png_get_rowbytes(png, info);
  if (stride != static_cast<size_t>(width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG layout: " + path.string());
  }
  pixels.resize(stride * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_rgb8(pixels, height, width, 3);
}

torch::Tensor load_batch(const std::vector<std::filesystem::path>& paths, int resolution) {
  std::vector<torch::Tensor> images;
  images.reserve(paths.size());
  for (const auto& p : paths) {
    auto img = read_png(p).unsqueeze(0);
    if (resolution > 0) img = resize_batch(img, resolution, resolution);
    images.push_back(img);
  }
  if (images.empty()) return torch::empty({0, 3, std::max(resolution, 1), std::max(resolution, 1)});
  return torch::cat(images, 0);
}

std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace simcond
