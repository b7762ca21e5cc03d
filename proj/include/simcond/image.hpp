#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

namespace simcond {

// A single image is a float tensor laid out as (channels, height, width) with
// pixel values in [-1, 1]. Batches add a leading dimension.
using Image = torch::Tensor;

struct ImageShape {
  int channels = 3;
  int height = 32;
  int width = 32;
  bool operator==(const ImageShape&) const = default;
};

ImageShape shape_of(const Image& image);

// Throws DimensionError on a shape mismatch (when `expected` is given) and
// ValidationError on non-finite pixels or values outside [-1, 1] (+tolerance).
void validate_image(const Image& image, const ImageShape* expected = nullptr, double range_tol = 1e-6);

// Differentiable bilinear resize of an (N, C, H, W) batch. No-op when the
// size already matches.
torch::Tensor resize_batch(const torch::Tensor& batch, int height, int width);

// [-1, 1] -> [0, 255] with rounding; lossless for values written by this
// library and read back.
std::vector<std::uint8_t> to_rgb8(const Image& image);
Image from_rgb8(const std::vector<std::uint8_t>& pixels, int height, int width, int channels);

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

// Loads every image into one (N, C, H, W) batch, resizing to `resolution`
// when it is > 0.
torch::Tensor load_batch(const std::vector<std::filesystem::path>& paths, int resolution = 0);

// Sorted list of *.png files in a directory (non-recursive).
std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir);

}  // namespace simcond
