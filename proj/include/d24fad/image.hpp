#pragma once

#include <array>
#include <string>

#include "d24fad/tensor.hpp"

namespace d24fad::img {

// Images move through the pipeline as (C,H,W) tensors with values in [0,1].
// Binary PPM (P6) and PGM (P5) are the on-disk dataset formats; PNG is used
// for heatmap exports.

Tensor read_image(const std::string& path);          // (3,H,W) or (1,H,W)
void write_ppm(const std::string& path, const Tensor& rgb01);
void write_pgm(const std::string& path, const Tensor& gray01);
void write_png(const std::string& path, const Tensor& rgb01);  // 8-bit RGB, fixed zlib level

// Grayscale replication to 3 channels, bilinear resize to size×size, then
// channel-wise standardization.
Tensor preprocess(const Tensor& image01, int size, const std::array<double, 3>& mean,
                  const std::array<double, 3>& stdev);

bool has_image_ext(const std::string& path);

}  // namespace d24fad::img
