#pragma once

#include "ctdn/encoders.hpp"

#include <array>
#include <string>
#include <vector>

namespace ctdn::png {

using Rgb = std::array<uint8_t, 3>;

// Fixed 16-color class palette (index 0 = background/black).
const std::vector<Rgb>& class_palette();

void write_rgb(const std::string& path, const ImageTensor& image);
ImageTensor read_rgb(const std::string& path);

// Single-channel indexed-color PNG; pixel value = class index.
void write_indexed(const std::string& path, const Eigen::MatrixXi& labels,
                   const std::vector<Rgb>& palette = class_palette());
Eigen::MatrixXi read_indexed(const std::string& path);

// Grayscale dump of a [0, 1] map scaled to 0-255 (CAM debugging).
void write_gray(const std::string& path, const Mat& values);

}  // namespace ctdn::png
