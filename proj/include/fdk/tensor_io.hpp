#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "fdk/tensor.hpp"

namespace fdk {

// RT4 tensor files: a single-line JSON header {"shape":[n,c,h,w],"dtype":"f32"}
// followed by n*c*h*w little-endian f32 values in NCHW order.

void write_rt4(std::ostream& out, const Tensor& t);
Tensor read_rt4(std::istream& in);

void save_rt4(const std::filesystem::path& path, const Tensor& t);
Tensor load_rt4(const std::filesystem::path& path);

/// Grayscale grid stored row-major.
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;
};

/// Writes an ASCII PGM (P2, maxval 255). Values are clamped to [0,1] and
/// rounded to the nearest level.
void write_pgm(std::ostream& out, const Grid& grid);
void save_pgm(const std::filesystem::path& path, const Grid& grid);

}  // namespace fdk
