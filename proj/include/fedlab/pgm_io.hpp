#pragma once

#include <string>

#include "fedlab/tensor.hpp"

namespace fedlab {

// Binary portable graymap (P5, maxval 255). Accepts [H,W], [1,H,W,1] or
// [H,W,1] tensors with values in [0,1].
void write_pgm(const std::string& path, const Tensor& image);

// Reads a P5 file into a [1,H,W,1] tensor scaled to [0,1].
Tensor read_pgm(const std::string& path);

}  // namespace fedlab
