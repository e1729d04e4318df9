#pragma once
// Plain PPM/PGM image I/O. Images are (3,H,W) tensors in [0,1]; class grids
// are 16-bit PGM (P2 ascii or P5 binary, big-endian per netpbm).
#include <string>

#include "madt/segmask.hpp"
#include "madt/tensor.hpp"

namespace madt {

Tensor read_ppm(const std::string& path);                   // (3,H,W) in [0,1]
void write_ppm(const std::string& path, const Tensor& img);  // P6, 8-bit

ClassGrid read_pgm(const std::string& path);
void write_pgm(const std::string& path, const ClassGrid& grid, bool binary = true);

// Dispatches on extension: .pgm (P2/P5) or .ftc1 (u16 payload, shape (H,W)).
ClassGrid read_class_grid(const std::string& path);

}  // namespace madt
