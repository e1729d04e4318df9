#pragma once
// "FTC1" binary tensor container.
// Layout: magic "FTC1" | u8 dtype (0=f32, 1=f64, 2=u16) | u8 ndim |
//         ndim x u32 dims (little endian) | raw little-endian payload.
#include <cstdint>
#include <string>
#include <vector>

#include "madt/tensor.hpp"

namespace madt {

enum class FtcDtype : uint8_t { F32 = 0, F64 = 1, U16 = 2 };

// Writes real-typed tensors; dtype follows the build's real unless forced.
void ftc1_write(const std::string& path, const Tensor& t);
void ftc1_write(const std::string& path, const Tensor& t, FtcDtype dtype);
void ftc1_write_u16(const std::string& path, const Shape& shape, const std::vector<uint16_t>& data);

// f32/f64 payloads widen/narrow to the build's real type.
Tensor ftc1_read(const std::string& path);
std::vector<uint16_t> ftc1_read_u16(const std::string& path, Shape& shape_out);
FtcDtype ftc1_peek_dtype(const std::string& path);

}  // namespace madt
