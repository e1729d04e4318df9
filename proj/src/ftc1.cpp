#include "madt/ftc1.hpp"

#include <cstring>
#include <fstream>

namespace madt {

namespace {

void put_u32(std::ofstream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_header(std::ofstream& os, FtcDtype dtype, const Shape& shape) {
  os.write("FTC1", 4);
  const uint8_t dt = static_cast<uint8_t>(dtype);
  const uint8_t nd = static_cast<uint8_t>(shape.size());
  os.write(reinterpret_cast<const char*>(&dt), 1);
  os.write(reinterpret_cast<const char*>(&nd), 1);
  for (int64_t d : shape) put_u32(os, static_cast<uint32_t>(d));
}

std::ifstream open_and_check(const std::string& path, FtcDtype& dtype, Shape& shape) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_data(ErrCode::BadFile, "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (std::memcmp(magic, "FTC1", 4) != 0) throw_data(ErrCode::BadFile, path + ": bad FTC1 magic");
  uint8_t dt = 0, nd = 0;
  is.read(reinterpret_cast<char*>(&dt), 1);
  is.read(reinterpret_cast<char*>(&nd), 1);
  if (dt > 2) throw_data(ErrCode::BadFile, path + ": unknown dtype");
  dtype = static_cast<FtcDtype>(dt);
  shape.resize(nd);
  for (uint8_t i = 0; i < nd; ++i) shape[i] = static_cast<int64_t>(get_u32(is));
  if (!is) throw_data(ErrCode::BadFile, path + ": truncated header");
  return is;
}

}  // namespace

void ftc1_write(const std::string& path, const Tensor& t, FtcDtype dtype) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_data(ErrCode::BadFile, "cannot write " + path);
  write_header(os, dtype, t.shape());
  const int64_t n = t.numel();
  if (dtype == FtcDtype::F64) {
    for (int64_t i = 0; i < n; ++i) {
      const double v = static_cast<double>(t[i]);
      os.write(reinterpret_cast<const char*>(&v), 8);
    }
  } else if (dtype == FtcDtype::F32) {
    for (int64_t i = 0; i < n; ++i) {
      const float v = static_cast<float>(t[i]);
      os.write(reinterpret_cast<const char*>(&v), 4);
    }
  } else {
    throw_data(ErrCode::BadFile, "u16 tensors must use ftc1_write_u16");
  }
  if (!os) throw_data(ErrCode::BadFile, "short write to " + path);
}

void ftc1_write(const std::string& path, const Tensor& t) {
  ftc1_write(path, t, sizeof(real) == 8 ? FtcDtype::F64 : FtcDtype::F32);
}

void ftc1_write_u16(const std::string& path, const Shape& shape, const std::vector<uint16_t>& data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw_data(ErrCode::ShapeMismatch, "ftc1_write_u16 shape/data mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_data(ErrCode::BadFile, "cannot write " + path);
  write_header(os, FtcDtype::U16, shape);
  for (uint16_t v : data) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
  }
}

Tensor ftc1_read(const std::string& path) {
  FtcDtype dt;
  Shape shape;
  std::ifstream is = open_and_check(path, dt, shape);
  Tensor t(shape);
  const int64_t n = t.numel();
  if (dt == FtcDtype::F64) {
    for (int64_t i = 0; i < n; ++i) {
      double v;
      is.read(reinterpret_cast<char*>(&v), 8);
      t[i] = static_cast<real>(v);
    }
  } else if (dt == FtcDtype::F32) {
    for (int64_t i = 0; i < n; ++i) {
      float v;
      is.read(reinterpret_cast<char*>(&v), 4);
      t[i] = static_cast<real>(v);
    }
  } else {
    throw_data(ErrCode::BadFile, path + ": u16 tensor, use ftc1_read_u16");
  }
  if (!is) throw_data(ErrCode::BadFile, path + ": truncated payload");
  return t;
}

std::vector<uint16_t> ftc1_read_u16(const std::string& path, Shape& shape_out) {
  FtcDtype dt;
  std::ifstream is = open_and_check(path, dt, shape_out);
  if (dt != FtcDtype::U16) throw_data(ErrCode::BadFile, path + ": expected u16 payload");
  std::vector<uint16_t> data(static_cast<size_t>(shape_numel(shape_out)));
  for (auto& v : data) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    v = static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  if (!is) throw_data(ErrCode::BadFile, path + ": truncated payload");
  return data;
}

FtcDtype ftc1_peek_dtype(const std::string& path) {
  FtcDtype dt;
  Shape shape;
  open_and_check(path, dt, shape);
  return dt;
}

}  // namespace madt
