#include "madt/imageio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "madt/ftc1.hpp"

namespace madt {

namespace {

// Reads the next netpbm header token, skipping whitespace and # comments.
std::string next_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int64_t int_token(std::istream& is, const std::string& path) {
  const std::string t = next_token(is);
  if (t.empty()) throw_data(ErrCode::BadFile, path + ": truncated header");
  return std::stoll(t);
}

}  // namespace

Tensor read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_data(ErrCode::BadFile, "cannot open " + path);
  const std::string magic = next_token(is);
  if (magic != "P6" && magic != "P3") throw_data(ErrCode::BadFile, path + ": not a PPM file");
  const int64_t w = int_token(is, path);
  const int64_t h = int_token(is, path);
  const int64_t maxval = int_token(is, path);
  if (maxval <= 0 || maxval > 255) throw_data(ErrCode::BadFile, path + ": unsupported maxval");
  Tensor img({3, h, w});
  if (magic == "P6") {
    std::vector<unsigned char> buf(static_cast<size_t>(3 * h * w));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw_data(ErrCode::BadFile, path + ": truncated pixel data");
    for (int64_t p = 0; p < h * w; ++p)
      for (int64_t c = 0; c < 3; ++c)
        img[c * h * w + p] = static_cast<real>(buf[static_cast<size_t>(p * 3 + c)]) / static_cast<real>(maxval);
  } else {
    for (int64_t p = 0; p < h * w; ++p)
      for (int64_t c = 0; c < 3; ++c)
        img[c * h * w + p] = static_cast<real>(int_token(is, path)) / static_cast<real>(maxval);
  }
  return img;
}

void write_ppm(const std::string& path, const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw_data(ErrCode::ShapeMismatch, "write_ppm expects (3,H,W)");
  const int64_t h = img.dim(1), w = img.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_data(ErrCode::BadFile, "cannot write " + path);
  os << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> buf(static_cast<size_t>(3 * h * w));
  for (int64_t p = 0; p < h * w; ++p)
    for (int64_t c = 0; c < 3; ++c) {
      const real v = std::clamp(img[c * h * w + p], real(0), real(1));
      buf[static_cast<size_t>(p * 3 + c)] =
          static_cast<unsigned char>(std::lround(static_cast<double>(v) * 255.0));
    }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

ClassGrid read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_data(ErrCode::BadFile, "cannot open " + path);
  const std::string magic = next_token(is);
  if (magic != "P5" && magic != "P2") throw_data(ErrCode::BadFile, path + ": not a PGM file");
  const int64_t w = int_token(is, path);
  const int64_t h = int_token(is, path);
  const int64_t maxval = int_token(is, path);
  if (maxval <= 0 || maxval > 65535) throw_data(ErrCode::BadFile, path + ": unsupported maxval");
  ClassGrid g(h, w);
  if (magic == "P5") {
    if (maxval > 255) {
      std::vector<unsigned char> buf(static_cast<size_t>(2 * h * w));
      is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
      if (!is) throw_data(ErrCode::BadFile, path + ": truncated pixel data");
      for (int64_t p = 0; p < h * w; ++p)
        g.ids[static_cast<size_t>(p)] = static_cast<uint16_t>(
            (buf[static_cast<size_t>(2 * p)] << 8) | buf[static_cast<size_t>(2 * p + 1)]);
    } else {
      std::vector<unsigned char> buf(static_cast<size_t>(h * w));
      is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
      if (!is) throw_data(ErrCode::BadFile, path + ": truncated pixel data");
      for (int64_t p = 0; p < h * w; ++p) g.ids[static_cast<size_t>(p)] = buf[static_cast<size_t>(p)];
    }
  } else {
    for (int64_t p = 0; p < h * w; ++p)
      g.ids[static_cast<size_t>(p)] = static_cast<uint16_t>(int_token(is, path));
  }
  return g;
}

ClassGrid read_class_grid(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".ftc1") {
    Shape shape;
    auto ids = ftc1_read_u16(path, shape);
    if (shape.size() != 2) throw_data(ErrCode::BadFile, path + ": class grid must be rank 2");
    ClassGrid g(shape[0], shape[1]);
    g.ids = std::move(ids);
    return g;
  }
  return read_pgm(path);
}

void write_pgm(const std::string& path, const ClassGrid& grid, bool binary) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_data(ErrCode::BadFile, "cannot write " + path);
  if (binary) {
    os << "P5\n" << grid.width << " " << grid.height << "\n65535\n";
    for (uint16_t v : grid.ids) {
      const unsigned char b[2] = {static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v & 0xff)};
      os.write(reinterpret_cast<const char*>(b), 2);
    }
  } else {
    os << "P2\n" << grid.width << " " << grid.height << "\n65535\n";
    for (int64_t y = 0; y < grid.height; ++y) {
      for (int64_t x = 0; x < grid.width; ++x) {
        os << grid.at(y, x);
        os << (x + 1 == grid.width ? '\n' : ' ');
      }
    }
  }
}

}  // namespace madt
