#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "madt/ftc1.hpp"
#include "madt/imageio.hpp"
#include "madt/rng.hpp"

using namespace madt;
namespace fs = std::filesystem;

namespace {
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("madt_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};
}  // namespace

TEST_CASE("ftc1 round-trip f64/f32") {
  TempDir td;
  Rng rng(1);
  Tensor t({2, 3, 4});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<real>(rng.normal());
  ftc1_write(td.file("a.ftc1"), t, FtcDtype::F64);
  Tensor back = ftc1_read(td.file("a.ftc1"));
  REQUIRE(back.shape() == t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) CHECK(back[i] == t[i]);

  ftc1_write(td.file("b.ftc1"), t, FtcDtype::F32);
  Tensor b32 = ftc1_read(td.file("b.ftc1"));
  for (int64_t i = 0; i < t.numel(); ++i)
    CHECK(b32[i] == doctest::Approx(t[i]).epsilon(1e-6));
  CHECK(ftc1_peek_dtype(td.file("b.ftc1")) == FtcDtype::F32);
}

TEST_CASE("ftc1 u16 payload") {
  TempDir td;
  std::vector<uint16_t> ids = {0, 1, 65535, 42, 7, 9};
  ftc1_write_u16(td.file("g.ftc1"), {2, 3}, ids);
  Shape s;
  auto back = ftc1_read_u16(td.file("g.ftc1"), s);
  CHECK(s == Shape{2, 3});
  CHECK(back == ids);
}

TEST_CASE("ftc1 rejects garbage") {
  TempDir td;
  {
    FILE* f = fopen(td.file("bad.ftc1").c_str(), "wb");
    fputs("NOPE", f);
    fclose(f);
  }
  CHECK_THROWS_AS(ftc1_read(td.file("bad.ftc1")), Error);
}

TEST_CASE("ppm round-trip at 8-bit resolution") {
  TempDir td;
  Tensor img({3, 4, 5});
  Rng rng(2);
  for (int64_t i = 0; i < img.numel(); ++i) img[i] = static_cast<real>(rng.uniform());
  write_ppm(td.file("x.ppm"), img);
  Tensor back = read_ppm(td.file("x.ppm"));
  REQUIRE(back.shape() == img.shape());
  for (int64_t i = 0; i < img.numel(); ++i)
    CHECK(std::abs(back[i] - img[i]) <= real(0.5) / 255 + real(1e-9));
}

TEST_CASE("p3 ascii ppm parses") {
  TempDir td;
  {
    FILE* f = fopen(td.file("a.ppm").c_str(), "w");
    fputs("P3\n# comment\n2 1\n255\n255 0 0  0 128 255\n", f);
    fclose(f);
  }
  Tensor img = read_ppm(td.file("a.ppm"));
  CHECK(img.dim(1) == 1);
  CHECK(img.dim(2) == 2);
  CHECK(img[0] == doctest::Approx(1.0));          // r of first pixel
  CHECK(img[2 + 1] == doctest::Approx(128.0 / 255));  // g channel, second pixel
}

TEST_CASE("pgm 16-bit round-trip binary and ascii") {
  TempDir td;
  ClassGrid g(3, 2);
  g.ids = {0, 300, 65535, 7, 142, 98};
  for (bool binary : {true, false}) {
    const std::string p = td.file(binary ? "b.pgm" : "a.pgm");
    write_pgm(p, g, binary);
    ClassGrid back = read_pgm(p);
    CHECK(back.height == 3);
    CHECK(back.width == 2);
    CHECK(back.ids == g.ids);
  }
}
