#include <doctest.h>
#include <png.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "tbscreen/error.hpp"
#include "tbscreen/image_io.hpp"
#include "tbscreen/rng.hpp"

using namespace tbscreen;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tbscreen_test_image_io";
  fs::create_directories(dir);
  return dir / name;
}

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

// Raw libpng writer for formats save_image never produces.
void write_png(const fs::path& p, int color_type, int depth, std::size_t w, std::size_t h) {
  FILE* fp = std::fopen(p.c_str(), "wb");
  REQUIRE(fp);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, fp);
  png_set_IHDR(png, info, w, h, depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(png_get_rowbytes(png, info), 0x5a);
  for (std::size_t y = 0; y < h; ++y) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace

TEST_CASE("8-bit PGM values map to [0, 1]") {
  const auto p = scratch("ramp.pgm");
  write_bytes(p, std::string("P5\n3 1\n255\n") + '\x00' + '\x80' + '\xff');
  const Tensor t = load_image(p);
  CHECK(t.shape() == Shape{1, 1, 3});
  CHECK(t[0] == 0.0);
  CHECK(t[1] == 128.0 / 255.0);
  CHECK(t[2] == 1.0);
}

TEST_CASE("16-bit and ASCII PGM") {
  auto p = scratch("deep.pgm");
  write_bytes(p, std::string("P5\n2 1\n65535\n") + '\xff' + '\xff' + '\x00' + '\x01');
  Tensor t = load_image(p);
  CHECK(t[0] == 1.0);
  CHECK(t[1] == 1.0 / 65535.0);

  p = scratch("ascii.pgm");
  write_bytes(p, "P2\n# comment\n2 2\n4\n0 1\n2 4\n");
  t = load_image(p);
  CHECK(t.shape() == Shape{1, 2, 2});
  CHECK(t.values() == std::vector<double>{0.0, 0.25, 0.5, 1.0});
}

TEST_CASE("PNG and PGM round trips reproduce bytes") {
  Rng rng(12);
  Tensor img({1, 37, 53});
  for (auto& v : img.data()) v = rng.integer(0, 255) / 255.0;
  for (const char* name : {"rt.png", "rt.pgm"}) {
    const auto a = scratch(name);
    save_image(a, img);
    const Tensor loaded = load_image(a);
    CHECK(loaded == img);
    const auto b = scratch(std::string("again_") + name);
    save_image(b, loaded);
    CHECK(bytes_of(a) == bytes_of(b));
  }
  Tensor deep({1, 5, 7});
  for (auto& v : deep.data()) v = rng.integer(0, 65535) / 65535.0;
  const auto d = scratch("deep.png");
  save_image(d, deep, 16);
  CHECK(load_image(d) == deep);
}

TEST_CASE("micrograph extents") {
  const auto p = scratch("full.png");
  save_image(p, Tensor({1, 2700, 3840}, 0.5));
  CHECK(load_image(p).shape() == Shape{1, 2700, 3840});
}

TEST_CASE("load errors are distinct") {
  CHECK_THROWS_AS(load_image(scratch("missing.png")), IoError);

  auto p = scratch("rgb.png");
  write_png(p, PNG_COLOR_TYPE_RGB, 8, 4, 4);
  CHECK_THROWS_AS(load_image(p), NotGrayscaleError);

  p = scratch("gray4.png");
  write_png(p, PNG_COLOR_TYPE_GRAY, 4, 4, 4);
  CHECK_THROWS_AS(load_image(p), UnsupportedDepthError);

  p = scratch("colour.pgm");
  write_bytes(p, "P6\n1 1\n255\nabc");
  CHECK_THROWS_AS(load_image(p), NotGrayscaleError);

  p = scratch("truncated.pgm");
  write_bytes(p, "P5\n4 4\n255\nab");
  CHECK_THROWS_AS(load_image(p), ImageFormatError);

  p = scratch("junk.png");
  write_bytes(p, "definitely not an image");
  CHECK_THROWS_AS(load_image(p), ImageFormatError);

  CHECK_THROWS_AS(save_image(scratch("x.bmp"), Tensor({1, 2, 2})), ImageFormatError);
  CHECK_THROWS_AS(save_image(scratch("x.png"), Tensor({1, 2, 2}), 12), UnsupportedDepthError);
}
