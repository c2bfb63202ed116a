#include "tbscreen/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "tbscreen/error.hpp"

namespace tbscreen {

namespace {

struct RawImage {
  std::size_t width = 0, height = 0;
  unsigned max_value = 255;
  std::vector<std::uint16_t> pixels;
};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open '" + path.string() + "': " + std::strerror(errno));
  return f;
}

enum class PngStatus { ok, not_grayscale, bad_depth, corrupt };

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<char*>(png_get_error_ptr(png));
  std::snprintf(buf, 256, "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

// No C++ objects with destructors may be created between setjmp and the end
// of this function.
PngStatus read_png(std::FILE* fp, RawImage& out, char* errbuf) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, errbuf, png_error_fn, png_warning_fn);
  if (!png) return PngStatus::corrupt;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return PngStatus::corrupt;
  }
  volatile PngStatus status = PngStatus::ok;
  std::vector<png_bytep>* volatile rows = nullptr;
  std::vector<png_byte>* volatile buffer = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    delete rows;
    delete buffer;
    png_destroy_read_struct(&png, &info, nullptr);
    return PngStatus::corrupt;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    status = PngStatus::not_grayscale;
  } else if (depth != 8 && depth != 16) {
    status = PngStatus::bad_depth;
  } else {
    const std::size_t bytes = depth / 8;
    buffer = new std::vector<png_byte>(static_cast<std::size_t>(width) * height * bytes);
    rows = new std::vector<png_bytep>(height);
    for (png_uint_32 y = 0; y < height; ++y)
      (*rows)[y] = buffer->data() + static_cast<std::size_t>(y) * width * bytes;
    png_read_image(png, rows->data());
    png_read_end(png, nullptr);
    out.width = width;
    out.height = height;
    out.max_value = depth == 8 ? 255u : 65535u;
    out.pixels.resize(static_cast<std::size_t>(width) * height);
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
      out.pixels[i] = depth == 8 ? (*buffer)[i]
                                 : static_cast<std::uint16_t>(((*buffer)[2 * i] << 8) | (*buffer)[2 * i + 1]);
  }
  delete rows;
  delete buffer;
  png_destroy_read_struct(&png, &info, nullptr);
  return status;
}

RawImage load_png(const std::filesystem::path& path) {
  auto fp = open_file(path, "rb");
  RawImage img;
  char errbuf[256] = {0};
  switch (read_png(fp.get(), img, errbuf)) {
    case PngStatus::ok: return img;
    case PngStatus::not_grayscale: throw NotGrayscaleError("'" + path.string() + "' is not a grayscale PNG");
    case PngStatus::bad_depth: throw UnsupportedDepthError("'" + path.string() + "' has an unsupported bit depth");
    case PngStatus::corrupt: break;
  }
  throw ImageFormatError("corrupt PNG '" + path.string() + "': " + errbuf);
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

unsigned long pnm_number(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = pnm_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit))
    throw ImageFormatError("malformed PGM header in '" + path.string() + "'");
  return std::stoul(tok);
}

RawImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::string magic = pnm_token(in);
  if (magic == "P3" || magic == "P6") throw NotGrayscaleError("'" + path.string() + "' is a colour PPM");
  if (magic != "P5" && magic != "P2") throw ImageFormatError("'" + path.string() + "' is not a PGM");
  RawImage img;
  img.width = pnm_number(in, path);
  img.height = pnm_number(in, path);
  const unsigned long maxval = pnm_number(in, path);
  if (img.width == 0 || img.height == 0) throw ImageFormatError("empty PGM '" + path.string() + "'");
  if (maxval == 0 || maxval > 65535)
    throw UnsupportedDepthError("PGM maxval " + std::to_string(maxval) + " in '" + path.string() + "'");
  img.max_value = static_cast<unsigned>(maxval);
  img.pixels.resize(img.width * img.height);
  if (magic == "P5") {
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> buf(img.pixels.size() * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size())
      throw ImageFormatError("truncated PGM '" + path.string() + "'");
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      img.pixels[i] = bytes == 1 ? buf[i] : static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
  } else {
    for (auto& p : img.pixels) p = static_cast<std::uint16_t>(pnm_number(in, path));
  }
  for (auto p : img.pixels)
    if (p > maxval) throw ImageFormatError("PGM pixel exceeds maxval in '" + path.string() + "'");
  return img;
}

std::vector<std::uint16_t> quantize(const Tensor& image, unsigned max_value) {
  std::vector<std::uint16_t> out(image.size());
  const auto data = image.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::clamp(data[i], 0.0, 1.0);
    out[i] = static_cast<std::uint16_t>(std::lround(v * max_value));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, std::size_t w, std::size_t h,
               const std::vector<std::uint16_t>& px, int depth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "P5\n" << w << " " << h << "\n" << (depth == 8 ? 255 : 65535) << "\n";
  std::vector<unsigned char> buf;
  buf.reserve(px.size() * (depth / 8));
  for (auto p : px) {
    if (depth == 16) buf.push_back(static_cast<unsigned char>(p >> 8));
    buf.push_back(static_cast<unsigned char>(p & 0xff));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

bool write_png_raw(std::FILE* fp, std::size_t w, std::size_t h, std::vector<png_byte>& buf,
                   int depth, char* errbuf) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, errbuf, png_error_fn, png_warning_fn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  std::vector<png_bytep>* volatile rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    delete rows;
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_compression_level(png, 3);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  rows = new std::vector<png_bytep>(h);
  const std::size_t stride = w * (depth / 8);
  for (std::size_t y = 0; y < h; ++y) (*rows)[y] = buf.data() + y * stride;
  png_write_image(png, rows->data());
  png_write_end(png, nullptr);
  delete rows;
  png_destroy_write_struct(&png, &info);
  return true;
}

void write_png(const std::filesystem::path& path, std::size_t w, std::size_t h,
               const std::vector<std::uint16_t>& px, int depth) {
  std::vector<png_byte> buf;
  buf.reserve(px.size() * (depth / 8));
  for (auto p : px) {
    if (depth == 16) buf.push_back(static_cast<png_byte>(p >> 8));
    buf.push_back(static_cast<png_byte>(p & 0xff));
  }
  auto fp = open_file(path, "wb");
  char errbuf[256] = {0};
  if (!write_png_raw(fp.get(), w, h, buf, depth, errbuf))
    throw IoError("failed writing PNG '" + path.string() + "': " + errbuf);
  if (std::fflush(fp.get()) != 0) throw IoError("failed writing PNG '" + path.string() + "'");
}

bool has_png_signature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  unsigned char sig[8] = {0};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

}  // namespace

Tensor load_image(const std::filesystem::path& path) {
  const RawImage raw = has_png_signature(path) ? load_png(path) : load_pgm(path);
  Tensor out({1, raw.height, raw.width});
  const double max_value = static_cast<double>(raw.max_value);
  auto data = out.data();
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) data[i] = raw.pixels[i] / max_value;
  return out;
}

void save_image(const std::filesystem::path& path, const Tensor& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16)
    throw UnsupportedDepthError("save_image supports 8 or 16 bits, got " + std::to_string(bit_depth));
  std::size_t h = 0, w = 0;
  if (image.rank() == 3 && image.dim(0) == 1) {
    h = image.dim(1);
    w = image.dim(2);
  } else if (image.rank() == 2) {
    h = image.dim(0);
    w = image.dim(1);
  } else {
    throw DimensionError("save_image expects [1,H,W] or [H,W], got " + shape_string(image.shape()));
  }
  const auto px = quantize(image, bit_depth == 8 ? 255u : 65535u);
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".png")
    write_png(path, w, h, px, bit_depth);
  else if (ext == ".pgm")
    write_pgm(path, w, h, px, bit_depth);
  else
    throw ImageFormatError("unsupported image extension '" + ext + "'");
}

}  // namespace tbscreen
