#include "data/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "common/error.hpp"

namespace sologan {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

ImageU8 decode_png(FILE* f, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::decode, "libpng init failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    raise(ErrorCode::decode, "libpng info init failed for " + path);
  }
  ImageU8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise(ErrorCode::decode, "failed to decode PNG file " + path);
  }
  png_init_io(png, f);
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<size_t>(w) * h * 3);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = img.row(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(mgr->jump, 1);
}

ImageU8 decode_jpeg(FILE* f, const std::string& path) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    raise(ErrorCode::decode, "failed to decode JPEG file " + path);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  ImageU8 img;
  img.width = cinfo.output_width;
  img.height = cinfo.output_height;
  img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.row(cinfo.output_scanline);
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace

ImageU8 decode_image_file(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  require(f != nullptr, ErrorCode::decode, "cannot open image file " + path);
  unsigned char sig[8] = {0};
  size_t got = std::fread(sig, 1, 8, f.get());
  require(got == 8, ErrorCode::decode, "image file too short to identify: " + path);
  std::rewind(f.get());
  if (png_sig_cmp(sig, 0, 8) == 0) return decode_png(f.get(), path);
  if (sig[0] == 0xFF && sig[1] == 0xD8) return decode_jpeg(f.get(), path);
  raise(ErrorCode::decode, "unsupported image format (not PNG/JPEG): " + path);
}

void encode_png(const std::string& path, const ImageU8& image) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  require(f != nullptr, ErrorCode::io, "cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::io, "libpng init failed writing " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    raise(ErrorCode::io, "libpng info init failed writing " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    raise(ErrorCode::io, "failed to encode PNG file " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < image.height; ++y)
    png_write_row(png, const_cast<png_bytep>(image.row(y)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU8 resize_bilinear(const ImageU8& src, int64_t out_w, int64_t out_h) {
  ImageU8 dst;
  dst.width = out_w;
  dst.height = out_h;
  dst.pixels.resize(static_cast<size_t>(out_w) * out_h * 3);
  double sx = static_cast<double>(src.width) / out_w;
  double sy = static_cast<double>(src.height) / out_h;
  for (int64_t y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int64_t y0 = static_cast<int64_t>(std::floor(fy));
    double wy = fy - y0;
    int64_t y1 = std::min(y0 + 1, src.height - 1);
    y0 = std::max<int64_t>(y0, 0);
    for (int64_t x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int64_t x0 = static_cast<int64_t>(std::floor(fx));
      double wx = fx - x0;
      int64_t x1 = std::min(x0 + 1, src.width - 1);
      x0 = std::max<int64_t>(x0, 0);
      for (int c = 0; c < 3; ++c) {
        double v00 = src.pixels[(y0 * src.width + x0) * 3 + c];
        double v01 = src.pixels[(y0 * src.width + x1) * 3 + c];
        double v10 = src.pixels[(y1 * src.width + x0) * 3 + c];
        double v11 = src.pixels[(y1 * src.width + x1) * 3 + c];
        double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
        dst.pixels[(y * out_w + x) * 3 + c] = static_cast<uint8_t>(std::lround(std::min(255.0, std::max(0.0, v))));
      }
    }
  }
  return dst;
}

ImageU8 plane_to_image(const Tensor<float>& chw) {
  require(chw.ndim() == 3 && chw.dim(0) == 3, ErrorCode::shape_mismatch,
          "plane_to_image expects [3,H,W]");
  int64_t h = chw.dim(1), w = chw.dim(2);
  ImageU8 img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<size_t>(w) * h * 3);
  for (int c = 0; c < 3; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        float v = (chw[(c * h + y) * w + x] + 1.0f) * 127.5f;
        v = std::min(255.0f, std::max(0.0f, v));
        img.pixels[(y * w + x) * 3 + c] = static_cast<uint8_t>(std::lround(v));
      }
  return img;
}

Tensor<float> image_to_plane(const ImageU8& img) {
  Tensor<float> out({3, img.height, img.width});
  for (int c = 0; c < 3; ++c)
    for (int64_t y = 0; y < img.height; ++y)
      for (int64_t x = 0; x < img.width; ++x)
        out[(c * img.height + y) * img.width + x] =
            static_cast<float>(img.pixels[(y * img.width + x) * 3 + c]) / 127.5f - 1.0f;
  return out;
}

}  // namespace sologan
