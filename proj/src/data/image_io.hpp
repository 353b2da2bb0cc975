#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace sologan {

// 8-bit interleaved RGB image.
struct ImageU8 {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> pixels;  // height * width * 3

  uint8_t* row(int64_t y) { return pixels.data() + y * width * 3; }
  const uint8_t* row(int64_t y) const { return pixels.data() + y * width * 3; }
};

// Decodes a PNG or JPEG file (sniffed by signature) to RGB8.
// Throws ErrorCode::decode naming the file on any failure.
ImageU8 decode_image_file(const std::string& path);

void encode_png(const std::string& path, const ImageU8& image);

// Bilinear resize.
ImageU8 resize_bilinear(const ImageU8& src, int64_t out_w, int64_t out_h);

// [-1,1] float CHW plane -> RGB8 with clamping.
ImageU8 plane_to_image(const Tensor<float>& chw);

// RGB8 -> [-1,1] float CHW plane.
Tensor<float> image_to_plane(const ImageU8& img);

}  // namespace sologan
