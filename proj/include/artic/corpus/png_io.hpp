#pragma once

#include <cstring>
#include <filesystem>
#include <vector>

#include <png.h>

#include "artic/core/error.hpp"
#include "artic/core/tensor.hpp"

namespace artic::corpus {

/// Interleaved 8-bit image (RGB or grayscale).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<unsigned char> pixels;
};

inline ImageU8 read_png(const std::filesystem::path& path, bool grayscale = false) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
  image.format = grayscale ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  ImageU8 out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.channels = grayscale ? 1 : 3;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("corrupt PNG '" + path.string() + "': " + image.message);
  }
  return out;
}

inline void write_png(const std::filesystem::path& path, const ImageU8& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(),
                               0, nullptr))
    throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
}

/// Bilinear resample of an 8-bit image to (out_w, out_h), per channel.
inline ImageU8 resize_bilinear(const ImageU8& src, int out_w, int out_h) {
  ImageU8 dst;
  dst.width = out_w;
  dst.height = out_h;
  dst.channels = src.channels;
  dst.pixels.resize(static_cast<std::size_t>(out_w) * out_h * src.channels);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = std::clamp(fy - y0, 0.0, 1.0);
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = std::clamp(fx - x0, 0.0, 1.0);
      for (int c = 0; c < src.channels; ++c) {
        auto px = [&](int xx, int yy) {
          return static_cast<double>(
              src.pixels[(static_cast<std::size_t>(yy) * src.width + xx) * src.channels + c]);
        };
        const double v = (1 - wy) * ((1 - wx) * px(x0, y0) + wx * px(x1, y0)) +
                         wy * ((1 - wx) * px(x0, y1) + wx * px(x1, y1));
        dst.pixels[(static_cast<std::size_t>(y) * out_w + x) * src.channels + c] =
            static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return dst;
}

/// 8-bit frame -> (3, H, W) intensities in [0,1] (divide by bit-depth max).
inline Tensor frame_to_tensor(const ImageU8& img) {
  Tensor t({3, img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const unsigned char v =
            img.channels == 1
                ? img.pixels[static_cast<std::size_t>(y) * img.width + x]
                : img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + c];
        t.at(c, y, x) = static_cast<real>(v) / real(255);
      }
  return t;
}

/// (3, H, W) [0,1] tensor -> interleaved 8-bit RGB.
inline ImageU8 tensor_to_frame(const Tensor& t) {
  if (t.ndim() != 3 || t.dim(0) != 3) throw ShapeError("tensor_to_frame: need (3,H,W)");
  ImageU8 img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
            static_cast<unsigned char>(
                std::lround(std::clamp(t.at(c, y, x), real(0), real(1)) * 255));
  return img;
}

/// Binary (H, W) 0/1 mask -> 0/255 grayscale.
inline ImageU8 mask_to_image(const Tensor& m) {
  if (m.ndim() != 2) throw ShapeError("mask_to_image: need (H,W)");
  ImageU8 img;
  img.height = m.dim(0);
  img.width = m.dim(1);
  img.channels = 1;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      img.pixels[static_cast<std::size_t>(y) * img.width + x] =
          m.at(y, x) > 0.5 ? 255 : 0;
  return img;
}

inline Tensor image_to_mask(const ImageU8& img) {
  Tensor m({img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      unsigned v = img.pixels[(static_cast<std::size_t>(y) * img.width + x) *
                              img.channels];
      m.at(y, x) = v > 127 ? real(1) : real(0);
    }
  return m;
}

}  // namespace artic::corpus
