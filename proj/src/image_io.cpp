#include "smfn/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>

namespace smfn {

Image8 read_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw ValidationError("cannot read PNG " + path + ": " + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = color ? 3 : 1;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ValidationError("cannot decode PNG " + path + ": " + msg);
  }
  return out;
}

void write_png(const std::string& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw ValidationError("write_png: 1 or 3 channels required");
  if (image.pixels.size() != image.width * image.height * image.channels)
    throw ValidationError("write_png: pixel buffer does not match extents");
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw std::runtime_error("cannot write PNG " + path + ": " + img.message);
}

Image8 plane_to_gray(const Plane& p) {
  Image8 img;
  img.width = static_cast<std::size_t>(p.cols());
  img.height = static_cast<std::size_t>(p.rows());
  img.channels = 1;
  img.pixels.resize(img.width * img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = std::round(p.data()[i]);
    img.pixels[i] = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
  }
  return img;
}

Plane gray_to_plane(const Image8& img) {
  if (img.channels != 1) throw ValidationError("expected a single-channel image");
  Plane p(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) p.data()[i] = img.pixels[i];
  return p;
}

}  // namespace smfn
