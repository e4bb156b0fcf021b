#include "mgrdn/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace mgr {

namespace {

std::string lower_extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

Tensor<float> from_interleaved(const std::vector<std::uint8_t>& buf, int c, int h, int w) {
  Tensor<float> t(Shape{1, c, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        t.at(0, ch, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * c + ch] / 255.0f;
      }
  return t;
}

std::vector<std::uint8_t> to_interleaved(const Tensor<float>& t) {
  const int c = t.c(), h = t.h(), w = t.w();
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(c) * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        buf[(static_cast<std::size_t>(y) * w + x) * c + ch] = quantize(t.at(0, ch, y, x));
      }
  return buf;
}

ImageFile load_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path + ": " + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw std::runtime_error("unsupported PNG " + path + ": 16-bit images are not supported");
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int c = color ? 3 : 1;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG " + path + ": " + msg);
  }
  return {from_interleaved(buf, c, static_cast<int>(image.height), static_cast<int>(image.width)),
          ImageFormat::png8};
}

void save_png(const Tensor<float>& t, const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(t.w());
  image.height = static_cast<png_uint_32>(t.h());
  image.format = t.c() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto buf = to_interleaved(t);
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path + ": " + image.message);
  }
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

ImageFile load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  if (pgm_token(in) != "P5") throw std::runtime_error("unsupported PGM " + path + ": expected binary P5");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pgm_token(in));
    h = std::stoi(pgm_token(in));
    maxval = std::stoi(pgm_token(in));
  } catch (const std::exception&) {
    throw std::runtime_error("malformed PGM header in " + path);
  }
  if (w <= 0 || h <= 0) throw std::runtime_error("malformed PGM dimensions in " + path);
  if (maxval != 255) {
    throw std::runtime_error("unsupported PGM " + path + ": maxval " + std::to_string(maxval) +
                             " (only 8-bit, maxval 255)");
  }
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw std::runtime_error("truncated PGM " + path);
  }
  return {from_interleaved(buf, 1, h, w), ImageFormat::pgm};
}

void save_pgm(const Tensor<float>& t, const std::string& path) {
  if (t.c() != 1) throw std::invalid_argument("save_image: PGM needs a 1-channel image: " + path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << t.w() << ' ' << t.h() << "\n255\n";
  const auto buf = to_interleaved(t);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace

ImageFile load_image(const std::string& path) {
  const std::string ext = lower_extension(path);
  if (ext == "png") return load_png(path);
  if (ext == "pgm") return load_pgm(path);
  throw std::runtime_error("unsupported image format '" + ext + "' for " + path + " (expected .png or .pgm)");
}

void save_image(const Tensor<float>& image, const std::string& path) {
  if (image.n() != 1 || (image.c() != 1 && image.c() != 3)) {
    throw std::invalid_argument("save_image: expected (1,1|3,h,w), got " + image.shape().str());
  }
  const std::string ext = lower_extension(path);
  if (ext == "png") return save_png(image, path);
  if (ext == "pgm") return save_pgm(image, path);
  throw std::runtime_error("unsupported image format '" + ext + "' for " + path + " (expected .png or .pgm)");
}

Tensor<float> to_gray(const Tensor<float>& image) {
  if (image.c() == 1) return image;
  if (image.c() != 3) throw std::invalid_argument("to_gray: expected 1 or 3 channels");
  Tensor<float> g(Shape{image.n(), 1, image.h(), image.w()});
  const std::size_t plane = image.shape().plane();
  for (int n = 0; n < image.n(); ++n) {
    const float* r = image.plane(n, 0);
    const float* gr = image.plane(n, 1);
    const float* b = image.plane(n, 2);
    float* dst = g.plane(n, 0);
    for (std::size_t i = 0; i < plane; ++i) dst[i] = 0.299f * r[i] + 0.587f * gr[i] + 0.114f * b[i];
  }
  return g;
}

Tensor<float> crop(const Tensor<float>& image, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > image.h() || left + w > image.w()) {
    throw std::invalid_argument("crop: window out of bounds for " + image.shape().str());
  }
  Tensor<float> out(Shape{image.n(), image.c(), h, w});
  for (int n = 0; n < image.n(); ++n)
    for (int c = 0; c < image.c(); ++c)
      for (int y = 0; y < h; ++y) {
        const float* src = image.plane(n, c) + static_cast<std::size_t>(top + y) * image.w() + left;
        std::copy(src, src + w, out.plane(n, c) + static_cast<std::size_t>(y) * w);
      }
  return out;
}

}  // namespace mgr
