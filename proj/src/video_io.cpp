#include "panovid/video_io.hpp"

#include <png.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

#include "panovid/error.hpp"

namespace panovid {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string padded(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

std::uint8_t clamp_u8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

}  // namespace

VideoFormat parse_video_format(const std::string& name) {
  if (name == "png-dir" || name == "png") return VideoFormat::PngDir;
  if (name == "y4m") return VideoFormat::Y4m;
  fail(ErrorKind::Config, "unknown video format '" + name + "' (expected png-dir or y4m)");
}

VideoFormat guess_video_format(const fs::path& path) {
  return path.extension() == ".y4m" ? VideoFormat::Y4m : VideoFormat::PngDir;
}

std::string frame_filename(int index) { return "frame_" + padded(index) + ".png"; }
std::string mask_filename(int index) { return "mask_" + padded(index) + ".png"; }

std::uint16_t quantize(float v, int bit_depth) {
  const float maxv = bit_depth == 16 ? 65535.0f : 255.0f;
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint16_t>(std::lround(c * maxv));
}

float dequantize(std::uint16_t q, int bit_depth) {
  return bit_depth == 16 ? static_cast<float>(q) / 65535.0f : static_cast<float>(q) / 255.0f;
}

// ---------------------------------------------------------------- PNG

PngImage read_png(const fs::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) fail(ErrorKind::Io, "cannot open " + path.string());

  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    fail(ErrorKind::Io, "not a PNG file: " + path.string());
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::Io, "libpng initialization failed");
  }

  PngImage image;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::Io, "corrupt PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // host little-endian 16-bit samples
  png_read_update_info(png, info);

  image.width = static_cast<int>(png_get_image_width(png, info));
  image.height = static_cast<int>(png_get_image_height(png, info));
  image.channels = png_get_channels(png, info);
  image.bit_depth = png_get_bit_depth(png, info) == 16 ? 16 : 8;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * image.height);
  rows.resize(image.height);
  for (int y = 0; y < image.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(image.width) * image.height * image.channels;
  image.samples.resize(n);
  if (image.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      image.samples[i] = static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) image.samples[i] = buffer[i];
  }
  return image;
}

void write_png(const PngImage& image, const fs::path& path) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) fail(ErrorKind::Io, "cannot write " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "libpng initialization failed");
  }
  const int bytes = image.bit_depth == 16 ? 2 : 1;
  const std::size_t rowbytes = static_cast<std::size_t>(image.width) * image.channels * bytes;
  std::vector<png_byte> buffer(rowbytes * image.height);
  for (std::size_t i = 0; i < image.samples.size(); ++i) {
    if (bytes == 2) {
      buffer[2 * i] = static_cast<png_byte>(image.samples[i] >> 8);  // PNG is big-endian
      buffer[2 * i + 1] = static_cast<png_byte>(image.samples[i] & 0xff);
    } else {
      buffer[i] = static_cast<png_byte>(image.samples[i]);
    }
  }
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) rows[y] = buffer.data() + y * rowbytes;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 3);
  png_set_IHDR(png, info, image.width, image.height, image.bit_depth,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// ---------------------------------------------------------------- PNG dir

namespace {

Video load_png_dir(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::Io, "missing manifest: " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, manifest_path.string() + ": " + e.what());
  }
  int frames = 0, width = 0, height = 0;
  double rate = 0.0;
  try {
    frames = manifest.at("frames").get<int>();
    width = manifest.at("width").get<int>();
    height = manifest.at("height").get<int>();
    rate = manifest.at("frame_rate").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, manifest_path.string() + ": " + e.what());
  }
  if (frames < 1 || width < 1 || height < 1) {
    fail(ErrorKind::Dimension, manifest_path.string() + ": non-positive dimensions");
  }

  Video v(frames, height, width, 3);
  v.frame_rate = rate;
  v.color_space = manifest.value("color_space", std::string("srgb"));
  v.bit_depth = manifest.value("bit_depth", 8);
  for (int t = 0; t < frames; ++t) {
    const fs::path p = dir / frame_filename(t);
    if (!fs::exists(p)) {
      fail(ErrorKind::Io, "frame " + std::to_string(t) + " missing: " + p.string());
    }
    PngImage img;
    try {
      img = read_png(p);
    } catch (const Error& e) {
      fail(ErrorKind::Io, "frame " + std::to_string(t) + ": " + e.what());
    }
    if (img.width != width || img.height != height) {
      fail(ErrorKind::Dimension, "frame " + std::to_string(t) + " is " +
                                     std::to_string(img.width) + "x" +
                                     std::to_string(img.height) + ", manifest declares " +
                                     std::to_string(width) + "x" + std::to_string(height));
    }
    v.bit_depth = img.bit_depth;
    auto dst = v.frame(t);
    const std::size_t pixels = static_cast<std::size_t>(width) * height;
    for (std::size_t i = 0; i < pixels; ++i) {
      for (int c = 0; c < 3; ++c) {
        const std::uint16_t q = img.channels == 1 ? img.samples[i] : img.samples[i * 3 + c];
        dst[i * 3 + c] = dequantize(q, img.bit_depth);
      }
    }
  }
  return v;
}

void save_png_dir(const Video& v, const fs::path& dir) {
  if (v.channels() != 3) fail(ErrorKind::Dimension, "png-dir videos must have 3 channels");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  const int depth = v.bit_depth == 16 ? 16 : 8;
  PngImage img;
  img.width = v.width();
  img.height = v.height();
  img.channels = 3;
  img.bit_depth = depth;
  img.samples.resize(v.frame_size());
  for (int t = 0; t < v.frames(); ++t) {
    auto src = v.frame(t);
    for (std::size_t i = 0; i < src.size(); ++i) img.samples[i] = quantize(src[i], depth);
    write_png(img, dir / frame_filename(t));
  }

  json manifest = {{"frame_rate", v.frame_rate},
                   {"width", v.width()},
                   {"height", v.height()},
                   {"frames", v.frames()},
                   {"color_space", v.color_space},
                   {"bit_depth", depth}};
  std::ofstream out(dir / "manifest.json");
  if (!out) fail(ErrorKind::Io, "cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

}  // namespace

// ---------------------------------------------------------------- YUV4MPEG2

std::vector<std::uint8_t> upsample_chroma_420(const std::vector<std::uint8_t>& plane, int width,
                                              int height) {
  const int cw = (width + 1) / 2;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out[static_cast<std::size_t>(y) * width + x] = plane[static_cast<std::size_t>(y / 2) * cw + x / 2];
    }
  }
  return out;
}

std::array<std::uint8_t, 3> yuv_to_rgb(int y, int u, int v) {
  const int c = y - 16, d = u - 128, e = v - 128;
  return {clamp_u8((298 * c + 409 * e + 128) >> 8),
          clamp_u8((298 * c - 100 * d - 208 * e + 128) >> 8),
          clamp_u8((298 * c + 516 * d + 128) >> 8)};
}

std::array<std::uint8_t, 3> rgb_to_yuv(int r, int g, int b) {
  return {clamp_u8(((66 * r + 129 * g + 25 * b + 128) >> 8) + 16),
          clamp_u8(((-38 * r - 74 * g + 112 * b + 128) >> 8) + 128),
          clamp_u8(((112 * r - 94 * g - 18 * b + 128) >> 8) + 128)};
}

namespace {

struct Y4mHeader {
  int width = 0;
  int height = 0;
  double rate = 30.0;
  bool chroma420 = true;
};

Y4mHeader parse_y4m_header(const std::string& line, const fs::path& path) {
  std::istringstream ss(line);
  std::string magic;
  ss >> magic;
  if (magic != "YUV4MPEG2") fail(ErrorKind::Parse, path.string() + ": missing YUV4MPEG2 signature");
  Y4mHeader h;
  std::string tok;
  while (ss >> tok) {
    const char tag = tok[0];
    const std::string val = tok.substr(1);
    if (tag == 'W') {
      h.width = std::stoi(val);
    } else if (tag == 'H') {
      h.height = std::stoi(val);
    } else if (tag == 'F') {
      const auto colon = val.find(':');
      const double num = std::stod(val.substr(0, colon));
      const double den = colon == std::string::npos ? 1.0 : std::stod(val.substr(colon + 1));
      h.rate = den > 0 ? num / den : num;
    } else if (tag == 'C') {
      if (val.rfind("444", 0) == 0) {
        if (val != "444") fail(ErrorKind::Parse, path.string() + ": unsupported colorspace C" + val);
        h.chroma420 = false;
      } else if (val.rfind("420", 0) == 0) {
        h.chroma420 = true;
      } else {
        fail(ErrorKind::Parse, path.string() + ": unsupported colorspace C" + val);
      }
    }
  }
  if (h.width < 1 || h.height < 1) fail(ErrorKind::Dimension, path.string() + ": bad dimensions");
  return h;
}

Video load_y4m(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  const Y4mHeader h = parse_y4m_header(header, path);
  const std::size_t luma = static_cast<std::size_t>(h.width) * h.height;
  const int cw = h.chroma420 ? (h.width + 1) / 2 : h.width;
  const int ch = h.chroma420 ? (h.height + 1) / 2 : h.height;
  const std::size_t chroma = static_cast<std::size_t>(cw) * ch;

  std::vector<std::vector<float>> frames;
  std::vector<std::uint8_t> y(luma), u(chroma), v(chroma);
  std::string frame_line;
  int index = 0;
  while (std::getline(in, frame_line)) {
    if (frame_line.rfind("FRAME", 0) != 0) {
      fail(ErrorKind::Io, "frame " + std::to_string(index) + ": missing FRAME marker");
    }
    in.read(reinterpret_cast<char*>(y.data()), static_cast<std::streamsize>(luma));
    in.read(reinterpret_cast<char*>(u.data()), static_cast<std::streamsize>(chroma));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(chroma));
    if (!in) fail(ErrorKind::Io, "frame " + std::to_string(index) + ": truncated data");
    const auto uf = h.chroma420 ? upsample_chroma_420(u, h.width, h.height) : u;
    const auto vf = h.chroma420 ? upsample_chroma_420(v, h.width, h.height) : v;
    std::vector<float> rgb(luma * 3);
    for (std::size_t i = 0; i < luma; ++i) {
      const auto px = yuv_to_rgb(y[i], uf[i], vf[i]);
      for (int c = 0; c < 3; ++c) rgb[i * 3 + c] = dequantize(px[c], 8);
    }
    frames.push_back(std::move(rgb));
    ++index;
  }
  if (frames.empty()) fail(ErrorKind::Io, path.string() + ": no frames");

  Video out(static_cast<int>(frames.size()), h.height, h.width, 3);
  out.frame_rate = h.rate;
  for (int t = 0; t < out.frames(); ++t) std::copy(frames[t].begin(), frames[t].end(), out.frame(t).begin());
  return out;
}

void save_y4m(const Video& v, const fs::path& path, bool chroma420) {
  if (v.channels() != 3) fail(ErrorKind::Dimension, "y4m videos must have 3 channels");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());

  // Frame rate as a rational with millisecond-level precision.
  const long num = std::lround(v.frame_rate * 1000.0);
  out << "YUV4MPEG2 W" << v.width() << " H" << v.height() << " F" << num << ":1000 Ip A1:1 C"
      << (chroma420 ? "420jpeg" : "444") << "\n";

  const int w = v.width(), h = v.height();
  const std::size_t luma = static_cast<std::size_t>(w) * h;
  std::vector<std::uint8_t> yp(luma), up(luma), vp(luma);
  for (int t = 0; t < v.frames(); ++t) {
    auto src = v.frame(t);
    for (std::size_t i = 0; i < luma; ++i) {
      const auto yuv = rgb_to_yuv(quantize(src[i * 3], 8), quantize(src[i * 3 + 1], 8),
                                  quantize(src[i * 3 + 2], 8));
      yp[i] = yuv[0];
      up[i] = yuv[1];
      vp[i] = yuv[2];
    }
    out << "FRAME\n";
    out.write(reinterpret_cast<const char*>(yp.data()), static_cast<std::streamsize>(luma));
    if (!chroma420) {
      out.write(reinterpret_cast<const char*>(up.data()), static_cast<std::streamsize>(luma));
      out.write(reinterpret_cast<const char*>(vp.data()), static_cast<std::streamsize>(luma));
      continue;
    }
    const int cw = (w + 1) / 2, ch = (h + 1) / 2;
    std::vector<std::uint8_t> us(static_cast<std::size_t>(cw) * ch), vs(us.size());
    for (int cy = 0; cy < ch; ++cy) {
      for (int cx = 0; cx < cw; ++cx) {
        int su = 0, sv = 0, n = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int yy = 2 * cy + dy, xx = 2 * cx + dx;
            if (yy >= h || xx >= w) continue;
            su += up[static_cast<std::size_t>(yy) * w + xx];
            sv += vp[static_cast<std::size_t>(yy) * w + xx];
            ++n;
          }
        }
        us[static_cast<std::size_t>(cy) * cw + cx] = static_cast<std::uint8_t>((su + n / 2) / n);
        vs[static_cast<std::size_t>(cy) * cw + cx] = static_cast<std::uint8_t>((sv + n / 2) / n);
      }
    }
    out.write(reinterpret_cast<const char*>(us.data()), static_cast<std::streamsize>(us.size()));
    out.write(reinterpret_cast<const char*>(vs.data()), static_cast<std::streamsize>(vs.size()));
  }
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace

Video load_video(const fs::path& path, VideoFormat format) {
  if (!fs::exists(path)) fail(ErrorKind::Io, "no such file or directory: " + path.string());
  return format == VideoFormat::Y4m ? load_y4m(path) : load_png_dir(path);
}

Video load_video(const fs::path& path) { return load_video(path, guess_video_format(path)); }

void save_video(const Video& v, const fs::path& path, VideoFormat format) {
  if (format == VideoFormat::Y4m) {
    save_y4m(v, path, true);
  } else {
    save_png_dir(v, path);
  }
}

void save_video(const Video& v, const fs::path& path) { save_video(v, path, guess_video_format(path)); }

// ---------------------------------------------------------------- masks

Mask load_mask(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Io, "mask directory not found: " + dir.string());
  int frames = 0;
  while (fs::exists(dir / mask_filename(frames))) ++frames;
  if (frames == 0) fail(ErrorKind::Io, "no mask frames in " + dir.string());

  Mask m;
  std::size_t non_binary = 0;
  for (int t = 0; t < frames; ++t) {
    PngImage img;
    try {
      img = read_png(dir / mask_filename(t));
    } catch (const Error& e) {
      fail(ErrorKind::Io, "mask frame " + std::to_string(t) + ": " + e.what());
    }
    if (t == 0) {
      m = Mask(frames, img.height, img.width);
    } else if (img.width != m.width() || img.height != m.height()) {
      fail(ErrorKind::Dimension, "mask frame " + std::to_string(t) + " has inconsistent size");
    }
    const std::uint16_t full = img.bit_depth == 16 ? 65535 : 255;
    const std::uint16_t threshold = img.bit_depth == 16 ? 32768 : 128;
    const std::size_t pixels = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < pixels; ++i) {
      const std::uint16_t q = img.samples[i * img.channels];
      if (q != 0 && q != full) ++non_binary;
      m.data()[t * m.frame_size() + i] = q >= threshold ? 1 : 0;
    }
  }
  if (non_binary > 0) {
    spdlog::warn("{}: {} non-binary mask samples thresholded", dir.string(), non_binary);
  }
  return m;
}

Mask load_mask(const fs::path& dir, const Video& paired) {
  Mask m = load_mask(dir);
  require_same_dims(paired, m, dir.string());
  return m;
}

void save_mask(const Mask& m, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  PngImage img;
  img.width = m.width();
  img.height = m.height();
  img.channels = 1;
  img.bit_depth = 8;
  img.samples.resize(m.frame_size());
  for (int t = 0; t < m.frames(); ++t) {
    for (std::size_t i = 0; i < m.frame_size(); ++i) {
      img.samples[i] = m.data()[t * m.frame_size() + i] ? 255 : 0;
    }
    write_png(img, dir / mask_filename(t));
  }
}

}  // namespace panovid
