#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "panovid/video.hpp"

namespace panovid {

enum class VideoFormat { PngDir, Y4m };

VideoFormat parse_video_format(const std::string& name);
// ".y4m" files are YUV4MPEG2, anything else is a PNG frame directory.
VideoFormat guess_video_format(const std::filesystem::path& path);

Video load_video(const std::filesystem::path& path, VideoFormat format);
Video load_video(const std::filesystem::path& path);
void save_video(const Video& v, const std::filesystem::path& path, VideoFormat format);
void save_video(const Video& v, const std::filesystem::path& path);

// Mask directories hold mask_%06d.png files; values >= 128 are valid.
Mask load_mask(const std::filesystem::path& dir);
Mask load_mask(const std::filesystem::path& dir, const Video& paired);
void save_mask(const Mask& m, const std::filesystem::path& dir);

std::string frame_filename(int index);
std::string mask_filename(int index);

// Sample quantization shared by every writer.
std::uint16_t quantize(float v, int bit_depth);
float dequantize(std::uint16_t q, int bit_depth);

// Raw PNG access. Channels are 1 or 3 after load (alpha dropped, palette expanded).
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 3;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};
PngImage read_png(const std::filesystem::path& path);
void write_png(const PngImage& image, const std::filesystem::path& path);

// ---- YUV4MPEG2 ----
//
// 8-bit 4:2:0 and 4:4:4. Chroma is upsampled to 4:4:4 by sample replication
// (each chroma sample covers its 2x2 luma block), then converted with BT.601
// limited-range integer coefficients:
//   R = (298*(Y-16) + 409*(V-128) + 128) >> 8
//   G = (298*(Y-16) - 100*(U-128) - 208*(V-128) + 128) >> 8
//   B = (298*(Y-16) + 516*(U-128) + 128) >> 8
// Writing uses the inverse integer transform and 2x2 box-averaged chroma.

struct YuvPlanes {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> u;  // full resolution after upsampling
  std::vector<std::uint8_t> v;
};

std::vector<std::uint8_t> upsample_chroma_420(const std::vector<std::uint8_t>& plane,
                                              int width, int height);
std::array<std::uint8_t, 3> yuv_to_rgb(int y, int u, int v);
std::array<std::uint8_t, 3> rgb_to_yuv(int r, int g, int b);

}  // namespace panovid
