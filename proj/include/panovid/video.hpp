#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace panovid {

// Dense T x H x W x C float volume in [0,1], row-major with channels last.
// Used both for input videos and for panoramic canvas videos.
class Video {
 public:
  Video() = default;
  Video(int frames, int height, int width, int channels = 3, float fill = 0.0f);

  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  std::size_t frame_size() const {
    return static_cast<std::size_t>(height_) * width_ * channels_;
  }
  std::size_t index(int t, int y, int x, int c = 0) const {
    return ((static_cast<std::size_t>(t) * height_ + y) * width_ + x) * channels_ + c;
  }

  float& at(int t, int y, int x, int c = 0) { return data_[index(t, y, x, c)]; }
  float at(int t, int y, int x, int c = 0) const { return data_[index(t, y, x, c)]; }

  std::span<float> frame(int t) {
    return {data_.data() + t * frame_size(), frame_size()};
  }
  std::span<const float> frame(int t) const {
    return {data_.data() + t * frame_size(), frame_size()};
  }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool same_shape(const Video& other) const {
    return frames_ == other.frames_ && height_ == other.height_ &&
           width_ == other.width_ && channels_ == other.channels_;
  }

  double frame_rate = 30.0;
  std::string color_space = "srgb";
  int bit_depth = 8;

 private:
  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Binary T x H x W validity volume (1 = observed pixel).
class Mask {
 public:
  Mask() = default;
  Mask(int frames, int height, int width, std::uint8_t fill = 0);

  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }

  std::size_t frame_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t index(int t, int y, int x) const {
    return (static_cast<std::size_t>(t) * height_ + y) * width_ + x;
  }

  std::uint8_t& at(int t, int y, int x) { return data_[index(t, y, x)]; }
  std::uint8_t at(int t, int y, int x) const { return data_[index(t, y, x)]; }

  std::vector<std::uint8_t>& data() { return data_; }
  const std::vector<std::uint8_t>& data() const { return data_; }

  bool matches(const Video& v) const {
    return frames_ == v.frames() && height_ == v.height() && width_ == v.width();
  }
  bool same_shape(const Mask& other) const {
    return frames_ == other.frames_ && height_ == other.height_ && width_ == other.width_;
  }
  std::size_t count() const;

 private:
  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

// Throws a dimension error unless `m` matches `v` frame-for-frame.
void require_same_dims(const Video& v, const Mask& m, const std::string& what);

// Frame range helpers used across the pipeline.
Video slice_frames(const Video& v, int begin, int end);
Mask slice_frames(const Mask& m, int begin, int end);
Video reverse_frames(const Video& v);
Mask reverse_frames(const Mask& m);

}  // namespace panovid
