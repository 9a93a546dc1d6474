#include "panovid/video.hpp"

#include <algorithm>
#include <numeric>

#include "panovid/error.hpp"

namespace panovid {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io error";
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Registration: return "registration error";
    case ErrorKind::Degeneracy: return "degeneracy error";
    case ErrorKind::Contract: return "contract error";
    case ErrorKind::Layout: return "layout error";
    case ErrorKind::Backend: return "backend error";
    case ErrorKind::Handshake: return "handshake error";
  }
  return "error";
}

Video::Video(int frames, int height, int width, int channels, float fill)
    : frames_(frames), height_(height), width_(width), channels_(channels) {
  if (frames < 1 || height < 1 || width < 1 || channels < 1) {
    fail(ErrorKind::Dimension, "video dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(frames) * height * width * channels, fill);
}

Mask::Mask(int frames, int height, int width, std::uint8_t fill)
    : frames_(frames), height_(height), width_(width) {
  if (frames < 1 || height < 1 || width < 1) {
    fail(ErrorKind::Dimension, "mask dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(frames) * height * width, fill);
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(data_.begin(), data_.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

void require_same_dims(const Video& v, const Mask& m, const std::string& what) {
  if (!m.matches(v)) {
    fail(ErrorKind::Dimension,
         what + ": mask " + std::to_string(m.frames()) + "x" + std::to_string(m.height()) +
             "x" + std::to_string(m.width()) + " does not match video " +
             std::to_string(v.frames()) + "x" + std::to_string(v.height()) + "x" +
             std::to_string(v.width()));
  }
}

Video slice_frames(const Video& v, int begin, int end) {
  Video out(end - begin, v.height(), v.width(), v.channels());
  out.frame_rate = v.frame_rate;
  out.color_space = v.color_space;
  out.bit_depth = v.bit_depth;
  std::copy(v.data().begin() + begin * v.frame_size(), v.data().begin() + end * v.frame_size(),
            out.data().begin());
  return out;
}

Mask slice_frames(const Mask& m, int begin, int end) {
  Mask out(end - begin, m.height(), m.width());
  std::copy(m.data().begin() + begin * m.frame_size(), m.data().begin() + end * m.frame_size(),
            out.data().begin());
  return out;
}

Video reverse_frames(const Video& v) {
  Video out = v;
  for (int t = 0; t < v.frames(); ++t) {
    auto src = v.frame(v.frames() - 1 - t);
    std::copy(src.begin(), src.end(), out.frame(t).begin());
  }
  return out;
}

Mask reverse_frames(const Mask& m) {
  Mask out = m;
  for (int t = 0; t < m.frames(); ++t) {
    std::copy(m.data().begin() + (m.frames() - 1 - t) * m.frame_size(),
              m.data().begin() + (m.frames() - t) * m.frame_size(),
              out.data().begin() + t * m.frame_size());
  }
  return out;
}

}  // namespace panovid
