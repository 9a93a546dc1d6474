#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "panovid/video.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("panovid_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

// Samples on the 8-bit lattice, so PNG round trips are exact.
inline panovid::Video random_video(int t, int h, int w, unsigned seed, bool quantized = true) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  panovid::Video v(t, h, w, 3);
  for (float& x : v.data()) x = quantized ? d(rng) / 255.0f : u(rng);
  return v;
}

inline panovid::Mask full_mask(int t, int h, int w) { return panovid::Mask(t, h, w, 1); }

}  // namespace testing
