#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "panovid/pyramid.hpp"
#include "panovid/rng.hpp"
#include "panovid/video.hpp"

namespace panovid {

enum class Flavor { Gaussian, Token };

const char* to_string(Flavor flavor);
Flavor parse_flavor(const std::string& name);

struct BackendDescriptor {
  Flavor flavor = Flavor::Gaussian;
  int context_frames = 80;
  int native_height = 128;
  int native_width = 128;
  bool causal = false;
  int sampling_steps = 256;   // gaussian flavor
  int vocabulary_size = 256;  // token flavor
  int patch_size = 8;
  int token_frames = 1;
  int max_concurrency = 0;  // 0: any number of concurrent window requests
  // Predictions ignore the sampler state (x_t); the sampler then only needs
  // the final step, which yields the same output as the full chain.
  bool state_independent = false;

  void validate() const;

  static BackendDescriptor gaussian_defaults();
  static BackendDescriptor token_defaults();
};

// Where a window sits inside the job. Reference backends use it to look up
// ground truth; external backends receive it in the request header.
struct WindowContext {
  int level = 0;
  std::vector<FrameSpan> spans;  // level-0 frames behind each window frame
  int x_offset = 0;              // left column in working resolution
  int working_width = 0;
  int working_height = 0;
  bool time_reversed = false;
};

// ------------------------------------------------------------ gaussian flavor

struct GaussianField {
  Video mean;
  Video variance;  // diagonal, >= 0
};

// Linear-beta DDPM schedule; timesteps are 1..steps, alpha_bar(0) == 1.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps, double beta_start = 1e-4, double beta_end = 0.02);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(t - 1); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars_.at(t - 1); }
  // Variance of q(x_{t-1} | x_t, x_0).
  double posterior_variance(int t) const;

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

// Per-step pinning masks. Frame f is pinned full-frame for steps
// s < full_frame_steps[f] and follows `base` afterwards. Step 0 is the first
// (noisiest) sampling step.
class MaskSchedule {
 public:
  MaskSchedule() = default;
  MaskSchedule(Mask base, std::vector<int> full_frame_steps, int steps);
  static MaskSchedule constant(const Mask& pinned, int steps);

  int steps() const { return steps_; }
  int frames() const { return base_.frames(); }
  int height() const { return base_.height(); }
  int width() const { return base_.width(); }
  const Mask& base() const { return base_; }
  const std::vector<int>& full_frame_steps() const { return full_frame_steps_; }

  bool frame_full(int step, int t) const { return step < full_frame_steps_[t]; }
  bool pinned(int step, int t, int y, int x) const { return frame_full(step, t) || base_.at(t, y, x); }
  Mask at_step(int step) const;
  Mask final_mask() const { return at_step(steps_ - 1); }

  MaskSchedule slice(int begin, int end) const;
  MaskSchedule crop_columns(int x0, int width) const;
  MaskSchedule resized(int height, int width) const;

 private:
  Mask base_;
  std::vector<int> full_frame_steps_;
  int steps_ = 0;
};

struct GaussianRequest {
  const Video& window;  // conditioning content
  const Mask& pinned;   // conditioning mask at this step
  const Video& state;   // x_t
  int step = 0;         // sampling step index, 0-based
  int timestep = 1;     // diffusion timestep t (counts down to 1)
  const NoiseSchedule& schedule;
  WindowContext context;
  std::uint64_t seed = 0;
};

class GaussianBackend {
 public:
  virtual ~GaussianBackend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  // Called once per job with the working-resolution canvas and its mask.
  virtual void prepare(const Video& /*canvas*/, const Mask& /*mask*/) {}
  // Returns the distribution of x_{t-1} for the window.
  virtual GaussianField predict(const GaussianRequest& request) const = 0;
};

// Validates shapes, pads short windows by repeating the last frame, calls
// the backend and un-pads.
GaussianField gaussian_predict(const GaussianBackend& backend, const GaussianRequest& request);

// Draws mean + sqrt(var) * eps with counter-based noise. Zero-variance
// samples copy the mean without consuming noise.
void sample_gaussian(const GaussianField& field, const CounterRng& rng, Video& out);

struct SamplerKey {
  std::uint64_t seed = 0;
  int level = 0;
  int stream = 0;  // distinguishes independent sampler runs at one level
};

// Full-state predictor for one sampling step (the aggregation point for
// MultiDiffusion-style samplers).
using FieldPredictor = std::function<GaussianField(const Video& state, int step, int timestep)>;

// Ancestral DDPM loop with replacement pinning: after every step, pixels
// pinned by the schedule are reset to the observed content noised to the
// next timestep (exactly the observed content after the final step).
Video ddpm_sample_loop(const Video& observed, const MaskSchedule& schedule, const NoiseSchedule& noise,
                       const FieldPredictor& predict, const SamplerKey& key, bool state_independent = false);

// Single-window sampler.
Video ddpm_sample(const GaussianBackend& backend, const Video& window, const MaskSchedule& schedule,
                  std::uint64_t seed, const WindowContext& context = {});

// Temporal linear interpolation of valid samples per pixel, with a spatial
// row fill for pixels never valid in the window. `times` defaults to indices.
Video interpolation_fill(const Video& window, const Mask& valid, const std::vector<double>& times = {});

// Whole-video linear-interpolation baseline: each unknown pixel blends its
// closest valid frames before and after (nearest when only one exists).
Video linear_interpolation_baseline(const Video& x0, const Mask& m0);

// Ground-truth point mass: mean = ground truth window, variance = 0.
class OracleBackend final : public GaussianBackend {
 public:
  OracleBackend(BackendDescriptor descriptor, Video ground_truth);
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  GaussianField predict(const GaussianRequest& request) const override;

 private:
  const Video& working_frame_cache(const FrameSpan& span, int height, int width) const;

  BackendDescriptor descriptor_;
  Video ground_truth_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::tuple<int, int, int, int>, std::unique_ptr<Video>> cache_;
};

// mean = interpolation_fill of pinned content, variance = constant.
class InterpolationBackend final : public GaussianBackend {
 public:
  InterpolationBackend(BackendDescriptor descriptor, float variance = 0.0f);
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  GaussianField predict(const GaussianRequest& request) const override;

 private:
  BackendDescriptor descriptor_;
  float variance_;
};

// Closed-form denoiser: predicts x0 as the interpolation_fill inpainting
// target and returns the DDPM posterior q(x_{t-1} | x_t, x0).
class DiffusionMockBackend final : public GaussianBackend {
 public:
  explicit DiffusionMockBackend(BackendDescriptor descriptor);
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  GaussianField predict(const GaussianRequest& request) const override;

 private:
  BackendDescriptor descriptor_;
};

// ------------------------------------------------------------ token flavor

struct TokenGrid {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> ids;

  TokenGrid() = default;
  TokenGrid(int f, int h, int w, std::int32_t fill = 0)
      : frames(f), height(h), width(w), ids(static_cast<std::size_t>(f) * h * w, fill) {}
  std::size_t index(int f, int y, int x) const { return (static_cast<std::size_t>(f) * height + y) * width + x; }
  std::int32_t& at(int f, int y, int x) { return ids[index(f, y, x)]; }
  std::int32_t at(int f, int y, int x) const { return ids[index(f, y, x)]; }
  std::size_t size() const { return ids.size(); }
  bool operator==(const TokenGrid&) const = default;
};

struct CategoricalField {
  int frames = 0;
  int height = 0;
  int width = 0;
  int vocabulary = 0;
  std::vector<float> probs;                // frames*height*width*vocabulary
  std::vector<std::int32_t> committed;     // -1 where not committed

  CategoricalField() = default;
  CategoricalField(int f, int h, int w, int v);
  std::size_t position(int f, int y, int x) const { return (static_cast<std::size_t>(f) * height + y) * width + x; }
  std::span<float> at(std::size_t pos) { return {probs.data() + pos * vocabulary, static_cast<std::size_t>(vocabulary)}; }
  std::span<const float> at(std::size_t pos) const {
    return {probs.data() + pos * vocabulary, static_cast<std::size_t>(vocabulary)};
  }
  std::size_t positions() const { return static_cast<std::size_t>(frames) * height * width; }
};

class TokenBackend {
 public:
  virtual ~TokenBackend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  virtual void prepare(const Video& /*canvas*/, const Mask& /*mask*/) {}
  virtual TokenGrid encode(const Video& window) const = 0;
  virtual Video decode(const TokenGrid& tokens) const = 0;
  // Probabilities at positions where token_mask == 0 (unknown). Positions with
  // token_mask == 1 carry known tokens.
  virtual CategoricalField predict(const TokenGrid& tokens, const Mask& token_mask,
                                   const WindowContext& context) const = 0;
};

TokenGrid token_encode(const TokenBackend& backend, const Video& window);
Video token_decode(const TokenBackend& backend, const TokenGrid& tokens);
CategoricalField token_predict(const TokenBackend& backend, const TokenGrid& tokens, const Mask& token_mask,
                               const WindowContext& context = {});

struct TokenSamplerKey {
  std::uint64_t seed = 0;
  int level = 0;
  int window = 0;  // temporal window index
};

using CategoricalPredictor = std::function<CategoricalField(const TokenGrid& tokens, const Mask& known)>;

// Confidence-ordered iterative unmasking with a cosine schedule: after round
// r of n, floor(M * cos(pi/2 * r/n)) of the M initially unknown tokens stay
// unknown; each round commits the most confident fresh samples.
TokenGrid iterative_token_sample(const TokenGrid& tokens, const Mask& known, int iterations,
                                 const CategoricalPredictor& predict, const TokenSamplerKey& key);
TokenGrid token_iterative_sample(const TokenBackend& backend, const TokenGrid& tokens, const Mask& known,
                                 int iterations, std::uint64_t seed, const WindowContext& context = {});

// Per-job k-means patch codebook plus a neighbourhood-histogram "transformer".
class KMeansTokenBackend final : public TokenBackend {
 public:
  struct Options {
    int neighborhood_radius = 2;
    float smoothing = 0.01f;
    int kmeans_iterations = 10;
    int max_training_patches = 4096;
    std::uint64_t seed = 7;
  };

  explicit KMeansTokenBackend(BackendDescriptor descriptor);
  KMeansTokenBackend(BackendDescriptor descriptor, Options options);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  void prepare(const Video& canvas, const Mask& mask) override;
  TokenGrid encode(const Video& window) const override;
  Video decode(const TokenGrid& tokens) const override;
  CategoricalField predict(const TokenGrid& tokens, const Mask& token_mask,
                           const WindowContext& context) const override;

  int codebook_size() const { return static_cast<int>(codebook_.size()); }
  const std::vector<std::vector<float>>& codebook() const { return codebook_; }

 private:
  int patch_dim() const;
  std::vector<float> extract_patch(const Video& v, int f, int ty, int tx) const;

  BackendDescriptor descriptor_;
  Options options_;
  std::vector<std::vector<float>> codebook_;
};

// Either flavor behind one handle.
struct Backend {
  std::shared_ptr<GaussianBackend> gaussian;
  std::shared_ptr<TokenBackend> token;

  const BackendDescriptor& descriptor() const { return gaussian ? gaussian->descriptor() : token->descriptor(); }
  Flavor flavor() const { return descriptor().flavor; }
  void prepare(const Video& canvas, const Mask& mask) const {
    if (gaussian) gaussian->prepare(canvas, mask);
    if (token) token->prepare(canvas, mask);
  }
};

}  // namespace panovid
