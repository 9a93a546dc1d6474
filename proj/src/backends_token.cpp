#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "panovid/backends.hpp"
#include "panovid/error.hpp"

namespace panovid {

CategoricalField::CategoricalField(int f, int h, int w, int v)
    : frames(f), height(h), width(w), vocabulary(v),
      probs(static_cast<std::size_t>(f) * h * w * v, 0.0f),
      committed(static_cast<std::size_t>(f) * h * w, -1) {}

// ------------------------------------------------------------ contract wrappers

namespace {

int token_frames_for(const BackendDescriptor& d, int frames) { return (frames + d.token_frames - 1) / d.token_frames; }

TokenGrid pad_tokens(const TokenGrid& g, int frames) {
  if (g.frames >= frames) return g;
  TokenGrid out(frames, g.height, g.width);
  std::copy(g.ids.begin(), g.ids.end(), out.ids.begin());
  const std::size_t plane = static_cast<std::size_t>(g.height) * g.width;
  for (int f = g.frames; f < frames; ++f) {
    std::copy(g.ids.end() - plane, g.ids.end(), out.ids.begin() + f * plane);
  }
  return out;
}

Mask pad_mask(const Mask& m, int frames) {
  if (m.frames() >= frames) return m;
  Mask out(frames, m.height(), m.width());
  std::copy(m.data().begin(), m.data().end(), out.data().begin());
  for (int f = m.frames(); f < frames; ++f) {
    std::copy(m.data().end() - m.frame_size(), m.data().end(), out.data().begin() + f * m.frame_size());
  }
  return out;
}

}  // namespace

TokenGrid token_encode(const TokenBackend& backend, const Video& window) {
  const auto& d = backend.descriptor();
  if (window.height() != d.native_height || window.width() != d.native_width || window.channels() != 3) {
    fail(ErrorKind::Contract, "token window does not match backend native size");
  }
  if (window.frames() > d.context_frames) fail(ErrorKind::Contract, "token window exceeds backend context");
  TokenGrid g = backend.encode(window);
  const int want = token_frames_for(d, window.frames());
  if (g.frames < want || g.height != d.native_height / d.patch_size || g.width != d.native_width / d.patch_size) {
    fail(ErrorKind::Contract, "encoded token grid has the wrong shape");
  }
  if (g.frames > want) {
    TokenGrid t(want, g.height, g.width);
    std::copy(g.ids.begin(), g.ids.begin() + t.size(), t.ids.begin());
    g = std::move(t);
  }
  return g;
}

Video token_decode(const TokenBackend& backend, const TokenGrid& tokens) {
  const auto& d = backend.descriptor();
  for (auto id : tokens.ids) {
    if (id < 0 || id >= d.vocabulary_size) fail(ErrorKind::Contract, "token id outside the vocabulary");
  }
  Video v = backend.decode(tokens);
  if (v.frames() != tokens.frames * d.token_frames || v.height() != tokens.height * d.patch_size ||
      v.width() != tokens.width * d.patch_size) {
    fail(ErrorKind::Contract, "decoded window has the wrong shape");
  }
  return v;
}

CategoricalField token_predict(const TokenBackend& backend, const TokenGrid& tokens, const Mask& token_mask,
                               const WindowContext& context) {
  const auto& d = backend.descriptor();
  if (token_mask.frames() != tokens.frames || token_mask.height() != tokens.height ||
      token_mask.width() != tokens.width) {
    fail(ErrorKind::Contract, "token mask does not match the token grid");
  }
  const int ctx_frames = token_frames_for(d, d.context_frames);
  if (tokens.frames > ctx_frames) fail(ErrorKind::Contract, "token grid exceeds backend context");
  const TokenGrid padded = pad_tokens(tokens, ctx_frames);
  const Mask padded_mask = pad_mask(token_mask, ctx_frames);
  CategoricalField f = backend.predict(padded, padded_mask, context);
  if (f.frames != padded.frames || f.height != padded.height || f.width != padded.width ||
      f.vocabulary != d.vocabulary_size || f.probs.size() != f.positions() * f.vocabulary) {
    fail(ErrorKind::Contract, "token prediction has the wrong shape");
  }
  for (std::size_t p = 0; p < static_cast<std::size_t>(tokens.size()); ++p) {
    if (padded_mask.data()[p]) continue;
    double sum = 0.0;
    for (float v : f.at(p)) {
      if (!(v >= 0.0f)) fail(ErrorKind::Contract, "negative or NaN token probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-5) fail(ErrorKind::Contract, "token probabilities do not sum to 1");
  }
  if (f.frames == tokens.frames) return f;
  CategoricalField out(tokens.frames, tokens.height, tokens.width, f.vocabulary);
  std::copy(f.probs.begin(), f.probs.begin() + out.probs.size(), out.probs.begin());
  std::copy(f.committed.begin(), f.committed.begin() + out.committed.size(), out.committed.begin());
  return out;
}

// ------------------------------------------------------------ iterative sampling

TokenGrid iterative_token_sample(const TokenGrid& tokens, const Mask& known, int iterations,
                                 const CategoricalPredictor& predict, const TokenSamplerKey& key) {
  if (iterations < 1) fail(ErrorKind::Config, "token sampling needs at least one iteration");
  if (known.frames() != tokens.frames || known.height() != tokens.height || known.width() != tokens.width) {
    fail(ErrorKind::Contract, "token mask does not match the token grid");
  }
  TokenGrid cur = tokens;
  Mask cur_known = known;
  std::vector<std::size_t> open;
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    if (!known.data()[p]) open.push_back(p);
  }
  const std::size_t total = open.size();
  if (total == 0) return cur;

  struct Candidate {
    std::size_t pos;
    std::int32_t id;
    float confidence;
  };
  for (int r = 1; r <= iterations && !open.empty(); ++r) {
    const CategoricalField field = predict(cur, cur_known);
    const CounterRng rng(key.seed, {0x70c3, static_cast<std::uint64_t>(key.level),
                                    static_cast<std::uint64_t>(key.window), static_cast<std::uint64_t>(r)});
    std::vector<Candidate> cands;
    cands.reserve(open.size());
    for (std::size_t p : open) {
      const auto probs = field.at(p);
      double sum = 0.0;
      for (float v : probs) sum += v;
      const double u = rng.uniform(p) * sum;
      double acc = 0.0;
      int pick = field.vocabulary - 1;
      for (int v = 0; v < field.vocabulary; ++v) {
        acc += probs[v];
        if (u < acc) {
          pick = v;
          break;
        }
      }
      cands.push_back({p, pick, static_cast<float>(probs[pick] / std::max(sum, 1e-30))});
    }
    const std::size_t keep_open =
        r == iterations ? 0
                        : static_cast<std::size_t>(std::floor(total * std::cos(M_PI / 2.0 * r / iterations)));
    const std::size_t commit = open.size() > keep_open ? open.size() - keep_open : 0;
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      return a.pos < b.pos;
    });
    for (std::size_t i = 0; i < commit; ++i) {
      cur.ids[cands[i].pos] = cands[i].id;
      cur_known.data()[cands[i].pos] = 1;
    }
    std::vector<std::size_t> still;
    for (std::size_t p : open) {
      if (!cur_known.data()[p]) still.push_back(p);
    }
    open.swap(still);
  }
  return cur;
}

TokenGrid token_iterative_sample(const TokenBackend& backend, const TokenGrid& tokens, const Mask& known,
                                 int iterations, std::uint64_t seed, const WindowContext& context) {
  CategoricalPredictor predict = [&](const TokenGrid& t, const Mask& k) {
    return token_predict(backend, t, k, context);
  };
  return iterative_token_sample(tokens, known, iterations, predict, {seed, context.level, 0});
}

// ------------------------------------------------------------ k-means tokenizer

KMeansTokenBackend::KMeansTokenBackend(BackendDescriptor descriptor)
    : KMeansTokenBackend(std::move(descriptor), Options{}) {}

KMeansTokenBackend::KMeansTokenBackend(BackendDescriptor descriptor, Options options)
    : descriptor_(std::move(descriptor)), options_(options) {
  descriptor_.flavor = Flavor::Token;
  descriptor_.validate();
  if (options_.neighborhood_radius < 0) fail(ErrorKind::Config, "neighborhood radius must be >= 0");
  if (options_.smoothing < 0.0f || options_.smoothing >= 1.0f) fail(ErrorKind::Config, "smoothing must be in [0,1)");
}

int KMeansTokenBackend::patch_dim() const {
  return descriptor_.patch_size * descriptor_.patch_size * descriptor_.token_frames * 3;
}

std::vector<float> KMeansTokenBackend::extract_patch(const Video& v, int f, int ty, int tx) const {
  const int p = descriptor_.patch_size, g = descriptor_.token_frames;
  std::vector<float> out;
  out.reserve(patch_dim());
  for (int k = 0; k < g; ++k) {
    const int t = std::min(f * g + k, v.frames() - 1);
    for (int y = 0; y < p; ++y) {
      const float* row = &v.data()[v.index(t, ty * p + y, tx * p)];
      out.insert(out.end(), row, row + p * 3);
    }
  }
  return out;
}

namespace {

float sq_dist(const std::vector<float>& a, const std::vector<float>& b) {
  float s = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const float d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::pair<int, float> nearest(const std::vector<std::vector<float>>& centers, const std::vector<float>& x) {
  int best = 0;
  float best_d = std::numeric_limits<float>::max();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const float d = sq_dist(centers[c], x);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return {best, best_d};
}

}  // namespace

void KMeansTokenBackend::prepare(const Video& canvas, const Mask& mask) {
  require_same_dims(canvas, mask, "token codebook");
  const int p = descriptor_.patch_size, g = descriptor_.token_frames;
  const int tf = (canvas.frames() + g - 1) / g, th = canvas.height() / p, tw = canvas.width() / p;
  if (th < 1 || tw < 1) fail(ErrorKind::Contract, "canvas smaller than one token patch");

  std::vector<std::vector<float>> valid, all;
  for (int f = 0; f < tf; ++f) {
    for (int ty = 0; ty < th; ++ty) {
      for (int tx = 0; tx < tw; ++tx) {
        bool ok = true;
        for (int k = 0; k < g && ok; ++k) {
          const int t = std::min(f * g + k, canvas.frames() - 1);
          for (int y = 0; y < p && ok; ++y) {
            for (int x = 0; x < p && ok; ++x) ok = mask.at(t, ty * p + y, tx * p + x) != 0;
          }
        }
        (ok ? valid : all).push_back(extract_patch(canvas, f, ty, tx));
      }
    }
  }
  std::vector<std::vector<float>> patches = valid.empty() ? std::move(all) : std::move(valid);
  const int vocab = descriptor_.vocabulary_size;

  std::map<std::vector<float>, int> distinct;
  for (const auto& patch : patches) {
    distinct.emplace(patch, 0);
    if (static_cast<int>(distinct.size()) > vocab) break;
  }
  if (static_cast<int>(distinct.size()) <= vocab) {
    codebook_.clear();
    for (const auto& [patch, unused] : distinct) codebook_.push_back(patch);
    if (static_cast<int>(codebook_.size()) < vocab) {
      spdlog::warn("token codebook: only {} distinct patches, shrinking vocabulary from {}", codebook_.size(), vocab);
      descriptor_.vocabulary_size = std::max(2, static_cast<int>(codebook_.size()));
      while (static_cast<int>(codebook_.size()) < descriptor_.vocabulary_size) codebook_.push_back(codebook_.back());
    }
    return;
  }

  // Deterministic training subset (partial Fisher-Yates).
  const CounterRng rng(options_.seed, {0xc0deb00c});
  std::uint64_t counter = 0;
  const std::size_t n = std::min<std::size_t>(patches.size(), options_.max_training_patches);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.bits(counter++) % (patches.size() - i);
    std::swap(patches[i], patches[j]);
  }
  patches.resize(n);

  // k-means++ seeding.
  std::vector<std::vector<float>> centers;
  centers.push_back(patches[rng.bits(counter++) % n]);
  std::vector<float> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(patches[i], centers[0]);
  while (static_cast<int>(centers.size()) < vocab) {
    double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    double u = rng.uniform(counter++) * total, acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    centers.push_back(patches[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(patches[i], centers.back()));
  }

  // Lloyd iterations.
  const int dim = patch_dim();
  std::vector<int> assign(n);
  for (int it = 0; it < options_.kmeans_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [c, d] = nearest(centers, patches[i]);
      d2[i] = d;
      if (it == 0 || c != assign[i]) changed = true;
      assign[i] = c;
    }
    if (!changed) break;
    std::vector<std::vector<double>> sums(vocab, std::vector<double>(dim, 0.0));
    std::vector<int> counts(vocab, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (int k = 0; k < dim; ++k) sums[assign[i]][k] += patches[i][k];
    }
    for (int c = 0; c < vocab; ++c) {
      if (counts[c] == 0) {
        const auto far = std::max_element(d2.begin(), d2.end()) - d2.begin();
        centers[c] = patches[far];
        d2[far] = 0.0f;
        continue;
      }
      for (int k = 0; k < dim; ++k) centers[c][k] = static_cast<float>(sums[c][k] / counts[c]);
    }
  }
  codebook_ = std::move(centers);
}

TokenGrid KMeansTokenBackend::encode(const Video& window) const {
  if (codebook_.empty()) fail(ErrorKind::Contract, "token codebook has not been fitted");
  const int p = descriptor_.patch_size, g = descriptor_.token_frames;
  if (window.height() % p || window.width() % p) fail(ErrorKind::Contract, "window not divisible by patch size");
  TokenGrid out((window.frames() + g - 1) / g, window.height() / p, window.width() / p);
  for (int f = 0; f < out.frames; ++f) {
    for (int ty = 0; ty < out.height; ++ty) {
      for (int tx = 0; tx < out.width; ++tx) out.at(f, ty, tx) = nearest(codebook_, extract_patch(window, f, ty, tx)).first;
    }
  }
  return out;
}

Video KMeansTokenBackend::decode(const TokenGrid& tokens) const {
  if (codebook_.empty()) fail(ErrorKind::Contract, "token codebook has not been fitted");
  const int p = descriptor_.patch_size, g = descriptor_.token_frames;
  Video out(tokens.frames * g, tokens.height * p, tokens.width * p, 3);
  for (int f = 0; f < tokens.frames; ++f) {
    for (int ty = 0; ty < tokens.height; ++ty) {
      for (int tx = 0; tx < tokens.width; ++tx) {
        const auto& code = codebook_.at(tokens.at(f, ty, tx));
        std::size_t k = 0;
        for (int dt = 0; dt < g; ++dt) {
          for (int y = 0; y < p; ++y) {
            float* row = &out.data()[out.index(f * g + dt, ty * p + y, tx * p)];
            std::copy(code.begin() + k, code.begin() + k + p * 3, row);
            k += p * 3;
          }
        }
      }
    }
  }
  return out;
}

CategoricalField KMeansTokenBackend::predict(const TokenGrid& tokens, const Mask& token_mask,
                                             const WindowContext&) const {
  const int vocab = descriptor_.vocabulary_size, r = options_.neighborhood_radius;
  const float eps = options_.smoothing;
  CategoricalField out(tokens.frames, tokens.height, tokens.width, vocab);
  std::vector<int> hist(vocab);
  for (int f = 0; f < tokens.frames; ++f) {
    for (int y = 0; y < tokens.height; ++y) {
      for (int x = 0; x < tokens.width; ++x) {
        const std::size_t pos = out.position(f, y, x);
        auto probs = out.at(pos);
        if (token_mask.at(f, y, x)) {
          probs[tokens.at(f, y, x)] = 1.0f;
          out.committed[pos] = tokens.at(f, y, x);
          continue;
        }
        std::fill(hist.begin(), hist.end(), 0);
        int total = 0;
        const int f_hi = descriptor_.causal ? f : std::min(tokens.frames - 1, f + r);
        for (int ff = std::max(0, f - r); ff <= f_hi; ++ff) {
          for (int yy = std::max(0, y - r); yy <= std::min(tokens.height - 1, y + r); ++yy) {
            for (int xx = std::max(0, x - r); xx <= std::min(tokens.width - 1, x + r); ++xx) {
              if (!token_mask.at(ff, yy, xx)) continue;
              ++hist[tokens.at(ff, yy, xx)];
              ++total;
            }
          }
        }
        if (total == 0) {
          std::fill(probs.begin(), probs.end(), 1.0f / vocab);
          continue;
        }
        for (int v = 0; v < vocab; ++v) probs[v] = (1.0f - eps) * hist[v] / total + eps / vocab;
      }
    }
  }
  return out;
}

}  // namespace panovid
