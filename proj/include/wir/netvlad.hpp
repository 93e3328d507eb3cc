#pragma once

// NetVLAD embedding of a single local descriptor.
//
// For descriptor x in R^D and K clusters the embedding is the K*D vector
//   block k = a_k(x) (x - c_k),   a(x) = softmax_k(w_k·x + b_k),
// laid out cluster-major (block k occupies [k*D, (k+1)*D)), followed by a
// single global ℓ2 normalization. No per-block normalization is applied.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wir/binary_io.hpp"
#include "wir/error.hpp"
#include "wir/matrix.hpp"
#include "wir/rng.hpp"

namespace wir {

inline constexpr std::size_t kDefaultClusters = 100;
inline constexpr double kDefaultAlphaInit = 25.0;

struct NetVladParams {
  Matrix centers;  // K x D
  Matrix weights;  // K x D
  Vector biases;   // K

  std::size_t clusters() const noexcept { return centers.rows(); }
  std::size_t dim() const noexcept { return centers.cols(); }
  std::size_t embedding_size() const noexcept { return centers.size(); }
  std::size_t parameter_count() const noexcept { return 2 * centers.size() + biases.size(); }

  void validate() const {
    require(clusters() >= 2, Errc::InvalidArgument, "NetVLAD needs K >= 2");
    require(weights.rows() == clusters() && weights.cols() == dim() && biases.size() == clusters(),
            Errc::DimMismatch, "NetVLAD parameter shapes disagree");
    require(centers.all_finite() && weights.all_finite() && all_finite(biases), Errc::NonFinite,
            "NetVLAD parameters contain NaN/Inf");
  }

  /// Flat view order: centers, weights, biases.
  Vector flatten() const {
    Vector out;
    out.reserve(parameter_count());
    out.insert(out.end(), centers.data().begin(), centers.data().end());
    out.insert(out.end(), weights.data().begin(), weights.data().end());
    out.insert(out.end(), biases.begin(), biases.end());
    return out;
  }

  void assign_flat(std::span<const double> flat) {
    require(flat.size() == parameter_count(), Errc::DimMismatch, "flat parameter length");
    const std::size_t kd = centers.size();
    std::copy_n(flat.begin(), kd, centers.data().begin());
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(kd), kd, weights.data().begin());
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(2 * kd), biases.size(), biases.begin());
  }

  friend bool operator==(const NetVladParams&, const NetVladParams&) = default;
};

/// Softmax over w_k·x + b_k, computed after subtracting the largest logit.
inline Vector soft_assign(const NetVladParams& params, std::span<const double> x) {
  require(x.size() == params.dim(), Errc::DimMismatch, "soft_assign: descriptor length");
  require(all_finite(x), Errc::NonFinite, "soft_assign: descriptor has NaN/Inf");
  const std::size_t k = params.clusters();
  Vector a(k);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    a[j] = dot(params.weights.row(j), x) + params.biases[j];
    top = std::max(top, a[j]);
  }
  double sum = 0.0;
  for (double& v : a) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : a) v /= sum;
  return a;
}

/// Parameters reproducing the distance-based assignment
/// exp(-alpha ||x - c_k||^2) / sum_j exp(-alpha ||x - c_j||^2).
inline NetVladParams coupled_params(const Matrix& centers, double alpha) {
  require(alpha > 0.0 && std::isfinite(alpha), Errc::InvalidArgument, "alpha must be > 0");
  NetVladParams p{centers, Matrix(centers.rows(), centers.cols()), Vector(centers.rows())};
  for (std::size_t k = 0; k < centers.rows(); ++k) {
    auto w = p.weights.row(k);
    const auto c = centers.row(k);
    for (std::size_t d = 0; d < centers.cols(); ++d) w[d] = 2.0 * alpha * c[d];
    p.biases[k] = -alpha * dot(c, c);
  }
  return p;
}

struct EmbedForward {
  Vector assignment;  // K
  Vector raw;         // K*D, before normalization
  double raw_norm = 0.0;
  Vector embedding;   // normalized (or raw when the zero guard applies)
};

inline EmbedForward embed_forward(const NetVladParams& params, std::span<const double> x) {
  EmbedForward f;
  f.assignment = soft_assign(params, x);
  const std::size_t k = params.clusters();
  const std::size_t d = params.dim();
  f.raw.assign(k * d, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const auto c = params.centers.row(j);
    const double a = f.assignment[j];
    for (std::size_t i = 0; i < d; ++i) f.raw[j * d + i] = a * (x[i] - c[i]);
  }
  f.embedding = f.raw;
  f.raw_norm = normalize_l2(f.embedding);
  return f;
}

inline Vector embed(const NetVladParams& params, std::span<const double> x) {
  return embed_forward(params, x).embedding;
}

/// Embedding before the ℓ2 step.
inline Vector embed_raw(const NetVladParams& params, std::span<const double> x) {
  return embed_forward(params, x).raw;
}

/// Embeds every row of `descriptors`; result is N x (K*D).
inline Matrix embed_all(const NetVladParams& params, const Matrix& descriptors) {
  Matrix out(descriptors.rows(), params.embedding_size());
  for (std::size_t i = 0; i < descriptors.rows(); ++i) {
    const auto e = embed(params, descriptors.row(i));
    std::copy(e.begin(), e.end(), out.row(i).begin());
  }
  return out;
}

/// Index of the nearest center; the lowest index wins ties.
inline std::size_t nearest_center(const Matrix& centers, std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centers.rows(); ++k) {
    const double d = squared_distance(centers.row(k), x);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

/// Classical hard-assignment VLAD of one descriptor, unnormalized.
inline Vector vlad_hard(const Matrix& centers, std::span<const double> x) {
  require(x.size() == centers.cols(), Errc::DimMismatch, "vlad_hard: descriptor length");
  const std::size_t d = centers.cols();
  Vector out(centers.size(), 0.0);
  const std::size_t k = nearest_center(centers, x);
  const auto c = centers.row(k);
  for (std::size_t i = 0; i < d; ++i) out[k * d + i] = x[i] - c[i];
  return out;
}

struct EmbedGrad {
  Vector x;        // D
  Matrix centers;  // K x D
  Matrix weights;  // K x D
  Vector biases;   // K
};

/// Gradients of <upstream, embed(params, x)> with respect to x and all
/// parameters. When the zero guard fires the output is treated as constant
/// and every gradient is zero.
inline EmbedGrad embed_backward(const NetVladParams& params, std::span<const double> x,
                                std::span<const double> upstream, const EmbedForward& fwd) {
  const std::size_t k = params.clusters();
  const std::size_t d = params.dim();
  require(upstream.size() == k * d, Errc::DimMismatch, "embed_backward: upstream length");
  require(all_finite(upstream), Errc::NonFinite, "embed_backward: upstream has NaN/Inf");
  EmbedGrad g{Vector(d, 0.0), Matrix(k, d), Matrix(k, d), Vector(k, 0.0)};
  if (fwd.raw_norm < kZeroGuard) return g;

  // through y = v / ||v||
  const double proj = dot(upstream, fwd.embedding);
  Vector gv(k * d);
  for (std::size_t i = 0; i < k * d; ++i)
    gv[i] = (upstream[i] - fwd.embedding[i] * proj) / fwd.raw_norm;

  // through v_k = a_k (x - c_k)
  Vector ga(k);
  for (std::size_t j = 0; j < k; ++j) {
    const auto c = params.centers.row(j);
    const double a = fwd.assignment[j];
    auto gc = g.centers.row(j);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double gvi = gv[j * d + i];
      s += gvi * (x[i] - c[i]);
      gc[i] = -a * gvi;
      g.x[i] += a * gvi;
    }
    ga[j] = s;
  }

  // through the softmax
  double mean = 0.0;
  for (std::size_t j = 0; j < k; ++j) mean += fwd.assignment[j] * ga[j];
  for (std::size_t j = 0; j < k; ++j) {
    const double gz = fwd.assignment[j] * (ga[j] - mean);
    g.biases[j] = gz;
    auto gw = g.weights.row(j);
    for (std::size_t i = 0; i < d; ++i) gw[i] = gz * x[i];
    axpy(gz, params.weights.row(j), g.x);
  }
  return g;
}

inline EmbedGrad embed_backward(const NetVladParams& params, std::span<const double> x,
                                std::span<const double> upstream) {
  return embed_backward(params, x, upstream, embed_forward(params, x));
}

struct KMeansResult {
  Matrix centers;
  Vector objective;  // sum of squared distances after each Lloyd iteration
};

/// Lloyd's algorithm with k-means++ seeding. Ties in assignment go to the
/// lowest cluster index; a cluster that loses all members keeps its center.
inline KMeansResult kmeans(const Matrix& samples, std::size_t k, SeededRng& rng,
                           int iterations = 20) {
  const std::size_t m = samples.rows();
  const std::size_t d = samples.cols();
  if (m < k)
    fail(Errc::TooFewSamples, "k-means needs at least K=" + std::to_string(k) + " samples, got " +
                                  std::to_string(m));
  require(k >= 1, Errc::InvalidArgument, "k-means needs K >= 1");
  require(samples.all_finite(), Errc::NonFinite, "k-means: samples contain NaN/Inf");

  KMeansResult res{Matrix(k, d), {}};
  Vector closest(m, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(rng.below(m));
  std::copy(samples.row(first).begin(), samples.row(first).end(), res.centers.row(0).begin());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      closest[i] = std::min(closest[i], squared_distance(samples.row(i), res.centers.row(c - 1)));
      total += closest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = m - 1;
      for (std::size_t i = 0; i < m; ++i) {
        acc += closest[i];
        if (acc > target && closest[i] > 0.0) {
          pick = i;
          break;
        }
      }
      while (closest[pick] == 0.0 && pick > 0) --pick;
    } else {
      pick = static_cast<std::size_t>(rng.below(m));
    }
    std::copy(samples.row(pick).begin(), samples.row(pick).end(), res.centers.row(c).begin());
  }

  std::vector<std::size_t> label(m);
  Matrix sums(k, d);
  std::vector<std::size_t> counts(k);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < m; ++i) label[i] = nearest_center(res.centers, samples.row(i));
    std::fill(sums.data().begin(), sums.data().end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < m; ++i) {
      axpy(1.0, samples.row(i), sums.row(label[i]));
      ++counts[label[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto center = res.centers.row(c);
      const auto s = sums.row(c);
      for (std::size_t j = 0; j < d; ++j) center[j] = s[j] / static_cast<double>(counts[c]);
    }
    double obj = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      obj += squared_distance(samples.row(i), res.centers.row(label[i]));
    res.objective.push_back(obj);
  }
  return res;
}

enum class InitMode { KMeans, Random };

/// kmeans: Lloyd centers, then the coupled (distance-equivalent) w and b.
/// random: c and w uniform on ±sqrt(6/(K+D)) (variance 2/(fan_in+fan_out)),
/// b zero.
inline NetVladParams init_params(const Matrix& samples, std::size_t k, double alpha_init,
                                 InitMode mode, SeededRng& rng) {
  require(k >= 2, Errc::InvalidArgument, "NetVLAD needs K >= 2");
  const std::size_t d = samples.cols();
  if (mode == InitMode::KMeans) return coupled_params(kmeans(samples, k, rng).centers, alpha_init);
  const double limit = std::sqrt(6.0 / static_cast<double>(k + d));
  NetVladParams p{Matrix(k, d), Matrix(k, d), Vector(k, 0.0)};
  for (double& v : p.centers.data()) v = rng.uniform(-limit, limit);
  for (double& v : p.weights.data()) v = rng.uniform(-limit, limit);
  return p;
}

// NVLD1: "NVLD1\n" "K D\n" then c (K*D), w (K*D), b (K) as f32 LE.

inline std::string write_params(const NetVladParams& p) {
  std::string out =
      "NVLD1\n" + std::to_string(p.clusters()) + " " + std::to_string(p.dim()) + "\n";
  io::append_f32(out, p.centers.data());
  io::append_f32(out, p.weights.data());
  io::append_f32(out, p.biases);
  return out;
}

inline NetVladParams read_params(std::string_view bytes) {
  io::Reader in(bytes);
  in.expect_magic("NVLD1\n");
  const auto f = io::header_fields(in.line(), 2);
  const auto k = io::parse_count(f[0]);
  const auto d = io::parse_count(f[1]);
  NetVladParams p{Matrix(k, d), Matrix(k, d), Vector(k)};
  in.f32(p.centers.data());
  in.f32(p.weights.data());
  in.f32(p.biases);
  p.validate();
  return p;
}

inline void write_params_file(const std::string& path, const NetVladParams& p) {
  io::write_file(path, write_params(p));
}

inline NetVladParams read_params_file(const std::string& path) {
  return read_params(io::read_file(path));
}

}  // namespace wir
