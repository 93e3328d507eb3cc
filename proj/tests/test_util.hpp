#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "wir/matrix.hpp"
#include "wir/rng.hpp"

namespace wir::test {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, SeededRng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

inline Vector random_vector(std::size_t n, SeededRng& rng, double scale = 1.0) {
  Vector v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Gauss-Jordan with partial pivoting; deliberately unrelated to the
// Cholesky path under test.
inline Vector gauss_jordan_solve(Matrix a, Vector b) {
  const std::size_t n = a.rows();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    for (std::size_t j = 0; j < n; ++j) std::swap(a(c, j), a(piv, j));
    std::swap(b[c], b[piv]);
    const double d = a(c, c);
    for (std::size_t j = 0; j < n; ++j) a(c, j) /= d;
    b[c] /= d;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) a(r, j) -= f * a(c, j);
      b[r] -= f * b[c];
    }
  }
  return b;
}

inline double rel_diff(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace wir::test

// ---- oracles shared with the acceptance binary

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "wir/netvlad.hpp"
#include "wir/retrieval.hpp"

namespace wir::test {

inline NetVladParams random_params(std::size_t k, std::size_t d, SeededRng& rng, double scale = 1.0) {
  return {random_matrix(k, d, rng, scale), random_matrix(k, d, rng, scale), random_vector(k, rng, scale)};
}

struct GradCheck {
  std::size_t components = 0;
  double worst = 0.0;  // largest relative error seen
};

/// Central differences of f = <u, embed(params, x)> against embed_backward
/// for every parameter and every input coordinate. Relative error uses a
/// floor of `floor` so components that vanish analytically are compared
/// absolutely.
inline GradCheck check_embed_gradient(const NetVladParams& params, const Vector& x, const Vector& u,
                                      double h = 1e-5, double floor = 1e-6) {
  const auto g = embed_backward(params, x, u);
  const auto f = [&](const NetVladParams& p, const Vector& xx) { return dot(u, embed(p, xx)); };
  GradCheck out;
  const auto record = [&](double analytic, double numeric) {
    const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    out.worst = std::max(out.worst, err);
    ++out.components;
  };

  Vector flat = params.flatten();
  Vector ga;
  ga.insert(ga.end(), g.centers.data().begin(), g.centers.data().end());
  ga.insert(ga.end(), g.weights.data().begin(), g.weights.data().end());
  ga.insert(ga.end(), g.biases.begin(), g.biases.end());
  NetVladParams p = params;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + h;
    p.assign_flat(flat);
    const double fp = f(p, x);
    flat[i] = keep - h;
    p.assign_flat(flat);
    const double fm = f(p, x);
    flat[i] = keep;
    record(ga[i], (fp - fm) / (2 * h));
  }
  p.assign_flat(flat);
  Vector xx = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] + h;
    const double fp = f(params, xx);
    xx[i] = x[i] - h;
    const double fm = f(params, xx);
    xx[i] = x[i];
    record(g.x[i], (fp - fm) / (2 * h));
  }
  return out;
}

/// AveP from the textbook definition: mean over relevant positions of
/// precision@k, computed with explicit prefix counts.
inline double brute_average_precision(const std::vector<bool>& rel, std::size_t relevant) {
  if (relevant == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 1; k <= rel.size(); ++k) {
    if (!rel[k - 1]) continue;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i) hits += rel[i] ? 1 : 0;
    sum += static_cast<double>(hits) / static_cast<double>(k);
  }
  return sum / static_cast<double>(relevant);
}

/// Neighbour sets computed from a full distance matrix, then the
/// reciprocal filter, without going through RankedList.
inline std::set<std::size_t> brute_krnn(const std::vector<std::vector<double>>& dist,
                                        const std::vector<std::string>& ids, std::size_t q,
                                        std::size_t k) {
  const std::size_t n = dist.size();
  const auto neighbours = [&](std::size_t a) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < n; ++j)
      if (j != a) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (dist[a][x] != dist[a][y]) return dist[a][x] < dist[a][y];
      return ids[x] < ids[y];
    });
    order.resize(k);
    return std::set<std::size_t>(order.begin(), order.end());
  };
  std::set<std::size_t> out;
  for (auto p : neighbours(q))
    if (neighbours(p).count(q)) out.insert(p);
  return out;
}

}  // namespace wir::test

#include "wir/encoding.hpp"

namespace wir::test {

/// ||(ΦΦᵀ + λI)ξ - Φ1|| / ||Φ1||, the primal normal equations with the φ_i
/// as rows of `emb`.
inline double gmp_primal_residual(const Matrix& emb, const Vector& xi, double lambda) {
  const std::size_t e = emb.cols();
  Vector lhs(e, 0.0), rhs(e, 0.0);
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    const auto phi = emb.row(i);
    const double s = dot(phi, xi);
    for (std::size_t j = 0; j < e; ++j) {
      lhs[j] += phi[j] * s;
      rhs[j] += phi[j];
    }
  }
  for (std::size_t j = 0; j < e; ++j) lhs[j] += lambda * xi[j] - rhs[j];
  return norm2(lhs) / std::max(norm2(rhs), 1e-300);
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  return dot(a, b) / (norm2(a) * norm2(b));
}

struct DriftResult {
  double gmp = 0.0;
  double sum = 0.0;
};

/// Adds `extra` copies of row 0 and measures how much each pooling's
/// cosine similarity to that row grows.
inline DriftResult burstiness_drift(const Matrix& emb, std::size_t extra, double lambda) {
  Matrix dup(emb.rows() + extra, emb.cols());
  for (std::size_t i = 0; i < emb.rows(); ++i)
    std::copy(emb.row(i).begin(), emb.row(i).end(), dup.row(i).begin());
  for (std::size_t r = 0; r < extra; ++r)
    std::copy(emb.row(0).begin(), emb.row(0).end(), dup.row(emb.rows() + r).begin());
  const auto target = emb.row(0);
  return {cosine(gmp_pool(dup, lambda), target) - cosine(gmp_pool(emb, lambda), target),
          cosine(sum_pool(dup), target) - cosine(sum_pool(emb), target)};
}

}  // namespace wir::test
