#pragma once

// Document-level encoding: pool patch embeddings, power-normalize, ℓ2,
// and optionally PCA-whiten followed by another ℓ2.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wir/binary_io.hpp"
#include "wir/descriptor_source.hpp"
#include "wir/error.hpp"
#include "wir/matrix.hpp"
#include "wir/netvlad.hpp"
#include "wir/numerics.hpp"

namespace wir {

inline constexpr double kDefaultGmpLambda = 1000.0;
inline constexpr double kDefaultPowerExponent = 0.5;
inline constexpr std::size_t kDefaultPcaDimension = 128;
inline constexpr double kWhiteningEpsilon = 1e-12;

struct GlobalDescriptor {
  std::string doc_id;
  std::string writer_id;
  Vector values;
};

inline Vector sum_pool(const Matrix& embeddings) {
  require(embeddings.rows() >= 1, Errc::InvalidArgument, "sum_pool: no embeddings");
  Vector out(embeddings.cols(), 0.0);
  for (std::size_t i = 0; i < embeddings.rows(); ++i) axpy(1.0, embeddings.row(i), out);
  return out;
}

/// Generalized max pooling: argmin ||Φᵀξ - 1||² + λ||ξ||², solved in the
/// N x N dual  (ΦᵀΦ + λI) a = 1,  ξ = Φ a.  Rows of `embeddings` are the φ_i.
inline Vector gmp_pool(const Matrix& embeddings, double lambda = kDefaultGmpLambda) {
  require(embeddings.rows() >= 1, Errc::InvalidArgument, "gmp_pool: no embeddings");
  require(embeddings.all_finite(), Errc::NonFinite, "gmp_pool: NaN/Inf in embeddings");
  const Matrix gram = row_gram(embeddings);
  const Vector ones(embeddings.rows(), 1.0);
  const Vector a = ridge_solve(gram, ones, lambda);
  Vector xi(embeddings.cols(), 0.0);
  for (std::size_t i = 0; i < embeddings.rows(); ++i) axpy(a[i], embeddings.row(i), xi);
  return xi;
}

/// sign(v)|v|^p elementwise, then ℓ2 (zero-guarded).
inline Vector power_norm(std::span<const double> v, double p = kDefaultPowerExponent) {
  require(all_finite(v), Errc::NonFinite, "power_norm: NaN/Inf");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double mag = std::pow(std::abs(v[i]), p);
    out[i] = v[i] > 0.0 ? mag : (v[i] < 0.0 ? -mag : 0.0);
  }
  normalize_l2(out);
  return out;
}

struct PcaModel {
  Vector mean;         // E
  Matrix components;   // dimension x E, orthonormal rows
  Vector scales;       // dimension; 1/sqrt(eigenvalue + eps) or 1 without whitening
  Vector eigenvalues;  // dimension; not serialized

  std::size_t input_dim() const noexcept { return mean.size(); }
  std::size_t output_dim() const noexcept { return components.rows(); }
};

/// Relative eigenvalue floor used to decide the numerical rank of the
/// training data.
inline constexpr double kRankTolerance = 1e-10;

/// Fits PCA on the rows of `data` (M x E). The covariance uses 1/(M-1).
/// When M < E the eigenproblem is solved on the M x M Gram side and the
/// components are mapped back.
inline PcaModel pca_fit(const Matrix& data, std::size_t dimension = kDefaultPcaDimension,
                        bool whiten = true) {
  const std::size_t m = data.rows();
  const std::size_t e = data.cols();
  require(m >= 2, Errc::TooFewSamples, "pca_fit needs at least 2 samples");
  require(dimension >= 1, Errc::InvalidArgument, "pca_fit: dimension must be >= 1");
  require(data.all_finite(), Errc::NonFinite, "pca_fit: NaN/Inf");
  const std::size_t limit = std::min(m - 1, e);
  if (dimension > limit)
    fail(Errc::DimensionTooLarge, "dimension " + std::to_string(dimension) +
                                      " exceeds min(M-1, E) = " + std::to_string(limit));

  PcaModel model;
  model.mean.assign(e, 0.0);
  for (std::size_t i = 0; i < m; ++i) axpy(1.0, data.row(i), model.mean);
  for (double& v : model.mean) v /= static_cast<double>(m);
  Matrix centered = data;
  for (std::size_t i = 0; i < m; ++i) axpy(-1.0, model.mean, centered.row(i));
  const double denom = static_cast<double>(m - 1);

  Vector values;
  Matrix components(dimension, e);
  if (m < e) {
    Matrix gram = row_gram(centered);
    for (double& v : gram.data()) v /= denom;
    const auto eig = sym_eig(gram);
    values = eig.values;
    for (std::size_t c = 0; c < dimension; ++c) {
      auto row = components.row(c);
      for (std::size_t i = 0; i < m; ++i) axpy(eig.vectors(i, c), centered.row(i), row);
      const double n = norm2(row);
      if (n > 0.0)
        for (double& v : row) v /= n;
    }
  } else {
    Matrix cov(e, e);
    for (std::size_t i = 0; i < m; ++i) {
      const auto r = centered.row(i);
      for (std::size_t a = 0; a < e; ++a)
        for (std::size_t b = a; b < e; ++b) cov(a, b) += r[a] * r[b];
    }
    for (std::size_t a = 0; a < e; ++a)
      for (std::size_t b = a; b < e; ++b) {
        cov(a, b) /= denom;
        cov(b, a) = cov(a, b);
      }
    const auto eig = sym_eig(cov);
    values = eig.values;
    for (std::size_t c = 0; c < dimension; ++c)
      for (std::size_t j = 0; j < e; ++j) components(c, j) = eig.vectors(j, c);
  }

  const double top = std::max(values.front(), 0.0);
  std::size_t rank = 0;
  for (double v : values)
    if (v > kRankTolerance * top && v > 0.0) ++rank;
  if (dimension > rank)
    fail(Errc::DimensionTooLarge, "dimension " + std::to_string(dimension) +
                                      " exceeds numerical rank " + std::to_string(rank) +
                                      " of the training data");

  model.components = std::move(components);
  model.eigenvalues.assign(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(dimension));
  model.scales.resize(dimension);
  for (std::size_t c = 0; c < dimension; ++c)
    model.scales[c] = whiten ? 1.0 / std::sqrt(std::max(model.eigenvalues[c], 0.0) + kWhiteningEpsilon) : 1.0;
  return model;
}

/// Centred, projected and scaled coordinates, without normalization.
inline Vector pca_project(const PcaModel& model, std::span<const double> v) {
  if (v.size() != model.input_dim())
    fail(Errc::DimMismatch, "PCA expects length " + std::to_string(model.input_dim()) + ", got " +
                                std::to_string(v.size()));
  Vector centered(v.begin(), v.end());
  axpy(-1.0, model.mean, centered);
  Vector out(model.output_dim());
  for (std::size_t c = 0; c < model.output_dim(); ++c)
    out[c] = model.scales[c] * dot(model.components.row(c), centered);
  return out;
}

inline Vector pca_transform(const PcaModel& model, std::span<const double> v) {
  Vector out = pca_project(model, v);
  normalize_l2(out);
  return out;
}

inline GlobalDescriptor pca_transform(const PcaModel& model, const GlobalDescriptor& g) {
  return {g.doc_id, g.writer_id, pca_transform(model, g.values)};
}

enum class Pooling { Gmp, Sum };

struct EncodeOptions {
  Pooling pooling = Pooling::Gmp;
  double lambda = kDefaultGmpLambda;
  double power = kDefaultPowerExponent;
};

/// Stage order: embed every descriptor -> pool -> power norm -> ℓ2.
/// PCA is applied separately (see encode_corpus / pca_transform).
inline GlobalDescriptor encode_document(const DescriptorSet& doc, const NetVladParams& params,
                                        const EncodeOptions& opt = {},
                                        const PcaModel* pca = nullptr) {
  require(doc.dim() == params.dim(), Errc::DimMismatch,
          "document '" + doc.doc_id + "' has D=" + std::to_string(doc.dim()) +
              ", params expect " + std::to_string(params.dim()));
  const Matrix emb = embed_all(params, doc.descriptors);
  const Vector pooled = opt.pooling == Pooling::Gmp ? gmp_pool(emb, opt.lambda) : sum_pool(emb);
  GlobalDescriptor g{doc.doc_id, doc.writer_id, power_norm(pooled, opt.power)};
  if (pca) g.values = pca_transform(*pca, g.values);
  return g;
}

inline Matrix stack(std::span<const GlobalDescriptor> globals) {
  require(!globals.empty(), Errc::InvalidArgument, "no global descriptors");
  const std::size_t e = globals.front().values.size();
  Matrix m(globals.size(), e);
  for (std::size_t i = 0; i < globals.size(); ++i) {
    require(globals[i].values.size() == e, Errc::DimMismatch, "global descriptor lengths differ");
    std::copy(globals[i].values.begin(), globals[i].values.end(), m.row(i).begin());
  }
  return m;
}

// GDSC1: "GDSC1\n" "doc_id writer_id E\n" then E f32 LE. Files may hold
// several records back to back.

inline std::string write_global(const GlobalDescriptor& g) {
  io::check_id(g.doc_id, "doc_id");
  io::check_id(g.writer_id, "writer_id");
  std::string out = "GDSC1\n" + g.doc_id + " " + g.writer_id + " " + std::to_string(g.values.size()) + "\n";
  io::append_f32(out, g.values);
  return out;
}

inline std::vector<GlobalDescriptor> read_globals(std::string_view bytes) {
  io::Reader in(bytes);
  std::vector<GlobalDescriptor> out;
  do {
    in.expect_magic("GDSC1\n");
    const auto f = io::header_fields(in.line(), 3);
    GlobalDescriptor g{f[0], f[1], Vector(io::parse_count(f[2]))};
    in.f32(g.values);
    require(all_finite(g.values), Errc::NonFinite, "GDSC1 '" + g.doc_id + "': NaN/Inf");
    out.push_back(std::move(g));
  } while (!in.at_end());
  return out;
}

// PCA1: "PCA1\n" "dimension E\n" then mean (E), components (dimension*E),
// scales (dimension) as f32 LE.

inline std::string write_pca(const PcaModel& model) {
  std::string out = "PCA1\n" + std::to_string(model.output_dim()) + " " +
                    std::to_string(model.input_dim()) + "\n";
  io::append_f32(out, model.mean);
  io::append_f32(out, model.components.data());
  io::append_f32(out, model.scales);
  return out;
}

inline PcaModel read_pca(std::string_view bytes) {
  io::Reader in(bytes);
  in.expect_magic("PCA1\n");
  const auto f = io::header_fields(in.line(), 2);
  const auto dim = io::parse_count(f[0]);
  const auto e = io::parse_count(f[1]);
  PcaModel m{Vector(e), Matrix(dim, e), Vector(dim), {}};
  in.f32(m.mean);
  in.f32(m.components.data());
  in.f32(m.scales);
  return m;
}

}  // namespace wir
