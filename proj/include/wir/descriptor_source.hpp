#pragma once

// Local descriptors per document. The learned CNN backbone is replaced by a
// fixed seeded orthonormal projection of mean-removed patches; descriptors
// from any external extractor can be brought in through DESC1 files.

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wir/binary_io.hpp"
#include "wir/error.hpp"
#include "wir/matrix.hpp"
#include "wir/numerics.hpp"
#include "wir/page_ingest.hpp"
#include "wir/rng.hpp"

namespace wir {

inline constexpr std::size_t kDefaultDescriptorDim = 64;

struct DescriptorSet {
  std::string doc_id;
  std::string writer_id;
  Matrix descriptors;  // N x D

  std::size_t count() const noexcept { return descriptors.rows(); }
  std::size_t dim() const noexcept { return descriptors.cols(); }
};

/// D x 1024 projection with orthonormal rows.
inline Matrix projection_matrix(std::uint64_t proj_seed, std::size_t dim = kDefaultDescriptorDim) {
  SeededRng rng(proj_seed);
  return random_orthonormal_rows(dim, kPatchPixels, rng);
}

inline DescriptorSet project_patches(const PatchSet& patches, const Matrix& projection) {
  require(!patches.patches.empty(), Errc::InvalidArgument, "project_patches: empty patch set");
  require(projection.cols() == kPatchPixels, Errc::DimMismatch, "projection must have 1024 columns");
  DescriptorSet out{patches.doc_id, patches.writer_id,
                    Matrix(patches.patches.size(), projection.rows())};
  Vector centered(kPatchPixels);
  for (std::size_t i = 0; i < patches.patches.size(); ++i) {
    const auto& p = patches.patches[i];
    double mean = 0.0;
    for (float v : p) mean += v;
    mean /= static_cast<double>(kPatchPixels);
    for (std::size_t j = 0; j < kPatchPixels; ++j) centered[j] = static_cast<double>(p[j]) - mean;
    auto row = out.descriptors.row(i);
    for (std::size_t d = 0; d < projection.rows(); ++d) row[d] = dot(projection.row(d), centered);
  }
  return out;
}

inline DescriptorSet project_patches(const PatchSet& patches, std::uint64_t proj_seed,
                                     std::size_t dim = kDefaultDescriptorDim) {
  return project_patches(patches, projection_matrix(proj_seed, dim));
}

// DESC1: "DESC1\n" "doc_id writer_id N D\n" then N*D f32 LE, row-major.

inline std::string write_desc(const DescriptorSet& set) {
  io::check_id(set.doc_id, "doc_id");
  io::check_id(set.writer_id, "writer_id");
  std::string out = "DESC1\n" + set.doc_id + " " + set.writer_id + " " +
                    std::to_string(set.count()) + " " + std::to_string(set.dim()) + "\n";
  io::append_f32(out, set.descriptors.data());
  return out;
}

/// `expected_dim` of 0 accepts any D.
inline DescriptorSet read_desc(std::string_view bytes, std::size_t expected_dim = 0) {
  io::Reader in(bytes);
  in.expect_magic("DESC1\n");
  const auto f = io::header_fields(in.line(), 4);
  const auto n = io::parse_count(f[2]);
  const auto d = io::parse_count(f[3]);
  if (expected_dim != 0 && d != expected_dim)
    fail(Errc::DimMismatch, "DESC1 '" + f[0] + "': D=" + std::to_string(d) + ", corpus uses " +
                                std::to_string(expected_dim));
  require(n >= 1 && d >= 1, Errc::Truncated, "DESC1: empty descriptor set");
  DescriptorSet out{f[0], f[1], Matrix(n, d)};
  in.f32(out.descriptors.data());
  require(out.descriptors.all_finite(), Errc::NonFinite, "DESC1 '" + f[0] + "': NaN/Inf");
  return out;
}

inline void write_desc_file(const std::string& path, const DescriptorSet& set) {
  io::write_file(path, write_desc(set));
}

inline DescriptorSet read_desc_file(const std::string& path, std::size_t expected_dim = 0) {
  return read_desc(io::read_file(path), expected_dim);
}

/// Checks that every set in a corpus shares one descriptor dimension and
/// returns it.
inline std::size_t corpus_dim(std::span<const DescriptorSet> corpus) {
  require(!corpus.empty(), Errc::InvalidArgument, "empty corpus");
  const std::size_t d = corpus.front().dim();
  for (const auto& s : corpus)
    require(s.dim() == d, Errc::DimMismatch,
            "document '" + s.doc_id + "' has D=" + std::to_string(s.dim()) + ", expected " +
                std::to_string(d));
  return d;
}

}  // namespace wir
