#pragma once

// Seeded synthetic writer corpora: every writer is an isotropic Gaussian
// cluster of local descriptors.
//
// Writer means are separation*sigma/sqrt(2) times orthonormal directions
// when writers <= dim, so every pair of writer means is exactly
// separation*sigma apart. With more writers than dimensions the means are
// Gaussian with the same expected pairwise distance.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "wir/descriptor_source.hpp"
#include "wir/numerics.hpp"
#include "wir/rng.hpp"

namespace wir {

struct SynthConfig {
  std::size_t writers = 20;
  std::size_t docs_per_writer = 4;
  std::size_t descriptors_per_doc = 50;
  std::size_t dim = kDefaultDescriptorDim;
  double separation = 5.0;  // distance between writer means, in units of sigma
  double sigma = 1.0;
  std::uint64_t seed = 42;
};

inline std::string synth_writer_id(std::size_t w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "w%04zu", w);
  return buf;
}

inline std::string synth_doc_id(std::size_t w, std::size_t d) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "w%04zu_d%02zu", w, d);
  return buf;
}

inline std::vector<DescriptorSet> synth_corpus(const SynthConfig& cfg) {
  require(cfg.writers >= 1 && cfg.docs_per_writer >= 1 && cfg.descriptors_per_doc >= 1 && cfg.dim >= 1,
          Errc::InvalidArgument, "synth: counts must be positive");
  require(cfg.sigma > 0.0 && cfg.separation >= 0.0, Errc::InvalidArgument,
          "synth: sigma must be > 0 and separation >= 0");
  SeededRng mean_rng = SeededRng(cfg.seed).fork(0);
  SeededRng noise_rng = SeededRng(cfg.seed).fork(1);

  const double spacing = cfg.separation * cfg.sigma;
  Matrix means;
  if (cfg.writers <= cfg.dim) {
    means = random_orthonormal_rows(cfg.writers, cfg.dim, mean_rng);
    for (double& v : means.data()) v *= spacing / std::sqrt(2.0);
  } else {
    means = Matrix(cfg.writers, cfg.dim);
    const double s = spacing / std::sqrt(2.0 * static_cast<double>(cfg.dim));
    for (double& v : means.data()) v = s * mean_rng.normal();
  }

  std::vector<DescriptorSet> out;
  out.reserve(cfg.writers * cfg.docs_per_writer);
  for (std::size_t w = 0; w < cfg.writers; ++w) {
    for (std::size_t d = 0; d < cfg.docs_per_writer; ++d) {
      DescriptorSet set{synth_doc_id(w, d), synth_writer_id(w),
                        Matrix(cfg.descriptors_per_doc, cfg.dim)};
      for (std::size_t i = 0; i < cfg.descriptors_per_doc; ++i) {
        auto row = set.descriptors.row(i);
        for (std::size_t j = 0; j < cfg.dim; ++j) row[j] = means(w, j) + cfg.sigma * noise_rng.normal();
      }
      out.push_back(std::move(set));
    }
  }
  return out;
}

}  // namespace wir
