#pragma once

// Semi-hard triplet training of NetVLAD parameters with Adamax.
//
// Distances between patch embeddings are squared Euclidean on the unit
// sphere. A step samples P writers x Q patches, embeds them, mines
// triplets on the frozen distance matrix, and backpropagates the mean
// hinge loss through the embedding.

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wir/descriptor_source.hpp"
#include "wir/error.hpp"
#include "wir/matrix.hpp"
#include "wir/netvlad.hpp"
#include "wir/parallel.hpp"
#include "wir/rng.hpp"

namespace wir {

/// Squared Euclidean distances between rows, clamped at zero with an exact
/// zero diagonal.
inline Matrix pairwise_sq_dist(const Matrix& embeddings) {
  require(embeddings.all_finite(), Errc::NonFinite, "pairwise_sq_dist: NaN/Inf");
  const std::size_t b = embeddings.rows();
  Matrix dist(b, b);
  Vector sq(b);
  for (std::size_t i = 0; i < b; ++i) sq[i] = dot(embeddings.row(i), embeddings.row(i));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      const double v = std::max(0.0, sq[i] + sq[j] - 2.0 * dot(embeddings.row(i), embeddings.row(j)));
      dist(i, j) = v;
      dist(j, i) = v;
    }
  }
  return dist;
}

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// One triplet per same-writer (anchor, positive) pair, a != p.
///
/// The negative is the closest one inside the semi-hard band
/// d(a,p) < d(a,n) < d(a,p) + margin. If the band is empty the closest
/// negative that still yields positive loss (d(a,n) < d(a,p) + margin) is
/// used instead; pairs with neither are skipped. Ties go to the lowest
/// index.
template <typename Label>
std::vector<Triplet> mine_semi_hard(const Matrix& dist, std::span<const Label> labels,
                                    double margin) {
  const std::size_t b = labels.size();
  require(dist.rows() == b && dist.cols() == b, Errc::DimMismatch, "mine: distance matrix shape");
  require(margin >= 0.0, Errc::InvalidArgument, "mine: margin must be >= 0");
  std::vector<Triplet> out;
  for (std::size_t a = 0; a < b; ++a) {
    for (std::size_t p = 0; p < b; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      const double dap = dist(a, p);
      std::optional<std::size_t> band;
      std::optional<std::size_t> fallback;
      for (std::size_t n = 0; n < b; ++n) {
        if (labels[n] == labels[a]) continue;
        const double dan = dist(a, n);
        if (dap < dan && dan < dap + margin) {
          if (!band || dan < dist(a, *band)) band = n;
        } else if (dan < dap + margin) {
          if (!fallback || dan < dist(a, *fallback)) fallback = n;
        }
      }
      if (band)
        out.push_back({a, p, *band});
      else if (fallback)
        out.push_back({a, p, *fallback});
    }
  }
  if (out.empty()) fail(Errc::NoValidTriplets, "no anchor-positive pair admits a negative");
  return out;
}

inline double triplet_loss(double d_ap, double d_an, double margin) noexcept {
  return std::max(d_ap - d_an + margin, 0.0);
}

/// Number of ordered same-label pairs (a, p) with a != p.
template <typename Label>
std::size_t count_positive_pairs(std::span<const Label> labels) {
  std::size_t n = 0;
  for (std::size_t a = 0; a < labels.size(); ++a)
    for (std::size_t p = 0; p < labels.size(); ++p)
      if (a != p && labels[a] == labels[p]) ++n;
  return n;
}

struct TripletLoss {
  double loss = 0.0;  // summed hinge divided by the normalizer
  Matrix grad;        // d loss / d embeddings, same shape as embeddings
};

/// Hinge loss over `triplets` divided by `normalizer`, and its gradient
/// with respect to the embedding rows. Training normalizes by the number of
/// anchor-positive pairs in the batch, so skipped pairs count as zero loss.
inline TripletLoss triplet_loss_and_grad(const Matrix& embeddings, const Matrix& dist,
                                         std::span<const Triplet> triplets, double margin,
                                         std::size_t normalizer) {
  TripletLoss out{0.0, Matrix(embeddings.rows(), embeddings.cols())};
  if (triplets.empty()) return out;
  require(normalizer >= 1, Errc::InvalidArgument, "triplet loss normalizer must be >= 1");
  const double scale = 1.0 / static_cast<double>(normalizer);
  const std::size_t e = embeddings.cols();
  for (const auto& t : triplets) {
    const double l = triplet_loss(dist(t.anchor, t.positive), dist(t.anchor, t.negative), margin);
    out.loss += l;
    if (l <= 0.0) continue;
    const auto ea = embeddings.row(t.anchor);
    const auto ep = embeddings.row(t.positive);
    const auto en = embeddings.row(t.negative);
    auto ga = out.grad.row(t.anchor);
    auto gp = out.grad.row(t.positive);
    auto gn = out.grad.row(t.negative);
    for (std::size_t i = 0; i < e; ++i) {
      ga[i] += 2.0 * scale * (en[i] - ep[i]);
      gp[i] -= 2.0 * scale * (ea[i] - ep[i]);
      gn[i] += 2.0 * scale * (ea[i] - en[i]);
    }
  }
  out.loss *= scale;
  return out;
}

struct AdamaxState {
  Vector m;
  Vector u;
  std::uint64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  static constexpr double kEpsilon = 1e-8;

  AdamaxState() = default;
  AdamaxState(std::size_t n, double lr_, double beta1_ = 0.9, double beta2_ = 0.99)
      : m(n, 0.0), u(n, 0.0), lr(lr_), beta1(beta1_), beta2(beta2_) {}
};

/// m <- b1 m + (1-b1) g;  u <- max(b2 u, |g|);
/// theta <- theta - lr / (1 - b1^t) * m / (u + 1e-8)
inline void adamax_step(AdamaxState& state, std::span<double> params, std::span<const double> grads) {
  require(params.size() == grads.size() && state.m.size() == params.size() &&
              state.u.size() == params.size(),
          Errc::DimMismatch, "adamax: shape mismatch");
  require(all_finite(grads), Errc::NonFinite, "adamax: gradient has NaN/Inf");
  ++state.t;
  const double step = state.lr / (1.0 - std::pow(state.beta1, static_cast<double>(state.t)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.u[i] = std::max(state.beta2 * state.u[i], std::abs(grads[i]));
    params[i] -= step * state.m[i] / (state.u[i] + AdamaxState::kEpsilon);
  }
}

struct TrainConfig {
  double margin = 0.1;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.99;
  std::size_t batch_writers = 8;
  std::size_t batch_patches = 8;
  std::size_t epochs = 5;
  std::uint64_t seed = 0;
  double val_fraction = 0.05;
  double min_improvement = 0.0;  // early stop threshold on epoch loss; 0 disables
  std::size_t steps_per_epoch = 0;  // 0: train patches / (P*Q)
  std::size_t threads = 1;
};

struct StepLoss {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // 1-based, global
  double loss = 0.0;
};

struct TrainHistory {
  std::vector<StepLoss> steps;
  Vector epoch_loss;      // mean step loss per epoch
  Vector epoch_val_loss;  // NaN when the validation split cannot form triplets
  bool stopped_early = false;
};

struct TrainResult {
  NetVladParams params;
  TrainHistory history;
};

/// Loss of one batch and its gradient in NetVladParams::flatten() order.
struct BatchEvaluation {
  double loss = 0.0;  // hinge sum / anchor-positive pairs
  std::size_t pairs = 0;
  std::vector<Triplet> triplets;
  Vector grad;
};

/// Embeds `batch` rows, mines triplets and returns loss and parameter
/// gradient. Per-sample backward passes run on `threads` workers and are
/// reduced in sample order.
template <typename Label>
BatchEvaluation evaluate_batch(const NetVladParams& params, const Matrix& batch,
                               std::span<const Label> labels, double margin, std::size_t threads,
                               bool with_grad = true,
                               const std::vector<Triplet>* fixed_triplets = nullptr) {
  const std::size_t b = batch.rows();
  std::vector<EmbedForward> fwd(b);
  parallel_for(b, threads, [&](std::size_t i) { fwd[i] = embed_forward(params, batch.row(i)); });
  Matrix emb(b, params.embedding_size());
  for (std::size_t i = 0; i < b; ++i)
    std::copy(fwd[i].embedding.begin(), fwd[i].embedding.end(), emb.row(i).begin());
  const Matrix dist = pairwise_sq_dist(emb);

  BatchEvaluation out;
  out.triplets = fixed_triplets ? *fixed_triplets : mine_semi_hard(dist, labels, margin);
  out.pairs = count_positive_pairs(labels);
  auto tl = triplet_loss_and_grad(emb, dist, out.triplets, margin, out.pairs);
  out.loss = tl.loss;
  if (!with_grad) return out;

  const std::size_t kd = params.embedding_size();
  const std::size_t k = params.clusters();
  std::vector<Vector> per_sample(b);
  parallel_for(b, threads, [&](std::size_t i) {
    const auto up = tl.grad.row(i);
    if (max_abs(up) == 0.0) return;
    const auto g = embed_backward(params, batch.row(i), up, fwd[i]);
    Vector flat;
    flat.reserve(params.parameter_count());
    flat.insert(flat.end(), g.centers.data().begin(), g.centers.data().end());
    flat.insert(flat.end(), g.weights.data().begin(), g.weights.data().end());
    flat.insert(flat.end(), g.biases.begin(), g.biases.end());
    per_sample[i] = std::move(flat);
  });
  out.grad.assign(2 * kd + k, 0.0);
  for (const auto& g : per_sample)
    if (!g.empty()) axpy(1.0, g, out.grad);
  return out;
}

namespace detail {

struct WriterPool {
  std::vector<std::vector<std::size_t>> rows;  // per writer, indices into the patch matrix
};

inline std::vector<std::size_t> eligible_writers(const WriterPool& pool) {
  std::vector<std::size_t> out;
  for (std::size_t w = 0; w < pool.rows.size(); ++w)
    if (pool.rows[w].size() >= 2) out.push_back(w);
  return out;
}

struct Batch {
  Matrix x;
  std::vector<std::size_t> labels;
};

inline Batch sample_batch(const Matrix& patches, const WriterPool& pool,
                          const std::vector<std::size_t>& eligible, std::size_t p, std::size_t q,
                          SeededRng& rng) {
  const std::size_t pw = std::min(p, eligible.size());
  std::vector<std::size_t> rows;
  std::vector<std::size_t> labels;
  for (auto wi : rng.sample_without_replacement(eligible.size(), pw)) {
    const auto& mine = pool.rows[eligible[wi]];
    for (auto r : rng.sample_without_replacement(mine.size(), std::min(q, mine.size()))) {
      rows.push_back(mine[r]);
      labels.push_back(eligible[wi]);
    }
  }
  Batch b{Matrix(rows.size(), patches.cols()), std::move(labels)};
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(patches.row(rows[i]).begin(), patches.row(rows[i]).end(), b.x.row(i).begin());
  return b;
}

}  // namespace detail

/// Trains a copy of `init` on the descriptors of `corpus`, grouped by
/// writer. Each writer's descriptors are split into disjoint training and
/// validation parts (seeded). Deterministic in (corpus, init, config)
/// regardless of config.threads.
inline TrainResult train(std::span<const DescriptorSet> corpus, const NetVladParams& init,
                         const TrainConfig& cfg) {
  init.validate();
  require(cfg.batch_writers >= 2 && cfg.batch_patches >= 2, Errc::InvalidArgument,
          "batch needs >= 2 writers and >= 2 patches per writer");
  require(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0, Errc::InvalidArgument,
          "val_fraction must be in [0, 1)");
  const std::size_t d = corpus_dim(corpus);
  require(d == init.dim(), Errc::DimMismatch, "descriptor D differs from NetVLAD D");

  std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> by_writer;
  std::size_t total = 0;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    for (std::size_t r = 0; r < corpus[s].count(); ++r) by_writer[corpus[s].writer_id].push_back({s, r});
    total += corpus[s].count();
  }
  Matrix all(total, d);
  detail::WriterPool train_pool;
  detail::WriterPool val_pool;
  SeededRng split_rng(cfg.seed);
  std::size_t next_row = 0;
  for (const auto& [writer, items] : by_writer) {
    std::vector<std::size_t> idx;
    for (const auto& [s, r] : items) {
      std::copy(corpus[s].descriptors.row(r).begin(), corpus[s].descriptors.row(r).end(),
                all.row(next_row).begin());
      idx.push_back(next_row++);
    }
    split_rng.shuffle(idx);
    std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(idx.size())));
    if (idx.size() - n_val < 2) n_val = idx.size() >= 2 ? idx.size() - 2 : 0;
    std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(val.begin(), val.end());
    std::sort(tr.begin(), tr.end());
    train_pool.rows.push_back(std::move(tr));
    val_pool.rows.push_back(std::move(val));
  }

  const auto eligible = detail::eligible_writers(train_pool);
  if (eligible.size() < 2)
    fail(Errc::InsufficientWriters, "training needs >= 2 writers with >= 2 descriptors, have " +
                                        std::to_string(eligible.size()));
  std::size_t n_train = 0;
  for (const auto& r : train_pool.rows) n_train += r.size();
  const std::size_t per_batch = cfg.batch_writers * cfg.batch_patches;
  const std::size_t steps = cfg.steps_per_epoch != 0 ? cfg.steps_per_epoch
                                                     : std::max<std::size_t>(1, n_train / per_batch);

  // validation batches are drawn once and reused every epoch
  std::vector<detail::Batch> val_batches;
  const auto val_eligible = detail::eligible_writers(val_pool);
  if (val_eligible.size() >= 2) {
    std::size_t n_val = 0;
    for (const auto& r : val_pool.rows) n_val += r.size();
    SeededRng val_rng = SeededRng(cfg.seed).fork(1);
    const std::size_t nb = std::max<std::size_t>(1, n_val / per_batch);
    for (std::size_t i = 0; i < nb; ++i)
      val_batches.push_back(detail::sample_batch(all, val_pool, val_eligible, cfg.batch_writers,
                                                 cfg.batch_patches, val_rng));
  }

  TrainResult res{init, {}};
  Vector flat = res.params.flatten();
  AdamaxState opt(flat.size(), cfg.lr, cfg.beta1, cfg.beta2);
  SeededRng batch_rng = SeededRng(cfg.seed).fork(2);
  std::size_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double epoch_sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      ++global_step;
      const auto batch = detail::sample_batch(all, train_pool, eligible, cfg.batch_writers,
                                              cfg.batch_patches, batch_rng);
      double loss = 0.0;
      try {
        auto ev = evaluate_batch(res.params, batch.x, std::span<const std::size_t>(batch.labels),
                                 cfg.margin, cfg.threads);
        loss = ev.loss;
        adamax_step(opt, flat, ev.grad);
        res.params.assign_flat(flat);
      } catch (const Error& e) {
        if (e.code() != Errc::NoValidTriplets) throw;
      }
      res.history.steps.push_back({epoch, global_step, loss});
      epoch_sum += loss;
    }
    res.history.epoch_loss.push_back(epoch_sum / static_cast<double>(steps));

    double val_sum = 0.0;
    std::size_t val_count = 0;
    for (const auto& vb : val_batches) {
      try {
        const auto ev = evaluate_batch(res.params, vb.x, std::span<const std::size_t>(vb.labels),
                                       cfg.margin, cfg.threads, false);
        val_sum += ev.loss * static_cast<double>(ev.pairs);
        val_count += ev.pairs;
      } catch (const Error& e) {
        if (e.code() != Errc::NoValidTriplets) throw;
        val_count += count_positive_pairs(std::span<const std::size_t>(vb.labels));
      }
    }
    res.history.epoch_val_loss.push_back(
        val_count ? val_sum / static_cast<double>(val_count) : std::numeric_limits<double>::quiet_NaN());

    const auto& el = res.history.epoch_loss;
    if (cfg.min_improvement > 0.0 && el.size() >= 2 &&
        el[el.size() - 2] - el.back() < cfg.min_improvement) {
      res.history.stopped_early = true;
      break;
    }
  }
  return res;
}

/// Training-loss CSV: header "epoch,step,loss" then one row per step.
inline std::string loss_csv(const TrainHistory& h) {
  std::string out = "epoch,step,loss\n";
  char buf[64];
  for (const auto& s : h.steps) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g\n", s.epoch, s.step, s.loss);
    out += buf;
  }
  return out;
}

}  // namespace wir
