#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "wir/synth.hpp"
#include "wir/training.hpp"

using namespace wir;
using test::random_matrix;

namespace {

std::vector<int> random_labels(std::size_t n, int classes, SeededRng& rng) {
  std::vector<int> l(n);
  for (auto& v : l) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  return l;
}

// Candidate lists first, then selection, as a second formulation of the
// mining rule.
std::vector<Triplet> brute_mine(const Matrix& dist, const std::vector<int>& labels, double margin) {
  std::vector<Triplet> out;
  const std::size_t b = labels.size();
  for (std::size_t a = 0; a < b; ++a)
    for (std::size_t p = 0; p < b; ++p) {
      if (a == p || labels[a] != labels[p]) continue;
      std::vector<std::size_t> band, loose;
      for (std::size_t n = 0; n < b; ++n) {
        if (labels[n] == labels[a]) continue;
        if (dist(a, n) > dist(a, p) && dist(a, n) < dist(a, p) + margin) band.push_back(n);
        if (dist(a, n) < dist(a, p) + margin) loose.push_back(n);
      }
      const auto& pool = band.empty() ? loose : band;
      if (pool.empty()) continue;
      std::size_t best = pool.front();
      for (auto n : pool)
        if (dist(a, n) < dist(a, best)) best = n;
      out.push_back({a, p, best});
    }
  return out;
}

double fixed_loss(const Matrix& emb, const std::vector<Triplet>& ts, double margin, std::size_t norm) {
  const Matrix d = pairwise_sq_dist(emb);
  double s = 0;
  for (const auto& t : ts) s += triplet_loss(d(t.anchor, t.positive), d(t.anchor, t.negative), margin);
  return s / static_cast<double>(norm);
}

std::vector<DescriptorSet> small_corpus(double separation, std::size_t writers = 6) {
  SynthConfig cfg;
  cfg.writers = writers;
  cfg.docs_per_writer = 2;
  cfg.descriptors_per_doc = 20;
  cfg.dim = 8;
  cfg.separation = separation;
  cfg.seed = 3;
  return synth_corpus(cfg);
}

}  // namespace

TEST_CASE("pairwise squared distances", "[training]") {
  SeededRng rng(1);
  const Matrix e = random_matrix(7, 5, rng);
  const Matrix d = pairwise_sq_dist(e);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(d(i, i) == 0.0);
    for (std::size_t j = 0; j < 7; ++j) CHECK(std::abs(d(i, j) - squared_distance(e.row(i), e.row(j))) < 1e-12);
  }
}

TEST_CASE("semi-hard mining matches brute force", "[training][mining]") {
  SeededRng rng(2);
  for (int t = 0; t < 100; ++t) {
    const std::size_t b = 4 + rng.below(20);
    const auto labels = random_labels(b, 2 + static_cast<int>(rng.below(4)), rng);
    // coarse values create exact ties
    Matrix e = random_matrix(b, 3, rng);
    for (double& v : e.data()) v = std::round(v * 4) / 4;
    const Matrix d = pairwise_sq_dist(e);
    const double margin = rng.uniform(0.05, 2.0);
    const auto want = brute_mine(d, labels, margin);
    if (want.empty()) {
      CHECK_THROWS_AS(mine_semi_hard(d, std::span<const int>(labels), margin), Error);
      continue;
    }
    const auto got = mine_semi_hard(d, std::span<const int>(labels), margin);
    CHECK(got == want);
    for (const auto& tr : got) {
      CHECK(labels[tr.anchor] == labels[tr.positive]);
      CHECK(labels[tr.anchor] != labels[tr.negative]);
      CHECK(d(tr.anchor, tr.negative) < d(tr.anchor, tr.positive) + margin);
    }
  }
}

TEST_CASE("triplet loss gradient matches finite differences", "[training][gradient]") {
  SeededRng rng(3);
  for (int t = 0; t < 10; ++t) {
    const std::size_t b = 8;
    const auto labels = random_labels(b, 3, rng);
    Matrix e = random_matrix(b, 4, rng, 0.3);
    const Matrix d = pairwise_sq_dist(e);
    std::vector<Triplet> ts;
    try {
      ts = mine_semi_hard(d, std::span<const int>(labels), 0.5);
    } catch (const Error&) {
      continue;
    }
    const std::size_t norm = count_positive_pairs(std::span<const int>(labels));
    const auto tl = triplet_loss_and_grad(e, d, ts, 0.5, norm);
    CHECK(tl.loss == Catch::Approx(fixed_loss(e, ts, 0.5, norm)).margin(1e-14));
    // the loss is smooth only away from each hinge's kink
    bool near_kink = false;
    for (const auto& tr : ts)
      near_kink |= std::abs(d(tr.anchor, tr.positive) - d(tr.anchor, tr.negative) + 0.5) < 1e-3;
    if (near_kink) continue;
    const double h = 1e-6;
    for (std::size_t i = 0; i < e.data().size(); ++i) {
      const double keep = e.data()[i];
      e.data()[i] = keep + h;
      const double fp = fixed_loss(e, ts, 0.5, norm);
      e.data()[i] = keep - h;
      const double fm = fixed_loss(e, ts, 0.5, norm);
      e.data()[i] = keep;
      CHECK(std::abs((fp - fm) / (2 * h) - tl.grad.data()[i]) <= 1e-6);
    }
  }
}

TEST_CASE("batch gradient matches finite differences of the loss", "[training][gradient]") {
  SeededRng rng(4);
  const auto params = test::random_params(3, 4, rng, 0.5);
  const Matrix x = random_matrix(8, 4, rng);
  const std::vector<int> labels{0, 0, 1, 1, 2, 2, 0, 1};
  const auto ev = evaluate_batch(params, x, std::span<const int>(labels), 0.3, 1);
  const auto with_fixed = [&](const NetVladParams& p) {
    return evaluate_batch(p, x, std::span<const int>(labels), 0.3, 1, false, &ev.triplets).loss;
  };
  Vector flat = params.flatten();
  NetVladParams p = params;
  const double h = 1e-5;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + h;
    p.assign_flat(flat);
    const double fp = with_fixed(p);
    flat[i] = keep - h;
    p.assign_flat(flat);
    const double fm = with_fixed(p);
    flat[i] = keep;
    const double num = (fp - fm) / (2 * h);
    CHECK(test::rel_diff(ev.grad[i], num, 1e-6) <= 1e-4);
    ++checked;
  }
  CHECK(checked == params.parameter_count());
  const auto ev3 = evaluate_batch(params, x, std::span<const int>(labels), 0.3, 3);
  CHECK(ev3.grad == ev.grad);
}

TEST_CASE("Adamax update by hand", "[training][adamax]") {
  AdamaxState s(2, 0.1, 0.9, 0.99);
  Vector theta{1.0, -1.0};
  const std::vector<Vector> grads{{0.5, -2.0}, {-1.0, 0.0}, {0.25, 1.0}};
  Vector m(2, 0), u(2, 0), ref = theta;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    adamax_step(s, theta, grads[t - 1]);
    for (std::size_t i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      u[i] = std::max(0.99 * u[i], std::abs(grads[t - 1][i]));
      ref[i] -= 0.1 / (1 - std::pow(0.9, static_cast<double>(t))) * m[i] / (u[i] + 1e-8);
    }
    for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(theta[i] - ref[i]) < 1e-15);
  }
  CHECK(s.t == 3);
}

TEST_CASE("training is deterministic and thread independent", "[training]") {
  const auto corpus = small_corpus(5.0);
  SeededRng rng(5);
  Matrix samples(10, 8);
  for (double& v : samples.data()) v = rng.normal();
  SeededRng irng(1);
  const auto init = init_params(samples, 4, 25.0, InitMode::Random, irng);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_writers = 4;
  cfg.batch_patches = 4;
  cfg.seed = 9;
  const auto a = train(corpus, init, cfg);
  cfg.threads = 3;
  const auto b = train(corpus, init, cfg);
  CHECK(a.params == b.params);
  CHECK(loss_csv(a.history) == loss_csv(b.history));
  CHECK(!(a.params == init));
  REQUIRE(a.history.epoch_loss.size() == 2);
  CHECK(a.history.steps.size() == 2 * ((6 * 38) / 16));

  cfg.epochs = 0;
  const auto zero = train(corpus, init, cfg);
  CHECK(zero.params == init);
  CHECK(loss_csv(zero.history) == "epoch,step,loss\n");
}

TEST_CASE("training reduces the loss on separable writers", "[training]") {
  const auto corpus = small_corpus(5.0, 8);
  SeededRng irng(2);
  const auto init = init_params(random_matrix(10, 8, irng), 8, 25.0, InitMode::Random, irng);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.seed = 1;
  const auto r = train(corpus, init, cfg);
  CHECK(r.history.epoch_loss.back() < r.history.epoch_loss.front());
}

TEST_CASE("training needs two writers", "[training]") {
  auto corpus = small_corpus(5.0, 2);
  for (auto& s : corpus) s.writer_id = "same";
  SeededRng irng(2);
  const auto init = init_params(random_matrix(10, 8, irng), 4, 25.0, InitMode::Random, irng);
  try {
    train(corpus, init, TrainConfig{});
    FAIL("expected InsufficientWriters");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InsufficientWriters);
  }
}

TEST_CASE("early stopping", "[training]") {
  const auto corpus = small_corpus(5.0);
  SeededRng irng(2);
  const auto init = init_params(random_matrix(10, 8, irng), 4, 25.0, InitMode::Random, irng);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.min_improvement = 1e3;
  const auto r = train(corpus, init, cfg);
  CHECK(r.history.stopped_early);
  CHECK(r.history.epoch_loss.size() == 2);
}
