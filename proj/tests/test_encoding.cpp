#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "wir/encoding.hpp"
#include "wir/synth.hpp"

using namespace wir;
using test::random_matrix;
using test::random_vector;

namespace {

Matrix unit_rows(std::size_t n, std::size_t e, SeededRng& rng) {
  Matrix m = random_matrix(n, e, rng);
  for (std::size_t i = 0; i < n; ++i) normalize_l2(m.row(i));
  return m;
}

Matrix covariance(const std::vector<Vector>& rows) {
  const std::size_t m = rows.size(), e = rows.front().size();
  Vector mean(e, 0.0);
  for (const auto& r : rows) axpy(1.0 / static_cast<double>(m), r, mean);
  Matrix c(e, e);
  for (const auto& r : rows)
    for (std::size_t a = 0; a < e; ++a)
      for (std::size_t b = 0; b < e; ++b) c(a, b) += (r[a] - mean[a]) * (r[b] - mean[b]) / static_cast<double>(m - 1);
  return c;
}

}  // namespace

TEST_CASE("GMP satisfies the primal normal equations", "[gmp]") {
  SeededRng rng(1);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + rng.below(120), e = 1 + rng.below(150);
    const double lambda = std::pow(10.0, rng.uniform(-4, 3));
    const Matrix emb = unit_rows(n, e, rng);
    CHECK(test::gmp_primal_residual(emb, gmp_pool(emb, lambda), lambda) <= 1e-8);
  }
}

TEST_CASE("GMP agrees with the primal solve", "[gmp]") {
  SeededRng rng(2);
  const Matrix emb = unit_rows(9, 6, rng);
  const double lambda = 0.3;
  Matrix a(6, 6);
  Vector b(6, 0.0);
  for (std::size_t i = 0; i < 9; ++i) {
    axpy(1.0, emb.row(i), b);
    for (std::size_t p = 0; p < 6; ++p)
      for (std::size_t q = 0; q < 6; ++q) a(p, q) += emb(i, p) * emb(i, q);
  }
  for (std::size_t p = 0; p < 6; ++p) a(p, p) += lambda;
  const Vector ref = test::gauss_jordan_solve(a, b);
  const Vector xi = gmp_pool(emb, lambda);
  for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(xi[j] - ref[j]) < 1e-10);
}

TEST_CASE("GMP of one embedding has a closed form", "[gmp]") {
  SeededRng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Matrix phi = random_matrix(1, 1 + rng.below(40), rng, rng.uniform(0.1, 3));
    const double lambda = std::pow(10.0, rng.uniform(-6, 3));
    const Vector xi = gmp_pool(phi, lambda);
    const double s = dot(phi.row(0), phi.row(0)) + lambda;
    for (std::size_t j = 0; j < xi.size(); ++j) CHECK(std::abs(xi[j] - phi(0, j) / s) <= 1e-10 * std::max(1.0, std::abs(xi[j])));
  }
}

TEST_CASE("GMP resists duplicated embeddings better than sum pooling", "[gmp]") {
  SeededRng rng(4);
  const Matrix emb = unit_rows(10, 32, rng);
  for (std::size_t r : {1u, 10u, 100u}) {
    const auto d = test::burstiness_drift(emb, r, 1e-6);
    CHECK(d.gmp < d.sum);
  }
}

TEST_CASE("sum pooling and power normalization", "[encode]") {
  const Matrix m = Matrix::from_rows({{1, -2}, {3, 0}});
  CHECK(sum_pool(m) == Vector{4, -2});
  const Vector v = power_norm(Vector{4, -9, 0}, 0.5);
  const double n = std::sqrt(4.0 + 9.0);
  CHECK(v[0] == Catch::Approx(2 / n));
  CHECK(v[1] == Catch::Approx(-3 / n));
  CHECK(v[2] == 0.0);
  const Vector same = power_norm(Vector{3, 4}, 1.0);
  CHECK(same[0] == Catch::Approx(0.6));
  CHECK(power_norm(Vector{0, 0}) == Vector{0, 0});
}

TEST_CASE("PCA whitening gives identity covariance", "[pca]") {
  SeededRng rng(5);
  // both eigen paths: Gram side (M < E) and covariance side (M >= E)
  for (auto [m, e, dim] : {std::tuple{40, 100, 20}, std::tuple{200, 30, 30}, std::tuple{60, 60, 16}}) {
    Matrix data = random_matrix(m, e, rng);
    for (std::size_t i = 0; i < data.rows(); ++i)
      for (std::size_t j = 0; j < data.cols(); ++j) data(i, j) *= 1.0 + static_cast<double>(j % 7);
    const auto model = pca_fit(data, dim, true);
    std::vector<Vector> out;
    for (std::size_t i = 0; i < data.rows(); ++i) out.push_back(pca_project(model, data.row(i)));
    const Matrix c = covariance(out);
    for (std::size_t a = 0; a < static_cast<std::size_t>(dim); ++a)
      for (std::size_t b = 0; b < static_cast<std::size_t>(dim); ++b)
        CHECK(std::abs(c(a, b) - (a == b ? 1.0 : 0.0)) <= 1e-6);
    for (std::size_t a = 0; a < model.components.rows(); ++a)
      CHECK(std::abs(norm2(model.components.row(a)) - 1.0) < 1e-10);
  }
}

TEST_CASE("PCA without whitening keeps eigenvalue variances", "[pca]") {
  SeededRng rng(6);
  const Matrix data = random_matrix(80, 10, rng);
  const auto model = pca_fit(data, 5, false);
  std::vector<Vector> out;
  for (std::size_t i = 0; i < 80; ++i) out.push_back(pca_project(model, data.row(i)));
  const Matrix c = covariance(out);
  for (std::size_t a = 0; a < 5; ++a) {
    CHECK(model.scales[a] == 1.0);
    CHECK(c(a, a) == Catch::Approx(model.eigenvalues[a]).epsilon(1e-9));
  }
  CHECK(std::abs(norm2(pca_transform(model, data.row(0))) - 1.0) < 1e-12);
}

TEST_CASE("PCA dimension limits", "[pca]") {
  SeededRng rng(7);
  const auto code_and_message = [](auto&& fn) -> std::pair<Errc, std::string> {
    try {
      fn();
    } catch (const Error& e) {
      return {e.code(), e.what()};
    }
    return {Errc::Io, ""};
  };
  const Matrix small = random_matrix(10, 50, rng);
  auto [c1, m1] = code_and_message([&] { pca_fit(small, 10); });
  CHECK(c1 == Errc::DimensionTooLarge);
  CHECK(m1.find("= 9") != std::string::npos);
  CHECK_NOTHROW(pca_fit(small, 9));

  // rank 3 data embedded in 20 dimensions
  const Matrix basis = random_matrix(3, 20, rng);
  const Matrix coef = random_matrix(40, 3, rng);
  const Matrix low = matmul(coef, basis);
  auto [c2, m2] = code_and_message([&] { pca_fit(low, 5); });
  CHECK(c2 == Errc::DimensionTooLarge);
  CHECK(m2.find("rank 3") != std::string::npos);
  CHECK_NOTHROW(pca_fit(low, 3));

  const auto model = pca_fit(small, 4);
  CHECK(code_and_message([&] { pca_project(model, Vector(49)); }).first == Errc::DimMismatch);
  CHECK(code_and_message([&] { pca_fit(Matrix(1, 4), 1); }).first == Errc::TooFewSamples);
}

TEST_CASE("PCA1 and GDSC1 round trips", "[encode][format]") {
  SeededRng rng(8);
  auto model = pca_fit(random_matrix(30, 12, rng), 6);
  for (double& v : model.mean) v = static_cast<float>(v);
  for (double& v : model.components.data()) v = static_cast<float>(v);
  for (double& v : model.scales) v = static_cast<float>(v);
  const auto back = read_pca(write_pca(model));
  CHECK(back.mean == model.mean);
  CHECK(back.components == model.components);
  CHECK(back.scales == model.scales);

  GlobalDescriptor a{"d1", "w1", {0.5, -0.25}}, b{"d2", "w2", {1.0, 2.0}};
  const auto both = read_globals(write_global(a) + write_global(b));
  REQUIRE(both.size() == 2);
  CHECK(both[0].doc_id == "d1");
  CHECK(both[1].writer_id == "w2");
  CHECK(both[1].values == b.values);
  CHECK_THROWS_AS(read_globals(write_global(a) + "GDSC1\nd3 w3 2\n"), Error);
}

TEST_CASE("document encoding follows embed, pool, normalize", "[encode]") {
  SynthConfig cfg;
  cfg.writers = 2;
  cfg.docs_per_writer = 1;
  cfg.descriptors_per_doc = 12;
  cfg.dim = 6;
  const auto corpus = synth_corpus(cfg);
  SeededRng rng(9);
  const auto params = test::random_params(4, 6, rng);
  const Matrix emb = embed_all(params, corpus[0].descriptors);
  for (auto pooling : {Pooling::Gmp, Pooling::Sum}) {
    const EncodeOptions opt{pooling, 10.0, 0.5};
    const auto g = encode_document(corpus[0], params, opt);
    const Vector ref = power_norm(pooling == Pooling::Gmp ? gmp_pool(emb, 10.0) : sum_pool(emb), 0.5);
    CHECK(g.values == ref);
    CHECK(g.doc_id == corpus[0].doc_id);
  }
  const auto wrong = test::random_params(4, 5, rng);
  CHECK_THROWS_AS(encode_document(corpus[0], wrong), Error);
}
