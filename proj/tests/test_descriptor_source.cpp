#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "wir/descriptor_source.hpp"

using namespace wir;

namespace {

PatchSet random_patches(std::size_t n, SeededRng& rng) {
  PatchSet s{"doc1", "w1", {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    Patch p;
    for (auto& v : p) v = static_cast<float>(rng.uniform());
    s.patches.push_back(p);
  }
  return s;
}

}  // namespace

TEST_CASE("projection is seeded and orthonormal", "[describe]") {
  const Matrix a = projection_matrix(5, 16);
  CHECK(a.rows() == 16);
  CHECK(a.cols() == 1024);
  CHECK(a == projection_matrix(5, 16));
  CHECK(!(a == projection_matrix(6, 16)));
  for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(norm2(a.row(i)) - 1.0) < 1e-12);
}

TEST_CASE("projection removes the patch mean", "[describe]") {
  SeededRng rng(1);
  auto set = random_patches(5, rng);
  auto shifted = set;
  for (auto& p : shifted.patches)
    for (auto& v : p) v += 0.25f;
  const Matrix proj = projection_matrix(0, 8);
  const auto a = project_patches(set, proj);
  const auto b = project_patches(shifted, proj);
  for (std::size_t i = 0; i < a.descriptors.data().size(); ++i)
    CHECK(std::abs(a.descriptors.data()[i] - b.descriptors.data()[i]) < 1e-5);

  // naive oracle on one row
  const auto& p = set.patches[2];
  double mean = 0;
  for (float v : p) mean += v;
  mean /= 1024;
  for (std::size_t d = 0; d < 8; ++d) {
    double s = 0;
    for (std::size_t j = 0; j < 1024; ++j) s += proj(d, j) * (p[j] - mean);
    CHECK(std::abs(a.descriptors(2, d) - s) < 1e-10);
  }
}

TEST_CASE("DESC1 round trip and validation", "[describe][format]") {
  SeededRng rng(2);
  DescriptorSet s{"doc_a", "w-1", test::random_matrix(7, 5, rng)};
  for (double& v : s.descriptors.data()) v = static_cast<float>(v);
  const auto bytes = write_desc(s);
  const auto back = read_desc(bytes);
  CHECK(back.doc_id == "doc_a");
  CHECK(back.writer_id == "w-1");
  CHECK(back.descriptors == s.descriptors);
  CHECK(read_desc(bytes, 5).dim() == 5);

  const auto code = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::Io;
  };
  CHECK(code([&] { read_desc(bytes, 6); }) == Errc::DimMismatch);
  CHECK(code([&] { read_desc(bytes.substr(0, bytes.size() - 3)); }) == Errc::Truncated);
  CHECK(code([&] { read_desc("DESC2\n"); }) == Errc::BadMagic);
  CHECK(code([&] { read_desc("DESC1\nd w 1\n"); }) == Errc::Truncated);
  DescriptorSet bad = s;
  bad.descriptors(0, 0) = std::numeric_limits<double>::infinity();
  CHECK(code([&] { read_desc(write_desc(bad)); }) == Errc::NonFinite);
  bad = s;
  bad.doc_id = "has space";
  CHECK_THROWS_AS(write_desc(bad), Error);

  std::vector<DescriptorSet> corpus{s, DescriptorSet{"x", "y", Matrix(2, 4)}};
  CHECK(code([&] { corpus_dim(corpus); }) == Errc::DimMismatch);
}
