#pragma once

// Page images to contour-centred 32x32 patches.
//
// Ink is any pixel darker than the binarization threshold. A contour pixel
// is an ink pixel with at least one background pixel among its eight
// neighbours; neighbours outside the image count as background.

#include <array>
#include <cctype>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wir/binary_io.hpp"
#include "wir/error.hpp"
#include "wir/rng.hpp"

namespace wir {

inline constexpr std::size_t kPatchSide = 32;
inline constexpr std::size_t kPatchPixels = kPatchSide * kPatchSide;

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t at(std::size_t x, std::size_t y) const noexcept { return pixels[y * width + x]; }
  std::uint8_t& at(std::size_t x, std::size_t y) noexcept { return pixels[y * width + x]; }

  static GrayImage filled(std::size_t width, std::size_t height, std::uint8_t value) {
    return GrayImage{width, height, std::vector<std::uint8_t>(width * height, value)};
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct Point {
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

using Patch = std::array<float, kPatchPixels>;

struct PatchSet {
  std::string doc_id;
  std::string writer_id;
  std::vector<Patch> patches;
  std::vector<Point> centers;
};

namespace detail {

class PgmTokenizer {
 public:
  explicit PgmTokenizer(std::string_view bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  unsigned long number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) fail(Errc::Truncated, std::string("PGM: missing ") + what);
    unsigned long v = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<unsigned long>(bytes_[pos_] - '0');
      if (v > 100000000UL) fail(Errc::Truncated, std::string("PGM: ") + what + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) fail(Errc::Truncated, std::string("PGM: malformed ") + what);
    return v;
  }

  std::size_t& pos() noexcept { return pos_; }
  std::string_view bytes() const noexcept { return bytes_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Decodes binary (P5) or ASCII (P2) PGM. Comments are skipped. Images
/// with maxval below 255 are rescaled to 0..255 with rounding; maxval 255
/// decodes pixel-exactly.
inline GrayImage load_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2'))
    fail(Errc::BadMagic, "PGM: expected P5 or P2");
  const bool binary = bytes[1] == '5';
  detail::PgmTokenizer tok(bytes);
  tok.pos() = 2;
  const auto width = tok.number("width");
  const auto height = tok.number("height");
  const auto maxval = tok.number("maxval");
  if (maxval == 0 || maxval > 255)
    fail(Errc::MaxvalUnsupported, "PGM: maxval " + std::to_string(maxval) + " not in 1..255");
  require(width > 0 && height > 0, Errc::Truncated, "PGM: zero-sized image");

  GrayImage img{width, height, std::vector<std::uint8_t>(width * height)};
  const auto scale = [maxval](unsigned long v) -> std::uint8_t {
    if (maxval == 255) return static_cast<std::uint8_t>(v);
    return static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
  };

  if (binary) {
    // exactly one whitespace byte separates the header from the raster
    std::size_t& pos = tok.pos();
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
      fail(Errc::Truncated, "PGM: missing raster");
    ++pos;
    if (bytes.size() - pos < img.pixels.size())
      fail(Errc::Truncated, "PGM: raster has " + std::to_string(bytes.size() - pos) +
                                " bytes, need " + std::to_string(img.pixels.size()));
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      const auto v = static_cast<unsigned char>(bytes[pos + i]);
      if (v > maxval) fail(Errc::Truncated, "PGM: sample exceeds maxval");
      img.pixels[i] = scale(v);
    }
  } else {
    for (auto& p : img.pixels) {
      const auto v = tok.number("sample");
      if (v > maxval) fail(Errc::Truncated, "PGM: sample exceeds maxval");
      p = scale(v);
    }
  }
  return img;
}

inline GrayImage load_pgm_file(const std::string& path) { return load_pgm(io::read_file(path)); }

/// Binary P5 encoding with maxval 255.
inline std::string write_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

/// Otsu's global threshold. Returns t in 0..255 maximizing between-class
/// variance of the split {v < t} / {v >= t}; the lowest t wins ties.
inline int otsu_threshold(const GrayImage& img) {
  require(!img.pixels.empty(), Errc::InvalidArgument, "otsu: empty image");
  std::array<std::uint64_t, 256> hist{};
  for (auto p : img.pixels) ++hist[p];
  std::uint64_t total_sum = 0;
  for (std::size_t v = 0; v < 256; ++v) total_sum += v * hist[v];
  const auto total = static_cast<std::uint64_t>(img.pixels.size());

  int best_t = 0;
  double best = -1.0;
  std::uint64_t n0 = 0;
  std::uint64_t s0 = 0;
  for (int t = 0; t < 256; ++t) {
    if (t > 0) {
      n0 += hist[t - 1];
      s0 += static_cast<std::uint64_t>(t - 1) * hist[t - 1];
    }
    const std::uint64_t n1 = total - n0;
    const std::uint64_t s1 = total_sum - s0;
    double var = 0.0;
    if (n0 > 0 && n1 > 0) {
      const double mean_gap = static_cast<double>(s0) / static_cast<double>(n0) -
                              static_cast<double>(s1) / static_cast<double>(n1);
      var = static_cast<double>(n0) * static_cast<double>(n1) * mean_gap * mean_gap;
    }
    if (var > best) {
      best = var;
      best_t = t;
    }
  }
  return best_t;
}

inline bool is_ink(const GrayImage& img, std::size_t x, std::size_t y, int threshold) noexcept {
  return static_cast<int>(img.at(x, y)) < threshold;
}

/// True when (x, y) is ink with a background (or out-of-image) 8-neighbour.
inline bool is_contour(const GrayImage& img, std::size_t x, std::size_t y, int threshold) noexcept {
  if (!is_ink(img, x, y, threshold)) return false;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const auto nx = static_cast<long long>(x) + dx;
      const auto ny = static_cast<long long>(y) + dy;
      if (nx < 0 || ny < 0 || nx >= static_cast<long long>(img.width) ||
          ny >= static_cast<long long>(img.height))
        return true;
      if (!is_ink(img, static_cast<std::size_t>(nx), static_cast<std::size_t>(ny), threshold))
        return true;
    }
  }
  return false;
}

/// Contour pixels in row-major order.
inline std::vector<Point> contour_pixels(const GrayImage& img, int threshold) {
  std::vector<Point> out;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      if (is_contour(img, x, y, threshold)) out.push_back({x, y});
  return out;
}

/// A 32x32 window centred at c spans [c-16, c+15] on each axis.
inline bool patch_fits(const GrayImage& img, Point c) noexcept {
  constexpr std::size_t half = kPatchSide / 2;
  return c.x >= half && c.y >= half && c.x + (kPatchSide - half) <= img.width &&
         c.y + (kPatchSide - half) <= img.height;
}

inline Patch cut_patch(const GrayImage& img, Point c) {
  constexpr std::size_t half = kPatchSide / 2;
  Patch p{};
  for (std::size_t r = 0; r < kPatchSide; ++r)
    for (std::size_t col = 0; col < kPatchSide; ++col)
      p[r * kPatchSide + col] = static_cast<float>(img.at(c.x - half + col, c.y - half + r)) / 255.0f;
  return p;
}

struct PatchOptions {
  std::size_t stride = 3;
  std::size_t max_patches = 0;  // 0: keep all
  bool invert = false;          // light ink on dark background
};

/// Centres: contour pixels whose window fits the image, then every
/// stride-th of those in row-major order, then (when more than
/// max_patches remain) a seeded uniform subsample kept in row-major order.
inline std::vector<Point> patch_centers(const GrayImage& img, int threshold,
                                        const PatchOptions& opt, SeededRng& rng) {
  require(opt.stride >= 1, Errc::InvalidArgument, "stride must be >= 1");
  const auto contour = contour_pixels(img, threshold);
  if (contour.empty()) fail(Errc::NoContour, "page has no ink contour");
  std::vector<Point> valid;
  for (const auto& c : contour)
    if (patch_fits(img, c)) valid.push_back(c);
  if (valid.empty()) fail(Errc::NoContour, "no contour pixel admits a full 32x32 window");
  std::vector<Point> strided;
  for (std::size_t i = 0; i < valid.size(); i += opt.stride) strided.push_back(valid[i]);
  if (opt.max_patches == 0 || strided.size() <= opt.max_patches) return strided;
  std::vector<Point> picked;
  for (auto i : rng.sample_without_replacement(strided.size(), opt.max_patches))
    picked.push_back(strided[i]);
  return picked;
}

inline GrayImage inverted(const GrayImage& img) {
  GrayImage out = img;
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(255 - p);
  return out;
}

inline PatchSet extract_patches(const GrayImage& page, const PatchOptions& opt, SeededRng& rng,
                                std::string doc_id = "doc", std::string writer_id = "writer") {
  require(page.width >= kPatchSide && page.height >= kPatchSide, Errc::ImageTooSmall,
          "page must be at least 32x32");
  const GrayImage img = opt.invert ? inverted(page) : page;
  const int threshold = otsu_threshold(img);
  PatchSet out{std::move(doc_id), std::move(writer_id), {}, patch_centers(img, threshold, opt, rng)};
  out.patches.reserve(out.centers.size());
  for (const auto& c : out.centers) out.patches.push_back(cut_patch(img, c));
  return out;
}

// PTCH1 dump: "PTCH1\n" "count width height\n" then count*width*height f32 LE.

inline std::string write_ptch(const PatchSet& set) {
  std::string out = "PTCH1\n" + std::to_string(set.patches.size()) + " " +
                    std::to_string(kPatchSide) + " " + std::to_string(kPatchSide) + "\n";
  for (const auto& p : set.patches) io::append_f32(out, std::span<const float>(p));
  return out;
}

/// Patches only; ids and centres are not part of the format.
inline std::vector<Patch> read_ptch(std::string_view bytes) {
  io::Reader in(bytes);
  in.expect_magic("PTCH1\n");
  const auto f = io::header_fields(in.line(), 3);
  const auto count = io::parse_count(f[0]);
  const auto w = io::parse_count(f[1]);
  const auto h = io::parse_count(f[2]);
  require(w == kPatchSide && h == kPatchSide, Errc::DimMismatch, "PTCH: patches must be 32x32");
  std::vector<Patch> out(count);
  std::vector<double> buf(kPatchPixels);
  for (auto& p : out) {
    in.f32(buf);
    for (std::size_t i = 0; i < kPatchPixels; ++i) p[i] = static_cast<float>(buf[i]);
  }
  return out;
}

}  // namespace wir
