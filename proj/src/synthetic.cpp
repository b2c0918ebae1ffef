#include "deeplle/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "deeplle/check.hpp"
#include "deeplle/rng.hpp"

namespace deeplle::synth {

Kind kind_from_string(const std::string& s) {
  if (s == "translating_square") return Kind::kTranslatingSquare;
  if (s == "two_squares") return Kind::kTwoSquares;
  if (s == "rotating_gradient") return Kind::kRotatingGradient;
  fail_contract("unknown synthetic kind '", s,
                "' (expected translating_square|two_squares|rotating_gradient)");
}

std::string kind_to_string(Kind k) {
  switch (k) {
    case Kind::kTranslatingSquare: return "translating_square";
    case Kind::kTwoSquares: return "two_squares";
    case Kind::kRotatingGradient: return "rotating_gradient";
  }
  return "translating_square";
}

namespace {

struct SquareSprite {
  double x0, y0, side;
  double vx, vy;
  double color[3];
};

// Exact box coverage of pixel (x,y) by an axis-aligned square.
double coverage(double px, double py, double left, double top, double side) {
  const double ox = std::min(px + 1.0, left + side) - std::max(px, left);
  const double oy = std::min(py + 1.0, top + side) - std::max(py, top);
  if (ox <= 0 || oy <= 0) return 0.0;
  return ox * oy;
}

void paint_square(Tensor<float>& img, const SquareSprite& s, int64_t size, double t) {
  const double left = s.x0 + s.vx * t;
  const double top = s.y0 + s.vy * t;
  const int64_t hw = size * size;
  const int64_t xlo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(left)) - 1);
  const int64_t xhi = std::min<int64_t>(size, static_cast<int64_t>(std::ceil(left + s.side)) + 1);
  const int64_t ylo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(top)) - 1);
  const int64_t yhi = std::min<int64_t>(size, static_cast<int64_t>(std::ceil(top + s.side)) + 1);
  for (int64_t y = ylo; y < yhi; ++y)
    for (int64_t x = xlo; x < xhi; ++x) {
      const double cov = coverage(x, y, left, top, s.side);
      if (cov <= 0) continue;
      for (int64_t c = 0; c < 3; ++c) {
        float& v = img.at(c * hw + y * size + x);
        v = static_cast<float>((1.0 - cov) * v + cov * s.color[c]);
      }
    }
}

// Sprite geometry from the seed, bounded so every frame in [0, horizon]
// stays inside the image.
SquareSprite make_sprite(Rng& rng, const GenParams& p, int64_t size, double horizon,
                         double vx, double vy) {
  SquareSprite s;
  s.side = std::max(2.0, p.square_frac * size);
  s.vx = vx;
  s.vy = vy;
  const double span_x = std::abs(vx) * horizon;
  const double span_y = std::abs(vy) * horizon;
  const double free_x = std::max(0.0, size - s.side - span_x - 2.0);
  const double free_y = std::max(0.0, size - s.side - span_y - 2.0);
  s.x0 = 1.0 + rng.uniform01() * free_x + (vx < 0 ? span_x : 0.0);
  s.y0 = 1.0 + rng.uniform01() * free_y + (vy < 0 ? span_y : 0.0);
  for (int64_t c = 0; c < 3; ++c) s.color[c] = 0.6 + 0.35 * rng.uniform01();
  return s;
}

constexpr double kHorizon = 16.0;  // sprite placement budget, frames

}  // namespace

Tensor<float> render_at(Kind kind, const GenParams& p, int64_t size, uint64_t seed, double t) {
  DLLE_CHECK(size >= 8, "render_at: frame size must be >= 8, got ", size);
  Rng rng(derive_seed(seed, 0x5E9));
  Tensor<float> img01({1, 3, size, size});
  const int64_t hw = size * size;

  if (kind == Kind::kRotatingGradient) {
    const double omega = p.spin_deg * 3.14159265358979323846 / 180.0;
    double phase[3];
    const double theta0 = rng.uniform01() * 6.283185307179586;
    for (int64_t c = 0; c < 3; ++c) phase[c] = rng.uniform01() * 6.283185307179586;
    const double freq = 1.5 + rng.uniform01();
    const double theta = theta0 + omega * t;
    const double ux = std::cos(theta), uy = std::sin(theta);
    const double ctr = (size - 1) / 2.0;
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        const double proj = (ux * (x - ctr) + uy * (y - ctr)) / size;
        for (int64_t c = 0; c < 3; ++c) {
          const double v = 0.5 + 0.42 * std::sin(6.283185307179586 * freq * proj + phase[c]);
          img01.at(c * hw + y * size + x) = static_cast<float>(v);
        }
      }
  } else {
    double bg[3];
    for (int64_t c = 0; c < 3; ++c) bg[c] = 0.08 + 0.22 * rng.uniform01();
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t i = 0; i < hw; ++i) img01.at(c * hw + i) = static_cast<float>(bg[c]);
    SquareSprite a = make_sprite(rng, p, size, kHorizon, p.vx, p.vy);
    paint_square(img01, a, size, t);
    if (kind == Kind::kTwoSquares) {
      GenParams q = p;
      q.square_frac = p.square_frac * 0.75;
      SquareSprite b = make_sprite(rng, q, size, kHorizon, -0.5 * p.vx, 0.75 * p.vy + 1.0);
      paint_square(img01, b, size, t);
    }
  }

  // [0,1] -> [-1,1]
  Tensor<float> out({1, 3, size, size});
  for (int64_t i = 0; i < out.numel(); ++i)
    out.at(i) = std::clamp(2.0f * img01.at(i) - 1.0f, -1.0f, 1.0f);
  return out;
}

FrameSequence gen_synthetic(Kind kind, const GenParams& p, int64_t count, int64_t size,
                            uint64_t seed) {
  DLLE_CHECK(count >= 2, "gen_synthetic: need at least 2 frames, got ", count);
  DLLE_CHECK(count <= static_cast<int64_t>(kHorizon), "gen_synthetic: at most ",
             static_cast<int64_t>(kHorizon), " frames supported, got ", count);
  const double limit = static_cast<double>(size) / 4.0;
  if (kind == Kind::kRotatingGradient) {
    const double omega = std::abs(p.spin_deg) * 3.14159265358979323846 / 180.0;
    DLLE_CHECK(omega * (size / 2.0) <= limit, "gen_synthetic: spin of ", p.spin_deg,
               " deg/frame moves the gradient edge more than size/4 per frame");
  } else {
    DLLE_CHECK(std::max(std::abs(p.vx), std::abs(p.vy)) <= limit,
               "gen_synthetic: motion ", std::max(std::abs(p.vx), std::abs(p.vy)),
               " px/frame exceeds size/4 = ", limit);
  }
  FrameSequence seq;
  seq.frames = Tensor<float>({count, 3, size, size});
  const int64_t fsz = 3 * size * size;
  for (int64_t t = 0; t < count; ++t) {
    Tensor<float> frame = render_at(kind, p, size, seed, static_cast<double>(t));
    std::copy_n(frame.data(), fsz, seq.frames.data() + t * fsz);
    seq.names.push_back(kind_to_string(kind) + "_t" + std::to_string(t));
  }
  return seq;
}

}  // namespace deeplle::synth
