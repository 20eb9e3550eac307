#include "wrinkles/maskgen.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace wrinkles {

namespace {

struct Point {
  double x, y;
};

// Stamps a disk of radius r at every integer step along [a,b].
void rasterize_segment(std::vector<uint8_t>& px, int64_t h, int64_t w, Point a, Point b,
                       double radius) {
  double len = std::hypot(b.x - a.x, b.y - a.y);
  int steps = std::max(1, static_cast<int>(std::ceil(len)));
  for (int s = 0; s <= steps; ++s) {
    double t = static_cast<double>(s) / steps;
    double cx = a.x + t * (b.x - a.x);
    double cy = a.y + t * (b.y - a.y);
    int x0 = std::max<int>(0, static_cast<int>(std::floor(cx - radius)));
    int x1 = std::min<int>(static_cast<int>(w) - 1, static_cast<int>(std::ceil(cx + radius)));
    int y0 = std::max<int>(0, static_cast<int>(std::floor(cy - radius)));
    int y1 = std::min<int>(static_cast<int>(h) - 1, static_cast<int>(std::ceil(cy + radius)));
    double r2 = radius * radius;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double dx = x - cx, dy = y - cy;
        if (dx * dx + dy * dy <= r2) px[static_cast<size_t>(y) * w + x] = 1;
      }
  }
}

// Bounded-turn random walk, rasterized with a round brush.
void draw_stroke(std::vector<uint8_t>& px, int64_t h, int64_t w, const MaskPolicy& p,
                 std::mt19937& rng) {
  auto uni = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto uni_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  int n_points = uni_int(p.points_per_stroke.min, p.points_per_stroke.max);
  double thickness = uni_int(p.thickness_px.min, p.thickness_px.max);
  double radius = thickness / 2.0;
  Point cur{uni(0, static_cast<double>(w - 1)), uni(0, static_cast<double>(h - 1))};
  double angle = uni(0, 2 * M_PI);
  double turn_rad = p.turn_deg_max * M_PI / 180.0;

  for (int i = 1; i < n_points; ++i) {
    angle += uni(-turn_rad, turn_rad);
    double step = uni(p.step_px.min, p.step_px.max);
    Point next{cur.x + step * std::cos(angle), cur.y + step * std::sin(angle)};
    next.x = std::clamp(next.x, 0.0, static_cast<double>(w - 1));
    next.y = std::clamp(next.y, 0.0, static_cast<double>(h - 1));
    rasterize_segment(px, h, w, cur, next, radius);
    cur = next;
  }
}

Mask to_mask(const std::vector<uint8_t>& px, int64_t h, int64_t w) {
  auto t = torch::empty({h, w}, torch::kUInt8);
  std::memcpy(t.data_ptr<uint8_t>(), px.data(), px.size());
  return Mask{t.to(torch::kFloat32)};
}

double coverage_of(const std::vector<uint8_t>& px) {
  size_t on = 0;
  for (auto v : px) on += v;
  return static_cast<double>(on) / static_cast<double>(px.size());
}

// Shared generator; `exclusion` (optional, h*w bytes) marks pixels strokes may
// never touch. Strokes that hit it are resampled, whole masks that fail the
// coverage window are resampled, both bounded by policy.max_tries.
Mask generate_impl(int64_t h, int64_t w, const MaskPolicy& p, uint64_t seed,
                   const std::vector<uint8_t>* exclusion) {
  p.validate();
  detail::require(h >= 32 && w >= 32, "mask dimensions must be at least 32x32");
  std::mt19937 rng(static_cast<uint32_t>(seed));
  auto uni_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  double best_cov = -1.0;
  for (int attempt = 0; attempt < p.max_tries; ++attempt) {
    std::vector<uint8_t> px(static_cast<size_t>(h) * w, 0);
    int n_strokes = uni_int(p.n_strokes.min, p.n_strokes.max);
    bool placed_all = true;
    for (int s = 0; s < n_strokes; ++s) {
      bool placed = false;
      for (int t = 0; t < p.max_tries; ++t) {
        std::vector<uint8_t> stroke(static_cast<size_t>(h) * w, 0);
        draw_stroke(stroke, h, w, p, rng);
        if (exclusion) {
          bool hits = false;
          for (size_t i = 0; i < stroke.size(); ++i)
            if (stroke[i] && (*exclusion)[i]) {
              hits = true;
              break;
            }
          if (hits) continue;
        }
        for (size_t i = 0; i < stroke.size(); ++i) px[i] |= stroke[i];
        placed = true;
        break;
      }
      if (!placed) {
        placed_all = false;
        break;
      }
    }
    if (!placed_all) continue;

    double cov = coverage_of(px);
    best_cov = std::max(best_cov, cov);
    if (n_strokes == 0 || (cov >= p.target_coverage.min && cov <= p.target_coverage.max))
      return to_mask(px, h, w);
  }

  if (best_cov < 0)
    throw std::runtime_error("mask generation: could not place strokes outside the exclusion zone within " +
                             std::to_string(p.max_tries) + " tries");
  throw std::runtime_error("mask generation: coverage " + std::to_string(best_cov) +
                           " outside target [" + std::to_string(p.target_coverage.min) + ", " +
                           std::to_string(p.target_coverage.max) + "] after " +
                           std::to_string(p.max_tries) + " tries");
}

}  // namespace

void MaskPolicy::validate() const {
  detail::require(n_strokes.min <= n_strokes.max && n_strokes.min >= 0, "n_strokes range invalid");
  detail::require(points_per_stroke.min <= points_per_stroke.max && points_per_stroke.min >= 2,
                  "points_per_stroke range invalid");
  detail::require(step_px.min <= step_px.max && step_px.min >= 1, "step_px range invalid");
  detail::require(thickness_px.min <= thickness_px.max && thickness_px.min >= 1,
                  "thickness_px range invalid");
  detail::require(target_coverage.min <= target_coverage.max && target_coverage.min > 0 &&
                      target_coverage.max < 0.5,
                  "target_coverage must be a subrange of (0, 0.5)");
  detail::require(turn_deg_max >= 0, "turn_deg_max must be non-negative");
  detail::require(max_tries >= 1, "max_tries must be positive");
}

Mask generate_polyline_mask(int64_t h, int64_t w, const MaskPolicy& policy, uint64_t seed) {
  if (policy.n_strokes.max == 0) {
    MaskPolicy p = policy;
    p.validate();
    return Mask::zeros(h, w);
  }
  return generate_impl(h, w, policy, seed, nullptr);
}

Mask build_inpaint_mask(const Mask& m_w, const Mask& m_g) {
  require_same_hw(m_w.t, m_g.t, "build_inpaint_mask");
  return Mask{torch::maximum(m_w.t, m_g.t)};
}

Mask synth_eval_masks(const Mask& m_w, const MaskPolicy& policy, uint64_t seed) {
  auto dilated = dilate_mask(m_w, policy.thickness_px.max);
  auto excl_u8 = dilated.t.to(torch::kUInt8).contiguous();
  std::vector<uint8_t> exclusion(excl_u8.data_ptr<uint8_t>(),
                                 excl_u8.data_ptr<uint8_t>() + excl_u8.numel());
  if (policy.n_strokes.max == 0) return Mask::zeros(m_w.height(), m_w.width());
  return generate_impl(m_w.height(), m_w.width(), policy, seed, &exclusion);
}

Mask dilate_mask(const Mask& m, int radius) {
  detail::require(radius >= 0, "dilation radius must be non-negative");
  if (radius == 0) return m;
  int k = 2 * radius + 1;
  auto kernel = torch::zeros({1, 1, k, k}, torch::kFloat32);
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      double dx = x - radius, dy = y - radius;
      if (dx * dx + dy * dy <= static_cast<double>(radius) * radius + 1e-9)
        kernel[0][0][y][x] = 1.0f;
    }
  auto hit = torch::nn::functional::conv2d(
      m.t.unsqueeze(0).unsqueeze(0), kernel,
      torch::nn::functional::Conv2dFuncOptions().padding(radius));
  return Mask{hit.squeeze(0).squeeze(0).gt(0.5).to(torch::kFloat32)};
}

}  // namespace wrinkles
