#include "tbscreen/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tbscreen/error.hpp"
#include "tbscreen/rng.hpp"

namespace tbscreen {

namespace {

constexpr int kPlacementAttempts = 200;

struct Point {
  double x, y;
};

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

void add_disk(Tensor& img, std::size_t w, std::size_t h, Point c, double radius, double delta) {
  const auto x0 = static_cast<std::ptrdiff_t>(std::floor(c.x - radius - 1));
  const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(c.x + radius + 1));
  const auto y0 = static_cast<std::ptrdiff_t>(std::floor(c.y - radius - 1));
  const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(c.y + radius + 1));
  auto data = img.data();
  for (auto y = std::max<std::ptrdiff_t>(y0, 0); y <= std::min<std::ptrdiff_t>(y1, h - 1); ++y)
    for (auto x = std::max<std::ptrdiff_t>(x0, 0); x <= std::min<std::ptrdiff_t>(x1, w - 1); ++x) {
      const double d = std::hypot(x + 0.5 - c.x, y + 0.5 - c.y);
      const double alpha = std::clamp(radius + 0.5 - d, 0.0, 1.0);
      if (alpha > 0) data[y * w + x] += delta * alpha;
    }
}

// Box blur of the given radius along rows then columns, edges clamped.
void box_blur(Tensor& img, std::size_t w, std::size_t h, std::size_t r) {
  if (r == 0) return;
  auto data = img.data();
  const double inv = 1.0 / static_cast<double>(2 * r + 1);
  std::vector<double> line(std::max(w, h));
  auto clamp_idx = [](std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  for (std::size_t y = 0; y < h; ++y) {
    double* row = data.data() + y * w;
    std::copy_n(row, w, line.data());
    for (std::size_t x = 0; x < w; ++x) {
      double total = 0.0;
      for (std::ptrdiff_t k = -static_cast<std::ptrdiff_t>(r); k <= static_cast<std::ptrdiff_t>(r); ++k)
        total += line[clamp_idx(static_cast<std::ptrdiff_t>(x) + k, w)];
      row[x] = total * inv;
    }
  }
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) line[y] = data[y * w + x];
    for (std::size_t y = 0; y < h; ++y) {
      double total = 0.0;
      for (std::ptrdiff_t k = -static_cast<std::ptrdiff_t>(r); k <= static_cast<std::ptrdiff_t>(r); ++k)
        total += line[clamp_idx(static_cast<std::ptrdiff_t>(y) + k, h)];
      data[y * w + x] = total * inv;
    }
  }
}

template <typename R>
void check_range(const R& r, const char* name) {
  if (r.min > r.max) throw ConfigError(std::string("synthetic config: empty range for ") + name);
}

}  // namespace

SyntheticSceneConfig easy_scene() {
  SyntheticSceneConfig c;
  c.cord_thickness = {3.0, 5.0};
  c.cord_delta = -0.5;
  c.debris_count = {50, 100};
  c.dark_debris_fraction = 0.0;
  c.noise_sigma = 0.02;
  return c;
}

void SyntheticSceneConfig::validate() const {
  if (image_w == 0 || image_h == 0) throw ConfigError("synthetic config: image extents must be positive");
  check_range(cord_count, "cord_count");
  check_range(cord_segments, "cord_segments");
  check_range(cord_step, "cord_step");
  check_range(cord_thickness, "cord_thickness");
  check_range(debris_count, "debris_count");
  check_range(debris_radius, "debris_radius");
  if (cord_count.min < 0 || debris_count.min < 0) throw ConfigError("synthetic config: negative counts");
  if (cord_segments.min < 1) throw ConfigError("synthetic config: cords need at least one segment");
  if (cord_step.min <= 0 || cord_thickness.min <= 0 || debris_radius.min <= 0)
    throw ConfigError("synthetic config: lengths must be positive");
  if (dark_debris_fraction < 0 || dark_debris_fraction > 1)
    throw ConfigError("synthetic config: dark_debris_fraction must be in [0,1]");
  if (noise_sigma < 0 || speckle_density < 0 || speckle_density > 1)
    throw ConfigError("synthetic config: invalid noise parameters");
}

SyntheticImage generate_synthetic_image(const SyntheticSceneConfig& cfg) {
  cfg.validate();
  const std::size_t w = cfg.image_w, h = cfg.image_h;
  Rng rng(cfg.seed);
  SyntheticImage out;
  out.image = Tensor({1, h, w});
  auto data = out.image.data();

  // Smooth illumination.
  const double px = rng.uniform(0, 2 * std::numbers::pi), py = rng.uniform(0, 2 * std::numbers::pi);
  for (std::size_t y = 0; y < h; ++y) {
    const double cy = std::cos(2 * std::numbers::pi * static_cast<double>(y) / h + py);
    for (std::size_t x = 0; x < w; ++x)
      data[y * w + x] = cfg.background + cfg.illumination_amplitude *
                                             std::cos(2 * std::numbers::pi * static_cast<double>(x) / w + px) * cy;
  }

  const auto debris = rng.integer(cfg.debris_count.min, cfg.debris_count.max);
  for (std::int64_t i = 0; i < debris; ++i) {
    const Point c{rng.uniform(0, static_cast<double>(w)), rng.uniform(0, static_cast<double>(h))};
    const double r = rng.uniform(cfg.debris_radius.min, cfg.debris_radius.max);
    const bool dark = rng.uniform() < cfg.dark_debris_fraction;
    add_disk(out.image, w, h, c, r, dark ? cfg.debris_delta * cfg.dark_debris_scale : cfg.debris_delta);
  }

  const auto cords = rng.integer(cfg.cord_count.min, cfg.cord_count.max);
  const double max_turn = cfg.cord_max_turn_deg * std::numbers::pi / 180.0;
  for (std::int64_t i = 0; i < cords; ++i) {
    std::vector<Point> pts;
    double thickness = 0;
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      thickness = rng.uniform(cfg.cord_thickness.min, cfg.cord_thickness.max);
      const auto segments = rng.integer(cfg.cord_segments.min, cfg.cord_segments.max);
      pts.assign(1, {rng.uniform(0, static_cast<double>(w)), rng.uniform(0, static_cast<double>(h))});
      double heading = rng.uniform(0, 2 * std::numbers::pi);
      for (std::int64_t s = 0; s < segments; ++s) {
        if (s > 0) heading += rng.uniform(-max_turn, max_turn);
        const double step = rng.uniform(cfg.cord_step.min, cfg.cord_step.max);
        pts.push_back({pts.back().x + step * std::cos(heading), pts.back().y + step * std::sin(heading)});
      }
      const double margin = thickness / 2 + 1;
      placed = std::all_of(pts.begin(), pts.end(), [&](const Point& p) {
        return p.x >= margin && p.y >= margin && p.x <= w - margin && p.y <= h - margin;
      });
    }
    if (!placed)
      throw GenerationError("could not place cord " + std::to_string(i) + " inside a " +
                            std::to_string(w) + "x" + std::to_string(h) + " image");

    const double half = thickness / 2;
    double minx = pts[0].x, maxx = minx, miny = pts[0].y, maxy = miny;
    for (const auto& p : pts) {
      minx = std::min(minx, p.x); maxx = std::max(maxx, p.x);
      miny = std::min(miny, p.y); maxy = std::max(maxy, p.y);
    }
    CordBox box;
    box.x0 = static_cast<std::size_t>(std::max(0.0, std::floor(minx - half)));
    box.y0 = static_cast<std::size_t>(std::max(0.0, std::floor(miny - half)));
    box.x1 = std::min(w, static_cast<std::size_t>(std::ceil(maxx + half)) + 1);
    box.y1 = std::min(h, static_cast<std::size_t>(std::ceil(maxy + half)) + 1);
    for (std::size_t y = box.y0; y < box.y1; ++y)
      for (std::size_t x = box.x0; x < box.x1; ++x) {
        const Point p{x + 0.5, y + 0.5};
        double d = segment_distance(p, pts[0], pts[1]);
        for (std::size_t s = 2; s < pts.size(); ++s) d = std::min(d, segment_distance(p, pts[s - 1], pts[s]));
        const double alpha = std::clamp(half + 0.5 - d, 0.0, 1.0);
        if (alpha > 0) data[y * w + x] += cfg.cord_delta * alpha;
      }
    out.boxes.push_back(box);
  }

  box_blur(out.image, w, h, cfg.blur_radius);
  for (auto& v : data) v += cfg.noise_sigma * rng.normal();
  if (cfg.speckle_density > 0) {
    const auto speckles = static_cast<std::size_t>(std::llround(cfg.speckle_density * static_cast<double>(w * h)));
    for (std::size_t i = 0; i < speckles; ++i) data[rng.next() % data.size()] = rng.uniform();
  }
  for (auto& v : data) v = std::clamp(v, 0.0, 1.0);
  out.label = out.boxes.empty() ? Label::negative : Label::positive;
  return out;
}

double max_box_fraction(const Anchor& anchor, std::size_t side, const std::vector<CordBox>& boxes) {
  double best = 0.0;
  for (const auto& b : boxes) {
    const std::size_t ix0 = std::max(b.x0, anchor.x), ix1 = std::min(b.x1, anchor.x + side);
    const std::size_t iy0 = std::max(b.y0, anchor.y), iy1 = std::min(b.y1, anchor.y + side);
    if (ix0 >= ix1 || iy0 >= iy1 || b.area() == 0) continue;
    best = std::max(best, static_cast<double>((ix1 - ix0) * (iy1 - iy0)) / static_cast<double>(b.area()));
  }
  return best;
}

Label label_patch(const Anchor& anchor, std::size_t side, const std::vector<CordBox>& boxes) {
  return max_box_fraction(anchor, side, boxes) >= kPositiveBoxFraction ? Label::positive
                                                                        : Label::negative;
}

}  // namespace tbscreen
