#include "mathink/features.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace mathink::features {

double point_segment_distance(const ink::InkPoint& p, const ink::InkPoint& a, const ink::InkPoint& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return std::hypot(p.x - a.x, p.y - a.y);
  const double u = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  return std::hypot(p.x - (a.x + u * dx), p.y - (a.y + u * dy));
}

std::vector<ink::InkPoint> simplify_polyline(std::span<const ink::InkPoint> points, const SimplifyParams& params) {
  const std::size_t n = points.size();
  if (n <= 2) return {points.begin(), points.end()};

  const double tolerance = params.epsilon * ink::bbox_of(points).diagonal();
  std::vector<bool> keep(n, false);
  keep.front() = keep.back() = true;

  // Explicit stack instead of recursion; long strokes would otherwise recurse deeply.
  std::vector<std::pair<std::size_t, std::size_t>> pending{{0, n - 1}};
  while (!pending.empty()) {
    auto [first, last] = pending.back();
    pending.pop_back();
    if (last <= first + 1) continue;
    double worst = -1.0;
    std::size_t split = first;
    for (std::size_t i = first + 1; i < last; ++i) {
      const double d = point_segment_distance(points[i], points[first], points[last]);
      if (d > worst) {
        worst = d;
        split = i;
      }
    }
    if (worst > tolerance) {
      keep[split] = true;
      pending.emplace_back(first, split);
      pending.emplace_back(split, last);
    }
  }

  std::vector<ink::InkPoint> out;
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) out.push_back(points[i]);
  return out;
}

std::vector<ink::InkPoint> simplify_polyline(const ink::Stroke& stroke, const SimplifyParams& params) {
  return simplify_polyline(stroke.points, params);
}

std::vector<ink::InkPoint> resample_by_arc_length(std::span<const ink::InkPoint> polyline, int count) {
  std::vector<double> cumulative(polyline.size(), 0.0);
  for (std::size_t i = 1; i < polyline.size(); ++i)
    cumulative[i] = cumulative[i - 1] + std::hypot(polyline[i].x - polyline[i - 1].x, polyline[i].y - polyline[i - 1].y);
  const double total = cumulative.back();

  std::vector<ink::InkPoint> out;
  out.reserve(count);
  std::size_t seg = 0;
  for (int k = 0; k < count; ++k) {
    if (total == 0.0) {
      out.push_back(polyline.front());
      continue;
    }
    const double target = total * k / (count - 1);
    while (seg + 2 < polyline.size() && cumulative[seg + 1] < target) ++seg;
    const double seg_len = cumulative[seg + 1] - cumulative[seg];
    const double u = seg_len > 0.0 ? std::clamp((target - cumulative[seg]) / seg_len, 0.0, 1.0) : 0.0;
    const auto& a = polyline[seg];
    const auto& b = polyline[seg + 1];
    out.push_back({a.x + u * (b.x - a.x), a.y + u * (b.y - a.y),
                   a.t + static_cast<std::int64_t>(std::llround(u * static_cast<double>(b.t - a.t)))});
  }
  return out;
}

FeatureVector extract_features(const ink::Stroke& stroke, const SimplifyParams& params) {
  FeatureVector fv;
  fv.values.assign(params.feature_length(), 0.5);
  const auto box = ink::bbox_of(stroke);
  if (box.width() == 0.0 && box.height() == 0.0) return fv;

  const auto simplified = simplify_polyline(stroke, params);
  const auto vertices = resample_by_arc_length(simplified, params.vertices);
  const auto vbox = ink::bbox_of(vertices);
  const double extent = std::max(vbox.width(), vbox.height());
  if (extent == 0.0) return fv;

  for (int k = 0; k < params.vertices; ++k) {
    fv.values[2 * k] = std::clamp(0.5 + (vertices[k].x - vbox.center_x()) / extent, 0.0, 1.0);
    fv.values[2 * k + 1] = std::clamp(0.5 + (vertices[k].y - vbox.center_y()) / extent, 0.0, 1.0);
  }
  return fv;
}

}  // namespace mathink::features
