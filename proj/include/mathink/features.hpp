#pragma once

#include <span>
#include <vector>

#include "mathink/ink.hpp"

namespace mathink::features {

/// Polyline approximation settings. epsilon is a fraction of the stroke's
/// bounding-box diagonal; vertices is the number of resampled vertices.
struct SimplifyParams {
  double epsilon = 0.04;
  int vertices = 16;

  int feature_length() const { return 2 * vertices; }
  bool operator==(const SimplifyParams&) const = default;
};

/// Fixed-length feature vector, every component in [0, 1].
struct FeatureVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const FeatureVector&) const = default;
};

/// Split-at-max-deviation simplification. Returns a subsequence of the input
/// that keeps both endpoints; no dropped point is farther than
/// epsilon * diagonal from the result.
std::vector<ink::InkPoint> simplify_polyline(std::span<const ink::InkPoint> points, const SimplifyParams& params);
std::vector<ink::InkPoint> simplify_polyline(const ink::Stroke& stroke, const SimplifyParams& params);

/// count points equally spaced by arc length along the polyline, endpoints included.
std::vector<ink::InkPoint> resample_by_arc_length(std::span<const ink::InkPoint> polyline, int count);

double point_segment_distance(const ink::InkPoint& p, const ink::InkPoint& a, const ink::InkPoint& b);

/// simplify -> resample -> center in the unit square keeping aspect ratio.
/// A zero-extent stroke maps to all vertices at (0.5, 0.5).
FeatureVector extract_features(const ink::Stroke& stroke, const SimplifyParams& params);

}  // namespace mathink::features
