#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mathink/error.hpp"

namespace mathink::ink {

/// A sampled pen position. y grows downward; t is milliseconds since session start.
struct InkPoint {
  double x = 0.0;
  double y = 0.0;
  std::int64_t t = 0;

  bool operator==(const InkPoint&) const = default;
};

struct BBox {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (min_x + max_x); }
  double center_y() const { return 0.5 * (min_y + max_y); }
  double diagonal() const;

  BBox translated(double dx, double dy) const { return {min_x + dx, min_y + dy, max_x + dx, max_y + dy}; }
  BBox united(const BBox& other) const;
  bool intersects(const BBox& other) const;
  /// Zero-area box when the two do not overlap.
  BBox intersection(const BBox& other) const;

  bool operator==(const BBox&) const = default;
};

/// Pen trajectory from pen-down to pen-up.
struct Stroke {
  std::string id;
  std::vector<InkPoint> points;

  bool operator==(const Stroke&) const = default;
};

/// Throws DataError if the stroke has fewer than two points, non-finite
/// coordinates or decreasing timestamps.
void validate(const Stroke& stroke);

BBox bbox_of(const Stroke& stroke);
BBox bbox_of(std::span<const InkPoint> points);

Stroke translated(const Stroke& stroke, double dx, double dy);

struct AddStroke {
  Stroke stroke;
  bool operator==(const AddStroke&) const = default;
};
struct DeleteStroke {
  std::string stroke_id;
  bool operator==(const DeleteStroke&) const = default;
};
/// A user correction. Only recorded in the log; it never changes strokes.
struct CorrectEntry {
  std::string target;
  std::string value;
  bool operator==(const CorrectEntry&) const = default;
};
using EditEvent = std::variant<AddStroke, DeleteStroke, CorrectEntry>;

class InkSession {
 public:
  InkSession() = default;

  const std::vector<Stroke>& strokes() const { return strokes_; }
  const std::vector<EditEvent>& edit_log() const { return edit_log_; }

  const Stroke* find(std::string_view id) const;

  /// Appends the stroke; throws DataError on invalid stroke or duplicate id.
  void add(Stroke stroke);
  /// Throws DataError when the id is unknown.
  void remove(std::string_view id);
  void record_correction(std::string target, std::string value);

  /// Rebuilds a session by applying every event of a log in order.
  static InkSession replay(std::span<const EditEvent> log);

  // Sessions compare by their strokes; the log is history.
  bool operator==(const InkSession& other) const { return strokes_ == other.strokes_; }

 private:
  std::vector<Stroke> strokes_;
  std::vector<EditEvent> edit_log_;
};

/// Parses the canonical ink document. Errors carry the byte offset of the
/// problem when it is known.
InkSession parse_ink(std::string_view text);
std::string serialize_ink(const InkSession& session);

}  // namespace mathink::ink
