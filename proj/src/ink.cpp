#include "mathink/ink.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace mathink::ink {

using nlohmann::json;

double BBox::diagonal() const { return std::hypot(width(), height()); }

BBox BBox::united(const BBox& other) const {
  return {std::min(min_x, other.min_x), std::min(min_y, other.min_y), std::max(max_x, other.max_x),
          std::max(max_y, other.max_y)};
}

bool BBox::intersects(const BBox& other) const {
  return min_x <= other.max_x && other.min_x <= max_x && min_y <= other.max_y && other.min_y <= max_y;
}

BBox BBox::intersection(const BBox& other) const {
  if (!intersects(other)) return {0, 0, 0, 0};
  return {std::max(min_x, other.min_x), std::max(min_y, other.min_y), std::min(max_x, other.max_x),
          std::min(max_y, other.max_y)};
}

void validate(const Stroke& stroke) {
  if (stroke.points.size() < 2)
    throw DataError("stroke '" + stroke.id + "' has fewer than 2 points");
  for (std::size_t i = 0; i < stroke.points.size(); ++i) {
    const auto& p = stroke.points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw DataError("stroke '" + stroke.id + "' has a non-finite coordinate");
    if (p.t < 0) throw DataError("stroke '" + stroke.id + "' has a negative timestamp");
    if (i > 0 && p.t < stroke.points[i - 1].t)
      throw DataError("stroke '" + stroke.id + "' has non-monotone timestamps");
  }
}

BBox bbox_of(std::span<const InkPoint> points) {
  BBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
         -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : points) {
    b.min_x = std::min(b.min_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_x = std::max(b.max_x, p.x);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

BBox bbox_of(const Stroke& stroke) { return bbox_of(stroke.points); }

Stroke translated(const Stroke& stroke, double dx, double dy) {
  Stroke out = stroke;
  for (auto& p : out.points) {
    p.x += dx;
    p.y += dy;
  }
  return out;
}

const Stroke* InkSession::find(std::string_view id) const {
  auto it = std::find_if(strokes_.begin(), strokes_.end(), [&](const Stroke& s) { return s.id == id; });
  return it == strokes_.end() ? nullptr : &*it;
}

void InkSession::add(Stroke stroke) {
  validate(stroke);
  if (find(stroke.id)) throw DataError("duplicate stroke id '" + stroke.id + "'");
  edit_log_.push_back(AddStroke{stroke});
  strokes_.push_back(std::move(stroke));
}

void InkSession::remove(std::string_view id) {
  auto it = std::find_if(strokes_.begin(), strokes_.end(), [&](const Stroke& s) { return s.id == id; });
  if (it == strokes_.end()) throw DataError("unknown stroke id '" + std::string(id) + "'");
  DeleteStroke event{std::string(id)};  // id may point into the erased stroke
  strokes_.erase(it);
  edit_log_.push_back(std::move(event));
}

void InkSession::record_correction(std::string target, std::string value) {
  edit_log_.push_back(CorrectEntry{std::move(target), std::move(value)});
}

InkSession InkSession::replay(std::span<const EditEvent> log) {
  InkSession s;
  for (const auto& ev : log) {
    std::visit(
        [&](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, AddStroke>)
            s.add(e.stroke);
          else if constexpr (std::is_same_v<T, DeleteStroke>)
            s.remove(e.stroke_id);
          else
            s.record_correction(e.target, e.value);
        },
        ev);
  }
  return s;
}

namespace {

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError("missing key '" + std::string(key) + "' at " + path);
  return *it;
}

double number_at(const json& v, const std::string& path) {
  if (!v.is_number()) throw FormatError("expected a number at " + path);
  return v.get<double>();
}

}  // namespace

InkSession parse_ink(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed ink document: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw FormatError("ink document must be an object", 0);
  const auto& version = require(doc, "version", "/");
  if (!version.is_number_integer() || version.get<int>() != 1)
    throw FormatError("unsupported ink version at /version");
  const auto& strokes = require(doc, "strokes", "/");
  if (!strokes.is_array()) throw FormatError("expected an array at /strokes");

  InkSession session;
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    const std::string path = "/strokes/" + std::to_string(i);
    const auto& js = strokes[i];
    if (!js.is_object()) throw FormatError("expected an object at " + path);
    Stroke s;
    const auto& id = require(js, "id", path);
    if (!id.is_string()) throw FormatError("expected a string at " + path + "/id");
    s.id = id.get<std::string>();
    const auto& pts = require(js, "points", path);
    if (!pts.is_array()) throw FormatError("expected an array at " + path + "/points");
    for (std::size_t j = 0; j < pts.size(); ++j) {
      const std::string ppath = path + "/points/" + std::to_string(j);
      const auto& p = pts[j];
      if (!p.is_array() || p.size() != 3) throw FormatError("expected [x, y, t] at " + ppath);
      if (!p[2].is_number_integer()) throw FormatError("expected an integer timestamp at " + ppath + "/2");
      s.points.push_back({number_at(p[0], ppath + "/0"), number_at(p[1], ppath + "/1"), p[2].get<std::int64_t>()});
    }
    session.add(std::move(s));
  }
  return session;
}

std::string serialize_ink(const InkSession& session) {
  json strokes = json::array();
  for (const auto& s : session.strokes()) {
    json pts = json::array();
    for (const auto& p : s.points) pts.push_back(json::array({p.x, p.y, p.t}));
    strokes.push_back({{"id", s.id}, {"points", std::move(pts)}});
  }
  json doc = {{"version", 1}, {"strokes", std::move(strokes)}};
  return doc.dump();
}

}  // namespace mathink::ink
