#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nucleval/errors.hpp"
#include "nucleval/roi.hpp"

namespace nucleval {

// Wire form of one detection: one JSON object per line with keys "box"
// (x1, y1, x2, y2), "objectness", "cond" (background first), and "mask"
// (row-major 14x14). Unknown keys are ignored.
struct DetectionRecord {
  std::array<double, 4> box{};
  double objectness = 0.0;
  std::vector<double> cond;
  std::vector<double> mask;
};

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(std::string("missing key \"") + key + "\"");
  return *it;
}

inline std::vector<double> number_array(const nlohmann::json& value, const char* key,
                                        std::size_t expected) {
  if (!value.is_array() || value.size() != expected) {
    throw FormatError(std::string("\"") + key + "\" must be an array of " +
                      std::to_string(expected) + " numbers");
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : value) {
    if (!v.is_number()) {
      throw FormatError(std::string("\"") + key + "\" must contain only numbers");
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
      throw FormatError(std::string("\"") + key + "\" contains a non-finite value");
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace detail

inline constexpr double kWireCondSumTolerance = 1e-6;

// Parses one JSONL record and checks the wire invariants. Throws FormatError
// without line context; callers prepend it.
inline DetectionRecord parse_detection_record(const std::string& line, int class_count) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw FormatError("record is not a JSON object");

  DetectionRecord rec;
  const std::vector<double> box =
      detail::number_array(detail::require_field(obj, "box"), "box", 4);
  std::copy(box.begin(), box.end(), rec.box.begin());
  if (!(rec.box[2] > rec.box[0] && rec.box[3] > rec.box[1])) {
    throw FormatError("\"box\" is degenerate (needs x2 > x1 and y2 > y1)");
  }

  const nlohmann::json& objness = detail::require_field(obj, "objectness");
  if (!objness.is_number()) throw FormatError("\"objectness\" must be a number");
  rec.objectness = objness.get<double>();
  if (!(rec.objectness >= 0.0 && rec.objectness <= 1.0)) {
    throw FormatError("\"objectness\" outside [0,1]");
  }

  rec.cond = detail::number_array(detail::require_field(obj, "cond"), "cond",
                                  static_cast<std::size_t>(class_count) + 1);
  double sum = 0.0;
  for (double p : rec.cond) {
    if (!(p >= 0.0 && p <= 1.0)) throw FormatError("\"cond\" entry outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kWireCondSumTolerance) {
    throw FormatError("\"cond\" sums to " + std::to_string(sum) + ", expected 1");
  }

  rec.mask = detail::number_array(detail::require_field(obj, "mask"), "mask",
                                  static_cast<std::size_t>(MaskGrid::kExtent) *
                                      static_cast<std::size_t>(MaskGrid::kExtent));
  for (double v : rec.mask) {
    if (!(v >= 0.0 && v <= 1.0)) throw FormatError("\"mask\" entry outside [0,1]");
  }
  return rec;
}

// Renormalizes the wire-tolerance conditional exactly and builds the fused
// in-memory detection.
inline Detection to_detection(const DetectionRecord& rec) {
  std::vector<double> cond = rec.cond;
  double sum = 0.0;
  for (double p : cond) sum += p;
  for (double& p : cond) p /= sum;

  RealGrid mask(MaskGrid::kExtent, MaskGrid::kExtent, 0.0);
  for (int r = 0; r < MaskGrid::kExtent; ++r) {
    for (int c = 0; c < MaskGrid::kExtent; ++c) {
      mask(r, c) = rec.mask[static_cast<std::size_t>(r) * MaskGrid::kExtent +
                            static_cast<std::size_t>(c)];
    }
  }
  return make_detection(Box{rec.box[0], rec.box[1], rec.box[2], rec.box[3]},
                        ObjectnessScore(rec.objectness), ClassConditional(std::move(cond)),
                        MaskGrid(std::move(mask)));
}

// Reads a whole JSONL stream. Blank lines are skipped; a malformed record
// raises FormatError naming its 1-based line number.
inline std::vector<Detection> read_detections(std::istream& in, int class_count) {
  std::vector<Detection> dets;
  std::string line;
  long line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      dets.push_back(to_detection(parse_detection_record(line, class_count)));
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_number) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw FormatError("line " + std::to_string(line_number) + ": " + e.what());
    }
  }
  return dets;
}

inline std::vector<Detection> read_detections_file(const std::string& path, int class_count) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open");
  try {
    return read_detections(in, class_count);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace nucleval
