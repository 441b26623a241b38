#pragma once

#include <cstdio>
#include <string>

#include <json.hpp>

#include "nucleval/errors.hpp"
#include "nucleval/metrics.hpp"
#include "nucleval/version.hpp"

namespace nucleval {

inline constexpr int kReportSchemaVersion = 1;

// Complete evaluation result as emitted by the eval front end.
struct ReportDocument {
  std::string tool_version = kVersion;
  int schema_version = kReportSchemaVersion;
  long patch_count = 0;
  MetricsReport metrics;

  friend bool operator==(const ReportDocument&, const ReportDocument&) = default;
};

namespace detail {

inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline nlohmann::json metrics_to_json(const ClassMetrics& m) {
  return nlohmann::json{{"dq", m.dq},     {"sq", m.sq}, {"pq", m.pq},      {"tp", m.tp},
                        {"fp", m.fp},     {"fn", m.fn}, {"iou_sum", m.iou_sum}};
}

inline ClassMetrics metrics_from_json(const nlohmann::json& j) {
  ClassMetrics m;
  m.dq = j.at("dq").get<double>();
  m.sq = j.at("sq").get<double>();
  m.pq = j.at("pq").get<double>();
  m.tp = j.at("tp").get<long>();
  m.fp = j.at("fp").get<long>();
  m.fn = j.at("fn").get<long>();
  m.iou_sum = j.at("iou_sum").get<double>();
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const ReportDocument& doc) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [class_id, m] : doc.metrics.per_class) {
    per_class[std::to_string(class_id)] = detail::metrics_to_json(m);
  }
  return nlohmann::json{{"schema_version", doc.schema_version},
                        {"tool_version", doc.tool_version},
                        {"patch_count", doc.patch_count},
                        {"binary", detail::metrics_to_json(doc.metrics.binary)},
                        {"per_class", per_class},
                        {"multi_pq", doc.metrics.multi_pq}};
}

inline ReportDocument report_from_json(const nlohmann::json& j) {
  ReportDocument doc;
  doc.schema_version = j.at("schema_version").get<int>();
  if (doc.schema_version != kReportSchemaVersion) {
    throw FormatError("unsupported report schema version " +
                      std::to_string(doc.schema_version));
  }
  doc.tool_version = j.at("tool_version").get<std::string>();
  doc.patch_count = j.at("patch_count").get<long>();
  doc.metrics.binary = detail::metrics_from_json(j.at("binary"));
  for (const auto& [key, value] : j.at("per_class").items()) {
    doc.metrics.per_class[std::stoi(key)] = detail::metrics_from_json(value);
  }
  doc.metrics.multi_pq = j.at("multi_pq").get<double>();
  return doc;
}

// Fixed-width table mirroring the JSON content; metrics rendered to four
// decimals.
inline std::string render_text(const ReportDocument& doc) {
  std::string out;
  out += "nucleval " + doc.tool_version + "\n";
  out += "patches: " + std::to_string(doc.patch_count) + "\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %8s %8s %8s %8s %8s %8s\n", "scope", "tp", "fp", "fn",
                "dq", "sq", "pq");
  out += line;
  auto append_row = [&out, &line](const std::string& scope, const ClassMetrics& m) {
    std::snprintf(line, sizeof(line), "%-8s %8ld %8ld %8ld %8s %8s %8s\n", scope.c_str(), m.tp,
                  m.fp, m.fn, detail::fixed4(m.dq).c_str(), detail::fixed4(m.sq).c_str(),
                  detail::fixed4(m.pq).c_str());
    out += line;
  };
  append_row("binary", doc.metrics.binary);
  for (const auto& [class_id, m] : doc.metrics.per_class) {
    append_row("class " + std::to_string(class_id), m);
  }
  out += "multi-PQ: " + detail::fixed4(doc.metrics.multi_pq) + "\n";
  return out;
}

}  // namespace nucleval
