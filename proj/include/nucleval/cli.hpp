#pragma once

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "nucleval/detection_io.hpp"
#include "nucleval/metrics.hpp"
#include "nucleval/npy.hpp"
#include "nucleval/probloss.hpp"
#include "nucleval/report.hpp"
#include "nucleval/roi.hpp"

namespace nucleval {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;

namespace detail {

inline std::string format_sig6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::vector<std::string> list_regular_files(const std::filesystem::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace detail

struct EvalOptions {
  std::string gt_dir;
  std::string pred_dir;
  int classes = kDefaultClassCount;
  int workers = 1;
  bool json = false;           // emit the JSON document instead of the table
  std::string out_path;        // when set, also write the JSON document here
};

// Pairs identically named files from the two directories, evaluates every
// pair, and emits the report. Per-patch work may run on worker threads;
// aggregation always runs in ascending filename order so the report is
// byte-identical regardless of worker count.
inline int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  try {
    if (!fs::is_directory(opts.gt_dir)) {
      err << "error: not a directory: " << opts.gt_dir << "\n";
      return kExitInputError;
    }
    if (!fs::is_directory(opts.pred_dir)) {
      err << "error: not a directory: " << opts.pred_dir << "\n";
      return kExitInputError;
    }
    const std::vector<std::string> gt_names = detail::list_regular_files(opts.gt_dir);
    const std::vector<std::string> pred_names = detail::list_regular_files(opts.pred_dir);
    const std::set<std::string> gt_set(gt_names.begin(), gt_names.end());
    const std::set<std::string> pred_set(pred_names.begin(), pred_names.end());
    for (const std::string& name : gt_names) {
      if (!pred_set.count(name)) {
        err << "error: missing counterpart in " << opts.pred_dir << ": " << name << "\n";
        return kExitInputError;
      }
    }
    for (const std::string& name : pred_names) {
      if (!gt_set.count(name)) {
        err << "error: missing counterpart in " << opts.gt_dir << ": " << name << "\n";
        return kExitInputError;
      }
    }
    names = gt_names;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  if (names.empty()) {
    err << "error: no patch pairs found\n";
    return kExitInputError;
  }

  const std::size_t n = names.size();
  std::vector<PatchEvaluation> evals(n);
  std::vector<std::string> failures(n);
  auto process_range = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < n; i += stride) {
      try {
        const LabelPatch gt =
            read_label_patch((fs::path(opts.gt_dir) / names[i]).string(), opts.classes);
        const LabelPatch pred =
            read_label_patch((fs::path(opts.pred_dir) / names[i]).string(), opts.classes);
        evals[i] = evaluate_patch(gt, pred, opts.classes);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  const int workers = std::max(1, opts.workers);
  if (workers == 1) {
    process_range(0, 1);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back(process_range, static_cast<std::size_t>(t),
                        static_cast<std::size_t>(workers));
    }
    for (std::thread& t : pool) t.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!failures[i].empty()) {
      err << "error: " << failures[i] << "\n";
      return kExitInputError;
    }
  }

  ReportDocument doc;
  doc.patch_count = static_cast<long>(n);
  doc.metrics = report_from_evaluations(evals, opts.classes);

  if (!opts.out_path.empty()) {
    std::ofstream file(opts.out_path);
    if (!file) {
      err << "error: cannot write " << opts.out_path << "\n";
      return kExitInputError;
    }
    file << to_json(doc).dump(2) << "\n";
  }
  if (opts.json) {
    out << to_json(doc).dump(2) << "\n";
  } else {
    out << render_text(doc);
  }
  return kExitOk;
}

struct PostprocessOptions {
  std::string detections_path;
  int height = 0;
  int width = 0;
  double score_thresh = 0.5;
  double iou_thresh = 0.5;
  int classes = kDefaultClassCount;
  std::string out_path;
};

// detections file -> fuse -> NMS -> label patch -> NPY file.
inline int cmd_postprocess(const PostprocessOptions& opts, std::ostream& /*out*/,
                           std::ostream& err) {
  if (opts.height < 1 || opts.width < 1) {
    err << "error: height and width must be >= 1\n";
    return kExitInputError;
  }
  std::vector<Detection> dets;
  try {
    dets = read_detections_file(opts.detections_path, opts.classes);
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  const std::vector<Detection> kept = nms(dets, opts.iou_thresh);
  const LabelPatch patch =
      detections_to_labelpatch(kept, opts.height, opts.width, opts.score_thresh);
  try {
    write_label_patch(patch, opts.out_path);
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitOk;
}

struct ScoreOptions {
  std::string detections_path;
  int classes = kDefaultClassCount;
};

// Emits one line per record, input order preserved: the argmax foreground
// label, its fused probability, then the full posterior (background first),
// all with six significant digits.
inline int cmd_score(const ScoreOptions& opts, std::ostream& out, std::ostream& err) {
  std::ifstream in(opts.detections_path);
  if (!in) {
    err << "error: " << opts.detections_path << ": cannot open\n";
    return kExitInputError;
  }
  std::string line;
  long line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const Detection det = to_detection(parse_detection_record(line, opts.classes));
      out << det.label << ' ' << detail::format_sig6(det.score);
      for (double p : det.fused.probs()) out << ' ' << detail::format_sig6(p);
      out << '\n';
    } catch (const std::exception& e) {
      err << "error: line " << line_number << ": " << e.what() << "\n";
      return kExitInputError;
    }
  }
  return kExitOk;
}

// Validates each file's format and label-patch invariants; prints one line
// per file and exits 0 iff all pass.
inline int cmd_check(const std::vector<std::string>& paths, int classes, std::ostream& out,
                     std::ostream& err) {
  bool all_ok = true;
  for (const std::string& path : paths) {
    try {
      read_label_patch(path, classes);
      out << path << ": ok\n";
    } catch (const std::exception& e) {
      err << e.what() << "\n";
      all_ok = false;
    }
  }
  return all_ok ? kExitOk : kExitInputError;
}

// Prints the learning rate for one iteration of the default schedule.
inline int cmd_schedule(int iter, std::ostream& out, std::ostream& err) {
  try {
    out << detail::format_sig6(lr_schedule(iter)) << "\n";
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitOk;
}

}  // namespace nucleval
