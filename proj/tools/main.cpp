#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nucleval/cli.hpp"
#include "nucleval/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Nuclei instance-segmentation evaluation and detection post-processing"};
  app.set_version_flag("--version", std::string(nucleval::kVersion));
  app.require_subcommand(1);

  nucleval::EvalOptions eval_opts;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate prediction patches against ground truth");
  eval->add_option("--gt", eval_opts.gt_dir, "Directory of ground-truth patch files")->required();
  eval->add_option("--pred", eval_opts.pred_dir, "Directory of predicted patch files")->required();
  eval->add_option("--classes", eval_opts.classes, "Number of foreground classes")
      ->default_val(nucleval::kDefaultClassCount);
  eval->add_option("--workers", eval_opts.workers, "Worker threads for per-patch work")
      ->default_val(1);
  eval->add_flag("--json", eval_opts.json, "Print the JSON report instead of the table");
  eval->add_option("--out", eval_opts.out_path, "Also write the JSON report to this file");

  nucleval::PostprocessOptions post_opts;
  std::string post_detections;
  CLI::App* post =
      app.add_subcommand("postprocess", "Convert a detections file into a label patch");
  post->add_option("detections", post_detections, "JSONL detections file")->required();
  post->add_option("--height", post_opts.height, "Output patch height")->required();
  post->add_option("--width", post_opts.width, "Output patch width")->required();
  post->add_option("--score-thresh", post_opts.score_thresh,
                   "Keep detections with score strictly above this")
      ->default_val(0.5);
  post->add_option("--iou-thresh", post_opts.iou_thresh, "NMS IoU threshold")->default_val(0.5);
  post->add_option("--classes", post_opts.classes, "Number of foreground classes")
      ->default_val(nucleval::kDefaultClassCount);
  post->add_option("--out", post_opts.out_path, "Output NPY path")->required();

  nucleval::ScoreOptions score_opts;
  std::string score_detections;
  CLI::App* score = app.add_subcommand("score", "Print fused posteriors for a detections file");
  score->add_option("detections", score_detections, "JSONL detections file")->required();
  score->add_option("--classes", score_opts.classes, "Number of foreground classes")
      ->default_val(nucleval::kDefaultClassCount);

  std::vector<std::string> check_paths;
  int check_classes = nucleval::kDefaultClassCount;
  CLI::App* check = app.add_subcommand("check", "Validate label patch files");
  check->add_option("paths", check_paths, "Patch files to validate");
  check->add_option("--classes", check_classes, "Number of foreground classes")
      ->default_val(nucleval::kDefaultClassCount);

  int schedule_iter = 0;
  CLI::App* schedule = app.add_subcommand("schedule", "Print the learning rate at an iteration");
  schedule->add_option("iter", schedule_iter, "Training iteration")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? nucleval::kExitOk : nucleval::kExitInputError;
  }

  if (eval->parsed()) return nucleval::cmd_eval(eval_opts, std::cout, std::cerr);
  if (post->parsed()) {
    post_opts.detections_path = post_detections;
    return nucleval::cmd_postprocess(post_opts, std::cout, std::cerr);
  }
  if (score->parsed()) {
    score_opts.detections_path = score_detections;
    return nucleval::cmd_score(score_opts, std::cout, std::cerr);
  }
  if (check->parsed()) {
    return nucleval::cmd_check(check_paths, check_classes, std::cout, std::cerr);
  }
  if (schedule->parsed()) return nucleval::cmd_schedule(schedule_iter, std::cout, std::cerr);
  return nucleval::kExitInputError;
}
