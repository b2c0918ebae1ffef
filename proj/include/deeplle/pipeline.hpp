#pragma once

#include <string>
#include <vector>

#include "deeplle/frames.hpp"
#include "deeplle/model.hpp"

namespace deeplle {

// Everything a run needs; mirrors the CLI flags one to one.
struct RunConfig {
  std::string input;
  std::string output_dir = "deeplle_out";
  std::string arch = "desk64";
  int64_t iterations = 5000;
  double learning_rate = 1e-4;
  bool lr_schedule = false;
  std::vector<int64_t> milestones = {2500, 3750};
  double lambda1 = 0.1;
  double lambda2 = 0.0001;
  double huber_delta = 0.01;
  std::vector<double> positions = {0.25, 0.75};
  std::string activation = "lrelu";
  bool dropout = true;
  bool use_lle = true;
  uint64_t seed = 0;
  std::string image_format = "png";

  void validate() const;
  FitConfig fit_config() const;
  ArchConfig arch_config(const Shape& frame_shape) const;
};

struct FrameMetrics {
  std::string name;
  double ssim = 0;  // luma SSIM against the target
  double psnr = 0;
  // frame-repetition baselines (eval mode): nodes reused as the prediction
  double baseline_ssim_node0 = 0;
  double baseline_ssim_node1 = 0;
  bool has_baselines = false;
};

struct EvalReport {
  std::string mode;                     // "interpolate" or "eval_leaveout"
  std::vector<std::string> notes;       // conventions, held-out indices
  std::vector<FrameMetrics> per_frame;
  double aggregate_ssim = 0;
  double aggregate_psnr = 0;
  double loss_initial = 0;
  double loss_final = 0;
  int64_t iterations = 0;
  double final_lr = 0;
  double wall_seconds = 0;  // reported separately, never in report.txt

  void recompute_aggregates();
};

struct RunOutcome {
  Tensor<float> synthesized01;  // (rows, c, h, w) in [0,1]
  EvalReport report;
  ModelState model;
  FitResult fit_result;
};

// Fit on the given references, then synthesize at cfg.positions.
// Report carries reconstruction metrics of the references.
RunOutcome run_interpolate(const FrameSequence& seq, const RunConfig& cfg);

// Leave-out protocol on a (2N+1)-frame sequence: 0-based even indices are
// references, 0-based odd indices are held-out targets at s = (2j+1)/(2N).
RunOutcome eval_leaveout(const FrameSequence& seq, const RunConfig& cfg);

// Deterministic report text (excludes wall time).
std::string render_report(const EvalReport& report, const RunConfig& cfg);

std::string render_loss_trace_csv(const FitResult& fit);

// Writes output_dir/{frames/,report.txt,loss_trace.csv,checkpoint.bin,timing.txt}.
void write_outputs(const RunOutcome& outcome, const RunConfig& cfg);

// Deterministic per-sequence seed for batch runs.
uint64_t sequence_seed(uint64_t base_seed, uint64_t sequence_index);

}  // namespace deeplle
