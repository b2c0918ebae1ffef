#include "deeplle/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "deeplle/image_io.hpp"
#include "deeplle/quality.hpp"

namespace fs = std::filesystem;

namespace deeplle {

namespace {

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

Tensor<float> one_frame(const Tensor<float>& batch01, int64_t idx) {
  const int64_t n = batch01.dim(0);
  DLLE_CHECK(idx >= 0 && idx < n, "frame index out of range");
  Tensor<float> out({1, batch01.dim(1), batch01.dim(2), batch01.dim(3)});
  std::copy_n(batch01.data() + idx * out.numel(), out.numel(), out.data());
  return out;
}

Tensor<float> node_pair_frames(const FrameSequence& seq) {
  const int64_t fsz = seq.frames.numel() / seq.count();
  Tensor<float> nodes({2, seq.frames.dim(1), seq.frames.dim(2), seq.frames.dim(3)});
  std::copy_n(seq.frames.data(), fsz, nodes.data());
  std::copy_n(seq.frames.data() + (seq.count() - 1) * fsz, fsz, nodes.data() + fsz);
  return nodes;
}

}  // namespace

void RunConfig::validate() const {
  DLLE_CHECK(iterations >= 1, "config: iterations must be >= 1");
  DLLE_CHECK(!positions.empty(), "config: at least one synthesis position required");
  for (double s : positions)
    DLLE_CHECK(s >= 0.0 && s <= 1.0, "config: synthesis position ", s, " outside [0,1]");
  DLLE_CHECK(image_format == "png" || image_format == "ppm",
             "config: image format must be png or ppm");
  fit_config().validate();
}

FitConfig RunConfig::fit_config() const {
  FitConfig f;
  f.iterations = iterations;
  f.learning_rate = learning_rate;
  f.lr_schedule = lr_schedule;
  f.milestones = milestones;
  f.weights.lambda1 = lambda1;
  f.weights.lambda2 = lambda2;
  f.weights.huber_delta = huber_delta;
  f.seed = seed;
  f.use_lle = use_lle;
  f.use_dropout = dropout;
  return f;
}

ArchConfig RunConfig::arch_config(const Shape& frame_shape) const {
  ArchConfig a = arch_preset(arch, frame_shape);
  a.activation = activation_from_string(activation);
  return a;
}

void EvalReport::recompute_aggregates() {
  aggregate_ssim = 0;
  aggregate_psnr = 0;
  if (per_frame.empty()) return;
  for (const auto& f : per_frame) {
    aggregate_ssim += f.ssim;
    aggregate_psnr += f.psnr;
  }
  aggregate_ssim /= static_cast<double>(per_frame.size());
  aggregate_psnr /= static_cast<double>(per_frame.size());
}

uint64_t sequence_seed(uint64_t base_seed, uint64_t sequence_index) {
  return derive_seed(base_seed, 0xC0FFEE + sequence_index);
}

RunOutcome run_interpolate(const FrameSequence& seq, const RunConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  RunOutcome out;
  out.model = build_model(cfg.arch_config(seq.frame_shape()), cfg.seed);
  out.fit_result = fit(seq, out.model, cfg.fit_config());

  LatentCodes z = encode_nodes(node_pair_frames(seq), out.model);
  out.synthesized01 = synthesize(out.model, z, rpm_from_positions(cfg.positions));

  // reconstruction quality of the references through the fitting RPM
  const int64_t n_refs = seq.count();
  Tensor<float> recon = synthesize(out.model, z, fit_rpm(n_refs - 1));
  Tensor<float> refs01 = seq.all01();
  out.report.mode = "interpolate";
  out.report.notes.push_back("per_frame metrics compare reference reconstructions (fit RPM rows)");
  for (int64_t i = 0; i < n_refs; ++i) {
    FrameMetrics fm;
    fm.name = seq.names.empty() ? ("ref_" + std::to_string(i)) : seq.names[i];
    Tensor<float> truth = one_frame(refs01, i);
    Tensor<float> pred = one_frame(recon, i);
    fm.ssim = quality::ssim_luma(truth, pred);
    fm.psnr = quality::psnr(truth, pred);
    out.report.per_frame.push_back(fm);
  }
  out.report.recompute_aggregates();
  out.report.loss_initial = out.fit_result.trace.front().total;
  out.report.loss_final = out.fit_result.trace.back().total;
  out.report.iterations = cfg.iterations;
  out.report.final_lr = out.fit_result.trace.back().lr;
  out.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

RunOutcome eval_leaveout(const FrameSequence& seq, const RunConfig& cfg) {
  cfg.validate();
  seq.validate();
  const int64_t total = seq.count();
  DLLE_CHECK(total >= 3 && total % 2 == 1,
             "eval_leaveout needs an odd frame count >= 3, got ", total);
  const auto t0 = std::chrono::steady_clock::now();
  const int64_t n_intervals = (total - 1) / 2;  // N

  const int64_t c = seq.frames.dim(1), h = seq.frames.dim(2), w = seq.frames.dim(3);
  const int64_t fsz = c * h * w;
  FrameSequence refs;
  refs.frames = Tensor<float>({n_intervals + 1, c, h, w});
  for (int64_t j = 0; j <= n_intervals; ++j) {
    std::copy_n(seq.frames.data() + (2 * j) * fsz, fsz, refs.frames.data() + j * fsz);
    refs.names.push_back(seq.names.empty() ? ("ref_" + std::to_string(2 * j)) : seq.names[2 * j]);
  }

  RunOutcome out;
  out.model = build_model(cfg.arch_config(refs.frame_shape()), cfg.seed);
  out.fit_result = fit(refs, out.model, cfg.fit_config());

  std::vector<double> held_positions(n_intervals);
  for (int64_t j = 0; j < n_intervals; ++j)
    held_positions[j] = static_cast<double>(2 * j + 1) / static_cast<double>(2 * n_intervals);

  LatentCodes z = encode_nodes(node_pair_frames(refs), out.model);
  out.synthesized01 = synthesize(out.model, z, rpm_from_positions(held_positions));

  Tensor<float> node0 = refs.frame01(0);
  Tensor<float> node1 = refs.frame01(n_intervals);
  out.report.mode = "eval_leaveout";
  out.report.notes.push_back(
      "references: 0-based even indices; held-out targets: 0-based odd indices");
  {
    std::string pos = "held_out_positions=";
    for (size_t i = 0; i < held_positions.size(); ++i)
      pos += (i ? "," : "") + fmt_double(held_positions[i]);
    out.report.notes.push_back(pos);
  }
  for (int64_t j = 0; j < n_intervals; ++j) {
    FrameMetrics fm;
    const int64_t truth_idx = 2 * j + 1;
    fm.name = seq.names.empty() ? ("held_out_" + std::to_string(truth_idx))
                                : seq.names[truth_idx];
    Tensor<float> truth = seq.frame01(truth_idx);
    Tensor<float> pred = one_frame(out.synthesized01, j);
    fm.ssim = quality::ssim_luma(truth, pred);
    fm.psnr = quality::psnr(truth, pred);
    fm.baseline_ssim_node0 = quality::ssim_luma(truth, node0);
    fm.baseline_ssim_node1 = quality::ssim_luma(truth, node1);
    fm.has_baselines = true;
    out.report.per_frame.push_back(fm);
  }
  out.report.recompute_aggregates();
  out.report.loss_initial = out.fit_result.trace.front().total;
  out.report.loss_final = out.fit_result.trace.back().total;
  out.report.iterations = cfg.iterations;
  out.report.final_lr = out.fit_result.trace.back().lr;
  out.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::string render_report(const EvalReport& report, const RunConfig& cfg) {
  std::string s;
  s += "deeplle_report_v1\n";
  s += "mode=" + report.mode + "\n";
  s += "arch=" + cfg.arch + "\n";
  s += "activation=" + cfg.activation + "\n";
  s += "iterations=" + std::to_string(report.iterations) + "\n";
  s += "learning_rate=" + fmt_double(cfg.learning_rate) + "\n";
  s += "lr_schedule=" + std::string(cfg.lr_schedule ? "on" : "off") + "\n";
  if (cfg.lr_schedule) {
    s += "milestones=";
    for (size_t i = 0; i < cfg.milestones.size(); ++i)
      s += (i ? "," : "") + std::to_string(cfg.milestones[i]);
    s += "\n";
  }
  s += "lambda1=" + fmt_double(cfg.lambda1) + "\n";
  s += "lambda2=" + fmt_double(cfg.lambda2) + "\n";
  s += "huber_delta=" + fmt_double(cfg.huber_delta) + "\n";
  s += "dropout=" + std::string(cfg.dropout ? "on" : "off") + "\n";
  s += "lle=" + std::string(cfg.use_lle ? "on" : "off") + "\n";
  s += "seed=" + std::to_string(cfg.seed) + "\n";
  s += "positions=";
  for (size_t i = 0; i < cfg.positions.size(); ++i)
    s += (i ? "," : "") + fmt_double(cfg.positions[i]);
  s += "\n";
  for (const auto& n : report.notes) s += "note=" + n + "\n";
  s += "loss_initial=" + fmt_double(report.loss_initial) + "\n";
  s += "loss_final=" + fmt_double(report.loss_final) + "\n";
  s += "final_lr=" + fmt_double(report.final_lr) + "\n";
  s += "frames=" + std::to_string(report.per_frame.size()) + "\n";
  s += "per_frame_csv:\n";
  s += "name,ssim,psnr,baseline_ssim_node0,baseline_ssim_node1\n";
  for (const auto& f : report.per_frame) {
    s += f.name + "," + fmt_double(f.ssim) + "," + fmt_double(f.psnr);
    if (f.has_baselines)
      s += "," + fmt_double(f.baseline_ssim_node0) + "," + fmt_double(f.baseline_ssim_node1);
    else
      s += ",,";
    s += "\n";
  }
  s += "aggregate_ssim=" + fmt_double(report.aggregate_ssim) + "\n";
  s += "aggregate_psnr=" + fmt_double(report.aggregate_psnr) + "\n";
  return s;
}

std::string render_loss_trace_csv(const FitResult& fit) {
  std::string s = "iteration,total,huber,grad,ssim,lr\n";
  for (const auto& row : fit.trace) {
    s += std::to_string(row.iteration) + "," + fmt_double(row.total) + "," +
         fmt_double(row.huber) + "," + fmt_double(row.grad) + "," + fmt_double(row.ssim) + "," +
         fmt_double(row.lr) + "\n";
  }
  return s;
}

void write_outputs(const RunOutcome& outcome, const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (!fs::is_directory(cfg.output_dir))
    fail_runtime("cannot create output directory '", cfg.output_dir, "'");

  io::save_frames(outcome.synthesized01, (fs::path(cfg.output_dir) / "frames").string(),
                  cfg.image_format);

  auto write_text = [&](const char* name, const std::string& content) {
    const std::string path = (fs::path(cfg.output_dir) / name).string();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail_runtime("cannot write '", path, "'");
    f << content;
  };
  write_text("report.txt", render_report(outcome.report, cfg));
  write_text("loss_trace.csv", render_loss_trace_csv(outcome.fit_result));
  write_text("timing.txt", "wall_seconds=" + fmt_double(outcome.report.wall_seconds) + "\n");
  save_checkpoint(outcome.model, (fs::path(cfg.output_dir) / "checkpoint.bin").string());
}

}  // namespace deeplle
