#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "deeplle/image_io.hpp"
#include "deeplle/model.hpp"
#include "deeplle/pipeline.hpp"
#include "deeplle/synthetic.hpp"
#include "deeplle/threading.hpp"

namespace fs = std::filesystem;
using namespace deeplle;

namespace {

void add_run_flags(CLI::App* cmd, RunConfig& cfg, bool with_positions) {
  cmd->add_option("-i,--input", cfg.input, "Frame directory or glob (png/ppm)")->required();
  cmd->add_option("-o,--output", cfg.output_dir, "Output directory");
  cmd->add_option("--arch", cfg.arch, "Architecture preset: desk64|desk32|tiny16|paper");
  cmd->add_option("--iterations", cfg.iterations, "Fitting iterations");
  cmd->add_option("--lr", cfg.learning_rate, "ADAM learning rate");
  cmd->add_flag("--lr-schedule", cfg.lr_schedule, "Halve the learning rate at the milestones");
  cmd->add_option("--milestones", cfg.milestones, "LR-halving iterations")->delimiter(',');
  cmd->add_option("--lambda1", cfg.lambda1, "Gradient-loss weight");
  cmd->add_option("--lambda2", cfg.lambda2, "SSIM-loss weight");
  cmd->add_option("--huber-delta", cfg.huber_delta, "Huber threshold");
  if (with_positions)
    cmd->add_option("--positions", cfg.positions, "Synthesis positions in [0,1]")->delimiter(',');
  cmd->add_option("--activation", cfg.activation, "lrelu|relu|elu|selu");
  cmd->add_flag("!--no-dropout", cfg.dropout, "Disable decoder dropout");
  cmd->add_flag("!--no-lle", cfg.use_lle, "Plain auto-encoding of every reference (ablation)");
  cmd->add_option("--seed", cfg.seed, "Deterministic seed");
  cmd->add_option("--format", cfg.image_format, "Output image format: png|ppm");
}

void print_report_summary(const RunOutcome& out) {
  std::printf("loss: %.6g -> %.6g over %lld iterations\n", out.report.loss_initial,
              out.report.loss_final, static_cast<long long>(out.report.iterations));
  for (const auto& f : out.report.per_frame) {
    if (f.has_baselines)
      std::printf("  %s  ssim=%.4f psnr=%.2f  (repeat-node baselines %.4f / %.4f)\n",
                  f.name.c_str(), f.ssim, f.psnr, f.baseline_ssim_node0, f.baseline_ssim_node1);
    else
      std::printf("  %s  ssim=%.4f psnr=%.2f\n", f.name.c_str(), f.ssim, f.psnr);
  }
  std::printf("aggregate: ssim=%.4f psnr=%.2f  wall=%.1fs\n", out.report.aggregate_ssim,
              out.report.aggregate_psnr, out.report.wall_seconds);
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("DEEPLLE_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) set_num_threads(n);
  }

  CLI::App app{"Plug-and-play video frame interpolation: fits a convolutional auto-encoder to a "
               "short frame sequence with latent codes pinned to the segment between the end "
               "frames, then decodes new frames at arbitrary positions on that segment."};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key=value config file");

  // ---- gen ----
  auto* gen = app.add_subcommand("gen", "Generate a synthetic frame sequence");
  std::string gen_kind = "translating_square", gen_out = "synthetic_frames",
              gen_format = "png";
  int64_t gen_count = 5, gen_size = 64;
  uint64_t gen_seed = 0;
  synth::GenParams gp;
  gen->add_option("--kind", gen_kind, "translating_square|two_squares|rotating_gradient");
  gen->add_option("--count", gen_count, "Number of frames");
  gen->add_option("--size", gen_size, "Frame side in pixels");
  gen->add_option("--seed", gen_seed, "Deterministic seed");
  gen->add_option("-o,--output", gen_out, "Output directory");
  gen->add_option("--vx", gp.vx, "Horizontal velocity, px/frame");
  gen->add_option("--vy", gp.vy, "Vertical velocity, px/frame");
  gen->add_option("--square-frac", gp.square_frac, "Square side / frame size");
  gen->add_option("--spin", gp.spin_deg, "Gradient rotation, deg/frame");
  gen->add_option("--format", gen_format, "png|ppm");

  // ---- fit ----
  auto* fit_cmd = app.add_subcommand(
      "fit", "Fit a sequence, then synthesize frames at --positions");
  RunConfig fit_cfg;
  add_run_flags(fit_cmd, fit_cfg, true);

  // ---- synthesize ----
  auto* synth_cmd =
      app.add_subcommand("synthesize", "Decode new frames from an existing checkpoint");
  std::string ck_path, synth_input, synth_out = "deeplle_out", synth_format = "png";
  std::vector<double> synth_positions = {0.5};
  synth_cmd->add_option("--checkpoint", ck_path, "Model checkpoint")->required();
  synth_cmd->add_option("-i,--input", synth_input, "Reference frames (nodes = first and last)")
      ->required();
  synth_cmd->add_option("--positions", synth_positions, "Positions in [0,1]")->delimiter(',');
  synth_cmd->add_option("-o,--output", synth_out, "Output directory");
  synth_cmd->add_option("--format", synth_format, "png|ppm");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand(
      "eval", "Leave-out protocol: fit on even-indexed frames, score the held-out odd ones");
  RunConfig eval_cfg;
  add_run_flags(eval_cmd, eval_cfg, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      FrameSequence seq =
          synth::gen_synthetic(synth::kind_from_string(gen_kind), gp, gen_count, gen_size,
                               gen_seed);
      auto paths = io::save_frames(seq.all01(), gen_out, gen_format);
      std::printf("wrote %zu frames to %s\n", paths.size(), gen_out.c_str());
    } else if (fit_cmd->parsed()) {
      FrameSequence seq = io::load_frames(fit_cfg.input);
      RunOutcome out = run_interpolate(seq, fit_cfg);
      write_outputs(out, fit_cfg);
      print_report_summary(out);
      std::printf("outputs in %s\n", fit_cfg.output_dir.c_str());
    } else if (synth_cmd->parsed()) {
      ModelState model = load_checkpoint(ck_path);
      FrameSequence seq = io::load_frames(synth_input);
      DLLE_CHECK(seq.frame_shape() == model.arch.frame_shape,
                 "input frames do not match the checkpoint's frame shape");
      LatentCodes z = [&] {
        const int64_t fsz = seq.frames.numel() / seq.count();
        Tensor<float> nodes({2, seq.frames.dim(1), seq.frames.dim(2), seq.frames.dim(3)});
        std::copy_n(seq.frames.data(), fsz, nodes.data());
        std::copy_n(seq.frames.data() + (seq.count() - 1) * fsz, fsz, nodes.data() + fsz);
        return encode_nodes(nodes, model);
      }();
      Tensor<float> frames = synthesize(model, z, rpm_from_positions(synth_positions));
      auto paths =
          io::save_frames(frames, (fs::path(synth_out) / "frames").string(), synth_format);
      std::printf("wrote %zu frames to %s/frames\n", paths.size(), synth_out.c_str());
    } else if (eval_cmd->parsed()) {
      FrameSequence seq = io::load_frames(eval_cfg.input);
      RunOutcome out = eval_leaveout(seq, eval_cfg);
      write_outputs(out, eval_cfg);
      print_report_summary(out);
      std::printf("outputs in %s\n", eval_cfg.output_dir.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
