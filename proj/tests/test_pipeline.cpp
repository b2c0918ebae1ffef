#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "deeplle/image_io.hpp"
#include "deeplle/pipeline.hpp"
#include "deeplle/rng.hpp"
#include "deeplle/synthetic.hpp"
#include "doctest.h"

using namespace deeplle;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("deeplle_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(bool(f));
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

RunConfig tiny_run_config(uint64_t seed) {
  RunConfig cfg;
  cfg.arch = "tiny16";
  cfg.iterations = 25;
  cfg.learning_rate = 1e-3;
  cfg.seed = seed;
  return cfg;
}

// intensity centroid of (frame - per-channel background) mass
std::pair<double, double> bright_centroid(const Tensor<float>& frames, int64_t idx) {
  const int64_t c = frames.dim(1), h = frames.dim(2), w = frames.dim(3);
  const float* base = frames.data() + idx * c * h * w;
  double sx = 0, sy = 0, mass = 0;
  for (int64_t ch = 0; ch < c; ++ch) {
    const float bg = base[ch * h * w];  // corner pixel is background
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        const double m = std::max(0.0, static_cast<double>(base[(ch * h + y) * w + x] - bg));
        sx += m * x;
        sy += m * y;
        mass += m;
      }
  }
  return {sx / mass, sy / mass};
}

}  // namespace

TEST_CASE("save/load frames round trip") {
  auto dir = fresh_dir("io_roundtrip");
  Rng rng(9);
  Tensor<float> frames({3, 3, 20, 24});
  for (int64_t i = 0; i < frames.numel(); ++i)
    frames.at(i) = static_cast<float>(rng.uniform01());

  SUBCASE("png and ppm round trips stay within 8-bit quantization") {
    for (const std::string format : {"png", "ppm"}) {
      auto paths = io::save_frames(frames, (dir / format).string(), format);
      REQUIRE(paths.size() == 3);
      CHECK(fs::path(paths[0]).filename().string() == "frame_0000." + format);
      CHECK(fs::path(paths[2]).filename().string() == "frame_0002." + format);
      FrameSequence loaded = io::load_frames((dir / format).string());
      REQUIRE(loaded.count() == 3);
      Tensor<float> back = loaded.all01();
      double max_err = 0;
      for (int64_t i = 0; i < frames.numel(); ++i)
        max_err = std::max(max_err, std::abs(static_cast<double>(back.at(i)) - frames.at(i)));
      CHECK(max_err <= 1.0 / 255.0 + 1e-6);
    }
  }
  SUBCASE("lexicographic order is temporal order") {
    auto paths = io::save_frames(frames, (dir / "order").string(), "png");
    FrameSequence loaded = io::load_frames((dir / "order").string() + "/frame_*.png");
    CHECK(loaded.names.front() == "frame_0000.png");
    CHECK(loaded.names.back() == "frame_0002.png");
  }
  SUBCASE("fewer than 2 matches rejected") {
    CHECK_THROWS_AS(io::load_frames((dir / "png").string() + "/frame_0001.png"), RuntimeFault);
  }
  SUBCASE("mixed sizes rejected naming the offending file") {
    auto mixdir = dir / "mixed";
    Tensor<float> small({1, 3, 8, 8}, 0.5f);
    io::save_frames(frames, mixdir.string(), "png");
    io::save_frames(small, (mixdir / "tmp").string(), "png");
    fs::rename(mixdir / "tmp" / "frame_0000.png", mixdir / "frame_9999.png");
    fs::remove_all(mixdir / "tmp");
    try {
      io::load_frames(mixdir.string());
      FAIL("expected RuntimeFault");
    } catch (const RuntimeFault& e) {
      CHECK(std::string(e.what()).find("frame_9999.png") != std::string::npos);
    }
  }
  SUBCASE("8-bit endpoints map to [-1,1] endpoints") {
    auto edir = dir / "endpoints";
    Tensor<float> extremes({2, 3, 8, 8});
    for (int64_t i = 0; i < extremes.numel() / 2; ++i) extremes.at(i) = 0.0f;
    for (int64_t i = extremes.numel() / 2; i < extremes.numel(); ++i) extremes.at(i) = 1.0f;
    io::save_frames(extremes, edir.string(), "png");
    FrameSequence loaded = io::load_frames(edir.string());
    CHECK(loaded.frames.at(0) == -1.0f);
    CHECK(loaded.frames.at(loaded.frames.numel() - 1) == 1.0f);
  }
  SUBCASE("unsupported format rejected") {
    CHECK_THROWS_AS(io::save_frames(frames, dir.string(), "jpeg"), ContractError);
  }
  fs::remove_all(dir);
}

TEST_CASE("gen_synthetic") {
  SUBCASE("translating square moves by exactly the velocity per frame") {
    synth::GenParams p;
    p.vx = 2.0;
    p.vy = 0.0;
    FrameSequence seq = synth::gen_synthetic(synth::Kind::kTranslatingSquare, p, 3, 32, 4);
    REQUIRE(seq.count() == 3);
    auto c0 = bright_centroid(seq.frames, 0);
    auto c1 = bright_centroid(seq.frames, 1);
    auto c2 = bright_centroid(seq.frames, 2);
    CHECK(c1.first - c0.first == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(c2.first - c1.first == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(c1.second - c0.second == doctest::Approx(0.0).epsilon(1e-6));
  }
  SUBCASE("zero velocity gives identical frames") {
    synth::GenParams p;
    p.vx = 0;
    p.vy = 0;
    FrameSequence seq = synth::gen_synthetic(synth::Kind::kTranslatingSquare, p, 4, 24, 7);
    for (int64_t t = 1; t < 4; ++t)
      for (int64_t i = 0; i < seq.frames.numel() / 4; ++i)
        CHECK(seq.frames.at(t * seq.frames.numel() / 4 + i) == seq.frames.at(i));
  }
  SUBCASE("integer-time frames equal the shared renderer") {
    synth::GenParams p;
    FrameSequence seq = synth::gen_synthetic(synth::Kind::kTwoSquares, p, 3, 24, 11);
    for (int64_t t = 0; t < 3; ++t) {
      Tensor<float> direct = synth::render_at(synth::Kind::kTwoSquares, p, 24, 11, t);
      for (int64_t i = 0; i < direct.numel(); ++i)
        CHECK(seq.frames.at(t * direct.numel() + i) == direct.at(i));
    }
  }
  SUBCASE("motion larger than size/4 rejected") {
    synth::GenParams p;
    p.vx = 10.0;
    CHECK_THROWS_AS(synth::gen_synthetic(synth::Kind::kTranslatingSquare, p, 3, 32, 1),
                    ContractError);
    synth::GenParams spin;
    spin.spin_deg = 40.0;
    CHECK_THROWS_AS(synth::gen_synthetic(synth::Kind::kRotatingGradient, spin, 3, 32, 1),
                    ContractError);
  }
  SUBCASE("all kinds render in range and deterministically") {
    for (auto kind : {synth::Kind::kTranslatingSquare, synth::Kind::kTwoSquares,
                      synth::Kind::kRotatingGradient}) {
      synth::GenParams p;
      FrameSequence a = synth::gen_synthetic(kind, p, 3, 16, 5);
      FrameSequence b = synth::gen_synthetic(kind, p, 3, 16, 5);
      a.validate();
      CHECK(a.frames.values() == b.frames.values());
    }
  }
}

TEST_CASE("run_interpolate") {
  synth::GenParams p;
  p.vx = 1.0;
  FrameSequence seq = synth::gen_synthetic(synth::Kind::kTranslatingSquare, p, 3, 16, 3);
  SUBCASE("default half-way positions emit 2 frames") {
    RunConfig cfg = tiny_run_config(5);
    RunOutcome out = run_interpolate(seq, cfg);
    CHECK(out.synthesized01.dim(0) == 2);
    CHECK(out.report.per_frame.size() == 3);  // reference reconstructions
    CHECK(out.fit_result.trace.size() == 25);
  }
  SUBCASE("six-row positions emit 6 frames in order") {
    RunConfig cfg = tiny_run_config(5);
    cfg.positions = {1.0 / 6, 0.25, 1.0 / 3, 2.0 / 3, 0.75, 5.0 / 6};
    RunOutcome out = run_interpolate(seq, cfg);
    CHECK(out.synthesized01.dim(0) == 6);
  }
  SUBCASE("same config and seed give byte-identical outputs") {
    RunConfig cfg = tiny_run_config(17);
    auto d1 = fresh_dir("det1");
    auto d2 = fresh_dir("det2");
    cfg.output_dir = d1.string();
    write_outputs(run_interpolate(seq, cfg), cfg);
    cfg.output_dir = d2.string();
    write_outputs(run_interpolate(seq, cfg), cfg);
    CHECK(slurp(d1 / "report.txt") == slurp(d2 / "report.txt"));
    CHECK(slurp(d1 / "loss_trace.csv") == slurp(d2 / "loss_trace.csv"));
    CHECK(slurp(d1 / "frames" / "frame_0000.png") == slurp(d2 / "frames" / "frame_0000.png"));
    CHECK(slurp(d1 / "frames" / "frame_0001.png") == slurp(d2 / "frames" / "frame_0001.png"));
    CHECK(slurp(d1 / "checkpoint.bin") == slurp(d2 / "checkpoint.bin"));
    fs::remove_all(d1);
    fs::remove_all(d2);
  }
  SUBCASE("invalid positions rejected") {
    RunConfig cfg = tiny_run_config(5);
    cfg.positions = {1.5};
    CHECK_THROWS_AS(run_interpolate(seq, cfg), ContractError);
  }
}

TEST_CASE("eval_leaveout") {
  synth::GenParams p;
  p.vx = 1.0;
  FrameSequence seq = synth::gen_synthetic(synth::Kind::kTranslatingSquare, p, 5, 16, 6);
  SUBCASE("5-frame sequence yields 2 held-out comparisons") {
    RunConfig cfg = tiny_run_config(6);
    RunOutcome out = eval_leaveout(seq, cfg);
    REQUIRE(out.report.per_frame.size() == 2);
    CHECK(out.synthesized01.dim(0) == 2);
    CHECK(out.report.per_frame[0].has_baselines);
    bool found = false;
    for (const auto& n : out.report.notes)
      if (n.find("held_out_positions=0.25,0.75") != std::string::npos) found = true;
    CHECK(found);
  }
  SUBCASE("aggregates equal the mean of per-frame entries") {
    RunConfig cfg = tiny_run_config(7);
    RunOutcome out = eval_leaveout(seq, cfg);
    double ms = 0, mp = 0;
    for (const auto& f : out.report.per_frame) {
      ms += f.ssim;
      mp += f.psnr;
    }
    ms /= out.report.per_frame.size();
    mp /= out.report.per_frame.size();
    CHECK(out.report.aggregate_ssim == doctest::Approx(ms).epsilon(1e-12));
    CHECK(out.report.aggregate_psnr == doctest::Approx(mp).epsilon(1e-12));
  }
  SUBCASE("even frame count rejected") {
    FrameSequence even = synth::gen_synthetic(synth::Kind::kTranslatingSquare, p, 4, 16, 6);
    RunConfig cfg = tiny_run_config(6);
    CHECK_THROWS_AS(eval_leaveout(even, cfg), ContractError);
  }
}

TEST_CASE("report text is self-consistent and stable") {
  synth::GenParams p;
  FrameSequence seq = synth::gen_synthetic(synth::Kind::kRotatingGradient, p, 5, 16, 8);
  RunConfig cfg = tiny_run_config(9);
  RunOutcome out = eval_leaveout(seq, cfg);
  const std::string text = render_report(out.report, cfg);
  CHECK(text.find("mode=eval_leaveout") != std::string::npos);
  CHECK(text.find("per_frame_csv:") != std::string::npos);
  CHECK(text.find("aggregate_ssim=") != std::string::npos);
  CHECK(text.find("wall") == std::string::npos);  // timing lives in timing.txt
  CHECK(render_report(out.report, cfg) == text);
}

TEST_CASE("sequence seeds are deterministic and distinct") {
  CHECK(sequence_seed(5, 0) == sequence_seed(5, 0));
  CHECK(sequence_seed(5, 0) != sequence_seed(5, 1));
  CHECK(sequence_seed(5, 0) != sequence_seed(6, 0));
}
