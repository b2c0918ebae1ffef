#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deeplle/adam.hpp"
#include "deeplle/frames.hpp"
#include "deeplle/quality.hpp"
#include "deeplle/rng.hpp"
#include "deeplle/tape.hpp"
#include "deeplle/tensor.hpp"

namespace deeplle {

enum class Activation { kLRelu, kRelu, kElu, kSelu };

Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

struct StemSpec {
  int64_t channels = 64;
  int64_t kernel = 7;
  int64_t stride = 2;
};

struct EncoderBlockSpec {
  int64_t channels = 16;
  int64_t stride = 2;
};

struct DecoderBlockSpec {
  int64_t convs = 1;
  int64_t channels = 16;
  int64_t upsample = 2;
};

// Residual strided encoder + stacked-conv/bicubic-upsample decoder.
struct ArchConfig {
  Shape frame_shape;  // (c, h, w)
  std::optional<StemSpec> stem;
  std::vector<EncoderBlockSpec> encoder;
  Activation activation = Activation::kLRelu;
  double lrelu_slope = 0.1;
  std::vector<DecoderBlockSpec> decoder;
  int64_t decoder_kernel = 5;
  std::vector<int64_t> dropout_after;  // 1-based decoder block indices
  double dropout_p = 0.5;

  void validate() const;
  int64_t encoder_downsample() const;
  int64_t decoder_upsample() const;
  Shape latent_shape() const;  // (c', h', w')
  int64_t latent_dim() const;
};

// Presets: "desk64" (4-stage desk-scale), "desk32" (3-stage), "tiny16"
// (2-stage, unit tests), "paper" (full-scale family).
ArchConfig arch_preset(const std::string& name, Shape frame_shape);

struct ParamTensor {
  std::string name;
  Tensor<float> value;
};

struct ModelState {
  ArchConfig arch;
  uint64_t seed = 0;
  std::vector<ParamTensor> params;

  int64_t param_index(const std::string& name) const;
  int64_t num_scalars() const;
};

ModelState build_model(const ArchConfig& arch, uint64_t seed);

// Latent codes of the two node frames, one per row.
struct LatentCodes {
  Tensor<float> z;  // (2, k)
};

// Row-stochastic relative position matrix; row r is (1 - s_r, s_r).
struct Rpm {
  Tensor<double> m;  // (rows, 2)
  std::vector<double> positions;

  int64_t rows() const { return m.empty() ? 0 : m.dim(0); }
};

// Fitting RPM: rows at s = j/N for j = 0..N.
Rpm fit_rpm(int64_t interval_count);

// Synthesis RPM from arbitrary positions in [0,1], order preserved.
Rpm rpm_from_positions(const std::vector<double>& positions);

struct FitConfig {
  int64_t iterations = 5000;
  double learning_rate = 1e-4;
  bool lr_schedule = false;
  std::vector<int64_t> milestones = {2500, 3750};
  quality::LossWeights weights;
  uint64_t seed = 0;
  bool use_lle = true;
  bool use_dropout = true;

  void validate() const;
};

struct TraceRow {
  int64_t iteration;
  double total, huber, grad, ssim, lr;
};

struct FitResult {
  std::vector<TraceRow> trace;
};

// Per-sequence optimization: encode nodes, mix with the fitting RPM, decode
// all rows in fit mode, composite loss against the references in [0,1],
// backward, ADAM. Runs blindly to the configured iteration count.
// With use_lle = false every reference frame is encoded and decoded through
// its own latent code (plain auto-encoding, no mixing).
FitResult fit(const FrameSequence& seq, ModelState& model, const FitConfig& cfg);

// Codes of a (2, c, h, w) node pair at the current parameters.
LatentCodes encode_nodes(const Tensor<float>& node_frames, const ModelState& model);

// Exact matrix product; row r = z_0 + s_r (z_N - z_0).
Tensor<float> interpolate_latent(const Rpm& rpm, const LatentCodes& codes);

// Decode latent rows (R, k) into frames (R, c, h, w) in [0,1].
Tensor<float> decode(const Tensor<float>& latent_rows, const ModelState& model, RunMode mode,
                     Rng* dropout_rng = nullptr);

// decode(interpolate_latent(rpm, codes)) at inference.
Tensor<float> synthesize(const ModelState& model, const LatentCodes& codes, const Rpm& rpm);

// Self-describing binary checkpoint (layout documented in the README).
void save_checkpoint(const ModelState& model, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace deeplle
