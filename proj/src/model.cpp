#include "deeplle/model.hpp"

#include <algorithm>
#include <cmath>

namespace deeplle {

Activation activation_from_string(const std::string& s) {
  if (s == "lrelu") return Activation::kLRelu;
  if (s == "relu") return Activation::kRelu;
  if (s == "elu") return Activation::kElu;
  if (s == "selu") return Activation::kSelu;
  fail_contract("unknown activation '", s, "' (expected lrelu|relu|elu|selu)");
}

std::string activation_to_string(Activation a) {
  switch (a) {
    case Activation::kLRelu: return "lrelu";
    case Activation::kRelu: return "relu";
    case Activation::kElu: return "elu";
    case Activation::kSelu: return "selu";
  }
  return "lrelu";
}

int64_t ArchConfig::encoder_downsample() const {
  int64_t d = stem ? stem->stride : 1;
  for (const auto& b : encoder) d *= b.stride;
  return d;
}

int64_t ArchConfig::decoder_upsample() const {
  int64_t u = 1;
  for (const auto& b : decoder) u *= b.upsample;
  return u;
}

Shape ArchConfig::latent_shape() const {
  const int64_t d = encoder_downsample();
  return {encoder.back().channels, frame_shape[1] / d, frame_shape[2] / d};
}

int64_t ArchConfig::latent_dim() const {
  const Shape s = latent_shape();
  return s[0] * s[1] * s[2];
}

void ArchConfig::validate() const {
  DLLE_CHECK(frame_shape.size() == 3, "arch: frame shape must be (c,h,w)");
  for (int64_t e : frame_shape) DLLE_CHECK(e >= 1, "arch: nonpositive frame extent");
  DLLE_CHECK(!encoder.empty() && !decoder.empty(), "arch: encoder and decoder must be nonempty");
  if (stem) {
    DLLE_CHECK(stem->channels >= 1 && stem->stride >= 1, "arch: bad stem");
    DLLE_CHECK(stem->kernel >= 1 && stem->kernel % 2 == 1, "arch: stem kernel must be odd");
  }
  for (const auto& b : encoder)
    DLLE_CHECK(b.channels >= 1 && b.stride >= 1, "arch: bad encoder block");
  for (const auto& b : decoder)
    DLLE_CHECK(b.convs >= 1 && b.channels >= 1 && b.upsample >= 1, "arch: bad decoder block");
  DLLE_CHECK(decoder_kernel >= 1 && decoder_kernel % 2 == 1,
             "arch: decoder kernel must be odd, got ", decoder_kernel);
  DLLE_CHECK(dropout_p >= 0.0 && dropout_p < 1.0, "arch: dropout probability must be in [0,1)");
  for (int64_t pos : dropout_after)
    DLLE_CHECK(pos >= 1 && pos <= static_cast<int64_t>(decoder.size()),
               "arch: dropout position ", pos, " outside 1..", decoder.size());

  const int64_t down = encoder_downsample();
  const int64_t up = decoder_upsample();
  DLLE_CHECK(frame_shape[1] % down == 0 && frame_shape[2] % down == 0,
             "arch: frame extents ", frame_shape[1], "x", frame_shape[2],
             " not divisible by encoder downsampling ", down);
  DLLE_CHECK(down == up, "arch: encoder downsampling ", down, " and decoder upsampling ", up,
             " do not map the latent back to the frame size");
}

ArchConfig arch_preset(const std::string& name, Shape frame_shape) {
  ArchConfig a;
  a.frame_shape = std::move(frame_shape);
  if (name == "desk64") {
    a.encoder = {{16, 2}, {32, 2}, {64, 2}, {64, 2}};
    a.decoder = {{1, 64, 2}, {1, 48, 2}, {2, 32, 2}, {2, 16, 2}};
    a.dropout_after = {3, 4};
  } else if (name == "desk32") {
    a.encoder = {{16, 2}, {32, 2}, {64, 2}};
    a.decoder = {{1, 48, 2}, {2, 32, 2}, {2, 16, 2}};
    a.dropout_after = {2, 3};
  } else if (name == "tiny16") {
    a.encoder = {{8, 2}, {16, 2}};
    a.decoder = {{1, 12, 2}, {1, 8, 2}};
    a.dropout_after = {1, 2};
  } else if (name == "paper") {
    a.stem = StemSpec{64, 7, 2};
    a.encoder = {{64, 1}, {64, 1}, {128, 2}, {128, 1}, {256, 2}, {256, 1}, {512, 2}, {512, 1}};
    a.decoder = {{3, 256, 2}, {5, 128, 2}, {7, 64, 2}, {9, 32, 2}};
    a.dropout_after = {3, 4};
  } else {
    fail_contract("unknown arch preset '", name, "' (expected desk64|desk32|tiny16|paper)");
  }
  a.validate();
  return a;
}

namespace {

using FTape = Tape<float>;
using FVar = FTape::Var;

struct ConvSpec {
  std::string name;
  int64_t cin, cout, kernel, stride, pad;
};

// Every convolution in creation/consumption order. Keeps build_model and the
// forward passes in lockstep.
std::vector<ConvSpec> conv_plan(const ArchConfig& arch) {
  std::vector<ConvSpec> plan;
  int64_t ch = arch.frame_shape[0];
  if (arch.stem) {
    plan.push_back({"stem", ch, arch.stem->channels, arch.stem->kernel, arch.stem->stride,
                    arch.stem->kernel / 2});
    ch = arch.stem->channels;
  }
  for (size_t b = 0; b < arch.encoder.size(); ++b) {
    const auto& blk = arch.encoder[b];
    const std::string base = "enc" + std::to_string(b);
    plan.push_back({base + ".conv1", ch, blk.channels, 3, blk.stride, 1});
    plan.push_back({base + ".conv2", blk.channels, blk.channels, 3, 1, 1});
    if (blk.stride != 1 || ch != blk.channels)
      plan.push_back({base + ".skip", ch, blk.channels, 1, blk.stride, 0});
    ch = blk.channels;
  }
  for (size_t b = 0; b < arch.decoder.size(); ++b) {
    const auto& blk = arch.decoder[b];
    const std::string base = "dec" + std::to_string(b);
    const int64_t k = arch.decoder_kernel;
    for (int64_t j = 0; j < blk.convs; ++j) {
      plan.push_back({base + ".conv" + std::to_string(j), j == 0 ? ch : blk.channels,
                      blk.channels, k, 1, k / 2});
    }
    ch = blk.channels;
  }
  plan.push_back({"out", ch, arch.frame_shape[0], arch.decoder_kernel, 1,
                  arch.decoder_kernel / 2});
  return plan;
}

FVar apply_act(FTape& t, FVar x, const ArchConfig& arch) {
  switch (arch.activation) {
    case Activation::kLRelu: return t.leaky_relu(x, static_cast<float>(arch.lrelu_slope));
    case Activation::kRelu: return t.relu(x);
    case Activation::kElu: return t.elu(x);
    case Activation::kSelu: return t.selu(x);
  }
  return x;
}

// Parameter vars addressed by name through the model's registration order.
struct ParamLookup {
  const ModelState& model;
  const std::vector<FVar>& vars;
  FVar w(const std::string& conv) const { return vars[model.param_index(conv + ".w")]; }
  FVar b(const std::string& conv) const { return vars[model.param_index(conv + ".b")]; }
};

FVar conv_by_name(FTape& t, const ParamLookup& p, const ConvSpec& spec, FVar x) {
  return t.conv2d(x, p.w(spec.name), p.b(spec.name), spec.stride, spec.pad);
}

// (B, c, h, w) -> (B, k)
FVar encoder_forward(FTape& t, const ModelState& m, const ParamLookup& p, FVar x) {
  const ArchConfig& arch = m.arch;
  auto plan = conv_plan(arch);
  size_t cursor = 0;
  auto next = [&](const std::string& suffix) -> const ConvSpec& {
    const ConvSpec& s = plan.at(cursor++);
    DLLE_CHECK(s.name.size() >= suffix.size() &&
                   s.name.compare(s.name.size() - suffix.size(), suffix.size(), suffix) == 0,
               "internal: conv plan out of sync at ", s.name);
    return s;
  };
  if (arch.stem) x = apply_act(t, conv_by_name(t, p, next("stem"), x), arch);
  int64_t ch = arch.stem ? arch.stem->channels : arch.frame_shape[0];
  for (size_t b = 0; b < arch.encoder.size(); ++b) {
    const auto& blk = arch.encoder[b];
    FVar y = apply_act(t, conv_by_name(t, p, next(".conv1"), x), arch);
    y = conv_by_name(t, p, next(".conv2"), y);
    FVar skip = x;
    if (blk.stride != 1 || ch != blk.channels) skip = conv_by_name(t, p, next(".skip"), x);
    x = apply_act(t, t.add(y, skip), arch);
    ch = blk.channels;
  }
  const int64_t batch = t.shape(x)[0];
  return t.reshape(x, {batch, m.arch.latent_dim()});
}

// (R, k) -> (R, c, h, w) in [0,1]
FVar decoder_forward(FTape& t, const ModelState& m, const ParamLookup& p, FVar z, RunMode mode,
                     bool use_dropout, Rng& dropout_rng) {
  const ArchConfig& arch = m.arch;
  const Shape lat = arch.latent_shape();
  const int64_t rows = t.shape(z)[0];
  DLLE_CHECK(t.shape(z).size() == 2 && t.shape(z)[1] == arch.latent_dim(),
             "decode: latent dimension ", t.shape(z).back(), " does not match arch latent ",
             arch.latent_dim());
  auto plan = conv_plan(arch);
  size_t cursor = 0;
  while (cursor < plan.size() && plan[cursor].name.rfind("dec", 0) != 0) ++cursor;

  FVar x = t.reshape(z, {rows, lat[0], lat[1], lat[2]});
  for (size_t b = 0; b < arch.decoder.size(); ++b) {
    const auto& blk = arch.decoder[b];
    x = t.upsample_bicubic(x, blk.upsample);
    for (int64_t j = 0; j < blk.convs; ++j)
      x = apply_act(t, conv_by_name(t, p, plan.at(cursor++), x), arch);
    const bool drop_here =
        std::find(arch.dropout_after.begin(), arch.dropout_after.end(),
                  static_cast<int64_t>(b + 1)) != arch.dropout_after.end();
    if (drop_here && mode == RunMode::kFit && use_dropout && arch.dropout_p > 0)
      x = t.dropout(x, arch.dropout_p, mode, dropout_rng);
  }
  DLLE_CHECK(plan.at(cursor).name == "out", "internal: conv plan out of sync at output layer");
  x = t.tanh_act(conv_by_name(t, p, plan.at(cursor), x));
  return t.affine(x, 0.5f, 0.5f);  // tanh range mapped to [0,1]
}

std::vector<FVar> register_constants(FTape& t, const ModelState& m) {
  std::vector<FVar> vars;
  vars.reserve(m.params.size());
  for (const auto& p : m.params) vars.push_back(t.constant(p.value));
  return vars;
}

Tensor<float> node_pair(const Tensor<float>& frames) {
  const int64_t n = frames.dim(0);
  const int64_t fsz = frames.numel() / n;
  Tensor<float> nodes({2, frames.dim(1), frames.dim(2), frames.dim(3)});
  std::copy_n(frames.data(), fsz, nodes.data());
  std::copy_n(frames.data() + (n - 1) * fsz, fsz, nodes.data() + fsz);
  return nodes;
}

}  // namespace

int64_t ModelState::param_index(const std::string& name) const {
  for (size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return static_cast<int64_t>(i);
  fail_contract("model has no parameter named '", name, "'");
}

int64_t ModelState::num_scalars() const {
  int64_t n = 0;
  for (const auto& p : params) n += p.value.numel();
  return n;
}

ModelState build_model(const ArchConfig& arch, uint64_t seed) {
  arch.validate();
  ModelState m;
  m.arch = arch;
  m.seed = seed;
  Rng rng(derive_seed(seed, 0x1417));
  for (const auto& spec : conv_plan(arch)) {
    const int64_t fan_in = spec.cin * spec.kernel * spec.kernel;
    m.params.push_back(
        {spec.name + ".w",
         he_init<float>({spec.cout, spec.cin, spec.kernel, spec.kernel}, fan_in, rng)});
    m.params.push_back({spec.name + ".b", Tensor<float>({spec.cout})});
  }
  return m;
}

Rpm fit_rpm(int64_t interval_count) {
  DLLE_CHECK(interval_count >= 1, "fit_rpm: interval count must be >= 1, got ", interval_count);
  const int64_t rows = interval_count + 1;
  Rpm rpm;
  rpm.m = Tensor<double>({rows, 2});
  rpm.positions.resize(rows);
  for (int64_t j = 0; j < rows; ++j) {
    const double s = static_cast<double>(j) / static_cast<double>(interval_count);
    rpm.positions[j] = s;
    rpm.m.at(j * 2 + 0) = static_cast<double>(interval_count - j) / interval_count;
    rpm.m.at(j * 2 + 1) = s;
  }
  return rpm;
}

Rpm rpm_from_positions(const std::vector<double>& positions) {
  DLLE_CHECK(!positions.empty(), "rpm_from_positions: no positions given");
  Rpm rpm;
  rpm.m = Tensor<double>({static_cast<int64_t>(positions.size()), 2});
  rpm.positions = positions;
  for (size_t r = 0; r < positions.size(); ++r) {
    const double s = positions[r];
    DLLE_CHECK(s >= 0.0 && s <= 1.0, "rpm_from_positions: position ", s,
               " outside [0,1] (extrapolation unsupported)");
    rpm.m.at(r * 2 + 0) = 1.0 - s;
    rpm.m.at(r * 2 + 1) = s;
  }
  return rpm;
}

void FitConfig::validate() const {
  DLLE_CHECK(iterations >= 1, "fit: iterations must be >= 1, got ", iterations);
  DLLE_CHECK(learning_rate > 0, "fit: learning rate must be positive");
  DLLE_CHECK(weights.huber_delta > 0, "fit: huber delta must be positive");
  DLLE_CHECK(weights.lambda1 >= 0 && weights.lambda2 >= 0, "fit: loss weights must be nonnegative");
  if (lr_schedule)
    for (int64_t mst : milestones)
      DLLE_CHECK(mst >= 1 && mst < iterations, "fit: milestone ", mst,
                 " must lie in [1,iterations)");
}

FitResult fit(const FrameSequence& seq, ModelState& model, const FitConfig& cfg) {
  cfg.validate();
  seq.validate();
  DLLE_CHECK(seq.frame_shape() == model.arch.frame_shape, "fit: sequence frames ",
             shape_str(seq.frame_shape()), " do not match model frames ",
             shape_str(model.arch.frame_shape));
  const int64_t n_refs = seq.count();
  const int64_t interval_count = n_refs - 1;

  Tensor<float> refs01 = seq.all01();
  Tensor<float> mix;  // fitting RPM as float (n_refs x 2)
  Tensor<float> nodes;
  if (cfg.use_lle) {
    mix = fit_rpm(interval_count).m.cast<float>();
    nodes = node_pair(seq.frames);
  }

  std::vector<Tensor<float>*> param_ptrs;
  param_ptrs.reserve(model.params.size());
  for (auto& p : model.params) param_ptrs.push_back(&p.value);
  AdamState<float> opt = [&] {
    std::vector<Tensor<float>> vals;
    vals.reserve(model.params.size());
    for (auto& p : model.params) vals.push_back(p.value);
    return AdamState<float>::for_params(vals);
  }();

  Rng dropout_rng(derive_seed(cfg.seed, 0xD40));
  double lr = cfg.learning_rate;
  FitResult result;
  result.trace.reserve(cfg.iterations);

  for (int64_t it = 0; it < cfg.iterations; ++it) {
    if (cfg.lr_schedule)
      for (int64_t mst : cfg.milestones)
        if (it == mst) lr *= 0.5;

    FTape tape;
    std::vector<FVar> pvars;
    pvars.reserve(model.params.size());
    for (const auto& p : model.params) pvars.push_back(tape.parameter(p.value));
    ParamLookup lookup{model, pvars};

    FVar z_rows;
    if (cfg.use_lle) {
      FVar z_nodes = encoder_forward(tape, model, lookup, tape.constant(nodes));
      z_rows = tape.matmul(tape.constant(mix), z_nodes);
    } else {
      z_rows = encoder_forward(tape, model, lookup, tape.constant(seq.frames));
    }
    FVar recon = decoder_forward(tape, model, lookup, z_rows, RunMode::kFit, cfg.use_dropout,
                                 dropout_rng);
    FVar refs = tape.constant(refs01);
    auto terms = quality::composite_loss_terms(tape, refs, recon, cfg.weights);

    const double total = tape.value(terms.total).at(0);
    if (!std::isfinite(total))
      fail_runtime("fit: non-finite loss at iteration ", it, " (huber=",
                   tape.value(terms.huber).at(0), ", grad=", tape.value(terms.grad).at(0),
                   ", ssim=", tape.value(terms.ssim).at(0), ")");
    result.trace.push_back({it, total, tape.value(terms.huber).at(0),
                            tape.value(terms.grad).at(0), tape.value(terms.ssim).at(0), lr});

    auto grads = tape.backward(terms.total);
    adam_step<float>(param_ptrs, grads, opt, lr);
  }
  return result;
}

LatentCodes encode_nodes(const Tensor<float>& node_frames, const ModelState& model) {
  DLLE_CHECK(node_frames.rank() == 4 && node_frames.dim(0) == 2,
             "encode_nodes expects exactly 2 frames (2,c,h,w), got ",
             shape_str(node_frames.shape()));
  DLLE_CHECK(Shape({node_frames.dim(1), node_frames.dim(2), node_frames.dim(3)}) ==
                 model.arch.frame_shape,
             "encode_nodes: frames do not match model frame shape ",
             shape_str(model.arch.frame_shape));
  FTape tape;
  auto vars = register_constants(tape, model);
  ParamLookup lookup{model, vars};
  FVar z = encoder_forward(tape, model, lookup, tape.constant(node_frames));
  return LatentCodes{tape.value(z)};
}

Tensor<float> interpolate_latent(const Rpm& rpm, const LatentCodes& codes) {
  DLLE_CHECK(codes.z.rank() == 2 && codes.z.dim(0) == 2, "interpolate_latent: codes must be (2,k)");
  DLLE_CHECK(rpm.rows() >= 1 && rpm.m.dim(1) == 2, "interpolate_latent: RPM must be (rows,2)");
  const int64_t rows = rpm.rows();
  const int64_t k = codes.z.dim(1);
  Tensor<float> out({rows, k});
  const float* z0 = codes.z.data();
  const float* zn = codes.z.data() + k;
  for (int64_t r = 0; r < rows; ++r) {
    const double w0 = rpm.m.at(r * 2 + 0);
    const double w1 = rpm.m.at(r * 2 + 1);
    float* dst = out.data() + r * k;
    for (int64_t i = 0; i < k; ++i)
      dst[i] = static_cast<float>(w0 * static_cast<double>(z0[i]) +
                                  w1 * static_cast<double>(zn[i]));
  }
  return out;
}

Tensor<float> decode(const Tensor<float>& latent_rows, const ModelState& model, RunMode mode,
                     Rng* dropout_rng) {
  DLLE_CHECK(latent_rows.rank() == 2, "decode: latent rows must be (rows,k), got ",
             shape_str(latent_rows.shape()));
  FTape tape;
  auto vars = register_constants(tape, model);
  ParamLookup lookup{model, vars};
  Rng local(derive_seed(model.seed, 0xDEC0));
  Rng& rng = dropout_rng ? *dropout_rng : local;
  FVar out = decoder_forward(tape, model, lookup, tape.constant(latent_rows), mode, true, rng);
  return tape.value(out);
}

Tensor<float> synthesize(const ModelState& model, const LatentCodes& codes, const Rpm& rpm) {
  return decode(interpolate_latent(rpm, codes), model, RunMode::kInference);
}

}  // namespace deeplle
