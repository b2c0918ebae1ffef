#pragma once

#include <string>

#include "deeplle/frames.hpp"
#include "deeplle/tensor.hpp"

namespace deeplle::synth {

enum class Kind { kTranslatingSquare, kTwoSquares, kRotatingGradient };

Kind kind_from_string(const std::string& s);
std::string kind_to_string(Kind k);

struct GenParams {
  double vx = 2.0;            // px/frame, translating square (and first of two)
  double vy = 0.0;
  double square_frac = 0.3;   // square side relative to frame size
  double spin_deg = 5.0;      // rotating gradient, degrees/frame
};

// Frame (1,3,size,size) in [-1,1] at any fractional time t. The same
// renderer produces the integer-time frames, so held-out ground truth is
// exact by construction.
Tensor<float> render_at(Kind kind, const GenParams& p, int64_t size, uint64_t seed, double t);

// Frames at t = 0..count-1. Rejects motion larger than size/4 per frame.
FrameSequence gen_synthetic(Kind kind, const GenParams& p, int64_t count, int64_t size,
                            uint64_t seed);

}  // namespace deeplle::synth
