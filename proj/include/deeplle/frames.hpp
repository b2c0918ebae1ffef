#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "deeplle/check.hpp"
#include "deeplle/tensor.hpp"

namespace deeplle {

// Ordered, temporally uniform frames in [-1,1], shape (count, c, h, w).
struct FrameSequence {
  Tensor<float> frames;
  std::vector<std::string> names;

  int64_t count() const { return frames.empty() ? 0 : frames.dim(0); }
  Shape frame_shape() const { return {frames.dim(1), frames.dim(2), frames.dim(3)}; }

  void validate() const {
    DLLE_CHECK(frames.rank() == 4, "frame sequence must be (count,c,h,w), got ",
               shape_str(frames.shape()));
    DLLE_CHECK(frames.dim(0) >= 2, "frame sequence needs at least 2 frames, got ", frames.dim(0));
    for (int64_t i = 0; i < frames.numel(); ++i) {
      const float v = frames.at(i);
      DLLE_CHECK(std::isfinite(v) && v >= -1.0001f && v <= 1.0001f,
                 "frame values must be finite and in [-1,1], found ", v);
    }
  }

  // Single frame as (1,c,h,w), mapped to [0,1].
  Tensor<float> frame01(int64_t idx) const {
    DLLE_CHECK(idx >= 0 && idx < count(), "frame index ", idx, " out of range");
    const int64_t fsz = frames.numel() / count();
    Tensor<float> out({1, frames.dim(1), frames.dim(2), frames.dim(3)});
    const float* src = frames.data() + idx * fsz;
    for (int64_t i = 0; i < fsz; ++i) out.at(i) = 0.5f * src[i] + 0.5f;
    return out;
  }

  // All frames mapped from [-1,1] to [0,1].
  Tensor<float> all01() const {
    Tensor<float> out(frames.shape());
    for (int64_t i = 0; i < frames.numel(); ++i) out.at(i) = 0.5f * frames.at(i) + 0.5f;
    return out;
  }
};

}  // namespace deeplle
