#pragma once

#include <string>
#include <vector>

#include "deeplle/frames.hpp"
#include "deeplle/tensor.hpp"

namespace deeplle::io {

// Single RGB image as (3, h, w) in [0,1]. PNG or binary PPM by extension.
Tensor<float> load_image01(const std::string& path);
void save_image01(const Tensor<float>& img, const std::string& path);

// Load >= 2 images into a sequence in [-1,1]. `pattern` is a directory (all
// supported images inside) or a glob with * / ? in the filename part.
// Lexicographic filename order is temporal order.
FrameSequence load_frames(const std::string& pattern);

// Write (n, 3, h, w) frames in [0,1] as frame_0000.<format> ... under dir.
// format is "png" or "ppm". Returns the written paths.
std::vector<std::string> save_frames(const Tensor<float>& frames01, const std::string& dir,
                                     const std::string& format = "png");

}  // namespace deeplle::io
