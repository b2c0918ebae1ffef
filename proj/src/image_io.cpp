#include "deeplle/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "deeplle/check.hpp"

namespace fs = std::filesystem;

namespace deeplle::io {

namespace {

struct Image8 {
  int64_t w = 0, h = 0;
  std::vector<uint8_t> rgb;  // h*w*3
};

uint8_t quantize(float v) {
  float x = v * 255.0f;
  if (x <= 0.0f) return 0;
  if (x >= 255.0f) return 255;
  return static_cast<uint8_t>(std::lround(x));
}

// ---- PNG ----

struct PngCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, PngCloser>;

Image8 read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail_runtime("cannot open image '", path, "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail_runtime("libpng allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail_runtime("libpng allocation failed");
  }
  Image8 img;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_runtime("failed to decode PNG '", path, "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img.w = w;
  img.h = h;
  img.rgb.resize(static_cast<size_t>(w) * h * 3);
  row_ptrs.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = img.rgb.data() + static_cast<size_t>(y) * w * 3;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const Image8& img, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail_runtime("cannot open '", path, "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail_runtime("libpng allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail_runtime("libpng allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail_runtime("failed to encode PNG '", path, "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < img.h; ++y)
    png_write_row(png, const_cast<png_bytep>(img.rgb.data() + y * img.w * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// ---- binary PPM (P6, 8-bit) ----

Image8 read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_runtime("cannot open image '", path, "'");
  std::string magic;
  f >> magic;
  if (magic != "P6") fail_runtime("'", path, "' is not a binary PPM (P6)");
  auto next_token = [&]() -> int64_t {
    // skips whitespace and # comments
    while (true) {
      int c = f.peek();
      if (c == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(c)) {
        f.get();
      } else {
        break;
      }
    }
    int64_t v;
    f >> v;
    if (!f) fail_runtime("malformed PPM header in '", path, "'");
    return v;
  };
  Image8 img;
  img.w = next_token();
  img.h = next_token();
  const int64_t maxval = next_token();
  if (maxval != 255) fail_runtime("unsupported PPM maxval ", maxval, " in '", path, "'");
  f.get();  // single whitespace after header
  img.rgb.resize(static_cast<size_t>(img.w) * img.h * 3);
  f.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (static_cast<size_t>(f.gcount()) != img.rgb.size())
    fail_runtime("truncated PPM data in '", path, "'");
  return img;
}

void write_ppm(const Image8& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail_runtime("cannot open '", path, "' for writing");
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.rgb.data()),
          static_cast<std::streamsize>(img.rgb.size()));
  if (!f) fail_runtime("short write to '", path, "'");
}

std::string lower_ext(const std::string& path) {
  std::string e = fs::path(path).extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

Image8 read_any(const std::string& path) {
  const std::string e = lower_ext(path);
  if (e == ".png") return read_png(path);
  if (e == ".ppm") return read_ppm(path);
  fail_runtime("unsupported image format '", e, "' for '", path, "' (png and ppm are supported)");
}

bool simple_glob(const std::string& pat, const std::string& name) {
  size_t p = 0, n = 0, star = std::string::npos, mark = 0;
  while (n < name.size()) {
    if (p < pat.size() && (pat[p] == '?' || pat[p] == name[n])) {
      ++p;
      ++n;
    } else if (p < pat.size() && pat[p] == '*') {
      star = p++;
      mark = n;
    } else if (star != std::string::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pat.size() && pat[p] == '*') ++p;
  return p == pat.size();
}

}  // namespace

Tensor<float> load_image01(const std::string& path) {
  Image8 img = read_any(path);
  Tensor<float> out({3, img.h, img.w});
  const int64_t hw = img.h * img.w;
  for (int64_t i = 0; i < hw; ++i)
    for (int64_t c = 0; c < 3; ++c)
      out.at(c * hw + i) = static_cast<float>(img.rgb[i * 3 + c]) / 255.0f;
  return out;
}

void save_image01(const Tensor<float>& img, const std::string& path) {
  DLLE_CHECK(img.rank() == 3 && img.dim(0) == 3, "save_image01 expects (3,h,w), got ",
             shape_str(img.shape()));
  Image8 out;
  out.h = img.dim(1);
  out.w = img.dim(2);
  const int64_t hw = out.h * out.w;
  out.rgb.resize(static_cast<size_t>(hw) * 3);
  for (int64_t i = 0; i < hw; ++i)
    for (int64_t c = 0; c < 3; ++c) out.rgb[i * 3 + c] = quantize(img.at(c * hw + i));
  const std::string e = lower_ext(path);
  if (e == ".png")
    write_png(out, path);
  else if (e == ".ppm")
    write_ppm(out, path);
  else
    fail_runtime("unsupported output image format '", e, "'");
}

FrameSequence load_frames(const std::string& pattern) {
  std::vector<std::string> files;
  fs::path pat(pattern);
  std::error_code ec;
  if (fs::is_directory(pat, ec)) {
    for (const auto& entry : fs::directory_iterator(pat)) {
      if (!entry.is_regular_file()) continue;
      const std::string e = lower_ext(entry.path().string());
      if (e == ".png" || e == ".ppm") files.push_back(entry.path().string());
    }
  } else {
    const fs::path dir = pat.parent_path().empty() ? fs::path(".") : pat.parent_path();
    const std::string leaf = pat.filename().string();
    DLLE_CHECK(fs::is_directory(dir, ec), "load_frames: no directory '", dir.string(), "'");
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      if (simple_glob(leaf, entry.path().filename().string()))
        files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2)
    fail_runtime("load_frames: found ", files.size(), " image(s) for '", pattern,
                 "', need at least 2");

  FrameSequence seq;
  Tensor<float> first = load_image01(files[0]);
  const int64_t c = 3, h = first.dim(1), w = first.dim(2);
  seq.frames = Tensor<float>({static_cast<int64_t>(files.size()), c, h, w});
  seq.names.reserve(files.size());
  for (size_t idx = 0; idx < files.size(); ++idx) {
    Tensor<float> img = (idx == 0) ? first : load_image01(files[idx]);
    if (!(img.shape() == first.shape()))
      fail_runtime("load_frames: '", files[idx], "' has shape ", shape_str(img.shape()),
                   " but '", files[0], "' has ", shape_str(first.shape()));
    float* dst = seq.frames.data() + static_cast<int64_t>(idx) * c * h * w;
    for (int64_t i = 0; i < img.numel(); ++i) dst[i] = 2.0f * img.at(i) - 1.0f;
    seq.names.push_back(fs::path(files[idx]).filename().string());
  }
  return seq;
}

std::vector<std::string> save_frames(const Tensor<float>& frames01, const std::string& dir,
                                     const std::string& format) {
  DLLE_CHECK(frames01.rank() == 4 && frames01.dim(1) == 3,
             "save_frames expects (n,3,h,w), got ", shape_str(frames01.shape()));
  DLLE_CHECK(format == "png" || format == "ppm", "save_frames: format must be png or ppm, got '",
             format, "'");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir))
    fail_runtime("save_frames: cannot create output directory '", dir, "'");
  const int64_t n = frames01.dim(0);
  const int64_t fsz = frames01.numel() / n;
  std::vector<std::string> paths;
  paths.reserve(n);
  for (int64_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04lld.%s", static_cast<long long>(i),
                  format.c_str());
    const std::string path = (fs::path(dir) / name).string();
    Tensor<float> img({3, frames01.dim(2), frames01.dim(3)});
    std::copy_n(frames01.data() + i * fsz, fsz, img.data());
    save_image01(img, path);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace deeplle::io
