#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "deeplle/model.hpp"

namespace deeplle {

namespace {

constexpr char kMagic[8] = {'D', 'L', 'L', 'E', 'm', 'd', 'l', '1'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(byte()) << (8 * i);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(char* dst, size_t n) {
    need(n);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }
  bool exhausted() const { return pos_ == buf_.size(); }

 private:
  uint8_t byte() { return static_cast<uint8_t>(buf_[pos_++]); }
  void need(size_t n) {
    if (pos_ + n > buf_.size()) fail_runtime("checkpoint '", path_, "' is truncated");
  }
  const std::string& buf_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ModelState& model, const std::string& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, 1);  // version
  put_u64(out, model.seed);

  const ArchConfig& a = model.arch;
  for (int64_t e : a.frame_shape) put_u32(out, static_cast<uint32_t>(e));
  put_str(out, activation_to_string(a.activation));
  put_f64(out, a.lrelu_slope);
  put_u32(out, a.stem ? 1 : 0);
  if (a.stem) {
    put_u32(out, static_cast<uint32_t>(a.stem->channels));
    put_u32(out, static_cast<uint32_t>(a.stem->kernel));
    put_u32(out, static_cast<uint32_t>(a.stem->stride));
  }
  put_u32(out, static_cast<uint32_t>(a.encoder.size()));
  for (const auto& b : a.encoder) {
    put_u32(out, static_cast<uint32_t>(b.channels));
    put_u32(out, static_cast<uint32_t>(b.stride));
  }
  put_u32(out, static_cast<uint32_t>(a.decoder.size()));
  for (const auto& b : a.decoder) {
    put_u32(out, static_cast<uint32_t>(b.convs));
    put_u32(out, static_cast<uint32_t>(b.channels));
    put_u32(out, static_cast<uint32_t>(b.upsample));
  }
  put_u32(out, static_cast<uint32_t>(a.decoder_kernel));
  put_u32(out, static_cast<uint32_t>(a.dropout_after.size()));
  for (int64_t d : a.dropout_after) put_u32(out, static_cast<uint32_t>(d));
  put_f64(out, a.dropout_p);

  put_u32(out, static_cast<uint32_t>(model.params.size()));
  for (const auto& p : model.params) {
    put_str(out, p.name);
    put_u32(out, static_cast<uint32_t>(p.value.rank()));
    for (size_t i = 0; i < p.value.rank(); ++i) put_u64(out, static_cast<uint64_t>(p.value.dim(i)));
    for (int64_t i = 0; i < p.value.numel(); ++i) put_f32(out, p.value.at(i));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail_runtime("cannot open checkpoint path '", path, "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail_runtime("short write to checkpoint '", path, "'");
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_runtime("cannot open checkpoint '", path, "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(buf, path);

  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    fail_runtime("'", path, "' is not a model checkpoint (bad magic)");
  const uint32_t version = r.u32();
  if (version != 1) fail_runtime("unsupported checkpoint version ", version, " in '", path, "'");

  ModelState m;
  m.seed = r.u64();
  ArchConfig a;
  a.frame_shape = {static_cast<int64_t>(r.u32()), static_cast<int64_t>(r.u32()),
                   static_cast<int64_t>(r.u32())};
  a.activation = activation_from_string(r.str());
  a.lrelu_slope = r.f64();
  if (r.u32()) {
    StemSpec s;
    s.channels = r.u32();
    s.kernel = r.u32();
    s.stride = r.u32();
    a.stem = s;
  }
  a.encoder.resize(r.u32());
  for (auto& b : a.encoder) {
    b.channels = r.u32();
    b.stride = r.u32();
  }
  a.decoder.resize(r.u32());
  for (auto& b : a.decoder) {
    b.convs = r.u32();
    b.channels = r.u32();
    b.upsample = r.u32();
  }
  a.decoder_kernel = r.u32();
  a.dropout_after.resize(r.u32());
  for (auto& d : a.dropout_after) d = r.u32();
  a.dropout_p = r.f64();
  a.validate();
  m.arch = a;

  const uint32_t n_params = r.u32();
  m.params.reserve(n_params);
  for (uint32_t i = 0; i < n_params; ++i) {
    ParamTensor p;
    p.name = r.str();
    Shape shape(r.u32());
    for (auto& e : shape) e = static_cast<int64_t>(r.u64());
    Tensor<float> t(shape);
    for (int64_t j = 0; j < t.numel(); ++j) t.at(j) = r.f32();
    p.value = std::move(t);
    m.params.push_back(std::move(p));
  }
  if (!r.exhausted()) fail_runtime("trailing bytes in checkpoint '", path, "'");

  // shapes must agree with what the arch would create
  ModelState ref = build_model(a, m.seed);
  if (ref.params.size() != m.params.size())
    fail_runtime("checkpoint '", path, "' parameter count does not match its architecture");
  for (size_t i = 0; i < ref.params.size(); ++i) {
    if (ref.params[i].name != m.params[i].name ||
        !(ref.params[i].value.shape() == m.params[i].value.shape()))
      fail_runtime("checkpoint '", path, "' parameter ", m.params[i].name,
                   " inconsistent with its architecture");
  }
  return m;
}

}  // namespace deeplle
