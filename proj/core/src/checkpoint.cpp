#include <cstring>
#include <filesystem>
#include <fstream>

#include "glyphforge/trainer.hpp"

namespace glyphforge {

namespace {

constexpr char kMagic[4] = {'G', 'F', 'C', 'K'};
constexpr char kTrailer[4] = {'K', 'C', 'F', 'G'};

template <class T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint truncated");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto len = get<std::uint16_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw DataError("checkpoint truncated");
  return s;
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> get_floats(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  std::vector<float> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw DataError("checkpoint truncated");
  return v;
}

void put_config(std::ostream& out, const ModelConfig& c) {
  for (const int v : {c.d_prime, c.style_tokens, c.global_tokens, c.heads, c.mixtures,
                      c.style_samples, c.max_points, c.image_h, c.image_w, c.char_vocab,
                      c.struct_vocab, c.compo_vocab, c.max_struct_tokens})
    put<std::int32_t>(out, v);
}

ModelConfig get_config(std::istream& in) {
  ModelConfig c;
  for (int* field : {&c.d_prime, &c.style_tokens, &c.global_tokens, &c.heads, &c.mixtures,
                     &c.style_samples, &c.max_points, &c.image_h, &c.image_w, &c.char_vocab,
                     &c.struct_vocab, &c.compo_vocab, &c.max_struct_tokens})
    *field = get<std::int32_t>(in);
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp);
    out.write(kMagic, 4);
    put<std::uint32_t>(out, ckpt.format_version);
    put_config(out, ckpt.model);
    put<std::int32_t>(out, ckpt.stage);
    put<std::uint64_t>(out, ckpt.step);
    put<std::uint64_t>(out, ckpt.train_seed);
    put<std::uint64_t>(out, ckpt.adam_t);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, tensor] : ckpt.params) {
      put_string(out, name);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.shape.size()));
      for (const int d : tensor.shape) put<std::int32_t>(out, d);
      put_floats(out, tensor.v);
    }
    put<std::uint8_t>(out, ckpt.adam_m.empty() ? 0 : 1);
    if (!ckpt.adam_m.empty()) {
      put_floats(out, ckpt.adam_m);
      put_floats(out, ckpt.adam_v);
    }
    out.write(kTrailer, 4);
    if (!out) throw DataError("checkpoint write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a glyphforge checkpoint: " + path);

  Checkpoint ckpt;
  ckpt.format_version = get<std::uint32_t>(in);
  if (ckpt.format_version != 1)
    throw DataError("unsupported checkpoint version " + std::to_string(ckpt.format_version));
  ckpt.model = get_config(in);
  ckpt.stage = get<std::int32_t>(in);
  ckpt.step = get<std::uint64_t>(in);
  ckpt.train_seed = get<std::uint64_t>(in);
  ckpt.adam_t = get<std::uint64_t>(in);
  const auto n_params = get<std::uint32_t>(in);
  std::int64_t total = 0;
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::string name = get_string(in);
    const auto ndims = get<std::uint32_t>(in);
    ag::Shape shape;
    for (std::uint32_t k = 0; k < ndims; ++k) shape.push_back(get<std::int32_t>(in));
    auto values = get_floats(in);
    if (static_cast<std::int64_t>(values.size()) != ag::shape_numel(shape))
      throw DataError("checkpoint blob does not match manifest for " + name);
    total += static_cast<std::int64_t>(values.size());
    ckpt.params.push_back({name, ag::TensorT<float>(std::move(shape), std::move(values))});
  }
  const auto has_moments = get<std::uint8_t>(in);
  if (has_moments) {
    ckpt.adam_m = get_floats(in);
    ckpt.adam_v = get_floats(in);
    if (static_cast<std::int64_t>(ckpt.adam_m.size()) != total ||
        static_cast<std::int64_t>(ckpt.adam_v.size()) != total)
      throw DataError("checkpoint optimizer state does not match parameters");
  }
  char trailer[4];
  in.read(trailer, 4);
  if (!in || std::memcmp(trailer, kTrailer, 4) != 0) throw DataError("checkpoint truncated");
  return ckpt;
}

}  // namespace glyphforge
