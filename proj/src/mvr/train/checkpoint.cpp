#include "mvr/train/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mvr/train/config.hpp"

namespace mvr {

namespace {

void write_bytes(std::ofstream& f, const void* p, size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void write_pod(std::ofstream& f, T v) {
  write_bytes(f, &v, sizeof(T));
}

void read_bytes(std::ifstream& f, void* p, size_t n, const std::string& path) {
  f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(f.gcount()) != n)
    throw std::runtime_error("checkpoint: truncated file " + path);
}

template <class T>
T read_pod(std::ifstream& f, const std::string& path) {
  T v;
  read_bytes(f, &v, sizeof(T), path);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const AdamW<float>* opt, const std::string& config_text, uint32_t step) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  f.write("MVCK", 4);
  write_pod(f, kCheckpointVersion);
  write_pod(f, fnv1a64(config_text));
  write_pod(f, static_cast<uint32_t>(config_text.size()));
  write_bytes(f, config_text.data(), config_text.size());
  write_pod(f, step);
  write_pod(f, static_cast<uint32_t>(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name_at(i);
    const auto& t = params.at(i);
    write_pod(f, static_cast<uint16_t>(name.size()));
    write_bytes(f, name.data(), name.size());
    write_pod(f, static_cast<uint8_t>(t.shape.size()));
    for (int d : t.shape) write_pod(f, static_cast<uint32_t>(d));
    write_bytes(f, t.data.data(), t.data.size() * sizeof(float));
  }
  write_pod(f, static_cast<uint8_t>(opt ? 1 : 0));
  if (opt) {
    auto* mut = const_cast<AdamW<float>*>(opt);
    write_pod(f, static_cast<uint64_t>(mut->steps_taken()));
    for (auto& m : mut->moments1()) write_bytes(f, m.data(), m.size() * sizeof(float));
    for (auto& v : mut->moments2()) write_bytes(f, v.data(), v.size() * sizeof(float));
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

namespace {

CheckpointInfo read_header(std::ifstream& f, const std::string& path) {
  char magic[4];
  read_bytes(f, magic, 4, path);
  if (std::memcmp(magic, "MVCK", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = read_pod<uint32_t>(f, path);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) + " in " +
                             path);
  CheckpointInfo info;
  info.config_hash = read_pod<uint64_t>(f, path);
  const uint32_t text_len = read_pod<uint32_t>(f, path);
  if (text_len > (1u << 20)) throw std::runtime_error("checkpoint: implausible config size in " + path);
  info.config_text.resize(text_len);
  read_bytes(f, info.config_text.data(), text_len, path);
  if (fnv1a64(info.config_text) != info.config_hash)
    throw std::runtime_error("checkpoint: config text does not match stored hash in " + path);
  info.step = read_pod<uint32_t>(f, path);
  return info;
}

}  // namespace

CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  return read_header(f, path);
}

CheckpointInfo load_checkpoint(const std::string& path, ParamStore<float>& params,
                               AdamW<float>* opt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  CheckpointInfo info = read_header(f, path);

  const uint32_t count = read_pod<uint32_t>(f, path);
  if (count != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path + " (file " +
                             std::to_string(count) + ", model " + std::to_string(params.size()) + ")");
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t nl = read_pod<uint16_t>(f, path);
    std::string name(nl, '\0');
    read_bytes(f, name.data(), nl, path);
    if (name != params.name_at(i))
      throw std::runtime_error("checkpoint: parameter order mismatch at '" + name + "' in " + path);
    const uint8_t nd = read_pod<uint8_t>(f, path);
    std::vector<int> shape(nd);
    for (auto& d : shape) d = static_cast<int>(read_pod<uint32_t>(f, path));
    auto& t = params.at(i);
    if (shape != t.shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "' in " + path);
    read_bytes(f, t.data.data(), t.data.size() * sizeof(float), path);
  }
  info.has_optimizer = read_pod<uint8_t>(f, path) != 0;
  if (info.has_optimizer && opt) {
    opt->init(params);
    opt->set_steps_taken(static_cast<long>(read_pod<uint64_t>(f, path)));
    for (auto& m : opt->moments1()) read_bytes(f, m.data(), m.size() * sizeof(float), path);
    for (auto& v : opt->moments2()) read_bytes(f, v.data(), v.size() * sizeof(float), path);
  }
  return info;
}

}  // namespace mvr
