#include "mvr/synth/dataset.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace mvr {

namespace {

enum class Dtype : uint8_t { kF32 = 0, kF64 = 1, kU8 = 2 };

struct ArrayRef {
  std::string name;
  Dtype dtype;
  std::vector<uint32_t> dims;
  const void* data;
  size_t bytes;
};

size_t dtype_size(Dtype d) { return d == Dtype::kF64 ? 8 : (d == Dtype::kF32 ? 4 : 1); }

class Writer {
 public:
  explicit Writer(const std::string& path) : f_(path, std::ios::binary) {
    if (!f_) throw std::runtime_error("dataset: cannot open " + path + " for writing");
  }
  void raw(const void* p, size_t n) { f_.write(static_cast<const char*>(p), n); }
  template <class T>
  void pod(T v) {
    raw(&v, sizeof(T));
  }
  void finish(const std::string& path) {
    if (!f_) throw std::runtime_error("dataset: write failed for " + path);
  }

 private:
  std::ofstream f_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), f_(path, std::ios::binary) {
    if (!f_) throw std::runtime_error("dataset: cannot open " + path);
  }
  void raw(void* p, size_t n) {
    f_.read(static_cast<char*>(p), n);
    if (static_cast<size_t>(f_.gcount()) != n)
      throw std::runtime_error("dataset: truncated file " + path_ + " at byte offset " +
                               std::to_string(offset_ + f_.gcount()));
    offset_ += n;
  }
  template <class T>
  T pod() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  size_t offset() const { return offset_; }

 private:
  std::string path_;
  std::ifstream f_;
  size_t offset_ = 0;
};

void write_array(Writer& w, const ArrayRef& a) {
  const uint16_t nl = static_cast<uint16_t>(a.name.size());
  w.pod(nl);
  w.raw(a.name.data(), nl);
  w.pod(static_cast<uint8_t>(a.dtype));
  w.pod(static_cast<uint8_t>(a.dims.size()));
  size_t numel = 1;
  for (uint32_t d : a.dims) {
    w.pod(d);
    numel *= d;
  }
  if (numel * dtype_size(a.dtype) != a.bytes)
    throw std::logic_error("dataset: array byte-size mismatch for " + a.name);
  w.raw(a.data, a.bytes);
}

struct LoadedArray {
  Dtype dtype;
  std::vector<uint32_t> dims;
  std::vector<char> payload;
  size_t numel() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
  const double* f64() const { return reinterpret_cast<const double*>(payload.data()); }
  const float* f32() const { return reinterpret_cast<const float*>(payload.data()); }
  const uint8_t* u8() const { return reinterpret_cast<const uint8_t*>(payload.data()); }
};

}  // namespace

void write_sample(const std::string& path, const SceneSample& s) {
  Writer w(path);
  w.raw("VGTS", 4);
  w.pod(kDatasetVersion);
  w.pod(static_cast<uint64_t>(s.seed));

  std::vector<double> cams(static_cast<size_t>(s.N) * 9);
  for (int f = 0; f < s.N; ++f) {
    const auto v = s.cams[f].as_vec9();
    std::copy(v.begin(), v.end(), cams.begin() + static_cast<size_t>(f) * 9);
  }
  std::vector<double> depth, pmap;
  std::vector<uint8_t> mask;
  for (int f = 0; f < s.N; ++f) {
    depth.insert(depth.end(), s.depth[f].d.begin(), s.depth[f].d.end());
    pmap.insert(pmap.end(), s.pmap[f].p.begin(), s.pmap[f].p.end());
    mask.insert(mask.end(), s.mask[f].m.begin(), s.mask[f].m.end());
  }

  const uint32_t nN = static_cast<uint32_t>(s.N), nH = static_cast<uint32_t>(s.H),
                 nW = static_cast<uint32_t>(s.W), nM = static_cast<uint32_t>(s.M);
  std::vector<ArrayRef> arrays{
      {"images", Dtype::kF32, {nN, 3, nH, nW}, s.images.data(), s.images.size() * 4},
      {"cameras", Dtype::kF64, {nN, 9}, cams.data(), cams.size() * 8},
      {"depth", Dtype::kF64, {nN, nH, nW}, depth.data(), depth.size() * 8},
      {"pmap", Dtype::kF64, {nN, 3, nH, nW}, pmap.data(), pmap.size() * 8},
      {"mask", Dtype::kU8, {nN, nH, nW}, mask.data(), mask.size()},
      {"queries", Dtype::kF64, {nM, 2}, s.queries.data(), s.queries.size() * 8},
      {"track_pos", Dtype::kF64, {nM, nN, 2}, s.track_pos.data(), s.track_pos.size() * 8},
      {"track_depth", Dtype::kF64, {nM, nN}, s.track_depth.data(), s.track_depth.size() * 8},
      {"track_vis", Dtype::kU8, {nM, nN}, s.track_vis.data(), s.track_vis.size()},
  };
  w.pod(static_cast<uint32_t>(arrays.size()));
  for (const auto& a : arrays) write_array(w, a);
  w.finish(path);
}

SceneSample read_sample(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "VGTS", 4) != 0)
    throw std::runtime_error("dataset: bad magic in " + path + " at byte offset 0");
  const uint32_t version = r.pod<uint32_t>();
  if (version != kDatasetVersion)
    throw std::runtime_error("dataset: unsupported format version " + std::to_string(version) +
                             " in " + path + " (expected " + std::to_string(kDatasetVersion) + ")");
  const uint64_t seed = r.pod<uint64_t>();
  const uint32_t count = r.pod<uint32_t>();
  if (count > 64) throw std::runtime_error("dataset: implausible array count in " + path);

  std::map<std::string, LoadedArray> arrays;
  for (uint32_t k = 0; k < count; ++k) {
    const uint16_t nl = r.pod<uint16_t>();
    std::string name(nl, '\0');
    r.raw(name.data(), nl);
    LoadedArray a;
    const uint8_t dt = r.pod<uint8_t>();
    if (dt > 2)
      throw std::runtime_error("dataset: unknown dtype " + std::to_string(dt) + " in " + path +
                               " at byte offset " + std::to_string(r.offset() - 1));
    a.dtype = static_cast<Dtype>(dt);
    const uint8_t nd = r.pod<uint8_t>();
    a.dims.resize(nd);
    for (auto& d : a.dims) d = r.pod<uint32_t>();
    a.payload.resize(a.numel() * dtype_size(a.dtype));
    r.raw(a.payload.data(), a.payload.size());
    arrays.emplace(std::move(name), std::move(a));
  }

  auto need = [&](const std::string& name, Dtype dt) -> const LoadedArray& {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw std::runtime_error("dataset: missing array '" + name + "' in " + path);
    if (it->second.dtype != dt)
      throw std::runtime_error("dataset: array '" + name + "' has wrong dtype in " + path);
    return it->second;
  };

  const auto& images = need("images", Dtype::kF32);
  const auto& cams = need("cameras", Dtype::kF64);
  const auto& depth = need("depth", Dtype::kF64);
  const auto& pmap = need("pmap", Dtype::kF64);
  const auto& mask = need("mask", Dtype::kU8);
  const auto& queries = need("queries", Dtype::kF64);
  const auto& tpos = need("track_pos", Dtype::kF64);
  const auto& tdepth = need("track_depth", Dtype::kF64);
  const auto& tvis = need("track_vis", Dtype::kU8);

  SceneSample s;
  s.seed = seed;
  if (images.dims.size() != 4) throw std::runtime_error("dataset: images must be [N,3,H,W] in " + path);
  s.N = static_cast<int>(images.dims[0]);
  s.H = static_cast<int>(images.dims[2]);
  s.W = static_cast<int>(images.dims[3]);
  s.M = static_cast<int>(queries.dims.empty() ? 0 : queries.dims[0]);
  s.images.assign(images.f32(), images.f32() + images.numel());

  const size_t hw = static_cast<size_t>(s.H) * s.W;
  for (int f = 0; f < s.N; ++f) {
    s.cams.push_back(CameraParams::from_vec9(cams.f64() + static_cast<size_t>(f) * 9));
    DepthMap D{s.H, s.W, std::vector<double>(depth.f64() + f * hw, depth.f64() + (f + 1) * hw)};
    PointMap P{s.H, s.W,
               std::vector<double>(pmap.f64() + static_cast<size_t>(f) * 3 * hw,
                                   pmap.f64() + static_cast<size_t>(f + 1) * 3 * hw)};
    MaskMap Mk{s.H, s.W, std::vector<uint8_t>(mask.u8() + f * hw, mask.u8() + (f + 1) * hw)};
    s.depth.push_back(std::move(D));
    s.pmap.push_back(std::move(P));
    s.mask.push_back(std::move(Mk));
  }
  s.queries.assign(queries.f64(), queries.f64() + queries.numel());
  s.track_pos.assign(tpos.f64(), tpos.f64() + tpos.numel());
  s.track_depth.assign(tdepth.f64(), tdepth.f64() + tdepth.numel());
  s.track_vis.assign(tvis.u8(), tvis.u8() + tvis.numel());
  return s;
}

void write_dataset(const std::vector<SceneSample>& samples, const std::string& dir) {
  if (samples.empty()) throw std::invalid_argument("write_dataset: no samples");
  fs::create_directories(fs::path(dir) / "scenes");
  std::ofstream mf(fs::path(dir) / "manifest.txt");
  if (!mf) throw std::runtime_error("write_dataset: cannot write manifest in " + dir);
  mf << "version = " << kDatasetVersion << "\n";
  mf << "scenes = " << samples.size() << "\n";
  mf << "frames = " << samples[0].N << "\n";
  mf << "height = " << samples[0].H << "\n";
  mf << "width = " << samples[0].W << "\n";
  mf << "queries = " << samples[0].M << "\n";
  for (size_t i = 0; i < samples.size(); ++i) {
    mf << "seed_" << i << " = " << samples[i].seed << "\n";
    const std::string name = "scene_" + std::to_string(samples[i].seed) + ".vgts";
    write_sample((fs::path(dir) / "scenes" / name).string(), samples[i]);
  }
  if (!mf) throw std::runtime_error("write_dataset: manifest write failed in " + dir);
}

std::vector<SceneSample> read_dataset(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.txt");
  if (!mf) throw std::runtime_error("read_dataset: missing manifest.txt in " + dir);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(mf, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  if (!kv.count("scenes")) throw std::runtime_error("read_dataset: manifest lacks 'scenes' in " + dir);
  const size_t n = std::stoul(kv.at("scenes"));
  std::vector<SceneSample> out;
  for (size_t i = 0; i < n; ++i) {
    const auto it = kv.find("seed_" + std::to_string(i));
    if (it == kv.end())
      throw std::runtime_error("read_dataset: manifest lacks seed_" + std::to_string(i));
    const std::string name = "scene_" + it->second + ".vgts";
    out.push_back(read_sample((fs::path(dir) / "scenes" / name).string()));
  }
  return out;
}

}  // namespace mvr
