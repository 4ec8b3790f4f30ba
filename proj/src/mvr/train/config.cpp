#include "mvr/train/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mvr {

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void TrainConfig::validate() const {
  model.validate();
  if (total_steps < 0) throw std::invalid_argument("config: total_steps must be >= 0");
  if (effective_warmup() > std::max(total_steps, 1))
    throw std::invalid_argument("config: warmup_steps must not exceed total_steps");
  if (clip_norm <= 0) throw std::invalid_argument("config: clip_norm must be positive");
  if (lr <= 0) throw std::invalid_argument("config: lr must be positive");
  if (frames_min < 1 || frames_max > 24 || frames_min > frames_max)
    throw std::invalid_argument("config: frames range must lie within [1, 24]");
  if (jitter < 0 || jitter >= 1) throw std::invalid_argument("config: jitter must lie in [0, 1)");
  if (loss.lambda < 0 || loss.alpha < 0 || loss.huber_delta <= 0)
    throw std::invalid_argument("config: invalid loss weights");
  if (checkpoint_every < 1) throw std::invalid_argument("config: checkpoint_every must be >= 1");
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string TrainConfig::serialize() const {
  std::ostringstream os;
  os << "model.depth = " << model.depth << "\n";
  os << "model.dim = " << model.dim << "\n";
  os << "model.heads = " << model.heads << "\n";
  os << "model.patch = " << model.patch << "\n";
  os << "model.track_dim = " << model.track_dim << "\n";
  os << "model.dense_dim = " << model.dense_dim << "\n";
  os << "model.layerscale_init = " << fmt(model.layerscale_init) << "\n";
  os << "model.mlp_ratio = " << model.mlp_ratio << "\n";
  os << "model.camera_layers = " << model.camera_layers << "\n";
  os << "model.track_layers = " << model.track_layers << "\n";
  os << "model.track_attn_dim = " << model.track_attn_dim << "\n";
  os << "model.sigma_floor = " << fmt(model.sigma_floor) << "\n";
  os << "model.softargmax_temp = " << fmt(model.softargmax_temp) << "\n";
  os << "model.attention = " << attention_name(model.attention) << "\n";
  os << "optim.lr = " << fmt(lr) << "\n";
  os << "optim.warmup_steps = " << warmup_steps << "\n";
  os << "optim.total_steps = " << total_steps << "\n";
  os << "optim.cosine = " << (cosine ? 1 : 0) << "\n";
  os << "optim.clip_norm = " << fmt(clip_norm) << "\n";
  os << "optim.weight_decay = " << fmt(weight_decay) << "\n";
  os << "optim.beta1 = " << fmt(beta1) << "\n";
  os << "optim.beta2 = " << fmt(beta2) << "\n";
  os << "optim.adam_eps = " << fmt(adam_eps) << "\n";
  os << "data.max_scenes = " << max_scenes << "\n";
  os << "data.frames_min = " << frames_min << "\n";
  os << "data.frames_max = " << frames_max << "\n";
  os << "data.jitter = " << fmt(jitter) << "\n";
  os << "loss.lambda = " << fmt(loss.lambda) << "\n";
  os << "loss.alpha = " << fmt(loss.alpha) << "\n";
  os << "loss.huber_delta = " << fmt(loss.huber_delta) << "\n";
  os << "loss.l2_residuals = " << (loss.l2_residuals ? 1 : 0) << "\n";
  os << "loss.use_camera = " << (loss.use_camera ? 1 : 0) << "\n";
  os << "loss.use_depth = " << (loss.use_depth ? 1 : 0) << "\n";
  os << "loss.use_track = " << (loss.use_track ? 1 : 0) << "\n";
  os << "seed = " << seed << "\n";
  os << "checkpoint_every = " << checkpoint_every << "\n";
  return os.str();
}

uint64_t TrainConfig::hash() const { return fnv1a64(serialize()); }

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  std::map<std::string, std::function<void(const std::string&)>> setters;
  auto as_int = [](const std::string& v) { return std::stoi(v); };
  auto as_double = [](const std::string& v) { return std::stod(v); };
  auto as_bool = [](const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw std::invalid_argument("config: boolean value must be 0/1/true/false, got '" + v + "'");
  };

  setters["model.depth"] = [&](const std::string& v) { cfg.model.depth = as_int(v); };
  setters["model.dim"] = [&](const std::string& v) { cfg.model.dim = as_int(v); };
  setters["model.heads"] = [&](const std::string& v) { cfg.model.heads = as_int(v); };
  setters["model.patch"] = [&](const std::string& v) { cfg.model.patch = as_int(v); };
  setters["model.track_dim"] = [&](const std::string& v) { cfg.model.track_dim = as_int(v); };
  setters["model.dense_dim"] = [&](const std::string& v) { cfg.model.dense_dim = as_int(v); };
  setters["model.layerscale_init"] = [&](const std::string& v) { cfg.model.layerscale_init = as_double(v); };
  setters["model.mlp_ratio"] = [&](const std::string& v) { cfg.model.mlp_ratio = as_int(v); };
  setters["model.camera_layers"] = [&](const std::string& v) { cfg.model.camera_layers = as_int(v); };
  setters["model.track_layers"] = [&](const std::string& v) { cfg.model.track_layers = as_int(v); };
  setters["model.track_attn_dim"] = [&](const std::string& v) { cfg.model.track_attn_dim = as_int(v); };
  setters["model.sigma_floor"] = [&](const std::string& v) { cfg.model.sigma_floor = as_double(v); };
  setters["model.softargmax_temp"] = [&](const std::string& v) { cfg.model.softargmax_temp = as_double(v); };
  setters["model.attention"] = [&](const std::string& v) { cfg.model.attention = attention_from_name(v); };
  setters["optim.lr"] = [&](const std::string& v) { cfg.lr = as_double(v); };
  setters["optim.warmup_steps"] = [&](const std::string& v) { cfg.warmup_steps = as_int(v); };
  setters["optim.total_steps"] = [&](const std::string& v) { cfg.total_steps = as_int(v); };
  setters["optim.cosine"] = [&](const std::string& v) { cfg.cosine = as_bool(v); };
  setters["optim.clip_norm"] = [&](const std::string& v) { cfg.clip_norm = as_double(v); };
  setters["optim.weight_decay"] = [&](const std::string& v) { cfg.weight_decay = as_double(v); };
  setters["optim.beta1"] = [&](const std::string& v) { cfg.beta1 = as_double(v); };
  setters["optim.beta2"] = [&](const std::string& v) { cfg.beta2 = as_double(v); };
  setters["optim.adam_eps"] = [&](const std::string& v) { cfg.adam_eps = as_double(v); };
  setters["data.max_scenes"] = [&](const std::string& v) { cfg.max_scenes = as_int(v); };
  setters["data.frames_min"] = [&](const std::string& v) { cfg.frames_min = as_int(v); };
  setters["data.frames_max"] = [&](const std::string& v) { cfg.frames_max = as_int(v); };
  setters["data.jitter"] = [&](const std::string& v) { cfg.jitter = as_double(v); };
  setters["loss.lambda"] = [&](const std::string& v) { cfg.loss.lambda = as_double(v); };
  setters["loss.alpha"] = [&](const std::string& v) { cfg.loss.alpha = as_double(v); };
  setters["loss.huber_delta"] = [&](const std::string& v) { cfg.loss.huber_delta = as_double(v); };
  setters["loss.l2_residuals"] = [&](const std::string& v) { cfg.loss.l2_residuals = as_bool(v); };
  setters["loss.use_camera"] = [&](const std::string& v) { cfg.loss.use_camera = as_bool(v); };
  setters["loss.use_depth"] = [&](const std::string& v) { cfg.loss.use_depth = as_bool(v); };
  setters["loss.use_track"] = [&](const std::string& v) { cfg.loss.use_track = as_bool(v); };
  setters["seed"] = [&](const std::string& v) { cfg.seed = std::stoull(v); };
  setters["checkpoint_every"] = [&](const std::string& v) { cfg.checkpoint_every = as_int(v); };

  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not `key = value`: " + stripped);
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end())
      throw std::invalid_argument("config: unknown key '" + key + "' on line " +
                                  std::to_string(lineno));
    it->second(value);
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

}  // namespace mvr
