#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvr/core/rng.hpp"
#include "mvr/core/tape.hpp"
#include "mvr/geom/camera.hpp"
#include "mvr/model/config.hpp"
#include "mvr/model/params.hpp"

namespace mvr {

struct AttnStats {
  double row_sum_min = std::numeric_limits<double>::infinity();
  double row_sum_max = -std::numeric_limits<double>::infinity();
  long rows = 0;
};

// Host-side snapshot of one forward pass, detached from the tape.
struct ScenePredictions {
  int N = 0, H = 0, W = 0, M = 0;
  std::vector<CameraParams> cams;
  std::vector<DepthMap> depth;
  std::vector<PointMap> pmap;            // frame-1 coordinates
  std::vector<std::vector<double>> sigma_d, sigma_p;  // per frame, H*W
  std::vector<double> track_pos;         // M*N*2 (x, y)
  std::vector<double> track_vis_logit;   // M*N
};

// The feed-forward multi-view model: learned patch embedding, token assembly
// with first-frame specialization, an alternating frame-wise/global
// self-attention trunk, and three heads (camera, dense maps, tracking). All
// forward methods build onto a caller-owned tape; the scalar type T is float
// for training and double for gradient checks.
template <class T>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    build_params();
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // Deterministic initialization of every parameter from the seed.
  void init(uint64_t seed) {
    Rng rng(hash_mix(seed, 0x10d31));
    for (size_t i = 0; i < params_.size(); ++i) {
      const std::string& name = params_.name_at(i);
      Tensor<T>& t = params_.at(i);
      const bool norm = name.find(".ln") != std::string::npos ||
                        name.find(".qn") != std::string::npos ||
                        name.find(".kn") != std::string::npos;
      const bool norm_gain = norm && name.ends_with(".g");
      const bool norm_bias = norm && name.ends_with(".b");
      const bool layerscale = name.find(".ls") != std::string::npos;
      const bool bias = name.ends_with(".b") || name.ends_with(".bq") || name.ends_with(".bk") ||
                        name.ends_with(".bv") || name.ends_with(".bo") || name.ends_with(".b1") ||
                        name.ends_with(".b2");
      if (norm_gain) {
        for (auto& x : t.data) x = T(1);
      } else if (norm_bias || bias) {
        for (auto& x : t.data) x = T(0);
        // warm-start the camera readout at the identity pose with a mid-range fov
        if (name == "cam.out.b") t.data[3] = T(1);
      } else if (layerscale) {
        for (auto& x : t.data) x = static_cast<T>(cfg_.layerscale_init);
      } else {
        for (auto& x : t.data) x = static_cast<T>(rng.normal() * 0.02);
      }
    }
  }

  struct ForwardCtx {
    Tape<T>& tape;
    Model* model;
    std::unordered_map<std::string, int> bound;

    int P(const std::string& name) {
      auto it = bound.find(name);
      if (it != bound.end()) return it->second;
      const int id = tape.leaf(&model->params_.get(name));
      bound.emplace(name, id);
      return id;
    }
  };

  ForwardCtx make_ctx(Tape<T>& tape) { return ForwardCtx{tape, this, {}}; }

  int tokens_per_frame(int H, int W) const { return (H / cfg_.patch) * (W / cfg_.patch); }
  int seq_per_frame(int H, int W) const { return tokens_per_frame(H, W) + 5; }

  // ---- patchify: non-overlapping patches -> linear embed -> +2D sinusoidal posemb ----
  int patchify(ForwardCtx& c, const float* img, int H, int W) {
    const int p = cfg_.patch;
    if (H % p != 0 || W % p != 0)
      throw std::invalid_argument("patchify: image " + std::to_string(H) + "x" + std::to_string(W) +
                                  " not divisible by patch " + std::to_string(p));
    const int gh = H / p, gw = W / p, K = gh * gw;
    const int pd = 3 * p * p;
    Tensor<T> patches = Tensor<T>::zeros({K, pd});
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        T* row = patches.data.data() + static_cast<size_t>(gy * gw + gx) * pd;
        for (int ch = 0; ch < 3; ++ch)
          for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j)
              row[(ch * p + i) * p + j] = static_cast<T>(
                  img[(static_cast<size_t>(ch) * H + gy * p + i) * W + gx * p + j]);
      }
    const int emb = c.tape.add_rowvec(c.tape.matmul(c.tape.input(std::move(patches)), c.P("patch.w")),
                                      c.P("patch.b"));
    return c.tape.add(emb, c.tape.input(posemb(gh, gw)));
  }

  // ---- token assembly with first-frame specialization ----
  int assemble_tokens(ForwardCtx& c, const std::vector<int>& frame_tokens) {
    if (frame_tokens.empty()) throw std::invalid_argument("assemble_tokens: need >= 1 frame");
    std::vector<int> parts;
    for (size_t f = 0; f < frame_tokens.size(); ++f) {
      parts.push_back(frame_tokens[f]);
      parts.push_back(c.P(f == 0 ? "tok.cam_first" : "tok.cam_rest"));
      parts.push_back(c.P(f == 0 ? "tok.reg_first" : "tok.reg_rest"));
    }
    return c.tape.concat_rows(parts);
  }

  // One (frame-wise, global) block; `pair` selects the parameter set. The
  // attention variant only changes masks/routing, never the parameters.
  int aa_pair(ForwardCtx& c, int x, int pair, int N, int K, AttnStats* stats = nullptr) {
    const int S = K + 5;
    const std::string fw = "blk" + std::to_string(pair) + ".fw";
    const std::string gl = "blk" + std::to_string(pair) + ".gl";
    switch (cfg_.attention) {
      case AttentionVariant::kAlternating:
        x = frame_wise(c, fw, x, N, S, stats);
        x = transformer_layer(c, gl, x, -1, cfg_.heads, stats);
        break;
      case AttentionVariant::kGlobalOnly:
        x = transformer_layer(c, fw, x, -1, cfg_.heads, stats);
        x = transformer_layer(c, gl, x, -1, cfg_.heads, stats);
        break;
      case AttentionVariant::kCrossAlternating:
        x = frame_wise(c, fw, x, N, S, stats);
        x = cross_frame(c, gl, x, N, S, stats);
        break;
    }
    return x;
  }

  struct BackboneOut {
    int tokens = -1;
    std::array<int, 4> taps{-1, -1, -1, -1};
    int N = 0, K = 0;
  };

  BackboneOut backbone_forward(ForwardCtx& c, const float* images, int N, int H, int W,
                               AttnStats* stats = nullptr) {
    if (N < 1) throw std::invalid_argument("backbone_forward: need >= 1 frame");
    std::vector<int> frames;
    const size_t stride = static_cast<size_t>(3) * H * W;
    for (int f = 0; f < N; ++f) frames.push_back(patchify(c, images + f * stride, H, W));
    int x = assemble_tokens(c, frames);

    BackboneOut out;
    out.N = N;
    out.K = tokens_per_frame(H, W);
    const int L = cfg_.depth;
    for (int pair = 0; pair < L; ++pair) {
      x = aa_pair(c, x, pair, N, out.K, stats);
      for (int s = 1; s <= 4; ++s)
        if (tap_index(s) == pair + 1) out.taps[s - 1] = x;
    }
    out.tokens = x;
    return out;
  }

  // 1-indexed block position of dense-head tap s in {1..4}.
  int tap_index(int s) const { return std::min(cfg_.depth, ((cfg_.depth + 3) / 4) * s); }

  // ---- camera head: self-attention over camera tokens, linear readout ----
  int camera_head(ForwardCtx& c, int tokens, int N, int K) {
    const int S = K + 5;
    std::vector<int> idx(N);
    for (int f = 0; f < N; ++f) idx[f] = f * S + K;  // camera token row per frame
    int x = c.tape.select_rows(tokens, idx);
    for (int l = 0; l < cfg_.camera_layers; ++l)
      x = transformer_layer(c, "cam.l" + std::to_string(l), x, -1, cfg_.heads, nullptr);
    const int raw = c.tape.add_rowvec(c.tape.matmul(x, c.P("cam.out.w")), c.P("cam.out.b"));
    const int q = c.tape.normalize_rows(c.tape.slice_cols(raw, 0, 4));
    const int tr = c.tape.slice_cols(raw, 4, 3);
    const int fov = c.tape.scale(c.tape.sigmoid(c.tape.slice_cols(raw, 7, 2)), T(M_PI));
    const int pred = c.tape.concat_cols({q, tr, fov});
    // frame 1 extrinsics are hard-set to the identity; its fov stays predicted
    Tensor<T> id7 = Tensor<T>::zeros({1, 7});
    id7.data[3] = T(1);
    const int row0 = c.tape.concat_cols({c.tape.input(std::move(id7)), c.tape.slice_rows(fov, 0, 1)});
    if (N == 1) return row0;
    return c.tape.concat_rows({row0, c.tape.slice_rows(pred, 1, N - 1)});
  }

  // ---- dense DPT-style head ----
  struct DenseOut {
    std::vector<int> depth, sigma_d, pmap, sigma_p, tfeat;  // per frame
    int H = 0, W = 0;
  };

  DenseOut dense_head(ForwardCtx& c, const std::array<int, 4>& taps, int N, int K, int H, int W) {
    for (int t : taps)
      if (t < 0) throw std::invalid_argument("dense_head: expects exactly 4 token snapshots");
    const int p = cfg_.patch;
    const int gh = H / p, gw = W / p;
    if (gh * gw != K) throw std::invalid_argument("dense_head: token count does not match image size");
    const int S = K + 5;
    const int half_h = H / 2, half_w = W / 2;

    DenseOut out;
    out.H = H;
    out.W = W;
    for (int f = 0; f < N; ++f) {
      // project each snapshot's image tokens to the working width
      std::array<int, 4> feat;
      for (int s = 0; s < 4; ++s) {
        const int rows = c.tape.slice_rows(taps[s], f * S, K);  // [K x dim]
        const int proj = c.tape.add_rowvec(
            c.tape.matmul(rows, c.P("dpt.proj" + std::to_string(s) + ".w")),
            c.P("dpt.proj" + std::to_string(s) + ".b"));
        feat[s] = c.tape.transpose(proj);  // [C'' x K], K = gh*gw grid
      }
      // coarse-to-fine fusion with 3x3 convs and bilinear upsampling
      int x = c.tape.conv3x3(c.tape.add(feat[3], feat[2]), c.P("dpt.fuse0.w"), c.P("dpt.fuse0.b"),
                             gh, gw);
      x = c.tape.resize_bilinear(x, gh, gw, 2 * gh, 2 * gw);
      x = c.tape.add(x, c.tape.resize_bilinear(feat[1], gh, gw, 2 * gh, 2 * gw));
      x = c.tape.conv3x3(x, c.P("dpt.fuse1.w"), c.P("dpt.fuse1.b"), 2 * gh, 2 * gw);
      x = c.tape.resize_bilinear(x, 2 * gh, 2 * gw, half_h, half_w);
      x = c.tape.add(x, c.tape.resize_bilinear(feat[0], gh, gw, half_h, half_w));
      x = c.tape.conv3x3(x, c.P("dpt.fuse2.w"), c.P("dpt.fuse2.b"), half_h, half_w);
      x = c.tape.resize_bilinear(x, half_h, half_w, H, W);

      auto head = [&](const char* name) {
        return c.tape.conv3x3(x, c.P(std::string("dpt.out.") + name + ".w"),
                              c.P(std::string("dpt.out.") + name + ".b"), H, W);
      };
      out.depth.push_back(c.tape.exp(head("depth")));
      out.sigma_d.push_back(sigma_activation(c, head("sigd")));
      out.pmap.push_back(head("pmap"));
      out.sigma_p.push_back(sigma_activation(c, head("sigp")));
      out.tfeat.push_back(head("tfeat"));
    }
    return out;
  }

  // ---- tracking head: correlate, soft-argmax, refine with self-attention ----
  struct TrackOut {
    int pos = -1;  // [(M*N) x 2], query-major
    int vis = -1;  // [(M*N) x 1] logits
    std::vector<int> init;  // per frame [M x 2] soft-argmax positions
  };

  TrackOut tracking_head(ForwardCtx& c, const std::vector<int>& tfeat,
                         const std::vector<std::array<double, 2>>& queries, int H, int W,
                         int query_frame = 0) {
    const int N = static_cast<int>(tfeat.size());
    const int M = static_cast<int>(queries.size());
    if (M == 0) return {};
    Tensor<T> qpts = Tensor<T>::zeros({M, 2});
    for (int m = 0; m < M; ++m) {
      if (queries[m][0] < 0 || queries[m][0] > W - 1 || queries[m][1] < 0 || queries[m][1] > H - 1)
        throw std::invalid_argument("tracking_head: query " + std::to_string(m) +
                                    " outside image bounds");
      qpts.data[2 * m] = static_cast<T>(queries[m][0]);
      qpts.data[2 * m + 1] = static_cast<T>(queries[m][1]);
    }
    const int qfeat = c.tape.bilinear_sample_rows(tfeat[query_frame], c.tape.input(std::move(qpts)),
                                                  H, W);  // [M x C]

    const T inv_sqrt_c = T(1) / std::sqrt(static_cast<T>(cfg_.track_dim));
    const int coords = c.tape.input(coord_grid(H, W));
    const int offsets = c.tape.input(patch_offsets());

    std::vector<int> corr(N), probs(N), init(N);
    for (int f = 0; f < N; ++f) {
      corr[f] = c.tape.scale(c.tape.matmul(qfeat, tfeat[f]), inv_sqrt_c);  // [M x HW]
      probs[f] = c.tape.softmax_rows(c.tape.scale(corr[f], T(1) / static_cast<T>(cfg_.softargmax_temp)));
      init[f] = c.tape.matmul(probs[f], coords);  // [M x 2] expected position
    }

    Tensor<T> halfsize({1, 2}, {T(2.0 / std::max(W - 1, 1)), T(2.0 / std::max(H - 1, 1))});
    Tensor<T> center({1, 2}, {T((W - 1) / 2.0), T((H - 1) / 2.0)});
    std::vector<int> pos_rows, vis_rows;
    for (int m = 0; m < M; ++m) {
      std::vector<int> desc_rows, init_rows;
      for (int f = 0; f < N; ++f) {
        const int init_mf = c.tape.slice_rows(init[f], m, 1);  // [1 x 2]
        init_rows.push_back(init_mf);
        const int pos_norm =
            c.tape.mul(c.tape.sub(init_mf, c.tape.input(center)), c.tape.input(halfsize));
        // 3x3 correlation patch sampled around the soft-argmax position
        const int pts = c.tape.add(c.tape.repeat_rows(init_mf, 9), offsets);
        const int patch = c.tape.transpose(
            c.tape.bilinear_sample_rows(c.tape.slice_rows(corr[f], m, 1), pts, H, W));  // [1 x 9]
        desc_rows.push_back(
            c.tape.concat_cols({pos_norm, patch, c.tape.slice_rows(qfeat, m, 1)}));
      }
      int x = c.tape.concat_rows(desc_rows);  // [N x (11+C)]
      x = c.tape.add_rowvec(c.tape.matmul(x, c.P("trk.proj.w")), c.P("trk.proj.b"));
      for (int l = 0; l < cfg_.track_layers; ++l)
        x = transformer_layer(c, "trk.l" + std::to_string(l), x, -1, cfg_.heads, nullptr);
      const int readout = c.tape.add_rowvec(c.tape.matmul(x, c.P("trk.out.w")), c.P("trk.out.b"));
      pos_rows.push_back(c.tape.add(c.tape.concat_rows(init_rows), c.tape.slice_cols(readout, 0, 2)));
      vis_rows.push_back(c.tape.slice_cols(readout, 2, 1));
    }

    TrackOut out;
    out.pos = c.tape.concat_rows(pos_rows);
    out.vis = c.tape.concat_rows(vis_rows);
    out.init = std::move(init);
    return out;
  }

  struct ForwardOut {
    BackboneOut bb;
    int camera = -1;
    DenseOut dense;
    TrackOut track;
    int H = 0, W = 0;
  };

  // One shared backbone pass feeding all three heads.
  ForwardOut forward(Tape<T>& tape, const float* images, int N, int H, int W,
                     const std::vector<std::array<double, 2>>& queries, AttnStats* stats = nullptr) {
    ForwardCtx c = make_ctx(tape);
    ForwardOut out;
    out.H = H;
    out.W = W;
    out.bb = backbone_forward(c, images, N, H, W, stats);
    out.camera = camera_head(c, out.bb.tokens, N, out.bb.K);
    out.dense = dense_head(c, out.bb.taps, N, out.bb.K, H, W);
    out.track = tracking_head(c, out.dense.tfeat, queries, H, W);
    return out;
  }

 private:
  int sigma_activation(ForwardCtx& c, int raw) {
    // floor + (1 - floor) * exp(raw): strictly above the floor, equals 1 at 0
    return c.tape.add_scalar(c.tape.scale(c.tape.exp(raw), T(1) - static_cast<T>(cfg_.sigma_floor)),
                             static_cast<T>(cfg_.sigma_floor));
  }

  int frame_wise(ForwardCtx& c, const std::string& prefix, int x, int N, int S, AttnStats* stats) {
    if (N == 1) return transformer_layer(c, prefix, x, -1, cfg_.heads, stats);
    std::vector<int> parts;
    for (int f = 0; f < N; ++f)
      parts.push_back(
          transformer_layer(c, prefix, c.tape.slice_rows(x, f * S, S), -1, cfg_.heads, stats));
    return c.tape.concat_rows(parts);
  }

  int cross_frame(ForwardCtx& c, const std::string& prefix, int x, int N, int S, AttnStats* stats) {
    if (N == 1) return transformer_layer(c, prefix, x, -1, cfg_.heads, stats);
    std::vector<int> parts;
    for (int f = 0; f < N; ++f) {
      const int own = c.tape.slice_rows(x, f * S, S);
      std::vector<int> other_idx;
      for (int g = 0; g < N; ++g)
        if (g != f)
          for (int r = 0; r < S; ++r) other_idx.push_back(g * S + r);
      const int others = c.tape.select_rows(x, other_idx);
      parts.push_back(transformer_layer(c, prefix, own, others, cfg_.heads, stats));
    }
    return c.tape.concat_rows(parts);
  }

  // Pre-norm multi-head attention with QKNorm and LayerScale, then a gated
  // MLP. xkv == -1 means self-attention.
  int transformer_layer(ForwardCtx& c, const std::string& prefix, int xq, int xkv, int heads,
                        AttnStats* stats) {
    Tape<T>& t = c.tape;
    const int width = t.val(xq).shape[1];
    const int dh = width / heads;
    const int q_in = t.layernorm_rows(xq, c.P(prefix + ".ln1.g"), c.P(prefix + ".ln1.b"));
    const int kv_in = xkv < 0 ? q_in
                              : t.layernorm_rows(xkv, c.P(prefix + ".ln1.g"), c.P(prefix + ".ln1.b"));
    const int q = t.add_rowvec(t.matmul(q_in, c.P(prefix + ".wq")), c.P(prefix + ".bq"));
    const int k = t.add_rowvec(t.matmul(kv_in, c.P(prefix + ".wk")), c.P(prefix + ".bk"));
    const int v = t.add_rowvec(t.matmul(kv_in, c.P(prefix + ".wv")), c.P(prefix + ".bv"));

    std::vector<int> head_outs;
    for (int h = 0; h < heads; ++h) {
      int qh = t.slice_cols(q, h * dh, dh);
      int kh = t.slice_cols(k, h * dh, dh);
      qh = t.layernorm_rows(qh, c.P(prefix + ".qn.g"), c.P(prefix + ".qn.b"));
      kh = t.layernorm_rows(kh, c.P(prefix + ".kn.g"), c.P(prefix + ".kn.b"));
      const int vh = t.slice_cols(v, h * dh, dh);
      const int scores = t.matmul(t.scale(qh, T(1) / std::sqrt(static_cast<T>(dh))), t.transpose(kh));
      const int attn = t.softmax_rows(scores);
      if (stats) {
        const auto& a = t.val(attn);
        for (int r = 0; r < a.shape[0]; ++r) {
          double s = 0;
          for (int cc = 0; cc < a.shape[1]; ++cc) s += a.data[static_cast<size_t>(r) * a.shape[1] + cc];
          stats->row_sum_min = std::min(stats->row_sum_min, s);
          stats->row_sum_max = std::max(stats->row_sum_max, s);
          ++stats->rows;
        }
      }
      head_outs.push_back(t.matmul(attn, vh));
    }
    const int o = t.add_rowvec(t.matmul(t.concat_cols(head_outs), c.P(prefix + ".wo")),
                               c.P(prefix + ".bo"));
    const int x1 = t.add(xq, t.mul_rowvec(o, c.P(prefix + ".ls1")));

    const int h2 = t.layernorm_rows(x1, c.P(prefix + ".ln2.g"), c.P(prefix + ".ln2.b"));
    const int m1 = t.gelu(t.add_rowvec(t.matmul(h2, c.P(prefix + ".mlp.w1")), c.P(prefix + ".mlp.b1")));
    const int m2 = t.add_rowvec(t.matmul(m1, c.P(prefix + ".mlp.w2")), c.P(prefix + ".mlp.b2"));
    return t.add(x1, t.mul_rowvec(m2, c.P(prefix + ".ls2")));
  }

  Tensor<T> posemb(int gh, int gw) const {
    const int d4 = cfg_.dim / 4;
    Tensor<T> pe = Tensor<T>::zeros({gh * gw, cfg_.dim});
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        T* row = pe.data.data() + static_cast<size_t>(gy * gw + gx) * cfg_.dim;
        for (int i = 0; i < d4; ++i) {
          const double omega = std::pow(10000.0, -static_cast<double>(i) / d4);
          row[i] = static_cast<T>(std::sin(gx * omega));
          row[d4 + i] = static_cast<T>(std::cos(gx * omega));
          row[2 * d4 + i] = static_cast<T>(std::sin(gy * omega));
          row[3 * d4 + i] = static_cast<T>(std::cos(gy * omega));
        }
      }
    return pe;
  }

  Tensor<T> coord_grid(int H, int W) const {
    Tensor<T> g = Tensor<T>::zeros({H * W, 2});
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        g.data[2 * (static_cast<size_t>(i) * W + j)] = static_cast<T>(j);
        g.data[2 * (static_cast<size_t>(i) * W + j) + 1] = static_cast<T>(i);
      }
    return g;
  }

  Tensor<T> patch_offsets() const {
    Tensor<T> o = Tensor<T>::zeros({9, 2});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        o.data[2 * (static_cast<size_t>(i) * 3 + j)] = static_cast<T>(j - 1);
        o.data[2 * (static_cast<size_t>(i) * 3 + j) + 1] = static_cast<T>(i - 1);
      }
    return o;
  }

  void make_layer_params(const std::string& prefix, int width, int hidden) {
    const int dh = width / cfg_.heads;
    params_.create(prefix + ".ln1.g", {width});
    params_.create(prefix + ".ln1.b", {width});
    params_.create(prefix + ".wq", {width, width});
    params_.create(prefix + ".bq", {width});
    params_.create(prefix + ".wk", {width, width});
    params_.create(prefix + ".bk", {width});
    params_.create(prefix + ".wv", {width, width});
    params_.create(prefix + ".bv", {width});
    params_.create(prefix + ".qn.g", {dh});
    params_.create(prefix + ".qn.b", {dh});
    params_.create(prefix + ".kn.g", {dh});
    params_.create(prefix + ".kn.b", {dh});
    params_.create(prefix + ".wo", {width, width});
    params_.create(prefix + ".bo", {width});
    params_.create(prefix + ".ls1", {width});
    params_.create(prefix + ".ln2.g", {width});
    params_.create(prefix + ".ln2.b", {width});
    params_.create(prefix + ".mlp.w1", {width, hidden});
    params_.create(prefix + ".mlp.b1", {hidden});
    params_.create(prefix + ".mlp.w2", {hidden, width});
    params_.create(prefix + ".mlp.b2", {width});
    params_.create(prefix + ".ls2", {width});
  }

  void build_params() {
    const int d = cfg_.dim;
    params_.create("patch.w", {3 * cfg_.patch * cfg_.patch, d});
    params_.create("patch.b", {d});
    params_.create("tok.cam_first", {1, d});
    params_.create("tok.cam_rest", {1, d});
    params_.create("tok.reg_first", {4, d});
    params_.create("tok.reg_rest", {4, d});
    for (int i = 0; i < cfg_.depth; ++i) {
      make_layer_params("blk" + std::to_string(i) + ".fw", d, d * cfg_.mlp_ratio);
      make_layer_params("blk" + std::to_string(i) + ".gl", d, d * cfg_.mlp_ratio);
    }
    for (int i = 0; i < cfg_.camera_layers; ++i)
      make_layer_params("cam.l" + std::to_string(i), d, d * cfg_.mlp_ratio);
    params_.create("cam.out.w", {d, 9});
    params_.create("cam.out.b", {9});

    const int cd = cfg_.dense_dim;
    for (int s = 0; s < 4; ++s) {
      params_.create("dpt.proj" + std::to_string(s) + ".w", {d, cd});
      params_.create("dpt.proj" + std::to_string(s) + ".b", {cd});
    }
    for (int s = 0; s < 3; ++s) {
      params_.create("dpt.fuse" + std::to_string(s) + ".w", {cd, cd * 9});
      params_.create("dpt.fuse" + std::to_string(s) + ".b", {cd});
    }
    auto out_head = [&](const std::string& name, int ch) {
      params_.create("dpt.out." + name + ".w", {ch, cd * 9});
      params_.create("dpt.out." + name + ".b", {ch});
    };
    out_head("depth", 1);
    out_head("sigd", 1);
    out_head("pmap", 3);
    out_head("sigp", 1);
    out_head("tfeat", cfg_.track_dim);

    const int dt = cfg_.track_attn_dim;
    if (dt % cfg_.heads != 0)
      throw std::invalid_argument("model: track_attn_dim must be divisible by heads");
    params_.create("trk.proj.w", {11 + cfg_.track_dim, dt});
    params_.create("trk.proj.b", {dt});
    for (int i = 0; i < cfg_.track_layers; ++i)
      make_layer_params("trk.l" + std::to_string(i), dt, dt * cfg_.mlp_ratio);
    params_.create("trk.out.w", {dt, 3});
    params_.create("trk.out.b", {3});
  }

  ModelConfig cfg_;
  ParamStore<T> params_;
};

// Detach a forward pass into plain host data (f64).
template <class T>
ScenePredictions decode_predictions(const Tape<T>& tape, const typename Model<T>::ForwardOut& fo,
                                    int N, int M) {
  ScenePredictions out;
  out.N = N;
  out.H = fo.H;
  out.W = fo.W;
  out.M = M;
  const auto& cam = tape.val(fo.camera);
  for (int f = 0; f < N; ++f) {
    std::array<double, 9> v;
    for (int i = 0; i < 9; ++i) v[i] = static_cast<double>(cam.data[static_cast<size_t>(f) * 9 + i]);
    out.cams.push_back(make_camera({v[0], v[1], v[2], v[3]}, {v[4], v[5], v[6]}, {v[7], v[8]}));
  }
  const size_t hw = static_cast<size_t>(fo.H) * fo.W;
  for (int f = 0; f < N; ++f) {
    const auto& d = tape.val(fo.dense.depth[f]).data;
    const auto& p = tape.val(fo.dense.pmap[f]).data;
    const auto& sd = tape.val(fo.dense.sigma_d[f]).data;
    const auto& sp = tape.val(fo.dense.sigma_p[f]).data;
    DepthMap D{fo.H, fo.W, std::vector<double>(d.begin(), d.end())};
    PointMap P{fo.H, fo.W, std::vector<double>(p.begin(), p.end())};
    out.depth.push_back(std::move(D));
    out.pmap.push_back(std::move(P));
    out.sigma_d.emplace_back(sd.begin(), sd.end());
    out.sigma_p.emplace_back(sp.begin(), sp.end());
    (void)hw;
  }
  if (M > 0 && fo.track.pos >= 0) {
    const auto& tp = tape.val(fo.track.pos).data;
    const auto& tv = tape.val(fo.track.vis).data;
    out.track_pos.assign(tp.begin(), tp.end());
    out.track_vis_logit.assign(tv.begin(), tv.end());
  }
  return out;
}

}  // namespace mvr
