#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "multifuse/audio_features.hpp"
#include "multifuse/chat.hpp"
#include "multifuse/rng.hpp"
#include "multifuse/tensor.hpp"

namespace multifuse {

struct EncoderConfig {
  int depth = 2;
  int width = 64;
  int heads = 4;
  int mlp_dim = 256;
  int patch = 16;      // vision only
  int vocab_size = 0;  // text only
  int max_len = 128;   // text only
};

// Full token sequence plus the CLS slice (= tokens[:, 0, :]) and the
// key-padding mask consumed by attention (1 = attend, 0 = ignore).
template <typename T>
struct ModalitySequence {
  Tensor<T> tokens;  // [B, T, d]
  Tensor<T> cls;     // [B, d]
  std::vector<std::vector<T>> mask;  // B x T
};

template <typename T>
Tensor<T> glorot(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in,
                 std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> data(numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-limit, limit));
  return Tensor<T>::from_data(std::move(shape), std::move(data), true);
}

template <typename T>
Tensor<T> glorot(Rng& rng, std::size_t rows, std::size_t cols) {
  return glorot<T>(rng, {rows, cols}, rows, cols);
}

template <typename T>
struct AttentionHeadParams {
  Tensor<T> wq, wk, wv;  // [d, d_head] each
};

template <typename T>
struct EncoderLayerParams {
  std::vector<AttentionHeadParams<T>> heads;
  Tensor<T> wo, bo;  // output projection [d, d], [d]
  Tensor<T> w1, b1;  // mlp [d, mlp_dim], [mlp_dim]
  Tensor<T> w2, b2;  // mlp [mlp_dim, d], [d]
};

template <typename T>
EncoderLayerParams<T> init_encoder_layer(Rng& rng, int width, int heads, int mlp_dim) {
  const std::size_t d = static_cast<std::size_t>(width);
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const std::size_t m = static_cast<std::size_t>(mlp_dim);
  EncoderLayerParams<T> p;
  for (int h = 0; h < heads; ++h)
    p.heads.push_back({glorot<T>(rng, d, dh), glorot<T>(rng, d, dh), glorot<T>(rng, d, dh)});
  p.wo = glorot<T>(rng, d, d);
  p.bo = Tensor<T>::zeros({d}, true);
  p.w1 = glorot<T>(rng, d, m);
  p.b1 = Tensor<T>::zeros({m}, true);
  p.w2 = glorot<T>(rng, m, d);
  p.b2 = Tensor<T>::zeros({d}, true);
  return p;
}

template <typename T>
void layer_named_parameters(const EncoderLayerParams<T>& p, const std::string& prefix,
                            std::vector<std::pair<std::string, Tensor<T>>>& out) {
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    const std::string hp = prefix + ".head" + std::to_string(h);
    out.emplace_back(hp + ".wq", p.heads[h].wq);
    out.emplace_back(hp + ".wk", p.heads[h].wk);
    out.emplace_back(hp + ".wv", p.heads[h].wv);
  }
  out.emplace_back(prefix + ".wo", p.wo);
  out.emplace_back(prefix + ".bo", p.bo);
  out.emplace_back(prefix + ".w1", p.w1);
  out.emplace_back(prefix + ".b1", p.b1);
  out.emplace_back(prefix + ".w2", p.w2);
  out.emplace_back(prefix + ".b2", p.b2);
}

// Expands a per-position key mask [B x T_k] to score shape [B x T_q x T_k].
template <typename T>
std::vector<T> expand_key_mask(const std::vector<std::vector<T>>& mask, std::size_t t_q) {
  const std::size_t batch = mask.size();
  const std::size_t t_k = mask[0].size();
  std::vector<T> out(batch * t_q * t_k);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < t_q; ++i)
      for (std::size_t j = 0; j < t_k; ++j) out[(b * t_q + i) * t_k + j] = mask[b][j];
  return out;
}

// Scaled dot-product attention per head, heads concatenated, output-projected.
// Empty mask means every position is attendable.
template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x, const std::vector<std::vector<T>>& mask,
                                    const EncoderLayerParams<T>& p) {
  const auto& s = x.shape();
  if (s.size() != 3)
    throw std::invalid_argument("multi_head_self_attention: rank-3 input required, got " +
                                shape_str(s));
  const std::size_t t_len = s[1];
  const std::size_t dh = p.heads[0].wq.shape()[1];
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  const T neg_inf = -std::numeric_limits<T>::infinity();

  std::vector<T> fill_mask;
  if (!mask.empty()) fill_mask = expand_key_mask(mask, t_len);

  std::vector<Tensor<T>> head_outs;
  for (const auto& h : p.heads) {
    const Tensor<T> q = matmul(x, h.wq);
    const Tensor<T> k = matmul(x, h.wk);
    const Tensor<T> v = matmul(x, h.wv);
    Tensor<T> scores = scale(matmul(q, transpose(k)), inv_sqrt);
    if (!fill_mask.empty()) scores = masked_fill(scores, fill_mask, neg_inf);
    head_outs.push_back(matmul(softmax(scores, 2), v));
  }
  const Tensor<T> merged = head_outs.size() == 1 ? head_outs[0] : concat(head_outs, 2);
  return add(matmul(merged, p.wo), p.bo);
}

// Pre-norm residual block: x + MHSA(LN(x)), then + MLP(LN(.)) with ReLU.
template <typename T>
Tensor<T> encoder_layer(const Tensor<T>& x, const std::vector<std::vector<T>>& mask,
                        const EncoderLayerParams<T>& p) {
  const Tensor<T> h = add(x, multi_head_self_attention(layer_norm(x, 2), mask, p));
  const Tensor<T> mlp =
      add(matmul(relu(add(matmul(layer_norm(h, 2), p.w1), p.b1)), p.w2), p.b2);
  return add(h, mlp);
}

// Row-major patch grid; each row is one patch flattened channel-major
// (channel, then patch row, then patch column).
template <typename T>
Tensor<T> patchify(const FeatureImage& image, int patch) {
  if (patch < 1 || image.side % patch != 0)
    throw std::invalid_argument("patchify: side " + std::to_string(image.side) +
                                " not divisible by patch " + std::to_string(patch));
  const std::size_t side = static_cast<std::size_t>(image.side);
  const std::size_t p = static_cast<std::size_t>(patch);
  const std::size_t grid = side / p;
  const std::size_t row_dim = 3 * p * p;
  std::vector<T> data(grid * grid * row_dim);
  std::size_t idx = 0;
  for (std::size_t pr = 0; pr < grid; ++pr)
    for (std::size_t pc = 0; pc < grid; ++pc)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t py = 0; py < p; ++py)
          for (std::size_t px = 0; px < p; ++px)
            data[idx++] =
                static_cast<T>(image.channels[c][(pr * p + py) * side + (pc * p + px)]);
  return Tensor<T>::from_data({grid * grid, row_dim}, std::move(data));
}

template <typename T>
class VisionEncoder {
 public:
  EncoderConfig cfg;
  int image_side = 224;

  Tensor<T> embed_w, embed_b;  // [3*patch^2, d], [d]
  Tensor<T> cls_token;         // [d]
  Tensor<T> pos;               // [N+1, d]
  std::vector<EncoderLayerParams<T>> layers;

  int patches_per_side() const { return image_side / cfg.patch; }
  int seq_len() const { return patches_per_side() * patches_per_side() + 1; }

  void init(Rng& rng) {
    if (cfg.width % cfg.heads != 0)
      throw std::invalid_argument("vision encoder: width not divisible by heads");
    if (image_side % cfg.patch != 0)
      throw std::invalid_argument("vision encoder: image side not divisible by patch");
    const std::size_t d = static_cast<std::size_t>(cfg.width);
    const std::size_t row_dim = 3 * static_cast<std::size_t>(cfg.patch) * cfg.patch;
    embed_w = glorot<T>(rng, row_dim, d);
    embed_b = Tensor<T>::zeros({d}, true);
    cls_token = glorot<T>(rng, {d}, 1, d);
    pos = glorot<T>(rng, {static_cast<std::size_t>(seq_len()), d}, static_cast<std::size_t>(seq_len()), d);
    layers.clear();
    for (int l = 0; l < cfg.depth; ++l)
      layers.push_back(init_encoder_layer<T>(rng, cfg.width, cfg.heads, cfg.mlp_dim));
  }

  ModalitySequence<T> forward(const std::vector<const FeatureImage*>& images) const {
    if (images.empty()) throw std::invalid_argument("vision encoder: empty batch");
    const std::size_t batch = images.size();
    const std::size_t n = static_cast<std::size_t>(seq_len()) - 1;
    const std::size_t row_dim = embed_w.shape()[0];
    const std::size_t d = embed_w.shape()[1];

    std::vector<T> flat(batch * n * row_dim);
    for (std::size_t b = 0; b < batch; ++b) {
      if (images[b]->side != image_side)
        throw std::invalid_argument("vision encoder: image side mismatch");
      const Tensor<T> rows = patchify<T>(*images[b], cfg.patch);
      std::copy(rows.value().begin(), rows.value().end(), flat.begin() + static_cast<std::ptrdiff_t>(b * n * row_dim));
    }
    const Tensor<T> patch_batch = Tensor<T>::from_data({batch, n, row_dim}, std::move(flat));

    const Tensor<T> tok = add(matmul(patch_batch, embed_w), embed_b);
    const Tensor<T> cls_row = add(Tensor<T>::zeros({batch, 1, d}), cls_token);
    Tensor<T> x = add(concat(cls_row, tok, 1), pos);
    const std::vector<std::vector<T>> no_mask;
    for (const auto& layer : layers) x = encoder_layer(x, no_mask, layer);
    x = layer_norm(x, 2);

    ModalitySequence<T> out;
    out.tokens = x;
    out.cls = take_time(x, 0);
    out.mask.assign(batch, std::vector<T>(n + 1, T(1)));
    return out;
  }

  void named_parameters(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor<T>>>& out) const {
    out.emplace_back(prefix + ".embed.w", embed_w);
    out.emplace_back(prefix + ".embed.b", embed_b);
    out.emplace_back(prefix + ".cls", cls_token);
    out.emplace_back(prefix + ".pos", pos);
    for (std::size_t l = 0; l < layers.size(); ++l)
      layer_named_parameters(layers[l], prefix + ".layer" + std::to_string(l), out);
  }
};

template <typename T>
class TextEncoder {
 public:
  EncoderConfig cfg;

  Tensor<T> table;  // [vocab, d]
  Tensor<T> pos;    // [max_len, d]
  std::vector<EncoderLayerParams<T>> layers;

  void init(Rng& rng) {
    if (cfg.width % cfg.heads != 0)
      throw std::invalid_argument("text encoder: width not divisible by heads");
    if (cfg.vocab_size < 4)
      throw std::invalid_argument("text encoder: vocab must include the reserved ids");
    const std::size_t d = static_cast<std::size_t>(cfg.width);
    table = glorot<T>(rng, {static_cast<std::size_t>(cfg.vocab_size), d},
                      static_cast<std::size_t>(cfg.vocab_size), d);
    pos = glorot<T>(rng, {static_cast<std::size_t>(cfg.max_len), d},
                    static_cast<std::size_t>(cfg.max_len), d);
    layers.clear();
    for (int l = 0; l < cfg.depth; ++l)
      layers.push_back(init_encoder_layer<T>(rng, cfg.width, cfg.heads, cfg.mlp_dim));
  }

  ModalitySequence<T> forward(const std::vector<const TokenSequence*>& seqs) const {
    if (seqs.empty()) throw std::invalid_argument("text encoder: empty batch");
    const std::size_t batch = seqs.size();
    const std::size_t len = static_cast<std::size_t>(cfg.max_len);

    std::vector<std::vector<int>> ids(batch);
    std::vector<std::vector<T>> mask(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      if (seqs[b]->ids.size() != len)
        throw std::invalid_argument("text encoder: sequence length " +
                                    std::to_string(seqs[b]->ids.size()) + " != max_len " +
                                    std::to_string(len));
      ids[b] = seqs[b]->ids;
      mask[b].resize(len);
      for (std::size_t t = 0; t < len; ++t) mask[b][t] = static_cast<T>(seqs[b]->mask[t]);
    }

    Tensor<T> x = add(embedding_lookup(table, ids), pos);
    for (const auto& layer : layers) x = encoder_layer(x, mask, layer);
    x = layer_norm(x, 2);

    ModalitySequence<T> out;
    out.tokens = x;
    out.cls = take_time(x, 0);
    out.mask = std::move(mask);
    return out;
  }

  void named_parameters(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor<T>>>& out) const {
    out.emplace_back(prefix + ".table", table);
    out.emplace_back(prefix + ".pos", pos);
    for (std::size_t l = 0; l < layers.size(); ++l)
      layer_named_parameters(layers[l], prefix + ".layer" + std::to_string(l), out);
  }
};

}  // namespace multifuse
