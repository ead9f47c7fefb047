#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "multifuse/checkpoint.hpp"
#include "multifuse/encoders.hpp"

namespace multifuse {

enum class FusionKind { Concat, Gmu, CrossAttention };

inline const char* fusion_kind_name(FusionKind k) {
  switch (k) {
    case FusionKind::Concat: return "concat";
    case FusionKind::Gmu: return "gmu";
    case FusionKind::CrossAttention: return "crossattn";
  }
  return "?";
}

inline FusionKind fusion_kind_from_name(const std::string& name) {
  if (name == "concat") return FusionKind::Concat;
  if (name == "gmu") return FusionKind::Gmu;
  if (name == "crossattn") return FusionKind::CrossAttention;
  throw std::invalid_argument("unknown fusion kind '" + name + "'");
}

template <typename T>
struct DenseParams {
  Tensor<T> w, b;
};

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const DenseParams<T>& p) {
  return add(matmul(x, p.w), p.b);
}

// Gating unit: h = z (.) h_text + (1 - z) (.) h_vision with a sigmoid gate
// computed from both modality vectors.
template <typename T>
struct GmuParams {
  Tensor<T> w_t, w_v;  // [d_t x gate_dim], [d_v x gate_dim]
  Tensor<T> w_z;       // [(d_t + d_v) x gate_dim]
  Tensor<T> b_t, b_v, b_z;  // [gate_dim]
};

template <typename T>
struct GmuOut {
  Tensor<T> h, z, h_t, h_v;
};

template <typename T>
GmuOut<T> gmu_fuse(const Tensor<T>& f_t, const Tensor<T>& f_v, const GmuParams<T>& p) {
  GmuOut<T> out;
  out.h_t = tanh(add(matmul(f_t, p.w_t), p.b_t));
  out.h_v = tanh(add(matmul(f_v, p.w_v), p.b_v));
  out.z = sigmoid(add(matmul(concat(f_t, f_v, 1), p.w_z), p.b_z));
  const Tensor<T> one_minus_z = add_scalar(scale(out.z, T(-1)), T(1));
  out.h = add(mul(out.z, out.h_t), mul(one_minus_z, out.h_v));
  return out;
}

// One direction of crossmodal attention: queries from x_a, keys/values from
// x_b; mask_b marks attendable b positions (empty = all).
template <typename T>
struct CrossAttnDirection {
  Tensor<T> wq, wk, wv;  // [d x d_k], [d x d_k], [d x d_v]
};

template <typename T>
struct CrossAttnOut {
  Tensor<T> y;        // [B x T_a x d_v]
  Tensor<T> weights;  // [B x T_a x T_b], rows sum to 1
};

template <typename T>
CrossAttnOut<T> crossmodal_attention(const Tensor<T>& x_a, const Tensor<T>& x_b,
                                     const std::vector<std::vector<T>>& mask_b,
                                     const CrossAttnDirection<T>& p) {
  if (x_a.shape().size() != 3 || x_b.shape().size() != 3 || x_a.shape()[0] != x_b.shape()[0])
    throw std::invalid_argument("crossmodal_attention: need rank-3 inputs with equal batch, got " +
                                shape_str(x_a.shape()) + " and " + shape_str(x_b.shape()));
  const std::size_t d_k = p.wq.shape()[1];
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_k)));

  const Tensor<T> q = matmul(x_a, p.wq);
  const Tensor<T> k = matmul(x_b, p.wk);
  const Tensor<T> v = matmul(x_b, p.wv);
  Tensor<T> scores = scale(matmul(q, transpose(k)), inv_sqrt);
  if (!mask_b.empty())
    scores = masked_fill(scores, expand_key_mask(mask_b, x_a.shape()[1]),
                         -std::numeric_limits<T>::infinity());
  CrossAttnOut<T> out;
  out.weights = softmax(scores, 2);
  out.y = matmul(out.weights, v);
  return out;
}

template <typename T>
Tensor<T> concat_head(const Tensor<T>& f_t, const Tensor<T>& f_v, const DenseParams<T>& hidden,
                      const DenseParams<T>& out) {
  return dense(relu(dense(concat(f_t, f_v, 1), hidden)), out);
}

template <typename T>
Tensor<T> crossmodal_head(const Tensor<T>& y_a, const Tensor<T>& y_b, const DenseParams<T>& out) {
  return dense(mean(concat(y_a, y_b, 1), 1), out);
}

struct FusionConfig {
  FusionKind kind = FusionKind::Concat;
  EncoderConfig vision;
  EncoderConfig text;
  int image_side = 224;
  int gate_dim = 128;
  int concat_hidden = 512;
};

template <typename T>
struct FusionOutput {
  Tensor<T> logits;  // [B x 2]
  Tensor<T> gate;    // [B x gate_dim], defined only for the Gmu kind
};

template <typename T>
class FusionModel {
 public:
  FusionConfig cfg;

  VisionEncoder<T> vision;
  TextEncoder<T> text;

  GmuParams<T> gmu;
  DenseParams<T> gmu_head;
  DenseParams<T> cat_hidden, cat_out;
  CrossAttnDirection<T> cm_to_image;  // queries from image tokens, keys/values from text
  CrossAttnDirection<T> cm_to_text;   // queries from text tokens, keys/values from image
  DenseParams<T> cm_head;

  void init(std::uint64_t seed) {
    Rng rng(seed);
    vision.cfg = cfg.vision;
    vision.image_side = cfg.image_side;
    vision.init(rng);
    text.cfg = cfg.text;
    text.init(rng);

    const std::size_t d_v = static_cast<std::size_t>(cfg.vision.width);
    const std::size_t d_t = static_cast<std::size_t>(cfg.text.width);
    switch (cfg.kind) {
      case FusionKind::Concat: {
        const std::size_t hid = static_cast<std::size_t>(cfg.concat_hidden);
        cat_hidden = {glorot<T>(rng, d_t + d_v, hid), Tensor<T>::zeros({hid}, true)};
        cat_out = {glorot<T>(rng, hid, 2), Tensor<T>::zeros({2}, true)};
        break;
      }
      case FusionKind::Gmu: {
        const std::size_t g = static_cast<std::size_t>(cfg.gate_dim);
        gmu.w_t = glorot<T>(rng, d_t, g);
        gmu.w_v = glorot<T>(rng, d_v, g);
        gmu.w_z = glorot<T>(rng, d_t + d_v, g);
        gmu.b_t = Tensor<T>::zeros({g}, true);
        gmu.b_v = Tensor<T>::zeros({g}, true);
        gmu.b_z = Tensor<T>::zeros({g}, true);
        gmu_head = {glorot<T>(rng, g, 2), Tensor<T>::zeros({2}, true)};
        break;
      }
      case FusionKind::CrossAttention: {
        if (d_t != d_v)
          throw std::invalid_argument("crossmodal fusion requires equal encoder widths");
        cm_to_image = {glorot<T>(rng, d_v, d_v), glorot<T>(rng, d_v, d_v),
                       glorot<T>(rng, d_v, d_v)};
        cm_to_text = {glorot<T>(rng, d_v, d_v), glorot<T>(rng, d_v, d_v),
                      glorot<T>(rng, d_v, d_v)};
        cm_head = {glorot<T>(rng, d_v, 2), Tensor<T>::zeros({2}, true)};
        break;
      }
    }
  }

  FusionOutput<T> forward_detail(const std::vector<const FeatureImage*>& images,
                                 const std::vector<const TokenSequence*>& seqs) const {
    if (images.size() != seqs.size())
      throw std::invalid_argument("fusion forward: image and token batch sizes differ");
    const ModalitySequence<T> vis = vision.forward(images);
    const ModalitySequence<T> txt = text.forward(seqs);

    FusionOutput<T> out;
    switch (cfg.kind) {
      case FusionKind::Concat:
        out.logits = concat_head(txt.cls, vis.cls, cat_hidden, cat_out);
        break;
      case FusionKind::Gmu: {
        const GmuOut<T> g = gmu_fuse(txt.cls, vis.cls, gmu);
        out.logits = dense(g.h, gmu_head);
        out.gate = g.z;
        break;
      }
      case FusionKind::CrossAttention: {
        const Tensor<T> y_img = crossmodal_attention(vis.tokens, txt.tokens, txt.mask, cm_to_image).y;
        const Tensor<T> y_txt =
            crossmodal_attention(txt.tokens, vis.tokens, {}, cm_to_text).y;
        out.logits = crossmodal_head(y_img, y_txt, cm_head);
        break;
      }
    }
    return out;
  }

  Tensor<T> forward(const std::vector<const FeatureImage*>& images,
                    const std::vector<const TokenSequence*>& seqs) const {
    return forward_detail(images, seqs).logits;
  }

  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    vision.named_parameters("vision", out);
    text.named_parameters("text", out);
    switch (cfg.kind) {
      case FusionKind::Concat:
        out.emplace_back("head.dense1.w", cat_hidden.w);
        out.emplace_back("head.dense1.b", cat_hidden.b);
        out.emplace_back("head.dense2.w", cat_out.w);
        out.emplace_back("head.dense2.b", cat_out.b);
        break;
      case FusionKind::Gmu:
        out.emplace_back("fusion.gmu.wt", gmu.w_t);
        out.emplace_back("fusion.gmu.wv", gmu.w_v);
        out.emplace_back("fusion.gmu.wz", gmu.w_z);
        out.emplace_back("fusion.gmu.bt", gmu.b_t);
        out.emplace_back("fusion.gmu.bv", gmu.b_v);
        out.emplace_back("fusion.gmu.bz", gmu.b_z);
        out.emplace_back("head.dense.w", gmu_head.w);
        out.emplace_back("head.dense.b", gmu_head.b);
        break;
      case FusionKind::CrossAttention:
        out.emplace_back("fusion.cm_image.wq", cm_to_image.wq);
        out.emplace_back("fusion.cm_image.wk", cm_to_image.wk);
        out.emplace_back("fusion.cm_image.wv", cm_to_image.wv);
        out.emplace_back("fusion.cm_text.wq", cm_to_text.wq);
        out.emplace_back("fusion.cm_text.wk", cm_to_text.wk);
        out.emplace_back("fusion.cm_text.wv", cm_to_text.wv);
        out.emplace_back("head.dense.w", cm_head.w);
        out.emplace_back("head.dense.b", cm_head.b);
        break;
    }
    return out;
  }

  std::vector<NamedTensorData> to_checkpoint() const {
    std::vector<NamedTensorData> out;
    auto meta = [&out](const std::string& name, float v) {
      out.push_back({name, {1}, {v}});
    };
    meta("meta.kind", static_cast<float>(static_cast<int>(cfg.kind)));
    meta("meta.image_side", static_cast<float>(cfg.image_side));
    meta("meta.gate_dim", static_cast<float>(cfg.gate_dim));
    meta("meta.concat_hidden", static_cast<float>(cfg.concat_hidden));
    meta("meta.vision.depth", static_cast<float>(cfg.vision.depth));
    meta("meta.vision.width", static_cast<float>(cfg.vision.width));
    meta("meta.vision.heads", static_cast<float>(cfg.vision.heads));
    meta("meta.vision.mlp", static_cast<float>(cfg.vision.mlp_dim));
    meta("meta.vision.patch", static_cast<float>(cfg.vision.patch));
    meta("meta.text.depth", static_cast<float>(cfg.text.depth));
    meta("meta.text.width", static_cast<float>(cfg.text.width));
    meta("meta.text.heads", static_cast<float>(cfg.text.heads));
    meta("meta.text.mlp", static_cast<float>(cfg.text.mlp_dim));
    meta("meta.text.vocab", static_cast<float>(cfg.text.vocab_size));
    meta("meta.text.max_len", static_cast<float>(cfg.text.max_len));

    for (const auto& [name, p] : named_parameters()) {
      NamedTensorData t;
      t.name = name;
      for (std::size_t d : p.shape()) t.dims.push_back(static_cast<std::uint32_t>(d));
      t.data.reserve(p.size());
      for (T v : p.value()) t.data.push_back(static_cast<float>(v));
      out.push_back(std::move(t));
    }
    return out;
  }

  static FusionModel<T> from_checkpoint(const std::vector<NamedTensorData>& tensors) {
    std::unordered_map<std::string, const NamedTensorData*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t;
    auto meta = [&by_name](const std::string& name) {
      const auto it = by_name.find(name);
      if (it == by_name.end() || it->second->data.size() != 1)
        throw std::runtime_error("checkpoint: missing meta entry " + name);
      return static_cast<int>(it->second->data[0]);
    };

    FusionModel<T> model;
    model.cfg.kind = static_cast<FusionKind>(meta("meta.kind"));
    model.cfg.image_side = meta("meta.image_side");
    model.cfg.gate_dim = meta("meta.gate_dim");
    model.cfg.concat_hidden = meta("meta.concat_hidden");
    model.cfg.vision.depth = meta("meta.vision.depth");
    model.cfg.vision.width = meta("meta.vision.width");
    model.cfg.vision.heads = meta("meta.vision.heads");
    model.cfg.vision.mlp_dim = meta("meta.vision.mlp");
    model.cfg.vision.patch = meta("meta.vision.patch");
    model.cfg.text.depth = meta("meta.text.depth");
    model.cfg.text.width = meta("meta.text.width");
    model.cfg.text.heads = meta("meta.text.heads");
    model.cfg.text.mlp_dim = meta("meta.text.mlp");
    model.cfg.text.vocab_size = meta("meta.text.vocab");
    model.cfg.text.max_len = meta("meta.text.max_len");
    model.init(0);

    for (auto& [name, p] : model.named_parameters()) {
      const auto it = by_name.find(name);
      if (it == by_name.end())
        throw std::runtime_error("checkpoint: missing parameter " + name);
      const NamedTensorData& t = *it->second;
      if (t.data.size() != p.size())
        throw std::runtime_error("checkpoint: size mismatch for " + name);
      auto& value = p.value();
      for (std::size_t i = 0; i < value.size(); ++i) value[i] = static_cast<T>(t.data[i]);
    }
    return model;
  }
};

}  // namespace multifuse
