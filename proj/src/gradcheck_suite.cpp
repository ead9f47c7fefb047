#include "multifuse/gradcheck_suite.hpp"

#include <functional>

#include "multifuse/fusion.hpp"
#include "multifuse/rng.hpp"

namespace multifuse {

namespace {

using DTensor = Tensor<double>;
using Params = std::vector<std::pair<std::string, DTensor>>;

DTensor rand_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0, double hi = 1.0,
                    bool requires_grad = true) {
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = rng.uniform(lo, hi);
  return DTensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Keeps entries away from zero so relu's kink cannot sit inside the
// finite-difference step.
DTensor rand_tensor_off_zero(Rng& rng, std::vector<std::size_t> shape) {
  std::vector<double> data(numel(shape));
  for (auto& v : data) {
    const double mag = rng.uniform(0.2, 1.0);
    v = rng.uniform01() < 0.5 ? -mag : mag;
  }
  return DTensor::from_data(std::move(shape), std::move(data), true);
}

// Pixels bounded away from zero for the same reason as rand_tensor_off_zero:
// downstream relu pre-activations should not straddle the difference step.
FeatureImage rand_image(Rng& rng, int side) {
  FeatureImage img;
  img.side = side;
  for (auto& ch : img.channels) {
    ch.resize(static_cast<std::size_t>(side) * side);
    for (auto& v : ch) {
      const double mag = rng.uniform(0.2, 1.0);
      v = static_cast<float>(rng.uniform01() < 0.5 ? -mag : mag);
    }
  }
  return img;
}

TokenSequence rand_tokens(Rng& rng, int max_len, int vocab) {
  TokenSequence seq;
  seq.vocab_size = vocab;
  seq.ids.assign(static_cast<std::size_t>(max_len), Vocab::kPad);
  seq.mask.assign(static_cast<std::size_t>(max_len), 0);
  const int words = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(max_len - 2)));
  seq.ids[0] = Vocab::kCls;
  for (int w = 0; w < words; ++w)
    seq.ids[static_cast<std::size_t>(w) + 1] = 4 + static_cast<int>(rng.below(static_cast<std::size_t>(vocab - 4)));
  seq.ids[static_cast<std::size_t>(words) + 1] = Vocab::kSep;
  for (int i = 0; i < words + 2; ++i) seq.mask[static_cast<std::size_t>(i)] = 1;
  return seq;
}

struct CaseDef {
  std::string name;
  // Builds the parameter list and a loss closure over them for one seed.
  std::function<std::pair<Params, std::function<DTensor()>>(std::uint64_t)> build;
};

void merge(GradSuiteCase& suite_case, const GradCheckReport& report, std::uint64_t seed) {
  suite_case.max_rel_err = std::max(suite_case.max_rel_err, report.max_rel_err);
  suite_case.checked += report.checked;
  if (!report.ok && suite_case.ok) {
    suite_case.ok = false;
    const auto& f = report.failures.front();
    suite_case.first_failure = "seed " + std::to_string(seed) + ", " + f.param + "[" +
                               std::to_string(f.index) + "]: analytic " +
                               std::to_string(f.analytic) + " vs numeric " +
                               std::to_string(f.numeric);
  }
}

std::vector<CaseDef> make_cases() {
  std::vector<CaseDef> cases;
  auto add_case = [&cases](std::string name, auto build) {
    cases.push_back({std::move(name), std::move(build)});
  };

  add_case("add_same_shape", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = rand_tensor(rng, {2, 3});
    auto b = rand_tensor(rng, {2, 3});
    Params p{{"a", a}, {"b", b}};
    return std::make_pair(p, std::function<DTensor()>([a, b] { return mean_all(tanh(add(a, b))); }));
  });

  add_case("add_bias_broadcast", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = rand_tensor(rng, {2, 3, 4});
    auto b = rand_tensor(rng, {4});
    Params p{{"a", a}, {"b", b}};
    return std::make_pair(p, std::function<DTensor()>([a, b] { return mean_all(tanh(add(a, b))); }));
  });

  add_case("mul", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = rand_tensor(rng, {3, 4});
    auto b = rand_tensor(rng, {3, 4});
    Params p{{"a", a}, {"b", b}};
    return std::make_pair(p, std::function<DTensor()>([a, b] { return mean_all(tanh(mul(a, b))); }));
  });

  add_case("scale_add_scalar", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = rand_tensor(rng, {2, 5});
    Params p{{"x", x}};
    return std::make_pair(p, std::function<DTensor()>([x] {
                            return mean_all(tanh(add_scalar(scale(x, 1.7), -0.3)));
                          }));
  });

  add_case("tanh", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = rand_tensor(rng, {4, 4}, -2.0, 2.0);
    Params p{{"x", x}};
    return std::make_pair(p, std::function<DTensor()>([x] { return mean_all(tanh(x)); }));
  });

  add_case("sigmoid", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = rand_tensor(rng, {4, 4}, -2.0, 2.0);
    Params p{{"x", x}};
    return std::make_pair(p, std::function<DTensor()>([x] { return mean_all(sigmoid(x)); }));
  });

  add_case("relu", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = rand_tensor_off_zero(rng, {4, 5});
    Params p{{"x", x}};
    return std::make_pair(p, std::function<DTensor()>([x] { return mean_all(relu(x)); }));
  });

  add_case("matmul_2d", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = rand_tensor(rng, {3, 4});
    auto b = rand_tensor(rng, {4, 2});
    Params p{{"a", a}, {"b", b}};
    return std::make_pair(p,
                          std::function<DTensor()>([a, b] { return mean_all(tanh(matmul(a, b))); }));
  });

  add_case("matmul_3d_2d", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = rand_tensor(rng, {2, 3, 4});
    auto b = rand_tensor(rng, {4, 2});
    Params p{{"a", a}, {"b", b}};
    return std::make_pair(p,
                          std::function<DTensor()>([a, b] { return mean_all(tanh(matmul(a, b))); }));
  });

  add_case("matmul_3d_3d", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = rand_tensor(rng, {2, 3, 4});
    auto b = rand_tensor(rng, {2, 4, 2});
    Params p{{"a", a}, {"b", b}};
    return std::make_pair(p,
                          std::function<DTensor()>([a, b] { return mean_all(tanh(matmul(a, b))); }));
  });

  add_case("transpose", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = rand_tensor(rng, {2, 3, 4});
    auto c = rand_tensor(rng, {2, 4, 3}, -1.0, 1.0, false);
    Params p{{"x", x}};
    return std::make_pair(
        p, std::function<DTensor()>([x, c] { return mean_all(mul(transpose(x), c)); }));
  });

  add_case("concat_axis1", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = rand_tensor(rng, {2, 2, 3});
    auto b = rand_tensor(rng, {2, 1, 3});
    Params p{{"a", a}, {"b", b}};
    return std::make_pair(
        p, std::function<DTensor()>([a, b] { return mean_all(tanh(concat(a, b, 1))); }));
  });

  add_case("concat_axis0_axis2", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = rand_tensor(rng, {1, 2, 3});
    auto b = rand_tensor(rng, {2, 2, 3});
    auto c = rand_tensor(rng, {3, 2, 2});
    Params p{{"a", a}, {"b", b}, {"c", c}};
    return std::make_pair(p, std::function<DTensor()>([a, b, c] {
                            return mean_all(tanh(concat(concat(a, b, 0), c, 2)));
                          }));
  });

  add_case("mean_axis", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = rand_tensor(rng, {2, 3, 4});
    Params p{{"x", x}};
    return std::make_pair(p, std::function<DTensor()>([x] { return mean_all(tanh(mean(x, 1))); }));
  });

  add_case("take_time", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = rand_tensor(rng, {2, 4, 3});
    Params p{{"x", x}};
    return std::make_pair(p,
                          std::function<DTensor()>([x] { return mean_all(tanh(take_time(x, 0))); }));
  });

  add_case("layer_norm", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = rand_tensor(rng, {2, 3, 4});
    auto c = rand_tensor(rng, {2, 3, 4}, -1.0, 1.0, false);
    Params p{{"x", x}};
    return std::make_pair(
        p, std::function<DTensor()>([x, c] { return mean_all(mul(layer_norm(x, 2), c)); }));
  });

  add_case("softmax", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = rand_tensor(rng, {2, 3, 4}, -2.0, 2.0);
    auto c = rand_tensor(rng, {2, 3, 4}, -1.0, 1.0, false);
    Params p{{"x", x}};
    return std::make_pair(
        p, std::function<DTensor()>([x, c] { return mean_all(mul(softmax(x, 2), c)); }));
  });

  add_case("masked_fill_softmax", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = rand_tensor(rng, {2, 3, 3}, -2.0, 2.0);
    auto c = rand_tensor(rng, {2, 3, 3}, -1.0, 1.0, false);
    std::vector<double> mask(18, 1.0);
    for (std::size_t row = 0; row < 6; ++row) {
      const std::size_t drop = rng.below(3);  // keep at least two live per row
      mask[row * 3 + drop] = 0.0;
    }
    Params p{{"x", x}};
    return std::make_pair(p, std::function<DTensor()>([x, c, mask] {
                            const auto filled =
                                masked_fill(x, mask, -std::numeric_limits<double>::infinity());
                            return mean_all(mul(softmax(filled, 2), c));
                          }));
  });

  add_case("embedding_lookup", [](std::uint64_t seed) {
    Rng rng(seed);
    auto table = rand_tensor(rng, {6, 3});
    std::vector<std::vector<int>> ids(2, std::vector<int>(4));
    for (auto& row : ids)
      for (auto& id : row) id = static_cast<int>(rng.below(6));
    auto c = rand_tensor(rng, {2, 4, 3}, -1.0, 1.0, false);
    Params p{{"table", table}};
    return std::make_pair(p, std::function<DTensor()>([table, ids, c] {
                            return mean_all(mul(embedding_lookup(table, ids), c));
                          }));
  });

  add_case("cross_entropy", [](std::uint64_t seed) {
    Rng rng(seed);
    auto logits = rand_tensor(rng, {3, 2}, -2.0, 2.0);
    std::vector<int> labels(3);
    for (auto& y : labels) y = static_cast<int>(rng.below(2));
    Params p{{"logits", logits}};
    return std::make_pair(
        p, std::function<DTensor()>([logits, labels] { return cross_entropy(logits, labels); }));
  });

  add_case("mhsa_masked", [](std::uint64_t seed) {
    Rng rng(seed);
    auto layer = init_encoder_layer<double>(rng, 4, 2, 8);
    auto x = rand_tensor(rng, {2, 3, 4});
    std::vector<std::vector<double>> mask{{1, 1, 0}, {1, 1, 1}};
    auto c = rand_tensor(rng, {2, 3, 4}, -1.0, 1.0, false);
    Params p{{"x", x}};
    layer_named_parameters(layer, "layer", p);
    return std::make_pair(p, std::function<DTensor()>([x, mask, layer, c] {
                            return mean_all(mul(multi_head_self_attention(x, mask, layer), c));
                          }));
  });

  add_case("encoder_layer", [](std::uint64_t seed) {
    Rng rng(seed);
    auto layer = init_encoder_layer<double>(rng, 4, 2, 8);
    auto x = rand_tensor(rng, {2, 3, 4});
    const std::vector<std::vector<double>> no_mask;
    auto c = rand_tensor(rng, {2, 3, 4}, -1.0, 1.0, false);
    Params p{{"x", x}};
    layer_named_parameters(layer, "layer", p);
    return std::make_pair(p, std::function<DTensor()>([x, no_mask, layer, c] {
                            return mean_all(mul(encoder_layer(x, no_mask, layer), c));
                          }));
  });

  add_case("vision_encoder_1layer", [](std::uint64_t seed) {
    Rng rng(seed);
    auto enc = std::make_shared<VisionEncoder<double>>();
    enc->cfg = {1, 4, 2, 8, 4, 0, 0};
    enc->image_side = 8;
    enc->init(rng);
    auto images = std::make_shared<std::vector<FeatureImage>>();
    images->push_back(rand_image(rng, 8));
    images->push_back(rand_image(rng, 8));
    auto c = rand_tensor(rng, {2, 4}, -1.0, 1.0, false);
    Params p;
    enc->named_parameters("vision", p);
    return std::make_pair(p, std::function<DTensor()>([enc, images, c] {
                            const std::vector<const FeatureImage*> ptrs{&(*images)[0],
                                                                        &(*images)[1]};
                            return mean_all(mul(enc->forward(ptrs).cls, c));
                          }));
  });

  add_case("text_encoder_1layer", [](std::uint64_t seed) {
    Rng rng(seed);
    auto enc = std::make_shared<TextEncoder<double>>();
    enc->cfg = {1, 4, 2, 8, 0, 8, 4};
    enc->init(rng);
    auto seqs = std::make_shared<std::vector<TokenSequence>>();
    seqs->push_back(rand_tokens(rng, 4, 8));
    seqs->push_back(rand_tokens(rng, 4, 8));
    auto c = rand_tensor(rng, {2, 4}, -1.0, 1.0, false);
    Params p;
    enc->named_parameters("text", p);
    return std::make_pair(p, std::function<DTensor()>([enc, seqs, c] {
                            const std::vector<const TokenSequence*> ptrs{&(*seqs)[0], &(*seqs)[1]};
                            return mean_all(mul(enc->forward(ptrs).cls, c));
                          }));
  });

  for (FusionKind kind :
       {FusionKind::Concat, FusionKind::Gmu, FusionKind::CrossAttention}) {
    add_case(std::string("fusion_") + fusion_kind_name(kind), [kind](std::uint64_t seed) {
      Rng rng(seed);
      auto model = std::make_shared<FusionModel<double>>();
      model->cfg.kind = kind;
      model->cfg.vision = {1, 4, 1, 8, 4, 0, 0};
      model->cfg.text = {1, 4, 1, 8, 0, 8, 5};
      model->cfg.image_side = 8;
      model->cfg.gate_dim = 4;
      model->cfg.concat_hidden = 8;
      model->init(seed);

      auto images = std::make_shared<std::vector<FeatureImage>>();
      auto seqs = std::make_shared<std::vector<TokenSequence>>();
      std::vector<int> labels;
      for (int b = 0; b < 2; ++b) {
        images->push_back(rand_image(rng, 8));
        seqs->push_back(rand_tokens(rng, 5, 8));
        labels.push_back(static_cast<int>(rng.below(2)));
      }
      Params p = model->named_parameters();
      return std::make_pair(p, std::function<DTensor()>([model, images, seqs, labels] {
                              std::vector<const FeatureImage*> ip;
                              std::vector<const TokenSequence*> tp;
                              for (std::size_t b = 0; b < images->size(); ++b) {
                                ip.push_back(&(*images)[b]);
                                tp.push_back(&(*seqs)[b]);
                              }
                              return cross_entropy(model->forward(ip, tp), labels);
                            }));
    });
  }

  return cases;
}

}  // namespace

std::vector<GradSuiteCase> run_gradcheck_suite(int seeds) {
  std::vector<GradSuiteCase> results;
  for (const auto& def : make_cases()) {
    GradSuiteCase out;
    out.name = def.name;
    for (int s = 1; s <= seeds; ++s) {
      auto [params, loss] = def.build(static_cast<std::uint64_t>(s));
      merge(out, grad_check(loss, params), static_cast<std::uint64_t>(s));
    }
    results.push_back(std::move(out));
  }
  return results;
}

}  // namespace multifuse
