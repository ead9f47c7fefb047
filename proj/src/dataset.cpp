#include "multifuse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "multifuse/rng.hpp"

namespace multifuse {

namespace {

constexpr double kPi = 3.14159265358979323846;

FeatureImage synth_image(Rng& rng, int label, int side, double snr_audio) {
  const std::size_t s = static_cast<std::size_t>(side);
  std::array<std::vector<double>, 3> raw;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (auto& ch : raw) {
    ch.resize(s * s);
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) {
        const double phase = 2.0 * kPi * static_cast<double>(label == 0 ? y : x) / side;
        const double v = snr_audio * std::sin(phase) + rng.normal();
        ch[y * s + x] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }

  FeatureImage img;
  img.side = side;
  if (hi == lo) {
    img.degenerate = true;
    for (auto& ch : img.channels) ch.assign(s * s, 0.0f);
    return img;
  }
  for (int c = 0; c < 3; ++c) {
    auto& ch = img.channels[static_cast<std::size_t>(c)];
    ch.resize(s * s);
    for (std::size_t i = 0; i < s * s; ++i)
      ch[i] = static_cast<float>(2.0 * (raw[static_cast<std::size_t>(c)][i] - lo) / (hi - lo) - 1.0);
  }
  return img;
}

TokenSequence synth_tokens(Rng& rng, int label, double snr_text, const SynthConfig& cfg) {
  const int content = cfg.vocab_size - 4;
  if (content < 2) throw std::invalid_argument("synth_dataset: vocab too small");
  const int half = content / 2;
  const int pref_begin = label == 0 ? 4 : 4 + half;
  const int pref_count = label == 0 ? half : content - half;
  const int other_begin = label == 0 ? 4 + half : 4;
  const int other_count = content - pref_count;

  const double w_pref = std::exp(snr_text) * pref_count;
  const double p_pref = w_pref / (w_pref + other_count);

  int n_words = cfg.min_words +
                static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_words - cfg.min_words + 1)));
  n_words = std::min(n_words, cfg.max_len - 2);

  TokenSequence seq;
  seq.vocab_size = cfg.vocab_size;
  seq.ids.assign(static_cast<std::size_t>(cfg.max_len), Vocab::kPad);
  seq.mask.assign(static_cast<std::size_t>(cfg.max_len), 0);
  seq.ids[0] = Vocab::kCls;
  for (int w = 0; w < n_words; ++w) {
    const bool pref = rng.uniform01() < p_pref;
    const int begin = pref ? pref_begin : other_begin;
    const int count = pref ? pref_count : other_count;
    seq.ids[static_cast<std::size_t>(w) + 1] =
        begin + static_cast<int>(rng.below(static_cast<std::uint64_t>(count)));
  }
  seq.ids[static_cast<std::size_t>(n_words) + 1] = Vocab::kSep;
  for (int i = 0; i < n_words + 2; ++i) seq.mask[static_cast<std::size_t>(i)] = 1;
  return seq;
}

}  // namespace

std::vector<Sample> synth_dataset(int n, double snr_text, double snr_audio, std::uint64_t seed,
                                  const SynthConfig& cfg) {
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument("synth_dataset: n must be even and >= 2 for balanced classes");
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.label = i % 2;
    s.id = "synth-" + std::to_string(i);
    s.image = synth_image(rng, s.label, cfg.image_side, snr_audio);
    s.tokens = synth_tokens(rng, s.label, snr_text, cfg);
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<std::vector<const Sample*>, std::vector<const Sample*>> split_train_val(
    const std::vector<Sample>& dataset, double val_fraction, std::uint64_t seed) {
  if (val_fraction <= 0.0 || val_fraction >= 1.0)
    throw std::invalid_argument("split_train_val: val_fraction must be in (0, 1)");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const int label = dataset[i].label;
    if (label != 0 && label != 1)
      throw std::invalid_argument("split_train_val: labels must be 0 or 1");
    by_class[label].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty())
    throw std::invalid_argument("split_train_val: need at least one sample of each class");

  const double train_fraction = 1.0 - val_fraction;
  const long long train_total = std::llround(train_fraction * static_cast<double>(dataset.size()));

  long long take[2];
  double remainder[2];
  for (int c = 0; c < 2; ++c) {
    const double quota = train_fraction * static_cast<double>(by_class[c].size());
    take[c] = static_cast<long long>(std::floor(quota));
    remainder[c] = quota - static_cast<double>(take[c]);
  }
  long long extra = train_total - take[0] - take[1];
  // Largest remainder first; ties go to the lower class id.
  while (extra > 0) {
    const int c = remainder[1] > remainder[0] ? 1 : 0;
    ++take[c];
    remainder[c] = -1.0;
    --extra;
  }
  for (int c = 0; c < 2; ++c)
    take[c] = std::min<long long>(take[c], static_cast<long long>(by_class[c].size()));

  Rng rng(seed);
  std::pair<std::vector<const Sample*>, std::vector<const Sample*>> out;
  for (int c = 0; c < 2; ++c) {
    rng.shuffle(by_class[c]);
    for (std::size_t i = 0; i < by_class[c].size(); ++i) {
      const Sample* s = &dataset[by_class[c][i]];
      (static_cast<long long>(i) < take[c] ? out.first : out.second).push_back(s);
    }
  }
  return out;
}

std::vector<Sample> load_dataset_dir(const std::string& dir, const std::string& kind) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::ifstream labels(root / "labels.csv");
  if (!labels) throw std::runtime_error("dataset: cannot open " + (root / "labels.csv").string());

  std::unordered_map<std::string, TokenRecord> tokens;
  for (auto& r : read_tokens_jsonl((root / "tokens.jsonl").string())) tokens[r.id] = std::move(r);

  int vocab_size = 4;
  if (fs::exists(root / "vocab.json")) {
    vocab_size = load_vocab((root / "vocab.json").string()).size();
  } else {
    for (const auto& [id, r] : tokens)
      for (int v : r.ids) vocab_size = std::max(vocab_size, v + 1);
  }

  std::vector<Sample> out;
  std::string line;
  while (std::getline(labels, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == "id,label") continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("dataset: malformed labels.csv line: " + line);
    Sample s;
    s.id = line.substr(0, comma);
    s.label = std::stoi(line.substr(comma + 1));
    if (s.label != 0 && s.label != 1)
      throw std::runtime_error("dataset: label for " + s.id + " must be 0 or 1");

    const auto tok = tokens.find(s.id);
    if (tok == tokens.end())
      throw std::runtime_error("dataset: no tokens.jsonl record for " + s.id);
    s.tokens.ids = tok->second.ids;
    s.tokens.mask = tok->second.mask;
    s.tokens.vocab_size = vocab_size;

    s.image = load_fimg((root / (s.id + "." + kind + ".fimg")).string());
    out.push_back(std::move(s));
  }
  if (out.empty()) throw std::runtime_error("dataset: labels.csv lists no samples");
  return out;
}

}  // namespace multifuse
