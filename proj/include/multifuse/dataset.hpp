#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "multifuse/audio_features.hpp"
#include "multifuse/chat.hpp"

namespace multifuse {

struct Sample {
  std::string id;
  FeatureImage image;
  TokenSequence tokens;
  int label = 0;  // 0 = non-AD, 1 = AD
};

struct SynthConfig {
  int image_side = 32;
  int max_len = 24;
  int vocab_size = 32;  // ids 4.. are content words, split into two class halves
  int min_words = 6;
  int max_words = 18;
};

// Class-conditional toy data: images carry a class-dependent sinusoid pattern
// scaled by snr_audio under unit Gaussian noise; token sequences prefer a
// class-specific half of the vocabulary with strength snr_text. Labels
// alternate, so counts are exactly balanced; n must be even.
std::vector<Sample> synth_dataset(int n, double snr_text, double snr_audio, std::uint64_t seed,
                                  const SynthConfig& cfg = {});

// Stratified shuffle split: train size = round((1 - val_fraction) * n), filled
// per class by largest remainder.
std::pair<std::vector<const Sample*>, std::vector<const Sample*>> split_train_val(
    const std::vector<Sample>& dataset, double val_fraction, std::uint64_t seed);

// Loads a directory of <id>.<kind>.fimg images plus tokens.jsonl and
// labels.csv ("id,label" per line). `kind` is "mel" or "mfcc".
std::vector<Sample> load_dataset_dir(const std::string& dir, const std::string& kind);

}  // namespace multifuse
