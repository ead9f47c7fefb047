#pragma once

#include <string>

#include "multifuse/fusion.hpp"
#include "multifuse/train.hpp"

namespace multifuse {

struct DataConfig {
  bool synth = true;   // generate synthetic data instead of reading a directory
  std::string dir;     // dataset directory (fimg + tokens.jsonl + labels.csv)
  std::string kind = "mel";
  int synth_n = 200;
  double snr_text = 2.0;
  double snr_audio = 2.0;
  int side = 32;
  int max_len = 24;
  int vocab = 32;  // synthetic vocabulary size
};

struct RunConfig {
  DataConfig data;
  FusionConfig model;
  TrainConfig train;
};

// Desk-scale defaults: a one-layer pair of narrow encoders over 32x32 images
// that trains in seconds per epoch on a laptop core.
RunConfig default_run_config();

// INI-style sections ([data] [vision] [text] [fusion] [train]) with key =
// value lines; '#' and ';' start comments. Unknown keys are errors.
RunConfig load_run_config(const std::string& path);

void apply_config_entry(RunConfig& cfg, const std::string& section, const std::string& key,
                        const std::string& value);

// Copies the geometry that data and model must agree on (image side, text
// length, synthetic vocab) from the data section into the model config.
void sync_model_to_data(RunConfig& cfg);

}  // namespace multifuse
