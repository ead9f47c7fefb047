#include "multifuse/config.hpp"

#include <fstream>
#include <stdexcept>

namespace multifuse {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: not a boolean: '" + v + "'");
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.model.vision.depth = 1;
  cfg.model.vision.width = 32;
  cfg.model.vision.heads = 2;
  cfg.model.vision.mlp_dim = 64;
  cfg.model.vision.patch = 8;
  cfg.model.text.depth = 1;
  cfg.model.text.width = 32;
  cfg.model.text.heads = 2;
  cfg.model.text.mlp_dim = 64;
  cfg.model.text.max_len = 24;
  cfg.model.image_side = 32;
  sync_model_to_data(cfg);  // defaults must be runnable without a config file
  return cfg;
}

void apply_config_entry(RunConfig& cfg, const std::string& section, const std::string& key,
                        const std::string& value) {
  auto fail = [&] {
    throw std::invalid_argument("config: unknown key '" + key + "' in section [" + section + "]");
  };
  try {
    if (section == "data") {
      if (key == "synth") cfg.data.synth = parse_bool(value);
      else if (key == "dir") cfg.data.dir = value;
      else if (key == "kind") cfg.data.kind = value;
      else if (key == "n") cfg.data.synth_n = std::stoi(value);
      else if (key == "snr_text") cfg.data.snr_text = std::stod(value);
      else if (key == "snr_audio") cfg.data.snr_audio = std::stod(value);
      else if (key == "side") cfg.data.side = std::stoi(value);
      else if (key == "max_len") cfg.data.max_len = std::stoi(value);
      else if (key == "vocab") cfg.data.vocab = std::stoi(value);
      else fail();
    } else if (section == "vision" || section == "text") {
      EncoderConfig& enc = section == "vision" ? cfg.model.vision : cfg.model.text;
      if (key == "depth") enc.depth = std::stoi(value);
      else if (key == "width") enc.width = std::stoi(value);
      else if (key == "heads") enc.heads = std::stoi(value);
      else if (key == "mlp") enc.mlp_dim = std::stoi(value);
      else if (key == "patch" && section == "vision") enc.patch = std::stoi(value);
      else fail();
    } else if (section == "fusion") {
      if (key == "kind") cfg.model.kind = fusion_kind_from_name(value);
      else if (key == "gate_dim") cfg.model.gate_dim = std::stoi(value);
      else if (key == "hidden") cfg.model.concat_hidden = std::stoi(value);
      else fail();
    } else if (section == "train") {
      if (key == "lr") cfg.train.lr = std::stod(value);
      else if (key == "batch") cfg.train.batch_size = std::stoi(value);
      else if (key == "max_epochs") cfg.train.max_epochs = std::stoi(value);
      else if (key == "seed") cfg.train.seed = std::stoull(value);
      else if (key == "val_fraction") cfg.train.val_fraction = std::stod(value);
      else if (key == "repetitions") cfg.train.repetitions = std::stoi(value);
      else if (key == "plateau_factor") cfg.train.plateau_factor = std::stod(value);
      else if (key == "plateau_patience") cfg.train.plateau_patience = std::stoi(value);
      else if (key == "early_stop_patience") cfg.train.early_stop_patience = std::stoi(value);
      else if (key == "min_improvement") cfg.train.min_improvement = std::stod(value);
      else fail();
    } else {
      throw std::invalid_argument("config: unknown section [" + section + "]");
    }
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad value '" + value + "' for key '" + key + "'");
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);

  RunConfig cfg = default_run_config();
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(line_no) +
                               " is not a section or key = value");
    apply_config_entry(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  sync_model_to_data(cfg);
  return cfg;
}

void sync_model_to_data(RunConfig& cfg) {
  cfg.model.image_side = cfg.data.side;
  cfg.model.text.max_len = cfg.data.max_len;
  if (cfg.data.synth) cfg.model.text.vocab_size = cfg.data.vocab;
}

}  // namespace multifuse
