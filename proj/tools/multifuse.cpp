// Command-line front end: feature extraction, transcript parsing, training,
// experiments, evaluation, and the gradient self-check.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "multifuse/audio_features.hpp"
#include "multifuse/chat.hpp"
#include "multifuse/config.hpp"
#include "multifuse/dataset.hpp"
#include "multifuse/gradcheck_suite.hpp"
#include "multifuse/train.hpp"
#include "multifuse/wav.hpp"

namespace fs = std::filesystem;
using namespace multifuse;

namespace {

std::vector<fs::path> list_files(const std::string& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_metrics(const Metrics& m) {
  auto line = [](const char* name, double v, bool defined) {
    std::cout << "  " << std::left << std::setw(12) << name << std::fixed << std::setprecision(4)
              << v << (defined ? "" : "  (undefined: zero denominator)") << "\n";
  };
  std::cout << "  counts      tp=" << m.tp << " fp=" << m.fp << " tn=" << m.tn << " fn=" << m.fn
            << "\n";
  line("accuracy", m.accuracy, true);
  line("precision", m.precision, m.precision_defined);
  line("recall", m.recall, m.recall_defined);
  line("f1", m.f1, m.f1_defined);
  line("specificity", m.specificity, m.specificity_defined);
}

// Builds the dataset named by the config and, for directory data, overwrites
// the model geometry with what was actually loaded.
std::vector<Sample> make_dataset(RunConfig& rc) {
  if (rc.data.synth) {
    SynthConfig sc;
    sc.image_side = rc.data.side;
    sc.max_len = rc.data.max_len;
    sc.vocab_size = rc.data.vocab;
    return synth_dataset(rc.data.synth_n, rc.data.snr_text, rc.data.snr_audio, rc.train.seed, sc);
  }
  std::vector<Sample> samples = load_dataset_dir(rc.data.dir, rc.data.kind);
  if (samples.empty()) throw std::runtime_error("dataset directory " + rc.data.dir + " is empty");
  rc.model.image_side = samples[0].image.side;
  rc.model.text.max_len = static_cast<int>(samples[0].tokens.ids.size());
  rc.model.text.vocab_size = samples[0].tokens.vocab_size;
  return samples;
}

std::vector<FusionKind> parse_kinds(const std::string& arg) {
  if (arg == "all")
    return {FusionKind::Concat, FusionKind::Gmu, FusionKind::CrossAttention};
  std::vector<FusionKind> kinds;
  std::stringstream ss(arg);
  std::string item;
  while (std::getline(ss, item, ',')) kinds.push_back(fusion_kind_from_name(item));
  if (kinds.empty()) throw std::runtime_error("no fusion kinds given");
  return kinds;
}

int cmd_features(const std::string& input, const std::string& kind, int side,
                 const std::string& out) {
  const auto files = list_files(input, ".wav");
  if (files.empty()) throw std::runtime_error("no .wav files in " + input);
  fs::create_directories(out);
  for (const auto& path : files) {
    const AudioSignal signal = wav::read(path.string());
    const Spectrogram spec =
        kind == "mel" ? log_mel_spectrogram(signal) : mfcc(signal);
    const FeatureImage image = build_feature_image(spec, side);
    const fs::path dst = fs::path(out) / (path.stem().string() + "." + kind + ".fimg");
    save_fimg(dst.string(), image);
    std::cout << path.filename().string() << " -> " << dst.string()
              << (image.degenerate ? "  (flat signal, zero image)" : "") << "\n";
  }
  return 0;
}

int cmd_parse_chat(const std::string& input, const std::vector<std::string>& speakers,
                   int max_len, const std::string& out) {
  const auto files = list_files(input, ".cha");
  if (files.empty()) throw std::runtime_error("no .cha files in " + input);
  const std::set<std::string> speaker_set(speakers.begin(), speakers.end());

  std::vector<Transcript> transcripts;
  std::vector<std::string> texts;
  for (const auto& path : files) {
    transcripts.push_back(parse_chat(read_file(path), speaker_set, path.stem().string()));
    texts.push_back(transcripts.back().joined_text());
  }
  const Vocab vocab = build_vocab(texts);

  std::vector<TokenRecord> records;
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    const TokenSequence seq = tokenize(transcripts[i], vocab, max_len);
    records.push_back({transcripts[i].source_id, texts[i], seq.ids, seq.mask});
  }
  const fs::path out_path(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_tokens_jsonl(out, records);
  const fs::path vocab_path = out_path.parent_path() / "vocab.json";
  save_vocab(vocab_path.string(), vocab);
  std::cout << records.size() << " transcripts -> " << out << "\n"
            << vocab.size() << " words (incl. 4 reserved) -> " << vocab_path.string() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& kind, bool paper_fidelity,
              std::int64_t seed, const std::string& out_ckpt) {
  RunConfig rc = config_path.empty() ? default_run_config() : load_run_config(config_path);
  if (!kind.empty()) rc.model.kind = fusion_kind_from_name(kind);
  if (paper_fidelity) rc.train.lr = 1e-5;
  if (seed >= 0) rc.train.seed = static_cast<std::uint64_t>(seed);

  const std::vector<Sample> data = make_dataset(rc);
  auto [train_set, val_set] = split_train_val(data, rc.train.val_fraction, rc.train.seed);
  std::cout << "kind " << fusion_kind_name(rc.model.kind) << ", " << train_set.size()
            << " train / " << val_set.size() << " val, lr " << rc.train.lr << ", seed "
            << rc.train.seed << "\n";

  FusionModel<float> model;
  model.cfg = rc.model;
  model.init(rc.train.seed);
  const TrainResult result = train(model, train_set, val_set, rc.train);

  for (const auto& rec : result.history)
    std::cout << "epoch " << std::setw(3) << rec.epoch << "  train " << std::fixed
              << std::setprecision(4) << rec.train_loss << "  val " << rec.val_loss << "  acc "
              << rec.val_metrics.accuracy << "  lr " << std::setprecision(6) << rec.lr_after
              << "\n";
  std::cout << (result.stopped_early ? "stopped early" : "epoch cap reached") << "; best epoch "
            << result.best_epoch << ", val loss " << std::setprecision(4)
            << result.best_val_loss << "\n";
  print_metrics(result.best_val_metrics);

  if (!out_ckpt.empty()) {
    save_checkpoint(out_ckpt, model.to_checkpoint());
    std::cout << "checkpoint -> " << out_ckpt << "\n";
  }
  return 0;
}

int cmd_experiment(const std::string& config_path, const std::string& kinds_arg,
                   bool paper_fidelity, const std::string& out) {
  RunConfig rc = config_path.empty() ? default_run_config() : load_run_config(config_path);
  if (paper_fidelity) rc.train.lr = 1e-5;
  const std::vector<FusionKind> kinds = parse_kinds(kinds_arg);
  const std::vector<Sample> data = make_dataset(rc);

  const nlohmann::json report = run_experiment(data, rc.model, rc.train, kinds);
  std::ofstream(out) << report.dump(2) << "\n";
  std::cout << report_table(report) << "report -> " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& data_dir, const std::string& kind,
                 int batch_size) {
  const FusionModel<float> model = FusionModel<float>::from_checkpoint(load_checkpoint(ckpt));
  const std::vector<Sample> samples = load_dataset_dir(data_dir, kind);
  if (samples.empty()) throw std::runtime_error("dataset directory " + data_dir + " is empty");
  std::vector<const Sample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);

  const EvalResult r = evaluate(model, ptrs, batch_size);
  std::cout << "kind " << fusion_kind_name(model.cfg.kind) << ", " << samples.size()
            << " samples, loss " << std::fixed << std::setprecision(4) << r.loss << "\n";
  print_metrics(r.metrics);
  return 0;
}

int cmd_gradcheck(int seeds) {
  const auto cases = run_gradcheck_suite(seeds);
  bool all_ok = true;
  for (const auto& c : cases) {
    std::cout << (c.ok ? "[ ok ] " : "[FAIL] ") << std::left << std::setw(28) << c.name
              << " max_rel " << std::scientific << std::setprecision(2) << c.max_rel_err << "  ("
              << c.checked << " entries)\n";
    if (!c.ok) {
      std::cout << "       " << c.first_failure << "\n";
      all_ok = false;
    }
  }
  std::cout << (all_ok ? "gradient check passed" : "gradient check FAILED") << " (" << seeds
            << " seeds per case)\n";
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal dementia-detection pipeline (audio + transcript fusion)"};
  app.require_subcommand(1);
  int exit_code = 0;

  {
    auto* cmd = app.add_subcommand("features", "convert .wav files to feature images");
    auto input = std::make_shared<std::string>();
    auto kind = std::make_shared<std::string>("mel");
    auto side = std::make_shared<int>(224);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--input", *input, "directory of .wav files")->required();
    cmd->add_option("--kind", *kind, "feature kind")->check(CLI::IsMember({"mel", "mfcc"}));
    cmd->add_option("--side", *side, "output image side length")->check(CLI::PositiveNumber);
    cmd->add_option("--out", *out, "output directory for .fimg files")->required();
    cmd->callback([=, &exit_code] { exit_code = cmd_features(*input, *kind, *side, *out); });
  }
  {
    auto* cmd = app.add_subcommand("parse-chat", "tokenize CHAT transcripts");
    auto input = std::make_shared<std::string>();
    auto speakers = std::make_shared<std::vector<std::string>>(std::vector<std::string>{"PAR"});
    auto max_len = std::make_shared<int>(128);
    auto out = std::make_shared<std::string>("tokens.jsonl");
    cmd->add_option("--input", *input, "directory of .cha files")->required();
    cmd->add_option("--speakers", *speakers, "speaker codes to keep");
    cmd->add_option("--max-len", *max_len, "token sequence length")->check(CLI::Range(2, 100000));
    cmd->add_option("--out", *out, "output tokens.jsonl path (vocab.json written beside it)");
    cmd->callback(
        [=, &exit_code] { exit_code = cmd_parse_chat(*input, *speakers, *max_len, *out); });
  }
  {
    auto* cmd = app.add_subcommand("train", "train one fusion model");
    auto config = std::make_shared<std::string>();
    auto kind = std::make_shared<std::string>();
    auto fidelity = std::make_shared<bool>(false);
    auto seed = std::make_shared<std::int64_t>(-1);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--config", *config, "run config file (defaults used when omitted)");
    cmd->add_option("--kind", *kind, "fusion kind")
        ->check(CLI::IsMember({"concat", "gmu", "crossattn"}));
    cmd->add_flag("--paper-fidelity", *fidelity, "use the original learning rate 1e-5");
    cmd->add_option("--seed", *seed, "override the training seed");
    cmd->add_option("--out", *out, "write the trained model checkpoint here");
    cmd->callback([=, &exit_code] {
      exit_code = cmd_train(*config, *kind, *fidelity, *seed, *out);
    });
  }
  {
    auto* cmd = app.add_subcommand("experiment", "repeated runs per fusion kind, aggregated");
    auto config = std::make_shared<std::string>();
    auto kinds = std::make_shared<std::string>("all");
    auto fidelity = std::make_shared<bool>(false);
    auto out = std::make_shared<std::string>("report.json");
    cmd->add_option("--config", *config, "run config file (defaults used when omitted)");
    cmd->add_option("--kinds", *kinds, "'all' or comma-separated fusion kinds");
    cmd->add_flag("--paper-fidelity", *fidelity, "use the original learning rate 1e-5");
    cmd->add_option("--out", *out, "report JSON path");
    cmd->callback([=, &exit_code] {
      exit_code = cmd_experiment(*config, *kinds, *fidelity, *out);
    });
  }
  {
    auto* cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset directory");
    auto ckpt = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto kind = std::make_shared<std::string>("mel");
    auto batch = std::make_shared<int>(8);
    cmd->add_option("--checkpoint", *ckpt, "model checkpoint")->required();
    cmd->add_option("--data", *data, "dataset directory")->required();
    cmd->add_option("--kind", *kind, "feature image kind to load")
        ->check(CLI::IsMember({"mel", "mfcc"}));
    cmd->add_option("--batch-size", *batch, "evaluation batch size")->check(CLI::PositiveNumber);
    cmd->callback([=, &exit_code] { exit_code = cmd_evaluate(*ckpt, *data, *kind, *batch); });
  }
  {
    auto* cmd = app.add_subcommand("gradcheck", "finite-difference check of every operation");
    auto all = std::make_shared<bool>(false);
    auto seeds = std::make_shared<int>(20);
    cmd->add_flag("--all", *all, "run the full suite (always on; kept for scripts)");
    cmd->add_option("--seeds", *seeds, "random seeds per case")->check(CLI::PositiveNumber);
    cmd->callback([=, &exit_code] { exit_code = cmd_gradcheck(*seeds); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
