#pragma once

#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace multifuse {

struct Utterance {
  std::string speaker;
  std::string text;  // cleaned
};

struct Transcript {
  std::string source_id;
  std::vector<Utterance> utterances;

  // All cleaned utterance texts joined with single spaces.
  std::string joined_text() const;
};

// Word-level vocabulary. Ids 0..3 are reserved.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  std::unordered_map<std::string, int> word_to_id;
  std::vector<std::string> id_to_word{"<pad>", "<unk>", "<cls>", "<sep>"};

  int size() const { return static_cast<int>(id_to_word.size()); }
  int id_of(const std::string& word) const;
  void add(const std::string& word);
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> mask;
  int vocab_size = 0;
};

// Strips CHAT annotation from a raw main-tier payload: media bullets, retraced
// <group> [code] pairs, remaining [codes] and angle brackets, &-fillers, pause
// markers, and `xxx`; collapses whitespace and lowercases. Idempotent.
std::string clean_utterance(const std::string& text);

// Parses CHAT text: @headers and %tiers are discarded, *SPK: main tiers kept
// when SPK is in the filter set, tab-led lines continue the open tier.
// Unrecognized lines raise std::runtime_error naming the line number.
Transcript parse_chat(const std::string& raw, const std::set<std::string>& speakers,
                      const std::string& source_id = "");

// Whitespace split with terminal punctuation stripped; empty tokens dropped.
std::vector<std::string> split_words(const std::string& text);

// First-occurrence word order, ids starting after the reserved range.
Vocab build_vocab(const std::vector<std::string>& texts);

// [CLS] + word ids + [SEP], truncated or padded to max_len.
TokenSequence tokenize(const Transcript& transcript, const Vocab& vocab, int max_len);

// In-vocabulary words joined by spaces; special ids skipped, UNK -> "<unk>".
std::string detokenize(const TokenSequence& seq, const Vocab& vocab);

struct TokenRecord {
  std::string id;
  std::string text;
  std::vector<int> ids;
  std::vector<int> mask;
};

void write_tokens_jsonl(const std::string& path, const std::vector<TokenRecord>& records);
std::vector<TokenRecord> read_tokens_jsonl(const std::string& path);

void save_vocab(const std::string& path, const Vocab& vocab);
Vocab load_vocab(const std::string& path);

}  // namespace multifuse
