#include "multifuse/chat.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace multifuse {

namespace {

constexpr char kBullet = '\x15';

std::string strip_bullets(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool inside = false;
  for (char c : s) {
    if (c == kBullet) {
      inside = !inside;
      continue;
    }
    if (!inside) out += c;
  }
  return out;
}

// Removes bracketed codes; a code directly preceded by an angle group takes
// the group with it (CHAT retracing: `<old> [//] new` keeps only `new`).
std::string strip_codes(const std::string& s) {
  std::string out = s;
  for (;;) {
    const std::size_t open = out.find('[');
    if (open == std::string::npos) break;
    std::size_t close = open;
    int depth = 0;
    for (; close < out.size(); ++close) {
      if (out[close] == '[') ++depth;
      if (out[close] == ']' && --depth == 0) break;
    }
    if (close >= out.size()) close = out.size() - 1;  // unmatched: drop the rest

    std::size_t start = open;
    std::size_t before = open;
    while (before > 0 && std::isspace(static_cast<unsigned char>(out[before - 1]))) --before;
    if (before > 0 && out[before - 1] == '>') {
      int adepth = 0;
      std::size_t g = before - 1;
      for (;; --g) {
        if (out[g] == '>') ++adepth;
        if (out[g] == '<' && --adepth == 0) break;
        if (g == 0) break;
      }
      if (out[g] == '<') start = g;
    }
    out.erase(start, close - start + 1);
  }
  return out;
}

bool is_pause_token(const std::string& t) { return t == "(.)" || t == "(..)" || t == "(...)"; }

}  // namespace

std::string Transcript::joined_text() const {
  std::string out;
  for (const auto& u : utterances) {
    if (u.text.empty()) continue;
    if (!out.empty()) out += ' ';
    out += u.text;
  }
  return out;
}

int Vocab::id_of(const std::string& word) const {
  const auto it = word_to_id.find(word);
  return it == word_to_id.end() ? kUnk : it->second;
}

void Vocab::add(const std::string& word) {
  if (word_to_id.count(word)) return;
  word_to_id.emplace(word, size());
  id_to_word.push_back(word);
}

std::string clean_utterance(const std::string& text) {
  std::string s = strip_codes(strip_bullets(text));

  // Angle groups not consumed by a code keep their words.
  std::erase(s, '<');
  std::erase(s, '>');

  std::string out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '&' || is_pause_token(tok) || tok == "xxx") continue;
    if (!out.empty()) out += ' ';
    for (char c : tok) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

Transcript parse_chat(const std::string& raw, const std::set<std::string>& speakers,
                      const std::string& source_id) {
  Transcript t;
  t.source_id = source_id;

  enum class Tier { None, Main, Dependent };
  Tier open = Tier::None;
  std::string speaker;
  std::string payload;

  auto flush = [&] {
    if (open == Tier::Main && speakers.count(speaker))
      t.utterances.push_back({speaker, clean_utterance(payload)});
    open = Tier::None;
    payload.clear();
  };

  std::istringstream in(raw);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    if (line[0] == '\t') {
      if (open == Tier::None)
        throw std::runtime_error("parse_chat: line " + std::to_string(line_no) +
                                 ": continuation without an open tier");
      if (open == Tier::Main) payload += ' ' + line.substr(1);
      continue;
    }

    flush();
    if (line[0] == '@') continue;
    if (line[0] == '%') {
      open = Tier::Dependent;
      continue;
    }
    if (line[0] == '*') {
      const std::size_t colon = line.find(':');
      if (colon == std::string::npos || colon + 1 >= line.size() || line[colon + 1] != '\t')
        throw std::runtime_error("parse_chat: line " + std::to_string(line_no) +
                                 ": main tier missing ':' followed by tab");
      speaker = line.substr(1, colon - 1);
      payload = line.substr(colon + 2);
      open = Tier::Main;
      continue;
    }
    throw std::runtime_error("parse_chat: line " + std::to_string(line_no) +
                             ": not a header, tier, or continuation");
  }
  flush();
  return t;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    while (!tok.empty()) {
      const char c = tok.back();
      if (c == '.' || c == ',' || c == '?' || c == '!' || c == ';' || c == ':')
        tok.pop_back();
      else
        break;
    }
    if (!tok.empty()) words.push_back(tok);
  }
  return words;
}

Vocab build_vocab(const std::vector<std::string>& texts) {
  Vocab v;
  for (const auto& text : texts)
    for (const auto& w : split_words(text)) v.add(w);
  return v;
}

TokenSequence tokenize(const Transcript& transcript, const Vocab& vocab, int max_len) {
  if (max_len < 2) throw std::invalid_argument("tokenize: max_len must be >= 2");

  std::vector<int> ids;
  ids.push_back(Vocab::kCls);
  for (const auto& w : split_words(transcript.joined_text())) ids.push_back(vocab.id_of(w));
  ids.push_back(Vocab::kSep);

  TokenSequence seq;
  seq.vocab_size = vocab.size();
  seq.ids.assign(static_cast<std::size_t>(max_len), Vocab::kPad);
  seq.mask.assign(static_cast<std::size_t>(max_len), 0);
  const std::size_t n = std::min(ids.size(), static_cast<std::size_t>(max_len));
  for (std::size_t i = 0; i < n; ++i) {
    seq.ids[i] = ids[i];
    seq.mask[i] = 1;
  }
  return seq;
}

std::string detokenize(const TokenSequence& seq, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (seq.mask[i] == 0) break;
    const int id = seq.ids[i];
    if (id == Vocab::kPad || id == Vocab::kCls || id == Vocab::kSep) continue;
    if (!out.empty()) out += ' ';
    out += id < vocab.size() ? vocab.id_to_word[static_cast<std::size_t>(id)] : "<unk>";
  }
  return out;
}

void write_tokens_jsonl(const std::string& path, const std::vector<TokenRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("tokens: cannot write " + path);
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id}, {"text", r.text}, {"ids", r.ids}, {"mask", r.mask}};
    out << j.dump() << '\n';
  }
}

std::vector<TokenRecord> read_tokens_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("tokens: cannot open " + path);
  std::vector<TokenRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    TokenRecord r;
    r.id = j.at("id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.ids = j.at("ids").get<std::vector<int>>();
    r.mask = j.at("mask").get<std::vector<int>>();
    records.push_back(std::move(r));
  }
  return records;
}

void save_vocab(const std::string& path, const Vocab& vocab) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("vocab: cannot write " + path);
  out << nlohmann::json(vocab.id_to_word).dump() << '\n';
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("vocab: cannot open " + path);
  nlohmann::json j;
  in >> j;
  Vocab v;
  v.id_to_word = j.get<std::vector<std::string>>();
  if (v.id_to_word.size() < 4) throw std::runtime_error("vocab: missing reserved entries in " + path);
  v.word_to_id.clear();
  for (std::size_t i = 4; i < v.id_to_word.size(); ++i)
    v.word_to_id.emplace(v.id_to_word[i], static_cast<int>(i));
  return v;
}

}  // namespace multifuse
