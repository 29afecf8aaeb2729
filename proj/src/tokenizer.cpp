#include "lmk/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <stdexcept>

namespace lmk {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool is_sentence_end(std::string_view w) { return w == "." || w == "!" || w == "?"; }

}  // namespace

const std::vector<std::string>& Vocabulary::special_tokens() {
  static const std::vector<std::string> kSpecials{"[CLS]", "[SEP]", "[PAD]", "[MASK]", "[UNK]"};
  return kSpecials;
}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  tokens_ = special_tokens();
  for (auto& w : words) {
    if (w.empty()) throw std::invalid_argument("vocabulary: empty token");
    if (std::find(tokens_.begin(), tokens_.begin() + kNumSpecials, w) !=
        tokens_.begin() + kNumSpecials) {
      continue;
    }
    tokens_.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? specials_.unk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocabulary: id out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw std::runtime_error("vocabulary: malformed line '" + line + "'");
    std::size_t id = 0;
    const char* first = line.data() + tab + 1;
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, id);
    if (ec != std::errc() || ptr != last || id != tokens.size()) {
      throw std::runtime_error("vocabulary: ids must be dense and ordered");
    }
    tokens.push_back(line.substr(0, tab));
  }
  const auto& specials = special_tokens();
  if (tokens.size() < kNumSpecials || !std::equal(specials.begin(), specials.end(), tokens.begin())) {
    throw std::runtime_error("vocabulary: file must start with CLS, SEP, PAD, MASK, UNK");
  }
  return Vocabulary(std::vector<std::string>(tokens.begin() + kNumSpecials, tokens.end()));
}

ChunkingStrategy::ChunkingStrategy(Variant v) : variant_(std::move(v)) {}

ChunkingStrategy ChunkingStrategy::fixed(std::size_t g) {
  if (g < 1) throw std::invalid_argument("granularity must be >= 1");
  return ChunkingStrategy(FixedChunking{g});
}

ChunkingStrategy ChunkingStrategy::variable(std::vector<std::size_t> set) {
  if (set.empty()) throw std::invalid_argument("variable granularity set is empty");
  for (std::size_t g : set) {
    if (g < 1) throw std::invalid_argument("granularity must be >= 1");
  }
  return ChunkingStrategy(VariableChunking{std::move(set)});
}

ChunkingStrategy ChunkingStrategy::sentence() { return ChunkingStrategy(SentenceChunking{}); }

std::string ChunkingStrategy::describe() const {
  if (const auto* f = std::get_if<FixedChunking>(&variant_)) {
    return "fixed:" + std::to_string(f->granularity);
  }
  if (const auto* v = std::get_if<VariableChunking>(&variant_)) {
    std::string s = "variable:";
    for (std::size_t i = 0; i < v->granularities.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(v->granularities[i]);
    }
    return s;
  }
  return "sentence";
}

ChunkingStrategy ChunkingStrategy::parse(std::string_view text) {
  auto parse_count = [](std::string_view s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw std::invalid_argument("bad granularity '" + std::string(s) + "'");
    }
    return v;
  };
  if (text == "sentence") return sentence();
  if (text.starts_with("fixed:")) return fixed(parse_count(text.substr(6)));
  if (text == "variable") return variable();
  if (text.starts_with("variable:")) {
    std::vector<std::size_t> set;
    std::string_view rest = text.substr(9);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      set.push_back(parse_count(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return variable(std::move(set));
  }
  throw std::invalid_argument("unknown chunking strategy '" + std::string(text) + "'");
}

std::vector<std::size_t> TokenSequence::content_positions() const {
  std::vector<std::size_t> out;
  std::size_t m = 0;
  for (std::size_t i = 1; i < ids.size(); ++i) {
    while (m < marker_positions.size() && marker_positions[m] < i) ++m;
    if (m < marker_positions.size() && marker_positions[m] == i) continue;
    if (mask[i]) out.push_back(i);
  }
  return out;
}

std::vector<WordSpan> split_words(std::string_view text) {
  std::vector<WordSpan> words;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
      words.push_back({std::string(text.substr(i, j - i)), i, j});
      i = j;
    } else {
      words.push_back({std::string(1, text[i]), i, i + 1});
      ++i;
    }
  }
  return words;
}

Vocabulary build_vocab(std::span<const std::string> texts, std::size_t max_size) {
  if (max_size <= kNumSpecials) {
    throw std::invalid_argument("max_size must exceed the number of special tokens");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts) {
    for (auto& w : split_words(t)) ++counts[std::move(w.text)];
  }
  const auto& specials = Vocabulary::special_tokens();
  for (const auto& s : specials) counts.erase(s);
  if (counts.empty()) throw std::invalid_argument("empty corpus");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is lexicographic already; stable sort keeps that as the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - kNumSpecials);
  std::vector<std::string> words;
  words.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) words.push_back(std::move(ranked[i].first));
  return Vocabulary(std::move(words));
}

std::vector<TokenId> encode_text(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w.text));
  return ids;
}

std::vector<std::size_t> sentence_boundaries(std::string_view text) {
  const auto words = split_words(text);
  std::vector<std::size_t> out;
  bool word_since_boundary = false;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (!is_sentence_end(w.text)) {
      if (is_word_char(static_cast<unsigned char>(w.text[0]))) word_since_boundary = true;
      continue;
    }
    const bool at_break =
        w.end == text.size() || std::isspace(static_cast<unsigned char>(text[w.end]));
    if (!at_break) continue;
    if (!word_since_boundary && !out.empty()) {
      out.back() = i + 1;  // merge runs like "Hi. . ." into one boundary
    } else {
      out.push_back(i + 1);
    }
    word_since_boundary = false;
  }
  if (!words.empty() && (out.empty() || out.back() != words.size())) out.push_back(words.size());
  return out;
}

Chunks make_chunks(std::span<const TokenId> tokens, const ChunkingStrategy& strategy,
                   std::optional<std::span<const std::size_t>> boundaries, Rng& rng) {
  Chunks result;
  auto split_fixed = [&](std::size_t g) {
    if (g < 1) throw std::invalid_argument("granularity must be >= 1");
    for (std::size_t i = 0; i < tokens.size(); i += g) {
      const std::size_t end = std::min(tokens.size(), i + g);
      result.chunks.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                 tokens.begin() + static_cast<std::ptrdiff_t>(end));
    }
    result.granularity = g;
  };

  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, FixedChunking>) {
          split_fixed(s.granularity);
        } else if constexpr (std::is_same_v<T, VariableChunking>) {
          if (s.granularities.empty()) throw std::invalid_argument("variable granularity set is empty");
          std::uniform_int_distribution<std::size_t> pick(0, s.granularities.size() - 1);
          split_fixed(s.granularities[pick(rng)]);
        } else {
          if (!boundaries) throw std::invalid_argument("sentence chunking needs boundaries");
          std::size_t start = 0;
          for (std::size_t b : *boundaries) {
            b = std::min(b, tokens.size());
            if (b > start) {
              result.chunks.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                         tokens.begin() + static_cast<std::ptrdiff_t>(b));
              start = b;
            }
          }
          if (start < tokens.size()) {
            result.chunks.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                       tokens.end());
          }
          result.granularity.reset();
        }
      },
      strategy.variant());
  return result;
}

TokenSequence landmark_tokenize_ids(std::span<const TokenId> tokens, const SpecialIds& specials,
                                    const ChunkingStrategy& strategy, std::size_t max_len,
                                    TokenId marker, Rng& rng,
                                    std::optional<std::span<const std::size_t>> boundaries) {
  if (max_len < 2) throw std::invalid_argument("max_len too small to hold [CLS, marker]");
  const Chunks chunks = make_chunks(tokens, strategy, boundaries, rng);

  TokenSequence seq;
  seq.granularity = chunks.granularity;
  seq.ids.push_back(specials.cls);
  std::size_t used = 1;
  for (const auto& chunk : chunks.chunks) {
    if (used + 1 >= max_len) break;
    const std::size_t take = std::min(chunk.size(), max_len - used - 1);
    seq.ids.insert(seq.ids.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(take));
    seq.content_length += take;
    seq.marker_positions.push_back(seq.ids.size());
    seq.ids.push_back(marker);
    used += take + 1;
    if (take < chunk.size()) break;
  }
  if (seq.marker_positions.empty()) {
    seq.marker_positions.push_back(seq.ids.size());
    seq.ids.push_back(marker);
  }
  seq.mask.assign(seq.ids.size(), 1);
  return seq;
}

TokenSequence landmark_tokenize(std::string_view text, const Vocabulary& vocab,
                                const ChunkingStrategy& strategy, std::size_t max_len,
                                TokenId marker, Rng& rng) {
  const auto tokens = encode_text(text, vocab);
  if (strategy.is_sentence()) {
    const auto b = sentence_boundaries(text);
    return landmark_tokenize_ids(tokens, vocab.specials(), strategy, max_len, marker, rng,
                                 std::span<const std::size_t>(b));
  }
  return landmark_tokenize_ids(tokens, vocab.specials(), strategy, max_len, marker, rng);
}

TokenSequence standard_tokenize_ids(std::span<const TokenId> tokens, const SpecialIds& specials,
                                    std::size_t max_len) {
  if (max_len < 2) throw std::invalid_argument("max_len too small to hold [CLS, SEP]");
  TokenSequence seq;
  const std::size_t keep = std::min(tokens.size(), max_len - 2);
  seq.ids.reserve(keep + 2);
  seq.ids.push_back(specials.cls);
  seq.ids.insert(seq.ids.end(), tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(keep));
  seq.marker_positions.push_back(seq.ids.size());
  seq.ids.push_back(specials.sep);
  seq.content_length = keep;
  seq.mask.assign(seq.ids.size(), 1);
  return seq;
}

TokenSequence standard_tokenize(std::string_view text, const Vocabulary& vocab,
                                std::size_t max_len) {
  return standard_tokenize_ids(encode_text(text, vocab), vocab.specials(), max_len);
}

TokenSequence pad_to(TokenSequence seq, std::size_t length, TokenId pad) {
  while (seq.ids.size() < length) {
    seq.ids.push_back(pad);
    seq.mask.push_back(0);
  }
  return seq;
}

}  // namespace lmk
