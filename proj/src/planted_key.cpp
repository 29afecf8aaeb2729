#include "lmk/planted_key.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace lmk {

PlantedKeyGenerator::PlantedKeyGenerator(PlantedKeyConfig config) : config_(config) {
  if (config_.filler_words < 1 || config_.key_length < 1 ||
      config_.key_words < config_.key_length) {
    throw std::invalid_argument("planted key: need filler words and key_words >= key_length");
  }
}

std::string PlantedKeyGenerator::filler_text(std::size_t length, Rng& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, config_.filler_words - 1);
  std::string doc;
  for (std::size_t i = 0; i < length; ++i) {
    if (i) doc += ' ';
    doc += filler(pick(rng));
  }
  return doc;
}

std::string PlantedKeyGenerator::filler(std::size_t i) const { return "f" + std::to_string(i); }
std::string PlantedKeyGenerator::key_word(std::size_t i) const { return "k" + std::to_string(i); }

std::vector<std::string> PlantedKeyGenerator::words() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < config_.filler_words; ++i) out.push_back(filler(i));
  for (std::size_t i = 0; i < config_.key_words; ++i) out.push_back(key_word(i));
  return out;
}

Vocabulary PlantedKeyGenerator::vocabulary() const { return Vocabulary(words()); }

bool PlantedKeyGenerator::is_key_word(std::string_view word) const {
  return word.size() > 1 && word.front() == 'k';
}

std::vector<std::string> PlantedKeyGenerator::random_key(Rng& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, config_.key_words - 1);
  std::vector<std::size_t> chosen;
  while (chosen.size() < config_.key_length) {
    const std::size_t w = pick(rng);
    if (std::find(chosen.begin(), chosen.end(), w) == chosen.end()) chosen.push_back(w);
  }
  std::vector<std::string> key;
  for (std::size_t w : chosen) key.push_back(key_word(w));
  return key;
}

std::string PlantedKeyGenerator::query(const std::vector<std::string>& key) const {
  std::string q;
  for (const auto& w : key) {
    if (!q.empty()) q += ' ';
    q += w;
  }
  return q;
}

PlantedKeyInstance PlantedKeyGenerator::instance(std::size_t length,
                                                 const std::vector<std::string>& key,
                                                 double relative_position, Rng& rng) const {
  if (length < key.size()) throw std::invalid_argument("planted key: document shorter than key");
  relative_position = std::clamp(relative_position, 0.0, 1.0);
  const std::size_t span = length - key.size();
  const auto offset =
      static_cast<std::size_t>(std::llround(relative_position * static_cast<double>(span)));
  std::uniform_int_distribution<std::size_t> pick(0, config_.filler_words - 1);
  PlantedKeyInstance inst;
  inst.key = key;
  inst.query = query(key);
  inst.target_length = length;
  inst.key_offset = offset;
  inst.relative_position = span == 0 ? 0.0 : static_cast<double>(offset) / static_cast<double>(span);
  std::string doc;
  doc.reserve(length * 6);
  for (std::size_t i = 0; i < length; ++i) {
    if (i) doc += ' ';
    if (i >= offset && i < offset + key.size()) {
      doc += key[i - offset];
    } else {
      doc += filler(pick(rng));
    }
  }
  inst.document = std::move(doc);
  return inst;
}

std::vector<PlantedKeyInstance> PlantedKeyGenerator::instances(std::size_t count,
                                                               std::size_t length,
                                                               double position_lo,
                                                               double position_hi,
                                                               Rng& rng) const {
  if (!(position_lo <= position_hi)) throw std::invalid_argument("planted key: bad position range");
  std::set<std::vector<std::string>> used;
  std::uniform_real_distribution<double> pos(position_lo, position_hi);
  std::vector<PlantedKeyInstance> out;
  out.reserve(count);
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 100 * (count + 1)) throw std::runtime_error("planted key: key space exhausted");
    auto key = random_key(rng);
    auto sorted = key;
    std::sort(sorted.begin(), sorted.end());
    if (!used.insert(sorted).second) continue;
    out.push_back(instance(length, key, pos(rng), rng));
  }
  return out;
}

TripletBatch PlantedKeyGenerator::training_batch(std::size_t batch_size, std::size_t min_len,
                                                 std::size_t max_len, std::size_t hard_negatives,
                                                 Rng& rng) const {
  if (min_len < config_.key_length || max_len < min_len) {
    throw std::invalid_argument("planted key: bad training length range");
  }
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  TripletBatch batch;
  for (const auto& inst : instances(batch_size, config_.key_length, 0.0, 0.0, rng)) {
    // instances() only supplies distinct keys here; documents are rebuilt below.
    const std::size_t n = len(rng);
    const double p = pos(rng);
    const std::uint64_t filler_seed = rng();
    Rng filler_rng(filler_seed);
    PlantedKeyInstance positive = instance(n, inst.key, p, filler_rng);
    batch.queries.push_back(positive.query);
    batch.positives.push_back(positive.document);
    std::vector<std::string> negs;
    for (std::size_t j = 0; j < hard_negatives; ++j) {
      std::vector<std::string> other;
      do {
        other = random_key(rng);
      } while (std::is_permutation(other.begin(), other.end(), inst.key.begin()));
      Rng same_filler(filler_seed);
      negs.push_back(instance(n, other, p, same_filler).document);
    }
    batch.negatives.push_back(std::move(negs));
  }
  return batch;
}

}  // namespace lmk
