#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lmk/tokenizer.hpp"
#include "lmk/trainer.hpp"

namespace lmk {

// Synthetic long-document retrieval: documents are random filler words with
// one key phrase (key_length rare words) planted at a chosen relative
// position; the query is the key phrase.
struct PlantedKeyConfig {
  std::size_t filler_words = 1500;
  std::size_t key_words = 495;
  std::size_t key_length = 3;
};

struct PlantedKeyInstance {
  std::string document;
  std::string query;
  std::vector<std::string> key;
  std::size_t target_length = 0;  // content tokens
  std::size_t key_offset = 0;     // token index of the first key word
  double relative_position = 0.0; // key_offset / (target_length - key_length)
};

class PlantedKeyGenerator {
 public:
  explicit PlantedKeyGenerator(PlantedKeyConfig config = {});

  const PlantedKeyConfig& config() const { return config_; }
  std::vector<std::string> words() const;  // filler then key words
  Vocabulary vocabulary() const;
  bool is_key_word(std::string_view word) const;

  std::vector<std::string> random_key(Rng& rng) const;
  // `length` filler words with no key.
  std::string filler_text(std::size_t length, Rng& rng) const;
  std::string query(const std::vector<std::string>& key) const;
  // Filler of `length` tokens with the key starting at
  // round(relative_position * (length - key_length)).
  PlantedKeyInstance instance(std::size_t length, const std::vector<std::string>& key,
                              double relative_position, Rng& rng) const;
  // `count` instances with pairwise-distinct key sets and key positions
  // drawn uniformly from [position_lo, position_hi].
  std::vector<PlantedKeyInstance> instances(std::size_t count, std::size_t length,
                                            double position_lo, double position_hi,
                                            Rng& rng) const;

  // Training triplets: document length uniform in [min_len, max_len], key at
  // a uniform position; each hard negative keeps the filler and swaps the key.
  TripletBatch training_batch(std::size_t batch_size, std::size_t min_len, std::size_t max_len,
                              std::size_t hard_negatives, Rng& rng) const;

 private:
  std::string filler(std::size_t i) const;
  std::string key_word(std::size_t i) const;

  PlantedKeyConfig config_;
};

}  // namespace lmk
