#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccd/corpus.hpp"

namespace ccd {

// Template-grammar settings. Recipes follow the fixed phase order
// prepare* -> combine -> cook -> [cook2] -> [season] -> finish, so the
// correct continuation is statistically predictable from the ingredient set
// and the observed prefix.
struct GrammarConfig {
  int n_ingredients = 24;  // inventory prefix in use (4..24)
  int k_min = 2;           // ingredients per recipe, uniform in [k_min, k_max]
  int k_max = 4;
  double p_second_cook = 0.5;
  double p_season = 0.5;
  int min_steps = 4;
  int max_steps = 9;
  int style_variants = 2;  // phrasing variants per template family (1..2)
  std::string version = "g1";

  void validate() const;
  // Closed-form mean of the step-count distribution.
  double expected_steps() const {
    return 0.5 * (k_min + k_max) + 3.0 + p_second_cook + p_season;
  }
};

// Frame-feature synthesis settings. `corpus_seed` pins the global random
// projection used for every step of a corpus.
struct NoiseConfig {
  int n_frames = 8;
  int d_frame = 64;
  double sigma = 0.1;
  double p_drop = 0.3;
  uint64_t corpus_seed = 0;

  void validate() const;
};

struct GeneratorSettings {
  GrammarConfig grammar;
  NoiseConfig noise;
  int val_count = 100;
  int test_count = 100;
};

// Which content-token occurrences of a step survive the modality drop.
// Exposed so tests can measure the information gap directly.
std::vector<char> content_keep_mask(const std::vector<int>& step_text, uint64_t sample_seed,
                                    double p_drop);

// Fixed random projection of the kept-token bag-of-words, replicated over
// n_frames rows with i.i.d. noise of scale sigma.
Mat synthesize_frames(const std::vector<int>& step_text, uint64_t sample_seed,
                      const NoiseConfig& noise, int vocab_size);

// Deterministic synthetic corpus. Identical arguments give byte-identical
// output. When `shared_vocab` is non-null the corpus is encoded with it
// instead of a vocabulary built from its own train split.
CorpusSplit generate_corpus(uint64_t seed, int n_samples, const GeneratorSettings& settings,
                            const Vocab* shared_vocab = nullptr);

// Word-level view of one generated sample, before encoding. Used by tests
// and by the vocabulary-sharing path.
std::vector<std::vector<std::string>> generate_sample_words(uint64_t sample_seed,
                                                            const GrammarConfig& grammar,
                                                            std::vector<int>* ingredients_out);

}  // namespace ccd
