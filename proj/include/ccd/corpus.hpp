#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ccd/errors.hpp"
#include "ccd/vocab.hpp"

namespace ccd {

using Mat = Eigen::MatrixXd;

// One procedure step: token ids (ending in EOS) plus the per-frame feature
// matrix standing in for the visual modality.
struct StepRecord {
  std::vector<int> text;  // content ids then kEos
  Mat frames;             // n_frames x D_frame

  void validate(int vocab_size) const;
  // Text without the trailing EOS.
  std::vector<int> content() const;
};

struct ProcedureSample {
  int id = 0;
  std::vector<int> ingredients;  // sorted, unique, < n_ingredients
  std::vector<StepRecord> steps;

  int step_count() const { return static_cast<int>(steps.size()); }
  void validate(int vocab_size, int n_ingredients, int min_steps, int max_steps) const;
};

struct CorpusSplit {
  std::vector<ProcedureSample> train;
  std::vector<ProcedureSample> val;
  std::vector<ProcedureSample> test;
  uint64_t seed = 0;
  std::string grammar_version;
  Vocab vocab;

  const std::vector<ProcedureSample>& split(const std::string& name) const;
};

// Rebuilds the token->id assignment from the train split of `corpus`
// (frequency desc, then lexicographic, after the four reserved ids).
Vocab build_vocab(const CorpusSplit& corpus);

void save_corpus(const CorpusSplit& corpus, const std::string& path);
CorpusSplit load_corpus(const std::string& path);

}  // namespace ccd
