#pragma once

#include <string>
#include <vector>

#include "ccd/corpus.hpp"
#include "ccd/tensor.hpp"

namespace ccd {

struct ModelConfig {
  int d = 768;       // hidden width
  int m_layers = 2;  // temporal module depth
  int n_layers = 3;  // output module depth
  int heads = 8;
  int l_max = 24;  // max generated content length
  int t_max = 12;  // max step count (position 0 is the ingredients step)
  int vocab_size = 0;
  int n_ingredients = 0;
  int d_frame = 64;
  int enc_layers = 1;  // text step-encoder depth
  int ffn_mult = 4;
  std::string modality;  // "text" | "visual"

  void validate() const;
  bool is_text() const { return modality == "text"; }
};

struct AffineRef {
  Param* w = nullptr;
  Param* b = nullptr;
};

struct LayerRef {
  Param *ln1_g, *ln1_b, *wqkv, *bqkv, *wo, *bo, *ln2_g, *ln2_b, *w1, *b1, *w2, *b2;
};

// Everything produced by one teacher-forced pass over a sample. Vars refer
// to the tape the pass ran on.
struct ForwardTrace {
  Var clip_feats;                    // (T+1) x d, position 0 = ingredients
  Var dec_feats;                     // (T+1) x d, row t anticipates step t+1
  std::vector<Var> temporal_hidden;  // M entries, each (T+1) x d
  std::vector<Var> step_logits;      // T entries, (len_t+1) x V
  std::vector<std::vector<int>> step_targets;  // aligned with step_logits; -1 = ignore
  std::vector<std::vector<Var>> output_hidden;  // T x N pooled 1 x d states
  int t_steps = 0;
};

// Sequence-to-sequence anticipation model: modality-specific step encoder,
// M-layer causal temporal module, N-layer weight-shared output module.
class AnticipationModel {
 public:
  AnticipationModel(const ModelConfig& cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  uint64_t param_hash() const { return store_.value_hash(); }

  // Element-wise max over frames, then an affine map to width d.
  Var encode_clip(Tape& t, const Mat& frames) const;
  // N-hot ingredient embedding (sum of selected rows), then affine to d.
  Var encode_ingredients(Tape& t, const std::vector<int>& ids) const;
  // Unmasked transformer over tokens, mean-pooled, affine to d. Text only.
  Var encode_text_step(Tape& t, const std::vector<int>& tokens) const;

  struct TemporalOut {
    Var dec_feats;
    std::vector<Var> hidden;
  };
  TemporalOut temporal_forward(Tape& t, Var step_feats) const;

  struct DecodeOut {
    Var logits;               // (L+1) x V; row i scores token i+1
    std::vector<Var> pooled;  // N per-layer hidden states, mean over token positions
  };
  DecodeOut decode_teacher_forcing(Tape& t, Var dec_feat, const std::vector<int>& gt_tokens) const;

  // Greedy decode from BOS until EOS or l_max content tokens; ties break to
  // the lowest token id. Returns content ids (no EOS).
  std::vector<int> generate(const Mat& dec_feat) const;

  // Full teacher-forced pass. `with_decode` false skips the output module
  // (used when only encoder/temporal taps are needed).
  ForwardTrace trace(Tape& t, const ProcedureSample& sample, bool with_decode = true) const;

  // Step feature in this model's modality (text of frames).
  Var encode_step(Tape& t, const StepRecord& step) const;

 private:
  ModelConfig cfg_;
  ParamStore store_;

  // parameter handles
  Param* ing_embed_ = nullptr;
  AffineRef ing_proj_;
  Param* tok_enc_ = nullptr;
  Param* pos_enc_ = nullptr;
  std::vector<LayerRef> enc_layers_;
  Param *enc_lnf_g_ = nullptr, *enc_lnf_b_ = nullptr;
  AffineRef enc_out_;
  AffineRef clip_proj_;
  Param* step_pos_ = nullptr;
  std::vector<LayerRef> tmp_layers_;
  Param *tmp_lnf_g_ = nullptr, *tmp_lnf_b_ = nullptr;
  Param* tok_dec_ = nullptr;
  Param* pos_dec_ = nullptr;
  std::vector<LayerRef> out_layers_;
  Param *out_lnf_g_ = nullptr, *out_lnf_b_ = nullptr;
  AffineRef vocab_proj_;

  Var layer_apply(Tape& t, const LayerRef& L, Var x, const Mat* mask) const;
  Var attention(Tape& t, const LayerRef& L, Var x, const Mat* mask) const;
  Var affine(Tape& t, const AffineRef& a, Var x) const;
  // Builds the decoder stack over [dec_feat, BOS, tokens...]; shared by
  // teacher forcing and greedy generation.
  DecodeOut run_output_module(Tape& t, Var dec_feat, const std::vector<int>& tokens_in) const;
};

// Mean token-level cross-entropy of one step, PAD positions masked.
Var caption_loss(Tape& t, Var logits, const std::vector<int>& gt_tokens);

// Targets aligned with decode_teacher_forcing logits rows; the trailing row
// (which scores the token after EOS) is masked with -1, as are PAD targets.
std::vector<int> caption_targets(const std::vector<int>& gt_tokens);

Mat causal_mask(int n);

}  // namespace ccd
