#include "ccd/model.hpp"

#include <cmath>
#include <set>

#include "ccd/rng.hpp"

namespace ccd {

void ModelConfig::validate() const {
  if (d <= 0 || heads <= 0 || d % heads != 0)
    throw ConfigError("model: d must be positive and divisible by heads");
  if (m_layers < 1 || n_layers < 1) throw ConfigError("model: M and N must be >= 1");
  if (enc_layers < 1) throw ConfigError("model: enc_layers must be >= 1");
  if (l_max < 1 || t_max < 1) throw ConfigError("model: l_max and t_max must be >= 1");
  if (vocab_size < 5) throw ConfigError("model: vocab_size must be >= 5");
  if (n_ingredients < 1) throw ConfigError("model: n_ingredients must be >= 1");
  if (d_frame < 1) throw ConfigError("model: d_frame must be >= 1");
  if (ffn_mult < 1) throw ConfigError("model: ffn_mult must be >= 1");
  if (modality != "text" && modality != "visual")
    throw ConfigError("model: modality must be \"text\" or \"visual\"");
}

Mat causal_mask(int n) {
  Mat m = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) m(i, j) = -1e30;
  return m;
}

namespace {

void init_uniform(Param& p, Rng& rng, double bound) {
  for (Eigen::Index c = 0; c < p.value.cols(); ++c)
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) p.value(r, c) = rng.uniform(-bound, bound);
}

}  // namespace

AnticipationModel::AnticipationModel(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(init_seed, "model-init"));
  const int d = cfg_.d;
  const int f = cfg_.ffn_mult * d;
  const double emb_bound = 1.0 / std::sqrt(static_cast<double>(d));

  auto add_embed = [&](const std::string& name, int rows, int cols) {
    Param& p = store_.add(name, rows, cols);
    init_uniform(p, rng, emb_bound);
    return &p;
  };
  auto add_affine = [&](const std::string& name, int in, int out) {
    AffineRef a;
    a.w = &store_.add(name + ".w", in, out);
    a.b = &store_.add(name + ".b", 1, out);
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    init_uniform(*a.w, rng, bound);
    init_uniform(*a.b, rng, bound);
    return a;
  };
  auto add_layer = [&](const std::string& prefix) {
    LayerRef L;
    L.ln1_g = &store_.add(prefix + ".ln1.g", 1, d);
    L.ln1_b = &store_.add(prefix + ".ln1.b", 1, d);
    L.ln1_g->value.setOnes();
    AffineRef qkv = add_affine(prefix + ".attn.qkv", d, 3 * d);
    L.wqkv = qkv.w;
    L.bqkv = qkv.b;
    AffineRef o = add_affine(prefix + ".attn.o", d, d);
    L.wo = o.w;
    L.bo = o.b;
    L.ln2_g = &store_.add(prefix + ".ln2.g", 1, d);
    L.ln2_b = &store_.add(prefix + ".ln2.b", 1, d);
    L.ln2_g->value.setOnes();
    AffineRef w1 = add_affine(prefix + ".ffn.1", d, f);
    L.w1 = w1.w;
    L.b1 = w1.b;
    AffineRef w2 = add_affine(prefix + ".ffn.2", f, d);
    L.w2 = w2.w;
    L.b2 = w2.b;
    return L;
  };
  auto add_final_ln = [&](const std::string& prefix, Param** g, Param** b) {
    *g = &store_.add(prefix + ".lnf.g", 1, d);
    *b = &store_.add(prefix + ".lnf.b", 1, d);
    (*g)->value.setOnes();
  };

  ing_embed_ = add_embed("ing.embed", cfg_.n_ingredients, d);
  ing_proj_ = add_affine("ing.proj", d, d);

  if (cfg_.is_text()) {
    tok_enc_ = add_embed("enc.tok", cfg_.vocab_size, d);
    pos_enc_ = add_embed("enc.pos", cfg_.l_max + 2, d);
    for (int i = 0; i < cfg_.enc_layers; ++i)
      enc_layers_.push_back(add_layer("enc.l" + std::to_string(i)));
    add_final_ln("enc", &enc_lnf_g_, &enc_lnf_b_);
    enc_out_ = add_affine("enc.out", d, d);
  } else {
    clip_proj_ = add_affine("clip.proj", cfg_.d_frame, d);
  }

  step_pos_ = add_embed("tmp.pos", cfg_.t_max + 1, d);
  for (int i = 0; i < cfg_.m_layers; ++i)
    tmp_layers_.push_back(add_layer("tmp.l" + std::to_string(i)));
  add_final_ln("tmp", &tmp_lnf_g_, &tmp_lnf_b_);

  tok_dec_ = add_embed("out.tok", cfg_.vocab_size, d);
  pos_dec_ = add_embed("out.pos", cfg_.l_max + 3, d);
  for (int i = 0; i < cfg_.n_layers; ++i)
    out_layers_.push_back(add_layer("out.l" + std::to_string(i)));
  add_final_ln("out", &out_lnf_g_, &out_lnf_b_);
  vocab_proj_ = add_affine("out.vocab", d, cfg_.vocab_size);
}

Var AnticipationModel::affine(Tape& t, const AffineRef& a, Var x) const {
  return t.add_rowvec(t.matmul(x, t.use(*a.w)), t.use(*a.b));
}

Var AnticipationModel::attention(Tape& t, const LayerRef& L, Var x, const Mat* mask) const {
  const int d = cfg_.d;
  const int h = cfg_.heads;
  const int dh = d / h;
  Var qkv = t.add_rowvec(t.matmul(x, t.use(*L.wqkv)), t.use(*L.bqkv));
  std::vector<Var> head_outs;
  head_outs.reserve(static_cast<size_t>(h));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int i = 0; i < h; ++i) {
    Var q = t.slice_cols(qkv, i * dh, dh);
    Var k = t.slice_cols(qkv, d + i * dh, dh);
    Var v = t.slice_cols(qkv, 2 * d + i * dh, dh);
    Var scores = t.scale(t.matmul_nt(q, k), inv_sqrt);
    Var attn = t.softmax_rows(scores, mask);
    head_outs.push_back(t.matmul(attn, v));
  }
  Var merged = h == 1 ? head_outs[0] : t.concat_cols(head_outs);
  return t.add_rowvec(t.matmul(merged, t.use(*L.wo)), t.use(*L.bo));
}

Var AnticipationModel::layer_apply(Tape& t, const LayerRef& L, Var x, const Mat* mask) const {
  // pre-norm residual blocks
  Var h1 = t.layernorm_rows(x, t.use(*L.ln1_g), t.use(*L.ln1_b));
  x = t.add(x, attention(t, L, h1, mask));
  Var h2 = t.layernorm_rows(x, t.use(*L.ln2_g), t.use(*L.ln2_b));
  Var f = t.add_rowvec(t.matmul(h2, t.use(*L.w1)), t.use(*L.b1));
  f = t.gelu(f);
  f = t.add_rowvec(t.matmul(f, t.use(*L.w2)), t.use(*L.b2));
  return t.add(x, f);
}

Var AnticipationModel::encode_clip(Tape& t, const Mat& frames) const {
  if (cfg_.is_text()) throw InputError("encode_clip called on a text-modality model");
  if (frames.rows() < 1) throw InputError("encode_clip: no frames");
  if (frames.cols() != cfg_.d_frame) throw InputError("encode_clip: frame width mismatch");
  if (!frames.allFinite()) throw InputError("encode_clip: non-finite frame values");
  Var x = t.leaf(frames);
  return affine(t, clip_proj_, t.max_rows(x));
}

Var AnticipationModel::encode_ingredients(Tape& t, const std::vector<int>& ids) const {
  std::set<int> uniq(ids.begin(), ids.end());
  for (int id : uniq)
    if (id < 0 || id >= cfg_.n_ingredients)
      throw InputError("encode_ingredients: id out of range: " + std::to_string(id));
  if (uniq.empty()) return affine(t, ing_proj_, t.leaf(Mat::Zero(1, cfg_.d)));
  std::vector<int> rows(uniq.begin(), uniq.end());
  Var sel = t.row_select(t.use(*ing_embed_), rows);
  // N-hot times embedding matrix = sum of the selected rows.
  Var summed = t.scale(t.mean_rows(sel), static_cast<double>(rows.size()));
  return affine(t, ing_proj_, summed);
}

Var AnticipationModel::encode_text_step(Tape& t, const std::vector<int>& tokens) const {
  if (!cfg_.is_text()) throw InputError("encode_text_step called on a visual-modality model");
  if (tokens.empty()) throw InputError("encode_text_step: empty token sequence");
  if (tokens.back() != Vocab::kEos) throw InputError("encode_text_step: sequence must end in <eos>");
  if (static_cast<int>(tokens.size()) > cfg_.l_max + 1)
    throw InputError("encode_text_step: sequence too long");
  for (int id : tokens)
    if (id < 0 || id >= cfg_.vocab_size) throw InputError("encode_text_step: token id out of range");
  std::vector<int> pos(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) pos[i] = static_cast<int>(i);
  Var x = t.add(t.row_select(t.use(*tok_enc_), tokens), t.row_select(t.use(*pos_enc_), pos));
  for (const auto& L : enc_layers_) x = layer_apply(t, L, x, nullptr);
  x = t.layernorm_rows(x, t.use(*enc_lnf_g_), t.use(*enc_lnf_b_));
  return affine(t, enc_out_, t.mean_rows(x));
}

AnticipationModel::TemporalOut AnticipationModel::temporal_forward(Tape& t, Var step_feats) const {
  int n = static_cast<int>(t.val(step_feats).rows());
  if (n < 1 || n > cfg_.t_max + 1)
    throw InputError("temporal_forward: sequence length outside [1, t_max+1]");
  std::vector<int> pos(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) pos[static_cast<size_t>(i)] = i;
  Var x = t.add(step_feats, t.row_select(t.use(*step_pos_), pos));
  Mat mask = causal_mask(n);
  TemporalOut out;
  for (const auto& L : tmp_layers_) {
    x = layer_apply(t, L, x, &mask);
    out.hidden.push_back(x);
  }
  out.dec_feats = t.layernorm_rows(x, t.use(*tmp_lnf_g_), t.use(*tmp_lnf_b_));
  return out;
}

AnticipationModel::DecodeOut AnticipationModel::run_output_module(
    Tape& t, Var dec_feat, const std::vector<int>& tokens_in) const {
  // sequence: [anticipated feature, BOS, tokens...]
  std::vector<int> toks;
  toks.reserve(tokens_in.size() + 1);
  toks.push_back(Vocab::kBos);
  toks.insert(toks.end(), tokens_in.begin(), tokens_in.end());
  int n = static_cast<int>(toks.size()) + 1;
  std::vector<int> pos(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) pos[static_cast<size_t>(i)] = i;
  Var emb = t.row_select(t.use(*tok_dec_), toks);
  Var x = t.add(t.concat_rows({dec_feat, emb}), t.row_select(t.use(*pos_dec_), pos));
  Mat mask = causal_mask(n);
  DecodeOut out;
  for (const auto& L : out_layers_) {
    x = layer_apply(t, L, x, &mask);
    // tap source: mean over the token positions (memory slot excluded)
    out.pooled.push_back(t.mean_rows(t.slice_rows(x, 1, n - 1)));
  }
  x = t.layernorm_rows(x, t.use(*out_lnf_g_), t.use(*out_lnf_b_));
  out.logits = affine(t, vocab_proj_, t.slice_rows(x, 1, n - 1));
  return out;
}

AnticipationModel::DecodeOut AnticipationModel::decode_teacher_forcing(
    Tape& t, Var dec_feat, const std::vector<int>& gt_tokens) const {
  if (static_cast<int>(gt_tokens.size()) > cfg_.l_max + 1)
    throw InputError("decode_teacher_forcing: ground-truth sequence too long");
  for (int id : gt_tokens)
    if (id < 0 || id >= cfg_.vocab_size)
      throw InputError("decode_teacher_forcing: token id out of range");
  return run_output_module(t, dec_feat, gt_tokens);
}

std::vector<int> AnticipationModel::generate(const Mat& dec_feat) const {
  if (dec_feat.rows() != 1 || dec_feat.cols() != cfg_.d)
    throw InputError("generate: dec_feat must be 1 x d");
  std::vector<int> out;
  while (static_cast<int>(out.size()) < cfg_.l_max) {
    Tape t;
    Var feat = t.leaf(dec_feat);
    DecodeOut dec = run_output_module(t, feat, out);
    const Mat& logits = t.val(dec.logits);
    Eigen::Index last = logits.rows() - 1;
    int best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(last, c) > logits(last, best)) best = static_cast<int>(c);
    if (best == Vocab::kEos) break;
    out.push_back(best);
  }
  return out;
}

Var AnticipationModel::encode_step(Tape& t, const StepRecord& step) const {
  return cfg_.is_text() ? encode_text_step(t, step.text) : encode_clip(t, step.frames);
}

ForwardTrace AnticipationModel::trace(Tape& t, const ProcedureSample& sample,
                                      bool with_decode) const {
  if (sample.steps.empty()) throw InputError("trace: sample has no steps");
  std::vector<Var> feats;
  feats.reserve(sample.steps.size() + 1);
  feats.push_back(encode_ingredients(t, sample.ingredients));
  for (const auto& step : sample.steps) feats.push_back(encode_step(t, step));

  ForwardTrace trace;
  trace.t_steps = static_cast<int>(sample.steps.size());
  trace.clip_feats = t.concat_rows(feats);
  TemporalOut tmp = temporal_forward(t, trace.clip_feats);
  trace.dec_feats = tmp.dec_feats;
  trace.temporal_hidden = std::move(tmp.hidden);

  if (with_decode) {
    for (int step = 0; step < trace.t_steps; ++step) {
      Var feat = t.slice_rows(trace.dec_feats, step, 1);
      DecodeOut dec = decode_teacher_forcing(t, feat, sample.steps[static_cast<size_t>(step)].text);
      trace.step_logits.push_back(dec.logits);
      trace.step_targets.push_back(caption_targets(sample.steps[static_cast<size_t>(step)].text));
      trace.output_hidden.push_back(std::move(dec.pooled));
    }
  }
  return trace;
}

std::vector<int> caption_targets(const std::vector<int>& gt_tokens) {
  std::vector<int> targets;
  targets.reserve(gt_tokens.size() + 1);
  for (int id : gt_tokens) targets.push_back(id == Vocab::kPad ? -1 : id);
  targets.push_back(-1);  // row scoring the token after the last input
  return targets;
}

Var caption_loss(Tape& t, Var logits, const std::vector<int>& gt_tokens) {
  std::vector<int> targets = caption_targets(gt_tokens);
  int count = 0;
  Var sum = t.cross_entropy_sum(logits, targets, &count);
  if (count == 0) throw InputError("caption_loss: all target positions are PAD");
  return t.scale(sum, 1.0 / static_cast<double>(count));
}

}  // namespace ccd
