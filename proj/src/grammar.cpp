#include "ccd/grammar.hpp"

#include <array>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

#include "ccd/rng.hpp"

namespace ccd {

namespace {

enum class IngClass { Veg, Protein, Grain, Extra };

struct IngredientDef {
  const char* name;
  const char* prep_verb;
  IngClass cls;
};

// Fixed inventory; each ingredient keeps its own preparation verb so later
// steps depend on ingredient identity.
constexpr std::array<IngredientDef, 24> kInventory = {{
    {"onion", "chop", IngClass::Veg},
    {"carrot", "dice", IngClass::Veg},
    {"pepper", "slice", IngClass::Veg},
    {"tomato", "chop", IngClass::Veg},
    {"zucchini", "slice", IngClass::Veg},
    {"mushroom", "slice", IngClass::Veg},
    {"spinach", "rinse", IngClass::Veg},
    {"broccoli", "trim", IngClass::Veg},
    {"chicken", "cut", IngClass::Protein},
    {"beef", "cut", IngClass::Protein},
    {"tofu", "cube", IngClass::Protein},
    {"shrimp", "peel", IngClass::Protein},
    {"bacon", "chop", IngClass::Protein},
    {"sausage", "slice", IngClass::Protein},
    {"rice", "rinse", IngClass::Grain},
    {"pasta", "measure", IngClass::Grain},
    {"quinoa", "rinse", IngClass::Grain},
    {"beans", "drain", IngClass::Grain},
    {"lentils", "rinse", IngClass::Grain},
    {"potatoes", "peel", IngClass::Grain},
    {"cheese", "grate", IngClass::Extra},
    {"cream", "measure", IngClass::Extra},
    {"butter", "cube", IngClass::Extra},
    {"garlic", "mince", IngClass::Extra},
}};

struct DishDef {
  const char* noun;
  const char* vessel;            // may be two words
  const char* cook1[2];          // style variants
  const char* cook2;
  const char* finish[2];
};

constexpr std::array<DishDef, 4> kDishes = {{
    // grain + protein
    {"casserole", "baking dish",
     {"bake the casserole until golden", "bake the casserole in the oven"},
     "let the casserole rest for a few minutes",
     {"serve the casserole warm", "garnish the casserole and serve"}},
    // grain, no protein
    {"pilaf", "pot",
     {"simmer the pilaf over low heat", "cook the pilaf until the liquid is absorbed"},
     "fluff the pilaf with a fork",
     {"serve the pilaf warm", "garnish the pilaf and serve"}},
    // protein, no grain
    {"stirfry", "skillet",
     {"stir fry the mixture over high heat", "toss the mixture in the hot skillet"},
     "cook the stirfry until everything is tender",
     {"serve the stirfry warm", "garnish the stirfry and serve"}},
    // neither
    {"stew", "pot",
     {"simmer the stew over low heat", "bring the stew to a gentle boil"},
     "cover the pot and cook until thick",
     {"serve the stew warm", "garnish the stew and serve"}},
}};

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

int dish_for(const std::vector<int>& ingredients) {
  bool grain = false, protein = false;
  for (int id : ingredients) {
    IngClass c = kInventory[static_cast<size_t>(id)].cls;
    grain = grain || c == IngClass::Grain;
    protein = protein || c == IngClass::Protein;
  }
  if (grain && protein) return 0;
  if (grain) return 1;
  if (protein) return 2;
  return 3;
}

}  // namespace

void GrammarConfig::validate() const {
  if (min_steps > max_steps) throw ConfigError("grammar: min_steps > max_steps");
  if (k_min < 1 || k_min > k_max) throw ConfigError("grammar: invalid ingredient count bounds");
  if (n_ingredients < 4 || n_ingredients > static_cast<int>(kInventory.size()))
    throw ConfigError("grammar: n_ingredients out of range");
  if (k_max > n_ingredients) throw ConfigError("grammar: k_max exceeds inventory");
  if (style_variants < 1 || style_variants > 2)
    throw ConfigError("grammar: empty or oversized template family");
  if (p_second_cook < 0 || p_second_cook > 1 || p_season < 0 || p_season > 1)
    throw ConfigError("grammar: probabilities must lie in [0,1]");
  if (k_min + 3 < min_steps || k_max + 5 > max_steps)
    throw ConfigError("grammar: step-count bounds unreachable with these settings");
}

void NoiseConfig::validate() const {
  if (n_frames <= 0) throw ConfigError("noise: n_frames must be positive");
  if (d_frame <= 0) throw ConfigError("noise: d_frame must be positive");
  if (sigma < 0) throw ConfigError("noise: sigma must be non-negative");
  if (p_drop < 0 || p_drop > 1) throw ConfigError("noise: p_drop must lie in [0,1]");
}

std::vector<std::vector<std::string>> generate_sample_words(uint64_t sample_seed,
                                                            const GrammarConfig& grammar,
                                                            std::vector<int>* ingredients_out) {
  Rng rng(sample_seed);
  int k = rng.uniform_int(grammar.k_min, grammar.k_max);

  // Distinct ingredient draw, then a separate preparation order.
  std::vector<int> pool(static_cast<size_t>(grammar.n_ingredients));
  for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  rng.shuffle(pool);
  std::vector<int> chosen(pool.begin(), pool.begin() + k);
  std::vector<int> order = chosen;
  rng.shuffle(order);

  int style = grammar.style_variants > 1 ? rng.uniform_int(0, grammar.style_variants - 1) : 0;
  bool second_cook = rng.bernoulli(grammar.p_second_cook);
  bool season = rng.bernoulli(grammar.p_season);

  std::vector<int> sorted = chosen;
  std::sort(sorted.begin(), sorted.end());
  if (ingredients_out) *ingredients_out = sorted;

  const DishDef& dish = kDishes[static_cast<size_t>(dish_for(chosen))];

  std::vector<std::vector<std::string>> steps;
  for (int id : order) {
    const IngredientDef& ing = kInventory[static_cast<size_t>(id)];
    std::string text = std::string(ing.prep_verb) + " the " + ing.name;
    if (style == 1) text += " and set aside";
    steps.push_back(split_words(text));
  }
  {
    std::string text = style == 0 ? "combine the" : "add the";
    for (size_t i = 0; i < order.size(); ++i)
      text += std::string(" ") + kInventory[static_cast<size_t>(order[i])].name;
    text += style == 0 ? std::string(" in a ") + dish.vessel
                       : std::string(" to the ") + dish.vessel;
    steps.push_back(split_words(text));
  }
  steps.push_back(split_words(dish.cook1[style]));
  if (second_cook) steps.push_back(split_words(dish.cook2));
  if (season) {
    std::string text = style == 0 ? "season with salt and pepper"
                                  : std::string("season the ") + dish.noun + " with salt and pepper";
    steps.push_back(split_words(text));
  }
  steps.push_back(split_words(dish.finish[style]));
  return steps;
}

std::vector<char> content_keep_mask(const std::vector<int>& step_text, uint64_t sample_seed,
                                    double p_drop) {
  Rng rng(derive_seed(sample_seed, "drop", fnv1a64(step_text.data(),
                                                   step_text.size() * sizeof(int))));
  std::vector<char> keep(step_text.size(), 1);
  for (size_t i = 0; i < step_text.size(); ++i) {
    if (step_text[i] < Vocab::kReserved) continue;  // reserved ids carry no content
    keep[i] = rng.bernoulli(p_drop) ? 0 : 1;
  }
  return keep;
}

namespace {

// The projection is a pure function of (corpus_seed, d_frame, vocab_size);
// memoized because it is queried once per step.
const Mat& frame_projection(uint64_t corpus_seed, int d_frame, int vocab_size) {
  static std::mutex mu;
  static std::map<std::tuple<uint64_t, int, int>, Mat> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(corpus_seed, d_frame, vocab_size);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  Rng proj_rng(derive_seed(corpus_seed, "frame-projection"));
  Mat proj(d_frame, vocab_size);
  for (Eigen::Index r = 0; r < proj.rows(); ++r)
    for (Eigen::Index c = 0; c < proj.cols(); ++c) proj(r, c) = 0.5 * proj_rng.normal();
  return cache.emplace(key, std::move(proj)).first->second;
}

}  // namespace

Mat synthesize_frames(const std::vector<int>& step_text, uint64_t sample_seed,
                      const NoiseConfig& noise, int vocab_size) {
  noise.validate();
  const Mat& proj = frame_projection(noise.corpus_seed, noise.d_frame, vocab_size);

  std::vector<char> keep = content_keep_mask(step_text, sample_seed, noise.p_drop);
  Eigen::VectorXd bow = Eigen::VectorXd::Zero(vocab_size);
  for (size_t i = 0; i < step_text.size(); ++i) {
    int id = step_text[i];
    if (id >= Vocab::kReserved && id < vocab_size && keep[i]) bow(id) += 1.0;
  }
  Eigen::VectorXd base = proj * bow;

  Rng noise_rng(derive_seed(sample_seed, "frame-noise",
                            fnv1a64(step_text.data(), step_text.size() * sizeof(int))));
  Mat frames(noise.n_frames, noise.d_frame);
  for (int f = 0; f < noise.n_frames; ++f)
    for (int d = 0; d < noise.d_frame; ++d)
      frames(f, d) = base(d) + noise.sigma * noise_rng.normal();
  return frames;
}

CorpusSplit generate_corpus(uint64_t seed, int n_samples, const GeneratorSettings& settings,
                            const Vocab* shared_vocab) {
  settings.grammar.validate();
  settings.noise.validate();
  if (n_samples < 10) throw ConfigError("generate_corpus: n_samples must be >= 10");
  int train_count = n_samples - settings.val_count - settings.test_count;
  if (settings.val_count < 0 || settings.test_count < 0 || train_count < 1)
    throw ConfigError("generate_corpus: split sizes leave no training samples");

  // Word-level pass first; the vocabulary comes from the train portion.
  struct WordSample {
    std::vector<int> ingredients;
    std::vector<std::vector<std::string>> steps;
  };
  std::vector<WordSample> word_samples(static_cast<size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    uint64_t s = derive_seed(seed, "sample", static_cast<uint64_t>(i));
    word_samples[static_cast<size_t>(i)].steps =
        generate_sample_words(s, settings.grammar, &word_samples[static_cast<size_t>(i)].ingredients);
  }

  Vocab vocab;
  if (shared_vocab) {
    vocab = *shared_vocab;
  } else {
    std::map<std::string, long> counts;
    for (int i = 0; i < train_count; ++i)
      for (const auto& step : word_samples[static_cast<size_t>(i)].steps)
        for (const auto& w : step) counts[w]++;
    vocab = Vocab::from_counts(counts);
  }

  NoiseConfig noise = settings.noise;
  noise.corpus_seed = seed;

  CorpusSplit corpus;
  corpus.seed = seed;
  corpus.grammar_version = settings.grammar.version;
  corpus.vocab = vocab;
  for (int i = 0; i < n_samples; ++i) {
    ProcedureSample sample;
    sample.id = i;
    sample.ingredients = word_samples[static_cast<size_t>(i)].ingredients;
    int t = 0;
    for (const auto& words : word_samples[static_cast<size_t>(i)].steps) {
      StepRecord rec;
      rec.text = vocab.encode(words);
      rec.text.push_back(Vocab::kEos);
      uint64_t step_seed = derive_seed(derive_seed(seed, "sample", static_cast<uint64_t>(i)),
                                       "step", static_cast<uint64_t>(t));
      rec.frames = synthesize_frames(rec.text, step_seed, noise, vocab.size());
      sample.steps.push_back(std::move(rec));
      ++t;
    }
    sample.validate(vocab.size(), settings.grammar.n_ingredients, settings.grammar.min_steps,
                    settings.grammar.max_steps);
    if (i < train_count) {
      corpus.train.push_back(std::move(sample));
    } else if (i < train_count + settings.val_count) {
      corpus.val.push_back(std::move(sample));
    } else {
      corpus.test.push_back(std::move(sample));
    }
  }
  return corpus;
}

}  // namespace ccd
