#include "ccd/corpus.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

namespace ccd {

using nlohmann::json;

void StepRecord::validate(int vocab_size) const {
  if (text.empty()) throw DataError("step text is empty");
  if (text.back() != Vocab::kEos) throw DataError("step text does not end with <eos>");
  if (static_cast<int>(text.size()) - 1 > 24)
    throw DataError("step text exceeds 24 content tokens");
  for (int id : text)
    if (id < 0 || id >= vocab_size) throw DataError("step token id out of vocab range");
  if (frames.rows() < 1) throw DataError("step has no frames");
  if (!frames.allFinite()) throw DataError("step frames contain non-finite values");
}

std::vector<int> StepRecord::content() const {
  std::vector<int> out(text.begin(), text.end());
  while (!out.empty() && out.back() == Vocab::kEos) out.pop_back();
  return out;
}

void ProcedureSample::validate(int vocab_size, int n_ingredients, int min_steps,
                               int max_steps) const {
  int t = step_count();
  if (t < min_steps || t > max_steps)
    throw DataError("sample " + std::to_string(id) + ": step count " + std::to_string(t) +
                    " outside [" + std::to_string(min_steps) + "," + std::to_string(max_steps) +
                    "]");
  for (int ing : ingredients)
    if (ing < 0 || ing >= n_ingredients)
      throw DataError("sample " + std::to_string(id) + ": ingredient id out of range");
  for (const auto& s : steps) s.validate(vocab_size);
}

const std::vector<ProcedureSample>& CorpusSplit::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw InputError("unknown split: " + name);
}

Vocab build_vocab(const CorpusSplit& corpus) {
  if (corpus.train.empty()) throw DataError("build_vocab: train split is empty");
  std::map<std::string, long> counts;
  for (const auto& sample : corpus.train)
    for (const auto& step : sample.steps)
      for (int id : step.content()) counts[corpus.vocab.token(id)]++;
  return Vocab::from_counts(counts);
}

namespace {

json sample_to_json(const ProcedureSample& s) {
  json steps = json::array();
  for (const auto& st : s.steps) {
    json frames = json::array();
    for (Eigen::Index r = 0; r < st.frames.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < st.frames.cols(); ++c) row.push_back(st.frames(r, c));
      frames.push_back(std::move(row));
    }
    steps.push_back({{"text", st.text}, {"frames", std::move(frames)}});
  }
  return {{"id", s.id}, {"ingredients", s.ingredients}, {"steps", std::move(steps)}};
}

ProcedureSample sample_from_json(const json& j, int line_no) {
  auto fail = [line_no](const std::string& what) {
    throw ParseError("line " + std::to_string(line_no) + ": " + what);
  };
  ProcedureSample s;
  if (!j.is_object()) fail("record is not an object");
  if (!j.contains("id") || !j["id"].is_number_integer()) fail("missing or invalid \"id\" field");
  if (!j.contains("ingredients") || !j["ingredients"].is_array())
    fail("missing or invalid \"ingredients\" field");
  if (!j.contains("steps") || !j["steps"].is_array()) fail("missing or invalid \"steps\" field");
  s.id = j["id"].get<int>();
  for (const auto& v : j["ingredients"]) {
    if (!v.is_number_integer()) fail("non-integer ingredient id");
    s.ingredients.push_back(v.get<int>());
  }
  for (const auto& stj : j["steps"]) {
    if (!stj.is_object() || !stj.contains("text") || !stj.contains("frames"))
      fail("step record missing \"text\" or \"frames\"");
    StepRecord rec;
    for (const auto& v : stj["text"]) {
      if (!v.is_number_integer()) fail("non-integer token id");
      rec.text.push_back(v.get<int>());
    }
    const auto& fr = stj["frames"];
    if (!fr.is_array() || fr.empty()) fail("step frames must be a non-empty array");
    Eigen::Index rows = static_cast<Eigen::Index>(fr.size());
    Eigen::Index cols = static_cast<Eigen::Index>(fr[0].size());
    rec.frames.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (static_cast<Eigen::Index>(fr[r].size()) != cols) fail("ragged frame matrix");
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!fr[r][c].is_number()) fail("non-numeric frame value");
        rec.frames(r, c) = fr[r][c].get<double>();
      }
    }
    s.steps.push_back(std::move(rec));
  }
  return s;
}

}  // namespace

void save_corpus(const CorpusSplit& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  json header = {{"schema_version", 1},
                 {"vocab", corpus.vocab.tokens()},
                 {"seed", corpus.seed},
                 {"grammar", corpus.grammar_version},
                 {"splits",
                  {{"train", corpus.train.size()},
                   {"val", corpus.val.size()},
                   {"test", corpus.test.size()}}}};
  out << header.dump() << "\n";
  for (const auto* split : {&corpus.train, &corpus.val, &corpus.test})
    for (const auto& s : *split) out << sample_to_json(s).dump() << "\n";
  if (!out) throw IoError("write failed: " + path);
}

CorpusSplit load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw DataError("corpus file is empty: " + path);

  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("line 1: invalid header: ") + e.what());
  }
  if (!header.is_object() || !header.contains("schema_version"))
    throw ParseError("line 1: header missing \"schema_version\"");
  if (header["schema_version"].get<int>() != 1)
    throw VersionError("unsupported corpus schema_version " +
                       header["schema_version"].dump());
  if (!header.contains("vocab") || !header.contains("splits") || !header.contains("seed") ||
      !header.contains("grammar"))
    throw ParseError("line 1: header missing required fields");

  CorpusSplit corpus;
  corpus.vocab = Vocab::from_tokens(header["vocab"].get<std::vector<std::string>>());
  corpus.seed = header["seed"].get<uint64_t>();
  corpus.grammar_version = header["grammar"].get<std::string>();
  size_t n_train = header["splits"]["train"].get<size_t>();
  size_t n_val = header["splits"]["val"].get<size_t>();
  size_t n_test = header["splits"]["test"].get<size_t>();

  int line_no = 1;
  size_t total = n_train + n_val + n_test;
  size_t idx = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid json: " + e.what());
    }
    ProcedureSample s = sample_from_json(j, line_no);
    if (idx >= total)
      throw ParseError("line " + std::to_string(line_no) + ": more records than header declares");
    if (idx < n_train) {
      corpus.train.push_back(std::move(s));
    } else if (idx < n_train + n_val) {
      corpus.val.push_back(std::move(s));
    } else {
      corpus.test.push_back(std::move(s));
    }
    ++idx;
  }
  if (corpus.train.size() != n_train || corpus.val.size() != n_val ||
      corpus.test.size() != n_test)
    throw DataError("corpus record count does not match header splits");
  return corpus;
}

}  // namespace ccd
