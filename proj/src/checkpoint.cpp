#include "ccd/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace ccd {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'C', 'D', 'C', 'K', 'P', 'T', '1'};

json config_to_json(const ModelConfig& c) {
  return {{"d", c.d},
          {"m_layers", c.m_layers},
          {"n_layers", c.n_layers},
          {"heads", c.heads},
          {"l_max", c.l_max},
          {"t_max", c.t_max},
          {"vocab_size", c.vocab_size},
          {"n_ingredients", c.n_ingredients},
          {"d_frame", c.d_frame},
          {"enc_layers", c.enc_layers},
          {"ffn_mult", c.ffn_mult},
          {"modality", c.modality}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d = j.at("d").get<int>();
  c.m_layers = j.at("m_layers").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.l_max = j.at("l_max").get<int>();
  c.t_max = j.at("t_max").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.n_ingredients = j.at("n_ingredients").get<int>();
  c.d_frame = j.at("d_frame").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.ffn_mult = j.at("ffn_mult").get<int>();
  c.modality = j.at("modality").get<std::string>();
  return c;
}

}  // namespace

void save_checkpoint(const AnticipationModel& model, uint64_t vocab_hash,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);

  json params = json::array();
  for (const Param* p : model.params().all())
    params.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  json header = {{"schema_version", 1},
                 {"config", config_to_json(model.config())},
                 {"modality", model.config().modality},
                 {"vocab_hash", vocab_hash},
                 {"params", std::move(params)}};
  std::string hs = header.dump();
  uint64_t hlen = hs.size();

  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Param* p : model.params().all())
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(p->value.size())));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw VersionError("not a checkpoint file: " + path);
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen == 0 || hlen > (1ull << 30)) throw ParseError("corrupt checkpoint header length");
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ParseError("truncated checkpoint header");

  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid checkpoint header: ") + e.what());
  }
  if (header.at("schema_version").get<int>() != 1)
    throw VersionError("unsupported checkpoint schema_version");

  Checkpoint ckpt;
  ckpt.vocab_hash = header.at("vocab_hash").get<uint64_t>();
  ModelConfig cfg = config_from_json(header.at("config"));
  // Construction order defines the canonical tensor list; the header must agree.
  ckpt.model = std::make_unique<AnticipationModel>(cfg, 0);
  auto params = ckpt.model->params().all();
  const json& plist = header.at("params");
  if (plist.size() != params.size())
    throw VersionError("checkpoint parameter list does not match model config");
  for (size_t i = 0; i < params.size(); ++i) {
    const json& pj = plist[i];
    if (pj.at("name").get<std::string>() != params[i]->name ||
        pj.at("rows").get<Eigen::Index>() != params[i]->value.rows() ||
        pj.at("cols").get<Eigen::Index>() != params[i]->value.cols())
      throw VersionError("checkpoint tensor mismatch at " + params[i]->name);
    in.read(reinterpret_cast<char*>(params[i]->value.data()),
            static_cast<std::streamsize>(sizeof(double) *
                                         static_cast<size_t>(params[i]->value.size())));
    if (!in) throw ParseError("truncated checkpoint tensor data at " + params[i]->name);
  }
  return ckpt;
}

}  // namespace ccd
