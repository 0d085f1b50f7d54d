#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "ccd/model.hpp"

namespace ccd {

// Binary checkpoint: magic, length-prefixed JSON header (schema version,
// model config, modality, vocab hash, tensor names/shapes), then raw
// little-endian doubles in header order.
struct Checkpoint {
  std::unique_ptr<AnticipationModel> model;
  uint64_t vocab_hash = 0;
};

void save_checkpoint(const AnticipationModel& model, uint64_t vocab_hash,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ccd
