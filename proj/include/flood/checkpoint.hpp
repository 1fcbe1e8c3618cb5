#pragma once

#include <string>

#include "flood/models.hpp"

namespace flood {

// Self-contained binary checkpoint: model config, topology document,
// channel manifest, scaler statistics, named float64 parameter tensors,
// and training provenance. A checkpoint is sufficient to reconstruct the
// model without the original dataset.
void save_checkpoint(const std::string& path, const Model& model,
                     double train_seconds, std::uint64_t seed);

struct LoadedModel {
  std::unique_ptr<Model> model;
  double train_seconds = 0.0;
  std::uint64_t seed = 0;
};

// Rebuilds the model from a checkpoint. Throws DataError when the file is
// malformed or its tensors do not match the architecture they claim.
LoadedModel load_checkpoint(const std::string& path);

}  // namespace flood
