#pragma once

#include <string>

#include "kcflat/nn.hpp"

namespace kcflat::nn {

// Checkpoint file: magic "KCN1", u64 LE manifest length, UTF-8 JSON
// manifest (graph topology, parameter shapes, caller metadata), then the
// parameter blobs as little-endian float64 in manifest order.
void save_checkpoint(const std::string &path, const ModelGraph &g, const std::string &meta_json);

struct LoadedCheckpoint {
  ModelGraph graph;
  std::string meta_json;
};

LoadedCheckpoint load_checkpoint(const std::string &path);

}  // namespace kcflat::nn
