#pragma once

#include <string>

#include "ctxscope/model.hpp"

namespace ctxscope {

// Binary layout: "CTXSCKPT", u64 header length, JSON header (config and a
// name/shape/offset table), then little-endian f64 tensor payloads.
void save_checkpoint(const std::string& path, const ModelWeights& weights);

// Throws CorruptArtifact on a bad magic, header or payload size.
ModelWeights load_checkpoint(const std::string& path);

}  // namespace ctxscope
