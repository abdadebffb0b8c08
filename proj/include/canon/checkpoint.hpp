#pragma once

#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "canon/backpack.hpp"
#include "canon/tensor.hpp"
#include "canon/transformer.hpp"

namespace canon {

// Container layout: 8-byte magic "CANON1\0\0", u64 little-endian manifest
// length, JSON manifest, then one raw blob of little-endian doubles in
// row-major order. Offsets in the manifest are byte offsets into the blob.
struct CheckpointData {
    std::string kind;  // "backpack" | "host" | "sense_delta"
    nlohmann::json config;
    std::vector<std::pair<std::string, Tensor>> tensors;
    nlohmann::json meta;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

void save_backpack(const std::string& path, const BackpackModel& model);
BackpackModel load_backpack(const std::string& path);

void save_host(const std::string& path, const HostTransformerLM& model);
HostTransformerLM load_host(const std::string& path);

// Delta checkpoints carry one [d] tensor per edited sense named
// "sense_delta/{word}/{ell}" where {word} is the vocabulary string.
void save_sense_delta(const std::string& path, const SenseDelta& delta,
                      const ModelConfig& cfg);
SenseDelta load_sense_delta(const std::string& path, const ModelConfig& cfg);

}  // namespace canon
