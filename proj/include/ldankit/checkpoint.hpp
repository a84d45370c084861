#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldankit/nn.hpp"
#include "ldankit/optim.hpp"

namespace ldankit::nn {

nlohmann::json spec_to_json(const LayerSpec& s);
LayerSpec spec_from_json(const nlohmann::json& j);

// Checkpoint file: u64 little-endian JSON header length, JSON header
// (format version, per-net layer specs and tensor shapes, rng state,
// optimizer slots), then one float32 blob with every tensor in declaration
// order.
struct CheckpointExtras {
  std::optional<std::array<uint64_t, 4>> rng_state;
  // named optimizer accumulator groups, e.g. {"adadelta.eg", tensors...}
  std::vector<std::pair<std::string, std::vector<Tensor<float>>>> optim_slots;
  nlohmann::json meta;  // free-form provenance (config echo, phase name)
};

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Net<float>*>>& nets,
                     const CheckpointExtras& extras = {});
std::map<std::string, Net<float>> load_checkpoint(const std::filesystem::path& path,
                                                  CheckpointExtras* extras = nullptr);

// single-net convenience wrappers
void save_checkpoint(const std::filesystem::path& path, Net<float>& net,
                     const CheckpointExtras& extras = {});
Net<float> load_single_checkpoint(const std::filesystem::path& path,
                                  CheckpointExtras* extras = nullptr);

// FNV-1a of a file's bytes; used as the checkpoint hash echoed in reports.
uint64_t file_fnv1a(const std::filesystem::path& path);

}  // namespace ldankit::nn
