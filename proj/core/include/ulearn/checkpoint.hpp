#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "ulearn/model.hpp"

namespace ulearn {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::size_t epoch = 0;
  std::string config_hash;
};

/// JSON document: {format, version, epoch, config_hash, layers: [...]}.
/// Doubles are written with round-trip precision.
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ulearn
