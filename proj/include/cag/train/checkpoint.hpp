#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <stdexcept>

#include "cag/network/model.hpp"

namespace cag::train {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The file's version field differs from kCheckpointVersion.
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct Checkpoint {
  net::NetworkConfig config;
  std::size_t epoch = 0;
  std::unique_ptr<net::Model> model;
};

// JSON holding the network config, every named parameter and BN buffer.
// Written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const net::Model& model, std::size_t epoch);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cag::train
