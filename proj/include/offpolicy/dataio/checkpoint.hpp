#ifndef OFFPOLICY_DATAIO_CHECKPOINT_HPP_
#define OFFPOLICY_DATAIO_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "offpolicy/numkit/parameters.hpp"
#include "offpolicy/policies/policy.hpp"

namespace offpolicy::dataio {

// Binary layout, all integers little-endian:
//   "OPSC" | u32 version | u64 len + config JSON | u64 len + rng state |
//   u32 entry count | per entry: u32 len + name, u32 rank, u64 dims...,
//   f64 values | u64 FNV-1a of every preceding byte.
constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  numkit::Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  nlohmann::json config;
  std::string rng_state;
  std::vector<CheckpointEntry> entries;
};

Checkpoint make_checkpoint(const numkit::ParameterSet& params, nlohmann::json config, std::string rng_state);

std::string encode_checkpoint(const Checkpoint& checkpoint);
// ValidationError on bad magic, unknown version, truncation or checksum mismatch.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies entry values into `params`; names and shapes must match exactly.
void restore_parameters(numkit::ParameterSet& params, const Checkpoint& checkpoint);

// Policy checkpoints keep the policy description under config["policy"].
void save_policy(const std::filesystem::path& path, const policies::Policy& policy,
                 nlohmann::json extra = nlohmann::json::object(), const std::string& rng_state = "");
std::unique_ptr<policies::Policy> load_policy(const std::filesystem::path& path);
std::unique_ptr<policies::Policy> policy_from_checkpoint(const Checkpoint& checkpoint);

std::uint64_t fnv1a(const std::string& bytes);

}  // namespace offpolicy::dataio

#endif  // OFFPOLICY_DATAIO_CHECKPOINT_HPP_
