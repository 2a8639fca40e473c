#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtgan/numerics.hpp"

namespace mtgan {

// Binary layout, all integers little-endian:
//   "MTGN" | u32 version | u32 config digest | u32 block count
//   per block: u32 name length | name | u64 rows | u64 cols | rows*cols f64 (row-major)
//   u32 CRC-32 of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

class Checkpoint {
 public:
  std::uint32_t digest = 0;

  void put(std::string name, Tensor value);
  void put_scalar(std::string name, double value);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;  // IndexError when absent
  double scalar(std::string_view name) const;
  const std::vector<std::pair<std::string, Tensor>>& blocks() const { return blocks_; }

  // Parameters are stored as "<prefix><name>".
  void put_params(std::string_view prefix, const ParamStore& params);
  // Copies stored values into an existing store; names and shapes must match.
  void restore_params(std::string_view prefix, ParamStore& params) const;
  void put_adam(std::string_view prefix, const AdamState& state);
  void restore_adam(std::string_view prefix, AdamState& state) const;

  std::string serialize() const;
  static Checkpoint parse(std::string_view bytes);

 private:
  std::vector<std::pair<std::string, Tensor>> blocks_;
};

// Atomic write: temp file in the same directory, then rename.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws CorruptArtifactError on bad magic, version or checksum.
Checkpoint load_checkpoint(const std::filesystem::path& path);
// As above, and refuses (ValidationError) when the digest differs.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint32_t expected_digest);

// Atomic text write used for every run artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace mtgan
