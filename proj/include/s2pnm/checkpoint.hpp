#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "s2pnm/biasedmf.hpp"
#include "s2pnm/model.hpp"
#include "s2pnm/tensor.hpp"

namespace s2pnm {

// Binary layout (all integers little-endian):
//   "S2PN" | u32 version |
//   records: u32 name_len | name | u8 dtype | u32 rank | u64 dims[rank] | payload |
//   u64 FNV-1a checksum of every preceding byte

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF32 = 1, kF64 = 2 };

struct NamedTensor {
  std::string name;
  Tensor value;
  DType dtype = DType::kF64;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_tensors(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes);

void save_tensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

/// Full model: every named tensor plus b_g and the variant/activation codes.
void save_checkpoint(const S2pnmParams& params, const std::filesystem::path& path,
                     DType dtype = DType::kF64);
S2pnmParams load_checkpoint(const std::filesystem::path& path);

/// Static part only (written by pretraining).
void save_mf_checkpoint(const MfParams& params, const std::filesystem::path& path,
                        DType dtype = DType::kF64);
/// Reads the static tensors from either kind of checkpoint.
MfParams load_mf_checkpoint(const std::filesystem::path& path);

/// Throws DataError naming the first tensor whose shape differs.
void check_shapes(const S2pnmParams& expected, const S2pnmParams& actual);
void check_mf_shapes(std::size_t m, std::size_t n, std::size_t d_user, const MfParams& actual);

}  // namespace s2pnm
