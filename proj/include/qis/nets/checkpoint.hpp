#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "qis/nets/modules.hpp"

namespace qis::nets {

// .ckpt layout, little-endian:
//   "QCKP" | u16 version | u32 meta_len | meta JSON (UTF-8)
//   | u32 tensor_count | per tensor:
//       u16 name_len | name | u8 dtype (0=f32, 1=f64) | u8 ndim | i64 dims[ndim]
//       | u64 byte_len | raw data, row-major
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Named tensors plus JSON metadata. Tensor names carry a component prefix:
/// "encoder.", "decoder.", "discriminator.", "head.".
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  /// Copies every parameter and buffer of `m`, names prefixed with `prefix`.
  void add_module(const torch::nn::Module& m, const std::string& prefix = "");
  void add(const std::string& name, const torch::Tensor& t);
  const torch::Tensor* find(const std::string& name) const;
  /// Tensors whose name starts with `prefix`.
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;

  /// Fingerprint recorded for a component ("encoder", "generator", ...), or "".
  std::string fingerprint(const std::string& component) const;
  void set_fingerprint(const std::string& component, const std::string& fp);
};

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, version, truncation or trailing bytes.
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Generator + optional discriminator, with fingerprints and specs in meta.
Checkpoint capture_generator(Generator& g, Discriminator* d = nullptr);
/// Encoder + head of a pretraining net.
Checkpoint capture_pretrain(PretrainNet& net, const EncoderSpec& encoder);
/// Fresh generator/discriminator built from the specs recorded in `ckpt`
/// and loaded with its tensors.
Generator restore_generator(const Checkpoint& ckpt);
Discriminator restore_discriminator(const Checkpoint& ckpt);

/// Copies `prefix`-named tensors into the matching parameters/buffers of `m`.
/// Throws TransferError listing missing or mis-shaped names.
void load_into(torch::nn::Module& m, const Checkpoint& ckpt, const std::string& prefix);

struct TransferReport {
  std::vector<std::string> loaded;   // encoder tensors copied
  std::vector<std::string> skipped;  // checkpoint tensors left alone
  std::string checksum;              // encoder checksum after transfer
};

/// Loads the checkpoint's encoder into `dst`. The recorded encoder
/// fingerprint must equal dst's spec fingerprint, else TransferError.
TransferReport transfer_encoder(Encoder& dst, const Checkpoint& ckpt);

/// Encoder-only checkpoint (tensors under "encoder." plus the encoder spec).
Checkpoint extract_encoder(const Checkpoint& ckpt);

/// SHA-256 over (name, dtype, shape, bytes) of every tensor under `prefix`.
std::string checksum(const Checkpoint& ckpt, const std::string& prefix = "");
std::string checksum(const torch::nn::Module& m, const std::string& prefix = "");

}  // namespace qis::nets
