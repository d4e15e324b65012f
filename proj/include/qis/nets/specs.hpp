#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace qis::nets {

/// Convolutional encoder producing one feature map per output stride.
struct EncoderSpec {
  int in_channels = 1;
  std::vector<int> widths{32, 64, 128, 256};
  std::vector<int> strides{4, 8, 16, 32};
  std::vector<int> blocks{2, 2, 2, 2};  // residual blocks per stage
  std::string family = "desk";

  /// 4 stages of 32/64/128/256 channels, two residual blocks each.
  static EncoderSpec desk();
  /// 8/16/32/64 channels, one block each; for quick CPU runs.
  static EncoderSpec tiny();
  /// Wider, deeper stages in the NFNet-F0 size class.
  static EncoderSpec paper();
  static EncoderSpec by_family(const std::string& family);

  /// Throws ConfigError.
  void validate() const;
  int levels() const { return static_cast<int>(strides.size()); }
  int max_stride() const { return strides.back(); }

  nlohmann::json to_json() const;
  static EncoderSpec from_json(const nlohmann::json& j);
  /// SHA-256 of the canonical JSON.
  std::string fingerprint() const;

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

struct GeneratorSpec {
  EncoderSpec encoder;
  std::vector<int> decoder_widths;  // one per pyramid level
  int out_channels = 1;

  /// Decoder widths of half the encoder widths (at least 8).
  static GeneratorSpec for_encoder(const EncoderSpec& encoder);

  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorSpec from_json(const nlohmann::json& j);
  std::string fingerprint() const;

  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

/// Unconditional patch discriminator.
struct DiscriminatorSpec {
  int depth = 3;  // stride-2 blocks
  int base_width = 32;
  int in_channels = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static DiscriminatorSpec from_json(const nlohmann::json& j);
  std::string fingerprint() const;

  friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;
};

enum class HeadKind {
  lightweight_decoder,     // image output (Psr, Pmp, Pbd)
  patch_index_classifier,  // K logits per grid cell (Pps)
  projection_mlp,          // unit-norm embedding (Psc, Ppac, Ppoc)
  linear_classifier,       // class logits (Ppc)
  info_regressor,          // age, height, weight, sex logit (Ppi)
};

std::string to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& s);

struct HeadSpec {
  HeadKind kind = HeadKind::lightweight_decoder;
  int out_dim = 1;       // output channels / classes / embedding dim
  int hidden_dim = 0;    // projection MLP hidden width
  int width = 64;        // lightweight decoder width
  int grid_rows = 0;     // patch classifier grid
  int grid_cols = 0;
  int input_h = 0;       // model input size; selects the classifier's pyramid level
  int input_w = 0;

  nlohmann::json to_json() const;
  static HeadSpec from_json(const nlohmann::json& j);

  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

}  // namespace qis::nets
