#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "qis/nets/specs.hpp"

namespace qis::nets {

/// Pre-activation residual block: x + conv(act(norm(conv(act(norm(x)))))).
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// (B, C_in, H, W) -> feature pyramid [(B, C_l, H/s_l, W/s_l)].
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const EncoderSpec& spec);
  std::vector<torch::Tensor> forward(const torch::Tensor& x);
  const EncoderSpec& spec() const { return spec_; }

 private:
  EncoderSpec spec_;
  torch::nn::Sequential stem_{nullptr};
  std::vector<torch::nn::Sequential> stages_;
};
TORCH_MODULE(Encoder);

/// Top-down decoder: each level upsamples, concatenates the lateral feature
/// map, and refines; the finest level is upsampled to input resolution.
class DecoderImpl : public torch::nn::Module {
 public:
  DecoderImpl(const EncoderSpec& encoder, const std::vector<int>& widths, int out_channels);
  torch::Tensor forward(const std::vector<torch::Tensor>& pyramid, int64_t out_h, int64_t out_w);

 private:
  torch::nn::Conv2d top_{nullptr};
  std::vector<torch::nn::Sequential> fuse_;
  torch::nn::Sequential out_{nullptr};
};
TORCH_MODULE(Decoder);

/// Encoder + decoder; output dims equal input dims, linear output.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);
  const GeneratorSpec& spec() const { return spec_; }
  Encoder& encoder() { return encoder_; }

 private:
  GeneratorSpec spec_;
  Encoder encoder_{nullptr};
  Decoder decoder_{nullptr};
};
TORCH_MODULE(Generator);

/// (B, 1, H, W) -> (B, 1, H/2^depth, W/2^depth) real logits.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);
  const DiscriminatorSpec& spec() const { return spec_; }

 private:
  DiscriminatorSpec spec_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Task head fed by the encoder pyramid. Output by kind:
///   lightweight_decoder    (B, out_dim, H, W)
///   patch_index_classifier (B, K, K) with K = grid cells
///   projection_mlp         (B, out_dim), unit L2 norm
///   linear_classifier      (B, out_dim)
///   info_regressor         (B, 4): age, height, weight, sex logit
class HeadImpl : public torch::nn::Module {
 public:
  HeadImpl(const HeadSpec& spec, const EncoderSpec& encoder);
  torch::Tensor forward(const std::vector<torch::Tensor>& pyramid, int64_t out_h, int64_t out_w);
  const HeadSpec& spec() const { return spec_; }
  /// Pyramid level read by the patch classifier.
  int level() const { return level_; }

 private:
  HeadSpec spec_;
  int level_ = 0;
  int shuffle_ = 1;
  std::vector<torch::nn::Conv2d> laterals_;
  torch::nn::Sequential out_{nullptr};
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(Head);

/// Encoder plus one pretraining head.
class PretrainNetImpl : public torch::nn::Module {
 public:
  PretrainNetImpl(const EncoderSpec& encoder, const HeadSpec& head);
  torch::Tensor forward(const torch::Tensor& x);
  Encoder& encoder() { return encoder_; }
  Head& head() { return head_; }

 private:
  Encoder encoder_{nullptr};
  Head head_{nullptr};
};
TORCH_MODULE(PretrainNet);

/// Deterministic construction: seeds torch's generator before building.
Generator build_generator(const GeneratorSpec& spec, std::uint64_t seed);
Discriminator build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);
PretrainNet build_pretrain_net(const EncoderSpec& encoder, const HeadSpec& head, std::uint64_t seed);

/// Throws ShapeError when (h, w) is not divisible by the encoder's max stride.
void check_input_dims(const EncoderSpec& spec, int64_t h, int64_t w);

std::int64_t parameter_count(const torch::nn::Module& m);

}  // namespace qis::nets
