#include "qis/nets/modules.hpp"

#include "qis/error.hpp"

namespace qis::nets {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

int norm_groups(int channels) {
  for (int g = 8; g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

nn::GroupNorm group_norm(int channels) { return nn::GroupNorm(nn::GroupNormOptions(norm_groups(channels), channels)); }

nn::Conv2d conv3x3(int in, int out, int stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

nn::Conv2d conv1x1(int in, int out) { return nn::Conv2d(nn::Conv2dOptions(in, out, 1)); }

torch::Tensor upsample_to(const torch::Tensor& x, int64_t h, int64_t w) {
  if (x.size(2) == h && x.size(3) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor global_pool(const torch::Tensor& x) { return x.mean({2, 3}); }

}  // namespace

void check_input_dims(const EncoderSpec& spec, int64_t h, int64_t w) {
  const int s = spec.max_stride();
  if (h <= 0 || w <= 0 || h % s != 0 || w % s != 0)
    throw ShapeError("input " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not divisible by the encoder stride " + std::to_string(s));
}

std::int64_t parameter_count(const torch::nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  norm1_ = register_module("norm1", group_norm(channels));
  conv1_ = register_module("conv1", conv3x3(channels, channels));
  norm2_ = register_module("norm2", group_norm(channels));
  conv2_ = register_module("conv2", conv3x3(channels, channels));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv1_(torch::gelu(norm1_(x)));
  h = conv2_(torch::gelu(norm2_(h)));
  return x + h;
}

EncoderImpl::EncoderImpl(const EncoderSpec& spec) : spec_(spec) {
  spec_.validate();
  stem_ = register_module("stem", nn::Sequential(conv3x3(spec.in_channels, spec.widths[0], 2),
                                                 group_norm(spec.widths[0]), nn::GELU()));
  int channels = spec.widths[0];
  int stride = 2;
  for (int l = 0; l < spec.levels(); ++l) {
    nn::Sequential stage;
    const int width = spec.widths[l];
    while (stride < spec.strides[l]) {
      stage->push_back(conv3x3(channels, width, 2));
      stage->push_back(group_norm(width));
      stage->push_back(nn::GELU());
      channels = width;
      stride *= 2;
    }
    if (channels != width) {
      stage->push_back(conv1x1(channels, width));
      channels = width;
    }
    for (int b = 0; b < spec.blocks[l]; ++b) stage->push_back(ResidualBlock(width));
    if (stage->is_empty()) stage->push_back(nn::Identity());
    stages_.push_back(register_module("stage" + std::to_string(l), stage));
  }
}

std::vector<torch::Tensor> EncoderImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != spec_.in_channels) throw ShapeError("encoder expects (B, C, H, W) input");
  check_input_dims(spec_, x.size(2), x.size(3));
  std::vector<torch::Tensor> pyramid;
  auto h = stem_->forward(x);
  for (auto& stage : stages_) {
    h = stage->forward(h);
    pyramid.push_back(h);
  }
  return pyramid;
}

DecoderImpl::DecoderImpl(const EncoderSpec& encoder, const std::vector<int>& widths, int out_channels) {
  const int levels = encoder.levels();
  top_ = register_module("top", conv1x1(encoder.widths[levels - 1], widths[levels - 1]));
  fuse_.resize(levels - 1);
  for (int l = levels - 2; l >= 0; --l) {
    const int in = widths[l + 1] + encoder.widths[l];
    fuse_[l] = register_module("fuse" + std::to_string(l),
                               nn::Sequential(conv3x3(in, widths[l]), group_norm(widths[l]), nn::GELU(),
                                              conv3x3(widths[l], widths[l]), group_norm(widths[l]), nn::GELU()));
  }
  out_ = register_module("out", nn::Sequential(conv3x3(widths[0], widths[0]), nn::GELU(),
                                               conv3x3(widths[0], out_channels)));
}

torch::Tensor DecoderImpl::forward(const std::vector<torch::Tensor>& pyramid, int64_t out_h, int64_t out_w) {
  auto x = top_(pyramid.back());
  for (int l = static_cast<int>(pyramid.size()) - 2; l >= 0; --l) {
    const auto& lateral = pyramid[l];
    x = upsample_to(x, lateral.size(2), lateral.size(3));
    x = fuse_[l]->forward(torch::cat({x, lateral}, 1));
  }
  return out_->forward(upsample_to(x, out_h, out_w));
}

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec) : spec_(spec) {
  spec_.validate();
  encoder_ = register_module("encoder", Encoder(spec.encoder));
  decoder_ = register_module("decoder", Decoder(spec.encoder, spec.decoder_widths, spec.out_channels));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) {
  return decoder_(encoder_(x), x.size(2), x.size(3));
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorSpec& spec) : spec_(spec) {
  spec_.validate();
  nn::Sequential body;
  int channels = spec.base_width;
  body->push_back(nn::Conv2d(nn::Conv2dOptions(spec.in_channels, channels, 4).stride(2).padding(1)));
  body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  for (int i = 1; i < spec.depth; ++i) {
    body->push_back(nn::Conv2d(nn::Conv2dOptions(channels, channels * 2, 4).stride(2).padding(1)));
    channels *= 2;
    body->push_back(group_norm(channels));
    body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  }
  body->push_back(conv3x3(channels, 1));
  body_ = register_module("body", body);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) { return body_->forward(x); }

HeadImpl::HeadImpl(const HeadSpec& spec, const EncoderSpec& encoder) : spec_(spec) {
  const int top = encoder.levels() - 1;
  const int c_top = encoder.widths[top];
  switch (spec.kind) {
    case HeadKind::lightweight_decoder:
      for (int l = 0; l < encoder.levels(); ++l)
        laterals_.push_back(register_module("lateral" + std::to_string(l), conv1x1(encoder.widths[l], spec.width)));
      // Sub-pixel output: each finest-level cell predicts its own stride x stride block.
      shuffle_ = encoder.strides[0];
      out_ = register_module("out", nn::Sequential(conv3x3(spec.width, spec.width), nn::GELU(),
                                                   conv1x1(spec.width, spec.out_dim * shuffle_ * shuffle_),
                                                   nn::PixelShuffle(shuffle_)));
      break;
    case HeadKind::patch_index_classifier: {
      if (spec.grid_rows < 1 || spec.grid_cols < 1) throw ConfigError("patch classifier needs a grid");
      // Deepest level whose map still has at least one cell per grid cell.
      level_ = 0;
      for (int l = top; l >= 0; --l) {
        if (spec.input_h / encoder.strides[l] >= spec.grid_rows && spec.input_w / encoder.strides[l] >= spec.grid_cols) {
          level_ = l;
          break;
        }
      }
      fc1_ = register_module("fc", nn::Linear(encoder.widths[level_], spec.grid_rows * spec.grid_cols));
      break;
    }
    case HeadKind::projection_mlp: {
      const int hidden = spec.hidden_dim > 0 ? spec.hidden_dim : c_top;
      fc1_ = register_module("fc1", nn::Linear(c_top, hidden));
      fc2_ = register_module("fc2", nn::Linear(hidden, spec.out_dim));
      break;
    }
    case HeadKind::linear_classifier:
      fc1_ = register_module("fc", nn::Linear(c_top, spec.out_dim));
      break;
    case HeadKind::info_regressor:
      fc1_ = register_module("fc", nn::Linear(c_top, 4));
      break;
  }
}

torch::Tensor HeadImpl::forward(const std::vector<torch::Tensor>& pyramid, int64_t out_h, int64_t out_w) {
  switch (spec_.kind) {
    case HeadKind::lightweight_decoder: {
      auto x = laterals_.back()(pyramid.back());
      for (int l = static_cast<int>(pyramid.size()) - 2; l >= 0; --l)
        x = upsample_to(x, pyramid[l].size(2), pyramid[l].size(3)) + laterals_[l](pyramid[l]);
      x = out_->forward(x);
      return x.size(2) == out_h && x.size(3) == out_w ? x : upsample_to(x, out_h, out_w);
    }
    case HeadKind::patch_index_classifier: {
      auto cells = F::adaptive_avg_pool2d(pyramid[level_],
                                          F::AdaptiveAvgPool2dFuncOptions({spec_.grid_rows, spec_.grid_cols}));
      return fc1_(cells.flatten(2).transpose(1, 2));
    }
    case HeadKind::projection_mlp: {
      auto z = fc2_(torch::gelu(fc1_(global_pool(pyramid.back()))));
      return F::normalize(z, F::NormalizeFuncOptions().dim(1));
    }
    case HeadKind::linear_classifier:
    case HeadKind::info_regressor:
      return fc1_(global_pool(pyramid.back()));
  }
  return {};
}

PretrainNetImpl::PretrainNetImpl(const EncoderSpec& encoder, const HeadSpec& head) {
  encoder_ = register_module("encoder", Encoder(encoder));
  head_ = register_module("head", Head(head, encoder));
}

torch::Tensor PretrainNetImpl::forward(const torch::Tensor& x) {
  return head_(encoder_(x), x.size(2), x.size(3));
}

Generator build_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  torch::manual_seed(seed);
  return Generator(spec);
}

Discriminator build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
  torch::manual_seed(seed);
  return Discriminator(spec);
}

PretrainNet build_pretrain_net(const EncoderSpec& encoder, const HeadSpec& head, std::uint64_t seed) {
  torch::manual_seed(seed);
  return PretrainNet(encoder, head);
}

}  // namespace qis::nets
