#include "qis/pretrain/moco.hpp"

#include "qis/error.hpp"

namespace qis::pretrain {

MoCoQueue::MoCoQueue(int64_t capacity, int64_t dim, torch::ScalarType dtype) : capacity_(capacity), dim_(dim) {
  if (capacity < 1 || dim < 1) throw ConfigError("MoCo queue: capacity and dim must be positive");
  keys_ = torch::zeros({capacity, dim}, dtype);
  patients_ = torch::full({capacity}, -1, torch::kLong);
  poses_ = torch::full({capacity}, -1, torch::kLong);
}

void MoCoQueue::enqueue(const torch::Tensor& keys) {
  auto none = torch::full({keys.size(0)}, -1, torch::kLong);
  enqueue(keys, none, none);
}

void MoCoQueue::enqueue(const torch::Tensor& keys, const torch::Tensor& patients, const torch::Tensor& poses) {
  if (keys.dim() != 2 || keys.size(1) != dim_) throw ShapeError("MoCo queue: key dim mismatch");
  const int64_t b = keys.size(0);
  if (patients.numel() != b || poses.numel() != b) throw ShapeError("MoCo queue: one label per key expected");
  if (b == 0) return;
  auto k = keys.detach().to(keys_.scalar_type());
  const double dev = (k.to(torch::kFloat64).norm(2, 1) - 1.0).abs().max().item<double>();
  if (!(dev <= 1e-5)) throw NormError("MoCo queue: keys must be unit-norm");
  auto pat = patients.detach().to(torch::kLong).reshape({-1});
  auto pose = poses.detach().to(torch::kLong).reshape({-1});
  int64_t start = 0;
  if (b > capacity_) start = b - capacity_;
  for (int64_t i = start; i < b; ++i) {
    keys_[head_].copy_(k[i]);
    patients_[head_] = pat[i];
    poses_[head_] = pose[i];
    head_ = (head_ + 1) % capacity_;
  }
  size_ = std::min(capacity_, size_ + (b - start));
}

torch::Tensor MoCoQueue::ordered(const torch::Tensor& ring) const {
  if (size_ < capacity_) return ring.narrow(0, 0, size_);
  if (head_ == 0) return ring;
  return torch::cat({ring.narrow(0, head_, capacity_ - head_), ring.narrow(0, 0, head_)}, 0);
}

torch::Tensor MoCoQueue::keys() const { return ordered(keys_); }
torch::Tensor MoCoQueue::patients() const { return ordered(patients_); }
torch::Tensor MoCoQueue::poses() const { return ordered(poses_); }

void momentum_update(torch::nn::Module& key, const torch::nn::Module& query, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("momentum must lie in [0, 1]");
  torch::NoGradGuard guard;
  auto kp = key.named_parameters();
  auto qp = query.named_parameters();
  if (kp.size() != qp.size()) throw ShapeError("momentum update: parameter sets differ");
  for (const auto& item : qp) {
    auto* dst = kp.find(item.key());
    if (dst == nullptr || dst->sizes() != item.value().sizes())
      throw ShapeError("momentum update: parameter mismatch at " + item.key());
    dst->mul_(m).add_(item.value(), 1.0 - m);
  }
  auto kb = key.named_buffers();
  for (const auto& item : query.named_buffers()) {
    auto* dst = kb.find(item.key());
    if (dst != nullptr) dst->copy_(item.value());
  }
}

}  // namespace qis::pretrain
