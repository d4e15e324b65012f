#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace qis::pretrain {

/// Fixed-capacity FIFO of unit-norm keys with two integer label slots
/// (patient index, pose) per key.
class MoCoQueue {
 public:
  MoCoQueue(int64_t capacity, int64_t dim, torch::ScalarType dtype = torch::kFloat32);

  /// keys (B, d) unit rows (NormError beyond 1e-5); labels (B) each.
  /// When B exceeds the capacity only the last `capacity` keys are kept.
  void enqueue(const torch::Tensor& keys, const torch::Tensor& patients, const torch::Tensor& poses);
  void enqueue(const torch::Tensor& keys);

  int64_t size() const { return size_; }
  int64_t capacity() const { return capacity_; }
  int64_t dim() const { return dim_; }

  /// Stored keys and labels, oldest first.
  torch::Tensor keys() const;
  torch::Tensor patients() const;
  torch::Tensor poses() const;

 private:
  torch::Tensor ordered(const torch::Tensor& ring) const;

  int64_t capacity_, dim_;
  int64_t size_ = 0;
  int64_t head_ = 0;  // next write slot
  torch::Tensor keys_, patients_, poses_;
};

/// key <- m * key + (1 - m) * query over matching parameters; buffers copied.
void momentum_update(torch::nn::Module& key, const torch::nn::Module& query, double m);

}  // namespace qis::pretrain
