#include "qis/pretrain/losses.hpp"

#include "qis/error.hpp"

namespace qis::pretrain {

namespace F = torch::nn::functional;

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw ShapeError(std::string(what) + ": shape mismatch");
}

void require_unit_rows(const torch::Tensor& x, const char* what) {
  if (x.dim() != 2) throw ShapeError(std::string(what) + ": expected (B, d)");
  if (x.size(0) == 0) return;
  const double dev = (x.detach().norm(2, 1) - 1.0).abs().max().item<double>();
  if (!(dev <= 1e-3)) throw NormError(std::string(what) + ": rows are not unit-normalized");
}

}  // namespace

torch::Tensor loss_self_reconstruction(const torch::Tensor& recon, const torch::Tensor& input) {
  require_same_shape(recon, input, "self-reconstruction loss");
  return (recon - input).pow(2).mean();
}

torch::Tensor patch_mask(const imaging::PatchGrid& grid, const std::vector<std::vector<int>>& masked_indices,
                         torch::ScalarType dtype) {
  const int64_t b = static_cast<int64_t>(masked_indices.size());
  auto cells = torch::zeros({b, 1, grid.rows, grid.cols}, torch::kFloat32);
  auto acc = cells.accessor<float, 4>();
  for (int64_t i = 0; i < b; ++i) {
    for (int idx : masked_indices[i]) {
      if (idx < 0 || idx >= grid.count()) throw GridError("patch index out of range");
      acc[i][0][idx / grid.cols][idx % grid.cols] = 1.0f;
    }
  }
  auto full = cells.repeat_interleave(grid.patch_h, 2).repeat_interleave(grid.patch_w, 3);
  return full.to(dtype);
}

torch::Tensor loss_masked_patch(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& mask) {
  require_same_shape(pred, target, "masked-patch loss");
  if (mask.size(0) != pred.size(0) || mask.size(2) != pred.size(2) || mask.size(3) != pred.size(3))
    throw ShapeError("masked-patch loss: mask shape mismatch");
  auto m = mask.to(pred.scalar_type()).expand_as(pred);
  const auto count = m.sum();
  if (count.item<double>() <= 0.0) throw ConfigError("masked-patch loss: no masked patch");
  return ((pred - target).pow(2) * m).sum() / count;
}

torch::Tensor loss_masked_patch(const torch::Tensor& pred, const torch::Tensor& target,
                                const std::vector<std::vector<int>>& masked_indices,
                                const imaging::PatchGrid& grid) {
  if (pred.dim() != 4 || pred.size(2) != grid.image_height() || pred.size(3) != grid.image_width())
    throw ShapeError("masked-patch loss: grid does not match image");
  if (static_cast<int64_t>(masked_indices.size()) != pred.size(0))
    throw ShapeError("masked-patch loss: one index list per sample expected");
  return loss_masked_patch(pred, target, patch_mask(grid, masked_indices, pred.scalar_type()));
}

torch::Tensor loss_patch_shuffle(const torch::Tensor& logits, const torch::Tensor& labels) {
  if (logits.dim() != 3 || logits.size(1) != logits.size(2)) throw ShapeError("patch-shuffle loss: logits must be (B, K, K)");
  if (labels.dim() != 2 || labels.size(0) != logits.size(0) || labels.size(1) != logits.size(1))
    throw ShapeError("patch-shuffle loss: labels must be (B, K)");
  const int64_t k = logits.size(1);
  auto sorted = std::get<0>(labels.to(torch::kLong).sort(1));
  if (!sorted.equal(torch::arange(k, torch::kLong).expand_as(sorted)))
    throw LabelError("patch-shuffle loss: labels are not permutations");
  auto logp = torch::log_softmax(logits, 2);
  auto picked = logp.gather(2, labels.to(torch::kLong).unsqueeze(2)).squeeze(2);
  return -picked.sum(1).mean();
}

torch::Tensor loss_info_nce(const torch::Tensor& q, const torch::Tensor& k_pos, const torch::Tensor& queue, double tau) {
  if (!(tau > 0)) throw ConfigError("InfoNCE: temperature must be positive");
  require_same_shape(q, k_pos, "InfoNCE");
  require_unit_rows(q, "InfoNCE query");
  require_unit_rows(k_pos, "InfoNCE positive key");
  auto pos = (q * k_pos).sum(1, true) / tau;
  torch::Tensor logits = pos;
  if (queue.defined() && queue.numel() > 0) {
    if (queue.dim() != 2 || queue.size(1) != q.size(1)) throw ShapeError("InfoNCE: queue dim mismatch");
    logits = torch::cat({pos, q.matmul(queue.to(q.scalar_type()).t()) / tau}, 1);
  }
  return (torch::logsumexp(logits, 1) - pos.squeeze(1)).mean();
}

int64_t supcon_contributing(const torch::Tensor& queue_labels, const torch::Tensor& query_labels) {
  if (queue_labels.numel() == 0) return 0;
  auto pos = query_labels.to(torch::kLong).unsqueeze(1).eq(queue_labels.to(torch::kLong).unsqueeze(0));
  return pos.any(1).sum().item<int64_t>();
}

torch::Tensor loss_supcon(const torch::Tensor& q, const torch::Tensor& queue, const torch::Tensor& queue_labels,
                          const torch::Tensor& query_labels, double tau) {
  if (!(tau > 0)) throw ConfigError("SupCon: temperature must be positive");
  require_unit_rows(q, "SupCon query");
  if (query_labels.numel() != q.size(0)) throw ShapeError("SupCon: one label per query expected");
  if (queue.numel() == 0) throw BatchSkipError("SupCon: empty queue");
  if (queue.dim() != 2 || queue.size(1) != q.size(1) || queue_labels.numel() != queue.size(0))
    throw ShapeError("SupCon: queue shape mismatch");
  auto pos = query_labels.to(torch::kLong).unsqueeze(1).eq(queue_labels.to(torch::kLong).unsqueeze(0));
  auto npos = pos.sum(1);
  auto keep = npos > 0;
  if (!keep.any().item<bool>()) throw BatchSkipError("SupCon: no query has a positive in the queue");
  auto logits = q.matmul(queue.to(q.scalar_type()).t()) / tau;
  auto logp = logits - torch::logsumexp(logits, 1, true);
  auto posf = pos.to(q.scalar_type());
  auto per_query = -(logp * posf).sum(1) / npos.clamp_min(1).to(q.scalar_type());
  return per_query.masked_select(keep).mean();
}

torch::Tensor loss_pose_classification(const torch::Tensor& logits, const torch::Tensor& labels) {
  if (logits.dim() != 2 || logits.size(1) != kPoseClasses) throw ShapeError("pose loss: logits must be (B, 5)");
  if (labels.numel() != logits.size(0)) throw ShapeError("pose loss: one label per sample expected");
  auto l = labels.to(torch::kLong).reshape({-1});
  if (l.numel() > 0 && (l.min().item<int64_t>() < 0 || l.max().item<int64_t>() >= kPoseClasses))
    throw LabelError("pose loss: label outside 0..4");
  return F::cross_entropy(logits, l);
}

torch::Tensor loss_patient_info(const torch::Tensor& pred, const torch::Tensor& target) {
  if (pred.dim() != 2 || pred.size(1) != 4) throw ShapeError("patient-info loss: pred must be (B, 4)");
  require_same_shape(pred, target, "patient-info loss");
  auto p = pred.select(1, 3);
  const auto lo = p.detach().min().item<double>(), hi = p.detach().max().item<double>();
  if (!(lo > 0.0 && hi < 1.0)) throw DomainError("patient-info loss: sex probability outside (0, 1)");
  auto s = target.select(1, 3).to(pred.scalar_type());
  auto bce = -(s * torch::log(p) + (1.0 - s) * torch::log1p(-p));
  auto se = (pred.narrow(1, 0, 3) - target.narrow(1, 0, 3).to(pred.scalar_type())).pow(2).sum(1);
  return (bce + se).mean();
}

torch::Tensor loss_bone_decomposition(const torch::Tensor& pred, const torch::Tensor& gt) {
  require_same_shape(pred, gt, "bone-decomposition loss");
  return (pred - gt).pow(2).mean();
}

}  // namespace qis::pretrain
