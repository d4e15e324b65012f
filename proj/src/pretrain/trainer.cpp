#include "qis/pretrain/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "qis/error.hpp"
#include "qis/log.hpp"
#include "qis/pretrain/augment.hpp"
#include "qis/pretrain/losses.hpp"
#include "qis/pretrain/moco.hpp"
#include "qis/rng.hpp"

namespace qis::pretrain {

void PretrainData::check_for(PretrainKind kind) const {
  if (size() == 0) throw ConfigError("pretraining data is empty");
  if (xrays.dim() != 4 || xrays.size(1) != 1) throw ConfigError("pretraining x-rays must be (N, 1, H, W)");
  const auto n = size();
  auto need = [&](const torch::Tensor& t, const char* what) {
    if (!t.defined() || t.size(0) != n) throw ConfigError(to_string(kind) + " needs " + what);
  };
  switch (kind) {
    case PretrainKind::Pbd:
      need(bones, "bone decomposition maps");
      if (bones.sizes() != xrays.sizes()) throw ConfigError("bone maps must match x-ray dims");
      break;
    case PretrainKind::Ppc:
    case PretrainKind::Ppoc: need(poses, "pose labels"); break;
    case PretrainKind::Ppac: need(patients, "patient labels"); break;
    case PretrainKind::Ppi:
      need(info, "patient information");
      if (info.dim() != 2 || info.size(1) != 4) throw ConfigError("patient information must be (N, 4)");
      break;
    default: break;
  }
}

InfoStats InfoStats::from(const torch::Tensor& info) {
  InfoStats s;
  auto d = info.to(torch::kFloat64);
  for (int c = 0; c < 3; ++c) {
    auto col = d.select(1, c);
    s.mean[c] = col.mean().item<double>();
    const double sd = col.numel() > 1 ? col.std(/*unbiased=*/false).item<double>() : 0.0;
    s.std[c] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

torch::Tensor InfoStats::normalize(const torch::Tensor& info) const {
  auto out = info.to(torch::kFloat64).clone();
  for (int c = 0; c < 3; ++c) out.select(1, c).sub_(mean[c]).div_(std[c]);
  return out;
}

nlohmann::json InfoStats::to_json() const {
  return {{"mean", {mean[0], mean[1], mean[2]}}, {"std", {std[0], std[1], std[2]}}};
}

nets::HeadSpec head_for(const PretrainTask& task, const nets::EncoderSpec& encoder, int input_h, int input_w) {
  nets::HeadSpec h;
  h.input_h = input_h;
  h.input_w = input_w;
  switch (task.kind) {
    case PretrainKind::Psr:
    case PretrainKind::Pmp:
    case PretrainKind::Pbd:
      h.kind = nets::HeadKind::lightweight_decoder;
      h.out_dim = 1;
      break;
    case PretrainKind::Pps:
      h.kind = nets::HeadKind::patch_index_classifier;
      h.grid_rows = task.grid->rows;
      h.grid_cols = task.grid->cols;
      h.out_dim = h.grid_rows * h.grid_cols;
      break;
    case PretrainKind::Psc:
    case PretrainKind::Ppac:
    case PretrainKind::Ppoc:
      h.kind = nets::HeadKind::projection_mlp;
      h.out_dim = task.contrastive->feature_dim;
      h.hidden_dim = encoder.widths.back();
      break;
    case PretrainKind::Ppc:
      h.kind = nets::HeadKind::linear_classifier;
      h.out_dim = kPoseClasses;
      break;
    case PretrainKind::Ppi:
      h.kind = nets::HeadKind::info_regressor;
      h.out_dim = 4;
      break;
    default: throw ConfigError(to_string(task.kind) + " has no head");
  }
  return h;
}

torch::Tensor shuffle_patch_tensor(const torch::Tensor& x, const imaging::PatchGrid& grid,
                                   const std::vector<std::vector<int>>& perms) {
  const int64_t b = x.size(0), c = x.size(1);
  if (x.size(2) != grid.image_height() || x.size(3) != grid.image_width())
    throw GridError("patch shuffle: grid does not match image");
  if (static_cast<int64_t>(perms.size()) != b) throw GridError("patch shuffle: one permutation per sample");
  const int k = grid.count();
  auto idx = torch::empty({b, k}, torch::kLong);
  for (int64_t i = 0; i < b; ++i) {
    if (!imaging::is_permutation_of_range(perms[i], k)) throw GridError("patch shuffle: invalid permutation");
    for (int j = 0; j < k; ++j) idx[i][j] = perms[i][j];
  }
  // (B, C, rows, ph, cols, pw) -> (B, K, C, ph, pw)
  auto p = x.reshape({b, c, grid.rows, grid.patch_h, grid.cols, grid.patch_w})
               .permute({0, 2, 4, 1, 3, 5})
               .reshape({b, k, c, grid.patch_h, grid.patch_w});
  auto g = idx.view({b, k, 1, 1, 1}).expand({b, k, c, grid.patch_h, grid.patch_w});
  auto shuffled = p.gather(1, g);
  return shuffled.reshape({b, grid.rows, grid.cols, c, grid.patch_h, grid.patch_w})
      .permute({0, 3, 1, 4, 2, 5})
      .reshape(x.sizes());
}

double patch_index_accuracy(const torch::Tensor& logits, const torch::Tensor& labels) {
  auto pred = logits.argmax(2);
  return pred.eq(labels.to(torch::kLong)).to(torch::kFloat64).mean().item<double>();
}

nets::PretrainNet restore_pretrain_net(const nets::Checkpoint& ckpt) {
  if (!ckpt.meta.contains("encoder_spec") || !ckpt.meta.contains("head_spec"))
    throw FormatError("checkpoint is not a pretraining checkpoint");
  auto enc = nets::EncoderSpec::from_json(ckpt.meta["encoder_spec"]);
  auto head = nets::HeadSpec::from_json(ckpt.meta["head_spec"]);
  nets::PretrainNet net(enc, head);
  nets::load_into(*net, ckpt, "");
  return net;
}

namespace {

torch::Tensor rows_of(const torch::Tensor& t, const torch::Tensor& idx) { return t.index_select(0, idx); }

class StepRunner {
 public:
  StepRunner(const PretrainTask& task, const PretrainData& data, nets::PretrainNet net, nets::PretrainNet key_net,
             Rng& rng)
      : task_(task), data_(data), net_(std::move(net)), key_net_(std::move(key_net)), rng_(rng) {
    const int h = static_cast<int>(data.xrays.size(2)), w = static_cast<int>(data.xrays.size(3));
    if (task.grid) grid_ = imaging::PatchGrid::fit(task.grid->rows, task.grid->cols, w, h);
    if (task.kind == PretrainKind::Ppi) {
      stats_ = InfoStats::from(data.info);
      info_targets_ = stats_.normalize(data.info).to(torch::kFloat32);
    }
    if (task.contrastive)
      queue_.emplace(task.contrastive->queue_size, task.contrastive->feature_dim);
  }

  const InfoStats& stats() const { return stats_; }

  /// Loss for one batch; undefined tensor when the batch is skipped.
  torch::Tensor loss(const torch::Tensor& idx) {
    auto x = rows_of(data_.xrays, idx);
    const int64_t b = x.size(0);
    switch (task_.kind) {
      case PretrainKind::Psr: return loss_self_reconstruction(net_(x), x);
      case PretrainKind::Pbd: return loss_bone_decomposition(net_(x), rows_of(data_.bones, idx));
      case PretrainKind::Pmp: {
        const int n = imaging::masked_patch_count(task_.mask->ratio, grid_.count());
        std::vector<std::vector<int>> masked(b);
        for (auto& m : masked) m = imaging::sample_patch_indices(grid_.count(), n, rng_);
        auto mask = patch_mask(grid_, masked);
        auto out = net_(x * (1.0 - mask));
        return task_.mask->masked_only_loss ? loss_masked_patch(out, x, mask) : loss_self_reconstruction(out, x);
      }
      case PretrainKind::Pps: {
        std::vector<std::vector<int>> perms(b, std::vector<int>(grid_.count()));
        auto labels = torch::empty({b, grid_.count()}, torch::kLong);
        for (int64_t i = 0; i < b; ++i) {
          std::iota(perms[i].begin(), perms[i].end(), 0);
          rng_.shuffle(perms[i].begin(), perms[i].end());
          for (int j = 0; j < grid_.count(); ++j) labels[i][j] = perms[i][j];
        }
        return loss_patch_shuffle(net_(shuffle_patch_tensor(x, grid_, perms)), labels);
      }
      case PretrainKind::Ppc: return loss_pose_classification(net_(x), rows_of(data_.poses, idx));
      case PretrainKind::Ppi: {
        auto out = net_(x);
        auto p = torch::sigmoid(out.select(1, 3)).clamp(1e-6, 1.0 - 1e-6).unsqueeze(1);
        return loss_patient_info(torch::cat(std::vector<torch::Tensor>{out.narrow(1, 0, 3), p}, 1), rows_of(info_targets_, idx));
      }
      case PretrainKind::Psc:
      case PretrainKind::Ppac:
      case PretrainKind::Ppoc: return contrastive_loss(x, idx);
      default: throw ConfigError(to_string(task_.kind) + " is not trainable");
    }
  }

  void after_step() {
    if (task_.contrastive) momentum_update(*key_net_, *net_, task_.contrastive->momentum);
  }

 private:
  torch::Tensor contrastive_loss(const torch::Tensor& x, const torch::Tensor& idx) {
    const auto& c = *task_.contrastive;
    auto q = net_(augment_batch(x, rng_, c.augment));
    torch::Tensor k;
    {
      torch::NoGradGuard guard;
      k = key_net_(augment_batch(x, rng_, c.augment));
    }
    const auto patients = data_.patients.defined() ? rows_of(data_.patients, idx) : torch::full({x.size(0)}, -1, torch::kLong);
    const auto poses = data_.poses.defined() ? rows_of(data_.poses, idx) : torch::full({x.size(0)}, -1, torch::kLong);
    if (task_.kind == PretrainKind::Psc) {
      auto l = loss_info_nce(q, k, queue_->keys().clone(), c.temperature);
      queue_->enqueue(k, patients, poses);
      return l;
    }
    // Keys enter the queue first so every query sees its own positive.
    queue_->enqueue(k, patients, poses);
    const bool by_patient = task_.kind == PretrainKind::Ppac;
    try {
      return loss_supcon(q, queue_->keys().clone(), by_patient ? queue_->patients() : queue_->poses(),
                         by_patient ? patients : poses, c.temperature);
    } catch (const BatchSkipError&) {
      return {};
    }
  }

  const PretrainTask& task_;
  const PretrainData& data_;
  nets::PretrainNet net_;
  nets::PretrainNet key_net_;
  Rng& rng_;
  imaging::PatchGrid grid_;
  InfoStats stats_;
  torch::Tensor info_targets_;
  std::optional<MoCoQueue> queue_;
};

}  // namespace

PretrainResult run_pretraining(const PretrainTask& task, const PretrainData& data, const nets::EncoderSpec& encoder,
                               std::uint64_t seed, const nets::Checkpoint* init) {
  task.validate();
  encoder.validate();
  PretrainResult result;
  if (task.kind == PretrainKind::P0) {
    torch::manual_seed(seed);
    nets::Encoder fresh(encoder);
    if (init != nullptr) result.transfers.push_back(nets::transfer_encoder(fresh, *init));
    result.checkpoint.add_module(*fresh, "encoder.");
    result.checkpoint.meta["encoder_spec"] = encoder.to_json();
    result.checkpoint.set_fingerprint("encoder", encoder.fingerprint());
    result.checkpoint.meta["task"] = task.to_json();
    result.checkpoint.meta["seed"] = seed;
    result.checkpoint.meta["epoch"] = 0;
    result.initial_encoder_checksum = nets::checksum(*fresh, "encoder.");
    return result;
  }
  data.check_for(task.kind);
  const int h = static_cast<int>(data.xrays.size(2)), w = static_cast<int>(data.xrays.size(3));
  nets::check_input_dims(encoder, h, w);
  const auto head = head_for(task, encoder, h, w);
  auto net = nets::build_pretrain_net(encoder, head, seed);
  if (init != nullptr) result.transfers.push_back(nets::transfer_encoder(net->encoder(), *init));
  result.initial_encoder_checksum = nets::checksum(*net->encoder(), "encoder.");

  nets::PretrainNet key_net{nullptr};
  if (task.contrastive) {
    key_net = nets::PretrainNet(encoder, head);
    nets::Checkpoint snap;
    snap.add_module(*net);
    nets::load_into(*key_net, snap, "");
    for (auto& p : key_net->parameters()) p.set_requires_grad(false);
  }

  Rng rng = Rng::derive(seed, "pretrain:" + to_string(task.kind));
  StepRunner runner(task, data, net, key_net, rng);
  auto opt = nets::make_adamw(net->parameters(), task.optim);
  net->train();

  const int64_t n = data.size();
  const int64_t per_epoch = (n + task.batch_size - 1) / task.batch_size;
  std::vector<int64_t> order(n);
  for (int epoch = 0; epoch < task.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    double sum = 0.0;
    int64_t counted = 0;
    for (int64_t s = 0; s < per_epoch; ++s) {
      const int64_t lo = s * task.batch_size, hi = std::min(n, lo + task.batch_size);
      auto idx = torch::from_blob(order.data() + lo, {hi - lo}, torch::kLong).clone();
      nets::set_lr(*opt, nets::sgdr_lr(task.optim, epoch + static_cast<double>(s) / per_epoch));
      opt->zero_grad();
      auto loss = runner.loss(idx);
      if (!loss.defined()) {
        ++result.skipped_batches;
        continue;
      }
      const double value = loss.item<double>();
      if (!std::isfinite(value)) throw DivergenceError(to_string(task.kind) + ": non-finite pretraining loss");
      loss.backward();
      opt->step();
      runner.after_step();
      sum += value;
      ++counted;
      ++result.steps;
    }
    result.epoch_loss.push_back(counted > 0 ? sum / counted : std::nan(""));
    std::ostringstream msg;
    msg << "pretrain " << to_string(task.kind) << " epoch " << epoch + 1 << "/" << task.epochs
        << " loss " << result.epoch_loss.back();
    log_debug(msg.str());
  }
  if (result.skipped_batches > 0)
    log_info(to_string(task.kind) + ": skipped " + std::to_string(result.skipped_batches) +
             " batches without positives in the queue");

  result.checkpoint = nets::capture_pretrain(net, encoder);
  result.checkpoint.meta["task"] = task.to_json();
  result.checkpoint.meta["seed"] = seed;
  result.checkpoint.meta["epoch"] = task.epochs;
  if (task.kind == PretrainKind::Ppi) result.checkpoint.meta["info_stats"] = runner.stats().to_json();
  return result;
}

PretrainResult run_cascade(const std::vector<PretrainTask>& stages, const PretrainData& data,
                           const nets::EncoderSpec& encoder, std::uint64_t seed) {
  if (stages.empty()) throw ConfigError("cascade needs at least one stage");
  PretrainResult result;
  std::vector<nets::TransferReport> transfers;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::uint64_t stage_seed = i == 0 ? seed : Rng::derive(seed, "cascade:" + std::to_string(i)).next();
    const nets::Checkpoint* init = i == 0 ? nullptr : &result.checkpoint;
    auto stage = run_pretraining(stages[i], data, encoder, stage_seed, init);
    for (auto& t : stage.transfers) transfers.push_back(std::move(t));
    log_info("cascade stage " + std::to_string(i + 1) + "/" + std::to_string(stages.size()) + " (" +
             to_string(stages[i].kind) + ") done");
    result = std::move(stage);
  }
  result.transfers = std::move(transfers);
  if (stages.size() > 1) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& s : stages) tasks.push_back(s.to_json());
    result.checkpoint.meta["cascade"] = tasks;
  }
  return result;
}

}  // namespace qis::pretrain
