// Acceptance run: one PASS/FAIL line per criterion.
//
//   qis_acceptance [name-substring ...]
//
// With arguments only the criteria whose name contains one of them run.

#include <torch/torch.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <iostream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "qis/bench/data.hpp"
#include "qis/bench/evaluate.hpp"
#include "qis/bench/experiment.hpp"
#include "qis/bench/folds.hpp"
#include "qis/bench/reporting.hpp"
#include "qis/error.hpp"
#include "qis/imaging/gradient_correlation.hpp"
#include "qis/imaging/qimg_io.hpp"
#include "qis/log.hpp"
#include "qis/metrics/bmd.hpp"
#include "qis/metrics/image_quality.hpp"
#include "qis/metrics/stats.hpp"
#include "qis/nets/checkpoint.hpp"
#include "qis/phantom/dataset.hpp"
#include "qis/pretrain/losses.hpp"
#include "qis/pretrain/moco.hpp"
#include "qis/pretrain/trainer.hpp"
#include "qis/rng.hpp"
#include "qis/target/losses.hpp"
#include "qis/target/trainer.hpp"

using namespace qis;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// ---------------------------------------------------------------- tolerances

constexpr double kTolBmd = 1e-9;
constexpr double kTolPcc = 1e-12;
constexpr double kTolIcc = 1e-10;
constexpr double kTolMae = 1e-12;
constexpr double kTolPsnr = 1e-9;
constexpr int kOracleCases = 1000;
constexpr double kTolLoss = 1e-5;
constexpr double kTolGrad = 1e-4;
constexpr double kTolEma = 1e-10;
constexpr double kTolVoxel = 1e-4;  // g/cm^2
constexpr double kTrendPcc = 0.5;
constexpr double kTrendBudgetMin = 45.0;
constexpr double kOverfitAccuracy = 0.99;
constexpr double kOverfitMse = 1e-3;
constexpr int kOverfitSteps = 200;

// ---------------------------------------------------------------- check helper

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++count_;
    if (!ok && first_failure_.empty()) first_failure_ = what;
    failed_ += !ok;
  }
  void near(double got, double want, double tol, const std::string& what) {
    const bool ok = std::fabs(got - want) <= tol || (std::isinf(got) && got == want);
    std::ostringstream s;
    s << what << ": got " << got << " want " << want << " tol " << tol;
    expect(ok, s.str());
  }
  template <class F>
  void throws(F&& f, const std::string& what) {
    bool thrown = false;
    try {
      f();
    } catch (const std::exception&) {
      thrown = true;
    }
    expect(thrown, what + " did not throw");
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }

  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::ostringstream s;
    s << count_ - failed_ << "/" << count_ << " checks";
    if (!notes_.empty()) s << "; " << notes_;
    if (!ok()) s << "; first failure: " << first_failure_;
    return s.str();
  }

 private:
  int count_ = 0;
  int failed_ = 0;
  std::string first_failure_;
  std::string notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path work_dir() {
  static const fs::path dir = fs::temp_directory_path() / ("qis_acceptance_" + std::to_string(::getpid()));
  return dir;
}

fs::path fresh(const std::string& name) {
  const auto d = work_dir() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// Desk dataset built once per process.
fs::path dataset(int patients, std::uint64_t seed) {
  const auto root = work_dir() / ("ds_" + std::to_string(patients) + "_" + std::to_string(seed));
  if (!fs::exists(root / "manifest.json")) phantom::build_dataset(patients, root, seed, phantom::DatasetProfile::desk());
  return root;
}

const auto f64 = torch::TensorOptions().dtype(torch::kFloat64);

torch::Tensor unit_rows(torch::Tensor t) { return t / t.norm(2, 1, true); }

torch::Tensor perm_labels(int64_t b, int64_t k, std::uint64_t seed) {
  Rng rng(seed);
  auto out = torch::empty({b, k}, torch::kInt64);
  for (int64_t i = 0; i < b; ++i) {
    std::vector<int64_t> p(k);
    std::iota(p.begin(), p.end(), 0);
    rng.shuffle(p.begin(), p.end());
    for (int64_t j = 0; j < k; ++j) out[i][j] = p[j];
  }
  return out;
}

double brute_mse(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = a.contiguous(), y = b.contiguous();
  const double* pa = x.data_ptr<double>();
  const double* pb = y.data_ptr<double>();
  long double s = 0;
  for (int64_t i = 0; i < x.numel(); ++i) s += (pa[i] - pb[i]) * (pa[i] - pb[i]);
  return static_cast<double>(s / x.numel());
}

std::vector<double> normals(Rng& rng, int n, double mean, double sd) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(mean, sd);
  return v;
}

imaging::QuantImage density_image(int w, int h, Rng& rng) {
  auto img = imaging::QuantImage::zeros(w, h, imaging::Unit::areal_density);
  for (auto& p : img.pixels) p = rng.bernoulli(0.3) ? 0.0f : static_cast<float>(rng.uniform(0.0, 2.0));
  return img;
}

bench::ExperimentConfig quick_experiment() {
  auto cfg = bench::ExperimentConfig::defaults("desk");
  cfg.encoder_family = "tiny";
  cfg.pretrain_epochs = 1;
  cfg.target.epochs = 1;
  cfg.target.checkpoint_every = 0;
  cfg.seed = 3;
  return cfg;
}

// ---------------------------------------------------------------- criteria

void metric_oracles(Check& c) {
  const auto t0 = Clock::now();
  Rng rng(101);
  for (int t = 0; t < kOracleCases; ++t) {
    auto img = density_image(1 + static_cast<int>(rng.below(30)), 1 + static_cast<int>(rng.below(30)), rng);
    const double th = rng.uniform(0.0, 1.5);
    const double want = oracle::bmd(img, th);
    if (std::isnan(want)) {
      c.throws([&] { metrics::extract_bmd(img, th); }, "extract_bmd on an empty region");
    } else {
      c.near(metrics::extract_bmd(img, th).bmd, want, kTolBmd, "extract_bmd");
    }
  }
  for (int t = 0; t < kOracleCases; ++t) {
    const int n = 3 + static_cast<int>(rng.below(60));
    auto a = normals(rng, n, 1.0, 0.3), b = normals(rng, n, 1.0, 0.3);
    const double mix = rng.uniform(0.0, 1.0);
    for (int i = 0; i < n; ++i) b[i] += mix * a[i] + rng.uniform(-0.2, 0.2);
    c.near(metrics::pcc(a, b), oracle::pcc(a, b), kTolPcc, "pcc");
    c.near(metrics::icc(a, b, metrics::IccVariant::absolute_agreement), oracle::icc(a, b, true), kTolIcc, "icc(A,1)");
    c.near(metrics::icc(a, b, metrics::IccVariant::consistency), oracle::icc(a, b, false), kTolIcc, "icc(C,1)");
    const auto m = metrics::mae_stats(a, b);
    const auto o = oracle::mae(a, b);
    c.near(m.mean, o.mean, kTolMae, "mae mean");
    c.near(m.std, o.std, kTolMae, "mae std");
  }
  for (int t = 0; t < kOracleCases; ++t) {
    const int w = 2 + static_cast<int>(rng.below(24)), h = 2 + static_cast<int>(rng.below(24));
    auto a = density_image(w, h, rng), b = density_image(w, h, rng);
    a.pixels[0] = 0.0f;
    a.pixels[1] = 1.5f;
    auto roi = imaging::RoiMask::empty(w, h);
    for (auto& bit : roi.bits) bit = rng.bernoulli(0.5);
    roi.bits[0] = roi.bits[1] = 1;
    c.near(metrics::psnr(a, b), oracle::psnr(a, b, nullptr), kTolPsnr, "psnr");
    c.near(metrics::psnr(a, b, &roi), oracle::psnr(a, b, &roi), kTolPsnr, "psnr roi");
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  c.expect(secs < 60.0, "runtime over 1 min");
  c.note(std::to_string(kOracleCases) + " cases per metric, " + fmt("%.1fs", secs));
}

void loss_oracles(Check& c) {
  using namespace qis::pretrain;
  using namespace qis::target;
  const auto t0 = Clock::now();
  torch::manual_seed(11);
  // Uniform logits: cross-entropy ln K.
  c.near(loss_pose_classification(torch::zeros({4, 5}, f64), torch::tensor({0, 1, 3, 4}, torch::kInt64)).item<double>(),
         std::log(5.0), kTolLoss, "pose CE, K=5");
  c.near(loss_patch_shuffle(torch::zeros({3, 5, 5}, f64), perm_labels(3, 5, 1)).item<double>() / 5, std::log(5.0),
         kTolLoss, "patch CE per slot, K=5");
  c.near(loss_patch_shuffle(torch::zeros({3, 32, 32}, f64), perm_labels(3, 32, 2)).item<double>() / 32,
         std::log(32.0), kTolLoss, "patch CE per slot, K=32");
  // Zero-logit GAN losses.
  auto zero = torch::zeros({2, 1, 4, 4}, f64);
  c.near(loss_adversarial(zero, zero, AdvRole::discriminator).item<double>(), 2 * std::log(2.0), kTolLoss, "D loss");
  c.near(loss_adversarial({}, zero, AdvRole::generator).item<double>(), std::log(2.0), kTolLoss, "G loss");
  // InfoNCE with one positive at similarity 1 and two orthogonal negatives.
  auto q = torch::tensor({{1.0, 0.0, 0.0}}, f64);
  auto negs = torch::tensor({{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}, f64);
  const double e = std::exp(1.0);
  c.near(loss_info_nce(q, q, negs, 1.0).item<double>(), -std::log(e / (e + 2)), kTolLoss, "InfoNCE");

  // Brute-force oracles on random inputs.
  for (int t = 0; t < 10; ++t) {
    auto x = torch::rand({2, 1, 8, 4}, f64), y = torch::rand({2, 1, 8, 4}, f64);
    c.near(loss_self_reconstruction(x, y).item<double>(), brute_mse(x, y), kTolLoss, "self reconstruction");
    c.near(loss_bone_decomposition(x, y).item<double>(), brute_mse(x, y), kTolLoss, "bone decomposition");
    c.near(loss_l2(x, y).item<double>(), brute_mse(x, y), kTolLoss, "target L2");
    c.near(loss_gc(x, x).item<double>(), -1.0, kTolLoss, "GC of identical maps");

    auto grid = imaging::PatchGrid::fit(4, 2, 4, 8);
    std::vector<std::vector<int>> idx{{0, 3, 5}, {1, 2}};
    long double s = 0;
    int n = 0;
    for (int b = 0; b < 2; ++b)
      for (int cell : idx[b]) {
        const int r0 = (cell / 2) * 2, c0 = (cell % 2) * 2;
        for (int yy = r0; yy < r0 + 2; ++yy)
          for (int xx = c0; xx < c0 + 2; ++xx) {
            const double d = x[b][0][yy][xx].item<double>() - y[b][0][yy][xx].item<double>();
            s += d * d;
            ++n;
          }
      }
    c.near(loss_masked_patch(x, y, idx, grid).item<double>(), static_cast<double>(s / n), kTolLoss, "masked patch");

    auto logits = torch::randn({2, 6, 6}, f64);
    auto labels = perm_labels(2, 6, 10 + t);
    long double ce = 0;
    for (int64_t b = 0; b < 2; ++b)
      for (int64_t j = 0; j < 6; ++j) {
        long double z = 0;
        for (int64_t k = 0; k < 6; ++k) z += std::exp(static_cast<long double>(logits[b][j][k].item<double>()));
        ce -= logits[b][j][labels[b][j].item<int64_t>()].item<double>() - std::log(z);
      }
    c.near(loss_patch_shuffle(logits, labels).item<double>(), static_cast<double>(ce / 2), kTolLoss, "patch shuffle");

    auto qs = unit_rows(torch::randn({4, 6}, f64));
    auto queue = unit_rows(torch::randn({12, 6}, f64));
    auto ql = torch::randint(0, 3, {12}, torch::kInt64);
    auto qyl = torch::tensor({0, 1, 2, 0}, torch::kInt64);
    if (supcon_contributing(ql, qyl) > 0) {
      long double total = 0;
      int used = 0;
      for (int64_t i = 0; i < 4; ++i) {
        long double denom = 0;
        std::vector<long double> pos;
        for (int64_t a = 0; a < 12; ++a) {
          const long double sim = (qs[i] * queue[a]).sum().item<double>() / 0.2;
          denom += std::exp(sim);
          if (ql[a].item<int64_t>() == qyl[i].item<int64_t>()) pos.push_back(sim);
        }
        if (pos.empty()) continue;
        long double acc = 0;
        for (auto p : pos) acc += p - std::log(denom);
        total += -acc / pos.size();
        ++used;
      }
      c.near(loss_supcon(qs, queue, ql, qyl, 0.2).item<double>(), static_cast<double>(total / used), kTolLoss, "SupCon");
    }

    auto pred = torch::cat({torch::randn({4, 3}, f64), torch::rand({4, 1}, f64) * 0.9 + 0.05}, 1);
    auto tgt = torch::cat({torch::randn({4, 3}, f64), torch::randint(0, 2, {4, 1}, f64)}, 1);
    long double info = 0;
    for (int i = 0; i < 4; ++i) {
      for (int k = 0; k < 3; ++k) info += std::pow(pred[i][k].item<double>() - tgt[i][k].item<double>(), 2);
      const double p = pred[i][3].item<double>(), sx = tgt[i][3].item<double>();
      info -= sx * std::log(p) + (1 - sx) * std::log(1 - p);
    }
    c.near(loss_patient_info(pred, tgt).item<double>(), static_cast<double>(info / 4), kTolLoss, "patient info");
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  c.expect(secs < 60.0, "runtime over 1 min");
  c.note(fmt("%.1fs", secs));
}

void gradient_checks(Check& c) {
  using namespace qis::pretrain;
  using namespace qis::target;
  const auto t0 = Clock::now();
  torch::manual_seed(5);
  auto theta = torch::tensor({0.7, -0.4}, f64);
  auto A = torch::randn({2, 1, 8, 4}, f64), B = torch::randn({2, 1, 8, 4}, f64), T = torch::randn({2, 1, 8, 4}, f64);
  auto image = [&](const torch::Tensor& th) { return th[0] * A + th[1] * B; };
  auto grid = imaging::PatchGrid::fit(4, 2, 4, 8);
  std::vector<std::vector<int>> idx{{0, 2, 5}, {1, 7}};
  auto L1 = torch::randn({2, 6, 6}, f64), L2 = torch::randn({2, 6, 6}, f64);
  auto labels = perm_labels(2, 6, 9);
  auto a = torch::randn({3, 5}, f64), b = torch::randn({3, 5}, f64);
  auto emb = [&](const torch::Tensor& th) { return unit_rows(th[0] * a + th[1] * b + 0.3); };
  auto kpos = unit_rows(torch::randn({3, 5}, f64));
  auto queue = unit_rows(torch::randn({12, 5}, f64));
  auto qlab = torch::tensor({0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2}, torch::kInt64);
  auto ylab = torch::tensor({0, 1, 2}, torch::kInt64);
  auto P1 = torch::randn({3, 5}, f64), P2 = torch::randn({3, 5}, f64);
  auto I1 = torch::randn({3, 4}, f64), I2 = torch::randn({3, 4}, f64);
  auto itarget = torch::cat({torch::randn({3, 3}, f64), torch::tensor({{1.0}, {0.0}, {1.0}}, f64)}, 1);

  const std::vector<std::pair<std::string, std::function<torch::Tensor(const torch::Tensor&)>>> cases{
      {"self_reconstruction", [&](const torch::Tensor& th) { return loss_self_reconstruction(image(th), T); }},
      {"masked_patch", [&](const torch::Tensor& th) { return loss_masked_patch(image(th), T, idx, grid); }},
      {"patch_shuffle", [&](const torch::Tensor& th) { return loss_patch_shuffle(th[0] * L1 + th[1] * L2, labels); }},
      {"info_nce", [&](const torch::Tensor& th) { return loss_info_nce(emb(th), kpos, queue, 0.2); }},
      {"supcon", [&](const torch::Tensor& th) { return loss_supcon(emb(th), queue, qlab, ylab, 0.2); }},
      {"pose", [&](const torch::Tensor& th) { return loss_pose_classification(th[0] * P1 + th[1] * P2, ylab); }},
      {"patient_info",
       [&](const torch::Tensor& th) {
         auto raw = th[0] * I1 + th[1] * I2;
         return loss_patient_info(torch::cat({raw.slice(1, 0, 3), torch::sigmoid(raw.slice(1, 3, 4))}, 1), itarget);
       }},
      {"bone_decomposition", [&](const torch::Tensor& th) { return loss_bone_decomposition(image(th), T); }},
      {"adversarial_d", [&](const torch::Tensor& th) { return loss_adversarial(th[0] * A, th[1] * B, AdvRole::discriminator); }},
      {"adversarial_g", [&](const torch::Tensor& th) { return loss_adversarial({}, image(th), AdvRole::generator); }},
      {"l2", [&](const torch::Tensor& th) { return loss_l2(image(th), T); }},
      {"gc", [&](const torch::Tensor& th) { return loss_gc(image(th), T); }},
  };
  double worst = 0;
  for (const auto& [name, f] : cases) {
    const double err = support::gradcheck(f, theta);
    worst = std::max(worst, err);
    c.expect(err <= kTolGrad, name + fmt(" relative error %.3g", err));
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  c.expect(secs < 300.0, "runtime over 5 min");
  c.note(std::to_string(cases.size()) + " losses, worst " + fmt("%.2g", worst) + ", " + fmt("%.1fs", secs));
}

void moco_mechanics(Check& c) {
  using namespace qis::pretrain;
  const int64_t K = 32, d = 4;
  MoCoQueue q(K, d, torch::kFloat64);
  std::vector<torch::Tensor> all;
  int64_t next = 0;
  torch::manual_seed(1);
  while (next < 10 * K) {
    const int64_t b = 1 + (next % 7);
    auto keys = unit_rows(torch::randn({b, d}, f64));
    auto pid = torch::arange(next, next + b, torch::kInt64);
    q.enqueue(keys, pid, pid % 5);
    for (int64_t i = 0; i < b; ++i) all.push_back(keys[i].clone());
    next += b;
    c.expect(q.size() == std::min<int64_t>(K, next), "queue size");
    const int64_t n = q.size();
    auto stored = q.keys();
    bool fifo = true;
    for (int64_t i = 0; i < n; ++i) {
      const auto src = static_cast<std::size_t>(next - n + i);
      fifo = fifo && torch::equal(stored[i], all[src]) && q.patients()[i].item<int64_t>() == static_cast<int64_t>(src) &&
             q.poses()[i].item<int64_t>() == static_cast<int64_t>(src % 5);
    }
    c.expect(fifo, "queue holds the newest keys in arrival order");
  }

  auto query = torch::nn::Linear(3, 2);
  auto key = torch::nn::Linear(3, 2);
  query->to(torch::kFloat64);
  key->to(torch::kFloat64);
  const double m = 0.99;
  std::vector<double> scalar;
  for (auto& p : key->parameters()) {
    auto flat = p.detach().reshape({-1});
    for (int64_t i = 0; i < flat.numel(); ++i) scalar.push_back(flat[i].item<double>());
  }
  for (int step = 0; step < 50; ++step) {
    {
      torch::NoGradGuard ng;
      for (auto& p : query->parameters()) p.add_(torch::randn_like(p) * 0.1);
    }
    momentum_update(*key, *query, m);
    std::size_t j = 0;
    for (auto& p : query->parameters()) {
      auto flat = p.detach().reshape({-1});
      for (int64_t i = 0; i < flat.numel(); ++i, ++j) scalar[j] = m * scalar[j] + (1 - m) * flat[i].item<double>();
    }
  }
  std::size_t j = 0;
  for (auto& p : key->parameters()) {
    auto flat = p.detach().reshape({-1});
    for (int64_t i = 0; i < flat.numel(); ++i, ++j) c.near(flat[i].item<double>(), scalar[j], kTolEma, "EMA");
  }
  c.note(std::to_string(next) + " enqueues at K=" + std::to_string(K));
}

void transfer_integrity(Check& c) {
  using namespace qis::pretrain;
  auto reader = bench::DatasetReader::open(dataset(8, 5));
  const auto ids = reader.manifest().patient_ids();
  auto data = reader.pretrain_data(ids, 64, true);
  const auto enc = nets::EncoderSpec::tiny();
  auto quick = [](PretrainKind k) {
    auto t = PretrainTask::defaults(k, "desk", 64);
    t.epochs = 1;
    return t;
  };
  auto pmp = run_pretraining(quick(PretrainKind::Pmp), data, enc, 8);
  auto cascade = run_cascade({quick(PretrainKind::Pmp), quick(PretrainKind::Pbd)}, data, enc, 8);
  c.expect(cascade.transfers.size() == 1, "one stage transfer in Pmp->Pbd");
  const auto pmp_sum = nets::checksum(pmp.checkpoint, "encoder.");
  c.expect(!cascade.transfers.empty() && cascade.transfers[0].checksum == pmp_sum, "Pbd starts from the Pmp encoder");
  c.expect(cascade.initial_encoder_checksum == pmp_sum, "cascade initial checksum is the Pmp encoder");
  c.expect(nets::checksum(cascade.checkpoint, "encoder.") != pmp_sum, "Pbd stage changed the encoder");

  auto cfg = target::TargetConfig::defaults("desk", 64);
  cfg.generator = nets::GeneratorSpec::for_encoder(enc);
  cfg.epochs = 1;
  cfg.normalization_scale = reader.manifest().pf_scale;
  const auto tdata = reader.target_data(ids, 64);
  auto t = target::train_target(cfg, tdata, &cascade.checkpoint);
  const auto pre_sum = nets::checksum(cascade.checkpoint, "encoder.");
  c.expect(t.transfer.has_value() && t.transfer->checksum == pre_sum, "target transfer checksum");
  c.expect(t.initial_encoder_checksum == pre_sum, "generator encoder starts from the pretrained encoder");
  c.expect(t.transfer.has_value() && !t.transfer->loaded.empty(), "encoder tensors loaded");

  auto wrong = run_pretraining(quick(PretrainKind::Psr), data, nets::EncoderSpec::desk(), 1);
  c.throws([&] { target::train_target(cfg, tdata, &wrong.checkpoint); }, "target with a mismatched encoder spec");
  auto forged = cascade.checkpoint;
  forged.set_fingerprint("encoder", "0000");
  nets::Encoder dst(enc);
  c.throws([&] { nets::transfer_encoder(dst, forged); }, "transfer with a forged fingerprint");
}

void split_hygiene(Check& c) {
  std::vector<std::string> ids;
  for (int i = 0; i < 41; ++i) ids.push_back("P" + std::to_string(2000 + i));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (int n : {40, 41}) {
      const std::vector<std::string> pool(ids.begin(), ids.begin() + n);
      const auto plan = bench::make_folds(pool, 4, seed);
      std::multiset<std::string> seen;
      std::size_t lo = pool.size(), hi = 0;
      for (int f = 0; f < 4; ++f) {
        const auto& test = plan.test_patients(f);
        const auto train = plan.train_patients(f);
        seen.insert(test.begin(), test.end());
        lo = std::min(lo, test.size());
        hi = std::max(hi, test.size());
        bool disjoint = true;
        for (const auto& p : test) disjoint = disjoint && std::find(train.begin(), train.end(), p) == train.end();
        c.expect(disjoint && train.size() + test.size() == pool.size(), "train/test disjoint and covering");
      }
      c.expect(seen.size() == pool.size() && std::set<std::string>(seen.begin(), seen.end()).size() == pool.size(),
               "test folds partition the patients");
      c.expect(hi - lo <= 1, "fold sizes differ by at most one");
      c.expect(bench::make_folds(pool, 4, seed).test == plan.test, "split is deterministic");
    }
  }

  ::unsetenv("QISBENCH_CACHE");
  bench::DataAccessAudit audit;
  const auto reader = bench::DatasetReader::open(dataset(8, 5), &audit);
  const auto cfg = quick_experiment();
  std::size_t eval_reads = 0;
  for (int fold = 0; fold < cfg.folds; ++fold) {
    audit.clear();
    bench::RunMatrix one;
    one.cells = {{64, "PmpBd", fold}};
    auto r = bench::run_experiment(cfg, one, reader, fresh("audit_" + std::to_string(fold)));
    c.expect(r.failures.empty(), "audit run failed");
    const auto& test = r.plan.test_patients(fold);
    c.expect(audit.reads_of(reader.manifest(), "pretrain", test).empty(), "test file read during pretraining");
    c.expect(audit.reads_of(reader.manifest(), "target", test).empty(), "test file read during target training");
    const auto ev = audit.reads_of(reader.manifest(), "evaluate", test).size();
    c.expect(ev > 0, "evaluation read the test fold");
    eval_reads += ev;
    for (const auto& e : audit.entries())
      c.expect(e.phase == "pretrain" || e.phase == "target" || e.phase == "evaluate", "unknown phase " + e.phase);
  }
  c.note("100 seeds; audit: 0 test reads in training, " + std::to_string(eval_reads) + " in evaluation");
}

void format_round_trips(Check& c) {
  Rng rng(7);
  const auto dir = fresh("formats");
  for (int t = 0; t < 50; ++t) {
    auto img = imaging::QuantImage::zeros(1 + static_cast<int>(rng.below(40)), 1 + static_cast<int>(rng.below(40)),
                                          t % 2 ? imaging::Unit::areal_density : imaging::Unit::intensity,
                                          rng.uniform(0.1, 2.0));
    for (auto& p : img.pixels) p = static_cast<float>(rng.normal(0.0, 10.0));
    img.pixels[0] = -0.0f;
    const auto path = dir / "img.qimg";
    imaging::save_qimg(img, path);
    const auto back = imaging::load_qimg(path);
    c.expect(back.width == img.width && back.height == img.height && back.unit == img.unit &&
                 back.spacing_mm == img.spacing_mm,
             "qimg header");
    c.expect(std::memcmp(back.pixels.data(), img.pixels.data(), img.pixels.size() * sizeof(float)) == 0, "qimg pixels");
    c.expect(imaging::encode_qimg(back) == imaging::encode_qimg(img), "qimg re-encode");
  }

  auto g = nets::build_generator(nets::GeneratorSpec::for_encoder(nets::EncoderSpec::tiny()), 3);
  auto d = nets::build_discriminator(nets::DiscriminatorSpec{}, 4);
  auto ckpt = nets::capture_generator(g, &d);
  ckpt.meta["note"] = "round trip";
  nets::save_checkpoint(ckpt, dir / "model.ckpt");
  const auto back = nets::load_checkpoint(dir / "model.ckpt");
  c.expect(nets::encode_checkpoint(back) == nets::encode_checkpoint(ckpt), "checkpoint bytes");
  c.expect(nets::checksum(back) == nets::checksum(ckpt), "checkpoint checksum");
  c.expect(back.meta == ckpt.meta, "checkpoint meta");
  auto g2 = nets::restore_generator(back);
  auto x = torch::rand({1, 1, 64, 32});
  g->eval();
  g2->eval();
  torch::NoGradGuard ng;
  c.expect(torch::equal(g->forward(x), g2->forward(x)), "restored generator output");

  const auto a = dir / "ds_a", b = dir / "ds_b";
  phantom::build_dataset(6, a, 17, phantom::DatasetProfile::desk());
  phantom::build_dataset(6, b, 17, phantom::DatasetProfile::desk());
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    c.expect(fs::exists(b / rel) && read_bytes(e.path()) == read_bytes(b / rel), "dataset file " + rel.string());
    ++files;
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) files_b += e.is_regular_file();
  c.expect(files == files_b, "dataset file count");
  c.note("50 qimg, 1 checkpoint, " + std::to_string(files) + " dataset files");
}

void voxel_end_to_end(Check& c) {
  const auto profile = phantom::DatasetProfile::desk();
  const auto root = dataset(40, 7);
  const auto manifest = phantom::DatasetManifest::load(root / "manifest.json");
  const auto plan = phantom::plan_scans(static_cast<int>(manifest.patients.size()), manifest.seed, profile);
  double worst = 0;
  std::size_t scans = 0, invalid = 0;
  for (const auto& e : manifest.scans) {
    if (!e.valid) {
      ++invalid;
      continue;
    }
    const auto pidx = static_cast<std::size_t>(std::stoi(e.record.patient_id.substr(1)) - 1);
    const auto pf = imaging::load_qimg(root / e.pf_path);
    const phantom::PhantomGeometry geo(plan.specs[pidx], e.record.side, e.rotation_deg);
    const double want = oracle::voxel_pf_bmd(geo, pf.width, pf.height, profile.render.depth_step_mm,
                                             manifest.bmd_threshold);
    const double got = metrics::extract_bmd(pf, manifest.bmd_threshold).bmd;
    worst = std::max(worst, std::fabs(got - want));
    c.near(got, want, kTolVoxel, e.record.key());
    ++scans;
  }
  c.expect(scans > 0, "no valid scans");
  c.note(std::to_string(scans) + " scans, " + std::to_string(invalid) + " invalid skipped, worst |diff| " +
         fmt("%.2e g/cm2", worst));
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

void desk_trend(Check& c) {
  ::unsetenv("QISBENCH_CACHE");
  const auto t0 = Clock::now();
  const auto reader = bench::DatasetReader::open(dataset(40, 7));
  const nlohmann::json base = {{"profile", "desk"},
                               {"folds", 4},
                               {"encoder_family", "tiny"},
                               {"pretrain_epochs", 10},
                               {"pretrain_lr", 1e-3},
                               {"target",
                                {{"epochs", 40},
                                 {"optim", {{"lr", 1e-3}}},
                                 {"l2_form", "norm"},
                                 {"discriminator", {{"base_width", 8}}}}}};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const std::vector<std::string> labels{"P0", "Pbd", "PmpBd"};
  std::map<std::string, std::vector<double>> pcc;
  for (auto seed : seeds) {
    auto j = base;
    j["seed"] = seed;
    const auto cfg = bench::ExperimentConfig::from_json(j);
    const auto out = fresh("trend_seed" + std::to_string(seed));
    auto r = bench::run_experiment(cfg, bench::RunMatrix::desk(cfg.folds), reader, out);
    c.expect(r.failures.empty(), "seed " + std::to_string(seed) + " had failing cells");
    std::printf("  seed %llu\n", static_cast<unsigned long long>(seed));
    std::istringstream table(bench::emit_table(r.pooled, bench::RunMatrix::desk().rows()).to_text());
    for (std::string line; std::getline(table, line);) std::printf("    %s\n", line.c_str());
    for (const auto& label : labels) {
      double v = std::nan("");
      for (const auto& p : r.pooled)
        if (p.key.pretraining == label && p.aggregates.pcc) v = *p.aggregates.pcc;
      pcc[label].push_back(v);
    }
    std::fflush(stdout);
  }
  const double p0 = median3(pcc["P0"]), bd = median3(pcc["Pbd"]), mpbd = median3(pcc["PmpBd"]);
  c.expect(p0 >= kTrendPcc, fmt("(a) median P0 PCC %.3f below 0.5", p0));
  c.expect(bd >= p0, "(b) median Pbd below median P0");
  c.expect(mpbd >= p0, "(b) median PmpBd below median P0");
  int bd_inv = 0, mpbd_inv = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    bd_inv += pcc["Pbd"][i] < pcc["P0"][i];
    mpbd_inv += pcc["PmpBd"][i] < pcc["P0"][i];
  }
  c.expect(2 * bd_inv < static_cast<int>(seeds.size()), "(b) Pbd below P0 on a majority of seeds");
  c.expect(2 * mpbd_inv < static_cast<int>(seeds.size()), "(b) PmpBd below P0 on a majority of seeds");
  const double minutes = std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
  c.expect(minutes <= kTrendBudgetMin, fmt("runtime %.1f min over budget", minutes));
  std::ostringstream s;
  s << "median PCC P0 " << fmt("%.3f", p0) << ", Pbd " << fmt("%.3f", bd) << ", PmpBd " << fmt("%.3f", mpbd)
    << "; inversions Pbd " << bd_inv << "/3, PmpBd " << mpbd_inv << "/3; " << fmt("%.1f min", minutes) << " on "
    << torch::get_num_threads() << " thread(s)";
  c.note(s.str());
}

void overfit_sanity(Check& c) {
  using namespace qis::pretrain;
  auto reader = bench::DatasetReader::open(dataset(8, 5));
  auto pool = reader.pretrain_data(reader.manifest().patient_ids(), 64, false);
  PretrainData four;
  four.xrays = pool.xrays.slice(0, 0, 4).clone();
  const auto enc = nets::EncoderSpec::tiny();

  // One optimizer step per epoch at a constant learning rate.
  auto memorize = [&](PretrainKind kind, double lr, int batch) {
    auto t = PretrainTask::defaults(kind, "desk", 64);
    t.batch_size = batch;
    t.epochs = kOverfitSteps;
    t.optim.lr = lr;
    t.optim.weight_decay = 0.0;
    t.optim.t0 = 100 * kOverfitSteps;
    return t;
  };

  // Each Pps step sees every image under kShuffles independent permutations.
  constexpr int kShuffles = 8;
  PretrainData shuffled;
  shuffled.xrays = four.xrays.repeat({kShuffles, 1, 1, 1});
  auto pps_task = memorize(PretrainKind::Pps, 1e-2, 4 * kShuffles);
  auto pps = run_pretraining(pps_task, shuffled, enc, 21);
  c.expect(pps.steps == kOverfitSteps, "Pps step count");
  {
    auto net = restore_pretrain_net(pps.checkpoint);
    net->eval();
    torch::NoGradGuard ng;
    const auto grid = imaging::PatchGrid::fit(pps_task.grid->rows, pps_task.grid->cols, 32, 64);
    Rng rng(99);
    double acc = 0;
    const int trials = 10;
    for (int t = 0; t < trials; ++t) {
      std::vector<std::vector<int>> perms(4, std::vector<int>(grid.count()));
      auto labels = torch::empty({4, grid.count()}, torch::kLong);
      for (int i = 0; i < 4; ++i) {
        std::iota(perms[i].begin(), perms[i].end(), 0);
        rng.shuffle(perms[i].begin(), perms[i].end());
        for (int j = 0; j < grid.count(); ++j) labels[i][j] = perms[i][j];
      }
      acc += patch_index_accuracy(net(shuffle_patch_tensor(four.xrays, grid, perms)), labels);
    }
    acc /= trials;
    c.expect(acc >= kOverfitAccuracy, fmt("Pps accuracy %.4f", acc));
    c.note(fmt("Pps accuracy %.4f", acc));
  }

  auto psr = run_pretraining(memorize(PretrainKind::Psr, 2e-3, 4), four, enc, 22);
  c.expect(psr.steps == kOverfitSteps, "Psr step count");
  {
    auto net = restore_pretrain_net(psr.checkpoint);
    net->eval();
    torch::NoGradGuard ng;
    const double mse = torch::mse_loss(net(four.xrays), four.xrays).item<double>();
    c.expect(mse < kOverfitMse, fmt("Psr MSE %.2e", mse));
    c.note(fmt("Psr MSE %.2e", mse) + " after " + std::to_string(kOverfitSteps) + " steps");
  }
}

void reporting_surface(Check& c) {
  ::unsetenv("QISBENCH_CACHE");
  const auto reader = bench::DatasetReader::open(dataset(8, 5));
  const auto cfg = quick_experiment();
  const auto out = fresh("reporting");
  const auto matrix = bench::RunMatrix::desk(cfg.folds);
  auto r = bench::run_experiment(cfg, matrix, reader, out);
  c.expect(r.failures.empty(), "desk experiment failed");

  // Table from the per-fold reports on disk, pooled by the table builder.
  std::vector<metrics::MetricsReport> folds;
  for (const auto& cell : matrix.cells)
    folds.push_back(metrics::read_report(out / "64" / cell.pretraining / ("fold" + std::to_string(cell.fold))));
  const auto table = bench::emit_table(folds, matrix.rows());
  c.expect(bench::kTableColumns == std::vector<std::string>{"PCC", "ICC", "mAE", "mPSNR", "mPSNR_roi", "mSSIM_roi"},
           "column structure");
  c.expect(table.rows.size() == 3, "one row per pretraining");
  const std::regex plain(R"(-?\d\.\d{3}\*?)");
  const std::regex fixed_pair(R"(-?\d\.\d{3}\*?\(\d\.\d{3}\*?\))");
  const std::regex sig_pair(R"((\d{3}|\d{2}\.\d|\d\.\d{2}|0\.\d{3}|0\.0\d{2,})\*?\((\d{3}|\d{2}\.\d|\d\.\d{2}|0\.\d{3}|0\.0\d{2,})\*?\))");
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto cells = table.formatted(i);
    c.expect(cells.size() == 6, "cell count");
    c.expect(std::regex_match(cells[0], plain), "PCC format: " + cells[0]);
    c.expect(std::regex_match(cells[1], plain), "ICC format: " + cells[1]);
    c.expect(std::regex_match(cells[2], fixed_pair), "mAE format: " + cells[2]);
    c.expect(std::regex_match(cells[3], sig_pair), "mPSNR format: " + cells[3]);
    c.expect(std::regex_match(cells[4], sig_pair), "mPSNR_roi format: " + cells[4]);
    c.expect(std::regex_match(cells[5], fixed_pair), "mSSIM_roi format: " + cells[5]);
  }
  c.expect(bench::format_fixed3({0.0687, 0.0549}) == "0.069(0.055)", "fixed format example");
  c.expect(bench::format_sig3({39.94, 2.523}) == "39.9(2.52)", "significant format example");
  const auto text = table.to_text();
  for (const auto& col : bench::kTableColumns) c.expect(text.find(col) != std::string::npos, "header " + col);
  c.expect(bench::ResultsTable::from_csv(table.to_csv()).rows == table.rows, "table CSV round trip");
  const auto gaps = bench::emit_table(folds, {{64, "P0"}, {64, "Pbd"}, {64, "PmpBd"}, {64, "Psr"}});
  c.expect(gaps.rows.size() == 4 && !gaps.rows[3].present && gaps.formatted(3)[0] == "-", "missing row as a gap");

  // GT against itself: PCC 1, zero error, every scatter point on the identity line.
  auto gt = bench::evaluate_ground_truth(reader, reader.manifest().target_entries(), {64, "GT", -1}, {});
  c.expect(gt.aggregates.pcc && std::fabs(*gt.aggregates.pcc - 1.0) < 1e-12, "GT PCC is 1");
  c.expect(gt.aggregates.mae.mean == 0.0, "GT mAE is 0");
  const auto sdir = out / "scatter";
  auto metas = bench::emit_scatter({gt, r.pooled.at(0)}, sdir);
  c.expect(metas.size() == 2, "one plot per row");
  const auto meta = bench::read_scatter_meta(sdir / "scatter_64_GT.svg");
  c.expect(meta.points == gt.rows.size(), "scatter point count");
  c.expect(meta.axis_min <= meta.data_min && meta.axis_max >= meta.data_max, "axes cover the data");
  c.expect(read_bytes(sdir / "scatter_64_GT.svg").find("class=\"identity\"") != std::string::npos, "identity line");
  std::ifstream csv(sdir / "scatter_64_GT.csv");
  std::string line;
  std::getline(csv, line);
  std::size_t rows = 0;
  bool on_identity = true;
  while (std::getline(csv, line)) {
    const auto c2 = line.rfind(','), c1 = line.rfind(',', c2 - 1);
    on_identity = on_identity && line.substr(c1 + 1, c2 - c1 - 1) == line.substr(c2 + 1);
    ++rows;
  }
  c.expect(rows == gt.rows.size() && on_identity, "GT scatter points lie on the identity");

  // Error maps: zero/white for a perfect prediction, uniform red for a positive offset.
  const auto* entry = reader.manifest().target_entries().front();
  const auto pf = reader.read(entry->pf_path, "evaluate");
  auto up = pf;
  for (auto& p : up.pixels) p += 0.25f;
  const auto edir = out / "errors";
  bench::emit_error_maps({{"same", pf, pf}, {"up", pf, up}}, edir);
  const auto zero = imaging::load_qimg(edir / "same_error.qimg");
  c.expect(std::all_of(zero.pixels.begin(), zero.pixels.end(), [](float v) { return v == 0.0f; }), "zero error map");
  const auto white = bench::read_png_rgb(edir / "same_error.png");
  c.expect(std::all_of(white.rgb.begin(), white.rgb.end(), [](std::uint8_t v) { return v == 255; }), "white PNG");
  const auto err = imaging::load_qimg(edir / "up_error.qimg");
  bool exact = err.same_shape(pf);
  for (std::size_t i = 0; exact && i < err.size(); ++i) exact = err.pixels[i] == up.pixels[i] - pf.pixels[i];
  c.expect(exact, "signed error map is pred - gt");
  const auto red = bench::read_png_rgb(edir / "up_error.png");
  bool uniform = red.width == pf.width && red.height == pf.height;
  for (std::size_t i = 0; uniform && i + 2 < red.rgb.size(); i += 3)
    uniform = red.rgb[i] == 255 && red.rgb[i + 1] <= 1 && red.rgb[i + 2] <= 1;
  c.expect(uniform, "positive offset renders red");
  c.note(std::to_string(table.rows.size()) + " table rows, " + std::to_string(gt.rows.size()) + " scatter points");
}

struct Criterion {
  std::string name;
  std::function<void(Check&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"metric-oracles", metric_oracles},
      {"loss-oracles", loss_oracles},
      {"gradient-checks", gradient_checks},
      {"moco-mechanics", moco_mechanics},
      {"transfer-integrity", transfer_integrity},
      {"split-hygiene", split_hygiene},
      {"format-round-trips", format_round_trips},
      {"bmd-voxel-end-to-end", voxel_end_to_end},
      {"desk-trend", desk_trend},
      {"overfit-sanity", overfit_sanity},
      {"reporting-surface", reporting_surface},
  };
  std::vector<std::string> filters(argv + 1, argv + argc);
  set_log_level(LogLevel::quiet);

  int failed = 0, ran = 0;
  for (const auto& cr : criteria) {
    if (!filters.empty() &&
        std::none_of(filters.begin(), filters.end(), [&](const std::string& f) { return cr.name.find(f) != std::string::npos; }))
      continue;
    ++ran;
    Check check;
    const auto t0 = Clock::now();
    try {
      cr.run(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("%s %-22s %8.1fs  %s\n", check.ok() ? "PASS" : "FAIL", cr.name.c_str(), secs, check.summary().c_str());
    std::fflush(stdout);
    failed += !check.ok();
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  fs::remove_all(work_dir());
  return failed == 0 ? 0 : 1;
}
