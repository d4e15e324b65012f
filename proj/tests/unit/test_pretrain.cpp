#include <gtest/gtest.h>
#include <torch/torch.h>

#include "fixtures.hpp"
#include "qis/bench/data.hpp"
#include "qis/error.hpp"
#include "qis/nets/checkpoint.hpp"
#include "qis/nets/modules.hpp"
#include "qis/pretrain/task.hpp"
#include "qis/pretrain/trainer.hpp"
#include "qis/target/trainer.hpp"

using namespace qis;
using namespace qis::pretrain;

namespace {

PretrainData data_for_test(bool bones = true) {
  auto reader = bench::DatasetReader::open(support::small_dataset());
  return reader.pretrain_data(reader.manifest().patient_ids(), 64, bones);
}

PretrainTask quick(PretrainKind kind, int epochs = 1) {
  auto t = PretrainTask::defaults(kind, "desk", 64);
  t.epochs = epochs;
  return t;
}

}  // namespace

TEST(PretrainTask, PaperDefaults) {
  using K = PretrainKind;
  for (K k : {K::Psr, K::Pps, K::Ppc}) EXPECT_EQ(PretrainTask::defaults(k, "paper", 256).epochs, 1270);
  for (K k : {K::Pmp, K::Psc, K::Ppac, K::Ppoc, K::Ppi}) EXPECT_EQ(PretrainTask::defaults(k, "paper", 256).epochs, 630);
  EXPECT_EQ(PretrainTask::defaults(K::Pbd, "paper", 256).epochs, 150);
  EXPECT_EQ(PretrainTask::defaults(K::Pbd, "paper", 256).optim.lr, 1e-4);
  EXPECT_EQ(paper_batch_size(256), 8);
  EXPECT_EQ(paper_batch_size(512), 4);
  EXPECT_EQ(paper_batch_size(1024), 2);
  auto pmp = PretrainTask::defaults(K::Pmp, "paper", 256);
  EXPECT_EQ(pmp.grid->rows * pmp.grid->cols, 128);
  EXPECT_EQ(pmp.mask->ratio, 0.75);
  EXPECT_EQ(PretrainTask::defaults(K::Pps, "paper", 256).grid->rows * PretrainTask::defaults(K::Pps, "paper", 256).grid->cols, 32);
  auto psc = PretrainTask::defaults(K::Psc, "paper", 256);
  EXPECT_EQ(psc.contrastive->queue_size, 4096);
  EXPECT_EQ(psc.contrastive->feature_dim, 2048);
  EXPECT_EQ(expand_kind(K::PmpBd), (std::vector<K>{K::Pmp, K::Pbd}));
  for (int i = 0; i <= static_cast<int>(K::PmpBd); ++i) {
    const auto k = static_cast<K>(i);
    EXPECT_EQ(pretrain_kind_from_string(to_string(k)), k);
    if (k == K::PmpBd) continue;
    auto t = PretrainTask::defaults(k, "paper", 256);
    EXPECT_NO_THROW(t.validate());
    EXPECT_EQ(PretrainTask::from_json(t.to_json()), t);
  }
  auto broken = pmp;
  broken.grid.reset();
  EXPECT_THROW(broken.validate(), ConfigError);
  auto extra = PretrainTask::defaults(K::Psr, "paper", 256);
  extra.grid = GridConfig{8, 4};
  EXPECT_THROW(extra.validate(), ConfigError);
}

TEST(Pretraining, P0IsFreshInit) {
  auto data = data_for_test(false);
  auto r = run_pretraining(quick(PretrainKind::P0), data, nets::EncoderSpec::tiny(), 42);
  torch::manual_seed(42);
  nets::Encoder fresh(nets::EncoderSpec::tiny());
  EXPECT_EQ(nets::checksum(r.checkpoint, "encoder."), nets::checksum(*fresh, "encoder."));
  EXPECT_EQ(r.steps, 0);
}

TEST(Pretraining, EveryKindRunsAndIsDeterministic) {
  auto data = data_for_test();
  using K = PretrainKind;
  for (K k : {K::Psr, K::Pmp, K::Pps, K::Psc, K::Ppac, K::Ppoc, K::Ppc, K::Ppi, K::Pbd}) {
    auto a = run_pretraining(quick(k), data, nets::EncoderSpec::tiny(), 3);
    ASSERT_EQ(a.epoch_loss.size(), 1u) << to_string(k);
    EXPECT_TRUE(std::isfinite(a.epoch_loss[0])) << to_string(k);
    EXPECT_GE(a.epoch_loss[0], -1e-6) << to_string(k);
    if (k == K::Psr || k == K::Psc || k == K::Ppi) {
      auto b = run_pretraining(quick(k), data, nets::EncoderSpec::tiny(), 3);
      EXPECT_EQ(a.epoch_loss, b.epoch_loss) << to_string(k);
    }
    auto net = restore_pretrain_net(a.checkpoint);
    EXPECT_EQ(nets::checksum(*net->encoder(), "encoder."), nets::checksum(nets::extract_encoder(a.checkpoint), "encoder."));
  }
  auto no_bones = data_for_test(false);
  EXPECT_THROW(run_pretraining(quick(K::Pbd), no_bones, nets::EncoderSpec::tiny(), 3), ConfigError);
}

TEST(Pretraining, CascadeTransfers) {
  auto data = data_for_test();
  const auto enc = nets::EncoderSpec::tiny();
  auto pmp = run_pretraining(quick(PretrainKind::Pmp), data, enc, 8);
  auto cascade = run_cascade({quick(PretrainKind::Pmp), quick(PretrainKind::Pbd)}, data, enc, 8);
  ASSERT_EQ(cascade.transfers.size(), 1u);
  EXPECT_EQ(cascade.transfers[0].checksum, nets::checksum(pmp.checkpoint, "encoder."));
  EXPECT_EQ(cascade.initial_encoder_checksum, nets::checksum(pmp.checkpoint, "encoder."));
  EXPECT_TRUE(cascade.checkpoint.meta.contains("cascade"));

  auto single = run_cascade({quick(PretrainKind::Psr)}, data, enc, 9);
  auto direct = run_pretraining(quick(PretrainKind::Psr), data, enc, 9);
  EXPECT_EQ(nets::checksum(single.checkpoint), nets::checksum(direct.checkpoint));
  EXPECT_EQ(single.epoch_loss, direct.epoch_loss);

  // Three stages: two stage-to-stage transfers, then the target transfer.
  auto three = run_cascade({quick(PretrainKind::Psr), quick(PretrainKind::Pmp), quick(PretrainKind::Pbd)}, data, enc, 10);
  EXPECT_EQ(three.transfers.size(), 2u);
  auto reader = bench::DatasetReader::open(support::small_dataset());
  auto cfg = target::TargetConfig::defaults("desk", 64);
  cfg.generator = nets::GeneratorSpec::for_encoder(enc);
  cfg.epochs = 1;
  cfg.normalization_scale = reader.manifest().pf_scale;
  auto t = target::train_target(cfg, reader.target_data(reader.manifest().patient_ids(), 64), &three.checkpoint);
  ASSERT_TRUE(t.transfer.has_value());
  EXPECT_EQ(t.initial_encoder_checksum, nets::checksum(three.checkpoint, "encoder."));

  auto wrong = run_pretraining(quick(PretrainKind::Psr), data, nets::EncoderSpec::desk(), 1);
  EXPECT_THROW(target::train_target(cfg, reader.target_data(reader.manifest().patient_ids(), 64), &wrong.checkpoint),
               TransferError);
}
