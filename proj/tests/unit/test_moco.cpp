#include <gtest/gtest.h>
#include <torch/torch.h>

#include "qis/error.hpp"
#include "qis/pretrain/moco.hpp"

using namespace qis;
using namespace qis::pretrain;

TEST(MoCoQueue, FifoOverManyEnqueues) {
  const int64_t K = 16, d = 4;
  MoCoQueue q(K, d, torch::kFloat64);
  std::vector<torch::Tensor> all;
  std::vector<int64_t> ids;
  int64_t next = 0;
  torch::manual_seed(1);
  while (next < 10 * K) {
    const int64_t b = 1 + (next % 5);
    auto keys = torch::randn({b, d}, torch::kFloat64);
    keys = keys / keys.norm(2, 1, true);
    auto pid = torch::arange(next, next + b, torch::kInt64);
    q.enqueue(keys, pid, pid % 5);
    for (int64_t i = 0; i < b; ++i) {
      all.push_back(keys[i]);
      ids.push_back(next + i);
    }
    next += b;
    ASSERT_EQ(q.size(), std::min<int64_t>(K, next));
    const int64_t n = q.size();
    auto stored = q.keys();
    auto pats = q.patients();
    for (int64_t i = 0; i < n; ++i) {
      const auto src = static_cast<std::size_t>(next - n + i);
      ASSERT_TRUE(torch::equal(stored[i], all[src]));
      ASSERT_EQ(pats[i].item<int64_t>(), ids[src]);
      ASSERT_EQ(q.poses()[i].item<int64_t>(), ids[src] % 5);
    }
  }
}

TEST(MoCoQueue, OversizedBatchAndNorms) {
  MoCoQueue q(4, 2, torch::kFloat64);
  auto keys = torch::zeros({6, 2}, torch::kFloat64);
  for (int i = 0; i < 6; ++i) {
    keys[i][0] = std::cos(i);
    keys[i][1] = std::sin(i);
  }
  q.enqueue(keys);
  EXPECT_TRUE(torch::equal(q.keys(), keys.slice(0, 2)));
  EXPECT_THROW(q.enqueue(keys * 1.1), NormError);
}

TEST(Momentum, MatchesScalarRecurrence) {
  torch::manual_seed(3);
  auto query = torch::nn::Linear(3, 2);
  auto key = torch::nn::Linear(3, 2);
  query->to(torch::kFloat64);
  key->to(torch::kFloat64);
  const double m = 0.9;
  std::vector<double> oracle;
  for (auto& p : key->parameters()) {
    auto flat = p.detach().to(torch::kFloat64).reshape({-1});
    for (int64_t i = 0; i < flat.numel(); ++i) oracle.push_back(flat[i].item<double>());
  }
  for (int step = 0; step < 25; ++step) {
    {
      torch::NoGradGuard ng;
      for (auto& p : query->parameters()) p.add_(torch::randn_like(p) * 0.1);
    }
    momentum_update(*key, *query, m);
    std::size_t j = 0;
    for (auto& p : query->parameters()) {
      auto flat = p.detach().to(torch::kFloat64).reshape({-1});
      for (int64_t i = 0; i < flat.numel(); ++i, ++j) oracle[j] = m * oracle[j] + (1 - m) * flat[i].item<double>();
    }
  }
  std::size_t j = 0;
  for (auto& p : key->parameters()) {
    auto flat = p.detach().to(torch::kFloat64).reshape({-1});
    for (int64_t i = 0; i < flat.numel(); ++i, ++j) EXPECT_NEAR(flat[i].item<double>(), oracle[j], 1e-10);
  }
}
