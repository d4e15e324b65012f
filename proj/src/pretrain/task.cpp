#include "qis/pretrain/task.hpp"

#include <array>

#include "qis/error.hpp"

namespace qis::pretrain {

namespace {

constexpr std::array<std::pair<PretrainKind, const char*>, 11> kNames{{
    {PretrainKind::P0, "P0"},
    {PretrainKind::Psr, "Psr"},
    {PretrainKind::Pmp, "Pmp"},
    {PretrainKind::Pps, "Pps"},
    {PretrainKind::Psc, "Psc"},
    {PretrainKind::Ppac, "Ppac"},
    {PretrainKind::Ppoc, "Ppoc"},
    {PretrainKind::Ppc, "Ppc"},
    {PretrainKind::Ppi, "Ppi"},
    {PretrainKind::Pbd, "Pbd"},
    {PretrainKind::PmpBd, "PmpBd"},
}};

}  // namespace

std::string to_string(PretrainKind kind) {
  for (const auto& [k, n] : kNames)
    if (k == kind) return n;
  return "?";
}

PretrainKind pretrain_kind_from_string(const std::string& s) {
  for (const auto& [k, n] : kNames)
    if (s == n) return k;
  throw ConfigError("unknown pretraining kind: " + s);
}

std::vector<PretrainKind> expand_kind(PretrainKind kind) {
  if (kind == PretrainKind::PmpBd) return {PretrainKind::Pmp, PretrainKind::Pbd};
  return {kind};
}

bool is_contrastive(PretrainKind kind) {
  return kind == PretrainKind::Psc || kind == PretrainKind::Ppac || kind == PretrainKind::Ppoc;
}

bool uses_grid(PretrainKind kind) { return kind == PretrainKind::Pmp || kind == PretrainKind::Pps; }

int paper_batch_size(int resolution) {
  if (resolution <= 256) return 8;
  if (resolution <= 512) return 4;
  return 2;
}

PretrainTask PretrainTask::defaults(PretrainKind kind, const std::string& profile, int resolution) {
  if (kind == PretrainKind::PmpBd) throw ConfigError("PmpBd is a cascade; take defaults per stage");
  const bool desk = profile == "desk";
  if (!desk && profile != "paper") throw ConfigError("unknown profile: " + profile);
  PretrainTask t;
  t.kind = kind;
  t.batch_size = desk ? 8 : paper_batch_size(resolution);
  switch (kind) {
    case PretrainKind::P0: t.epochs = 0; break;
    case PretrainKind::Psr:
    case PretrainKind::Pps:
    case PretrainKind::Ppc: t.epochs = 1270; break;
    case PretrainKind::Pbd: t.epochs = resolution >= 1024 ? 30 : 150; break;
    default: t.epochs = 630; break;
  }
  if (desk && kind != PretrainKind::P0) t.epochs = 10;
  // Grids are given as rows x cols of the half image (height = 2 x width).
  if (kind == PretrainKind::Pmp) {
    t.grid = GridConfig{16, 8};
    t.mask = MaskConfig{};
  }
  if (kind == PretrainKind::Pps) t.grid = GridConfig{8, 4};
  if (is_contrastive(kind)) {
    ContrastiveConfig c;
    if (desk) {
      c.queue_size = 256;
      c.feature_dim = 128;
    }
    t.contrastive = c;
  }
  return t;
}

void PretrainTask::validate() const {
  if (kind == PretrainKind::PmpBd) throw ConfigError("PmpBd must be run as a cascade of Pmp and Pbd");
  if (uses_grid(kind) != grid.has_value()) throw ConfigError(to_string(kind) + ": grid present/absent mismatch");
  if ((kind == PretrainKind::Pmp) != mask.has_value()) throw ConfigError(to_string(kind) + ": mask present/absent mismatch");
  if (is_contrastive(kind) != contrastive.has_value())
    throw ConfigError(to_string(kind) + ": contrastive settings present/absent mismatch");
  if (grid && (grid->rows < 1 || grid->cols < 1)) throw ConfigError("grid dims must be positive");
  if (kind == PretrainKind::Pps && grid && grid->rows * grid->cols < 2) throw ConfigError("Pps needs at least 2 patches");
  if (mask && !(mask->ratio > 0.0 && mask->ratio <= 1.0)) throw ConfigError("mask ratio must lie in (0, 1]");
  if (contrastive) {
    const auto& c = *contrastive;
    if (!(c.temperature > 0)) throw ConfigError("temperature must be positive");
    if (c.queue_size < 1 || c.feature_dim < 1) throw ConfigError("queue size and feature dim must be positive");
    if (!(c.momentum > 0.0 && c.momentum < 1.0)) throw ConfigError("momentum must lie in (0, 1)");
  }
  if (epochs < 0 || (kind != PretrainKind::P0 && epochs < 1)) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
}

nlohmann::json PretrainTask::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}, {"epochs", epochs}, {"batch_size", batch_size}, {"optim", optim.to_json()}};
  if (grid) j["grid"] = {{"rows", grid->rows}, {"cols", grid->cols}};
  if (mask) j["mask"] = {{"ratio", mask->ratio}, {"masked_only_loss", mask->masked_only_loss}};
  if (contrastive) {
    const auto& c = *contrastive;
    j["contrastive"] = {{"temperature", c.temperature},
                        {"queue_size", c.queue_size},
                        {"feature_dim", c.feature_dim},
                        {"momentum", c.momentum},
                        {"augment",
                         {{"min_crop_area", c.augment.min_crop_area},
                          {"intensity_jitter", c.augment.intensity_jitter},
                          {"max_rotation_deg", c.augment.max_rotation_deg}}}};
  }
  return j;
}

PretrainTask PretrainTask::from_json(const nlohmann::json& j) {
  try {
    PretrainTask t;
    t.kind = pretrain_kind_from_string(j.at("kind").get<std::string>());
    t.epochs = j.at("epochs").get<int>();
    t.batch_size = j.at("batch_size").get<int>();
    if (j.contains("optim")) t.optim = nets::OptimConfig::from_json(j["optim"]);
    if (j.contains("grid")) t.grid = GridConfig{j["grid"].at("rows").get<int>(), j["grid"].at("cols").get<int>()};
    if (j.contains("mask"))
      t.mask = MaskConfig{j["mask"].value("ratio", 0.75), j["mask"].value("masked_only_loss", true)};
    if (j.contains("contrastive")) {
      const auto& cj = j["contrastive"];
      ContrastiveConfig c;
      c.temperature = cj.value("temperature", c.temperature);
      c.queue_size = cj.value("queue_size", c.queue_size);
      c.feature_dim = cj.value("feature_dim", c.feature_dim);
      c.momentum = cj.value("momentum", c.momentum);
      if (cj.contains("augment")) {
        c.augment.min_crop_area = cj["augment"].value("min_crop_area", c.augment.min_crop_area);
        c.augment.intensity_jitter = cj["augment"].value("intensity_jitter", c.augment.intensity_jitter);
        c.augment.max_rotation_deg = cj["augment"].value("max_rotation_deg", c.augment.max_rotation_deg);
      }
      t.contrastive = c;
    }
    t.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pretraining task: ") + e.what());
  }
}

}  // namespace qis::pretrain
