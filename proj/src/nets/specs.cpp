#include "qis/nets/specs.hpp"

#include <algorithm>

#include "qis/error.hpp"
#include "qis/hash.hpp"

namespace qis::nets {

EncoderSpec EncoderSpec::desk() { return {}; }

EncoderSpec EncoderSpec::tiny() {
  EncoderSpec s;
  s.widths = {8, 16, 32, 64};
  s.blocks = {1, 1, 1, 1};
  s.family = "tiny";
  return s;
}

EncoderSpec EncoderSpec::paper() {
  EncoderSpec s;
  s.widths = {256, 512, 1536, 1536};
  s.blocks = {1, 2, 6, 3};
  s.family = "paper";
  return s;
}

EncoderSpec EncoderSpec::by_family(const std::string& family) {
  if (family == "desk") return desk();
  if (family == "tiny") return tiny();
  if (family == "paper") return paper();
  throw ConfigError("unknown encoder family: " + family);
}

void EncoderSpec::validate() const {
  if (in_channels < 1) throw ConfigError("encoder: in_channels must be >= 1");
  if (strides.empty()) throw ConfigError("encoder: no pyramid levels");
  if (widths.size() != strides.size() || blocks.size() != strides.size())
    throw ConfigError("encoder: widths, strides and blocks must have one entry per level");
  int prev = 1;
  for (std::size_t i = 0; i < strides.size(); ++i) {
    const int s = strides[i];
    if (s <= prev) throw ConfigError("encoder: strides must be strictly increasing");
    if (s % prev != 0 || ((s / prev) & (s / prev - 1)) != 0)
      throw ConfigError("encoder: each stride must be a power-of-two multiple of the previous");
    if (widths[i] < 1 || blocks[i] < 0) throw ConfigError("encoder: bad width or block count");
    prev = s;
  }
}

nlohmann::json EncoderSpec::to_json() const {
  return {{"in_channels", in_channels}, {"widths", widths}, {"strides", strides},
          {"blocks", blocks},           {"family", family}};
}

EncoderSpec EncoderSpec::from_json(const nlohmann::json& j) {
  EncoderSpec s;
  s.in_channels = j.value("in_channels", 1);
  s.widths = j.at("widths").get<std::vector<int>>();
  s.strides = j.at("strides").get<std::vector<int>>();
  s.blocks = j.at("blocks").get<std::vector<int>>();
  s.family = j.value("family", std::string("custom"));
  s.validate();
  return s;
}

std::string EncoderSpec::fingerprint() const { return sha256_hex(to_json().dump()); }

GeneratorSpec GeneratorSpec::for_encoder(const EncoderSpec& encoder) {
  GeneratorSpec g;
  g.encoder = encoder;
  for (int w : encoder.widths) g.decoder_widths.push_back(std::max(8, w / 2));
  return g;
}

void GeneratorSpec::validate() const {
  encoder.validate();
  if (decoder_widths.size() != encoder.strides.size())
    throw ConfigError("generator: decoder needs one width per pyramid level");
  if (out_channels != 1) throw ConfigError("generator: single output channel expected");
}

nlohmann::json GeneratorSpec::to_json() const {
  return {{"encoder", encoder.to_json()}, {"decoder_widths", decoder_widths}, {"out_channels", out_channels}};
}

GeneratorSpec GeneratorSpec::from_json(const nlohmann::json& j) {
  GeneratorSpec g;
  g.encoder = EncoderSpec::from_json(j.at("encoder"));
  g.decoder_widths = j.at("decoder_widths").get<std::vector<int>>();
  g.out_channels = j.value("out_channels", 1);
  g.validate();
  return g;
}

std::string GeneratorSpec::fingerprint() const { return sha256_hex(to_json().dump()); }

void DiscriminatorSpec::validate() const {
  if (depth < 1 || base_width < 1 || in_channels < 1) throw ConfigError("discriminator: bad spec");
}

nlohmann::json DiscriminatorSpec::to_json() const {
  return {{"depth", depth}, {"base_width", base_width}, {"in_channels", in_channels}};
}

DiscriminatorSpec DiscriminatorSpec::from_json(const nlohmann::json& j) {
  DiscriminatorSpec d{j.at("depth").get<int>(), j.at("base_width").get<int>(), j.value("in_channels", 1)};
  d.validate();
  return d;
}

std::string DiscriminatorSpec::fingerprint() const { return sha256_hex(to_json().dump()); }

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::lightweight_decoder: return "lightweightDecoder";
    case HeadKind::patch_index_classifier: return "patchIndexClassifier";
    case HeadKind::projection_mlp: return "projectionMLP";
    case HeadKind::linear_classifier: return "linearClassifier";
    case HeadKind::info_regressor: return "infoRegressor";
  }
  return "?";
}

HeadKind head_kind_from_string(const std::string& s) {
  for (HeadKind k : {HeadKind::lightweight_decoder, HeadKind::patch_index_classifier, HeadKind::projection_mlp,
                     HeadKind::linear_classifier, HeadKind::info_regressor})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown head kind: " + s);
}

nlohmann::json HeadSpec::to_json() const {
  return {{"kind", to_string(kind)}, {"out_dim", out_dim},     {"hidden_dim", hidden_dim},
          {"width", width},          {"grid_rows", grid_rows}, {"grid_cols", grid_cols},
          {"input_h", input_h},      {"input_w", input_w}};
}

HeadSpec HeadSpec::from_json(const nlohmann::json& j) {
  HeadSpec h;
  h.kind = head_kind_from_string(j.at("kind").get<std::string>());
  h.out_dim = j.at("out_dim").get<int>();
  h.hidden_dim = j.value("hidden_dim", 0);
  h.width = j.value("width", 32);
  h.grid_rows = j.value("grid_rows", 0);
  h.grid_cols = j.value("grid_cols", 0);
  h.input_h = j.value("input_h", 0);
  h.input_w = j.value("input_w", 0);
  return h;
}

}  // namespace qis::nets
