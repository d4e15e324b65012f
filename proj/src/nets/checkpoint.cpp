#include "qis/nets/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "qis/error.hpp"
#include "qis/hash.hpp"

namespace qis::nets {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::vector<std::byte>& out, T v) {
  const auto* p = reinterpret_cast<const std::byte*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

void put_bytes(std::vector<std::byte>& out, const void* data, std::size_t n) {
  const auto* p = static_cast<const std::byte*>(data);
  out.insert(out.end(), p, p + n);
}

struct Reader {
  std::span<const std::byte> in;
  std::size_t off = 0;

  void need(std::size_t n) const {
    if (n > in.size() - off) throw FormatError("checkpoint: truncated file");
  }
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in.data() + off), n);
    off += n;
    return s;
  }
};

std::uint8_t dtype_code(const torch::Tensor& t) {
  if (t.scalar_type() == torch::kFloat32) return 0;
  if (t.scalar_type() == torch::kFloat64) return 1;
  throw FormatError("checkpoint: only float32/float64 tensors are stored");
}

torch::Tensor snapshot(const torch::Tensor& t) {
  return t.detach().to(torch::kCPU).contiguous().clone();
}

void hash_tensor(Sha256& h, const std::string& name, const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kCPU).contiguous();
  std::vector<std::byte> head;
  put<std::uint32_t>(head, static_cast<std::uint32_t>(name.size()));
  put_bytes(head, name.data(), name.size());
  put<std::uint8_t>(head, dtype_code(c));
  put<std::uint8_t>(head, static_cast<std::uint8_t>(c.dim()));
  for (auto d : c.sizes()) put<std::int64_t>(head, d);
  h.update(head);
  h.update(std::span<const std::byte>(static_cast<const std::byte*>(c.data_ptr()), c.nbytes()));
}

std::map<std::string, torch::Tensor> module_state(torch::nn::Module& m) {
  std::map<std::string, torch::Tensor> out;
  for (auto& p : m.named_parameters()) out.emplace(p.key(), p.value());
  for (auto& b : m.named_buffers()) out.emplace(b.key(), b.value());
  return out;
}

}  // namespace

void Checkpoint::add_module(const torch::nn::Module& m, const std::string& prefix) {
  for (const auto& p : m.named_parameters()) add(prefix + p.key(), p.value());
  for (const auto& b : m.named_buffers()) add(prefix + b.key(), b.value());
}

void Checkpoint::add(const std::string& name, const torch::Tensor& t) {
  dtype_code(t);
  if (name.empty() || name.size() > 0xFFFF) throw FormatError("checkpoint: bad tensor name");
  for (auto& [n, v] : tensors)
    if (n == name) {
      v = snapshot(t);
      return;
    }
  tensors.emplace_back(name, snapshot(t));
}

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, v] : tensors)
    if (n == name) return &v;
  return nullptr;
}

std::vector<std::string> Checkpoint::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [n, v] : tensors)
    if (n.rfind(prefix, 0) == 0) out.push_back(n);
  return out;
}

std::string Checkpoint::fingerprint(const std::string& component) const {
  if (!meta.contains("fingerprints") || !meta["fingerprints"].contains(component)) return "";
  return meta["fingerprints"][component].get<std::string>();
}

void Checkpoint::set_fingerprint(const std::string& component, const std::string& fp) {
  meta["fingerprints"][component] = fp;
}

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::byte> out;
  put_bytes(out, "QCKP", 4);
  put<std::uint16_t>(out, kCheckpointVersion);
  const std::string meta = ckpt.meta.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  put_bytes(out, meta.data(), meta.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    const auto c = t.contiguous();
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put<std::uint8_t>(out, dtype_code(c));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(c.dim()));
    for (auto d : c.sizes()) put<std::int64_t>(out, d);
    put<std::uint64_t>(out, c.nbytes());
    put_bytes(out, c.data_ptr(), c.nbytes());
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  Reader r{bytes};
  if (r.str(4) != "QCKP") throw FormatError("checkpoint: bad magic");
  if (r.get<std::uint16_t>() != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
  Checkpoint ckpt;
  const auto meta_len = r.get<std::uint32_t>();
  try {
    ckpt.meta = nlohmann::json::parse(r.str(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = r.str(r.get<std::uint16_t>());
    const auto code = r.get<std::uint8_t>();
    if (code > 1) throw FormatError("checkpoint: unknown dtype in " + name);
    const auto ndim = r.get<std::uint8_t>();
    std::vector<std::int64_t> dims(ndim);
    std::uint64_t numel = 1;
    for (auto& d : dims) {
      d = r.get<std::int64_t>();
      if (d < 0) throw FormatError("checkpoint: negative dim in " + name);
      numel *= static_cast<std::uint64_t>(d);
    }
    const auto nbytes = r.get<std::uint64_t>();
    const std::uint64_t elem = code == 0 ? 4 : 8;
    if (nbytes != numel * elem) throw FormatError("checkpoint: byte count mismatch in " + name);
    r.need(nbytes);
    auto t = torch::empty(dims, code == 0 ? torch::kFloat32 : torch::kFloat64);
    std::memcpy(t.data_ptr(), bytes.data() + r.off, nbytes);
    r.off += nbytes;
    ckpt.tensors.emplace_back(name, std::move(t));
  }
  if (r.off != bytes.size()) throw FormatError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::span<const std::byte>(reinterpret_cast<const std::byte*>(raw.data()), raw.size()));
}

Checkpoint capture_generator(Generator& g, Discriminator* d) {
  Checkpoint ckpt;
  ckpt.add_module(*g);
  ckpt.meta["generator_spec"] = g->spec().to_json();
  ckpt.meta["encoder_spec"] = g->spec().encoder.to_json();
  ckpt.set_fingerprint("generator", g->spec().fingerprint());
  ckpt.set_fingerprint("encoder", g->spec().encoder.fingerprint());
  if (d != nullptr) {
    ckpt.add_module(**d, "discriminator.");
    ckpt.meta["discriminator_spec"] = (*d)->spec().to_json();
    ckpt.set_fingerprint("discriminator", (*d)->spec().fingerprint());
  }
  return ckpt;
}

Checkpoint capture_pretrain(PretrainNet& net, const EncoderSpec& encoder) {
  Checkpoint ckpt;
  ckpt.add_module(*net);
  ckpt.meta["encoder_spec"] = encoder.to_json();
  ckpt.meta["head_spec"] = net->head()->spec().to_json();
  ckpt.set_fingerprint("encoder", encoder.fingerprint());
  return ckpt;
}

void load_into(torch::nn::Module& m, const Checkpoint& ckpt, const std::string& prefix) {
  auto state = module_state(m);
  std::vector<std::string> bad;
  for (auto& [name, dst] : state) {
    const auto* src = ckpt.find(prefix + name);
    if (src == nullptr) {
      bad.push_back(prefix + name + " (missing)");
    } else if (src->sizes() != dst.sizes()) {
      bad.push_back(prefix + name + " (shape)");
    }
  }
  if (!bad.empty()) {
    std::string msg = "cannot load " + std::to_string(bad.size()) + " tensors:";
    for (std::size_t i = 0; i < bad.size() && i < 8; ++i) msg += " " + bad[i];
    if (bad.size() > 8) msg += " ...";
    throw TransferError(msg);
  }
  torch::NoGradGuard guard;
  for (auto& [name, dst] : state) dst.copy_(*ckpt.find(prefix + name));
}

Generator restore_generator(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("generator_spec")) throw FormatError("checkpoint has no generator");
  auto spec = GeneratorSpec::from_json(ckpt.meta["generator_spec"]);
  if (spec.fingerprint() != ckpt.fingerprint("generator")) throw TransferError("generator fingerprint mismatch");
  Generator g(spec);
  load_into(*g, ckpt, "");
  return g;
}

Discriminator restore_discriminator(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("discriminator_spec")) throw FormatError("checkpoint has no discriminator");
  Discriminator d(DiscriminatorSpec::from_json(ckpt.meta["discriminator_spec"]));
  load_into(*d, ckpt, "discriminator.");
  return d;
}

TransferReport transfer_encoder(Encoder& dst, const Checkpoint& ckpt) {
  const std::string want = dst->spec().fingerprint();
  const std::string have = ckpt.fingerprint("encoder");
  if (have != want) {
    // Name the tensors that differ so the mismatch is diagnosable.
    std::vector<std::string> offending;
    auto state = module_state(*dst);
    for (auto& [name, t] : state) {
      const auto* src = ckpt.find("encoder." + name);
      if (src == nullptr || src->sizes() != t.sizes()) offending.push_back("encoder." + name);
    }
    for (const auto& n : ckpt.names_with_prefix("encoder."))
      if (!state.count(n.substr(8))) offending.push_back(n);
    std::string msg = "encoder fingerprint mismatch (checkpoint " + (have.empty() ? "<none>" : have.substr(0, 12)) +
                      ", model " + want.substr(0, 12) + ")";
    if (!offending.empty()) {
      msg += "; offending:";
      for (std::size_t i = 0; i < offending.size() && i < 8; ++i) msg += " " + offending[i];
      if (offending.size() > 8) msg += " ... (" + std::to_string(offending.size()) + " total)";
    }
    throw TransferError(msg);
  }
  load_into(*dst, ckpt, "encoder.");
  TransferReport report;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("encoder.", 0) == 0)
      report.loaded.push_back(name);
    else
      report.skipped.push_back(name);
  }
  report.checksum = checksum(*dst, "encoder.");
  return report;
}

Checkpoint extract_encoder(const Checkpoint& ckpt) {
  Checkpoint out;
  for (const auto& [name, t] : ckpt.tensors)
    if (name.rfind("encoder.", 0) == 0) out.tensors.emplace_back(name, t.clone());
  for (const char* key : {"encoder_spec", "task", "seed", "epoch"})
    if (ckpt.meta.contains(key)) out.meta[key] = ckpt.meta[key];
  out.set_fingerprint("encoder", ckpt.fingerprint("encoder"));
  return out;
}

std::string checksum(const Checkpoint& ckpt, const std::string& prefix) {
  std::vector<std::pair<std::string, const torch::Tensor*>> sel;
  for (const auto& [name, t] : ckpt.tensors)
    if (name.rfind(prefix, 0) == 0) sel.emplace_back(name, &t);
  std::sort(sel.begin(), sel.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  Sha256 h;
  for (const auto& [name, t] : sel) hash_tensor(h, name, *t);
  return h.hex_digest();
}

std::string checksum(const torch::nn::Module& m, const std::string& prefix) {
  Checkpoint c;
  c.add_module(m, prefix);
  return checksum(c, prefix);
}

}  // namespace qis::nets
