#include <bit>
#include <cstring>
#include <fstream>

#include "smfn/model.hpp"

namespace smfn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename U>
  void pod(U v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(U));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const std::string& name, const Tensor<float>& t) {
    str(name);
    pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) pod<std::uint64_t>(e);
    os_.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}
  template <typename U>
  U pod() {
    U v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(U));
    if (!is_) fail("truncated file");
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 20)) fail("implausible string length");
    std::string s(n, '\0');
    is_.read(s.data(), n);
    if (!is_) fail("truncated file");
    return s;
  }
  std::pair<std::string, Tensor<float>> tensor() {
    std::string name = str();
    const auto rank = pod<std::uint32_t>();
    if (rank == 0 || rank > 8) fail("tensor '" + name + "' has invalid rank");
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(pod<std::uint64_t>());
    Tensor<float> t(shape);
    is_.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!is_) fail("truncated payload for tensor '" + name + "'");
    return {std::move(name), std::move(t)};
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ValidationError("checkpoint " + path_ + ": " + msg);
  }

 private:
  std::istream& is_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::string& path, const SmfnParams<float>& params,
                     const std::map<std::string, Tensor<float>>& optimizer) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  Writer w(os);
  os.write("SMFN", 4);
  w.pod<std::uint32_t>(kCheckpointVersion);
  const auto entries = params.config.entries();
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [k, v] : entries) {
    w.str(k);
    w.str(v);
  }
  w.pod<std::uint64_t>(params.tensors.size());
  for (const auto& [name, t] : params.tensors) w.tensor(name, t);
  w.pod<std::uint64_t>(optimizer.size());
  for (const auto& [name, t] : optimizer) {
    if (name.rfind("adam/", 0) != 0) throw ValidationError("optimizer tensor '" + name + "' lacks the adam/ prefix");
    w.tensor(name, t);
  }
  if (!os) throw std::runtime_error("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint " + path);
  Reader r(is, path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SMFN", 4) != 0) r.fail("bad magic bytes");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported format version " + std::to_string(version));

  Checkpoint ck;
  const auto n_entries = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_entries; ++i) {
    const std::string key = r.str();
    const std::string value = r.str();
    if (!ck.params.config.set(key, value)) r.fail("unknown config key '" + key + "'");
  }
  ck.params.config.validate();

  // Expected layout from the config; payloads must match it exactly.
  const SmfnParams<float> expected = init_params<float>(ck.params.config, 0);
  const auto n_tensors = r.pod<std::uint64_t>();
  if (n_tensors != expected.tensors.size())
    r.fail("expected " + std::to_string(expected.tensors.size()) + " parameter tensors, found " +
           std::to_string(n_tensors));
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    auto [name, t] = r.tensor();
    auto it = expected.tensors.find(name);
    if (it == expected.tensors.end()) r.fail("unexpected parameter '" + name + "'");
    if (it->second.shape() != t.shape())
      r.fail("parameter '" + name + "' has shape " + shape_string(t.shape()) + ", expected " +
             shape_string(it->second.shape()));
    t.set_requires_grad(true);
    ck.params.tensors.emplace(std::move(name), std::move(t));
  }
  const auto n_opt = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_opt; ++i) {
    auto [name, t] = r.tensor();
    if (name.rfind("adam/", 0) != 0) r.fail("optimizer tensor '" + name + "' lacks the adam/ prefix");
    ck.optimizer.emplace(std::move(name), std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes after optimizer state");
  return ck;
}

}  // namespace smfn
