#include "smfn/model.hpp"

#include "text_util.hpp"

#include <charconv>
#include <cmath>
#include <random>

namespace smfn {

using detail::format_double;
using detail::parse_bool;
using detail::parse_double;
using detail::parse_size;

namespace {

constexpr ConvGeometry same3{1, 1};
constexpr ConvGeometry same1{1, 0};

std::string module_of(const std::string& name) { return name.substr(0, name.find('.')); }

}  // namespace

// ---------------------------------------------------------------------------
// SmfnConfig

void SmfnConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("invalid model config: " + msg); };
  if (scale < 1) fail("scale must be >= 1");
  if (channels < 1 || num_rdb < 1 || rdb_layers < 1 || rdb_growth < 1 || align_layers < 1)
    fail("widths and depths must be >= 1");
  if (single_frame_depth < 3) fail("single_frame_depth must be >= 3");
  if (input_channels != 1) fail("only the Y channel (input_channels = 1) is supported");
  if (!(lambda_dual >= 0.0)) fail("lambda_dual must be >= 0");
  if (use_attention && (ca_reduction < 1 || channels % ca_reduction != 0))
    fail("channels (" + std::to_string(channels) + ") must be divisible by ca_reduction (" +
         std::to_string(ca_reduction) + ")");
  if (use_dual && scale != 2 && scale != 4) fail("the dual network supports scale 2 or 4");
}

std::vector<std::pair<std::string, std::string>> SmfnConfig::entries() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"scale", std::to_string(scale)},
      {"temporal_radius", std::to_string(temporal_radius)},
      {"channels", std::to_string(channels)},
      {"num_residual_blocks", std::to_string(num_residual_blocks)},
      {"num_rdb", std::to_string(num_rdb)},
      {"rdb_layers", std::to_string(rdb_layers)},
      {"rdb_growth", std::to_string(rdb_growth)},
      {"single_frame_depth", std::to_string(single_frame_depth)},
      {"lambda_dual", format_double(lambda_dual)},
      {"input_channels", std::to_string(input_channels)},
      {"ca_reduction", std::to_string(ca_reduction)},
      {"align_layers", std::to_string(align_layers)},
      {"use_attention", b(use_attention)},
      {"use_alignment", b(use_alignment)},
      {"use_dual", b(use_dual)},
      {"use_fusion", b(use_fusion)},
      {"use_single_frame", b(use_single_frame)},
  };
}

bool SmfnConfig::set(const std::string& key, const std::string& value) {
  if (key == "scale") scale = parse_size(key, value);
  else if (key == "temporal_radius") temporal_radius = parse_size(key, value);
  else if (key == "channels") channels = parse_size(key, value);
  else if (key == "num_residual_blocks") num_residual_blocks = parse_size(key, value);
  else if (key == "num_rdb") num_rdb = parse_size(key, value);
  else if (key == "rdb_layers") rdb_layers = parse_size(key, value);
  else if (key == "rdb_growth") rdb_growth = parse_size(key, value);
  else if (key == "single_frame_depth") single_frame_depth = parse_size(key, value);
  else if (key == "lambda_dual") lambda_dual = parse_double(key, value);
  else if (key == "input_channels") input_channels = parse_size(key, value);
  else if (key == "ca_reduction") ca_reduction = parse_size(key, value);
  else if (key == "align_layers") align_layers = parse_size(key, value);
  else if (key == "use_attention") use_attention = parse_bool(key, value);
  else if (key == "use_alignment") use_alignment = parse_bool(key, value);
  else if (key == "use_dual") use_dual = parse_bool(key, value);
  else if (key == "use_fusion") use_fusion = parse_bool(key, value);
  else if (key == "use_single_frame") use_single_frame = parse_bool(key, value);
  else return false;
  return true;
}

SmfnConfig SmfnConfig::tiny() {
  SmfnConfig c;
  c.channels = 8;
  c.num_rdb = 1;
  c.rdb_growth = 8;
  c.single_frame_depth = 5;
  c.ca_reduction = 4;
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
Tensor<T>& SmfnParams<T>::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
const Tensor<T>& SmfnParams<T>::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
void SmfnParams<T>::zero_grad() {
  for (auto& [_, t] : tensors) t.zero_grad();
}

namespace {

// Conv layer specification collected before drawing random values so the
// draw order is the (sorted) parameter-name order.
struct LayerSpec {
  std::size_t out, in, k;
  bool zero_kernel;
};

std::map<std::string, LayerSpec> layer_specs(const SmfnConfig& c) {
  std::map<std::string, LayerSpec> L;
  const std::size_t C = c.channels, s = c.scale, F = c.num_frames();
  auto name = [](const std::string& base, std::size_t i) { return base + std::to_string(i); };

  const bool zero_branch_outputs = !c.use_fusion;
  if (c.use_single_frame) {
    const std::size_t d = c.single_frame_depth;
    L[name("single.conv", 0)] = {C, 1, 3, false};
    for (std::size_t i = 1; i + 2 < d; ++i) L[name("single.conv", i)] = {C, C, 3, false};
    L[name("single.conv", d - 2)] = {s * s, C, 3, false};
    L[name("single.conv", d - 1)] = {1, 1, 3, zero_branch_outputs};
  }

  L["extract.head"] = {C, 1, 3, false};
  for (std::size_t b = 0; b < c.num_residual_blocks; ++b) {
    L[name("extract.rb", b) + ".conv1"] = {C, C, 3, false};
    L[name("extract.rb", b) + ".conv2"] = {C, C, 3, false};
  }

  if (c.use_alignment) {
    const std::size_t K = 9;
    for (std::size_t l = 0; l < c.align_layers; ++l) {
      L[name("align.offset", l)] = {2 * K, 2 * C, 3, true};
      L[name("align.deform", l)] = {C, C, 3, false};
    }
  }

  L["recon.temporal_fusion"] = {C, F * C, 1, false};
  for (std::size_t r = 0; r < c.num_rdb; ++r) {
    for (std::size_t i = 0; i < c.rdb_layers; ++i)
      L[name("recon.rdb", r) + name(".conv", i)] = {c.rdb_growth, C + i * c.rdb_growth, 3, false};
    L[name("recon.rdb", r) + ".transition"] = {C, C + c.rdb_layers * c.rdb_growth, 1, false};
  }
  if (c.use_attention) {
    L["attention.ca.squeeze"] = {C / c.ca_reduction, C, 1, false};
    L["attention.ca.excite"] = {C, C / c.ca_reduction, 1, false};
    L["attention.sa.conv"] = {1, 2, 7, false};
  }
  L["recon.upscale"] = {s * s * C, C, 3, false};
  L["recon.output"] = {1, C, 3, zero_branch_outputs};

  if (c.use_fusion) {
    L["fusion.conv0"] = {C, c.use_single_frame ? 2u : 1u, 3, false};
    L["fusion.conv1"] = {C, C, 3, false};
    L["fusion.conv2"] = {1, C, 3, true};
  }
  if (c.use_dual) {
    L["dual.conv0"] = {C, 1, 3, false};
    L["dual.conv1"] = {1, C, 3, false};
  }
  return L;
}

}  // namespace

template <typename T>
SmfnParams<T> init_params(const SmfnConfig& config, std::uint64_t seed) {
  config.validate();
  SmfnParams<T> p;
  p.config = config;
  for (const auto& [name, spec] : layer_specs(config)) {
    // Independent stream per layer name.
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : name) h = (h ^ ch) * 1099511628211ull;
    std::mt19937_64 rng(seed ^ h);
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor<T> kernel(Shape{spec.out, spec.in, spec.k, spec.k});
    const double stddev = std::sqrt(2.0 / static_cast<double>(spec.in * spec.k * spec.k));
    if (!spec.zero_kernel)
      for (auto& v : kernel.data()) v = static_cast<T>(normal(rng) * stddev);
    kernel.set_requires_grad(true);
    Tensor<T> bias(Shape{spec.out});
    bias.set_requires_grad(true);
    p.tensors.emplace(name + ".weight", std::move(kernel));
    p.tensors.emplace(name + ".bias", std::move(bias));
  }
  return p;
}

template <typename T>
std::map<std::string, std::size_t> param_count(const SmfnParams<T>& params) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& [name, t] : params.tensors) {
    counts[module_of(name)] += t.numel();
    total += t.numel();
  }
  counts["total"] = total;
  return counts;
}

template <typename T>
void zero_residual_outputs(SmfnParams<T>& params) {
  const auto& c = params.config;
  std::vector<std::string> names{"recon.output"};
  if (c.use_single_frame) names.push_back("single.conv" + std::to_string(c.single_frame_depth - 1));
  if (c.use_fusion) names.push_back("fusion.conv2");
  for (const auto& n : names) {
    params.at(n + ".weight").fill(T(0));
    params.at(n + ".bias").fill(T(0));
  }
}

template <typename T>
std::size_t single_frame_conv_count(const SmfnParams<T>& params) {
  std::size_t n = 0;
  for (const auto& [name, _] : params.tensors)
    if (name.rfind("single.conv", 0) == 0 && name.ends_with(".weight")) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// Graph

template <typename T>
SmfnGraph<T>::SmfnGraph(Tape<T>& tape, SmfnParams<T>& params) : tape_(tape), params_(params) {
  params_.config.validate();
}

template <typename T>
Var<T> SmfnGraph<T>::param(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var<T> v = tape_.leaf(params_.at(name));
  bound_.emplace(name, v);
  return v;
}

template <typename T>
BoundConv<T> SmfnGraph<T>::conv(const std::string& prefix, ConvGeometry geo) {
  return {param(prefix + ".weight"), param(prefix + ".bias"), geo};
}

namespace {

void require_image(const Shape& s, std::size_t channels, const char* op) {
  if (s.size() != 4 || s[1] != channels)
    throw ValidationError(std::string(op) + ": expected (B, " + std::to_string(channels) + ", H, W), got " +
                          shape_string(s));
}

}  // namespace

template <typename T>
Var<T> SmfnGraph<T>::single_frame_branch(const Var<T>& target_lr) {
  const auto& c = config();
  if (!c.use_single_frame) throw ValidationError("single_frame_branch: branch disabled in config");
  require_image(target_lr.shape(), 1, "single_frame_branch");
  const std::size_t d = c.single_frame_depth;
  Var<T> x = target_lr;
  for (std::size_t i = 0; i + 2 < d; ++i) x = relu(conv2d(x, conv("single.conv" + std::to_string(i), same3)));
  x = conv2d(x, conv("single.conv" + std::to_string(d - 2), same3));
  x = pixel_shuffle(x, c.scale);
  return conv2d(x, conv("single.conv" + std::to_string(d - 1), same3));
}

template <typename T>
std::vector<Var<T>> SmfnGraph<T>::extract_features(const std::vector<Var<T>>& frames) {
  std::vector<Var<T>> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    require_image(f.shape(), 1, "extract_features");
    Var<T> x = conv2d(f, conv("extract.head", same3));
    for (std::size_t b = 0; b < config().num_residual_blocks; ++b) {
      const std::string base = "extract.rb" + std::to_string(b);
      x = residual_block(x, ResidualBlockParams<T>{conv(base + ".conv1", same3), conv(base + ".conv2", same3)});
    }
    out.push_back(x);
  }
  return out;
}

template <typename T>
Var<T> SmfnGraph<T>::offset_field(const Var<T>& target, const Var<T>& neighbour, std::size_t layer) {
  return conv2d(concat<T>({target, neighbour}, 1), conv("align.offset" + std::to_string(layer), same3));
}

template <typename T>
Var<T> SmfnGraph<T>::align_features(const Var<T>& target, const Var<T>& neighbour) {
  if (!config().use_alignment) throw ValidationError("align_features: alignment disabled in config");
  if (target.shape() != neighbour.shape())
    throw ValidationError("align_features: target " + shape_string(target.shape()) + " and neighbour " +
                          shape_string(neighbour.shape()) + " differ");
  require_image(target.shape(), config().channels, "align_features");
  Var<T> x = neighbour;
  for (std::size_t l = 0; l < config().align_layers; ++l) {
    Var<T> offsets = offset_field(target, x, l);
    x = deformable_conv2d(x, offsets, conv("align.deform" + std::to_string(l), same3));
  }
  return x;
}

template <typename T>
Var<T> SmfnGraph<T>::reconstruct(const std::vector<Var<T>>& aligned) {
  const auto& c = config();
  if (aligned.size() != c.num_frames())
    throw ValidationError("reconstruct: expected " + std::to_string(c.num_frames()) + " feature maps, got " +
                          std::to_string(aligned.size()));
  for (const auto& a : aligned) {
    require_image(a.shape(), c.channels, "reconstruct");
    if (a.shape() != aligned.front().shape()) throw ValidationError("reconstruct: feature maps differ in shape");
  }
  Var<T> x = conv2d(concat(aligned, 1), conv("recon.temporal_fusion", same1));
  for (std::size_t r = 0; r < c.num_rdb; ++r) {
    const std::string base = "recon.rdb" + std::to_string(r);
    DenseBlockParams<T> p;
    for (std::size_t i = 0; i < c.rdb_layers; ++i) p.layers.push_back(conv(base + ".conv" + std::to_string(i), same3));
    p.transition = conv(base + ".transition", same1);
    x = residual_dense_block(x, p);
  }
  if (c.use_attention) {
    x = mixed_attention(x, ChannelAttentionParams<T>{conv("attention.ca.squeeze", same1), conv("attention.ca.excite", same1)},
                        SpatialAttentionParams<T>{conv("attention.sa.conv", ConvGeometry{1, 3})}, c.ca_reduction);
  }
  x = pixel_shuffle(conv2d(x, conv("recon.upscale", same3)), c.scale);
  return conv2d(x, conv("recon.output", same3));
}

template <typename T>
Var<T> SmfnGraph<T>::fuse(const Var<T>& residual, const Var<T>* single) {
  require_image(residual.shape(), 1, "fuse");
  if (single && single->shape() != residual.shape())
    throw ValidationError("fuse: residual " + shape_string(residual.shape()) + " and single-frame " +
                          shape_string(single->shape()) + " images differ");
  if (!config().use_fusion) return single ? add(residual, *single) : residual;
  Var<T> x = single ? concat<T>({residual, *single}, 1) : residual;
  x = relu(conv2d(x, conv("fusion.conv0", same3)));
  x = relu(conv2d(x, conv("fusion.conv1", same3)));
  return conv2d(x, conv("fusion.conv2", same3));
}

template <typename T>
SmfnOutputs<T> SmfnGraph<T>::forward(const std::vector<Var<T>>& frames) {
  const auto& c = config();
  if (frames.size() != c.num_frames())
    throw ValidationError("smfn_forward: expected " + std::to_string(c.num_frames()) + " frames, got " +
                          std::to_string(frames.size()));
  for (const auto& f : frames) {
    require_image(f.shape(), 1, "smfn_forward");
    if (f.shape() != frames.front().shape()) throw ValidationError("smfn_forward: frames differ in shape");
  }
  const std::size_t t = c.temporal_radius;
  const Var<T>& target = frames[t];
  const std::size_t H = target.dim(2) * c.scale, W = target.dim(3) * c.scale;

  SmfnOutputs<T> out;
  auto features = extract_features(frames);
  std::vector<Var<T>> aligned = features;
  if (c.use_alignment)
    for (std::size_t i = 0; i < features.size(); ++i)
      if (i != t) aligned[i] = align_features(features[t], features[i]);
  out.residual = reconstruct(aligned);
  if (c.use_single_frame) out.single = single_frame_branch(target);
  out.fused = fuse(out.residual, out.single.valid() ? &out.single : nullptr);
  out.upsampled = bilinear_resize(target, H, W);
  out.sr = add(out.fused, out.upsampled);
  return out;
}

template <typename T>
Var<T> SmfnGraph<T>::dual_forward(const Var<T>& sr) {
  const auto& c = config();
  if (!c.use_dual) throw ValidationError("dual_forward: dual network disabled in config");
  require_image(sr.shape(), 1, "dual_forward");
  const std::size_t H = sr.dim(2), W = sr.dim(3);
  if (H % c.scale != 0 || W % c.scale != 0)
    throw ValidationError("dual_forward: HR extents " + std::to_string(W) + "x" + std::to_string(H) +
                          " are not divisible by the scale " + std::to_string(c.scale));
  const ConvGeometry down{2, 1};
  Var<T> x = relu(conv2d(sr, conv("dual.conv0", down)));
  return conv2d(x, conv("dual.conv1", c.scale == 4 ? down : same3));
}

#define SMFN_INSTANTIATE(T)                                                              \
  template struct SmfnParams<T>;                                                         \
  template SmfnParams<T> init_params(const SmfnConfig&, std::uint64_t);                  \
  template std::map<std::string, std::size_t> param_count(const SmfnParams<T>&);         \
  template void zero_residual_outputs(SmfnParams<T>&);                                   \
  template std::size_t single_frame_conv_count(const SmfnParams<T>&);                    \
  template class SmfnGraph<T>;

SMFN_INSTANTIATE(float)
SMFN_INSTANTIATE(double)

}  // namespace smfn
