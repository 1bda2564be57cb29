#include "smfn/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "text_util.hpp"

namespace fs = std::filesystem;

namespace smfn {

using detail::format_double;
using detail::parse_bool;
using detail::parse_double;
using detail::parse_size;

// ---------------------------------------------------------------------------
// Adam

template <typename T>
AdamState<T> AdamState<T>::init(const std::map<std::string, Tensor<T>>& params, double beta1, double beta2,
                                double eps) {
  AdamState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (const auto& [name, p] : params) {
    s.m.emplace(name, Tensor<T>(p.shape()));
    s.v.emplace(name, Tensor<T>(p.shape()));
  }
  return s;
}

template <typename T>
std::map<std::string, Tensor<float>> AdamState<T>::to_tensors() const {
  std::map<std::string, Tensor<float>> out;
  out.emplace("adam/t", Tensor<float>::scalar(static_cast<float>(t)));
  for (const auto& [name, x] : m) out.emplace("adam/m/" + name, x.template cast<float>());
  for (const auto& [name, x] : v) out.emplace("adam/v/" + name, x.template cast<float>());
  return out;
}

template <typename T>
AdamState<T> AdamState<T>::from_tensors(const std::map<std::string, Tensor<float>>& tensors,
                                        const std::map<std::string, Tensor<T>>& params, double beta1, double beta2,
                                        double eps) {
  AdamState s = init(params, beta1, beta2, eps);
  auto find = [&](const std::string& key, const Shape& shape) -> const Tensor<float>& {
    auto it = tensors.find(key);
    if (it == tensors.end()) throw ValidationError("optimizer state is missing '" + key + "'");
    if (it->second.shape() != shape)
      throw ValidationError("optimizer entry '" + key + "' has shape " + shape_string(it->second.shape()) +
                            ", expected " + shape_string(shape));
    return it->second;
  };
  s.t = static_cast<std::uint64_t>(find("adam/t", Shape{1})[0]);
  for (const auto& [name, p] : params) {
    s.m.at(name) = find("adam/m/" + name, p.shape()).template cast<T>();
    s.v.at(name) = find("adam/v/" + name, p.shape()).template cast<T>();
  }
  return s;
}

namespace {

template <typename T>
void adam_update(std::span<T> p, std::span<const T> g, std::span<T> m, std::span<T> v, const AdamState<T>& s,
                 double lr) {
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  const T b1 = static_cast<T>(s.beta1), b2 = static_cast<T>(s.beta2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T gi = g.empty() ? T(0) : g[i];
    m[i] = b1 * m[i] + (T(1) - b1) * gi;
    v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
    const double mhat = static_cast<double>(m[i]) / c1;
    const double vhat = static_cast<double>(v[i]) / c2;
    p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * mhat / (std::sqrt(vhat) + s.eps));
  }
}

template <typename T>
void check_state(const std::map<std::string, Tensor<T>>& params, const AdamState<T>& state, double lr) {
  if (!(lr > 0.0)) throw ValidationError("adam_step: learning rate must be positive");
  for (const auto& [name, p] : params) {
    auto m = state.m.find(name);
    auto v = state.v.find(name);
    if (m == state.m.end() || v == state.v.end())
      throw ValidationError("adam_step: no optimizer state for '" + name + "'");
    if (m->second.shape() != p.shape() || v->second.shape() != p.shape())
      throw ValidationError("adam_step: optimizer state of '" + name + "' does not match " + shape_string(p.shape()));
  }
}

}  // namespace

template <typename T>
void adam_step(std::map<std::string, Tensor<T>>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, double lr) {
  check_state(params, state, lr);
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ValidationError("adam_step: gradient for unknown parameter '" + name + "'");
    if (g.shape() != it->second.shape())
      throw ValidationError("adam_step: gradient of '" + name + "' has shape " + shape_string(g.shape()) +
                            ", parameter has " + shape_string(it->second.shape()));
  }
  ++state.t;
  for (auto& [name, p] : params) {
    auto g = grads.find(name);
    std::span<const T> gs;
    if (g != grads.end()) gs = g->second.data();
    adam_update<T>(p.data(), gs, state.m.at(name).data(), state.v.at(name).data(), state, lr);
  }
}

template <typename T>
void adam_step(std::map<std::string, Tensor<T>>& params, AdamState<T>& state, double lr) {
  check_state(params, state, lr);
  ++state.t;
  for (auto& [name, p] : params) {
    std::span<const T> gs;
    if (p.has_grad()) gs = std::as_const(p).grad();
    adam_update<T>(p.data(), gs, state.m.at(name).data(), state.v.at(name).data(), state, lr);
  }
}

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  model.validate();
  auto positive = [](const char* key, double v) {
    if (!(v > 0.0)) throw ValidationError(std::string("train config: ") + key + " must be positive");
  };
  positive("initial_lr", initial_lr);
  positive("lr_halving_period_epochs", static_cast<double>(lr_halving_period_epochs));
  positive("epochs", static_cast<double>(epochs));
  positive("steps_per_epoch", static_cast<double>(steps_per_epoch));
  positive("batch_size", static_cast<double>(batch_size));
  positive("patch", static_cast<double>(patch));
  positive("adam_eps", adam_eps);
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("train config: beta1 and beta2 must lie in [0, 1)");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  auto out = model.entries();
  const std::vector<std::pair<std::string, std::string>> own = {
      {"initial_lr", format_double(initial_lr)},
      {"lr_halving_period_epochs", std::to_string(lr_halving_period_epochs)},
      {"epochs", std::to_string(epochs)},
      {"steps_per_epoch", std::to_string(steps_per_epoch)},
      {"max_steps", std::to_string(max_steps)},
      {"batch_size", std::to_string(batch_size)},
      {"patch", std::to_string(patch)},
      {"seed", std::to_string(seed)},
      {"checkpoint_every", std::to_string(checkpoint_every)},
      {"patch_latitude", b(patch_latitude)},
      {"augment", b(augment)},
      {"full_frame", b(full_frame)},
      {"fixed_batch", b(fixed_batch)},
      {"beta1", format_double(beta1)},
      {"beta2", format_double(beta2)},
      {"adam_eps", format_double(adam_eps)},
  };
  out.insert(out.end(), own.begin(), own.end());
  return out;
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
  if (model.set(key, value)) return true;
  if (key == "initial_lr") initial_lr = parse_double(key, value);
  else if (key == "lr_halving_period_epochs") lr_halving_period_epochs = parse_size(key, value);
  else if (key == "epochs") epochs = parse_size(key, value);
  else if (key == "steps_per_epoch") steps_per_epoch = parse_size(key, value);
  else if (key == "max_steps") max_steps = parse_size(key, value);
  else if (key == "batch_size") batch_size = parse_size(key, value);
  else if (key == "patch") patch = parse_size(key, value);
  else if (key == "seed") seed = parse_size(key, value);
  else if (key == "checkpoint_every") checkpoint_every = parse_size(key, value);
  else if (key == "patch_latitude") patch_latitude = parse_bool(key, value);
  else if (key == "augment") augment = parse_bool(key, value);
  else if (key == "full_frame") full_frame = parse_bool(key, value);
  else if (key == "fixed_batch") fixed_batch = parse_bool(key, value);
  else if (key == "beta1") beta1 = parse_double(key, value);
  else if (key == "beta2") beta2 = parse_double(key, value);
  else if (key == "adam_eps") adam_eps = parse_double(key, value);
  else return false;
  return true;
}

std::string TrainConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!cfg.set(key, value)) throw ValidationError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.initial_lr * std::pow(0.5, static_cast<double>(epoch / cfg.lr_halving_period_epochs));
}

// ---------------------------------------------------------------------------
// Training

TrainBatch assemble_batch(const std::vector<PatchSample>& samples, bool patch_latitude) {
  if (samples.empty()) throw ValidationError("assemble_batch: empty batch");
  const PatchSample& first = samples.front();
  const std::size_t B = samples.size(), F = first.lr.dim(0);
  const std::size_t h = first.lr.dim(2), w = first.lr.dim(3);
  const std::size_t H = first.hr.dim(2), W = first.hr.dim(3);
  TrainBatch batch;
  batch.frames.assign(F, Tensor<float>(Shape{B, 1, h, w}));
  batch.hr = Tensor<float>(Shape{B, 1, H, W});
  batch.lr_target = Tensor<float>(Shape{B, 1, h, w});
  batch.hr_weights = Tensor<float>(Shape{B, 1, H, 1});
  batch.lr_weights = Tensor<float>(Shape{B, 1, h, 1});
  for (std::size_t b = 0; b < B; ++b) {
    const PatchSample& s = samples[b];
    if (s.lr.shape() != first.lr.shape() || s.hr.shape() != first.hr.shape())
      throw ValidationError("assemble_batch: samples differ in shape");
    const std::size_t plane = h * w;
    for (std::size_t f = 0; f < F; ++f)
      std::copy_n(s.lr.data().begin() + f * plane, plane, batch.frames[f].data().begin() + b * plane);
    std::copy_n(s.lr.data().begin() + (F / 2) * plane, plane, batch.lr_target.data().begin() + b * plane);
    std::copy_n(s.hr.data().begin(), H * W, batch.hr.data().begin() + b * H * W);
    const auto hw = patch_row_weights(s, patch_latitude);
    const auto lw = patch_lr_row_weights(s, patch_latitude);
    for (std::size_t r = 0; r < H; ++r) batch.hr_weights.at(b, 0, r, 0) = static_cast<float>(hw[r]);
    for (std::size_t r = 0; r < h; ++r) batch.lr_weights.at(b, 0, r, 0) = static_cast<float>(lw[r]);
  }
  return batch;
}

StepLog batch_loss(SmfnParams<float>& params, const TrainBatch& batch, bool backward) {
  Tape<float> tape;
  SmfnGraph<float> graph(tape, params);
  std::vector<Var<float>> frames;
  for (const auto& f : batch.frames) frames.push_back(tape.constant(f));
  const SmfnOutputs<float> out = graph.forward(frames);
  Var<float> dual;
  if (params.config.use_dual) dual = graph.dual_forward(out.sr);
  const LossTerms<float> terms =
      total_loss(out.sr, batch.hr, batch.hr_weights, dual.valid() ? &dual : nullptr, batch.lr_target,
                 batch.lr_weights, static_cast<float>(params.config.lambda_dual));
  StepLog log;
  log.loss_primary = terms.primary.value()[0];
  log.loss_dual = terms.dual.valid() ? terms.dual.value()[0] : 0.0;
  log.loss_total = terms.total.value()[0];
  if (backward && std::isfinite(log.loss_total)) {
    params.zero_grad();
    tape.backward(terms.total);
  }
  return log;
}

namespace {

std::string log_line(const StepLog& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g,%.9g,%.9g,%.9g", s.step, s.epoch, s.lr, s.loss_primary, s.loss_dual,
                s.loss_total);
  return buf;
}

// Write-then-rename.
void save_atomically(const fs::path& path, const SmfnParams<float>& params, const AdamState<float>& opt) {
  const fs::path tmp = path.string() + ".tmp";
  save_checkpoint(tmp.string(), params, opt.to_tensors());
  fs::rename(tmp, path);
}

}  // namespace

std::vector<PatchSample> draw_training_batch(const TrainConfig& cfg, const Dataset& data, std::mt19937_64& rng) {
  SamplerOptions opt;
  opt.batch_size = cfg.batch_size;
  opt.patch = cfg.patch;
  opt.temporal_radius = cfg.model.temporal_radius;
  opt.augment = cfg.augment;
  opt.split = "train";
  if (!cfg.full_frame) return sample_patch_batch(data, opt, rng);

  const auto clips = data.clips_in_split("train");
  if (clips.empty()) throw ValidationError("no clips in split 'train'");
  auto uniform = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  std::vector<PatchSample> batch;
  for (std::size_t i = 0; i < cfg.batch_size; ++i) {
    const std::size_t clip = clips[uniform(clips.size())];
    const auto& c = data.manifest.clips[clip];
    const auto& ref = data.manifest.clips[clips.front()];
    if (c.lr_width != ref.lr_width || c.lr_height != ref.lr_height)
      throw ValidationError("full-frame training needs equal frame extents across train clips");
    PatchSample s = extract_patch(data, clip, uniform(c.frame_count), 0, 0, c.lr_height, c.lr_width,
                                  cfg.model.temporal_radius);
    if (cfg.augment) apply_augmentation(s, Augmentation{uniform(2) == 1, uniform(2) == 1});
    batch.push_back(std::move(s));
  }
  return batch;
}

TrainResult train(const TrainConfig& cfg, const Dataset& data, const std::string& out_dir) {
  cfg.validate();
  if (data.clips_in_split("train").empty()) throw ValidationError("manifest has no train clips");
  for (std::size_t ci : data.clips_in_split("train"))
    if (data.manifest.clips[ci].scale != cfg.model.scale)
      throw ValidationError("clip " + data.manifest.clips[ci].name + " has scale " +
                            std::to_string(data.manifest.clips[ci].scale) + ", config has " +
                            std::to_string(cfg.model.scale));

  TrainResult result{init_params<float>(cfg.model, cfg.seed), {}, {}};
  result.optimizer = AdamState<float>::init(result.params.tensors, cfg.beta1, cfg.beta2, cfg.adam_eps);

  std::ofstream log_file;
  const fs::path out(out_dir);
  if (!out_dir.empty()) {
    fs::create_directories(out);
    std::ofstream(out / "config.txt", std::ios::trunc) << cfg.serialize();
    log_file.open(out / "train_log.csv", std::ios::trunc);
    if (!log_file) throw std::runtime_error("cannot write " + (out / "train_log.csv").string());
    log_file << kTrainLogHeader << '\n';
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<PatchSample> fixed;
  if (cfg.fixed_batch) fixed = draw_training_batch(cfg, data, rng);

  const std::size_t steps = cfg.total_steps();
  for (std::size_t step = 0; step < steps; ++step) {
    const std::size_t epoch = step / cfg.steps_per_epoch;
    const double lr = lr_schedule(epoch, cfg);
    const TrainBatch batch = assemble_batch(cfg.fixed_batch ? fixed : draw_training_batch(cfg, data, rng), cfg.patch_latitude);
    StepLog s = batch_loss(result.params, batch, true);
    s.step = step;
    s.epoch = epoch;
    s.lr = lr;
    if (log_file) log_file << log_line(s) << '\n';
    if (!std::isfinite(s.loss_total)) {
      if (log_file) log_file.flush();
      throw TrainingAborted(step, "non-finite loss at step " + std::to_string(step));
    }
    adam_step(result.params.tensors, result.optimizer, lr);
    result.log.push_back(s);
    if (!out_dir.empty() && cfg.checkpoint_every && (step + 1) % cfg.checkpoint_every == 0)
      save_atomically(out / "checkpoint.bin", result.params, result.optimizer);
  }
  if (!out_dir.empty()) save_atomically(out / "final.bin", result.params, result.optimizer);
  return result;
}

#define SMFN_INSTANTIATE(T)                                                                                   \
  template struct AdamState<T>;                                                                               \
  template void adam_step(std::map<std::string, Tensor<T>>&, const std::map<std::string, Tensor<T>>&,        \
                          AdamState<T>&, double);                                                             \
  template void adam_step(std::map<std::string, Tensor<T>>&, AdamState<T>&, double);

SMFN_INSTANTIATE(float)
SMFN_INSTANTIATE(double)

}  // namespace smfn
