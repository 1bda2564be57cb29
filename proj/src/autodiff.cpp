#include "smfn/autodiff.hpp"

#include <algorithm>

namespace smfn {

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T>& tensor) {
  Node& n = nodes_.emplace_back();
  n.external = &tensor;
  n.needs_grad = tensor.requires_grad();
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn fn) {
  bool needs = false;
  for (std::size_t id : inputs) {
    if (id >= nodes_.size()) throw ValidationError("op input is not on this tape");
    needs = needs || nodes_[id].needs_grad;
  }
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.inputs = std::move(inputs);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(fn);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

template <typename T>
std::span<T> Tape<T>::grad_of(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad.assign(value(id).numel(), T(0));
  return n.grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (!owns(loss)) throw ValidationError("backward: loss tensor is not on this tape");
  if (loss.value().numel() != 1)
    throw ValidationError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  if (backward_done_) throw ValidationError("backward: tape was already replayed");
  backward_done_ = true;

  grad_of(loss.id())[0] = T(1);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, std::span<const T>(n.grad));
  }
  for (Node& n : nodes_) {
    if (n.external && n.needs_grad && !n.grad.empty()) {
      auto dst = n.external->grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Broadcasting helpers

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
    const std::size_t eb = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
    if (ea != eb && ea != 1 && eb != 1)
      throw ValidationError("incompatible shapes " + shape_string(a) + " and " + shape_string(b));
    out[i] = std::max(ea, eb);
  }
  return out;
}

namespace {

// Strides of `shape` laid against `out`, zero on broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& shape, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t k = shape.size(); k-- > 0;) {
    const std::size_t axis = k + rank - shape.size();
    strides[axis] = shape[k] == 1 ? 0 : stride;
    stride *= shape[k];
  }
  return strides;
}

template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                        Fn&& fn) {
  const std::size_t rank = out.size();
  const std::size_t total = shape_numel(out);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < total; ++i) {
    fn(i, ia, ib);
    for (std::size_t k = rank; k-- > 0;) {
      ++idx[k];
      ia += sa[k];
      ib += sb[k];
      if (idx[k] < out[k]) break;
      ia -= sa[k] * out[k];
      ib -= sb[k] * out[k];
      idx[k] = 0;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Ops

template <typename T>
Var<T> elementwise(const Var<T>& a, const Var<T>& b, ElementwiseKind kind) {
  Tape<T>& tape = *a.tape();
  if (b.tape() != &tape) throw ValidationError("elementwise: operands live on different tapes");
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);

  Tensor<T> out(out_shape);
  {
    const auto& av = a.value();
    const auto& bv = b.value();
    auto o = out.data();
    switch (kind) {
      case ElementwiseKind::Add:
        for_each_broadcast(out_shape, sa, sb, [&](auto i, auto ia, auto ib) { o[i] = av[ia] + bv[ib]; });
        break;
      case ElementwiseKind::Sub:
        for_each_broadcast(out_shape, sa, sb, [&](auto i, auto ia, auto ib) { o[i] = av[ia] - bv[ib]; });
        break;
      case ElementwiseKind::Mul:
        for_each_broadcast(out_shape, sa, sb, [&](auto i, auto ia, auto ib) { o[i] = av[ia] * bv[ib]; });
        break;
    }
  }

  const std::size_t ida = a.id(), idb = b.id();
  return tape.record(std::move(out), {ida, idb}, [=](Tape<T>& t, std::span<const T> g) {
    const bool ga = t.needs_grad(ida), gb = t.needs_grad(idb);
    std::span<T> da = ga ? t.grad_of(ida) : std::span<T>();
    std::span<T> db = gb ? t.grad_of(idb) : std::span<T>();
    const auto& av = t.value(ida);
    const auto& bv = t.value(idb);
    for_each_broadcast(out_shape, sa, sb, [&](auto i, auto ia, auto ib) {
      switch (kind) {
        case ElementwiseKind::Add:
          if (ga) da[ia] += g[i];
          if (gb) db[ib] += g[i];
          break;
        case ElementwiseKind::Sub:
          if (ga) da[ia] += g[i];
          if (gb) db[ib] -= g[i];
          break;
        case ElementwiseKind::Mul:
          if (ga) da[ia] += g[i] * bv[ib];
          if (gb) db[ib] += g[i] * av[ia];
          break;
      }
    });
  });
}

template <typename T>
Var<T> reduce(const Var<T>& a, ReduceKind kind, std::vector<std::size_t> axes) {
  const Shape& in_shape = a.shape();
  Shape out_shape = in_shape;
  if (axes.empty()) {
    out_shape = Shape{1};
  } else {
    for (std::size_t axis : axes) {
      if (axis >= in_shape.size())
        throw ValidationError("reduce: axis " + std::to_string(axis) + " out of range for " +
                              shape_string(in_shape));
      out_shape[axis] = 1;
    }
  }
  // Reduced axes are exactly the broadcast axes of the output against the input.
  const Shape full_out = axes.empty() ? Shape(in_shape.size(), 1) : out_shape;
  const auto so = broadcast_strides(full_out, in_shape);
  const std::vector<std::size_t> si = broadcast_strides(in_shape, in_shape);
  const std::size_t count = shape_numel(in_shape) / shape_numel(full_out);
  const T norm = kind == ReduceKind::Mean ? T(1) / static_cast<T>(count) : T(1);

  Tensor<T> out(out_shape);
  {
    const auto& av = a.value();
    auto o = out.data();
    for_each_broadcast(in_shape, si, so, [&](auto i, auto, auto io) { o[io] += av[i]; });
    for (auto& v : o) v *= norm;
  }
  const std::size_t ida = a.id();
  return a.tape()->record(std::move(out), {ida}, [=](Tape<T>& t, std::span<const T> g) {
    auto da = t.grad_of(ida);
    for_each_broadcast(in_shape, si, so, [&](auto i, auto, auto io) { da[i] += g[io] * norm; });
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  out.set_requires_grad(false);
  out.clear_grad();
  for (auto& v : out.data()) v *= factor;
  const std::size_t ida = a.id();
  return a.tape()->record(std::move(out), {ida}, [=](Tape<T>& t, std::span<const T> g) {
    auto da = t.grad_of(ida);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += factor * g[i];
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ValidationError("concat: no inputs");
  Tape<T>& tape = *parts.front().tape();
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ValidationError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw ValidationError("concat: inputs live on different tapes");
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t k = 0; ok && k < s.size(); ++k) ok = k == axis || s[k] == first[k];
    if (!ok) throw ValidationError("concat: incompatible shapes " + shape_string(first) + " and " + shape_string(s));
    out_shape[axis] += s[axis];
    ids.push_back(p.id());
    extents.push_back(s[axis]);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= first[k];
  for (std::size_t k = axis + 1; k < first.size(); ++k) inner *= first[k];
  const std::size_t out_row = out_shape[axis] * inner;

  Tensor<T> out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = parts[p].value();
    const std::size_t row = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.data().begin() + o * row, row, out.data().begin() + o * out_row + offset);
    offset += row;
  }
  return tape.record(std::move(out), ids, [=](Tape<T>& t, std::span<const T> g) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::size_t row = extents[p] * inner;
      if (t.needs_grad(ids[p])) {
        auto d = t.grad_of(ids[p]);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < row; ++i) d[o * row + i] += g[o * out_row + off + i];
      }
      off += row;
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  const std::size_t ida = a.id();
  return a.tape()->record(std::move(out), {ida}, [=](Tape<T>& t, std::span<const T> g) {
    auto da = t.grad_of(ida);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Finite differences

template <typename T>
Tensor<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T eps,
                                 std::span<const std::size_t> indices) {
  if (!(eps > T(0))) throw ValidationError("finite_difference_grad: eps must be positive");
  Tensor<T> probe = x;
  probe.set_requires_grad(false);
  probe.clear_grad();
  Tensor<T> out(x.shape());
  for (std::size_t k : indices) {
    const T orig = probe[k];
    probe[k] = orig + eps;
    const T plus = f(probe);
    probe[k] = orig - eps;
    const T minus = f(probe);
    probe[k] = orig;
    out[k] = (plus - minus) / (T(2) * eps);
  }
  return out;
}

template <typename T>
Tensor<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T eps) {
  std::vector<std::size_t> all(x.numel());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return finite_difference_grad<T>(f, x, eps, all);
}

#define SMFN_INSTANTIATE(T)                                                                              \
  template class Tape<T>;                                                                                \
  template Var<T> elementwise(const Var<T>&, const Var<T>&, ElementwiseKind);                            \
  template Var<T> reduce(const Var<T>&, ReduceKind, std::vector<std::size_t>);                           \
  template Var<T> scale(const Var<T>&, T);                                                               \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                                       \
  template Var<T> reshape(const Var<T>&, Shape);                                                         \
  template Tensor<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>&, const Tensor<T>&, \
                                            T, std::span<const std::size_t>);                            \
  template Tensor<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>&, const Tensor<T>&, T);

SMFN_INSTANTIATE(float)
SMFN_INSTANTIATE(double)

}  // namespace smfn
