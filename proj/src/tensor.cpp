#include "nesla/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace nesla {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void validate_shape(const Shape& shape, const char* op) {
  if (shape.empty()) {
    throw ShapeError(std::string(op) + ": shape must have at least one extent");
  }
  for (auto e : shape) {
    if (e == 0) {
      throw ShapeError(std::string(op) + ": zero extent in shape " +
                       shape_to_string(shape));
    }
  }
}

void check_finite(const std::vector<double>& data, const char* op) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
  }
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a,
                                 const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_to_string(a.shape()) + " and " +
                   shape_to_string(b.shape()));
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (!x.defined()) {
    throw ShapeError(std::string(op) + ": undefined tensor");
  }
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " +
                     shape_to_string(x.shape()));
  }
}

// Builds the output node. The backward rule is kept only when grad mode is
// on and some parent needs a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<NodePtr> parents,
                   std::function<void(const detail::Node&)> backward) {
  check_finite(data, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  const bool needs = g_grad_enabled &&
                     std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

bool wants(const NodePtr& p) { return p->requires_grad; }

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  validate_shape(shape, "tensor");
  if (product(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_to_string(shape) + " needs " +
                     std::to_string(product(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  check_finite(values, "tensor");
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  validate_shape(shape, "tensor");
  const auto n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw ShapeError("tensor: undefined");
  return node_->shape;
}

std::size_t Tensor::extent(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) +
                     " out of range for " + shape_to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape().empty() ? 0 : node_->data.size(); }

std::span<const double> Tensor::values() const {
  shape();
  return node_->data;
}

std::span<double> Tensor::mutable_values() {
  shape();
  return node_->data;
}

double Tensor::at(std::size_t i) const { return values()[i]; }

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw ShapeError("tensor: at(row, col) needs rank 2");
  return node_->data[row * node_->shape[1] + col];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("tensor: item() on shape " + shape_to_string(shape()));
  }
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  shape();
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  shape();
  return node_->grad;
}

void Tensor::zero_grad() {
  shape();
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  return Tensor(shape(), node_->data, false);
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward: needs a single-element tensor, got " +
                     shape_to_string(shape()));
  }
  if (!node_->requires_grad) {
    throw std::logic_error("backward: tensor does not require grad");
  }

  // Post-order DFS gives parents before children; walk it in reverse.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    const bool leaf = !n->backward;
    if (n->grad.size() != n->data.size()) {
      n->grad.assign(n->data.size(), 0.0);
    } else if (!leaf) {
      std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
  }
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_mode_enabled() { return g_grad_enabled; }

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch("add", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a.node(), b.node()},
                     [](const detail::Node& self) {
                       for (const auto& p : self.parents) {
                         if (!wants(p)) continue;
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           p->grad[i] += self.grad[i];
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch("sub", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result("sub", a.shape(), std::move(out), {a.node(), b.node()},
                     [](const detail::Node& self) {
                       const auto& pa = self.parents[0];
                       const auto& pb = self.parents[1];
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         if (wants(pa)) pa->grad[i] += self.grad[i];
                         if (wants(pb)) pb->grad[i] -= self.grad[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch("mul", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a.node(), b.node()},
                     [](const detail::Node& self) {
                       const auto& pa = self.parents[0];
                       const auto& pb = self.parents[1];
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         if (wants(pa)) pa->grad[i] += self.grad[i] * pb->data[i];
                         if (wants(pb)) pb->grad[i] += self.grad[i] * pa->data[i];
                       }
                     });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= factor;
  return make_result("scale", x.shape(), std::move(out), {x.node()},
                     [factor](const detail::Node& self) {
                       auto& p = self.parents[0];
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         p->grad[i] += factor * self.grad[i];
                     });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) shape_mismatch("scale_by", x, s);
  const double f = s.item();
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= f;
  return make_result("scale_by", x.shape(), std::move(out), {x.node(), s.node()},
                     [](const detail::Node& self) {
                       const auto& px = self.parents[0];
                       const auto& ps = self.parents[1];
                       const double f = ps->data[0];
                       double gs = 0.0;
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         if (wants(px)) px->grad[i] += f * self.grad[i];
                         gs += self.grad[i] * px->data[i];
                       }
                       if (wants(ps)) ps->grad[0] += gs;
                     });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_result("sigmoid", x.shape(), std::move(out), {x.node()},
                     [](const detail::Node& self) {
                       auto& p = self.parents[0];
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         const double y = self.data[i];
                         p->grad[i] += self.grad[i] * y * (1.0 - y);
                       }
                     });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0 ? xv[i] : 0.0;
  return make_result("relu", x.shape(), std::move(out), {x.node()},
                     [](const detail::Node& self) {
                       auto& p = self.parents[0];
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         if (p->data[i] > 0) p->grad[i] += self.grad[i];
                     });
}

Tensor log1p(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log1p(xv[i]);
  return make_result("log1p", x.shape(), std::move(out), {x.node()},
                     [](const detail::Node& self) {
                       auto& p = self.parents[0];
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         p->grad[i] += self.grad[i] / (1.0 + p->data[i]);
                     });
}

// ---- reductions and reshaping ----------------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_result("sum", {1}, {acc}, {x.node()},
                     [](const detail::Node& self) {
                       auto& p = self.parents[0];
                       for (auto& g : p->grad) g += self.grad[0];
                     });
}

Tensor pick(const Tensor& x, std::size_t i) {
  if (i >= x.numel()) {
    throw ShapeError("pick: index " + std::to_string(i) + " out of range for " +
                     shape_to_string(x.shape()));
  }
  return make_result("pick", {1}, {x.at(i)}, {x.node()},
                     [i](const detail::Node& self) {
                       self.parents[0]->grad[i] += self.grad[0];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  validate_shape(shape, "reshape");
  if (product(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(x.shape()) +
                     " as " + shape_to_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {x.node()},
                     [](const detail::Node& self) {
                       auto& p = self.parents[0];
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         p->grad[i] += self.grad[i];
                     });
}

Tensor global_avg_pool_time(const Tensor& x) {
  require_rank("global_avg_pool_time", x, 2);
  const auto C = x.extent(0);
  const auto T = x.extent(1);
  std::vector<double> out(C, 0.0);
  auto xv = x.values();
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) acc += xv[c * T + t];
    out[c] = acc / static_cast<double>(T);
  }
  return make_result("global_avg_pool_time", {C}, std::move(out), {x.node()},
                     [C, T](const detail::Node& self) {
                       auto& p = self.parents[0];
                       const double inv = 1.0 / static_cast<double>(T);
                       for (std::size_t c = 0; c < C; ++c)
                         for (std::size_t t = 0; t < T; ++t)
                           p->grad[c * T + t] += self.grad[c] * inv;
                     });
}

Tensor sum_rows(const Tensor& x) {
  require_rank("sum_rows", x, 2);
  const auto C = x.extent(0);
  const auto T = x.extent(1);
  std::vector<double> out(T, 0.0);
  auto xv = x.values();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t) out[t] += xv[c * T + t];
  return make_result("sum_rows", {1, T}, std::move(out), {x.node()},
                     [C, T](const detail::Node& self) {
                       auto& p = self.parents[0];
                       for (std::size_t c = 0; c < C; ++c)
                         for (std::size_t t = 0; t < T; ++t)
                           p->grad[c * T + t] += self.grad[t];
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank("slice_rows", x, 2);
  if (begin >= end || end > x.extent(0)) {
    throw ShapeError("slice_rows: bad range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") for " + shape_to_string(x.shape()));
  }
  const auto T = x.extent(1);
  auto xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * T),
                          xv.begin() + static_cast<std::ptrdiff_t>(end * T));
  return make_result("slice_rows", {end - begin, T}, std::move(out), {x.node()},
                     [begin, T](const detail::Node& self) {
                       auto& p = self.parents[0];
                       const auto offset = begin * T;
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         p->grad[offset + i] += self.grad[i];
                     });
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const auto T = parts.front().extent(1);
  std::size_t rows = 0;
  std::vector<NodePtr> parents;
  std::vector<std::size_t> offsets;
  for (const auto& part : parts) {
    require_rank("concat_channels", part, 2);
    if (part.extent(1) != T) shape_mismatch("concat_channels", parts.front(), part);
    offsets.push_back(rows * T);
    rows += part.extent(0);
    parents.push_back(part.node());
  }
  std::vector<double> out;
  out.reserve(rows * T);
  for (const auto& part : parts) {
    auto v = part.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return make_result("concat_channels", {rows, T}, std::move(out),
                     std::move(parents),
                     [offsets](const detail::Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         auto& p = self.parents[k];
                         if (!wants(p)) continue;
                         for (std::size_t i = 0; i < p->grad.size(); ++i)
                           p->grad[i] += self.grad[offsets[k] + i];
                       }
                     });
}

std::vector<Tensor> split_channels(const Tensor& x, std::size_t parts) {
  require_rank("split_channels", x, 2);
  const auto C = x.extent(0);
  if (parts == 0 || C % parts != 0) {
    throw ShapeError("split_channels: " + std::to_string(parts) +
                     " does not divide channel count " + std::to_string(C));
  }
  const auto width = C / parts;
  std::vector<Tensor> out;
  out.reserve(parts);
  for (std::size_t j = 0; j < parts; ++j)
    out.push_back(slice_rows(x, j * width, (j + 1) * width));
  return out;
}

// ---- broadcasting products -------------------------------------------------

Tensor scale_channels(const Tensor& x, const Tensor& gate) {
  require_rank("scale_channels", x, 2);
  require_rank("scale_channels", gate, 1);
  const auto C = x.extent(0);
  const auto T = x.extent(1);
  if (gate.extent(0) != C) shape_mismatch("scale_channels", x, gate);
  std::vector<double> out(C * T);
  auto xv = x.values();
  auto gv = gate.values();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t) out[c * T + t] = xv[c * T + t] * gv[c];
  return make_result("scale_channels", {C, T}, std::move(out),
                     {x.node(), gate.node()},
                     [C, T](const detail::Node& self) {
                       const auto& px = self.parents[0];
                       const auto& pg = self.parents[1];
                       for (std::size_t c = 0; c < C; ++c) {
                         double acc = 0.0;
                         for (std::size_t t = 0; t < T; ++t) {
                           const double g = self.grad[c * T + t];
                           if (wants(px)) px->grad[c * T + t] += g * pg->data[c];
                           acc += g * px->data[c * T + t];
                         }
                         if (wants(pg)) pg->grad[c] += acc;
                       }
                     });
}

Tensor shift_channels(const Tensor& x, const Tensor& bias) {
  require_rank("shift_channels", x, 2);
  require_rank("shift_channels", bias, 1);
  const auto C = x.extent(0);
  const auto T = x.extent(1);
  if (bias.extent(0) != C) shape_mismatch("shift_channels", x, bias);
  std::vector<double> out(C * T);
  auto xv = x.values();
  auto bv = bias.values();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t) out[c * T + t] = xv[c * T + t] + bv[c];
  return make_result("shift_channels", {C, T}, std::move(out),
                     {x.node(), bias.node()},
                     [C, T](const detail::Node& self) {
                       const auto& px = self.parents[0];
                       const auto& pb = self.parents[1];
                       for (std::size_t c = 0; c < C; ++c)
                         for (std::size_t t = 0; t < T; ++t) {
                           const double g = self.grad[c * T + t];
                           if (wants(px)) px->grad[c * T + t] += g;
                           if (wants(pb)) pb->grad[c] += g;
                         }
                     });
}

Tensor scale_frames(const Tensor& x, const Tensor& weight) {
  require_rank("scale_frames", x, 2);
  require_rank("scale_frames", weight, 2);
  const auto C = x.extent(0);
  const auto T = x.extent(1);
  if (weight.extent(0) != 1 || weight.extent(1) != T)
    shape_mismatch("scale_frames", x, weight);
  std::vector<double> out(C * T);
  auto xv = x.values();
  auto wv = weight.values();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t) out[c * T + t] = xv[c * T + t] * wv[t];
  return make_result("scale_frames", {C, T}, std::move(out),
                     {x.node(), weight.node()},
                     [C, T](const detail::Node& self) {
                       const auto& px = self.parents[0];
                       const auto& pw = self.parents[1];
                       for (std::size_t c = 0; c < C; ++c)
                         for (std::size_t t = 0; t < T; ++t) {
                           const double g = self.grad[c * T + t];
                           if (wants(px)) px->grad[c * T + t] += g * pw->data[t];
                           if (wants(pw)) pw->grad[t] += g * px->data[c * T + t];
                         }
                     });
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const auto M = a.extent(0);
  const auto N = a.extent(1);
  const auto P = b.extent(1);
  if (b.extent(0) != N) shape_mismatch("matmul", a, b);
  std::vector<double> out(M * P, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < N; ++k) {
      const double aik = av[i * N + k];
      if (aik == 0.0) continue;
      const double* brow = &bv[k * P];
      double* orow = &out[i * P];
      for (std::size_t j = 0; j < P; ++j) orow[j] += aik * brow[j];
    }
  return make_result("matmul", {M, P}, std::move(out), {a.node(), b.node()},
                     [M, N, P](const detail::Node& self) {
                       const auto& pa = self.parents[0];
                       const auto& pb = self.parents[1];
                       const auto& g = self.grad;
                       if (wants(pa)) {
                         for (std::size_t i = 0; i < M; ++i)
                           for (std::size_t k = 0; k < N; ++k) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < P; ++j)
                               acc += g[i * P + j] * pb->data[k * P + j];
                             pa->grad[i * N + k] += acc;
                           }
                       }
                       if (wants(pb)) {
                         for (std::size_t i = 0; i < M; ++i)
                           for (std::size_t k = 0; k < N; ++k) {
                             const double aik = pa->data[i * N + k];
                             for (std::size_t j = 0; j < P; ++j)
                               pb->grad[k * P + j] += aik * g[i * P + j];
                           }
                       }
                     });
}

Tensor linear(const Tensor& weight, const Tensor& x, const Tensor& bias) {
  require_rank("linear", weight, 2);
  require_rank("linear", x, 1);
  require_rank("linear", bias, 1);
  const auto M = weight.extent(0);
  const auto N = weight.extent(1);
  if (x.extent(0) != N) shape_mismatch("linear", weight, x);
  if (bias.extent(0) != M) shape_mismatch("linear", weight, bias);
  std::vector<double> out(bias.values().begin(), bias.values().end());
  auto wv = weight.values();
  auto xv = x.values();
  for (std::size_t m = 0; m < M; ++m) {
    double acc = 0.0;
    for (std::size_t n = 0; n < N; ++n) acc += wv[m * N + n] * xv[n];
    out[m] += acc;
  }
  return make_result("linear", {M}, std::move(out),
                     {weight.node(), x.node(), bias.node()},
                     [M, N](const detail::Node& self) {
                       const auto& pw = self.parents[0];
                       const auto& px = self.parents[1];
                       const auto& pb = self.parents[2];
                       for (std::size_t m = 0; m < M; ++m) {
                         const double g = self.grad[m];
                         if (wants(pb)) pb->grad[m] += g;
                         for (std::size_t n = 0; n < N; ++n) {
                           if (wants(pw)) pw->grad[m * N + n] += g * px->data[n];
                           if (wants(px)) px->grad[n] += g * pw->data[m * N + n];
                         }
                       }
                     });
}

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t dilation) {
  require_rank("conv1d", input, 2);
  require_rank("conv1d", kernel, 3);
  require_rank("conv1d", bias, 1);
  const auto Cin = input.extent(0);
  const auto T = input.extent(1);
  const auto Cout = kernel.extent(0);
  const auto K = kernel.extent(2);
  if (kernel.extent(1) != Cin) shape_mismatch("conv1d", input, kernel);
  if (bias.extent(0) != Cout) shape_mismatch("conv1d", kernel, bias);
  if (K % 2 == 0) {
    throw ShapeError("conv1d: kernel size must be odd, got " + std::to_string(K));
  }
  if (dilation == 0) throw ShapeError("conv1d: dilation must be positive");

  const auto pad = static_cast<std::ptrdiff_t>(dilation * (K - 1) / 2);
  const auto sT = static_cast<std::ptrdiff_t>(T);
  // Valid output range [lo, hi) for tap kk so that t + off stays inside [0, T).
  auto tap_range = [=](std::size_t kk) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kk * dilation) - pad;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(sT, sT - off);
    return std::tuple{off, lo, hi};
  };

  std::vector<double> out(Cout * T);
  auto xv = input.values();
  auto wv = kernel.values();
  auto bv = bias.values();
  for (std::size_t co = 0; co < Cout; ++co) {
    double* orow = &out[co * T];
    std::fill(orow, orow + T, bv[co]);
    for (std::size_t ci = 0; ci < Cin; ++ci) {
      const double* xrow = &xv[ci * T];
      for (std::size_t kk = 0; kk < K; ++kk) {
        const double w = wv[(co * Cin + ci) * K + kk];
        if (w == 0.0) continue;
        auto [off, lo, hi] = tap_range(kk);
        for (std::ptrdiff_t t = lo; t < hi; ++t) orow[t] += w * xrow[t + off];
      }
    }
  }
  return make_result(
      "conv1d", {Cout, T}, std::move(out),
      {input.node(), kernel.node(), bias.node()},
      [=](const detail::Node& self) {
        const auto& px = self.parents[0];
        const auto& pw = self.parents[1];
        const auto& pb = self.parents[2];
        for (std::size_t co = 0; co < Cout; ++co) {
          const double* grow = &self.grad[co * T];
          if (wants(pb)) {
            double acc = 0.0;
            for (std::size_t t = 0; t < T; ++t) acc += grow[t];
            pb->grad[co] += acc;
          }
          for (std::size_t ci = 0; ci < Cin; ++ci) {
            const double* xrow = &px->data[ci * T];
            for (std::size_t kk = 0; kk < K; ++kk) {
              auto [off, lo, hi] = tap_range(kk);
              const auto widx = (co * Cin + ci) * K + kk;
              if (wants(pw)) {
                double acc = 0.0;
                for (std::ptrdiff_t t = lo; t < hi; ++t) acc += grow[t] * xrow[t + off];
                pw->grad[widx] += acc;
              }
              if (wants(px)) {
                const double w = pw->data[widx];
                double* gx = &px->grad[ci * T];
                for (std::ptrdiff_t t = lo; t < hi; ++t) gx[t + off] += w * grow[t];
              }
            }
          }
        }
      });
}

// ---- probabilistic ---------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (!x.defined() || x.rank() > 2 || axis >= x.rank()) {
    throw ShapeError("softmax: unsupported axis " + std::to_string(axis) +
                     " for " + shape_to_string(x.shape()));
  }
  // View as [outer x n x inner] with reduction over n.
  const auto rows = x.rank() == 1 ? 1 : x.extent(0);
  const auto cols = x.rank() == 1 ? x.extent(0) : x.extent(1);
  const bool over_rows = x.rank() == 2 && axis == 0;
  const auto n = over_rows ? rows : cols;
  const auto groups = over_rows ? cols : rows;
  auto index = [=](std::size_t g, std::size_t i) {
    return over_rows ? i * cols + g : g * cols + i;
  };

  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t g = 0; g < groups; ++g) {
    double mx = xv[index(g, 0)];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xv[index(g, i)]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::exp(xv[index(g, i)] - mx);
      out[index(g, i)] = e;
      z += e;
    }
    for (std::size_t i = 0; i < n; ++i) out[index(g, i)] /= z;
  }
  return make_result("softmax", x.shape(), std::move(out), {x.node()},
                     [=](const detail::Node& self) {
                       auto& p = self.parents[0];
                       for (std::size_t g = 0; g < groups; ++g) {
                         double dot = 0.0;
                         for (std::size_t i = 0; i < n; ++i)
                           dot += self.grad[index(g, i)] * self.data[index(g, i)];
                         for (std::size_t i = 0; i < n; ++i) {
                           const auto k = index(g, i);
                           p->grad[k] += self.data[k] * (self.grad[k] - dot);
                         }
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  require_rank("cross_entropy", logits, 1);
  const auto n = logits.extent(0);
  if (label >= n) {
    throw ShapeError("cross_entropy: label " + std::to_string(label) +
                     " out of range for " + std::to_string(n) + " classes");
  }
  auto z = logits.values();
  const double mx = *std::max_element(z.begin(), z.end());
  double acc = 0.0;
  for (double v : z) acc += std::exp(v - mx);
  const double lse = mx + std::log(acc);
  return make_result("cross_entropy", {1}, {lse - z[label]}, {logits.node()},
                     [label, lse](const detail::Node& self) {
                       auto& p = self.parents[0];
                       for (std::size_t i = 0; i < p->data.size(); ++i) {
                         const double prob = std::exp(p->data[i] - lse);
                         p->grad[i] += self.grad[0] * (prob - (i == label ? 1.0 : 0.0));
                       }
                     });
}

}  // namespace nesla
