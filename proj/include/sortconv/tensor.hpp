#pragma once

// Dense n-dimensional tensor with reverse-mode automatic differentiation.
// Tensors are cheap handles onto shared nodes; data is immutable once a node
// participates in a graph (grad and optimizer buffers are the mutable parts).

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace sortconv {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thread-local autograd switch; disabling it makes ops skip graph recording
// so evaluation passes hold no intermediate tensors alive.
namespace detail {
inline thread_local bool grad_enabled_flag = true;
}
inline bool grad_enabled() { return detail::grad_enabled_flag; }

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_enabled_flag) { detail::grad_enabled_flag = false; }
  ~NoGradGuard() { detail::grad_enabled_flag = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename S>
class Tensor;

namespace detail {

template <typename S>
struct Node {
  Shape shape;
  std::shared_ptr<std::vector<S>> values;
  std::vector<S> grad;  // empty until needed
  bool requires_grad = false;
  std::vector<Tensor<S>> parents;
  std::function<void(Node<S>&)> backward_fn;

  std::int64_t numel() const { return static_cast<std::int64_t>(values->size()); }

  std::span<S> grad_buf() {
    if (grad.size() != values->size()) grad.assign(values->size(), S(0));
    return grad;
  }
};

}  // namespace detail

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) { return full(std::move(shape), S(0)); }

  static Tensor full(Shape shape, S v) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<S>(static_cast<size_t>(n), v));
  }

  static Tensor from(Shape shape, std::vector<S> data) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<detail::Node<S>>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::make_shared<std::vector<S>>(std::move(data));
    return t;
  }

  // Shares the underlying value buffer (used for reshape views and for
  // per-shard parameter leaves that own their gradient but not their data).
  static Tensor alias(const Tensor& src, Shape shape, bool requires_grad) {
    if (shape_numel(shape) != src.numel())
      throw ShapeError("alias shape " + shape_str(shape) + " has wrong element count");
    Tensor t;
    t.node_ = std::make_shared<detail::Node<S>>();
    t.node_->shape = std::move(shape);
    t.node_->values = src.node_->values;
    t.node_->requires_grad = requires_grad;
    return t;
  }

  template <typename Rng>
  static Tensor uniform(Shape shape, Rng& rng, S lo, S hi) {
    auto n = shape_numel(shape);
    std::vector<S> d(static_cast<size_t>(n));
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& v : d) v = static_cast<S>(dist(rng));
    return from(std::move(shape), std::move(d));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(size_t i) const { return node_->shape.at(i); }
  size_t rank() const { return node_->shape.size(); }
  std::int64_t numel() const { return node_->numel(); }

  std::span<const S> data() const { return *node_->values; }
  // Mutable access is for leaves (test inputs, optimizer updates); mutating a
  // tensor that already fed an op invalidates recorded graphs.
  std::span<S> mutable_data() { return *node_->values; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const S> grad() const {
    if (node_->grad.empty())
      throw std::runtime_error("tensor has no gradient (backward not run or not tracked)");
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), S(0));
  }

  S item() const {
    if (numel() != 1) throw ShapeError("item() requires a scalar, got " + shape_str(shape()));
    return (*node_->values)[0];
  }

  // Reverse-mode sweep from a scalar loss: seeds d(loss)/d(loss)=1 and visits
  // every reachable node exactly once in reverse topological order.
  void backward() const {
    if (numel() != 1)
      throw std::invalid_argument("backward() requires a scalar loss, got shape " +
                                  shape_str(shape()));
    std::vector<detail::Node<S>*> order;
    topo_collect(order);
    node_->grad_buf()[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node<S>* n = *it;
      if (n->backward_fn) n->backward_fn(*n);
    }
  }

  detail::Node<S>* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node<S>>& node_ptr() const { return node_; }

  // Graph assembly for ops: output node adopting parents and a backward
  // closure. The closure receives the output node (its grad is populated).
  static Tensor make_op(Shape shape, std::vector<S> data, std::vector<Tensor> parents,
                        std::function<void(detail::Node<S>&)> backward_fn) {
    Tensor out = from(std::move(shape), std::move(data));
    bool track = grad_enabled();
    bool any = false;
    for (auto& p : parents) any = any || p.node_->requires_grad;
    if (track && any) {
      out.node_->requires_grad = true;
      out.node_->parents = std::move(parents);
      out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
  }

 private:
  void topo_collect(std::vector<detail::Node<S>*>& order) const {
    std::unordered_set<detail::Node<S>*> seen;
    // Iterative post-order; graphs can be deep (per-layer chains are short,
    // but keep recursion out of the engine).
    std::vector<std::pair<detail::Node<S>*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        detail::Node<S>* p = n->parents[i].node();
        ++i;
        if (p && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<detail::Node<S>> node_;
};

}  // namespace sortconv
