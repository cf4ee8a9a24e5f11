#pragma once

// Dense tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto shared storage. Ops take a Tape and record
// one backward rule per op whose output depends on a trainable leaf. Calling
// Tape::backward on a scalar replays the rules in reverse order, accumulating
// partial derivatives into every node on the path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace alstp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace nn {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node<T>>()) {
    if (shape.empty()) throw Error("tensor shape must have at least one dimension");
    for (auto d : shape) {
      if (d == 0) throw Error("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_size(shape) != values.size()) {
      throw Error("tensor shape " + shape_str(shape) + " does not match " +
                  std::to_string(values.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
  }

  static Tensor zeros(Shape shape) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)));
  }
  static Tensor vector(std::vector<T> values) {
    Shape s{values.size()};
    return Tensor(std::move(s), std::move(values));
  }
  static Tensor vector(std::span<const T> values) {
    return vector(std::vector<T>(values.begin(), values.end()));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
  }
  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return rank() > 1 ? node_->shape[1] : 1; }

  std::span<const T> values() const { return node_->value; }
  std::span<T> mutable_values() { return node_->value; }
  T operator[](std::size_t i) const { return node_->value[i]; }
  T item() const {
    if (size() != 1) throw Error("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }
  void clear_grad() { node_->grad.clear(); }

  // Marks this tensor as a trainable leaf: ops consuming it record backward rules.
  Tensor& set_requires_grad(bool on = true) {
    node_->requires_grad = on;
    return *this;
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  Tensor clone() const {
    Tensor out(node_->shape, node_->value);
    out.node_->requires_grad = node_->requires_grad;
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> v(node_->value.begin(), node_->value.end());
    Tensor<U> out(node_->shape, std::move(v));
    out.set_requires_grad(node_->requires_grad);
    return out;
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  bool same_storage(const Tensor& o) const { return node_ == o.node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return rules_.size(); }

  // True when an op with these inputs needs a backward rule.
  template <typename... Ts>
  bool tracks(const Ts&... inputs) const {
    return record_ && (inputs.requires_grad() || ...);
  }

  void record(std::function<void()> rule) {
    if (!record_) return;
    if (consumed_) throw Error("tape already replayed; call reset() before recording again");
    rules_.push_back(std::move(rule));
  }

  // Seeds d(loss)/d(loss) = 1 and replays every rule in reverse recording order.
  void backward(const Tensor<T>& loss) {
    if (!record_) throw Error("backward() on a tape that does not record");
    if (consumed_) throw Error("backward() called twice without reset()");
    if (loss.size() != 1) throw Error("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    consumed_ = true;
    loss.node()->ensure_grad();
    loss.node()->grad[0] += T(1);
    for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
  }

  void reset() {
    rules_.clear();
    consumed_ = false;
  }

 private:
  bool record_;
  bool consumed_ = false;
  std::vector<std::function<void()>> rules_;
};

namespace detail {

template <typename T>
Tensor<T> make_output(Shape shape, std::vector<T> values, bool requires_grad) {
  Tensor<T> out(std::move(shape), std::move(values));
  out.set_requires_grad(requires_grad);
  return out;
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
  }
}

template <typename T>
void require_vector(const char* op, const Tensor<T>& a) {
  if (!a.defined()) throw Error(std::string(op) + ": empty input");
  if (a.rank() != 1) throw Error(std::string(op) + ": expected a vector, got " + shape_str(a.shape()));
}

template <typename T>
void require_scalar(const char* op, const Tensor<T>& a) {
  if (a.size() != 1) throw Error(std::string(op) + ": expected a scalar, got " + shape_str(a.shape()));
}

// Applies an elementwise function with derivative expressed through (x, y).
template <typename T, typename F, typename D>
Tensor<T> unary(Tape<T>& tape, const Tensor<T>& x, F f, D dfdx) {
  std::vector<T> y(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  bool track = tape.tracks(x);
  auto out = make_output(x.shape(), std::move(y), track);
  if (track) {
    tape.record([xn = x.node(), on = out.node(), dfdx] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        xn->grad[i] += on->grad[i] * dfdx(xn->value[i], on->value[i]);
      }
    });
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> constant(std::span<const T> values) {
  return Tensor<T>::vector(values);
}

// out[i] = sum_j W[i][j] * x[j]
template <typename T>
Tensor<T> matvec(Tape<T>& tape, const Tensor<T>& W, const Tensor<T>& x) {
  if (W.rank() != 2 || x.rank() != 1 || W.cols() != x.size()) {
    throw Error("matvec: shape mismatch W" + shape_str(W.shape()) + " x" + shape_str(x.shape()));
  }
  const std::size_t r = W.rows(), c = W.cols();
  auto wv = W.values();
  auto xv = x.values();
  std::vector<T> y(r);
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    const T* row = wv.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) acc += static_cast<double>(row[j]) * xv[j];
    y[i] = static_cast<T>(acc);
  }
  bool track = tape.tracks(W, x);
  auto out = detail::make_output(Shape{r}, std::move(y), track);
  if (track) {
    tape.record([wn = W.node(), xn = x.node(), on = out.node(), r, c] {
      if (on->grad.empty()) return;
      const auto& gy = on->grad;
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
          T* grow = wn->grad.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) grow[j] += gy[i] * xn->value[j];
        }
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t j = 0; j < c; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < r; ++i) acc += static_cast<double>(wn->value[i * c + j]) * gy[i];
          xn->grad[j] += static_cast<T>(acc);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  bool track = tape.tracks(a, b);
  auto out = detail::make_output(a.shape(), std::move(y), track);
  if (track) {
    tape.record([an = a.node(), bn = b.node(), on = out.node()] {
      if (on->grad.empty()) return;
      for (auto* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        n->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) n->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
  bool track = tape.tracks(a, b);
  auto out = detail::make_output(a.shape(), std::move(y), track);
  if (track) {
    tape.record([an = a.node(), bn = b.node(), on = out.node()] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
      }
    });
  }
  return out;
}

// Elementwise (Hadamard) product.
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  bool track = tape.tracks(a, b);
  auto out = detail::make_output(a.shape(), std::move(y), track);
  if (track) {
    tape.record([an = a.node(), bn = b.node(), on = out.node()] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->value[i];
      }
    });
  }
  return out;
}

// y = a * s for a scalar tensor s, broadcast over a.
template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& s) {
  detail::require_scalar("scale", s);
  const T sv = s[0];
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * sv;
  bool track = tape.tracks(a, s);
  auto out = detail::make_output(a.shape(), std::move(y), track);
  if (track) {
    tape.record([an = a.node(), sn = s.node(), on = out.node()] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * sn->value[0];
      }
      if (sn->requires_grad) {
        sn->ensure_grad();
        double acc = 0.0;
        for (std::size_t i = 0; i < on->grad.size(); ++i) acc += static_cast<double>(on->grad[i]) * an->value[i];
        sn->grad[0] += static_cast<T>(acc);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T s) {
  return detail::unary(tape, a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

// y = a + s for a scalar tensor s, broadcast over a.
template <typename T>
Tensor<T> add_scalar(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& s) {
  detail::require_scalar("add_scalar", s);
  const T sv = s[0];
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + sv;
  bool track = tape.tracks(a, s);
  auto out = detail::make_output(a.shape(), std::move(y), track);
  if (track) {
    tape.record([an = a.node(), sn = s.node(), on = out.node()] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (sn->requires_grad) {
        sn->ensure_grad();
        double acc = 0.0;
        for (auto g : on->grad) acc += g;
        sn->grad[0] += static_cast<T>(acc);
      }
    });
  }
  return out;
}

// ELU with alpha = 1.
template <typename T>
Tensor<T> elu(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, x, [](T v) { return v > T(0) ? v : std::expm1(v); },
      [](T v, T y) { return v > T(0) ? T(1) : y + T(1); });
}

template <typename T>
T sigmoid_value(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, x, [](T v) { return sigmoid_value(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

// log(sigmoid(x)), stable for large |x|.
template <typename T>
Tensor<T> log_sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, x,
      [](T v) { return v >= T(0) ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v)); },
      [](T v, T) { return T(1) - sigmoid_value(v); });
}

// Concatenation of vectors (scalars count as length-1 vectors).
template <typename T>
Tensor<T> concat(Tape<T>& tape, std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw Error("concat: no inputs");
  std::vector<T> y;
  bool track = false;
  for (const auto& p : parts) {
    detail::require_vector("concat", p);
    y.insert(y.end(), p.values().begin(), p.values().end());
    track = track || tape.tracks(p);
  }
  auto n = y.size();
  auto out = detail::make_output(Shape{n}, std::move(y), track);
  if (track) {
    std::vector<std::shared_ptr<Node<T>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape.record([nodes = std::move(nodes), on = out.node()] {
      if (on->grad.empty()) return;
      std::size_t off = 0;
      for (const auto& n : nodes) {
        const std::size_t len = n->value.size();
        if (n->requires_grad) {
          n->ensure_grad();
          for (std::size_t i = 0; i < len; ++i) n->grad[i] += on->grad[off + i];
        }
        off += len;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(Tape<T>& tape, std::initializer_list<Tensor<T>> parts) {
  std::vector<Tensor<T>> v(parts);
  return concat(tape, std::span<const Tensor<T>>(v));
}

// Max-subtracted softmax over a vector.
template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x) {
  detail::require_vector("softmax", x);
  auto xv = x.values();
  const T mx = *std::max_element(xv.begin(), xv.end());
  std::vector<double> e(xv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    e[i] = std::exp(static_cast<double>(xv[i]) - mx);
    total += e[i];
  }
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<T>(e[i] / total);
  bool track = tape.tracks(x);
  auto out = detail::make_output(x.shape(), std::move(y), track);
  if (track) {
    tape.record([xn = x.node(), on = out.node()] {
      if (on->grad.empty()) return;
      const auto& y = on->value;
      double inner = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) inner += static_cast<double>(on->grad[i]) * y[i];
      xn->ensure_grad();
      for (std::size_t i = 0; i < y.size(); ++i) {
        xn->grad[i] += static_cast<T>(y[i] * (on->grad[i] - inner));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  double acc = 0.0;
  for (auto v : x.values()) acc += v;
  bool track = tape.tracks(x);
  auto out = detail::make_output(Shape{1}, std::vector<T>{static_cast<T>(acc)}, track);
  if (track) {
    tape.record([xn = x.node(), on = out.node()] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (auto& g : xn->grad) g += on->grad[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> dot(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("dot", a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  bool track = tape.tracks(a, b);
  auto out = detail::make_output(Shape{1}, std::vector<T>{static_cast<T>(acc)}, track);
  if (track) {
    tape.record([an = a.node(), bn = b.node(), on = out.node()] {
      if (on->grad.empty()) return;
      const T g = on->grad[0];
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < an->value.size(); ++i) an->grad[i] += g * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < bn->value.size(); ++i) bn->grad[i] += g * an->value[i];
      }
    });
  }
  return out;
}

// Squared Euclidean norm of all entries.
template <typename T>
Tensor<T> sq_norm(Tape<T>& tape, const Tensor<T>& a) {
  double acc = 0.0;
  for (auto v : a.values()) acc += static_cast<double>(v) * v;
  bool track = tape.tracks(a);
  auto out = detail::make_output(Shape{1}, std::vector<T>{static_cast<T>(acc)}, track);
  if (track) {
    tape.record([an = a.node(), on = out.node()] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < an->value.size(); ++i) an->grad[i] += T(2) * on->grad[0] * an->value[i];
    });
  }
  return out;
}

// a.b / (|a| |b|). Zero-norm inputs are a hard error.
template <typename T>
Tensor<T> cosine(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("cosine", a, b);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (!(aa > 0.0) || !(bb > 0.0)) throw Error("cosine: zero-norm input (degenerate embedding)");
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  const double c = std::clamp(ab / (na * nb), -1.0, 1.0);
  bool track = tape.tracks(a, b);
  auto out = detail::make_output(Shape{1}, std::vector<T>{static_cast<T>(c)}, track);
  if (track) {
    tape.record([an = a.node(), bn = b.node(), on = out.node(), na, nb, c] {
      if (on->grad.empty()) return;
      const double g = on->grad[0];
      // d cos / da = b/(|a||b|) - cos * a/|a|^2
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < an->value.size(); ++i) {
          an->grad[i] += static_cast<T>(g * (bn->value[i] / (na * nb) - c * an->value[i] / (na * na)));
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < bn->value.size(); ++i) {
          bn->grad[i] += static_cast<T>(g * (an->value[i] / (na * nb) - c * bn->value[i] / (nb * nb)));
        }
      }
    });
  }
  return out;
}

// sum_j w[j] * xs[j] for a weight vector w and equally shaped vectors xs.
template <typename T>
Tensor<T> weighted_sum(Tape<T>& tape, const Tensor<T>& w, std::span<const Tensor<T>> xs) {
  detail::require_vector("weighted_sum", w);
  if (xs.empty() || w.size() != xs.size()) {
    throw Error("weighted_sum: " + std::to_string(w.size()) + " weights for " +
                std::to_string(xs.size()) + " vectors");
  }
  const auto n = xs.front().size();
  std::vector<double> acc(n, 0.0);
  bool track = tape.tracks(w);
  for (std::size_t j = 0; j < xs.size(); ++j) {
    detail::require_same_shape("weighted_sum", xs[j], xs.front());
    for (std::size_t i = 0; i < n; ++i) acc[i] += static_cast<double>(w[j]) * xs[j][i];
    track = track || tape.tracks(xs[j]);
  }
  std::vector<T> y(acc.begin(), acc.end());
  auto out = detail::make_output(xs.front().shape(), std::move(y), track);
  if (track) {
    std::vector<std::shared_ptr<Node<T>>> nodes;
    for (const auto& x : xs) nodes.push_back(x.node());
    tape.record([wn = w.node(), nodes = std::move(nodes), on = out.node()] {
      if (on->grad.empty()) return;
      const auto& gy = on->grad;
      if (wn->requires_grad) wn->ensure_grad();
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        auto& xn = *nodes[j];
        if (wn->requires_grad) {
          double acc = 0.0;
          for (std::size_t i = 0; i < gy.size(); ++i) acc += static_cast<double>(gy[i]) * xn.value[i];
          wn->grad[j] += static_cast<T>(acc);
        }
        if (xn.requires_grad) {
          xn.ensure_grad();
          for (std::size_t i = 0; i < gy.size(); ++i) xn.grad[i] += gy[i] * wn->value[j];
        }
      }
    });
  }
  return out;
}

}  // namespace nn
}  // namespace alstp
