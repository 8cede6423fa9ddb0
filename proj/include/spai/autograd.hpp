#pragma once

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every intermediate value. Ops are free functions taking and
// returning Var handles; a Var is only valid while its Tape is alive.
// Row vectors (1 x n) stand in for feature vectors throughout.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "spai/types.hpp"

namespace spai {

/// Named trainable tensor with its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<Scalar>& value() const { return tape->value(id); }
  const Matrix<Scalar>& grad() const { return tape->grad(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Tape&, const Mat&)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var<Scalar> constant(Mat value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, false, nullptr, {}});
    return {this, nodes_.size() - 1};
  }

  /// Leaf that aliases `value`; the referenced matrix must outlive the tape.
  Var<Scalar> constant_ref(const Mat& value) {
    nodes_.push_back(Node{{}, &value, {}, false, nullptr, {}});
    return {this, nodes_.size() - 1};
  }

  Var<Scalar> parameter(Parameter<Scalar>& p) {
    const bool grad = record_ && p.trainable;
    if (grad && (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())) p.zero_grad();
    nodes_.push_back(Node{{}, &p.value, {}, grad, grad ? &p.grad : nullptr, {}});
    return {this, nodes_.size() - 1};
  }

  /// Read-only binding: never receives a gradient.
  Var<Scalar> parameter(const Parameter<Scalar>& p) { return constant_ref(p.value); }

  /// Records an op output. `backward` is kept only if some input needs a gradient.
  Var<Scalar> record(Mat value, std::initializer_list<Var<Scalar>> inputs, Backward backward) {
    bool grad = false;
    for (const auto& in : inputs) grad = grad || nodes_[in.id].requires_grad;
    nodes_.push_back(Node{std::move(value), nullptr, {}, grad, nullptr, grad ? std::move(backward) : Backward{}});
    return {this, nodes_.size() - 1};
  }

  Var<Scalar> record(Mat value, const std::vector<Var<Scalar>>& inputs, Backward backward) {
    bool grad = false;
    for (const auto& in : inputs) grad = grad || nodes_[in.id].requires_grad;
    nodes_.push_back(Node{std::move(value), nullptr, {}, grad, nullptr, grad ? std::move(backward) : Backward{}});
    return {this, nodes_.size() - 1};
  }

  const Mat& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }
  const Mat& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  template <typename Expr>
  void accumulate(const Var<Scalar>& v, const Expr& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Back-propagates from a scalar (1x1) output, adding into parameter gradients.
  void backward(const Var<Scalar>& output) {
    if (value(output.id).size() != 1) throw InvalidInput("backward: output must be a scalar");
    if (!nodes_[output.id].requires_grad) return;
    nodes_[output.id].grad = Mat::Ones(1, 1);
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) {
        Mat g = std::move(n.grad);
        n.backward(*this, g);
        n.grad = std::move(g);
      }
      if (n.sink) *n.sink += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat owned;
    const Mat* external;
    Mat grad;
    bool requires_grad;
    Mat* sink;
    Backward backward;
  };

  bool record_;
  std::vector<Node> nodes_;
};

namespace ops {

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) throw InvalidInput("matmul: inner dimensions differ");
  return a.tape->record(a.value() * b.value(), {a, b}, [a, b](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

/// a * b^T
template <typename Scalar>
Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.cols()) throw InvalidInput("matmul_nt: inner dimensions differ");
  return a.tape->record(a.value() * b.value().transpose(), {a, b},
                        [a, b](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                          if (a.requires_grad()) t.accumulate(a, g * b.value());
                          if (b.requires_grad()) t.accumulate(b, g.transpose() * a.value());
                        });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  return a.tape->record(a.value().transpose(), {a}, [a](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g.transpose());
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInput("add: shape mismatch");
  return a.tape->record(a.value() + b.value(), {a, b}, [a, b](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInput("sub: shape mismatch");
  return a.tape->record(a.value() - b.value(), {a, b}, [a, b](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

/// Adds a 1 x c row to every row of `a`.
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& a, const Var<Scalar>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw InvalidInput("add_row: bias shape mismatch");
  Matrix<Scalar> out = a.value().rowwise() + row.value().row(0);
  return a.tape->record(std::move(out), {a, row}, [a, row](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g);
    if (row.requires_grad()) t.accumulate(row, g.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInput("mul: shape mismatch");
  return a.tape->record(a.value().cwiseProduct(b.value()), {a, b},
                        [a, b](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                          if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
                          if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
                        });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  return a.tape->record(a.value() * s, {a}, [a, s](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g * s);
  });
}

template <typename Scalar>
Scalar gelu_value(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
}

template <typename Scalar>
Scalar gelu_derivative(Scalar x) {
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
  const Scalar pdf = std::exp(Scalar(-0.5) * x * x) / std::sqrt(Scalar(2) * Scalar(M_PI));
  return cdf + x * pdf;
}

/// Exact (erf) GELU.
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().unaryExpr([](Scalar x) { return gelu_value(x); });
  return a.tape->record(std::move(out), {a}, [a](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g.cwiseProduct(a.value().unaryExpr([](Scalar x) { return gelu_derivative(x); })));
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  return a.tape->record(a.value().cwiseMax(Scalar(0)), {a}, [a](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, (a.value().array() > Scalar(0)).select(g, Scalar(0)).matrix());
  });
}

template <typename Scalar>
Scalar sigmoid_value(Scalar x) {
  return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-x)) : std::exp(x) / (Scalar(1) + std::exp(x));
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().unaryExpr([](Scalar x) { return sigmoid_value(x); });
  return a.tape->record(out, {a}, [a, out](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g.cwiseProduct(out.cwiseProduct((Scalar(1) - out.array()).matrix())));
  });
}

/// Row-wise layer normalization with learned 1 x c gain and bias.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias,
                       Scalar eps = Scalar(1e-5)) {
  const Eigen::Index c = x.cols();
  if (gain.cols() != c || bias.cols() != c || gain.rows() != 1 || bias.rows() != 1) {
    throw InvalidInput("layer_norm: affine shape mismatch");
  }
  const Matrix<Scalar>& in = x.value();
  Vector<Scalar> mean = in.rowwise().mean();
  Matrix<Scalar> centered = in.colwise() - mean;
  Vector<Scalar> inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<Scalar>(c)) + eps).sqrt().inverse().matrix();
  Matrix<Scalar> normalized = centered.array().colwise() * inv_std.array();
  Matrix<Scalar> out = (normalized.array().rowwise() * gain.value().row(0).array()).rowwise() +
                       bias.value().row(0).array();
  return x.tape->record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, normalized, inv_std, c](Tape<Scalar>& t, const Matrix<Scalar>& g) {
        if (gain.requires_grad()) t.accumulate(gain, g.cwiseProduct(normalized).colwise().sum());
        if (bias.requires_grad()) t.accumulate(bias, g.colwise().sum());
        if (x.requires_grad()) {
          Matrix<Scalar> dn = g.array().rowwise() * gain.value().row(0).array();
          Vector<Scalar> mean_dn = dn.rowwise().mean();
          Vector<Scalar> mean_dn_n = dn.cwiseProduct(normalized).rowwise().sum() / static_cast<Scalar>(c);
          Matrix<Scalar> dx = (dn.colwise() - mean_dn) - (normalized.array().colwise() * mean_dn_n.array()).matrix();
          t.accumulate(x, (dx.array().colwise() * inv_std.array()).matrix());
        }
      });
}

template <typename Scalar>
Matrix<Scalar> softmax_rows_value(const Matrix<Scalar>& in) {
  Matrix<Scalar> out = in.colwise() - in.rowwise().maxCoeff();
  out = out.array().exp();
  out = out.array().colwise() / out.rowwise().sum().array();
  return out;
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& a) {
  Matrix<Scalar> out = softmax_rows_value(a.value());
  return a.tape->record(out, {a}, [a, out](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Vector<Scalar> dot = g.cwiseProduct(out).rowwise().sum();
    t.accumulate(a, out.cwiseProduct(g.colwise() - dot));
  });
}

/// 1 x c column sums.
template <typename Scalar>
Var<Scalar> sum_rows(const Var<Scalar>& a) {
  return a.tape->record(a.value().colwise().sum(), {a}, [a](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g.replicate(a.rows(), 1));
  });
}

template <typename Scalar>
Var<Scalar> mean_rows(const Var<Scalar>& a) {
  const Scalar n = static_cast<Scalar>(a.rows());
  return a.tape->record(a.value().colwise().mean(), {a}, [a, n](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, (g / n).replicate(a.rows(), 1));
  });
}

/// Population standard deviation of each column (1 x c).
template <typename Scalar>
Var<Scalar> std_rows(const Var<Scalar>& a) {
  const Scalar n = static_cast<Scalar>(a.rows());
  Matrix<Scalar> centered = a.value().rowwise() - a.value().colwise().mean();
  Matrix<Scalar> out = (centered.array().square().colwise().sum() / n).sqrt().matrix();
  return a.tape->record(out, {a}, [a, n, centered, out](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    RowVector<Scalar> factor(out.cols());
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      factor(j) = out(0, j) > Scalar(0) ? g(0, j) / (n * out(0, j)) : Scalar(0);
    }
    t.accumulate(a, (centered.array().rowwise() * factor.array()).matrix());
  });
}

template <typename Scalar>
Var<Scalar> mean_all(const Var<Scalar>& a) {
  const Scalar n = static_cast<Scalar>(a.value().size());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return a.tape->record(std::move(out), {a}, [a, n](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, Matrix<Scalar>::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

/// Row-wise cosine similarity (L x 1) with `eps` added to each norm and the
/// result clamped to [-1, 1]. Zero rows yield 0.
template <typename Scalar>
Var<Scalar> cosine_rows(const Var<Scalar>& a, const Var<Scalar>& b, Scalar eps = Scalar(1e-8)) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInput("cosine_rows: shape mismatch");
  const Matrix<Scalar>& av = a.value();
  const Matrix<Scalar>& bv = b.value();
  Vector<Scalar> dot = av.cwiseProduct(bv).rowwise().sum();
  Vector<Scalar> na = av.rowwise().norm();
  Vector<Scalar> nb = bv.rowwise().norm();
  Vector<Scalar> denom = ((na.array() + eps) * (nb.array() + eps)).matrix();
  Matrix<Scalar> out = (dot.array() / denom.array()).cwiseMax(Scalar(-1)).cwiseMin(Scalar(1)).matrix();
  return a.tape->record(out, {a, b}, [a, b, dot, na, nb, denom, eps](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    const Matrix<Scalar>& av = a.value();
    const Matrix<Scalar>& bv = b.value();
    auto side = [&](const Matrix<Scalar>& self, const Matrix<Scalar>& other, const Vector<Scalar>& nself) {
      Matrix<Scalar> d(self.rows(), self.cols());
      for (Eigen::Index r = 0; r < self.rows(); ++r) {
        const Scalar gr = g(r, 0);
        Scalar self_term = Scalar(0);
        if (nself(r) > Scalar(0)) self_term = dot(r) / (denom(r) * (nself(r) + eps) * nself(r));
        d.row(r) = gr * (other.row(r) / denom(r) - self_term * self.row(r));
      }
      return d;
    };
    if (a.requires_grad()) t.accumulate(a, side(av, bv, na));
    if (b.requires_grad()) t.accumulate(b, side(bv, av, nb));
  });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.cols()) throw InvalidInput("slice_cols: out of range");
  return a.tape->record(a.value().middleCols(start, count), {a},
                        [a, start, count](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                          Matrix<Scalar> full = Matrix<Scalar>::Zero(a.rows(), a.cols());
                          full.middleCols(start, count) = g;
                          t.accumulate(a, full);
                        });
}

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.rows()) throw InvalidInput("slice_rows: out of range");
  return a.tape->record(a.value().middleRows(start, count), {a},
                        [a, start, count](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                          Matrix<Scalar> full = Matrix<Scalar>::Zero(a.rows(), a.cols());
                          full.middleRows(start, count) = g;
                          t.accumulate(a, full);
                        });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: no inputs");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) throw InvalidInput("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix<Scalar> out(parts.front().rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return parts.front().tape->record(std::move(out), parts, [parts](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) t.accumulate(p, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw InvalidInput("concat_rows: no inputs");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols()) throw InvalidInput("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, parts.front().cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return parts.front().tape->record(std::move(out), parts, [parts](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) t.accumulate(p, g.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

/// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets, computed
/// from logits for numerical stability. `logits` and `targets` are n x 1.
template <typename Scalar>
Var<Scalar> bce_with_logits(const Var<Scalar>& logits, const Matrix<Scalar>& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != 1 || targets.cols() != 1) {
    throw InvalidInput("bce_with_logits: shape mismatch");
  }
  const Scalar n = static_cast<Scalar>(logits.rows());
  Scalar total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar l = logits.value()(i, 0);
    total += std::max(l, Scalar(0)) - l * targets(i, 0) + std::log1p(std::exp(-std::abs(l)));
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total / n;
  return logits.tape->record(std::move(out), {logits}, [logits, targets, n](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Matrix<Scalar> d = logits.value().unaryExpr([](Scalar x) { return sigmoid_value(x); }) - targets;
    t.accumulate(logits, d * (g(0, 0) / n));
  });
}

}  // namespace ops
}  // namespace spai
