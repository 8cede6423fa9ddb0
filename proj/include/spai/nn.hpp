#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "spai/autograd.hpp"

namespace spai {

/// Non-owning view over a model's parameters, in registration order.
template <typename Scalar>
using ParameterList = std::vector<Parameter<Scalar>*>;

namespace init {

template <typename Scalar, typename Rng>
Matrix<Scalar> uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = static_cast<Scalar>(dist(rng));
  return m;
}

/// Normal truncated at two standard deviations.
template <typename Scalar, typename Rng>
Matrix<Scalar> trunc_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      double v = dist(rng);
      while (std::abs(v) > 2.0) v = dist(rng);
      m(r, c) = static_cast<Scalar>(v * stddev);
    }
  }
  return m;
}

}  // namespace init

/// y = x W + b, with W stored as in x out.
template <typename Scalar>
struct Linear {
  Parameter<Scalar> weight;
  Parameter<Scalar> bias;

  Linear() = default;
  template <typename Rng>
  Linear(std::string name, Eigen::Index in, Eigen::Index out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight = {name + ".weight", init::uniform<Scalar>(in, out, bound, rng), {}, true};
    bias = {name + ".bias", init::uniform<Scalar>(1, out, bound, rng), {}, true};
  }

  Eigen::Index in_features() const { return weight.value.rows(); }
  Eigen::Index out_features() const { return weight.value.cols(); }

  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& x) {
    return ops::add_row(ops::matmul(x, tape.parameter(weight)), tape.parameter(bias));
  }
  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& x) const {
    return ops::add_row(ops::matmul(x, tape.parameter(weight)), tape.parameter(bias));
  }

  void collect(ParameterList<Scalar>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <typename Scalar>
struct LayerNorm {
  Parameter<Scalar> gain;
  Parameter<Scalar> bias;
  Scalar eps = Scalar(1e-5);

  LayerNorm() = default;
  LayerNorm(std::string name, Eigen::Index features)
      : gain{name + ".gain", Matrix<Scalar>::Ones(1, features), {}, true},
        bias{name + ".bias", Matrix<Scalar>::Zero(1, features), {}, true} {}

  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& x) {
    return ops::layer_norm(x, tape.parameter(gain), tape.parameter(bias), eps);
  }
  Var<Scalar> operator()(Tape<Scalar>& tape, const Var<Scalar>& x) const {
    return ops::layer_norm(x, tape.parameter(gain), tape.parameter(bias), eps);
  }

  void collect(ParameterList<Scalar>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
  }
};

/// [LayerNorm] -> Linear -> GELU -> Linear -> LayerNorm, applied row-wise.
///
/// With `input_norm` this is the per-block feature projection; without it,
/// the context projector used to build the spectral context vector.
template <typename Scalar>
struct Projector {
  bool input_norm = false;
  LayerNorm<Scalar> norm_in;
  Linear<Scalar> fc1;
  Linear<Scalar> fc2;
  LayerNorm<Scalar> norm_out;

  Projector() = default;
  template <typename Rng>
  Projector(std::string name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out, bool with_input_norm, Rng& rng)
      : input_norm(with_input_norm),
        norm_in(name + ".norm_in", in),
        fc1(name + ".fc1", in, hidden, rng),
        fc2(name + ".fc2", hidden, out, rng),
        norm_out(name + ".norm_out", out) {}

  Eigen::Index in_features() const { return fc1.in_features(); }
  Eigen::Index out_features() const { return fc2.out_features(); }

  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> x) {
    if (x.cols() != in_features()) throw InvalidInput("projector: input width mismatch");
    if (input_norm) x = norm_in(tape, x);
    return norm_out(tape, fc2(tape, ops::gelu(fc1(tape, x))));
  }
  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> x) const {
    if (x.cols() != in_features()) throw InvalidInput("projector: input width mismatch");
    if (input_norm) x = norm_in(tape, x);
    return norm_out(tape, fc2(tape, ops::gelu(fc1(tape, x))));
  }

  void collect(ParameterList<Scalar>& out) {
    if (input_norm) norm_in.collect(out);
    fc1.collect(out);
    fc2.collect(out);
    norm_out.collect(out);
  }
};

/// FNV-1a over the raw bytes of every parameter value; order-sensitive.
template <typename Scalar>
std::uint64_t parameter_checksum(const ParameterList<Scalar>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto* p : params) {
    mix(p->name.data(), p->name.size());
    mix(p->value.data(), sizeof(Scalar) * static_cast<std::size_t>(p->value.size()));
  }
  return h;
}

template <typename Scalar>
std::size_t parameter_count(const ParameterList<Scalar>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template <typename Scalar>
void zero_grads(const ParameterList<Scalar>& params) {
  for (auto* p : params) p->zero_grad();
}

/// Name -> matrix snapshot, used by checkpoints.
template <typename Scalar>
std::map<std::string, Matrix<double>> snapshot(const ParameterList<Scalar>& params) {
  std::map<std::string, Matrix<double>> out;
  for (const auto* p : params) out[p->name] = p->value.template cast<double>();
  return out;
}

template <typename Scalar>
void restore(const ParameterList<Scalar>& params, const std::map<std::string, Matrix<double>>& values) {
  for (auto* p : params) {
    auto it = values.find(p->name);
    if (it == values.end()) throw CheckpointIncompatible("missing tensor '" + p->name + "'");
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      throw CheckpointIncompatible("tensor '" + p->name + "' has shape " + std::to_string(it->second.rows()) + "x" +
                                   std::to_string(it->second.cols()) + ", expected " +
                                   std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    }
    p->value = it->second.template cast<Scalar>();
  }
}

}  // namespace spai
