// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every intermediate value of one forward pass. Each recorded
// node owns its value, a lazily allocated gradient and a closure that pushes
// its gradient back to its inputs. Nodes are appended in evaluation order, so
// the backward sweep is a plain reverse iteration.
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "i2pref/error.hpp"

namespace i2pref::ag {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  Eigen::Index size() const { return value.size(); }
};

/// Owns the learned tensors of a model in declaration order.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter<T>& add(const std::string& name, Mat<T> init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->grad = Mat<T>::Zero(init.rows(), init.cols());
    p->value = std::move(init);
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.setZero();
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Mat<T>& value() const { return tape->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat<T>& grad_out)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var<T> constant(Mat<T> value) { return push(std::move(value), false, nullptr, nullptr); }

  Var<T> parameter(Parameter<T>& p) { return push(p.value, record_, nullptr, &p); }

  /// Records a derived node. `backward` is kept only when some input needs a gradient.
  Var<T> record(Mat<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
    return record(std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
  }
  Var<T> record(Mat<T> value, const std::vector<Var<T>>& inputs, Backward backward) {
    bool needs = false;
    if (record_)
      for (const auto& v : inputs) needs = needs || nodes_[v.id].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr, nullptr);
  }

  /// True when any of the inputs participates in differentiation; ops use it to
  /// skip building backward closures.
  bool needs_grad(std::initializer_list<Var<T>> inputs) const {
    if (!record_) return false;
    for (const auto& v : inputs)
      if (nodes_[v.id].requires_grad) return true;
    return false;
  }
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }

  const Mat<T>& value(Var<T> v) const { return nodes_[v.id].value; }

  /// Gradient buffer of a node, zero-filled on first access.
  Mat<T>& grad(Var<T> v) {
    auto& n = nodes_[v.id];
    if (n.grad.size() == 0) n.grad = Mat<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool has_grad(Var<T> v) const { return nodes_[v.id].grad.size() != 0; }

  /// Seeds d(out)/d(out) = seed (out must be 1x1) and sweeps backwards.
  /// Parameter gradients are accumulated into Parameter::grad.
  void backward(Var<T> out, T seed = T(1)) {
    if (value(out).size() != 1) throw InvalidInput("backward: output must be a scalar");
    if (!record_) throw InvalidInput("backward: tape was not recording");
    grad(out)(0, 0) += seed;
    for (std::size_t i = out.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param) n.param->grad += n.grad;
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Mat<T> value;
    Mat<T> grad;
    bool requires_grad = false;
    Backward backward;
    Parameter<T>* param = nullptr;
  };

  Var<T> push(Mat<T> value, bool requires_grad, Backward backward, Parameter<T>* param) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    n.param = param;
    nodes_.push_back(std::move(n));
    return Var<T>{this, nodes_.size() - 1};
  }

  // deque keeps references returned by value()/grad() valid while recording.
  std::deque<Node> nodes_;
  bool record_;
};

}  // namespace i2pref::ag
