#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "network.hpp"

namespace mopinnenkf {

/// Scalar computation graph over network evaluations. Supported primitives:
/// evaluate (via add_eval/field), +, -, *, /, square, mean, plus constant and
/// free-scalar leaves. Nodes only reference earlier nodes, so the graph is a
/// DAG by construction; backward() yields the exact reverse-mode gradient of
/// any node with respect to the network parameters and the free scalars.
class LossGraph {
 public:
  using Node = int;

  LossGraph(const NetworkArchitecture& arch, std::span<const double> params)
      : arch_(&arch), params_(params) {}

  Node constant(double v) { return push(Op::constant, -1, -1, v); }

  /// Free scalar input (e.g. a physics coefficient); its adjoint is reported
  /// under `slot` after backward().
  Node scalar_input(double v, int slot) {
    const Node n = push(Op::input, slot, -1, v);
    return n;
  }

  /// Registers a network evaluation point and runs its forward pass.
  int add_eval(double x, double t, unsigned mask) {
    EvalRec rec;
    rec.x = x;
    rec.t = t;
    rec.mask = normalize_mask(mask);
    NetWorkspace ws;
    forward_tracked(*arch_, params_, x, t, rec.mask, ws);
    const int last = arch_->neuron_count() - 1;
    rec.value[0] = ws.av[last];
    rec.value[1] = ws.ax[last];
    rec.value[2] = ws.axx[last];
    rec.value[3] = ws.at[last];
    evals_.push_back(rec);
    return static_cast<int>(evals_.size()) - 1;
  }

  Node field(int eval_id, Field f) {
    if (eval_id < 0 || eval_id >= static_cast<int>(evals_.size()))
      throw std::invalid_argument("field: unknown evaluation id");
    const auto& rec = evals_[static_cast<std::size_t>(eval_id)];
    if (f != Field::u && !(rec.mask & field_mask(f)))
      throw std::invalid_argument("field: derivative not in the evaluation mask");
    return push(Op::leaf, eval_id, static_cast<int>(f), rec.value[static_cast<int>(f)]);
  }

  Node add(Node a, Node b) { return push(Op::add, check(a), check(b), value(a) + value(b)); }
  Node sub(Node a, Node b) { return push(Op::sub, check(a), check(b), value(a) - value(b)); }
  Node mul(Node a, Node b) { return push(Op::mul, check(a), check(b), value(a) * value(b)); }
  Node div(Node a, Node b) { return push(Op::div, check(a), check(b), value(a) / value(b)); }
  Node neg(Node a) { return sub(constant(0.0), a); }
  Node square(Node a) { return push(Op::square, check(a), -1, value(a) * value(a)); }

  Node mean(std::span<const Node> terms) {
    if (terms.empty()) throw std::invalid_argument("mean: empty term list");
    double s = 0.0;
    const int off = static_cast<int>(children_.size());
    for (Node t : terms) {
      s += value(check(t));
      children_.push_back(t);
    }
    Node n = push(Op::mean, off, static_cast<int>(terms.size()), s / static_cast<double>(terms.size()));
    return n;
  }

  double value(Node n) const {
    if (n < 0 || n >= static_cast<int>(nodes_.size())) throw std::invalid_argument("unknown node id");
    return nodes_[static_cast<std::size_t>(n)].value;
  }

  /// Reverse pass from `root`. Afterwards param_gradient(), slot_gradient()
  /// and adjoint() are valid.
  void backward(Node root) {
    check(root);
    adjoints_.assign(nodes_.size(), 0.0);
    adjoints_[static_cast<std::size_t>(root)] = 1.0;
    std::vector<std::array<double, 4>> seeds(evals_.size(), {0.0, 0.0, 0.0, 0.0});
    slot_grad_.clear();
    for (int id = root; id >= 0; --id) {
      const auto& nd = nodes_[static_cast<std::size_t>(id)];
      const double a = adjoints_[static_cast<std::size_t>(id)];
      if (a == 0.0) continue;
      switch (nd.op) {
        case Op::constant: break;
        case Op::input: slot_grad_[nd.a] += a; break;
        case Op::leaf: seeds[static_cast<std::size_t>(nd.a)][nd.b] += a; break;
        case Op::add:
          adjoints_[static_cast<std::size_t>(nd.a)] += a;
          adjoints_[static_cast<std::size_t>(nd.b)] += a;
          break;
        case Op::sub:
          adjoints_[static_cast<std::size_t>(nd.a)] += a;
          adjoints_[static_cast<std::size_t>(nd.b)] -= a;
          break;
        case Op::mul:
          adjoints_[static_cast<std::size_t>(nd.a)] += a * nodes_[static_cast<std::size_t>(nd.b)].value;
          adjoints_[static_cast<std::size_t>(nd.b)] += a * nodes_[static_cast<std::size_t>(nd.a)].value;
          break;
        case Op::div: {
          const double bv = nodes_[static_cast<std::size_t>(nd.b)].value;
          adjoints_[static_cast<std::size_t>(nd.a)] += a / bv;
          adjoints_[static_cast<std::size_t>(nd.b)] -=
              a * nodes_[static_cast<std::size_t>(nd.a)].value / (bv * bv);
          break;
        }
        case Op::square:
          adjoints_[static_cast<std::size_t>(nd.a)] += a * 2.0 * nodes_[static_cast<std::size_t>(nd.a)].value;
          break;
        case Op::mean: {
          const double an = a / static_cast<double>(nd.b);
          for (int k = 0; k < nd.b; ++k)
            adjoints_[static_cast<std::size_t>(children_[static_cast<std::size_t>(nd.a + k)])] += an;
          break;
        }
      }
    }
    param_grad_.assign(params_.size(), 0.0);
    NetWorkspace ws;
    for (std::size_t e = 0; e < evals_.size(); ++e) {
      const auto& s = seeds[e];
      if (s[0] == 0.0 && s[1] == 0.0 && s[2] == 0.0 && s[3] == 0.0) continue;
      const auto& rec = evals_[e];
      forward_tracked(*arch_, params_, rec.x, rec.t, rec.mask, ws);
      backward_tracked(*arch_, params_, ws, rec.mask, s[0], s[1], s[2], s[3], param_grad_);
    }
  }

  const std::vector<double>& param_gradient() const { return param_grad_; }

  double slot_gradient(int slot) const {
    const auto it = slot_grad_.find(slot);
    return it == slot_grad_.end() ? 0.0 : it->second;
  }

  double adjoint(Node n) const {
    if (n < 0 || n >= static_cast<int>(adjoints_.size())) throw std::invalid_argument("unknown node id");
    return adjoints_[static_cast<std::size_t>(n)];
  }

 private:
  enum class Op { constant, input, leaf, add, sub, mul, div, square, mean };

  struct NodeRec {
    Op op;
    int a, b;
    double value;
  };

  struct EvalRec {
    double x, t;
    unsigned mask;
    std::array<double, 4> value;
  };

  Node push(Op op, int a, int b, double v) {
    nodes_.push_back({op, a, b, v});
    return static_cast<Node>(nodes_.size()) - 1;
  }

  Node check(Node n) const {
    if (n < 0 || n >= static_cast<int>(nodes_.size())) throw std::invalid_argument("unknown node id");
    return n;
  }

  const NetworkArchitecture* arch_;
  std::span<const double> params_;
  std::vector<NodeRec> nodes_;
  std::vector<Node> children_;
  std::vector<EvalRec> evals_;
  std::vector<double> adjoints_;
  std::vector<double> param_grad_;
  std::map<int, double> slot_grad_;
};

/// Gradient of a scalar loss composed inside `build` with respect to all
/// network parameters.
template <class Builder>
std::vector<double> grad_loss(const NetworkArchitecture& arch, std::span<const double> params,
                              Builder&& build) {
  LossGraph g(arch, params);
  const LossGraph::Node root = build(g);
  g.backward(root);
  return g.param_gradient();
}

}  // namespace mopinnenkf
