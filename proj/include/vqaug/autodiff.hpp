#pragma once

// Define-by-run reverse-mode differentiation over dense Tensors.
//
// A Tape records every primitive applied to it in creation order, so node ids
// are already a topological order. backward() walks the tape once in reverse
// from a scalar root.

#include <cstddef>
#include <span>
#include <vector>

#include "vqaug/tensor.hpp"

namespace vqaug {

using NodeId = std::size_t;

enum class OpKind {
  kLeaf,
  kMatMul,
  kAdd,        // b may be a single row broadcast over the rows of a
  kMul,        // elementwise
  kRelu,
  kTanh,
  kSoftmax,    // over the last axis, row by row
  kLog,
  kSum,
  kMean,
  kEmbedding,  // rows of a table selected by OpAttrs::indices
  kConcat,     // along the last axis
  kScale,      // multiply by OpAttrs::scale
  kTranspose,
};

const char* op_name(OpKind kind);

enum class Reduction { kAll, kRows };

struct OpAttrs {
  double scale = 1.0;
  Reduction reduction = Reduction::kAll;  // kSum / kMean
  std::vector<std::size_t> indices;       // kEmbedding
};

/// Pure value computation of one primitive. Throws ShapeError on
/// incompatible inputs and std::domain_error for log of a non-positive entry.
Tensor primitive_forward(OpKind kind, std::span<const Tensor* const> inputs,
                         const OpAttrs& attrs = {});

/// Gradients of a scalar root with respect to every leaf of a tape.
class GradientMap {
 public:
  GradientMap() = default;
  GradientMap(std::vector<NodeId> leaves, std::vector<Tensor> grads);

  const Tensor& at(NodeId leaf) const;
  bool contains(NodeId leaf) const;
  std::span<const NodeId> leaves() const { return leaves_; }

 private:
  std::vector<NodeId> leaves_;
  std::vector<Tensor> grads_;  // indexed by position in leaves_
  std::vector<std::size_t> slot_;  // node id -> position + 1, 0 when absent
};

class Tape {
 public:
  NodeId leaf(Tensor value, bool requires_grad = true);
  NodeId constant(Tensor value) { return leaf(std::move(value), false); }

  NodeId apply(OpKind kind, std::span<const NodeId> inputs, OpAttrs attrs = {});

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId tanh(NodeId a);
  NodeId softmax(NodeId a);
  NodeId log(NodeId a);
  NodeId sum(NodeId a, Reduction r = Reduction::kAll);
  NodeId mean(NodeId a, Reduction r = Reduction::kAll);
  NodeId embedding(NodeId table, std::vector<std::size_t> indices);
  NodeId concat(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId transpose(NodeId a);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  std::span<const NodeId> inputs(NodeId id) const { return nodes_.at(id).inputs; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// d(root)/d(leaf) for every leaf; leaves the root does not depend on, or
  /// that were created as constants, get zero tensors. Root must hold exactly
  /// one element.
  GradientMap backward(NodeId root) const;

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<NodeId> inputs;
    OpAttrs attrs;
    Tensor value;
    bool requires_grad = false;
  };

  void propagate(const Node& node, const Tensor& grad_out,
                 std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
};

}  // namespace vqaug
