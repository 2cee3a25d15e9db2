#include "vqaug/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vqaug {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kRelu: return "relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLog: return "log";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kEmbedding: return "embedding";
    case OpKind::kConcat: return "concat";
    case OpKind::kScale: return "scale";
    case OpKind::kTranspose: return "transpose";
  }
  return "?";
}

namespace {

std::size_t arity(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return 0;
    case OpKind::kMatMul:
    case OpKind::kAdd:
    case OpKind::kMul:
    case OpKind::kConcat: return 2;
    default: return 1;
  }
}

[[noreturn]] void shape_mismatch(OpKind kind, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op_name(kind)) + ": incompatible shapes " +
                   shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
}

void require_matrix(OpKind kind, const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op_name(kind)) + ": expected a rank-2 tensor, got " +
                     shape_to_string(t.shape()));
  }
}

// a [m x k] * b [k x n], optionally with either side transposed.
Tensor gemm(const Tensor& a, bool ta, const Tensor& b, bool tb) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t n = tb ? b.rows() : b.cols();
  Tensor out({m, n});
  const std::size_t ac = a.cols();
  const std::size_t bc = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? a[p * ac + i] : a[i * ac + p];
      if (av == 0.0) continue;
      double* orow = &out[i * n];
      if (tb) {
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * b[j * bc + p];
      } else {
        const double* brow = &b[p * bc];
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
  return out;
}

bool row_broadcast(const Tensor& a, const Tensor& b) {
  return b.rank() == 2 && a.rank() == 2 && b.rows() == 1 && a.cols() == b.cols() &&
         a.rows() > 1;
}

void accumulate(Tensor& slot, const Tensor& contribution) {
  if (slot.empty()) {
    slot = contribution;
    return;
  }
  for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += contribution[i];
}

}  // namespace

Tensor primitive_forward(OpKind kind, std::span<const Tensor* const> inputs,
                         const OpAttrs& attrs) {
  if (inputs.size() != arity(kind)) {
    throw std::invalid_argument(std::string(op_name(kind)) + ": expected " +
                                std::to_string(arity(kind)) + " inputs, got " +
                                std::to_string(inputs.size()));
  }
  switch (kind) {
    case OpKind::kLeaf:
      throw std::invalid_argument("leaf is not a computed primitive");

    case OpKind::kMatMul: {
      const Tensor& a = *inputs[0];
      const Tensor& b = *inputs[1];
      if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) shape_mismatch(kind, a, b);
      return gemm(a, false, b, false);
    }

    case OpKind::kAdd:
    case OpKind::kMul: {
      const Tensor& a = *inputs[0];
      const Tensor& b = *inputs[1];
      if (a.same_shape(b)) {
        Tensor out = a;
        if (kind == OpKind::kAdd) {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
        } else {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
        }
        return out;
      }
      if (kind == OpKind::kAdd && row_broadcast(a, b)) {
        Tensor out = a;
        const std::size_t n = a.cols();
        for (std::size_t r = 0; r < a.rows(); ++r) {
          for (std::size_t c = 0; c < n; ++c) out[r * n + c] += b[c];
        }
        return out;
      }
      shape_mismatch(kind, a, b);
    }

    case OpKind::kRelu: {
      Tensor out = *inputs[0];
      for (auto& x : out.values()) x = x > 0.0 ? x : 0.0;
      return out;
    }

    case OpKind::kTanh: {
      Tensor out = *inputs[0];
      for (auto& x : out.values()) x = std::tanh(x);
      return out;
    }

    case OpKind::kSoftmax: {
      Tensor out = *inputs[0];
      const std::size_t n = out.cols();
      for (std::size_t r = 0; r < out.rows(); ++r) {
        double* row = &out[r * n];
        const double peak = *std::max_element(row, row + n);
        double total = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          row[c] = std::exp(row[c] - peak);
          total += row[c];
        }
        for (std::size_t c = 0; c < n; ++c) row[c] /= total;
      }
      return out;
    }

    case OpKind::kLog: {
      Tensor out = *inputs[0];
      for (auto& x : out.values()) {
        if (!(x > 0.0)) {
          throw std::domain_error("log: non-positive input " + std::to_string(x));
        }
        x = std::log(x);
      }
      return out;
    }

    case OpKind::kSum:
    case OpKind::kMean: {
      const Tensor& a = *inputs[0];
      if (attrs.reduction == Reduction::kAll) {
        double total = 0.0;
        for (double x : a.values()) total += x;
        if (kind == OpKind::kMean) total /= static_cast<double>(a.size());
        return Tensor::scalar(total);
      }
      require_matrix(kind, a);
      Tensor out({1, a.cols()});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) out[c] += a.at(r, c);
      }
      if (kind == OpKind::kMean) {
        for (auto& x : out.values()) x /= static_cast<double>(a.rows());
      }
      return out;
    }

    case OpKind::kEmbedding: {
      const Tensor& table = *inputs[0];
      require_matrix(kind, table);
      if (attrs.indices.empty()) throw ShapeError("embedding: empty index list");
      const std::size_t d = table.cols();
      Tensor out({attrs.indices.size(), d});
      for (std::size_t i = 0; i < attrs.indices.size(); ++i) {
        const std::size_t idx = attrs.indices[i];
        if (idx >= table.rows()) {
          throw ShapeError("embedding: index " + std::to_string(idx) + " out of range for table " +
                           shape_to_string(table.shape()));
        }
        std::copy_n(&table[idx * d], d, &out[i * d]);
      }
      return out;
    }

    case OpKind::kConcat: {
      const Tensor& a = *inputs[0];
      const Tensor& b = *inputs[1];
      if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) shape_mismatch(kind, a, b);
      const std::size_t ca = a.cols();
      const std::size_t cb = b.cols();
      Tensor out({a.rows(), ca + cb});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        std::copy_n(&a[r * ca], ca, &out[r * (ca + cb)]);
        std::copy_n(&b[r * cb], cb, &out[r * (ca + cb) + ca]);
      }
      return out;
    }

    case OpKind::kScale: {
      Tensor out = *inputs[0];
      for (auto& x : out.values()) x *= attrs.scale;
      return out;
    }

    case OpKind::kTranspose: {
      const Tensor& a = *inputs[0];
      require_matrix(kind, a);
      Tensor out({a.cols(), a.rows()});
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
      }
      return out;
    }
  }
  throw std::invalid_argument("unknown op kind");
}

GradientMap::GradientMap(std::vector<NodeId> leaves, std::vector<Tensor> grads)
    : leaves_(std::move(leaves)), grads_(std::move(grads)) {
  NodeId top = 0;
  for (auto id : leaves_) top = std::max(top, id + 1);
  slot_.assign(top, 0);
  for (std::size_t i = 0; i < leaves_.size(); ++i) slot_[leaves_[i]] = i + 1;
}

bool GradientMap::contains(NodeId leaf) const {
  return leaf < slot_.size() && slot_[leaf] != 0;
}

const Tensor& GradientMap::at(NodeId leaf) const {
  if (!contains(leaf)) throw std::out_of_range("node " + std::to_string(leaf) + " is not a leaf");
  return grads_[slot_[leaf] - 1];
}

NodeId Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.kind = OpKind::kLeaf;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Tape::apply(OpKind kind, std::span<const NodeId> inputs, OpAttrs attrs) {
  std::vector<const Tensor*> values;
  values.reserve(inputs.size());
  bool grad = false;
  for (NodeId id : inputs) {
    if (id >= nodes_.size()) throw std::out_of_range("unknown node " + std::to_string(id));
    values.push_back(&nodes_[id].value);
    grad = grad || nodes_[id].requires_grad;
  }
  Node node;
  node.value = primitive_forward(kind, values, attrs);
  node.kind = kind;
  node.inputs.assign(inputs.begin(), inputs.end());
  node.attrs = std::move(attrs);
  node.requires_grad = grad;
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Tape::matmul(NodeId a, NodeId b) { return apply(OpKind::kMatMul, std::array{a, b}); }
NodeId Tape::add(NodeId a, NodeId b) { return apply(OpKind::kAdd, std::array{a, b}); }
NodeId Tape::mul(NodeId a, NodeId b) { return apply(OpKind::kMul, std::array{a, b}); }
NodeId Tape::relu(NodeId a) { return apply(OpKind::kRelu, std::array{a}); }
NodeId Tape::tanh(NodeId a) { return apply(OpKind::kTanh, std::array{a}); }
NodeId Tape::softmax(NodeId a) { return apply(OpKind::kSoftmax, std::array{a}); }
NodeId Tape::log(NodeId a) { return apply(OpKind::kLog, std::array{a}); }
NodeId Tape::concat(NodeId a, NodeId b) { return apply(OpKind::kConcat, std::array{a, b}); }
NodeId Tape::transpose(NodeId a) { return apply(OpKind::kTranspose, std::array{a}); }

NodeId Tape::sum(NodeId a, Reduction r) {
  OpAttrs attrs;
  attrs.reduction = r;
  return apply(OpKind::kSum, std::array{a}, std::move(attrs));
}

NodeId Tape::mean(NodeId a, Reduction r) {
  OpAttrs attrs;
  attrs.reduction = r;
  return apply(OpKind::kMean, std::array{a}, std::move(attrs));
}

NodeId Tape::embedding(NodeId table, std::vector<std::size_t> indices) {
  OpAttrs attrs;
  attrs.indices = std::move(indices);
  return apply(OpKind::kEmbedding, std::array{table}, std::move(attrs));
}

NodeId Tape::scale(NodeId a, double factor) {
  OpAttrs attrs;
  attrs.scale = factor;
  return apply(OpKind::kScale, std::array{a}, std::move(attrs));
}

GradientMap Tape::backward(NodeId root) const {
  if (root >= nodes_.size()) throw std::out_of_range("unknown root node " + std::to_string(root));
  if (nodes_[root].value.size() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " +
                     shape_to_string(nodes_[root].value.shape()));
  }
  std::vector<Tensor> grads(root + 1);
  grads[root] = Tensor(nodes_[root].value.shape(), 1.0);
  for (NodeId id = root + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (node.kind == OpKind::kLeaf || grads[id].empty() || !node.requires_grad) continue;
    propagate(node, grads[id], grads);
  }

  std::vector<NodeId> leaves;
  std::vector<Tensor> out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].kind != OpKind::kLeaf) continue;
    leaves.push_back(id);
    if (id <= root && !grads[id].empty() && nodes_[id].requires_grad) {
      out.push_back(std::move(grads[id]));
    } else {
      out.emplace_back(nodes_[id].value.shape(), 0.0);
    }
  }
  return GradientMap(std::move(leaves), std::move(out));
}

void Tape::propagate(const Node& node, const Tensor& g, std::vector<Tensor>& grads) const {
  auto wants = [&](std::size_t i) { return nodes_[node.inputs[i]].requires_grad; };
  auto input = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].value; };
  auto push = [&](std::size_t i, const Tensor& contribution) {
    accumulate(grads[node.inputs[i]], contribution);
  };

  switch (node.kind) {
    case OpKind::kLeaf:
      return;

    case OpKind::kMatMul:
      if (wants(0)) push(0, gemm(g, false, input(1), true));
      if (wants(1)) push(1, gemm(input(0), true, g, false));
      return;

    case OpKind::kAdd: {
      if (wants(0)) push(0, g);
      if (wants(1)) {
        if (input(1).same_shape(g)) {
          push(1, g);
        } else {
          Tensor reduced(input(1).shape());
          const std::size_t n = g.cols();
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < n; ++c) reduced[c] += g[r * n + c];
          }
          push(1, reduced);
        }
      }
      return;
    }

    case OpKind::kMul:
      for (std::size_t i = 0; i < 2; ++i) {
        if (!wants(i)) continue;
        Tensor d = g;
        const Tensor& other = input(1 - i);
        for (std::size_t k = 0; k < d.size(); ++k) d[k] *= other[k];
        push(i, d);
      }
      return;

    case OpKind::kRelu: {
      Tensor d = g;
      const Tensor& x = input(0);
      for (std::size_t k = 0; k < d.size(); ++k) {
        if (!(x[k] > 0.0)) d[k] = 0.0;
      }
      push(0, d);
      return;
    }

    case OpKind::kTanh: {
      Tensor d = g;
      for (std::size_t k = 0; k < d.size(); ++k) {
        const double y = node.value[k];
        d[k] *= 1.0 - y * y;
      }
      push(0, d);
      return;
    }

    case OpKind::kSoftmax: {
      Tensor d = g;
      const Tensor& y = node.value;
      const std::size_t n = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
        for (std::size_t c = 0; c < n; ++c) d[r * n + c] = y[r * n + c] * (g[r * n + c] - dot);
      }
      push(0, d);
      return;
    }

    case OpKind::kLog: {
      Tensor d = g;
      const Tensor& x = input(0);
      for (std::size_t k = 0; k < d.size(); ++k) d[k] /= x[k];
      push(0, d);
      return;
    }

    case OpKind::kSum:
    case OpKind::kMean: {
      const Tensor& x = input(0);
      Tensor d(x.shape());
      if (node.attrs.reduction == Reduction::kAll) {
        double v = g.item();
        if (node.kind == OpKind::kMean) v /= static_cast<double>(x.size());
        for (auto& e : d.values()) e = v;
      } else {
        const double div = node.kind == OpKind::kMean ? static_cast<double>(x.rows()) : 1.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
          for (std::size_t c = 0; c < x.cols(); ++c) d.at(r, c) = g[c] / div;
        }
      }
      push(0, d);
      return;
    }

    case OpKind::kEmbedding: {
      const Tensor& table = input(0);
      Tensor d(table.shape());
      const std::size_t width = table.cols();
      for (std::size_t i = 0; i < node.attrs.indices.size(); ++i) {
        const std::size_t idx = node.attrs.indices[i];
        for (std::size_t c = 0; c < width; ++c) d[idx * width + c] += g[i * width + c];
      }
      push(0, d);
      return;
    }

    case OpKind::kConcat: {
      const std::size_t ca = input(0).cols();
      const std::size_t cb = input(1).cols();
      const std::size_t rows = g.rows();
      if (wants(0)) {
        Tensor d(input(0).shape());
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(&g[r * (ca + cb)], ca, &d[r * ca]);
        }
        push(0, d);
      }
      if (wants(1)) {
        Tensor d(input(1).shape());
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(&g[r * (ca + cb) + ca], cb, &d[r * cb]);
        }
        push(1, d);
      }
      return;
    }

    case OpKind::kScale: {
      Tensor d = g;
      for (auto& e : d.values()) e *= node.attrs.scale;
      push(0, d);
      return;
    }

    case OpKind::kTranspose: {
      Tensor d(input(0).shape());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) d.at(c, r) = g.at(r, c);
      }
      push(0, d);
      return;
    }
  }
}

}  // namespace vqaug
