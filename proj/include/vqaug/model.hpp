#pragma once

// Toy top-down attention VQA classifier.
//
//   question  -> mean of word embeddings -> linear + tanh          h_q  [1 x H]
//   regions   -> (relu(v_k W_av + b_av) .* relu(h_q W_aq + b_aq)) w_s
//                -> softmax over K                                   att [1 x K]
//   attended  =  att * v                                             [1 x D]
//   joint     =  relu(attended W_v + b_v) .* relu(h_q W_f + b_f)     [1 x H]
//   answer    =  softmax(joint W_c + b_c)                            [1 x |A|]

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vqaug/autodiff.hpp"
#include "vqaug/tensor.hpp"

namespace vqaug {

struct ModelDims {
  std::size_t vocab_size = 0;
  std::size_t d_emb = 16;
  std::size_t d_hidden = 32;
  std::size_t regions = 6;       // K
  std::size_t feature_dim = 16;  // D
  std::size_t answers = 20;      // |A|

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

std::string describe(const ModelDims& dims);

/// Index of each tensor inside VqaModelParams, in checkpoint declaration order.
enum ParamIndex : std::size_t {
  kEmbedding = 0,
  kQuestionW,
  kQuestionB,
  kAttentionVisualW,
  kAttentionVisualB,
  kAttentionQuestionW,
  kAttentionQuestionB,
  kAttentionScore,
  kVisualW,
  kVisualB,
  kFusionW,
  kFusionB,
  kClassifierW,
  kClassifierB,
  kNumParams,
};

const char* param_name(std::size_t index);

class VqaModelParams {
 public:
  VqaModelParams() = default;
  /// Zero-filled parameters with shapes implied by dims.
  explicit VqaModelParams(const ModelDims& dims);

  /// Every entry uniform in [-scale, scale], drawn from seed.
  static VqaModelParams init(const ModelDims& dims, std::uint64_t seed, double scale = 0.1);

  const ModelDims& dims() const { return dims_; }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  std::span<Tensor> tensors() { return tensors_; }
  std::span<const Tensor> tensors() const { return tensors_; }
  std::size_t parameter_count() const;

  friend bool operator==(const VqaModelParams&, const VqaModelParams&) = default;

 private:
  ModelDims dims_;
  std::array<Tensor, kNumParams> tensors_;
};

struct Question {
  std::vector<std::size_t> tokens;
  std::string text;
};

/// Probability vector over the answer vocabulary.
struct AnswerDistribution {
  std::vector<double> probs;

  /// Lowest index among the maximal entries.
  std::size_t argmax() const;
};

std::size_t argmax_lowest(std::span<const double> values);

/// Parameter tensors placed on a tape as leaves.
struct BoundParams {
  std::array<NodeId, kNumParams> ids{};
};

BoundParams bind_params(Tape& tape, const VqaModelParams& params, bool trainable);

/// Intermediate nodes of one forward pass.
struct ForwardNodes {
  NodeId question = 0;   // h_q
  NodeId attention = 0;  // [1 x K]
  NodeId attended = 0;   // [1 x D]
  NodeId logits = 0;
  NodeId probs = 0;
};

/// Rejects empty questions, out-of-vocabulary tokens and visual shapes that
/// disagree with dims.
void validate_inputs(const ModelDims& dims, const Tensor& visual, const Question& q);
void validate_question(const ModelDims& dims, const Question& q);

NodeId encode_question_graph(Tape& tape, const BoundParams& bound, const Question& q);
ForwardNodes forward_graph(Tape& tape, const BoundParams& bound, const ModelDims& dims,
                           NodeId visual, const Question& q);
/// -log p(answer); the answer must index the probability row.
NodeId loss_graph(Tape& tape, NodeId probs, std::size_t answer);

Tensor encode_question(const VqaModelParams& params, const Question& q);
AnswerDistribution forward(const VqaModelParams& params, const Tensor& visual, const Question& q);
/// Attention weights over the K regions.
std::vector<double> attention_weights(const VqaModelParams& params, const Tensor& visual,
                                      const Question& q);
double loss(const VqaModelParams& params, const Tensor& visual, const Question& q,
            std::size_t answer);
std::size_t predict(const VqaModelParams& params, const Tensor& visual, const Question& q);

struct VisualGradient {
  double loss = 0.0;
  Tensor grad;  // same shape as the visual features
};

/// Loss and its gradient with respect to the visual features, parameters fixed.
VisualGradient visual_gradient(const VqaModelParams& params, const Tensor& visual,
                               const Question& q, std::size_t answer);

struct ParamGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;  // one per parameter tensor
};

ParamGradient parameter_gradient(const VqaModelParams& params, const Tensor& visual,
                                 const Question& q, std::size_t answer);

/// Everything needed to restore a trained model with its vocabularies.
struct Checkpoint {
  VqaModelParams params;
  std::vector<std::string> question_vocab;
  std::vector<std::string> answer_vocab;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vqaug
