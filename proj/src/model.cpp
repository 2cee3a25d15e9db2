#include "vqaug/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vqaug/binary_io.hpp"
#include "vqaug/rng.hpp"

namespace vqaug {

namespace {

constexpr const char* kCheckpointMagic = "VQAUG-CHECKPOINT 1";

std::array<Shape, kNumParams> param_shapes(const ModelDims& d) {
  const std::size_t h = d.d_hidden;
  return {{
      {d.vocab_size, d.d_emb},
      {d.d_emb, h},
      {1, h},
      {d.feature_dim, h},
      {1, h},
      {h, h},
      {1, h},
      {h, 1},
      {d.feature_dim, h},
      {1, h},
      {h, h},
      {1, h},
      {h, d.answers},
      {1, d.answers},
  }};
}

void check_dims(const ModelDims& d) {
  if (d.vocab_size == 0 || d.d_emb == 0 || d.d_hidden == 0 || d.regions == 0 ||
      d.feature_dim == 0 || d.answers == 0) {
    throw std::invalid_argument("model dims must all be positive: " + describe(d));
  }
}

}  // namespace

std::string describe(const ModelDims& d) {
  std::ostringstream out;
  out << "vocab=" << d.vocab_size << " d_emb=" << d.d_emb << " d_hidden=" << d.d_hidden
      << " K=" << d.regions << " D=" << d.feature_dim << " answers=" << d.answers;
  return out.str();
}

const char* param_name(std::size_t index) {
  static constexpr const char* kNames[kNumParams] = {
      "embedding",          "question_w",           "question_b",
      "attention_visual_w", "attention_visual_b",   "attention_question_w",
      "attention_question_b", "attention_score",    "visual_w",
      "visual_b",           "fusion_w",             "fusion_b",
      "classifier_w",       "classifier_b"};
  return index < kNumParams ? kNames[index] : "?";
}

VqaModelParams::VqaModelParams(const ModelDims& dims) : dims_(dims) {
  check_dims(dims);
  const auto shapes = param_shapes(dims);
  for (std::size_t i = 0; i < kNumParams; ++i) tensors_[i] = Tensor(shapes[i]);
}

VqaModelParams VqaModelParams::init(const ModelDims& dims, std::uint64_t seed, double scale) {
  VqaModelParams params(dims);
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(-scale, scale);
  for (auto& t : params.tensors_) {
    for (auto& x : t.values()) x = uniform(rng);
  }
  return params;
}

std::size_t VqaModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

std::size_t argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t AnswerDistribution::argmax() const { return argmax_lowest(probs); }

BoundParams bind_params(Tape& tape, const VqaModelParams& params, bool trainable) {
  BoundParams bound;
  for (std::size_t i = 0; i < kNumParams; ++i) bound.ids[i] = tape.leaf(params[i], trainable);
  return bound;
}

void validate_question(const ModelDims& dims, const Question& q) {
  if (q.tokens.empty()) throw std::invalid_argument("empty question");
  for (auto t : q.tokens) {
    if (t >= dims.vocab_size) {
      throw std::out_of_range("token id " + std::to_string(t) + " outside vocabulary of size " +
                              std::to_string(dims.vocab_size));
    }
  }
}

void validate_inputs(const ModelDims& dims, const Tensor& visual, const Question& q) {
  validate_question(dims, q);
  if (visual.rank() != 2 || visual.rows() != dims.regions || visual.cols() != dims.feature_dim) {
    throw ShapeError("visual features " + shape_to_string(visual.shape()) +
                     " do not match model regions K=" + std::to_string(dims.regions) +
                     ", D=" + std::to_string(dims.feature_dim));
  }
}

NodeId encode_question_graph(Tape& tape, const BoundParams& bound, const Question& q) {
  const NodeId words = tape.embedding(bound.ids[kEmbedding], q.tokens);
  const NodeId pooled = tape.mean(words, Reduction::kRows);
  const NodeId projected = tape.add(tape.matmul(pooled, bound.ids[kQuestionW]),
                                    bound.ids[kQuestionB]);
  return tape.tanh(projected);
}

ForwardNodes forward_graph(Tape& tape, const BoundParams& bound, const ModelDims& dims,
                           NodeId visual, const Question& q) {
  validate_inputs(dims, tape.value(visual), q);
  ForwardNodes out;
  out.question = encode_question_graph(tape, bound, q);

  // Top-down attention: score each region from its projection gated by the
  // question projection.
  const NodeId region_proj = tape.relu(
      tape.add(tape.matmul(visual, bound.ids[kAttentionVisualW]), bound.ids[kAttentionVisualB]));
  const NodeId question_proj = tape.relu(tape.add(
      tape.matmul(out.question, bound.ids[kAttentionQuestionW]), bound.ids[kAttentionQuestionB]));
  const NodeId ones = tape.constant(Tensor({dims.regions, 1}, 1.0));
  const NodeId hidden = tape.mul(region_proj, tape.matmul(ones, question_proj));
  const NodeId scores = tape.transpose(tape.matmul(hidden, bound.ids[kAttentionScore]));
  out.attention = tape.softmax(scores);
  out.attended = tape.matmul(out.attention, visual);

  const NodeId vis = tape.relu(
      tape.add(tape.matmul(out.attended, bound.ids[kVisualW]), bound.ids[kVisualB]));
  const NodeId que = tape.relu(
      tape.add(tape.matmul(out.question, bound.ids[kFusionW]), bound.ids[kFusionB]));
  const NodeId fused = tape.mul(vis, que);
  out.logits = tape.add(tape.matmul(fused, bound.ids[kClassifierW]), bound.ids[kClassifierB]);
  out.probs = tape.softmax(out.logits);
  return out;
}

NodeId loss_graph(Tape& tape, NodeId probs, std::size_t answer) {
  const Tensor& p = tape.value(probs);
  if (answer >= p.size()) {
    throw std::out_of_range("answer id " + std::to_string(answer) +
                            " outside answer vocabulary of size " + std::to_string(p.size()));
  }
  Tensor one_hot(p.shape());
  one_hot[answer] = 1.0;
  const NodeId picked = tape.sum(tape.mul(probs, tape.constant(std::move(one_hot))));
  return tape.scale(tape.log(picked), -1.0);
}

Tensor encode_question(const VqaModelParams& params, const Question& q) {
  validate_question(params.dims(), q);
  Tape tape;
  const auto bound = bind_params(tape, params, false);
  return tape.value(encode_question_graph(tape, bound, q));
}

namespace {

struct Evaluated {
  Tape tape;
  ForwardNodes nodes;
};

Evaluated evaluate(const VqaModelParams& params, const Tensor& visual, const Question& q) {
  Evaluated e;
  const auto bound = bind_params(e.tape, params, false);
  const NodeId v = e.tape.constant(visual);
  e.nodes = forward_graph(e.tape, bound, params.dims(), v, q);
  return e;
}

}  // namespace

AnswerDistribution forward(const VqaModelParams& params, const Tensor& visual, const Question& q) {
  auto e = evaluate(params, visual, q);
  const auto& p = e.tape.value(e.nodes.probs);
  return {std::vector<double>(p.values().begin(), p.values().end())};
}

std::vector<double> attention_weights(const VqaModelParams& params, const Tensor& visual,
                                      const Question& q) {
  auto e = evaluate(params, visual, q);
  const auto& a = e.tape.value(e.nodes.attention);
  return {a.values().begin(), a.values().end()};
}

double loss(const VqaModelParams& params, const Tensor& visual, const Question& q,
            std::size_t answer) {
  auto e = evaluate(params, visual, q);
  return e.tape.value(loss_graph(e.tape, e.nodes.probs, answer)).item();
}

std::size_t predict(const VqaModelParams& params, const Tensor& visual, const Question& q) {
  return forward(params, visual, q).argmax();
}

VisualGradient visual_gradient(const VqaModelParams& params, const Tensor& visual,
                               const Question& q, std::size_t answer) {
  Tape tape;
  const auto bound = bind_params(tape, params, false);
  const NodeId v = tape.leaf(visual, true);
  const auto nodes = forward_graph(tape, bound, params.dims(), v, q);
  const NodeId root = loss_graph(tape, nodes.probs, answer);
  auto grads = tape.backward(root);
  return {tape.value(root).item(), grads.at(v)};
}

ParamGradient parameter_gradient(const VqaModelParams& params, const Tensor& visual,
                                 const Question& q, std::size_t answer) {
  Tape tape;
  const auto bound = bind_params(tape, params, true);
  const NodeId v = tape.constant(visual);
  const auto nodes = forward_graph(tape, bound, params.dims(), v, q);
  const NodeId root = loss_graph(tape, nodes.probs, answer);
  auto grads = tape.backward(root);
  ParamGradient out;
  out.loss = tape.value(root).item();
  for (auto id : bound.ids) out.grads.push_back(grads.at(id));
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto& d = checkpoint.params.dims();
  if (checkpoint.question_vocab.size() != d.vocab_size ||
      checkpoint.answer_vocab.size() != d.answers) {
    throw std::invalid_argument("checkpoint vocabularies disagree with model dims " + describe(d));
  }
  nlohmann::json header = {
      {"vocab_size", d.vocab_size},   {"d_emb", d.d_emb},
      {"d_hidden", d.d_hidden},       {"regions", d.regions},
      {"feature_dim", d.feature_dim}, {"answers", d.answers},
      {"question_vocab", checkpoint.question_vocab},
      {"answer_vocab", checkpoint.answer_vocab},
  };
  std::ostringstream out(std::ios::binary);
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  for (const auto& t : checkpoint.params.tensors()) write_f64_le(out, t.values());
  write_file_atomic(path, out.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw std::runtime_error(path.string() + " is not a checkpoint");
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  ModelDims d;
  d.vocab_size = header.at("vocab_size");
  d.d_emb = header.at("d_emb");
  d.d_hidden = header.at("d_hidden");
  d.regions = header.at("regions");
  d.feature_dim = header.at("feature_dim");
  d.answers = header.at("answers");
  Checkpoint ck;
  ck.params = VqaModelParams(d);
  ck.question_vocab = header.at("question_vocab").get<std::vector<std::string>>();
  ck.answer_vocab = header.at("answer_vocab").get<std::vector<std::string>>();
  for (auto& t : ck.params.tensors()) read_f64_le(in, t.values());
  return ck;
}

}  // namespace vqaug
