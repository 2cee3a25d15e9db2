#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "vqaug/autodiff.hpp"
#include "vqaug/model.hpp"
#include "vqaug/rng.hpp"
#include "vqaug/tensor.hpp"

namespace vqaug::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& x : t.values()) x = u(rng);
  return t;
}

inline ModelDims small_dims() {
  ModelDims d;
  d.vocab_size = 9;
  d.d_emb = 4;
  d.d_hidden = 5;
  d.regions = 3;
  d.feature_dim = 4;
  d.answers = 6;
  return d;
}

inline Question random_question(const ModelDims& d, Rng& rng, std::size_t max_len = 5) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<std::size_t> tok(0, d.vocab_size - 1);
  Question q;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) q.tokens.push_back(tok(rng));
  return q;
}

/// |a - b| / max(|a| + |b|, floor). The floor keeps gradients that are zero
/// up to rounding from dominating the ratio.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), floor);
}

/// Smallest |input| over every relu on the tape.
inline double relu_margin(const Tape& tape) {
  double margin = INFINITY;
  for (NodeId id = 0; id < tape.size(); ++id) {
    if (tape.kind(id) != OpKind::kRelu) continue;
    for (double z : tape.value(tape.inputs(id)[0]).values()) margin = std::min(margin, std::abs(z));
  }
  return margin;
}

/// Smallest relu input magnitude of the model's loss graph at (params, v, q).
inline double model_relu_margin(const VqaModelParams& params, const Tensor& v, const Question& q) {
  Tape tape;
  const auto bound = bind_params(tape, params, false);
  const NodeId visual = tape.constant(v);
  forward_graph(tape, bound, params.dims(), visual, q);
  return relu_margin(tape);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("vqaug-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace vqaug::test
