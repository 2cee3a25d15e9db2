#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vqaug/commands.hpp"
#include "vqaug/pipeline.hpp"

namespace py = pybind11;
using namespace vqaug;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 1 && a.ndim() != 2) {
    throw std::invalid_argument("expected a 1-d or 2-d array, got " + std::to_string(a.ndim()) + "-d");
  }
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<std::size_t>(a.shape(i)));
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Array to_array(const std::vector<double>& v) {
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict report_dict(const EvalReport& r) {
  py::list attackers;
  for (const auto& a : r.attackers) {
    attackers.append(py::dict(py::arg("label") = a.config.label(),
                              py::arg("kind") = attack_kind_name(a.config.kind),
                              py::arg("epsilon") = a.config.epsilon, py::arg("alpha") = a.config.alpha,
                              py::arg("iterations") = a.config.iterations,
                              py::arg("accuracy") = a.accuracy,
                              py::arg("combined_accuracy") = a.combined_accuracy));
  }
  return py::dict(py::arg("model") = r.model, py::arg("examples") = r.examples,
                  py::arg("paraphrased") = r.paraphrased, py::arg("clean_accuracy") = r.clean_accuracy,
                  py::arg("paraphrase_accuracy") = r.paraphrase_accuracy,
                  py::arg("flip_rate") = r.flip_rate, py::arg("attackers") = attackers);
}

py::dict candidate_dict(const ParaphraseCandidate& c) {
  return py::dict(py::arg("text") = join_words(c.tokens), py::arg("sentence_prob") = c.sentence_prob,
                  py::arg("raw_score") = c.raw_score, py::arg("score") = c.score,
                  py::arg("edit_distance") = c.edit_distance, py::arg("penalized") = c.penalized);
}

/// Checkpoint plus its vocabularies; questions are given as text.
class Model {
 public:
  explicit Model(Checkpoint c) : c_(std::move(c)), vocab_(c_.question_vocab) {}

  static Model load(const std::filesystem::path& path) { return Model(load_checkpoint(path)); }

  Question question(const std::string& text) const {
    const auto words = split_words(text);
    return Question{vocab_.encode(words), join_words(words)};
  }

  const VqaModelParams& params() const { return c_.params; }
  const Checkpoint& checkpoint() const { return c_; }

 private:
  Checkpoint c_;
  Vocabulary vocab_;
};

/// Paraphraser that owns its two pivot languages.
class PyParaphraser {
 public:
  PyParaphraser(const std::filesystem::path& first, const std::filesystem::path& second,
                const std::vector<std::string>& known_words, const ParaphraseSettings& settings)
      : pair_(make_pivot_pair(load_lexicon(first), load_lexicon(second))),
        para_(std::make_unique<Paraphraser>(
            *pair_.first, *pair_.second,
            std::unordered_set<std::string>(known_words.begin(), known_words.end()), settings)) {}

  const Paraphraser& get() const { return *para_; }
  const Vocabulary& target() const { return *pair_.target; }

 private:
  PivotPair pair_;
  std::unique_ptr<Paraphraser> para_;
};

}  // namespace

PYBIND11_MODULE(_vqaug, m) {
  m.doc() = "Adversarial visual and paraphrase augmentation for a toy VQA model";

  py::class_<RunConfig>(m, "RunConfig")
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("out", &RunConfig::out)
      .def_readwrite("fraction", &RunConfig::fraction)
      .def_readwrite("workers", &RunConfig::workers)
      .def("to_json", [](const RunConfig& c) { return to_json_value(c).dump(); })
      .def("problems", &RunConfig::problems);

  m.def(
      "load_config",
      [](const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
        return load_config(path.value_or(std::filesystem::path()), overrides);
      },
      py::arg("path") = py::none(),
        py::arg("overrides") = std::vector<std::string>{},
        "Defaults, then the JSON file, then key=value overrides, then validation.");

  m.def(
      "generate",
      [](const RunConfig& c) {
        const auto r = cmd_generate(c);
        return py::dict(py::arg("train_examples") = r.train_examples,
                        py::arg("val_examples") = r.val_examples,
                        py::arg("train_sha256") = r.train_sha256, py::arg("val_sha256") = r.val_sha256,
                        py::arg("manifest") = r.manifest);
      },
      py::arg("config"));

  m.def(
      "paraphrase",
      [](const RunConfig& c) {
        const auto r = [&] {
          py::gil_scoped_release release;
          return cmd_paraphrase(c);
        }();
        return py::dict(py::arg("examples") = r.examples, py::arg("covered") = r.covered,
                        py::arg("coverage") = r.coverage(), py::arg("cache") = r.cache);
      },
      py::arg("config"));

  m.def(
      "train",
      [](const RunConfig& c, const std::string& mode) {
        const auto m = parse_training_mode(mode);
        const auto r = [&] {
          py::gil_scoped_release release;
          return cmd_train(c, m);
        }();
        return py::dict(py::arg("checkpoint") = r.checkpoint, py::arg("epoch_log") = r.epoch_log,
                        py::arg("final_val_accuracy") = r.final_val_accuracy,
                        py::arg("paraphrased_examples") = r.paraphrased_examples);
      },
      py::arg("config"), py::arg("mode") = "vanilla");

  m.def(
      "evaluate",
      [](const RunConfig& c, const std::vector<std::string>& modes) {
        std::vector<TrainingMode> parsed;
        for (const auto& s : modes) parsed.push_back(parse_training_mode(s));
        const auto reports = [&] {
          py::gil_scoped_release release;
          return cmd_evaluate(c, parsed);
        }();
        py::list out;
        for (const auto& r : reports) out.append(report_dict(r));
        return out;
      },
      py::arg("config"), py::arg("modes") = std::vector<std::string>{"vanilla"});

  m.def(
      "sweep",
      [](const RunConfig& c) {
        const auto r = [&] {
          py::gil_scoped_release release;
          return cmd_sweep(c);
        }();
        return py::dict(py::arg("computed") = r.computed, py::arg("skipped") = r.skipped,
                        py::arg("csv") = r.csv);
      },
      py::arg("config"));

  m.def(
      "load_split",
      [](const std::filesystem::path& path) {
        const auto s = load_split(path);
        const std::size_t k = s.spec.regions, d = s.spec.feature_dim;
        Array visuals({static_cast<py::ssize_t>(s.examples.size()), static_cast<py::ssize_t>(k),
                       static_cast<py::ssize_t>(d)});
        py::array_t<std::int64_t> answers(std::vector<py::ssize_t>{static_cast<py::ssize_t>(s.examples.size())});
        std::vector<std::string> questions;
        std::vector<std::size_t> ids;
        double* dst = visuals.mutable_data();
        for (std::size_t i = 0; i < s.examples.size(); ++i) {
          const auto& ex = s.examples[i];
          std::copy(ex.visual.values().begin(), ex.visual.values().end(), dst + i * k * d);
          answers.mutable_data()[i] = static_cast<std::int64_t>(ex.answer);
          questions.push_back(ex.question.text);
          ids.push_back(ex.id);
        }
        return py::dict(py::arg("split") = s.split, py::arg("ids") = ids,
                        py::arg("visuals") = visuals, py::arg("questions") = questions,
                        py::arg("answers") = answers,
                        py::arg("question_vocab") = s.question_vocab.words(),
                        py::arg("answer_vocab") = s.answer_vocab.words(),
                        py::arg("v_max") = s.spec.v_max);
      },
      py::arg("path"), "Split file as arrays: visuals has shape (N, K, D).");

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("path"))
      .def_property_readonly("question_vocab", [](const Model& m) { return m.checkpoint().question_vocab; })
      .def_property_readonly("answer_vocab", [](const Model& m) { return m.checkpoint().answer_vocab; })
      .def_property_readonly("dims", [](const Model& m) { return describe(m.params().dims()); })
      .def(
          "probabilities",
          [](const Model& m, const Array& v, const std::string& q) {
            return to_array(forward(m.params(), to_tensor(v), m.question(q)).probs);
          },
          py::arg("visual"), py::arg("question"))
      .def(
          "predict",
          [](const Model& m, const Array& v, const std::string& q) {
            return predict(m.params(), to_tensor(v), m.question(q));
          },
          py::arg("visual"), py::arg("question"))
      .def(
          "loss",
          [](const Model& m, const Array& v, const std::string& q, std::size_t answer) {
            return loss(m.params(), to_tensor(v), m.question(q), answer);
          },
          py::arg("visual"), py::arg("question"), py::arg("answer"))
      .def(
          "visual_gradient",
          [](const Model& m, const Array& v, const std::string& q, std::size_t answer) {
            return to_array(visual_gradient(m.params(), to_tensor(v), m.question(q), answer).grad);
          },
          py::arg("visual"), py::arg("question"), py::arg("answer"))
      .def(
          "attack",
          [](const Model& m, const Array& v, const std::string& q, std::size_t answer,
             const std::string& kind, double epsilon, double alpha, std::size_t iterations,
             double v_max, std::uint64_t seed, const std::string& label_policy) {
            AttackConfig c;
            c.kind = parse_attack_kind(kind);
            c.epsilon = epsilon;
            c.alpha = alpha;
            c.iterations = iterations;
            c.label_policy = parse_label_policy(label_policy);
            return to_array(run_attack(m.params(), to_tensor(v), m.question(q), answer, c, v_max, seed).perturbed);
          },
          py::arg("visual"), py::arg("question"), py::arg("answer"), py::arg("kind") = "ifgsm",
          py::arg("epsilon") = 0.3, py::arg("alpha") = 0.0625, py::arg("iterations") = 2,
          py::arg("v_max") = kReferenceFeatureMax, py::arg("seed") = 0,
          py::arg("label_policy") = "true");

  py::class_<ParaphraseSettings>(m, "ParaphraseSettings")
      .def(py::init<>())
      .def_readwrite("pivots", &ParaphraseSettings::pivots)
      .def_readwrite("beam_width", &ParaphraseSettings::beam_width)
      .def_readwrite("max_candidates", &ParaphraseSettings::max_candidates)
      .def_readwrite("top_k", &ParaphraseSettings::top_k)
      .def_readwrite("edit_threshold", &ParaphraseSettings::edit_threshold)
      .def_readwrite("penalty", &ParaphraseSettings::penalty);

  py::class_<PyParaphraser>(m, "Paraphraser")
      .def(py::init<const std::filesystem::path&, const std::filesystem::path&,
                    const std::vector<std::string>&, const ParaphraseSettings&>(),
           py::arg("first_lexicon"), py::arg("second_lexicon"), py::arg("known_words"),
           py::arg("settings") = ParaphraseSettings{})
      .def_property_readonly("target_words", [](const PyParaphraser& p) { return p.target().words(); })
      .def(
          "next_word",
          [](const PyParaphraser& p, const std::string& q, const std::string& prefix) {
            return to_array(p.get().next_word(split_words(q), split_words(prefix)));
          },
          py::arg("question"), py::arg("prefix") = "")
      .def(
          "sentence_prob",
          [](const PyParaphraser& p, const std::string& q, const std::string& c) {
            return p.get().sentence_prob(split_words(q), split_words(c));
          },
          py::arg("question"), py::arg("candidate"))
      .def(
          "semantic_score",
          [](const PyParaphraser& p, const std::string& q, const std::string& c) {
            return p.get().semantic_score(split_words(q), split_words(c));
          },
          py::arg("question"), py::arg("candidate"))
      .def(
          "qadvgen",
          [](const PyParaphraser& p, const std::string& q, std::size_t k) {
            py::list out;
            for (const auto& c : p.get().qadvgen(split_words(q), k)) out.append(candidate_dict(c));
            return out;
          },
          py::arg("question"), py::arg("k") = 1);

  m.def("accuracy", [](const std::vector<std::size_t>& p, const std::vector<std::size_t>& a) {
    return accuracy(p, a);
  });
  m.def("flip_rate", [](const std::vector<std::size_t>& p, const std::vector<std::size_t>& q) {
    return flip_rate(p, q);
  });
  m.def("edit_distance", [](const std::string& a, const std::string& b) {
    return edit_distance(split_words(a), split_words(b));
  });

  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
}
