#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "refgame/error.hpp"
#include "refgame/feature_store.hpp"
#include "refgame/games.hpp"
#include "refgame/listener.hpp"
#include "refgame/pragmatics.hpp"
#include "refgame/refgame_eval.hpp"
#include "refgame/session.hpp"
#include "refgame/speaker.hpp"
#include "refgame/synthworld.hpp"

namespace py = pybind11;
using namespace refgame;
namespace synth = refgame::synth;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::dict record_dict(const AnnotationRecord& r) {
  py::list phrases;
  for (const auto& pp : r.phrase_pairs) {
    py::dict p;
    p["left"] = join_tokens(pp.left.tokens);
    p["right"] = join_tokens(pp.right.tokens);
    p["position"] = pp.position;
    phrases.append(p);
  }
  py::dict d;
  d["pair_id"] = r.pair_id;
  d["image_a"] = r.image_a;
  d["image_b"] = r.image_b;
  d["phrases"] = phrases;
  return d;
}

py::tuple store_arrays(const FeatureStore& fs) {
  FloatArray out({static_cast<py::ssize_t>(fs.size()), static_cast<py::ssize_t>(fs.dim())});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const auto row = fs.row(i);
    for (std::size_t j = 0; j < fs.dim(); ++j) view(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) = row[j];
  }
  return py::make_tuple(fs.ids(), out);
}

FeatureStore store_from(const std::vector<std::string>& ids, const FloatArray& rows) {
  if (rows.ndim() != 2 || static_cast<std::size_t>(rows.shape(0)) != ids.size()) {
    throw Error(ErrorCode::ShapeMismatch, "rows must be a 2-d array with one row per id");
  }
  FeatureStore fs(static_cast<std::size_t>(rows.shape(1)));
  const auto view = rows.unchecked<2>();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<float> row(static_cast<std::size_t>(rows.shape(1)));
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = view(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j));
    fs.add(ids[i], row);
  }
  return fs;
}

py::dict summary_dict(const HumanSummary& s) {
  py::dict d;
  d["panel_size"] = s.panel_size;
  d["tasks"] = s.tasks;
  d["majority_correct"] = s.majority_correct;
  d["majority_wrong"] = s.majority_wrong;
  d["no_majority"] = s.no_majority;
  d["majority_accuracy"] = s.majority_accuracy;
  d["accuracy_with_guessing"] = s.accuracy_with_guessing;
  return d;
}

class Dataset {
 public:
  explicit Dataset(const std::filesystem::path& dir) : loaded_(synth::load_dataset(dir)) {}

  py::list records(const std::string& split) const {
    py::list out;
    for (const auto& r : loaded_.dataset.split(split).records) out.append(record_dict(r));
    return out;
  }
  py::tuple features() const { return store_arrays(loaded_.dataset.features); }
  nn::Vector feature(const std::string& id) const { return nn::to_vector(loaded_.dataset.features.row(id)); }
  std::vector<std::size_t> assignment(const std::string& id) const { return loaded_.dataset.object(id).assignment; }
  std::vector<std::string> slot_names() const {
    std::vector<std::string> out;
    for (const auto& s : loaded_.world.spec().slots) out.push_back(s.name);
    return out;
  }
  std::string ground(const std::string& phrase, const std::string& left, const std::string& right) const {
    switch (loaded_.world.oracle_ground(tokenize_phrase(phrase), loaded_.dataset.object(left),
                                        loaded_.dataset.object(right))) {
      case synth::Ground::Left: return "left";
      case synth::Ground::Right: return "right";
      case synth::Ground::Ambiguous: break;
    }
    return "ambiguous";
  }

 private:
  synth::LoadedDataset loaded_;
};

py::list phrases_list(const std::vector<ScoredPhrase>& beam) {
  py::list out;
  for (const auto& s : beam) {
    py::dict d;
    d["tokens"] = s.tokens;
    d["text"] = join_tokens(s.tokens);
    d["log_prob"] = s.log_prob;
    d["rank"] = s.rank;
    d["truncated"] = s.truncated;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Reference-game speakers, listeners and evaluation";

  static py::exception<Error> error_type(m, "RefgameError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type, e.what());
    }
  });

  m.def("tokenize", [](const std::string& text) { return tokenize_phrase(text).tokens; }, py::arg("text"),
        "Lowercased tokens of an attribute phrase");
  m.def("pair_softmax",
        [](double left, double right) {
          const auto s = pair_softmax(left, right);
          return py::make_tuple(s.p_left, s.p_right);
        },
        py::arg("left_logit"), py::arg("right_logit"));
  m.def("average_directed", &average_directed, py::arg("p_from_left_phrase"), py::arg("p_from_right_phrase"));
  m.def("combined_score", &combined_score, py::arg("p_speaker"), py::arg("p_listener"), py::arg("lam"));
  m.def("wilson_interval",
        [](std::size_t successes, std::size_t n) {
          const auto i = wilson_interval(successes, n);
          return py::make_tuple(i.low, i.high);
        },
        py::arg("successes"), py::arg("n"));
  m.def("accuracy_with_guessing", &accuracy_with_guessing, py::arg("majority_pct"), py::arg("no_majority_pct"));
  m.def("summarize_session", [](const std::filesystem::path& dir) { return summary_dict(summarize_session_dir(dir)); },
        py::arg("session_dir"), "Human-listener summary recomputed from a session directory");

  m.def("rerank_order",
        [](const std::vector<double>& log_probs, const std::vector<double>& listener_probs, double lam) {
          std::vector<ScoredPhrase> beam(log_probs.size());
          for (std::size_t i = 0; i < beam.size(); ++i) {
            beam[i].log_prob = log_probs[i];
            beam[i].rank = static_cast<int>(i) + 1;
          }
          std::vector<std::size_t> order;
          for (const auto& r : rerank(beam, listener_probs, lam)) order.push_back(r.beam_index);
          return order;
        },
        py::arg("log_probs"), py::arg("listener_probs"), py::arg("lam"),
        "Beam indices sorted by p_s^lam * p_l^(1 - lam)");

  m.def("generate_dataset",
        [](const std::filesystem::path& out, std::size_t train, std::size_t val, std::size_t test, std::uint64_t seed,
           bool saliency_difficulty, bool images, std::size_t image_size) {
          auto spec = synth::WorldSpec::default_spec();
          spec.seed = seed;
          spec.saliency_difficulty = saliency_difficulty;
          const synth::World world(spec);
          synth::write_dataset(out, world, world.generate_dataset({train, val, test}), {images, image_size});
        },
        py::arg("out"), py::arg("train") = 2000, py::arg("val") = 200, py::arg("test") = 200, py::arg("seed") = 7,
        py::arg("saliency_difficulty") = false, py::arg("images") = false, py::arg("image_size") = 128);

  m.def("read_features", [](const std::filesystem::path& p) { return store_arrays(FeatureStore::load(p)); },
        py::arg("path"), "(ids, float32 array) from a feature file");
  m.def("write_features",
        [](const std::filesystem::path& p, const std::vector<std::string>& ids, const FloatArray& rows) {
          store_from(ids, rows).save(p);
        },
        py::arg("path"), py::arg("ids"), py::arg("rows"));

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<const std::filesystem::path&>(), py::arg("directory"))
      .def("records", &Dataset::records, py::arg("split"))
      .def("features", &Dataset::features)
      .def("feature", &Dataset::feature, py::arg("object_id"))
      .def("assignment", &Dataset::assignment, py::arg("object_id"))
      .def_property_readonly("slot_names", &Dataset::slot_names)
      .def("ground", &Dataset::ground, py::arg("phrase"), py::arg("left"), py::arg("right"),
           "Grammar oracle: 'left', 'right' or 'ambiguous'");

  py::class_<ListenerModel>(m, "Listener")
      .def_static("load", &ListenerModel::load, py::arg("directory"))
      .def_property_readonly("kind", [](const ListenerModel& l) { return to_string(l.kind()); })
      .def_property_readonly("vocabulary", [](const ListenerModel& l) { return l.vocab().tokens(); })
      .def("score",
           [](const ListenerModel& l, const nn::Vector& left, const nn::Vector& right, const std::string& first,
              const std::string& second) {
             const auto p1 = tokenize_phrase(first).tokens;
             const auto p2 = second.empty() ? std::vector<std::string>{} : tokenize_phrase(second).tokens;
             const auto s = discerning_score(l, left, right, p1, p2);
             return py::make_tuple(s.p_left, s.p_right);
           },
           py::arg("left"), py::arg("right"), py::arg("first"), py::arg("second") = "",
           "(p_left, p_right) for the difference 'first vs second'")
      .def("image_embedding", py::overload_cast<const nn::Vector&>(&ListenerModel::image_embedding, py::const_),
           py::arg("feature"))
      .def("phrase_embedding",
           [](const ListenerModel& l, const std::string& phrase) {
             return l.phrase_embedding(tokenize_phrase(phrase).tokens);
           },
           py::arg("phrase"));

  py::class_<SpeakerModel>(m, "Speaker")
      .def_static("load", &SpeakerModel::load, py::arg("directory"))
      .def_property_readonly("kind", [](const SpeakerModel& s) { return to_string(s.kind()); })
      .def("describe",
           [](const SpeakerModel& s, const nn::Vector& target, std::optional<nn::Vector> distractor,
              std::size_t beam_width, std::size_t max_len) {
             const nn::Vector ctx = distractor ? s.context(target, &*distractor) : s.context(target);
             return phrases_list(beam_decode(s, ctx, beam_width, max_len));
           },
           py::arg("target"), py::arg("distractor") = py::none(), py::arg("beam_width") = kDefaultBeamWidth,
           py::arg("max_len") = kDefaultMaxPhraseLen);
}
