// Python bindings for vocabularies, scoring, parameter counting and the
// experiment runner.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "caaed/decoding.hpp"
#include "caaed/error.hpp"
#include "caaed/experiment.hpp"

namespace py = pybind11;
using namespace caaed;

namespace {

py::dict counts_dict(const ParameterCounts& c) {
  py::dict d;
  d["encoder"] = c.encoder;
  d["attention"] = c.attention;
  d["decoder"] = c.decoder;
  d["output"] = c.output;
  d["embedding"] = c.embedding;
  d["total"] = c.total();
  return d;
}

py::dict system_dict(const SystemResult& r) {
  py::dict d;
  d["embedding"] = to_string(r.embedding);
  d["test_wer"] = r.test_wer;
  d["dev_wer"] = r.dev_wer;
  d["heldout_accuracy"] = r.heldout_accuracy;
  d["parameters"] = counts_dict(r.counts);
  d["best_epoch"] = r.training.best_epoch;
  return d;
}

}  // namespace

PYBIND11_MODULE(caaed, m) {
  m.doc() = "Character-aware attention encoder-decoder speech recognizer";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  py::class_<Vocab>(m, "Vocab")
      .def_static("load", &Vocab::load)
      .def("save", &Vocab::save)
      .def_property_readonly("kind", [](const Vocab& v) { return to_string(v.kind()); })
      .def_property_readonly("units", &Vocab::units)
      .def("__len__", &Vocab::size)
      .def("__contains__", [](const Vocab& v, const std::string& u) { return v.contains(u); })
      .def("id_of", [](const Vocab& v, const std::string& u) { return v.id_of(u); })
      .def("segment_word", [](const Vocab& v, const std::string& w) { return v.segment_word(w); })
      .def("tokenize", [](const Vocab& v, const std::string& line) { return v.tokenize(line); })
      .def("detokenize", &Vocab::detokenize);

  m.def("build_wordpiece", [](const std::vector<std::string>& lines, std::size_t target) {
    return build_wordpiece(Corpus(lines), target);
  }, py::arg("lines"), py::arg("target_size"));
  m.def("build_mixed_units", [](const std::vector<std::string>& lines, std::size_t threshold) {
    return build_mixed_units(Corpus(lines), threshold);
  }, py::arg("lines"), py::arg("threshold"));
  m.def("build_character_vocab", [](const std::vector<std::string>& lines) {
    return build_character_vocab(Corpus(lines));
  }, py::arg("lines"));

  py::class_<WerResult>(m, "WerResult")
      .def_readonly("substitutions", &WerResult::substitutions)
      .def_readonly("deletions", &WerResult::deletions)
      .def_readonly("insertions", &WerResult::insertions)
      .def_readonly("ref_words", &WerResult::ref_words)
      .def_property_readonly("errors", &WerResult::errors)
      .def_property_readonly("rate", &WerResult::rate);
  m.def("wer", [](const std::string& ref, const std::string& hyp) { return wer(ref, hyp); },
        py::arg("ref"), py::arg("hyp"));
  m.def("word_accuracy", &word_accuracy, py::arg("refs"), py::arg("hyps"), py::arg("words"));

  m.attr("PAPER_WORD_PIECES") = kPaperWordPieces;
  m.attr("PAPER_MIXED_UNITS") = kPaperMixedUnits;
  m.def("paper_parameter_counts",
        [](std::size_t vocab_size, std::size_t encoder_layers, const std::string& embedding) {
          return counts_dict(count_parameters(
              paper_config(vocab_size, encoder_layers, parse_embedding_kind(embedding))));
        },
        py::arg("vocab_size"), py::arg("encoder_layers"), py::arg("embedding"));

  m.def("gradcheck", [](const std::string& embedding, std::uint64_t seed) {
    const ModelGradCheck g = gradcheck_reference(parse_embedding_kind(embedding), seed);
    py::dict d;
    d["max_relative_error"] = g.max_relative_error;
    d["coordinates"] = g.coordinates;
    d["fixed_projections_untouched"] = g.fixed_projections_untouched;
    return d;
  }, py::arg("embedding") = "char-aware", py::arg("seed") = 7);

  // Trains and scores both systems for every compare seed of an INI config.
  m.def("compare", [](const std::string& config_text) {
    const ExperimentConfig config = ExperimentConfig::parse(config_text);
    config.require_seeds();
    std::vector<CompareRow> rows;
    {
      py::gil_scoped_release release;
      rows = run_compare(config);
    }
    py::list out;
    for (const CompareRow& r : rows) {
      py::dict d;
      d["seed"] = r.seed;
      d["lookup"] = system_dict(r.lookup);
      d["char_aware"] = system_dict(r.char_aware);
      out.append(d);
    }
    return py::make_tuple(out, format_compare(rows));
  }, py::arg("config_text"));
}
