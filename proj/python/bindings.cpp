#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <string>

#include "textlrp/corpus.hpp"
#include "textlrp/error.hpp"
#include "textlrp/pipeline.hpp"

namespace py = pybind11;
using namespace textlrp;

namespace {

PipelineConfig config_at(const std::string& path, std::optional<std::string> workdir) {
  auto c = PipelineConfig::load(path);
  if (workdir) c.workdir = *workdir;
  return c;
}

// Runs one stage and returns its log text.
template <typename F>
std::string logged(F&& stage) {
  std::ostringstream log;
  {
    py::gil_scoped_release release;
    stage(log);
  }
  return log.str();
}

py::dict relevance_dict(const RelevanceMap& m) {
  py::list scores;
  for (const auto& s : m.scores) scores.append(py::make_tuple(s.token, s.position, s.relevance));
  py::dict d;
  d["doc_id"] = m.doc_id;
  d["method"] = to_string(m.method);
  d["target_class"] = m.target_class;
  d["model_output"] = m.model_output;
  d["truncated"] = m.truncated;
  d["scores"] = scores;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Token-level explanations for black-box text classifiers";
  m.attr("__version__") = kToolVersion;

  // Translators run newest first, so the subclass is registered last.
  auto& error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", error.ptr());

  m.def("tokenize", &tokenize, py::arg("text"));

  m.def(
      "synth",
      [](const std::string& out_dir, std::size_t train_docs, std::size_t eval_docs, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.train_docs = train_docs;
        spec.eval_docs = eval_docs;
        spec.seed = seed;
        return logged([&](std::ostream& log) { cmd_synth(spec, out_dir, log); });
      },
      py::arg("out_dir"), py::arg("train_docs") = 10000, py::arg("eval_docs") = 20000, py::arg("seed") = 7);

  m.def(
      "train_blackbox",
      [](const std::string& config, std::optional<std::string> workdir) {
        const auto c = config_at(config, workdir);
        return logged([&](std::ostream& log) { cmd_train_blackbox(c, log); });
      },
      py::arg("config"), py::arg("workdir") = py::none());

  m.def(
      "train_surrogate",
      [](const std::string& config, std::optional<std::string> workdir) {
        const auto c = config_at(config, workdir);
        return logged([&](std::ostream& log) { cmd_train_surrogate(c, log); });
      },
      py::arg("config"), py::arg("workdir") = py::none());

  m.def(
      "explain",
      [](const std::string& config, const std::string& method, const std::string& split,
         std::optional<std::string> doc_id, std::optional<std::string> html, std::optional<std::string> workdir) {
        const auto c = config_at(config, workdir);
        const Method mt = method_from_string(method);
        const Split sp = split_from_string(split);
        std::size_t n = 0;
        logged([&](std::ostream& log) { n = cmd_explain(c, mt, sp, doc_id, html, log); });
        return n;
      },
      py::arg("config"), py::arg("method") = "lrp", py::arg("split") = "eval", py::arg("doc_id") = py::none(),
      py::arg("html") = py::none(), py::arg("workdir") = py::none());

  m.def(
      "report",
      [](const std::string& config, std::optional<std::string> workdir) {
        const auto c = config_at(config, workdir);
        return logged([&](std::ostream& log) { cmd_report(c, log); });
      },
      py::arg("config"), py::arg("workdir") = py::none());

  m.def(
      "read_relevance",
      [](const std::string& path) {
        py::list out;
        for (const auto& r : read_relevance_jsonl(path)) out.append(relevance_dict(r));
        return out;
      },
      py::arg("path"));
}
