#include <filesystem>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "provsyn/balance.hpp"
#include "provsyn/dfs_code.hpp"
#include "provsyn/error.hpp"
#include "provsyn/fidelity.hpp"
#include "provsyn/graph.hpp"
#include "provsyn/json_io.hpp"
#include "provsyn/pipeline.hpp"
#include "provsyn/refiner.hpp"
#include "provsyn/sampler.hpp"

namespace py = pybind11;
using namespace provsyn;
using nlohmann::json;

// Graphs, codes and reports cross the boundary as JSON text; the Python
// package wraps every call in json.loads / json.dumps.

namespace {

ProvenanceGraph graph_arg(const std::string& text) { return graph_from_json(parse_json_text(text, "graph"), "graph"); }

std::vector<ProvenanceGraph> graphs_arg(const std::string& text) {
  std::vector<ProvenanceGraph> out;
  const auto j = parse_json_text(text, "graphs");
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(graph_from_json(j[i], "graphs[" + std::to_string(i) + "]"));
  return out;
}

TextMetric text_metric(const std::string& s) {
  if (s == "bleu") return TextMetric::Bleu;
  if (s == "gleu") return TextMetric::Gleu;
  if (s == "rouge_l") return TextMetric::RougeLF;
  throw Error(ErrorCode::InvalidConfig, "unknown text metric '" + s + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  static PyObject* error_type = PyErr_NewException("provsyn._core.ProvsynError", PyExc_RuntimeError, nullptr);
  m.attr("ProvsynError") = py::reinterpret_borrow<py::object>(error_type);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::reinterpret_borrow<py::object>(error_type)(e.what());
      err.attr("code") = to_string(e.code());
      err.attr("validation") = is_validation_error(e.code());
      PyErr_SetObject(error_type, err.ptr());
    }
  });

  m.def("parse_events", [](const std::string& events, const std::string& manifest) {
    const auto records = read_events(events);
    return graph_to_json(parse_events(records, read_manifest(manifest))).dump();
  });

  m.def(
      "sample_corpus",
      [](const std::string& graph, const std::string& config, std::size_t workers) {
        const auto cfg = sampler_config_from_json(parse_json_text(config, "sampler"));
        cfg.validate();
        json out = json::array();
        for (const auto& s : build_corpus(graph_arg(graph), cfg, workers)) out.push_back(subgraph_to_json(s));
        return out.dump();
      },
      py::arg("graph"), py::arg("config") = "{}", py::arg("workers") = 1);

  m.def("min_dfs_code", [](const std::string& graph) { return code_to_json(min_dfs_code(graph_arg(graph))).dump(); });
  m.def("decode", [](const std::string& code) {
    return graph_to_json(decode(code_from_json(parse_json_text(code, "code")))).dump();
  });
  m.def("canonical_certificate", [](const std::string& graph) { return canonical_certificate(graph_arg(graph)); });

  m.def("refine", [](const std::string& graph, const std::string& rules) {
    const auto r = refine(graph_arg(graph), rules_from_json(parse_json_text(rules, "rules")));
    return json{{"graph", graph_to_json(r.graph)},
                {"empty", r.empty},
                {"removed_edges", r.removed_edges},
                {"removed_nodes", r.removed_nodes}}
        .dump();
  });

  m.def("mmd", [](const std::string& x, const std::string& y, const std::string& metric) {
    const auto r = mmd(graphs_arg(x), graphs_arg(y), default_mmd_config(mmd_metric_from_string(metric)));
    return py::make_tuple(r.value, r.sigma);
  });

  m.def("name_similarity", [](const std::string& hyp, const std::string& ref, const std::string& metric) {
    return name_similarity(hyp, ref, text_metric(metric));
  });
  m.def("lcs_length", &lcs_length);
  m.def("dtw_distance", &dtw_distance);

  m.def("entropy", &entropy);
  m.def("gini", &gini);
  m.def("label_balance", [](const std::string& graph) { return to_json(label_balance(graph_arg(graph))).dump(); });
  m.def(
      "diversity",
      [](const std::string& gen, const std::string& train) {
        return to_json(diversity(graphs_arg(gen), graphs_arg(train), MatchBudget{2'000'000, 0.0})).dump();
      },
      py::arg("generated"), py::arg("train"));

  m.def(
      "run_pipeline",
      [](const std::string& config_path, const std::string& out_dir, std::size_t workers) {
        const auto base = std::filesystem::path(config_path).parent_path().string();
        const auto cfg = pipeline_config_from_json(read_json_file(config_path), base.empty() ? "." : base);
        RunReport rep;
        {
          py::gil_scoped_release release;
          rep = run_pipeline(cfg, out_dir, workers);
        }
        return json{{"config_hash", rep.config_hash}, {"counts", rep.counts}, {"eval", rep.eval}}.dump();
      },
      py::arg("config"), py::arg("out_dir"), py::arg("workers") = 1);
}
