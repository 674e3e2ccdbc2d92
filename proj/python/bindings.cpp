#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rtn/cli.hpp"
#include "rtn/errors.hpp"
#include "rtn/evaluation.hpp"
#include "rtn/features.hpp"
#include "rtn/frequency.hpp"
#include "rtn/training.hpp"

namespace py = pybind11;
using namespace rtn;

namespace {

py::array_t<double> to_numpy(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    auto v = out.mutable_unchecked<2>();
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) v(r, c) = m(r, c);
    return out;
}

const std::vector<SceneRecord>& split_of(const cli::DataBundle& d, const std::string& split) {
    return d.split(split);
}

std::vector<std::string> scene_lines(const cli::DataBundle& d, const std::string& split) {
    std::vector<std::string> out;
    for (const auto& s : split_of(d, split)) out.push_back(scene_to_line(s));
    return out;
}

py::dict scores_dict(const SceneScores& s) {
    py::dict d;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& p : s.pairs) pairs.emplace_back(p.subject, p.object);
    d["classes"] = s.classes;
    d["class_scores"] = s.class_scores;
    d["pairs"] = pairs;
    d["predicate_scores"] = to_numpy(s.predicate_scores);
    return d;
}

std::vector<py::dict> report_rows(const MetricReport& r) {
    std::vector<py::dict> rows;
    for (const auto& e : r.entries) {
        py::dict d;
        d["mode"] = to_string(e.mode);
        d["constraint"] = e.constraint;
        d["k"] = e.k;
        d["recall"] = e.recall;
        d["mean_recall"] = e.mean_recall;
        d["scenes"] = e.scenes;
        d["gt_triplets"] = e.gt_total;
        rows.push_back(d);
    }
    return rows;
}

SceneScores score_scene(const Scorer& scorer, const std::string& line, const std::string& mode) {
    const SceneRecord scene = scene_from_line(line);
    validate_scene(scene);
    std::vector<Box> boxes;
    for (const auto& n : scene.nodes) boxes.push_back(n.box);
    return scorer.score(scene.nodes, scene.global, mode_from_string(mode),
                        candidate_pairs(boxes, PairPolicy::AllPairs));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Relation Transformer Network core";

    PyObject* base = PyErr_NewException("rtn._core.RtnError", PyExc_RuntimeError, nullptr);
    m.attr("RtnError") = py::reinterpret_steal<py::object>(base);
    py::register_exception<ConfigError>(m, "ConfigError", base);
    py::register_exception<ParseError>(m, "ParseError", base);
    py::register_exception<ValidationError>(m, "ValidationError", base);
    py::register_exception<DimensionError>(m, "DimensionError", base);
    py::register_exception<IndexError>(m, "IndexError", base);
    py::register_exception<UsageError>(m, "UsageError", base);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the rtn command line tool in process; returns (exit code, stdout, stderr).");

    py::class_<RunConfig>(m, "Config")
        .def(py::init<>())
        .def("set", &RunConfig::set, py::arg("key"), py::arg("value"))
        .def("get", &RunConfig::get, py::arg("key"))
        .def("dump", &RunConfig::dump)
        .def("load_text", &RunConfig::load_text, py::arg("text"), py::arg("origin") = "config")
        .def("load_file", &RunConfig::load_file, py::arg("path"))
        .def("finalize", &RunConfig::finalize)
        .def_static("keys", &RunConfig::keys);

    py::class_<cli::DataBundle>(m, "Dataset")
        .def_property_readonly("classes", [](const cli::DataBundle& d) { return d.vocab.classes; })
        .def_property_readonly("predicates", [](const cli::DataBundle& d) { return d.vocab.predicates; })
        .def_property_readonly("vocab_hash", [](const cli::DataBundle& d) { return d.vocab.hash(); })
        .def("size", [](const cli::DataBundle& d, const std::string& s) { return split_of(d, s).size(); },
             py::arg("split"))
        .def("scene_lines", &scene_lines, py::arg("split"), "Scenes of a split as JSON lines.");

    m.def("generate_data", &cli::generate_data, py::arg("config"), py::arg("out_dir"),
          "Generates the synthetic dataset into out_dir and returns it.");
    m.def("load_data", &cli::load_data, py::arg("data_dir"));

    py::class_<RtnModel>(m, "Model")
        .def_static("create", &cli::make_model, py::arg("config"), py::arg("data"))
        .def_static("load", &cli::load_model, py::arg("checkpoint"), py::arg("config"), py::arg("data"))
        .def_property_readonly("parameter_count",
                               [](const RtnModel& mdl) { return expected_parameter_count(mdl.config()); })
        .def(
            "train",
            [](RtnModel& mdl, const cli::DataBundle& data, RunConfig cfg) {
                cfg.finalize();
                TrainLog log;
                {
                    py::gil_scoped_release release;
                    log = train(data.train, data.val, mdl, cfg.train);
                }
                std::vector<py::dict> rows;
                for (const auto& e : log.epochs) {
                    py::dict d;
                    d["epoch"] = e.epoch;
                    d["obj_loss"] = e.object_loss;
                    d["rel_loss"] = e.relation_loss;
                    d["val_r20"] = e.val_r20;
                    d["lr"] = e.lr;
                    rows.push_back(d);
                }
                return rows;
            },
            py::arg("data"), py::arg("config"), "Trains in place and restores the best epoch; returns the log.")
        .def(
            "save",
            [](const RtnModel& mdl, const std::filesystem::path& path, const cli::DataBundle& data) {
                save_checkpoint(path, mdl.config(), mdl.params(), data.vocab.hash());
            },
            py::arg("path"), py::arg("data"))
        .def(
            "score",
            [](const RtnModel& mdl, const std::string& line, const std::string& mode) {
                return scores_dict(score_scene(ModelScorer(mdl), line, mode));
            },
            py::arg("scene_json"), py::arg("mode") = "PREDCLS",
            "Scores every ordered node pair of one scene, using its nodes as given.");

    m.def(
        "evaluate",
        [](const cli::DataBundle& data, const std::string& split, const RtnModel* model, RunConfig cfg) {
            cfg.finalize();
            MetricReport report;
            {
                py::gil_scoped_release release;
                const auto& scenes = split_of(data, split);
                if (model) {
                    report = evaluate(scenes, ModelScorer(*model), cfg.eval, data.vocab.num_predicates());
                } else {
                    const FrequencyScorer fq(build_frequency_table(data.train, data.vocab, cfg.freq_alpha));
                    report = evaluate(scenes, fq, cfg.eval, data.vocab.num_predicates());
                }
            }
            return report_rows(report);
        },
        py::arg("data"), py::arg("split"), py::arg("model"), py::arg("config"),
        "Recall@K and mean recall@K rows. model=None uses the frequency baseline.");

    m.def(
        "edge_positional_encoding",
        [](std::size_t pi, std::size_t pj, std::size_t m_, std::size_t d, bool dense) {
            EmbedConfig cfg;
            cfg.max_nodes = m_;
            cfg.d_model = d;
            return edge_positional_encoding(pi, pj, cfg, dense);
        },
        py::arg("p_i"), py::arg("p_j"), py::arg("max_nodes"), py::arg("d_model"), py::arg("dense") = false);
    m.def(
        "node_positional_encoding",
        [](std::size_t p, std::size_t m_, std::size_t d) {
            EmbedConfig cfg;
            cfg.max_nodes = m_;
            cfg.d_model = d;
            return node_positional_encoding(p, cfg);
        },
        py::arg("position"), py::arg("max_nodes"), py::arg("d_model"));

    m.def(
        "iou",
        [](std::array<double, 4> a, std::array<double, 4> b) {
            return iou({a[0], a[1], a[2], a[3]}, {b[0], b[1], b[2], b[3]});
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "rank_triplets",
        [](std::vector<std::size_t> classes, std::vector<double> class_scores,
           const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
           py::array_t<double, py::array::c_style | py::array::forcecast> predicate_scores, bool constraint) {
            if (predicate_scores.ndim() != 2) throw DimensionError("rank_triplets: predicate_scores must be 2-D");
            SceneScores s;
            s.classes = std::move(classes);
            s.class_scores = std::move(class_scores);
            for (const auto& [a, b] : pairs) s.pairs.push_back({a, b});
            const auto rows = static_cast<std::size_t>(predicate_scores.shape(0));
            const auto cols = static_cast<std::size_t>(predicate_scores.shape(1));
            if (rows != s.pairs.size()) throw DimensionError("rank_triplets: one score row per pair expected");
            s.predicate_scores = Matrix(rows, cols, std::vector<double>(predicate_scores.data(),
                                                                        predicate_scores.data() + rows * cols));
            std::vector<py::tuple> out;
            for (const auto& t : rank_triplets(s, constraint))
                out.push_back(py::make_tuple(t.subject, t.predicate, t.object, t.score));
            return out;
        },
        py::arg("classes"), py::arg("class_scores"), py::arg("pairs"), py::arg("predicate_scores"),
        py::arg("constraint") = true, "Ranked (subject, predicate, object, score) triplets.");
}
