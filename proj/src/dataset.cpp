#include "rtn/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rtn/errors.hpp"
#include "rtn/rng.hpp"

namespace rtn {

using nlohmann::json;

void Vocab::validate() const {
    if (classes.size() < 2) throw ValidationError("classes", "need at least 2 object classes");
    if (predicates.size() < 2) throw ValidationError("predicates", "need at least 2 predicates");
    std::set<std::string> seen_c(classes.begin(), classes.end());
    if (seen_c.size() != classes.size()) throw ValidationError("classes", "duplicate class name");
    std::set<std::string> seen_p(predicates.begin(), predicates.end());
    if (seen_p.size() != predicates.size()) throw ValidationError("predicates", "duplicate predicate name");
}

std::string Vocab::hash() const {
    std::uint64_t h = fnv1a64("classes");
    for (const auto& c : classes) h = fnv1a64(c + '\n', h);
    h = fnv1a64("predicates", h);
    for (const auto& p : predicates) h = fnv1a64(p + '\n', h);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

bool finite_all(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void append_real(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

void append_array(std::string& out, const std::vector<double>& v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        append_real(out, v[i]);
    }
    out += ']';
}

std::vector<double> read_reals(const json& j, const char* field) {
    if (!j.is_array()) throw ValidationError(field, "expected an array of numbers");
    std::vector<double> v;
    v.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number()) throw ValidationError(field, "expected numbers");
        v.push_back(x.get<double>());
    }
    return v;
}

std::size_t read_index(const json& j, const char* field) {
    if (!j.is_number_integer() || j.get<long long>() < 0) {
        throw ValidationError(field, "expected a non-negative integer");
    }
    return j.get<std::size_t>();
}

const json& require(const json& obj, const char* field) {
    auto it = obj.find(field);
    if (it == obj.end()) throw ValidationError(field, "missing field");
    return *it;
}

}  // namespace

void validate_scene(const SceneRecord& scene, const Vocab* vocab) {
    if (scene.id.empty()) throw ValidationError("id", "empty scene id");
    const std::size_t n = scene.nodes.size();
    std::size_t visual_dim = n ? scene.nodes[0].visual.size() : 0;
    std::size_t num_classes = vocab ? vocab->num_classes() : (n ? scene.nodes[0].class_probs.size() : 0);
    for (std::size_t i = 0; i < n; ++i) {
        const NodeRecord& node = scene.nodes[i];
        const auto c = node.box.coords();
        for (double x : c)
            if (!std::isfinite(x) || x < 0.0 || x > 1.0) throw ValidationError("box", "coordinate outside [0,1]");
        if (!node.box.valid()) throw ValidationError("box", "requires x1 < x2 and y1 < y2");
        if (!finite_all(node.visual)) throw ValidationError("visual", "non-finite value");
        if (node.visual.size() != visual_dim) throw ValidationError("visual", "inconsistent length");
        if (node.class_probs.size() != num_classes || num_classes == 0) {
            throw ValidationError("class_probs", "length " + std::to_string(node.class_probs.size()) +
                                                     " != class count " + std::to_string(num_classes));
        }
        double total = 0.0;
        for (double p : node.class_probs) {
            if (!std::isfinite(p) || p < 0.0) throw ValidationError("class_probs", "negative or non-finite");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) throw ValidationError("class_probs", "does not sum to 1");
        if (node.gt_class >= num_classes) throw ValidationError("gt_class", "class index out of range");
    }
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    for (const RelationRecord& r : scene.relations) {
        if (r.subject >= n || r.object >= n) throw ValidationError("relations", "node index out of range");
        if (r.subject == r.object) throw ValidationError("relations", "subject equals object");
        if (r.predicate == 0) throw ValidationError("relations", "predicate 0 is reserved for background");
        if (vocab && r.predicate >= vocab->num_predicates()) {
            throw ValidationError("relations", "predicate index out of range");
        }
        if (!pairs.emplace(r.subject, r.object).second) {
            throw ValidationError("relations", "more than one predicate for an ordered pair");
        }
    }
    if (!finite_all(scene.global)) throw ValidationError("global", "non-finite value");
}

std::string scene_to_line(const SceneRecord& scene) {
    std::string out = "{\"id\":";
    out += json(scene.id).dump();
    out += ",\"nodes\":[";
    for (std::size_t i = 0; i < scene.nodes.size(); ++i) {
        const NodeRecord& node = scene.nodes[i];
        if (i) out += ',';
        out += "{\"box\":";
        const auto c = node.box.coords();
        append_array(out, std::vector<double>(c.begin(), c.end()));
        out += ",\"visual\":";
        append_array(out, node.visual);
        out += ",\"class_probs\":";
        append_array(out, node.class_probs);
        out += ",\"gt_class\":" + std::to_string(node.gt_class) + '}';
    }
    out += "],\"relations\":[";
    for (std::size_t i = 0; i < scene.relations.size(); ++i) {
        const auto& r = scene.relations[i];
        if (i) out += ',';
        out += "{\"s\":" + std::to_string(r.subject) + ",\"o\":" + std::to_string(r.object) +
               ",\"p\":" + std::to_string(r.predicate) + '}';
    }
    out += "],\"global\":";
    append_array(out, scene.global);
    out += '}';
    return out;
}

SceneRecord scene_from_line(const std::string& line, std::size_t line_no) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed record: ") + e.what(), line_no);
    }
    try {
        if (!j.is_object()) throw ValidationError("record", "expected an object");
        SceneRecord scene;
        const json& id = require(j, "id");
        if (!id.is_string()) throw ValidationError("id", "expected a string");
        scene.id = id.get<std::string>();
        const json& nodes = require(j, "nodes");
        if (!nodes.is_array()) throw ValidationError("nodes", "expected an array");
        for (const json& jn : nodes) {
            if (!jn.is_object()) throw ValidationError("nodes", "expected objects");
            NodeRecord node;
            auto box = read_reals(require(jn, "box"), "box");
            if (box.size() != 4) throw ValidationError("box", "expected 4 coordinates");
            node.box = {box[0], box[1], box[2], box[3]};
            node.visual = read_reals(require(jn, "visual"), "visual");
            node.class_probs = read_reals(require(jn, "class_probs"), "class_probs");
            node.gt_class = read_index(require(jn, "gt_class"), "gt_class");
            scene.nodes.push_back(std::move(node));
        }
        const json& rels = require(j, "relations");
        if (!rels.is_array()) throw ValidationError("relations", "expected an array");
        for (const json& jr : rels) {
            if (!jr.is_object()) throw ValidationError("relations", "expected objects");
            scene.relations.push_back({read_index(require(jr, "s"), "relations"),
                                       read_index(require(jr, "o"), "relations"),
                                       read_index(require(jr, "p"), "relations")});
        }
        scene.global = read_reals(require(j, "global"), "global");
        return scene;
    } catch (const ValidationError& e) {
        if (line_no == 0) throw;
        throw ValidationError(e.field(), std::string("line ") + std::to_string(line_no) + ": " +
                                             std::string(e.what()).substr(e.field().size() + 2));
    }
}

std::vector<SceneRecord> load_dataset(const std::filesystem::path& path, const Vocab* vocab) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset file " + path.string());
    std::vector<SceneRecord> scenes;
    std::string line;
    std::size_t line_no = 0;
    std::size_t visual_dim = 0, global_dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        SceneRecord scene = scene_from_line(line, line_no);
        try {
            validate_scene(scene, vocab);
            if (!scenes.empty()) {
                if (!scene.nodes.empty() && visual_dim && scene.nodes[0].visual.size() != visual_dim) {
                    throw ValidationError("visual", "length differs from earlier scenes");
                }
                if (scene.global.size() != global_dim) {
                    throw ValidationError("global", "length differs from earlier scenes");
                }
            }
        } catch (const ValidationError& e) {
            throw ValidationError(e.field(), "line " + std::to_string(line_no) + ": " +
                                                 std::string(e.what()).substr(e.field().size() + 2));
        }
        if (!scene.nodes.empty() && visual_dim == 0) visual_dim = scene.nodes[0].visual.size();
        global_dim = scene.global.size();
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

void save_dataset(const std::filesystem::path& path, const std::vector<SceneRecord>& scenes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write dataset file " + path.string());
    for (const auto& s : scenes) out << scene_to_line(s) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string vocab_to_json(const Vocab& vocab) {
    json j;
    j["classes"] = vocab.classes;
    j["predicates"] = vocab.predicates;
    return j.dump();
}

Vocab vocab_from_json(const std::string& text) {
    try {
        json j = json::parse(text);
        Vocab v{j.at("classes").get<std::vector<std::string>>(),
                j.at("predicates").get<std::vector<std::string>>()};
        v.validate();
        return v;
    } catch (const json::exception& e) {
        throw ParseError(std::string("vocab: ") + e.what());
    }
}

}  // namespace rtn
