#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "plu/error.hpp"
#include "plu/tasks.hpp"
#include "plu/world.hpp"

namespace plu {

inline constexpr int kDatasetSchemaVersion = 1;

struct DatasetHeader {
    int schema_version = kDatasetSchemaVersion;
    int d = 0;
    std::uint64_t seed = 0;
    WorldParams params;
    std::vector<ClassSpec> classes;
    std::vector<TaskSplit> tasks;

    friend bool operator==(const DatasetHeader& a, const DatasetHeader& b) {
        return a.schema_version == b.schema_version && a.d == b.d && a.seed == b.seed && a.classes == b.classes &&
               a.tasks == b.tasks;
    }
};

struct DatasetFile {
    DatasetHeader header;
    std::vector<Scene> scenes;
};

namespace io {

using nlohmann::json;

inline json box_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

inline BBox box_from(const json& j) {
    if (!j.is_array() || j.size() != 4) throw DataError("box must be an array of 4 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline json params_json(const WorldParams& p) {
    return {{"d", p.d},
            {"spread", p.spread},
            {"sigma_bg", p.sigma_bg},
            {"noise", p.noise},
            {"n_bg_proposals", p.n_bg_proposals},
            {"objects_min", p.objects_min},
            {"objects_max", p.objects_max},
            {"jitter", p.jitter},
            {"copies_min", p.copies_min},
            {"copies_max", p.copies_max},
            {"shift_min", p.shift_min},
            {"shift_max", p.shift_max},
            {"object_size_min", p.object_size_min},
            {"object_size_max", p.object_size_max},
            {"bg_size_min", p.bg_size_min},
            {"bg_size_max", p.bg_size_max}};
}

inline WorldParams params_from(const json& j) {
    WorldParams p;
    p.d = j.at("d").get<int>();
    p.spread = j.at("spread").get<double>();
    p.sigma_bg = j.at("sigma_bg").get<double>();
    p.noise = j.at("noise").get<double>();
    p.n_bg_proposals = j.at("n_bg_proposals").get<int>();
    p.objects_min = j.at("objects_min").get<int>();
    p.objects_max = j.at("objects_max").get<int>();
    p.jitter = j.at("jitter").get<double>();
    p.copies_min = j.at("copies_min").get<int>();
    p.copies_max = j.at("copies_max").get<int>();
    p.shift_min = j.at("shift_min").get<double>();
    p.shift_max = j.at("shift_max").get<double>();
    p.object_size_min = j.at("object_size_min").get<double>();
    p.object_size_max = j.at("object_size_max").get<double>();
    p.bg_size_min = j.at("bg_size_min").get<double>();
    p.bg_size_max = j.at("bg_size_max").get<double>();
    return p;
}

inline json header_json(const DatasetHeader& h) {
    json classes = json::array();
    for (const auto& c : h.classes) {
        classes.push_back({{"class_id", c.class_id},
                           {"prototype", c.prototype},
                           {"spread", c.spread},
                           {"shift", c.shift},
                           {"initially_known", c.initially_known}});
    }
    json tasks = json::array();
    for (const auto& t : h.tasks) {
        tasks.push_back({{"task_id", t.task_id},
                         {"known", t.known},
                         {"introduced", t.introduced},
                         {"unknown", t.unknown},
                         {"train_ids", t.train_ids},
                         {"test_ids", t.test_ids},
                         {"mean_unknown_objects", t.mean_unknown_objects}});
    }
    return {{"kind", "plu-dataset"},
            {"schema_version", h.schema_version},
            {"d", h.d},
            {"seed", h.seed},
            {"params", params_json(h.params)},
            {"classes", classes},
            {"tasks", tasks}};
}

inline DatasetHeader header_from(const json& j) {
    DatasetHeader h;
    if (j.value("kind", "") != "plu-dataset") throw SchemaError("line 1: not a plu-dataset header");
    h.schema_version = j.at("schema_version").get<int>();
    if (h.schema_version != kDatasetSchemaVersion)
        throw SchemaError("line 1: unsupported schema_version " + std::to_string(h.schema_version));
    h.d = j.at("d").get<int>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.params = params_from(j.at("params"));
    for (const auto& c : j.at("classes")) {
        ClassSpec s;
        s.class_id = c.at("class_id").get<int>();
        s.prototype = c.at("prototype").get<Feature>();
        s.spread = c.at("spread").get<double>();
        s.shift = c.at("shift").get<double>();
        s.initially_known = c.at("initially_known").get<bool>();
        if (static_cast<int>(s.prototype.size()) != h.d)
            throw SchemaError("line 1: class " + std::to_string(s.class_id) + " prototype dimension mismatch");
        h.classes.push_back(std::move(s));
    }
    for (const auto& t : j.at("tasks")) {
        TaskSplit s;
        s.task_id = t.at("task_id").get<int>();
        s.known = t.at("known").get<std::vector<int>>();
        s.introduced = t.at("introduced").get<std::vector<int>>();
        s.unknown = t.at("unknown").get<std::vector<int>>();
        s.train_ids = t.at("train_ids").get<std::vector<int>>();
        s.test_ids = t.at("test_ids").get<std::vector<int>>();
        s.mean_unknown_objects = t.at("mean_unknown_objects").get<double>();
        h.tasks.push_back(std::move(s));
    }
    return h;
}

inline json annotations_json(const std::vector<Annotation>& as) {
    json a = json::array();
    for (const auto& g : as) a.push_back({g.class_id, g.box.x1, g.box.y1, g.box.x2, g.box.y2});
    return a;
}

inline std::vector<Annotation> annotations_from(const json& j) {
    std::vector<Annotation> out;
    for (const auto& g : j) {
        if (!g.is_array() || g.size() != 5) throw DataError("annotation must be [class, x1, y1, x2, y2]");
        out.push_back({g[0].get<int>(), {g[1].get<double>(), g[2].get<double>(), g[3].get<double>(), g[4].get<double>()}});
    }
    return out;
}

inline json scene_json(const Scene& s) {
    json props = json::array();
    for (const auto& p : s.proposals) {
        props.push_back({{"box", box_json(p.box)},
                         {"feature", p.feature},
                         {"objectness", p.objectness},
                         {"truth", {p.truth.is_foreground() ? 1 : 0, p.truth.class_id, p.truth.object}}});
    }
    return {{"scene_id", s.scene_id},
            {"gt", annotations_json(s.gt)},
            {"objects", annotations_json(s.objects)},
            {"proposals", props}};
}

inline Scene scene_from(const json& j, int d) {
    Scene s;
    s.scene_id = j.at("scene_id").get<int>();
    s.gt = annotations_from(j.at("gt"));
    s.objects = annotations_from(j.at("objects"));
    for (const auto& p : j.at("proposals")) {
        Proposal q;
        q.box = box_from(p.at("box"));
        q.feature = p.at("feature").get<Feature>();
        q.objectness = p.at("objectness").get<double>();
        const auto& t = p.at("truth");
        if (!t.is_array() || t.size() != 3) throw DataError("truth must be [fg, class, object]");
        q.truth = {t[0].get<int>() ? Truth::Kind::foreground : Truth::Kind::background, t[1].get<int>(), t[2].get<int>()};
        if (static_cast<int>(q.feature.size()) != d)
            throw SchemaError("feature dimension " + std::to_string(q.feature.size()) + " does not match header d=" +
                              std::to_string(d));
        s.proposals.push_back(std::move(q));
    }
    return s;
}

} // namespace io

// One header object, then one scene object per line.
inline void save_dataset(const DatasetFile& ds, std::ostream& out) {
    out << io::header_json(ds.header).dump() << '\n';
    for (const auto& s : ds.scenes) out << io::scene_json(s).dump() << '\n';
}

inline void save_dataset(const DatasetFile& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    save_dataset(ds, out);
    if (!out) throw DataError("write failed: " + path);
}

inline DatasetFile load_dataset(std::istream& in) {
    DatasetFile ds;
    std::string line;
    if (!std::getline(in, line)) throw DataError("line 1: missing dataset header");
    try {
        ds.header = io::header_from(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("line 1: ") + e.what());
    }
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            ds.scenes.push_back(io::scene_from(nlohmann::json::parse(line), ds.header.d));
        } catch (const SchemaError& e) {
            throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(lineno) + ": " + e.what());
        } catch (const nlohmann::json::exception& e) {
            throw DataError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return ds;
}

inline DatasetFile load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    return load_dataset(in);
}

// FNV-1a over the file bytes, for run manifests.
inline std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

} // namespace plu
