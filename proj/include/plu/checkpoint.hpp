#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "plu/error.hpp"
#include "plu/predictor.hpp"

namespace plu {

inline constexpr int kCheckpointSchemaVersion = 1;

namespace io {

inline nlohmann::json layers_json(const std::vector<Layer>& layers) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& L : layers) out.push_back({{"in", L.in}, {"out", L.out}, {"w", L.w}, {"b", L.b}});
    return out;
}

inline std::vector<Layer> layers_from(const nlohmann::json& j) {
    std::vector<Layer> out;
    for (const auto& l : j) {
        Layer L;
        L.in = l.at("in").get<int>();
        L.out = l.at("out").get<int>();
        L.w = l.at("w").get<std::vector<double>>();
        L.b = l.at("b").get<std::vector<double>>();
        if (L.w.size() != static_cast<std::size_t>(L.in) * L.out || L.b.size() != static_cast<std::size_t>(L.out))
            throw SchemaError("checkpoint: layer shape does not match its buffers");
        out.push_back(std::move(L));
    }
    return out;
}

} // namespace io

struct Checkpoint {
    Mlp net;
    OptimState opt;
};

inline nlohmann::json checkpoint_json(const Mlp& net, const OptimState& opt) {
    return {{"kind", "plu-checkpoint"},
            {"schema_version", kCheckpointSchemaVersion},
            {"layers", io::layers_json(net.layers())},
            {"optimizer", {{"lr", opt.lr}, {"momentum", opt.momentum}, {"velocity", io::layers_json(opt.velocity.layers)}}}};
}

inline Checkpoint checkpoint_from(const nlohmann::json& j) {
    if (j.value("kind", "") != "plu-checkpoint") throw SchemaError("not a plu checkpoint");
    if (j.at("schema_version").get<int>() != kCheckpointSchemaVersion) throw SchemaError("unsupported checkpoint version");
    Checkpoint c;
    auto layers = io::layers_from(j.at("layers"));
    std::vector<int> sizes;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (l == 0) sizes.push_back(layers[l].in);
        else if (layers[l].in != layers[l - 1].out) throw SchemaError("checkpoint: layer sizes do not chain");
        sizes.push_back(layers[l].out);
    }
    c.net = Mlp(sizes);
    c.net.layers() = std::move(layers);
    const auto& o = j.at("optimizer");
    c.opt.lr = o.at("lr").get<double>();
    c.opt.momentum = o.at("momentum").get<double>();
    c.opt.velocity.layers = io::layers_from(o.at("velocity"));
    if (!c.opt.velocity.layers.empty() && !c.opt.velocity.congruent_with(c.net.layers()))
        throw SchemaError("checkpoint: velocity buffers do not match parameters");
    return c;
}

inline void save_checkpoint(const Mlp& net, const OptimState& opt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << checkpoint_json(net, opt).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    try {
        return checkpoint_from(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

} // namespace plu
