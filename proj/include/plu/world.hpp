#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plu/error.hpp"
#include "plu/geometry.hpp"
#include "plu/rng.hpp"

namespace plu {

using Feature = std::vector<double>;

struct ClassSpec {
    int class_id = 0;
    Feature prototype;
    double spread = 0.15;
    // Distance to the nearest prototype of the initially known set (0 for those).
    double shift = 0.0;
    bool initially_known = true;

    friend bool operator==(const ClassSpec&, const ClassSpec&) = default;
};

// Generator-side provenance of a proposal. Training code never reads it.
struct Truth {
    enum class Kind { background, foreground };
    Kind kind = Kind::background;
    int class_id = -1;
    int object = -1;  // index into Scene::objects

    bool is_foreground() const { return kind == Kind::foreground; }
    friend bool operator==(const Truth&, const Truth&) = default;
};

struct Proposal {
    BBox box;
    Feature feature;
    double objectness = 0.0;
    Truth truth;

    friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct Annotation {
    int class_id = 0;
    BBox box;

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct Scene {
    int scene_id = 0;
    std::vector<Annotation> gt;        // known-class annotations only
    std::vector<Proposal> proposals;
    std::vector<Annotation> objects;   // every placed object, evaluator-only

    std::vector<BBox> proposal_boxes() const {
        std::vector<BBox> out;
        out.reserve(proposals.size());
        for (const auto& p : proposals) out.push_back(p.box);
        return out;
    }
    std::vector<BBox> gt_boxes() const {
        std::vector<BBox> out;
        out.reserve(gt.size());
        for (const auto& g : gt) out.push_back(g.box);
        return out;
    }

    friend bool operator==(const Scene&, const Scene&) = default;
};

struct WorldParams {
    int d = 32;
    double spread = 0.15;
    double sigma_bg = 0.8;
    double noise = 0.05;
    int n_bg_proposals = 30;
    int objects_min = 2;
    int objects_max = 6;
    double jitter = 0.15;
    int copies_min = 2;
    int copies_max = 4;
    double shift_min = 1.0;
    double shift_max = 2.0;
    double object_size_min = 0.1;
    double object_size_max = 0.35;
    double bg_size_min = 0.05;
    double bg_size_max = 0.5;

    void validate() const {
        if (d < 2) throw ConfigError("world.d must be >= 2");
        if (!(spread > 0.0)) throw ConfigError("world.spread must be > 0");
        if (!(sigma_bg > 0.0)) throw ConfigError("world.sigma_bg must be > 0");
        if (noise < 0.0) throw ConfigError("world.noise must be >= 0");
        if (n_bg_proposals < 0) throw ConfigError("world.n_bg_proposals must be >= 0");
        if (objects_min < 0 || objects_max < objects_min) throw ConfigError("world.objects range invalid");
        if (jitter < 0.0 || jitter >= 0.5) throw ConfigError("world.jitter must lie in [0, 0.5)");
        if (copies_min < 1 || copies_max < copies_min) throw ConfigError("world.copies range invalid");
        if (shift_min < 0.0 || shift_min > shift_max) throw ConfigError("world shift range: min > max");
        if (!(object_size_min > 0.0) || object_size_max < object_size_min || object_size_max > 1.0)
            throw ConfigError("world.object_size range invalid");
        if (!(bg_size_min > 0.0) || bg_size_max < bg_size_min || bg_size_max > 1.0)
            throw ConfigError("world.bg_size range invalid");
    }
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline Feature random_unit(Rng& rng, int d) {
    Feature v(d);
    double n = 0.0;
    while (n < 1e-12) {
        for (auto& x : v) x = rng.normal();
        n = norm(v);
    }
    for (auto& x : v) x /= n;
    return v;
}

inline double nearest_distance(std::span<const double> x, const std::vector<ClassSpec>& known) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& k : known) best = std::min(best, distance(x, k.prototype));
    return best;
}

} // namespace detail

// Known prototypes uniformly on the unit sphere; each unknown prototype sits
// at a distance drawn from shift_range to its nearest known prototype.
inline std::vector<ClassSpec> generate_world(int n_known, int n_unknown, int d,
                                             std::pair<double, double> shift_range, std::uint64_t seed,
                                             double spread = 0.15) {
    if (n_known < 1) throw ConfigError("generate_world: n_known must be >= 1");
    if (n_unknown < 0) throw ConfigError("generate_world: n_unknown must be >= 0");
    if (d < 2) throw ConfigError("generate_world: d must be >= 2");
    if (shift_range.first > shift_range.second) throw ConfigError("generate_world: shift range min > max");
    if (shift_range.first < 0.0) throw ConfigError("generate_world: negative shift");
    if (!(spread > 0.0)) throw ConfigError("generate_world: spread must be > 0");

    Rng rng(derive_seed(seed, {stream::world}));
    std::vector<ClassSpec> world;
    world.reserve(n_known + n_unknown);
    for (int c = 0; c < n_known; ++c) {
        world.push_back({c, detail::random_unit(rng, d), spread, 0.0, true});
    }
    const std::vector<ClassSpec> known(world.begin(), world.end());

    for (int u = 0; u < n_unknown; ++u) {
        const double s = rng.uniform(shift_range.first, shift_range.second);
        const auto& anchor = known[static_cast<std::size_t>(rng.uniform_int(0, n_known - 1))].prototype;
        // Tangent direction at the anchor, so similarity to the anchor falls
        // off monotonically with the shift.
        Feature dir = detail::random_unit(rng, d);
        const double along = detail::dot(dir, anchor);
        for (int i = 0; i < d; ++i) dir[i] -= along * anchor[i];
        const double dn = detail::norm(dir);
        for (auto& v : dir) v /= dn;
        auto at = [&](double t) {
            Feature p(d);
            for (int i = 0; i < d; ++i) p[i] = anchor[i] + t * dir[i];
            return p;
        };
        // Walk out along the ray until the nearest-known distance equals s.
        // The distance is continuous in t, 0 at t=0 and >= t-2 beyond, so
        // bisection on [0, s+2] brackets a root.
        double lo = 0.0;
        double hi = s + 2.0;
        for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (detail::nearest_distance(at(mid), known) < s) lo = mid; else hi = mid;
        }
        Feature proto = at(hi);
        const double shift = detail::nearest_distance(proto, known);
        world.push_back({n_known + u, std::move(proto), spread, shift, false});
    }
    return world;
}

// Maps s in [-1-3 noise, 1+3 noise] affinely onto [0, 1].
inline double squash_objectness(double s, double noise) {
    const double lo = -1.0 - 3.0 * noise;
    const double hi = 1.0 + 3.0 * noise;
    return std::clamp((s - lo) / (hi - lo), 0.0, 1.0);
}

// Objectness that favours appearance close to a known class.
inline double biased_objectness(std::span<const double> feature, std::span<const Feature> known_prototypes,
                                double noise, std::uint64_t seed) {
    if (known_prototypes.empty()) throw InvalidInput("biased_objectness: no known prototypes");
    const double fn = detail::norm(feature);
    double sim = 0.0;
    if (fn > 0.0) {
        sim = -std::numeric_limits<double>::infinity();
        for (const auto& p : known_prototypes) {
            if (p.size() != feature.size()) throw ShapeError("biased_objectness: dimension mismatch");
            const double pn = detail::norm(p);
            const double c = pn > 0.0 ? detail::dot(feature, p) / (fn * pn) : 0.0;
            sim = std::max(sim, c);
        }
    }
    double eps = 0.0;
    if (noise > 0.0) {
        Rng rng(seed);
        eps = rng.normal(0.0, noise);
    }
    return squash_objectness(sim + eps, noise);
}

inline std::vector<Feature> prototypes_of(const std::vector<ClassSpec>& world, std::span<const int> ids) {
    std::vector<Feature> out;
    for (int id : ids) {
        auto it = std::find_if(world.begin(), world.end(), [&](const ClassSpec& c) { return c.class_id == id; });
        if (it == world.end()) throw InvalidInput("unknown class id " + std::to_string(id));
        out.push_back(it->prototype);
    }
    return out;
}

// Relative sampling weight per class id for the objects placed in a scene.
struct ClassPool {
    std::vector<int> class_ids;
    std::vector<double> weights;

    static ClassPool uniform(const std::vector<ClassSpec>& world) {
        ClassPool p;
        for (const auto& c : world) {
            p.class_ids.push_back(c.class_id);
            p.weights.push_back(1.0);
        }
        return p;
    }
};

namespace detail {

inline BBox random_box(Rng& rng, double smin, double smax) {
    const double w = rng.uniform(smin, smax);
    const double h = rng.uniform(smin, smax);
    const double x1 = rng.uniform(0.0, 1.0 - w);
    const double y1 = rng.uniform(0.0, 1.0 - h);
    return {x1, y1, std::min(1.0, x1 + w), std::min(1.0, y1 + h)};
}

inline BBox jittered(Rng& rng, const BBox& b, double jitter) {
    if (jitter <= 0.0) return b;
    const double w = b.width();
    const double h = b.height();
    for (int attempt = 0; attempt < 100; ++attempt) {
        BBox j{std::clamp(b.x1 + rng.uniform(-jitter, jitter) * w, 0.0, 1.0),
               std::clamp(b.y1 + rng.uniform(-jitter, jitter) * h, 0.0, 1.0),
               std::clamp(b.x2 + rng.uniform(-jitter, jitter) * w, 0.0, 1.0),
               std::clamp(b.y2 + rng.uniform(-jitter, jitter) * h, 0.0, 1.0)};
        if (j.valid()) return j;
    }
    return b;
}

inline double max_iou(const BBox& b, const std::vector<Annotation>& objs) {
    double m = 0.0;
    for (const auto& o : objs) m = std::max(m, iou(b, o.box));
    return m;
}

} // namespace detail

inline Scene generate_scene(const std::vector<ClassSpec>& world, std::span<const int> known_ids,
                            const WorldParams& params, int scene_id, std::uint64_t seed,
                            std::optional<ClassPool> pool = std::nullopt) {
    params.validate();
    if (world.empty()) throw InvalidInput("generate_scene: empty world");
    for (int id : known_ids) {
        if (std::none_of(world.begin(), world.end(), [&](const ClassSpec& c) { return c.class_id == id; }))
            throw InvalidInput("generate_scene: known id not in world");
    }
    const ClassPool cp = pool ? *pool : ClassPool::uniform(world);
    if (cp.class_ids.empty() || cp.class_ids.size() != cp.weights.size())
        throw InvalidInput("generate_scene: bad class pool");

    Rng rng(derive_seed(seed, {stream::scene, static_cast<std::uint64_t>(scene_id)}));
    const auto known_protos = prototypes_of(world, known_ids);
    auto is_known = [&](int c) { return std::find(known_ids.begin(), known_ids.end(), c) != known_ids.end(); };
    auto spec_of = [&](int c) -> const ClassSpec& {
        return *std::find_if(world.begin(), world.end(), [&](const ClassSpec& s) { return s.class_id == c; });
    };

    Scene scene;
    scene.scene_id = scene_id;
    std::discrete_distribution<int> pick(cp.weights.begin(), cp.weights.end());
    const int n_objects = rng.uniform_int(params.objects_min, params.objects_max);
    for (int o = 0; o < n_objects; ++o) {
        const int cls = cp.class_ids[static_cast<std::size_t>(pick(rng.engine()))];
        BBox box = detail::random_box(rng, params.object_size_min, params.object_size_max);
        for (int attempt = 0; attempt < 50 && detail::max_iou(box, scene.objects) > 0.1; ++attempt) {
            box = detail::random_box(rng, params.object_size_min, params.object_size_max);
        }
        scene.objects.push_back({cls, box});
        if (is_known(cls)) scene.gt.push_back({cls, box});
    }

    const int d = params.d;
    std::vector<Proposal> props;
    for (int o = 0; o < n_objects; ++o) {
        const auto& obj = scene.objects[static_cast<std::size_t>(o)];
        const auto& spec = spec_of(obj.class_id);
        if (static_cast<int>(spec.prototype.size()) != d) throw ShapeError("generate_scene: world dimension mismatch");
        const int copies = rng.uniform_int(params.copies_min, params.copies_max);
        for (int k = 0; k < copies; ++k) {
            Proposal p;
            p.box = detail::jittered(rng, obj.box, params.jitter);
            p.feature.resize(d);
            for (int i = 0; i < d; ++i) p.feature[i] = spec.prototype[i] + rng.normal(0.0, spec.spread);
            p.truth = {Truth::Kind::foreground, obj.class_id, o};
            props.push_back(std::move(p));
        }
    }
    for (int b = 0; b < params.n_bg_proposals; ++b) {
        Proposal p;
        p.box = detail::random_box(rng, params.bg_size_min, params.bg_size_max);
        for (int attempt = 0; attempt < 20 && detail::max_iou(p.box, scene.objects) >= 0.5; ++attempt) {
            p.box = detail::random_box(rng, params.bg_size_min, params.bg_size_max);
        }
        p.feature.resize(d);
        for (int i = 0; i < d; ++i) p.feature[i] = rng.normal(0.0, params.sigma_bg);
        props.push_back(std::move(p));
    }
    std::shuffle(props.begin(), props.end(), rng.engine());
    for (std::size_t i = 0; i < props.size(); ++i) {
        props[i].objectness = biased_objectness(
            props[i].feature, known_protos, params.noise,
            derive_seed(seed, {stream::objectness, static_cast<std::uint64_t>(scene_id), i}));
    }
    scene.proposals = std::move(props);
    return scene;
}

} // namespace plu
