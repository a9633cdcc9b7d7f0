#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "plu/geometry.hpp"
#include "plu/labels.hpp"
#include "plu/predictor.hpp"
#include "plu/rng.hpp"
#include "plu/world.hpp"

namespace plu {

// Closed-set classification head of the desk-scale detector: background at
// output 0, class c at output c + 1. Only currently known classes are active.
struct KnownHead {
    Mlp net;
    OptimState opt;
    std::vector<char> active;

    static KnownHead create(int d, int h1, int h2, int n_classes, std::uint64_t seed) {
        KnownHead h;
        h.net = Mlp({d, h1, h2, n_classes + 1});
        glorot_init(h.net, derive_seed(seed, {stream::head}));
        h.active.assign(static_cast<std::size_t>(n_classes + 1), 0);
        h.active[0] = 1;
        return h;
    }

    void activate(std::span<const int> known) {
        for (int c : known) active.at(static_cast<std::size_t>(c + 1)) = 1;
    }

    // Most probable active output: {class id or -1 for background, probability}.
    std::pair<int, double> classify(std::span<const double> x) const {
        const auto p = softmax(net.forward(x), active);
        const auto best = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        return {best - 1, p[static_cast<std::size_t>(best)]};
    }
};

struct HeadSample {
    Feature feature;
    int label = 0;  // output index
};

struct HeadTrainConfig {
    int epochs = 5;
    int batch = 32;
    double lr = 0.01;
    double momentum = 0.9;
};

// Matched proposals labelled with their GT class, plus as many
// lowest-objectness unmatched proposals labelled background.
inline std::vector<HeadSample> head_samples(const Scene& scene, LabelAudit* audit = nullptr) {
    std::vector<HeadSample> out;
    const auto part = match_proposals(scene.proposal_boxes(), scene.gt_boxes());
    for (const auto& g : scene.gt) if (audit) audit->record(g.class_id);
    for (const auto& m : part.matched) out.push_back({scene.proposals[m.proposal].feature, scene.gt[m.gt].class_id + 1});
    std::vector<std::size_t> pool = part.unmatched;
    std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        return scene.proposals[a].objectness < scene.proposals[b].objectness;
    });
    pool.resize(std::min(pool.size(), part.matched.size()));
    for (auto p : pool) out.push_back({scene.proposals[p].feature, 0});
    return out;
}

inline void train_head(KnownHead& head, std::span<const HeadSample> samples, const HeadTrainConfig& cfg,
                       std::uint64_t seed) {
    if (samples.empty() || cfg.epochs <= 0) return;
    head.opt.lr = cfg.lr;
    head.opt.momentum = cfg.momentum;
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int e = 0; e < cfg.epochs; ++e) {
        Rng rng(derive_seed(seed, {stream::head, static_cast<std::uint64_t>(e)}));
        std::shuffle(order.begin(), order.end(), rng.engine());
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            std::vector<Sample> batch;
            for (std::size_t k = start; k < end; ++k) {
                const auto& s = samples[order[k]];
                batch.push_back({s.feature, s.label, 1.0});
            }
            auto g = backward(head.net, batch, head.active);
            sgd_step(head.net, g.grads, head.opt);
        }
    }
}

} // namespace plu
