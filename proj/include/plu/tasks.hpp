#pragma once

#include <vector>

namespace plu {

// Incremental protocol state for one task.
struct TaskSplit {
    int task_id = 1;
    std::vector<int> known;        // K^t, ordered
    std::vector<int> introduced;   // classes first annotated at t
    std::vector<int> unknown;      // U^t = world \ K^t
    std::vector<int> train_ids;
    std::vector<int> test_ids;
    double mean_unknown_objects = 0.0;  // per training scene, from hidden truth

    std::vector<int> previous() const {
        std::vector<int> out;
        for (int c : known) {
            bool intro = false;
            for (int i : introduced) intro = intro || i == c;
            if (!intro) out.push_back(c);
        }
        return out;
    }

    friend bool operator==(const TaskSplit&, const TaskSplit&) = default;
};

} // namespace plu
