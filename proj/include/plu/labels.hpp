#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <vector>

namespace plu {

// Counts every read of a ground-truth annotation, by class, and flags reads
// of classes that are not currently known.
class LabelAudit {
public:
    void set_allowed(std::vector<int> known) {
        allowed_ = std::move(known);
        std::sort(allowed_.begin(), allowed_.end());
    }

    void record(int class_id) {
        ++reads_[class_id];
        if (!std::binary_search(allowed_.begin(), allowed_.end(), class_id)) ++violations_;
    }

    std::size_t violations() const { return violations_; }
    std::size_t reads(int class_id) const {
        auto it = reads_.find(class_id);
        return it == reads_.end() ? 0 : it->second;
    }
    std::size_t total_reads() const {
        std::size_t n = 0;
        for (const auto& [c, k] : reads_) n += k;
        return n;
    }
    const std::map<int, std::size_t>& by_class() const { return reads_; }

private:
    std::vector<int> allowed_;
    std::map<int, std::size_t> reads_;
    std::size_t violations_ = 0;
};

} // namespace plu
