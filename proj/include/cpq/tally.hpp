#pragma once

#include <cstdint>
#include <unordered_map>

#include "cpq/distribution.hpp"

namespace cpq {

// Multiset of observed labels for one input, with the frequency-of-frequency
// histogram kept incrementally: freq_of_freq(r) is the number of distinct
// labels seen exactly r times. Singleton and doubleton counts feed the
// missing-mass and derivative estimators.
class Tally {
public:
    void push(LabelId y);

    std::int64_t total() const noexcept { return total_; }
    std::size_t distinct() const noexcept { return counts_.size(); }
    std::int64_t count(LabelId y) const;
    std::int64_t freq_of_freq(std::int64_t r) const;
    std::int64_t singletons() const { return freq_of_freq(1); }
    std::int64_t doubletons() const { return freq_of_freq(2); }

    const std::unordered_map<LabelId, std::int64_t>& counts() const noexcept {
        return counts_;
    }
    const std::unordered_map<std::int64_t, std::int64_t>& freq_histogram() const noexcept {
        return freq_;
    }

private:
    std::unordered_map<LabelId, std::int64_t> counts_;
    std::unordered_map<std::int64_t, std::int64_t> freq_;
    std::int64_t total_ = 0;
};

} // namespace cpq
