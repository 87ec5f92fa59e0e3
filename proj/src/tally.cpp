#include "cpq/tally.hpp"

namespace cpq {

void Tally::push(LabelId y) {
    const std::int64_t r = counts_[y]++;
    if (r > 0) {
        auto it = freq_.find(r);
        if (--it->second == 0) freq_.erase(it);
    }
    ++freq_[r + 1];
    ++total_;
}

std::int64_t Tally::count(LabelId y) const {
    const auto it = counts_.find(y);
    return it == counts_.end() ? 0 : it->second;
}

std::int64_t Tally::freq_of_freq(std::int64_t r) const {
    const auto it = freq_.find(r);
    return it == freq_.end() ? 0 : it->second;
}

} // namespace cpq
