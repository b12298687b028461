#include "cocole/topk.hpp"

#include <algorithm>
#include <numeric>

#include "cocole/error.hpp"

namespace cocole {

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
    require(k <= scores.size(), ErrorKind::kContract,
            "top_k: k=" + std::to_string(k) + " exceeds " + std::to_string(scores.size()) + " candidates");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
    idx.resize(k);
    return idx;
}

}  // namespace cocole
