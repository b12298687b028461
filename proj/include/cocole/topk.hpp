#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cocole {

// Indices of the k largest scores, in descending score order. Equal scores
// are ordered by lower index first.
std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k);

}  // namespace cocole
