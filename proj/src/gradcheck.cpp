#include "cocole/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cocole {

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h) {
    require(h > 0.0, ErrorKind::kContract, "finite_diff_grad: step must be positive");
    auto base = x.to_vector();
    std::vector<double> g(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        auto probe = base;
        probe[i] = base[i] + h;
        const double up = f(Tensor(x.shape(), probe));
        probe[i] = base[i] - h;
        const double down = f(Tensor(x.shape(), probe));
        g[i] = (up - down) / (2.0 * h);
    }
    return Tensor(x.shape(), std::move(g));
}

double relative_error(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorKind::kDimension, "relative_error: size mismatch");
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(std::max(na, nb));
    if (denom == 0.0) return 0.0;
    return std::sqrt(diff) / denom;
}

}  // namespace cocole
