#ifndef DROWSE_LOSS_HPP_
#define DROWSE_LOSS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

#include "dataio.hpp"
#include "numerics.hpp"

namespace drowse {

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean of -ln p[y] over the rows of a [B, 2] probability tensor.
inline double cross_entropy(const Tensor& probabilities, std::span<const Label> labels)
{
    if (probabilities.rank() != 2 || probabilities.dim(1) != 2)
        throw std::invalid_argument("cross_entropy: probabilities must be [B, 2]");
    const std::size_t batch = probabilities.dim(0);
    if (labels.size() != batch)
        throw std::invalid_argument("cross_entropy: label count mismatch");
    double sum = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double p = probabilities(b, static_cast<std::size_t>(to_int(labels[b])));
        sum -= std::log(std::max(p, kProbabilityFloor));
    }
    return sum / static_cast<double>(batch);
}

} // namespace drowse

#endif // DROWSE_LOSS_HPP_
