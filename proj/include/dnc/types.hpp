#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace dnc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

/// Matrix of iid standard normal draws.
inline Mat standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Mat z(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = nd(rng);
    return z;
}

inline Vec standard_normal(Eigen::Index n, Rng& rng) {
    return standard_normal(n, 1, rng).col(0);
}

/// Uniform draw on the open-closed interval (0, 1].
inline double uniform_open_closed(Rng& rng) {
    return 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Derive an independent stream seed from a base seed and a stream index.
inline std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace dnc
