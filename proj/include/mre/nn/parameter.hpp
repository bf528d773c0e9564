#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mre/nn/rng.hpp"

namespace mre::nn {

using Mat = Eigen::MatrixXd;

enum class Init { Xavier, Zero, One };

// A named trainable tensor. Gradients accumulate into `grad` during backward
// and are consumed by the optimizer.
struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
    Init init = Init::Xavier;

    Parameter() = default;
    Parameter(std::string n, Eigen::Index rows, Eigen::Index cols, Init kind, Rng& rng)
        : name(std::move(n)), value(rows, cols), grad(Mat::Zero(rows, cols)), init(kind) {
        reset(rng);
    }

    void reset(Rng& rng) {
        switch (init) {
            case Init::Zero: value.setZero(); break;
            case Init::One: value.setOnes(); break;
            case Init::Xavier: {
                const double bound = xavier_bound(value.rows(), value.cols());
                for (Eigen::Index j = 0; j < value.cols(); ++j)
                    for (Eigen::Index i = 0; i < value.rows(); ++i)
                        value(i, j) = rng.uniform(-bound, bound);
                break;
            }
        }
        grad.setZero();
    }

    void zero_grad() { grad.setZero(); }

    static double xavier_bound(Eigen::Index rows, Eigen::Index cols) {
        return std::sqrt(6.0 / static_cast<double>(rows + cols));
    }
};

using ParamGroup = std::vector<Parameter*>;

inline void zero_grads(const ParamGroup& group) {
    for (auto* p : group) p->zero_grad();
}

// FNV-1a over the raw bytes of every value, in group order. Used for the
// frozen-parameter contract checks.
inline std::uint64_t checksum(const ParamGroup& group) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const unsigned char* data, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= data[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto* p : group) {
        mix(reinterpret_cast<const unsigned char*>(p->name.data()), p->name.size());
        mix(reinterpret_cast<const unsigned char*>(p->value.data()),
            sizeof(double) * static_cast<std::size_t>(p->value.size()));
    }
    return h;
}

}  // namespace mre::nn
