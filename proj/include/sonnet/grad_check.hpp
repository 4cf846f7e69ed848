#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonnet/graph.hpp"

namespace sonnet {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    Eigen::Index worst_index = -1;
    std::size_t coordinates = 0;
};

// Compares backward() against central differences on up to
// `coords_per_param` randomly chosen coordinates of every parameter
// (all coordinates when the parameter is smaller). The builder must be
// deterministic for fixed parameter values. The relative error's
// denominator is floored at 1e-6 * max(1, |loss|): central-difference
// roundoff grows with the loss and swamps gradients below that.
template <class Scalar>
GradCheckReport grad_check(const std::function<BasicVar<Scalar>(BasicGraph<Scalar>&)>& build_loss,
                           BasicParameterSet<Scalar>& params, double epsilon = 1e-5,
                           std::size_t coords_per_param = 12, std::uint64_t seed = 7) {
    params.zero_grad();
    double floor = 1e-6;
    {
        BasicGraph<Scalar> g;
        auto loss = build_loss(g);
        const double value = static_cast<double>(loss.scalar());
        if (!std::isfinite(value)) throw std::runtime_error("grad_check: non-finite loss");
        floor *= std::max(1.0, std::abs(value));
        g.backward(loss);
    }
    Rng rng(seed);
    GradCheckReport report;
    auto eval = [&](const std::string& name) {
        BasicGraph<Scalar> g(false);
        const double v = static_cast<double>(build_loss(g).scalar());
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss when perturbing " + name);
        return v;
    };
    for (auto& [name, p] : params) {
        const Eigen::Index n = p.value.size();
        std::vector<Eigen::Index> coords;
        if (static_cast<std::size_t>(n) <= coords_per_param) {
            for (Eigen::Index k = 0; k < n; ++k) coords.push_back(k);
        } else {
            for (std::size_t k = 0; k < coords_per_param; ++k)
                coords.push_back(static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n))));
        }
        for (Eigen::Index k : coords) {
            const Scalar saved = p.value(k);
            p.value(k) = saved + static_cast<Scalar>(epsilon);
            const double up = eval(name);
            p.value(k) = saved - static_cast<Scalar>(epsilon);
            const double down = eval(name);
            p.value(k) = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double analytic = static_cast<double>(p.grad(k));
            const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
            const double rel = std::abs(analytic - numeric) / denom;
            ++report.coordinates;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_parameter = name;
                report.worst_index = k;
            }
        }
    }
    return report;
}

}  // namespace sonnet
