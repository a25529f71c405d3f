#pragma once

#include <cmath>
#include <optional>

#include "quadpi/common.hpp"

namespace quadpi {

// A per-sample prediction with its 1-alpha interval. The variance split is
// present for the analytic and bootstrap methods; direct bound estimation
// carries no decomposition.
struct PredictionInterval {
    double y_hat = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    std::optional<double> sigma2_model;  // model-uncertainty variance
    std::optional<double> sigma2_noise;  // measurement-uncertainty variance

    double width() const { return upper - lower; }

    void validate() const {
        require(std::isfinite(y_hat) && std::isfinite(lower) && std::isfinite(upper),
                "PredictionInterval: non-finite entry");
        require(lower <= y_hat && y_hat <= upper,
                "PredictionInterval: prediction must lie within bounds");
        if (sigma2_model) require(*sigma2_model >= 0.0, "PredictionInterval: negative model variance");
        if (sigma2_noise) require(*sigma2_noise >= 0.0, "PredictionInterval: negative noise variance");
    }

    bool contains(double y) const { return y >= lower && y <= upper; }
};

}  // namespace quadpi
