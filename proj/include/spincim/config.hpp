#pragma once

#include "spincim/model.hpp"
#include "spincim/resource.hpp"

#include <cstdint>
#include <string>

namespace spincim {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch = 32;
    double lr = 0.01;
    std::string optimizer = "adam"; // adam | sgd
    double momentum = 0.9;
    std::uint64_t seed = 1;
    std::size_t passes = 10; // MC passes at evaluation
};

struct RunConfig {
    ModelSpec model;
    DeviceConfig device;
    CrossbarConfig crossbar;
    TrainConfig train;
    double lambda = 1e-3;    // scale-regularizer weight
    double kl_weight = 1.0;  // ELBO KL multiplier after annealing
    CostTable costs;
};

// INI-style sections [model] [method] [device] [crossbar] [train] [costs]
// with key = value lines; '#' and ';' start comments. Unknown sections,
// unknown keys and out-of-range values fail with a field-qualified error.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Architecture + method echo embedded in checkpoints.
std::string model_spec_to_text(const ModelSpec& spec);
ModelSpec model_spec_from_text(const std::string& text);

} // namespace spincim
