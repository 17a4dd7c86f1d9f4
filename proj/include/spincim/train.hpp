#pragma once

#include "spincim/config.hpp"
#include "spincim/dataset.hpp"
#include "spincim/model.hpp"
#include "spincim/uncertainty.hpp"

#include <iosfwd>
#include <vector>

namespace spincim {

struct TrainResult {
    Model model;
    std::vector<double> epoch_loss;
    std::vector<double> epoch_acc;
    bool diverged = false;
};

// Method-specific objective: CE (+ lambda * scale regularizer) for the
// dropout approximations, annealed ELBO for the VI pair. SpinBayes
// trains as vi_subset and quantizes its posterior into banks afterwards.
// On divergence (non-finite loss) the last epoch-end state is restored
// and the result is flagged.
TrainResult run_training(const RunConfig& cfg, const Dataset& train_data,
                         std::ostream* log = nullptr);

// MC evaluation with optional crossbar routing. Device mode programs
// the arrays and realizes module probabilities from (seed, module).
UncertaintyReport run_eval(const Model& model, const Dataset& data, std::size_t passes,
                           ExecMode mode, const CrossbarConfig& xb, const DeviceConfig& dev,
                           std::uint64_t seed);

} // namespace spincim
