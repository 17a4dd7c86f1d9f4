#pragma once

#include "spincim/autodiff.hpp"
#include "spincim/crossbar.hpp"
#include "spincim/dropout.hpp"
#include "spincim/mtj.hpp"
#include "spincim/resource.hpp"
#include "spincim/rng.hpp"
#include "spincim/vi.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace spincim {

enum class Method { spindrop, spatial, scaledrop, affine, vi_subset, spinbayes };

enum class LayerKind { dense, conv };
enum class Activation { none, relu, sign };
enum class BinarizePolicy { none, hidden, all_but_last, all };
enum class InputCoding { real, sign, binary01 };
// auto: sign on binarized layers when binarize_activations is set, relu
// otherwise; the explicit values force one activation on every hidden layer
enum class ActivationPolicy { automatic, relu, sign };

const char* method_name(Method m);
Method method_from_string(const std::string& s);

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::size_t in_features = 0, out_features = 0; // dense
    std::size_t in_channels = 0, out_channels = 0; // conv
    std::size_t kernel = 3, pad = 1;
    bool pool = false; // 2x2 max pool after the block

    // resolved by ModelSpec::resolve()
    std::size_t in_h = 0, in_w = 0;
    std::size_t out_h = 0, out_w = 0; // conv output, before pooling
    bool binarized = false;
    bool crossbar_routed = false;
    Activation activation = Activation::relu;

    std::size_t fan_in() const;
    std::size_t fan_out() const { return kind == LayerKind::conv ? out_channels : out_features; }
    std::size_t positions() const { return kind == LayerKind::conv ? out_h * out_w : 1; }
    std::size_t output_units() const { return fan_out() * positions(); }
    std::size_t weight_count() const { return fan_in() * fan_out(); }
};

struct MappingConfig {
    std::size_t max_rows = 256, max_cols = 256;
    MapStrategy strategy = MapStrategy::unfold_column;
};

struct ModelSpec {
    std::vector<std::size_t> input_shape; // {D} or {C, H, W}
    std::vector<LayerSpec> layers;
    Method method = Method::scaledrop;
    double dropout_p = 0.2;
    std::optional<AdaptiveSchedule> adaptive;
    BinarizePolicy binarize = BinarizePolicy::hidden;
    bool binarize_activations = true;
    ActivationPolicy hidden_activation = ActivationPolicy::automatic;
    InputCoding input_coding = InputCoding::real;
    double ste_clip = 1.0;
    PriorSpec prior;
    std::size_t bank_instances = 16;
    int bank_levels = 15;
    MappingConfig mapping;

    void resolve(); // shape inference + routing flags; throws on inconsistency

    std::size_t layer_count() const { return layers.size(); }
    // neuron/spatial masks sit on hidden activations; scale, affine and the
    // VI posterior attach to every block
    bool has_stochastic_site(std::size_t layer, Method m) const;
    // effective dropout probability at a site (adaptive schedule aware)
    double site_probability(std::size_t layer) const;
    MappingPlan layer_plan(std::size_t layer) const;
    std::size_t classes() const { return layers.empty() ? 0 : layers.back().fan_out(); }
};

enum class ParamRole { weight, bias, scale, affine_gamma, affine_beta, posterior_mu, posterior_sigma };

struct Parameter {
    std::string name;
    ParamRole role;
    ad::Var var;
};

struct DeviceConfig {
    MtjParams mtj;
    double pulse_width = 1.0;
    double sigma_p = 0.0; // dropout-module probability spread
};

struct CrossbarConfig {
    double g_on = 2.0, g_off = 1.0;
    NoiseConfig noise;
    FaultConfig faults;
};

enum class ExecMode { math, device };

class Model;

// Programmed arrays + realized dropout modules for device-mode
// execution; built once per evaluation session from a seed substream.
struct DeviceState {
    CrossbarConfig crossbar;
    DeviceConfig device;
    std::vector<MappedLayer> mapped;                         // empty for digital layers
    std::vector<std::vector<DropoutModuleState>> modules;    // per layer dropout instances

    static DeviceState build(const Model& model, const CrossbarConfig& xb, const DeviceConfig& dev,
                             Rng rng);
};

struct Block {
    LayerSpec spec;
    ad::Var weight; // latent for binarized layers
    ad::Var bias;
    ad::Var scale_u;            // scaledrop: s = softplus(scale_u)
    ad::Var post_mu, post_rho;  // vi_subset / spinbayes posterior
    ad::Var gamma, beta;        // affine method
    std::unique_ptr<InvertedNormState> norm;
    CrossbarBank bank;          // spinbayes, filled post-training

    Tensor effective_weight() const; // binarized -> sign(latent)
};

// Training-time auxiliary objective terms gathered during a graph pass.
struct GraphAux {
    ad::Var scale_penalty; // scaledrop regularizer (unscaled by lambda)
    ad::Var kl;            // VI posterior KL against the prior
};

class Model {
public:
    Model(ModelSpec spec, Rng init_rng);

    const ModelSpec& spec() const { return spec_; }
    ModelSpec& spec() { return spec_; }
    std::vector<Block>& blocks() { return blocks_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    std::vector<Parameter> parameters();

    // Training path: builds the autodiff graph, sampling one network
    // realization from pass_rng (train-mode normalization statistics).
    ad::Var forward_graph(const Tensor& x, Rng& pass_rng, GraphAux* aux);

    // Inference path, plain tensors. pass_rng == nullptr disables every
    // stochastic site (deterministic single pass, infer-mode norm).
    // Device mode routes binarized binary-input layers through their
    // programmed crossbars and draws mask bits from the realized module
    // probabilities.
    Tensor forward_infer(const Tensor& x, Rng* pass_rng, ExecMode mode,
                         const DeviceState* dev = nullptr, EventCounts* ledger = nullptr) const;

    // Applies the configured input coding (thresholding at the midpoint
    // of [0,1] data when binarizing).
    Tensor encode_input(const Tensor& x) const;

    void build_banks(Rng rng); // spinbayes post-training quantization

    // stable stochastic-module ids: one per layer site, used for RNG
    // substream derivation and the device module table
    std::size_t site_module_count(std::size_t layer) const;

private:
    ModelSpec spec_;
    std::vector<Block> blocks_;

    friend struct DeviceState;
};

} // namespace spincim
