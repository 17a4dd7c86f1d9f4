#include "CLI11.hpp"

#include "spincim/checkpoint.hpp"
#include "spincim/config.hpp"
#include "spincim/dataset.hpp"
#include "spincim/errors.hpp"
#include "spincim/mtj.hpp"
#include "spincim/train.hpp"
#include "spincim/uncertainty.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

using namespace spincim;

namespace {

struct DataOpts {
    std::string images, labels;
    std::string synthetic; // two_moons | blobs
    std::size_t samples = 512;
    double noise = 0.1;
    std::uint64_t data_seed = 1;
};

void add_data_opts(CLI::App* cmd, DataOpts& d) {
    cmd->add_option("--images", d.images, "IDX image/point file");
    cmd->add_option("--labels", d.labels, "IDX label file");
    cmd->add_option("--synthetic", d.synthetic, "synthetic dataset kind (two_moons|blobs)");
    cmd->add_option("--samples", d.samples, "synthetic sample count");
    cmd->add_option("--noise", d.noise, "synthetic noise level");
    cmd->add_option("--data-seed", d.data_seed, "synthetic dataset seed");
}

Dataset load_data(const DataOpts& d) {
    if (!d.synthetic.empty()) {
        SyntheticKind kind;
        if (d.synthetic == "two_moons")
            kind = SyntheticKind::two_moons;
        else if (d.synthetic == "blobs")
            kind = SyntheticKind::blobs;
        else
            throw config_error("unknown synthetic dataset '" + d.synthetic + "'");
        return gen_synthetic(kind, d.samples, d.noise, d.data_seed);
    }
    if (d.images.empty() || d.labels.empty())
        throw config_error("need --images/--labels or --synthetic");
    Dataset ds;
    Tensor t = load_idx(d.images);
    if (t.rank() < 2)
        throw data_error("image file must have at least two axes");
    std::size_t features = 1;
    for (std::size_t i = 1; i < t.rank(); ++i)
        features *= t.dim(i);
    if (t.rank() > 2)
        ds.image_shape.assign(t.shape().begin() + 1, t.shape().end());
    ds.x = t.reshaped({t.dim(0), features});
    ds.labels = load_idx_labels(d.labels);
    if (ds.labels.size() != ds.size())
        throw data_error("image/label counts differ");
    return ds;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f)
        throw data_error("cannot write '" + path + "'");
    f << text;
}

std::string energy_report(const ModelSpec& model, Method method, std::size_t passes,
                          const CostTable& costs) {
    EventCounts ev = count_events(model, method, passes);
    EnergyBreakdown e = energy_estimate(ev, costs);
    std::ostringstream os;
    os << "energy method=" << method_name(method) << " passes=" << passes << "\n";
    os << "counts " << ev.to_string() << "\n";
    os << std::setprecision(6) << std::fixed;
    os << "breakdown rng_uj=" << e.rng_uj << " crossbar_uj=" << e.crossbar_uj
       << " wordline_uj=" << e.wordline_uj << " adc_uj=" << e.adc_uj << " scale_uj=" << e.scale_uj
       << "\n";
    os << "total_uj=" << e.total_uj << "\n";
    return os.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"binarized Bayesian networks on simulated spintronic crossbars"};
    app.require_subcommand(1);

    std::string config_path, out_path, checkpoint_path;
    std::optional<std::uint64_t> seed_override;
    app.add_option("--config", config_path, "INI configuration file")->expected(1);
    app.add_option("--seed", seed_override, "override [train].seed");
    app.add_option("--out", out_path, "output path (checkpoint or report)");

    // --- train -------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    DataOpts train_data;
    add_data_opts(train_cmd, train_data);

    // --- eval --------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "MC evaluation of a checkpoint");
    DataOpts eval_data;
    add_data_opts(eval_cmd, eval_data);
    std::size_t eval_passes = 0;
    std::string eval_mode = "ideal";
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--passes", eval_passes, "MC passes (default [train].passes)");
    eval_cmd->add_option("--mode", eval_mode, "ideal|device");

    // --- ood ---------------------------------------------------------------
    auto* ood_cmd = app.add_subcommand("ood", "OOD detection against uniform noise");
    DataOpts ood_id_data;
    add_data_opts(ood_cmd, ood_id_data);
    std::size_t ood_passes = 0, ood_samples = 500;
    double box_lo = -6.0, box_hi = 6.0, quantile = 0.95;
    std::string score_kind = "entropy";
    ood_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    ood_cmd->add_option("--passes", ood_passes, "MC passes");
    ood_cmd->add_option("--ood-samples", ood_samples, "noise sample count");
    ood_cmd->add_option("--box-lo", box_lo, "noise lower bound");
    ood_cmd->add_option("--box-hi", box_hi, "noise upper bound");
    ood_cmd->add_option("--quantile", quantile, "in-distribution threshold quantile");
    ood_cmd->add_option("--score", score_kind, "entropy|max_prob");

    // --- map ---------------------------------------------------------------
    auto* map_cmd = app.add_subcommand("map", "report the crossbar mapping of each layer");

    // --- energy ------------------------------------------------------------
    auto* energy_cmd = app.add_subcommand("energy", "event counts and energy estimate");
    std::vector<std::string> compare_configs;
    std::size_t energy_passes = 0;
    energy_cmd->add_option("--passes", energy_passes, "MC passes (default [train].passes)");
    energy_cmd->add_option("--compare", compare_configs, "additional configs for the ratio matrix");

    // --- device-cal --------------------------------------------------------
    auto* cal_cmd = app.add_subcommand("device-cal", "calibrate currents for target probabilities");
    std::vector<double> cal_targets{0.1, 0.5, 0.9};
    cal_cmd->add_option("--targets", cal_targets, "switching probability targets");

    // --- gen-data ----------------------------------------------------------
    auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic dataset as IDX files");
    DataOpts gen_data_opts;
    add_data_opts(gen_cmd, gen_data_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            RunConfig cfg = load_config(config_path);
            if (seed_override)
                cfg.train.seed = *seed_override;
            Dataset data = load_data(train_data);
            TrainResult tr = run_training(cfg, data, &std::cout);
            Checkpoint ck = checkpoint_from_model(tr.model, cfg.train.seed);
            const std::string path = out_path.empty() ? "model.nspn" : out_path;
            save_checkpoint(path, ck);
            std::cout << "checkpoint path=" << path << " diverged=" << (tr.diverged ? 1 : 0)
                      << "\n";
            return tr.diverged ? 4 : 0;
        }

        if (*eval_cmd) {
            RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
            Checkpoint ck = load_checkpoint(checkpoint_path);
            Model model = model_from_checkpoint(ck);
            Dataset data = load_data(eval_data);
            const std::size_t passes = eval_passes ? eval_passes : cfg.train.passes;
            const ExecMode mode = eval_mode == "device" ? ExecMode::device : ExecMode::math;
            std::uint64_t seed = seed_override ? *seed_override : ck.seed;
            Dataset coded = data;
            coded.x = model.encode_input(data.x);
            UncertaintyReport rep =
                run_eval(model, coded, passes, mode, cfg.crossbar, cfg.device, seed);
            std::cout << "eval mode=" << eval_mode << " passes=" << passes
                      << " accuracy=" << rep.accuracy << " nll=" << rep.nll << "\n";
            std::cout << "events " << rep.events.to_string() << "\n";
            EnergyBreakdown e = energy_estimate(rep.events, cfg.costs);
            std::cout << "energy total_uj=" << e.total_uj << "\n";
            if (!out_path.empty())
                write_text(out_path, rep.records(data.labels));
            return 0;
        }

        if (*ood_cmd) {
            RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
            Checkpoint ck = load_checkpoint(checkpoint_path);
            Model model = model_from_checkpoint(ck);
            Dataset id_data = load_data(ood_id_data);
            const std::size_t passes = ood_passes ? ood_passes : cfg.train.passes;
            std::uint64_t seed = seed_override ? *seed_override : ck.seed;

            UncertaintyReport id_rep = predict_bayes(model, model.encode_input(id_data.x),
                                                     id_data.labels, passes, Rng(seed));
            Rng noise_rng = Rng(seed).child(404);
            Tensor noise = uniform_box(ood_samples, box_lo, box_hi, id_data.x.dim(1), noise_rng);
            UncertaintyReport ood_rep =
                predict_bayes(model, model.encode_input(noise), {}, passes, Rng(seed).child(405));

            const OodScore kind = score_kind == "max_prob" ? OodScore::max_prob : OodScore::entropy;
            auto score_of = [&](const UncertaintyReport& rep) {
                std::vector<double> s;
                const std::size_t n = rep.mean_probs.dim(0), c = rep.mean_probs.dim(1);
                for (std::size_t i = 0; i < n; ++i) {
                    if (kind == OodScore::entropy) {
                        s.push_back(rep.entropy[i]);
                    } else {
                        double mx = 0.0;
                        for (std::size_t j = 0; j < c; ++j)
                            mx = std::max(mx, rep.mean_probs[i * c + j]);
                        s.push_back(1.0 - mx); // higher = more uncertain
                    }
                }
                return s;
            };
            OodResult res = ood_rate(score_of(id_rep), score_of(ood_rep), quantile, kind);
            std::cout << "ood score=" << score_kind << " quantile=" << quantile
                      << " threshold=" << res.threshold
                      << " detection_rate=" << res.detection_rate << "\n";
            return 0;
        }

        if (*map_cmd) {
            RunConfig cfg = load_config(config_path);
            std::ostringstream os;
            for (std::size_t i = 0; i < cfg.model.layers.size(); ++i) {
                os << "layer index=" << i << "\n";
                os << cfg.model.layer_plan(i).report();
            }
            std::cout << os.str();
            if (!out_path.empty())
                write_text(out_path, os.str());
            return 0;
        }

        if (*energy_cmd) {
            RunConfig cfg = load_config(config_path);
            const std::size_t passes = energy_passes ? energy_passes : cfg.train.passes;
            std::ostringstream os;
            std::vector<std::pair<std::string, double>> totals;
            os << energy_report(cfg.model, cfg.model.method, passes, cfg.costs);
            totals.emplace_back(method_name(cfg.model.method),
                                energy_estimate(count_events(cfg.model, cfg.model.method, passes),
                                                cfg.costs)
                                    .total_uj);
            for (const auto& path : compare_configs) {
                RunConfig other = load_config(path);
                const std::size_t t = energy_passes ? energy_passes : other.train.passes;
                os << energy_report(other.model, other.model.method, t, other.costs);
                totals.emplace_back(method_name(other.model.method),
                                    energy_estimate(
                                        count_events(other.model, other.model.method, t),
                                        other.costs)
                                        .total_uj);
            }
            if (totals.size() > 1) {
                os << "ratio matrix (row / column)\n";
                for (const auto& [name_a, ea] : totals) {
                    os << "ratio " << name_a;
                    for (const auto& [name_b, eb] : totals)
                        os << " " << name_b << "=" << std::setprecision(4)
                           << efficiency_ratio(ea, eb);
                    os << "\n";
                }
            }
            std::cout << os.str();
            if (!out_path.empty())
                write_text(out_path, os.str());
            return 0;
        }

        if (*cal_cmd) {
            RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
            std::cout << "device i_c=" << cfg.device.mtj.critical_current
                      << " tau0=" << cfg.device.mtj.attempt_time
                      << " delta=" << cfg.device.mtj.thermal_stability
                      << " pulse_width=" << cfg.device.pulse_width << "\n";
            for (double target : cal_targets) {
                const double current = calibrate_current(target, cfg.device.pulse_width, cfg.device.mtj);
                const double check = switching_probability(current, cfg.device.pulse_width, cfg.device.mtj);
                std::cout << "calibrate p_target=" << target << " current=" << std::setprecision(12)
                          << current << " roundtrip_error=" << std::abs(check - target) << "\n";
            }
            return 0;
        }

        if (*gen_cmd) {
            if (gen_data_opts.synthetic.empty())
                throw config_error("gen-data needs --synthetic");
            Dataset data = load_data(gen_data_opts);
            const std::string prefix = out_path.empty() ? gen_data_opts.synthetic : out_path;
            write_idx_f64(prefix + "-points-idx2-double", data.x);
            write_idx_labels(prefix + "-labels-idx1-ubyte", data.labels);
            std::cout << "wrote " << prefix << "-points-idx2-double and labels, n=" << data.size()
                      << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
        case ErrorKind::config: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::numeric: return 4;
        default: return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
