#include "spincim/config.hpp"

#include "spincim/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace spincim {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a])))
        ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1])))
        --b;
    return s.substr(a, b - a);
}

double parse_double(const std::string& where, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return d;
    } catch (...) {
        throw config_error(where + ": expected a number, got '" + v + "'");
    }
}

std::uint64_t parse_uint(const std::string& where, const std::string& v) {
    try {
        std::size_t used = 0;
        long long x = std::stoll(v, &used);
        if (used != v.size() || x < 0)
            throw std::invalid_argument(v);
        return static_cast<std::uint64_t>(x);
    } catch (...) {
        throw config_error(where + ": expected a nonnegative integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& where, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes")
        return true;
    if (v == "false" || v == "0" || v == "no")
        return false;
    throw config_error(where + ": expected a boolean, got '" + v + "'");
}

// layer tokens: dense<out> | conv<out>k<K>p<pad>[+pool]
LayerSpec parse_layer_token(const std::string& tok) {
    LayerSpec l;
    std::string t = tok;
    if (t.size() > 5 && t.substr(t.size() - 5) == "+pool") {
        l.pool = true;
        t = t.substr(0, t.size() - 5);
    }
    auto read_num = [&](std::size_t& pos) {
        std::size_t start = pos;
        while (pos < t.size() && std::isdigit(static_cast<unsigned char>(t[pos])))
            ++pos;
        if (pos == start)
            throw config_error("model.layers: malformed token '" + tok + "'");
        return static_cast<std::size_t>(std::stoull(t.substr(start, pos - start)));
    };
    if (t.rfind("dense", 0) == 0) {
        std::size_t pos = 5;
        l.kind = LayerKind::dense;
        l.out_features = read_num(pos);
        if (pos != t.size() || l.pool)
            throw config_error("model.layers: malformed token '" + tok + "'");
    } else if (t.rfind("conv", 0) == 0) {
        std::size_t pos = 4;
        l.kind = LayerKind::conv;
        l.out_channels = read_num(pos);
        l.kernel = 3;
        l.pad = 1;
        if (pos < t.size() && t[pos] == 'k') {
            ++pos;
            l.kernel = read_num(pos);
        }
        if (pos < t.size() && t[pos] == 'p') {
            ++pos;
            l.pad = read_num(pos);
        }
        if (pos != t.size())
            throw config_error("model.layers: malformed token '" + tok + "'");
    } else {
        throw config_error("model.layers: unknown layer kind in '" + tok + "'");
    }
    return l;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty())
            parts.push_back(item);
    }
    return parts;
}

} // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    cfg.model.layers.clear();
    bool saw_layers = false, saw_input = false;

    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (!line.empty() && line.front() == ';') // full-line comment
            continue;
        const std::size_t comment = line.find('#');
        if (comment != std::string::npos)
            line = line.substr(0, comment);
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw config_error("line " + std::to_string(lineno) + ": malformed section header");
            section = line.substr(1, line.size() - 2);
            if (section != "model" && section != "method" && section != "device" &&
                section != "crossbar" && section != "train" && section != "costs")
                throw config_error("unknown section [" + section + "]");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        const std::string where = "[" + section + "]." + key;
        if (section.empty())
            throw config_error("key '" + key + "' outside any section");

        if (section == "model") {
            if (key == "input") {
                cfg.model.input_shape.clear();
                for (const auto& part : split(val, 'x'))
                    cfg.model.input_shape.push_back(parse_uint(where, part));
                if (cfg.model.input_shape.size() != 1 && cfg.model.input_shape.size() != 3)
                    throw config_error(where + ": expected D or CxHxW");
                saw_input = true;
            } else if (key == "layers") {
                for (const auto& tok : split(val, ','))
                    cfg.model.layers.push_back(parse_layer_token(tok));
                saw_layers = true;
            } else if (key == "binarize") {
                if (val == "none") cfg.model.binarize = BinarizePolicy::none;
                else if (val == "hidden") cfg.model.binarize = BinarizePolicy::hidden;
                else if (val == "all_but_last") cfg.model.binarize = BinarizePolicy::all_but_last;
                else if (val == "all") cfg.model.binarize = BinarizePolicy::all;
                else throw config_error(where + ": expected none|hidden|all_but_last|all");
            } else if (key == "binarize_activations") {
                cfg.model.binarize_activations = parse_bool(where, val);
            } else if (key == "hidden_activation") {
                if (val == "auto") cfg.model.hidden_activation = ActivationPolicy::automatic;
                else if (val == "relu") cfg.model.hidden_activation = ActivationPolicy::relu;
                else if (val == "sign") cfg.model.hidden_activation = ActivationPolicy::sign;
                else throw config_error(where + ": expected auto|relu|sign");
            } else if (key == "input_coding") {
                if (val == "real") cfg.model.input_coding = InputCoding::real;
                else if (val == "sign") cfg.model.input_coding = InputCoding::sign;
                else if (val == "binary01") cfg.model.input_coding = InputCoding::binary01;
                else throw config_error(where + ": expected real|sign|binary01");
            } else if (key == "ste_clip") {
                cfg.model.ste_clip = parse_double(where, val);
                if (cfg.model.ste_clip <= 0)
                    throw config_error(where + ": must be positive");
            } else {
                throw config_error(where + ": unknown key");
            }
        } else if (section == "method") {
            if (key == "name") {
                cfg.model.method = method_from_string(val);
            } else if (key == "p") {
                cfg.model.dropout_p = parse_double(where, val);
                if (cfg.model.dropout_p < 0.0 || cfg.model.dropout_p > 1.0)
                    throw config_error(where + ": probability outside [0,1]");
            } else if (key == "adaptive") {
                auto parts = split(val, ':');
                if (parts.size() != 2)
                    throw config_error(where + ": expected p_min:p_max");
                AdaptiveSchedule sc;
                sc.p_min = parse_double(where, parts[0]);
                sc.p_max = parse_double(where, parts[1]);
                if (sc.p_min < 0 || sc.p_max > 1 || sc.p_min > sc.p_max)
                    throw config_error(where + ": need 0 <= p_min <= p_max <= 1");
                cfg.model.adaptive = sc;
            } else if (key == "lambda") {
                cfg.lambda = parse_double(where, val);
                if (cfg.lambda < 0)
                    throw config_error(where + ": must be nonnegative");
            } else if (key == "kl_weight") {
                cfg.kl_weight = parse_double(where, val);
                if (cfg.kl_weight < 0)
                    throw config_error(where + ": must be nonnegative");
            } else if (key == "prior_mu") {
                cfg.model.prior.mu0 = parse_double(where, val);
            } else if (key == "prior_sigma") {
                cfg.model.prior.sigma0 = parse_double(where, val);
                if (cfg.model.prior.sigma0 <= 0)
                    throw config_error(where + ": must be positive");
            } else if (key == "bank_instances") {
                cfg.model.bank_instances = parse_uint(where, val);
                if (cfg.model.bank_instances < 1)
                    throw config_error(where + ": need at least one instance");
            } else if (key == "bank_levels") {
                cfg.model.bank_levels = static_cast<int>(parse_uint(where, val));
                if (cfg.model.bank_levels < 1 || cfg.model.bank_levels > 255)
                    throw config_error(where + ": levels outside [1,255]");
            } else {
                throw config_error(where + ": unknown key");
            }
        } else if (section == "device") {
            if (key == "i_c") {
                cfg.device.mtj.critical_current = parse_double(where, val);
            } else if (key == "tau0") {
                cfg.device.mtj.attempt_time = parse_double(where, val);
            } else if (key == "delta") {
                cfg.device.mtj.thermal_stability = parse_double(where, val);
            } else if (key == "pulse_width") {
                cfg.device.pulse_width = parse_double(where, val);
            } else if (key == "sigma_p") {
                cfg.device.sigma_p = parse_double(where, val);
                if (cfg.device.sigma_p < 0)
                    throw config_error(where + ": must be nonnegative");
            } else {
                throw config_error(where + ": unknown key");
            }
        } else if (section == "crossbar") {
            if (key == "g_on") {
                cfg.crossbar.g_on = parse_double(where, val);
            } else if (key == "g_off") {
                cfg.crossbar.g_off = parse_double(where, val);
            } else if (key == "sigma_g_rel") {
                cfg.crossbar.noise.sigma_g_rel = parse_double(where, val);
                if (cfg.crossbar.noise.sigma_g_rel < 0)
                    throw config_error(where + ": must be nonnegative");
            } else if (key == "adc_bits") {
                const auto bits = parse_uint(where, val);
                if (bits > 31)
                    throw config_error(where + ": outside [0,31]");
                if (bits == 0)
                    cfg.crossbar.noise.adc_bits.reset();
                else
                    cfg.crossbar.noise.adc_bits = static_cast<int>(bits);
            } else if (key == "fault_on") {
                cfg.crossbar.faults.rate_stuck_on = parse_double(where, val);
            } else if (key == "fault_off") {
                cfg.crossbar.faults.rate_stuck_off = parse_double(where, val);
            } else if (key == "max_rows") {
                cfg.model.mapping.max_rows = parse_uint(where, val);
            } else if (key == "max_cols") {
                cfg.model.mapping.max_cols = parse_uint(where, val);
            } else if (key == "strategy") {
                if (val == "unfold") cfg.model.mapping.strategy = MapStrategy::unfold_column;
                else if (val == "grid") cfg.model.mapping.strategy = MapStrategy::kxk_grid;
                else throw config_error(where + ": expected unfold|grid");
            } else {
                throw config_error(where + ": unknown key");
            }
        } else if (section == "train") {
            if (key == "epochs") {
                cfg.train.epochs = parse_uint(where, val);
            } else if (key == "batch") {
                cfg.train.batch = parse_uint(where, val);
                if (cfg.train.batch < 2)
                    throw config_error(where + ": batch must be >= 2");
            } else if (key == "lr") {
                cfg.train.lr = parse_double(where, val);
                if (cfg.train.lr <= 0)
                    throw config_error(where + ": must be positive");
            } else if (key == "optimizer") {
                if (val != "adam" && val != "sgd")
                    throw config_error(where + ": expected adam|sgd");
                cfg.train.optimizer = val;
            } else if (key == "momentum") {
                cfg.train.momentum = parse_double(where, val);
                if (cfg.train.momentum < 0 || cfg.train.momentum >= 1)
                    throw config_error(where + ": outside [0,1)");
            } else if (key == "seed") {
                cfg.train.seed = parse_uint(where, val);
            } else if (key == "passes") {
                cfg.train.passes = parse_uint(where, val);
                if (cfg.train.passes < 1)
                    throw config_error(where + ": need at least one pass");
            } else {
                throw config_error(where + ": unknown key");
            }
        } else if (section == "costs") {
            if (key == "rng_bit_pj") cfg.costs.rng_bit_pj = parse_double(where, val);
            else if (key == "crossbar_read_pj") cfg.costs.crossbar_read_pj = parse_double(where, val);
            else if (key == "wordline_activation_pj")
                cfg.costs.wordline_activation_pj = parse_double(where, val);
            else if (key == "adc_conversion_pj") cfg.costs.adc_conversion_pj = parse_double(where, val);
            else if (key == "scale_memory_read_pj")
                cfg.costs.scale_memory_read_pj = parse_double(where, val);
            else throw config_error(where + ": unknown key");
        }
    }

    if (!saw_input)
        throw config_error("[model].input: missing");
    if (!saw_layers)
        throw config_error("[model].layers: missing");
    if (!(cfg.crossbar.g_on > cfg.crossbar.g_off && cfg.crossbar.g_off > 0))
        throw config_error("[crossbar]: need g_on > g_off > 0");
    cfg.model.resolve();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw config_error("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// model spec echo (checkpoint round trip)

std::string model_spec_to_text(const ModelSpec& spec) {
    std::ostringstream os;
    os.precision(17);
    os << "input";
    for (std::size_t i = 0; i < spec.input_shape.size(); ++i)
        os << (i ? "x" : " ") << spec.input_shape[i];
    os << "\nlayers";
    for (const auto& l : spec.layers) {
        os << " ";
        if (l.kind == LayerKind::dense)
            os << "dense" << l.out_features;
        else {
            os << "conv" << l.out_channels << "k" << l.kernel << "p" << l.pad;
            if (l.pool)
                os << "+pool";
        }
    }
    os << "\nmethod " << method_name(spec.method);
    os << "\np " << spec.dropout_p;
    if (spec.adaptive)
        os << "\nadaptive " << spec.adaptive->p_min << ":" << spec.adaptive->p_max;
    const char* bin = spec.binarize == BinarizePolicy::none            ? "none"
                      : spec.binarize == BinarizePolicy::hidden        ? "hidden"
                      : spec.binarize == BinarizePolicy::all_but_last  ? "all_but_last"
                                                                       : "all";
    os << "\nbinarize " << bin;
    os << "\nbinarize_activations " << (spec.binarize_activations ? "true" : "false");
    const char* act = spec.hidden_activation == ActivationPolicy::automatic ? "auto"
                      : spec.hidden_activation == ActivationPolicy::relu    ? "relu"
                                                                            : "sign";
    os << "\nhidden_activation " << act;
    const char* coding = spec.input_coding == InputCoding::real   ? "real"
                         : spec.input_coding == InputCoding::sign ? "sign"
                                                                  : "binary01";
    os << "\ninput_coding " << coding;
    os << "\nste_clip " << spec.ste_clip;
    os << "\nprior " << spec.prior.mu0 << ":" << spec.prior.sigma0;
    os << "\nbank " << spec.bank_instances << ":" << spec.bank_levels;
    os << "\nmapping " << spec.mapping.max_rows << ":" << spec.mapping.max_cols << ":"
       << (spec.mapping.strategy == MapStrategy::unfold_column ? "unfold" : "grid") << "\n";
    return os.str();
}

ModelSpec model_spec_from_text(const std::string& text) {
    ModelSpec spec;
    spec.layers.clear();
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty())
            continue;
        const std::size_t sp = line.find(' ');
        if (sp == std::string::npos)
            throw data_error("model echo: malformed line '" + line + "'");
        const std::string key = line.substr(0, sp);
        const std::string val = trim(line.substr(sp + 1));
        if (key == "input") {
            for (const auto& part : split(val, 'x'))
                spec.input_shape.push_back(parse_uint("echo.input", part));
        } else if (key == "layers") {
            for (const auto& tok : split(val, ' '))
                spec.layers.push_back(parse_layer_token(tok));
        } else if (key == "method") {
            spec.method = method_from_string(val);
        } else if (key == "p") {
            spec.dropout_p = parse_double("echo.p", val);
        } else if (key == "adaptive") {
            auto parts = split(val, ':');
            AdaptiveSchedule sc;
            sc.p_min = parse_double("echo.adaptive", parts.at(0));
            sc.p_max = parse_double("echo.adaptive", parts.at(1));
            spec.adaptive = sc;
        } else if (key == "binarize") {
            if (val == "none") spec.binarize = BinarizePolicy::none;
            else if (val == "hidden") spec.binarize = BinarizePolicy::hidden;
            else if (val == "all_but_last") spec.binarize = BinarizePolicy::all_but_last;
            else spec.binarize = BinarizePolicy::all;
        } else if (key == "binarize_activations") {
            spec.binarize_activations = val == "true";
        } else if (key == "hidden_activation") {
            spec.hidden_activation = val == "auto"   ? ActivationPolicy::automatic
                                     : val == "relu" ? ActivationPolicy::relu
                                                     : ActivationPolicy::sign;
        } else if (key == "input_coding") {
            spec.input_coding = val == "real"   ? InputCoding::real
                                : val == "sign" ? InputCoding::sign
                                                : InputCoding::binary01;
        } else if (key == "ste_clip") {
            spec.ste_clip = parse_double("echo.ste_clip", val);
        } else if (key == "prior") {
            auto parts = split(val, ':');
            spec.prior.mu0 = parse_double("echo.prior", parts.at(0));
            spec.prior.sigma0 = parse_double("echo.prior", parts.at(1));
        } else if (key == "bank") {
            auto parts = split(val, ':');
            spec.bank_instances = parse_uint("echo.bank", parts.at(0));
            spec.bank_levels = static_cast<int>(parse_uint("echo.bank", parts.at(1)));
        } else if (key == "mapping") {
            auto parts = split(val, ':');
            spec.mapping.max_rows = parse_uint("echo.mapping", parts.at(0));
            spec.mapping.max_cols = parse_uint("echo.mapping", parts.at(1));
            spec.mapping.strategy =
                parts.at(2) == "unfold" ? MapStrategy::unfold_column : MapStrategy::kxk_grid;
        } else {
            throw data_error("model echo: unknown key '" + key + "'");
        }
    }
    spec.resolve();
    return spec;
}

} // namespace spincim
