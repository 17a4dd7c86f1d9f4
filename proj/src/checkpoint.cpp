#include "spincim/checkpoint.hpp"

#include "spincim/config.hpp"
#include "spincim/errors.hpp"

#include <cstring>
#include <fstream>

namespace spincim {

namespace {

constexpr char kMagic[4] = {'N', 'S', 'P', 'N'};
constexpr std::uint8_t kVersion = 1;

constexpr std::uint32_t tag(const char s[5]) {
    return std::uint32_t(s[0]) | (std::uint32_t(s[1]) << 8) | (std::uint32_t(s[2]) << 16) |
           (std::uint32_t(s[3]) << 24);
}

const std::uint32_t kModl = tag("MODL");
const std::uint32_t kParm = tag("PARM");
const std::uint32_t kNorm = tag("NORM");
const std::uint32_t kBank = tag("BANK");
const std::uint32_t kSeed = tag("SEED");

struct Writer {
    std::vector<std::uint8_t> out;

    void u8(std::uint8_t v) { out.push_back(v); }
    void u32(std::uint32_t v) {
        for (int k = 0; k < 4; ++k)
            out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
    }
    void u64(std::uint64_t v) {
        for (int k = 0; k < 8; ++k)
            out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
    }
    void f64(double d) {
        std::uint64_t u;
        std::memcpy(&u, &d, 8);
        u64(u);
    }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    void tensor(const Tensor& t) {
        u8(static_cast<std::uint8_t>(t.rank()));
        for (std::size_t d : t.shape())
            u64(d);
        for (double v : t.vec())
            f64(v);
    }
};

struct Reader {
    const std::vector<std::uint8_t>& in;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > in.size())
            throw data_error("checkpoint truncated at byte " + std::to_string(pos));
    }
    std::uint8_t u8() {
        need(1);
        return in[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k)
            v |= std::uint32_t(in[pos + k]) << (8 * k);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k)
            v |= std::uint64_t(in[pos + k]) << (8 * k);
        pos += 8;
        return v;
    }
    double f64() {
        std::uint64_t u = u64();
        double d;
        std::memcpy(&d, &u, 8);
        return d;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(in.data() + pos), n);
        pos += n;
        return s;
    }
    Tensor tensor() {
        const std::size_t rank = u8();
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape)
            d = u64();
        Tensor t(shape);
        for (auto& v : t.vec())
            v = f64();
        return t;
    }
};

} // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
    Writer w;
    w.bytes(kMagic, 4);
    w.u8(kVersion);

    auto section = [&w](std::uint32_t t, const std::vector<std::uint8_t>& payload) {
        w.u32(t);
        w.u64(payload.size());
        w.out.insert(w.out.end(), payload.begin(), payload.end());
    };

    {
        const std::string text = model_spec_to_text(ck.spec);
        std::vector<std::uint8_t> payload(text.begin(), text.end());
        section(kModl, payload);
    }
    {
        Writer p;
        p.u32(static_cast<std::uint32_t>(ck.params.size()));
        for (std::size_t i = 0; i < ck.params.size(); ++i) {
            p.u8(ck.roles[i]);
            p.u32(static_cast<std::uint32_t>(ck.params[i].first.size()));
            p.bytes(ck.params[i].first.data(), ck.params[i].first.size());
            p.tensor(ck.params[i].second);
        }
        section(kParm, p.out);
    }
    if (!ck.norm_stats.empty()) {
        Writer p;
        p.u32(static_cast<std::uint32_t>(ck.norm_stats.size()));
        for (const auto& [layer, stats] : ck.norm_stats) {
            p.u32(layer);
            p.tensor(stats);
        }
        section(kNorm, p.out);
    }
    if (!ck.banks.empty()) {
        Writer p;
        p.u32(static_cast<std::uint32_t>(ck.banks.size()));
        for (const auto& [layer, bank] : ck.banks) {
            p.u32(layer);
            p.u64(bank.instance_count);
            p.u32(static_cast<std::uint32_t>(bank.levels));
            p.f64(bank.lo);
            p.f64(bank.hi);
            p.u64(bank.level_index.size());
            p.bytes(bank.level_index.data(), bank.level_index.size());
        }
        section(kBank, p.out);
    }
    {
        Writer p;
        p.u64(ck.seed);
        section(kSeed, p.out);
    }
    return w.out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    r.need(5);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw data_error("checkpoint: bad magic at byte 0");
    r.pos = 4;
    if (r.u8() != kVersion)
        throw data_error("checkpoint: unsupported version");

    Checkpoint ck;
    bool saw_model = false;
    while (r.pos < bytes.size()) {
        const std::uint32_t t = r.u32();
        const std::uint64_t len = r.u64();
        r.need(len);
        const std::size_t end = r.pos + len;
        if (t == kModl) {
            ck.spec = model_spec_from_text(r.str(len));
            saw_model = true;
        } else if (t == kParm) {
            const std::uint32_t count = r.u32();
            for (std::uint32_t i = 0; i < count; ++i) {
                const std::uint8_t role = r.u8();
                const std::uint32_t name_len = r.u32();
                std::string name = r.str(name_len);
                Tensor v = r.tensor();
                ck.params.emplace_back(std::move(name), std::move(v));
                ck.roles.push_back(role);
            }
        } else if (t == kNorm) {
            const std::uint32_t count = r.u32();
            for (std::uint32_t i = 0; i < count; ++i) {
                const std::uint32_t layer = r.u32();
                ck.norm_stats.emplace_back(layer, r.tensor());
            }
        } else if (t == kBank) {
            const std::uint32_t count = r.u32();
            for (std::uint32_t i = 0; i < count; ++i) {
                CrossbarBank bank;
                const std::uint32_t layer = r.u32();
                bank.instance_count = r.u64();
                bank.levels = static_cast<int>(r.u32());
                bank.lo = r.f64();
                bank.hi = r.f64();
                const std::uint64_t n = r.u64();
                bank.level_index.assign(bytes.begin() + r.pos, bytes.begin() + r.pos + n);
                r.pos += n;
                ck.banks.emplace_back(layer, std::move(bank));
            }
        } else if (t == kSeed) {
            ck.seed = r.u64();
        } else {
            throw data_error("checkpoint: unknown section at byte " + std::to_string(r.pos - 12));
        }
        if (r.pos != end)
            throw data_error("checkpoint: section length mismatch at byte " + std::to_string(r.pos));
    }
    if (!saw_model)
        throw data_error("checkpoint: missing model section");
    return ck;
}

Checkpoint checkpoint_from_model(Model& model, std::uint64_t seed) {
    Checkpoint ck;
    ck.spec = model.spec();
    ck.seed = seed;
    for (auto& p : model.parameters()) {
        ck.params.emplace_back(p.name, p.var->value);
        ck.roles.push_back(static_cast<std::uint8_t>(p.role));
    }
    for (std::size_t i = 0; i < model.blocks().size(); ++i) {
        Block& b = model.blocks()[i];
        if (b.norm) {
            const std::size_t c = b.norm->running_mean.numel();
            Tensor stats({2, c});
            for (std::size_t j = 0; j < c; ++j) {
                stats[j] = b.norm->running_mean[j];
                stats[c + j] = b.norm->running_var[j];
            }
            ck.norm_stats.emplace_back(static_cast<std::uint32_t>(i), std::move(stats));
        }
        if (b.bank.instance_count > 0)
            ck.banks.emplace_back(static_cast<std::uint32_t>(i), b.bank);
    }
    return ck;
}

Model model_from_checkpoint(const Checkpoint& ck) {
    Model model(ck.spec, Rng(ck.seed).child(stream::init));
    auto params = model.parameters();
    if (params.size() != ck.params.size())
        throw data_error("checkpoint: parameter group count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != ck.params[i].first)
            throw data_error("checkpoint: parameter '" + ck.params[i].first +
                             "' does not match architecture echo");
        if (!params[i].var->value.same_shape(ck.params[i].second))
            throw data_error("checkpoint: shape mismatch for '" + params[i].name + "'");
        params[i].var->value = ck.params[i].second;
    }
    for (const auto& [layer, stats] : ck.norm_stats) {
        Block& b = model.blocks().at(layer);
        if (!b.norm)
            throw data_error("checkpoint: running stats for non-normalized layer");
        const std::size_t c = stats.dim(1);
        for (std::size_t j = 0; j < c; ++j) {
            b.norm->running_mean[j] = stats[j];
            b.norm->running_var[j] = stats[c + j];
        }
    }
    for (const auto& [layer, bank] : ck.banks)
        model.blocks().at(layer).bank = bank;
    return model;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    const auto bytes = serialize_checkpoint(ck);
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw data_error("cannot write checkpoint '" + path + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw data_error("cannot open checkpoint '" + path + "'");
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(f),
                                    std::istreambuf_iterator<char>()};
    return deserialize_checkpoint(bytes);
}

} // namespace spincim
