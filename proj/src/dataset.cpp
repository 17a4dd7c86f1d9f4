#include "spincim/dataset.hpp"

#include "spincim/errors.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace spincim {

Dataset Dataset::subset(std::size_t offset, std::size_t count) const {
    if (offset + count > size())
        throw domain_error("dataset subset out of range");
    const std::size_t d = x.dim(1);
    Dataset out;
    out.image_shape = image_shape;
    out.x = Tensor({count, d});
    out.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::memcpy(out.x.data() + i * d, x.data() + (offset + i) * d, d * sizeof(double));
        out.labels[i] = labels[offset + i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    if (off + 4 > b.size())
        throw data_error("idx: truncated header at byte " + std::to_string(off));
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void write_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 24));
    b.push_back(static_cast<std::uint8_t>(v >> 16));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v));
}

} // namespace

Tensor parse_idx(const std::vector<std::uint8_t>& bytes) {
    const std::uint32_t magic = read_be32(bytes, 0);
    if ((magic >> 16) != 0)
        throw data_error("idx: bad magic at byte 0");
    const std::uint8_t type = (magic >> 8) & 0xFF;
    const std::uint8_t ndim = magic & 0xFF;
    if (type != 0x08 && type != 0x0E)
        throw data_error("idx: unsupported element type 0x" + std::to_string(type) + " at byte 2");
    if (ndim == 0 || ndim > 4)
        throw data_error("idx: unsupported rank at byte 3");

    std::vector<std::size_t> shape(ndim);
    std::size_t numel = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
        shape[i] = read_be32(bytes, 4 + 4 * i);
        if (shape[i] == 0)
            throw data_error("idx: zero-sized axis " + std::to_string(i));
        numel *= shape[i];
    }

    const std::size_t header = 4 + 4 * ndim;
    const std::size_t elem = type == 0x08 ? 1 : 8;
    if (bytes.size() != header + numel * elem)
        throw data_error("idx: payload expected " + std::to_string(header + numel * elem) +
                         " bytes, got " + std::to_string(bytes.size()));

    Tensor t(shape);
    if (type == 0x08) {
        for (std::size_t i = 0; i < numel; ++i)
            t[i] = static_cast<double>(bytes[header + i]) / 255.0;
    } else {
        for (std::size_t i = 0; i < numel; ++i) {
            std::uint64_t u = 0;
            for (std::size_t k = 0; k < 8; ++k)
                u = (u << 8) | bytes[header + i * 8 + k];
            double d;
            std::memcpy(&d, &u, 8);
            t[i] = d;
        }
    }
    return t;
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw data_error("cannot open '" + path + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f),
                                     std::istreambuf_iterator<char>());
}

} // namespace

Tensor load_idx(const std::string& path) { return parse_idx(read_file(path)); }

std::vector<int> load_idx_labels(const std::string& path) {
    Tensor t = parse_idx(read_file(path));
    if (t.rank() != 1)
        throw data_error("idx labels in '" + path + "' must be rank 1");
    std::vector<int> labels(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i)
        labels[i] = static_cast<int>(std::lround(t[i] * 255.0)); // ubyte scaling undone
    return labels;
}

std::vector<std::uint8_t> encode_idx_u8(const Tensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * t.rank() + t.numel());
    write_be32(out, 0x00000800u | static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape())
        write_be32(out, static_cast<std::uint32_t>(d));
    for (double v : t.vec()) {
        const double scaled = std::lround(std::min(std::max(v, 0.0), 1.0) * 255.0);
        out.push_back(static_cast<std::uint8_t>(scaled));
    }
    return out;
}

std::vector<std::uint8_t> encode_idx_f64(const Tensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * t.rank() + 8 * t.numel());
    write_be32(out, 0x00000E00u | static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape())
        write_be32(out, static_cast<std::uint32_t>(d));
    for (double v : t.vec()) {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        for (int k = 7; k >= 0; --k)
            out.push_back(static_cast<std::uint8_t>(u >> (8 * k)));
    }
    return out;
}

namespace {

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw data_error("cannot write '" + path + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

void write_idx_u8(const std::string& path, const Tensor& t) { write_file(path, encode_idx_u8(t)); }
void write_idx_f64(const std::string& path, const Tensor& t) { write_file(path, encode_idx_f64(t)); }

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
    Tensor t({labels.size()});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] > 255)
            throw data_error("idx labels must fit a byte");
        t[i] = static_cast<double>(labels[i]) / 255.0;
    }
    write_file(path, encode_idx_u8(t));
}

// ---------------------------------------------------------------------------
// synthetic data

Dataset gen_synthetic(SyntheticKind kind, std::size_t n, double noise, std::uint64_t seed) {
    if (n < 2)
        throw domain_error("gen_synthetic: need at least 2 points");
    Rng rng = Rng(seed).child(stream::data);
    Dataset out;
    out.x = Tensor({n, 2});
    out.labels.resize(n);

    const std::size_t n0 = (n + 1) / 2; // class counts balanced within one
    const double pi = 3.141592653589793238462643383279502884;

    for (std::size_t i = 0; i < n; ++i) {
        const bool first = i < n0;
        const std::size_t k = first ? i : i - n0;
        const std::size_t m = first ? n0 : n - n0;
        const double t = m > 1 ? pi * static_cast<double>(k) / static_cast<double>(m - 1) : 0.0;
        double px, py;
        if (kind == SyntheticKind::two_moons) {
            if (first) {
                px = std::cos(t);
                py = std::sin(t);
            } else {
                px = 1.0 - std::cos(t);
                py = 0.5 - std::sin(t);
            }
        } else {
            px = first ? -2.0 : 2.0;
            py = first ? -2.0 : 2.0;
        }
        out.x[i * 2 + 0] = px + noise * rng.normal();
        out.x[i * 2 + 1] = py + noise * rng.normal();
        out.labels[i] = first ? 0 : 1;
    }
    return out;
}

Tensor uniform_box(std::size_t n, double lo, double hi, std::size_t dims, Rng& rng) {
    Tensor t({n, dims});
    for (auto& v : t.vec())
        v = lo + (hi - lo) * rng.uniform();
    return t;
}

Tensor resize_bilinear(const Tensor& images, std::size_t h_in, std::size_t w_in,
                       std::size_t h_out, std::size_t w_out) {
    if (images.rank() != 2 || images.dim(1) != h_in * w_in)
        throw dimension_error("resize_bilinear: data " + images.shape_str() + " is not " +
                              std::to_string(h_in) + "x" + std::to_string(w_in) + " images");
    const std::size_t n = images.dim(0);
    Tensor out({n, h_out * w_out});
    const double sy = static_cast<double>(h_in) / static_cast<double>(h_out);
    const double sx = static_cast<double>(w_in) / static_cast<double>(w_out);
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = images.data() + i * h_in * w_in;
        double* dst = out.data() + i * h_out * w_out;
        for (std::size_t y = 0; y < h_out; ++y)
            for (std::size_t x = 0; x < w_out; ++x) {
                // align centers of the source and target grids
                const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
                const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
                const double y0 = std::floor(fy), x0 = std::floor(fx);
                const double wy = fy - y0, wx = fx - x0;
                double v = 0.0;
                for (int oy = 0; oy < 2; ++oy)
                    for (int ox = 0; ox < 2; ++ox) {
                        double py = std::min(std::max(y0 + oy, 0.0),
                                             static_cast<double>(h_in - 1));
                        double px = std::min(std::max(x0 + ox, 0.0),
                                             static_cast<double>(w_in - 1));
                        const double wgt = (oy ? wy : 1.0 - wy) * (ox ? wx : 1.0 - wx);
                        v += wgt * src[static_cast<std::size_t>(py) * w_in +
                                       static_cast<std::size_t>(px)];
                    }
                dst[y * w_out + x] = v;
            }
    }
    return out;
}

} // namespace spincim
