#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace slimfl::data {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

double gamma_draw(rng::Stream& st, double alpha) {
    // Marsaglia-Tsang; the alpha < 1 case boosts from alpha + 1.
    if (alpha < 1.0) {
        double g = gamma_draw(st, alpha + 1.0);
        double u = st.next_unit();
        while (u == 0.0) u = st.next_unit();
        return g * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = st.next_normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        double u = st.next_unit();
        while (u == 0.0) u = st.next_unit();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

std::vector<double> dirichlet_draw(rng::Stream& st, double alpha, int k) {
    std::vector<double> q(k);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        q[i] = gamma_draw(st, alpha);
        sum += q[i];
    }
    for (double& v : q) v /= sum;
    return q;
}

}  // namespace

Dataset synthetic_classification(std::size_t n, int classes, std::uint64_t seed) {
    if (classes < 1) throw invalid_parameter("classes must be >= 1");
    if (n < std::size_t(classes)) throw invalid_parameter("need at least one sample per class");

    const int H = 28, W = 28;
    auto tstream = rng::stream(seed, "synthetic-template");

    // Class templates are blob constellations: the blob count steps every two
    // classes and the radius alternates small/large, so classes differ in
    // pooled statistics (covered area, edge density), not just in blob
    // position. That keeps them recognizable for pooling architectures as
    // well as for linear probes on raw pixels.
    std::vector<std::vector<double>> templates(classes, std::vector<double>(H * W, 0.0));
    for (int c = 0; c < classes; ++c) {
        const int blobs = 1 + c / 2;
        const double radius = (c % 2 == 0) ? 1.8 : 3.6;
        const double amplitude = 0.9;
        std::vector<double> cx(blobs), cy(blobs);
        for (int b = 0; b < blobs; ++b) {
            for (int attempt = 0; attempt < 1000; ++attempt) {
                double x = 4.0 + 20.0 * tstream.next_unit();
                double y = 4.0 + 20.0 * tstream.next_unit();
                bool apart = true;
                for (int o = 0; o < b; ++o)
                    if (std::hypot(x - cx[o], y - cy[o]) < 2.0 * radius) {
                        apart = false;
                        break;
                    }
                if (apart || attempt == 999) {
                    cx[b] = x;
                    cy[b] = y;
                    break;
                }
            }
        }
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double v = 0.0;
                for (int b = 0; b < blobs; ++b) {
                    const double d2 = (x - cx[b]) * (x - cx[b]) + (y - cy[b]) * (y - cy[b]);
                    v += amplitude * std::exp(-d2 / (2.0 * radius * radius));
                }
                templates[c][y * W + x] = std::min(v, 1.0);
            }
    }

    Dataset ds;
    ds.height = H;
    ds.width = W;
    ds.images.resize(n * std::size_t(H) * W);
    ds.labels.resize(n);
    auto nstream = rng::stream(seed, "synthetic-noise");
    for (std::size_t i = 0; i < n; ++i) {
        int c = int(i % classes);
        ds.labels[i] = c;
        double* img = ds.images.data() + i * std::size_t(H) * W;
        for (int j = 0; j < H * W; ++j)
            img[j] = std::clamp(templates[c][j] + 0.25 * nstream.next_normal(), 0.0, 1.0);
    }
    return ds;
}

namespace {

std::uint32_t read_be32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw io_error("cannot open image file: " + images_path);
    std::uint32_t magic = read_be32(imgs);
    if (!imgs || magic != kImagesMagic)
        throw io_error("bad image magic in " + images_path);
    std::uint32_t n = read_be32(imgs);
    std::uint32_t rows = read_be32(imgs);
    std::uint32_t cols = read_be32(imgs);
    if (!imgs) throw io_error("truncated image header in " + images_path);

    std::vector<unsigned char> pixels(std::size_t(n) * rows * cols);
    imgs.read(reinterpret_cast<char*>(pixels.data()), std::streamsize(pixels.size()));
    if (std::size_t(imgs.gcount()) != pixels.size())
        throw io_error("truncated image payload in " + images_path);

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw io_error("cannot open label file: " + labels_path);
    magic = read_be32(labs);
    if (!labs || magic != kLabelsMagic)
        throw io_error("bad label magic in " + labels_path);
    std::uint32_t ln = read_be32(labs);
    if (!labs) throw io_error("truncated label header in " + labels_path);
    if (ln != n)
        throw io_error("image/label count mismatch: " + std::to_string(n) + " images vs " +
                       std::to_string(ln) + " labels");
    std::vector<unsigned char> raw_labels(ln);
    labs.read(reinterpret_cast<char*>(raw_labels.data()), std::streamsize(raw_labels.size()));
    if (std::size_t(labs.gcount()) != raw_labels.size())
        throw io_error("truncated label payload in " + labels_path);

    Dataset ds;
    ds.height = int(rows);
    ds.width = int(cols);
    ds.images.resize(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) ds.images[i] = pixels[i] / 255.0;
    ds.labels.assign(raw_labels.begin(), raw_labels.end());
    return ds;
}

void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
    std::ofstream imgs(images_path, std::ios::binary);
    if (!imgs) throw io_error("cannot open image file for writing: " + images_path);
    write_be32(imgs, kImagesMagic);
    write_be32(imgs, std::uint32_t(ds.size()));
    write_be32(imgs, std::uint32_t(ds.height));
    write_be32(imgs, std::uint32_t(ds.width));
    for (double v : ds.images) {
        unsigned char b = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        imgs.write(reinterpret_cast<char*>(&b), 1);
    }
    if (!imgs) throw io_error("image write failed: " + images_path);

    std::ofstream labs(labels_path, std::ios::binary);
    if (!labs) throw io_error("cannot open label file for writing: " + labels_path);
    write_be32(labs, kLabelsMagic);
    write_be32(labs, std::uint32_t(ds.size()));
    for (int l : ds.labels) {
        unsigned char b = static_cast<unsigned char>(l);
        labs.write(reinterpret_cast<char*>(&b), 1);
    }
    if (!labs) throw io_error("label write failed: " + labels_path);
}

Partition dirichlet_partition(const std::vector<int>& labels, int num_devices, double alpha,
                              std::uint64_t seed) {
    if (num_devices < 1) throw invalid_parameter("device count must be >= 1");
    if (!(alpha > 0.0)) throw invalid_parameter("dirichlet concentration must be > 0");

    int classes = 0;
    for (int l : labels) classes = std::max(classes, l + 1);

    Partition part;
    part.device_indices.assign(std::size_t(num_devices), {});

    for (int c = 0; c < classes; ++c) {
        std::vector<std::uint32_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) members.push_back(std::uint32_t(i));
        if (members.empty()) continue;

        auto st = rng::stream(seed, "dirichlet", std::uint64_t(c));
        st.shuffle(members);
        std::vector<double> q = dirichlet_draw(st, alpha, num_devices);

        // Largest-remainder rounding of q * n_c, ties broken by device index.
        const std::size_t nc = members.size();
        std::vector<std::size_t> counts(num_devices);
        std::vector<std::pair<double, int>> fracs(num_devices);
        std::size_t assigned = 0;
        for (int k = 0; k < num_devices; ++k) {
            double target = q[k] * double(nc);
            counts[k] = std::size_t(std::floor(target));
            fracs[k] = {target - double(counts[k]), k};
            assigned += counts[k];
        }
        std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t r = 0; assigned < nc; ++r, ++assigned) ++counts[fracs[r % fracs.size()].second];

        std::size_t pos = 0;
        for (int k = 0; k < num_devices; ++k) {
            for (std::size_t j = 0; j < counts[k] && pos < nc; ++j, ++pos)
                part.device_indices[k].push_back(members[pos]);
        }
    }
    return part;
}

std::vector<std::vector<std::uint32_t>> minibatches(const std::vector<std::uint32_t>& shard,
                                                    std::size_t batch_size, rng::Stream& stream) {
    if (batch_size < 1) throw invalid_parameter("batch size must be >= 1");
    std::vector<std::vector<std::uint32_t>> batches;
    if (shard.empty()) return batches;
    std::vector<std::uint32_t> order = shard;
    stream.shuffle(order);
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        std::size_t end = std::min(order.size(), i + batch_size);
        batches.emplace_back(order.begin() + i, order.begin() + end);
    }
    return batches;
}

}  // namespace slimfl::data
