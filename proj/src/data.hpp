#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace slimfl::data {

struct Dataset {
    int height = 28;
    int width = 28;
    std::vector<double> images;  // n * height * width, values in [0, 1]
    std::vector<int> labels;     // n entries in [0, classes)

    std::size_t size() const { return labels.size(); }
    const double* image(std::size_t i) const {
        return images.data() + i * std::size_t(height) * width;
    }
};

// Gaussian-blob stand-in for the MNIST-family sets: each class gets a fixed
// seeded 28x28 template (blob centers kept apart), samples add pixel noise
// with sigma 0.25 and clip to [0, 1]. Classes balanced to within one sample.
Dataset synthetic_classification(std::size_t n, int classes, std::uint64_t seed);

// Big-endian IDX containers (magic 0x00000803 for images, 0x00000801 for
// labels), pixel bytes scaled by 1/255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const Dataset& dataset, const std::string& images_path,
               const std::string& labels_path);

struct Partition {
    std::vector<std::vector<std::uint32_t>> device_indices;

    std::size_t devices() const { return device_indices.size(); }
};

// Per class, splits that class's samples across devices by a Dir(alpha)
// proportion draw with largest-remainder rounding (ties broken by device
// index). Every sample lands on exactly one device.
Partition dirichlet_partition(const std::vector<int>& labels, int num_devices, double alpha,
                              std::uint64_t seed);

// One epoch of batches over a shard: a keyed shuffle chunked into batch_size
// pieces, short last batch kept. Empty shard yields no batches.
std::vector<std::vector<std::uint32_t>> minibatches(const std::vector<std::uint32_t>& shard,
                                                    std::size_t batch_size, rng::Stream& stream);

}  // namespace slimfl::data
