#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slimfl::runner {

struct MetricsRow {
    std::uint64_t round = 0;
    double loss_half = 0.0;
    double loss_full = 0.0;
    double top1_half = 0.0;
    double top1_full = 0.0;
    std::uint32_t n_left = 0;
    std::uint32_t n_right = 0;
    std::uint64_t decoded_bits_half = 0;
    std::uint64_t decoded_bits_full = 0;
    std::uint64_t dropped_bits = 0;
    double comm_mw = 0.0;
    double flops = 0.0;
};

struct MetricsSeries {
    std::vector<MetricsRow> rows;
    std::uint64_t skipped_device_rounds = 0;

    std::vector<double> top1_full_series() const;
    std::vector<double> top1_half_series() const;
};

// Column order is the wire format; floats carry 9 significant digits, LF line
// endings.
extern const char* const kMetricsCsvHeader;

std::string format_metrics_csv(const MetricsSeries& series);
MetricsSeries parse_metrics_csv(const std::string& text);

void write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace slimfl::runner
