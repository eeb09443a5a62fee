#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "photonstat/correlate.hpp"
#include "photonstat/fit.hpp"
#include "photonstat/flid.hpp"
#include "photonstat/trace.hpp"

namespace photonstat {

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

nlohmann::json to_json(const FitResult& fit);
nlohmann::json to_json(const PurityResult& purity);
nlohmann::json to_json(const StateSegmentation& seg);
// Axes, bandwidths and normalization of a map (no density values).
nlohmann::json flid_metadata(const FlidMap& map);

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

// tau_lo_s,tau_hi_s,tau_center_s,counts,normalization,g2
void write_histogram_csv(const CorrelationHistogram& hist, const std::filesystem::path& path);
// bin_start_s,counts,mean_arrival_s[,label]; undefined arrivals are empty.
void write_trace_csv(const IntensityTrace& intensity, const LifetimeTrace& lifetime,
                     const StateSegmentation* segmentation, const std::filesystem::path& path);
// time_s,counts[,fit]
void write_decay_csv(const DecayHistogram& hist, const FitResult* fit, const std::filesystem::path& path);

// Density matrix, one CSV row per intensity cell (lowest intensity first).
void write_flid_csv(const FlidMap& map, const std::filesystem::path& path);

// 8-bit rendering, highest intensity in the top row and lifetime along x.
// Values scale linearly to the map maximum.
std::vector<std::uint8_t> flid_gray(const FlidMap& map);
void write_pgm(const FlidMap& map, const std::filesystem::path& path);
// Same layout through a viridis lookup table.
void write_ppm(const FlidMap& map, const std::filesystem::path& path);

}  // namespace photonstat
