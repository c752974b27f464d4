#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "wayside/embed.hpp"
#include "wayside/fuse.hpp"
#include "wayside/gbdt.hpp"
#include "wayside/peaks.hpp"
#include "wayside/synth.hpp"

namespace wayside::io {

using nlohmann::json;

// Exact-round-trip decimal formatting for doubles.
std::string fmt(double v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);
std::string checksum(const std::filesystem::path& path);  // fnv1a-64 hex

// ---------------------------------------------------------------------------
// Passages: JSON metadata + CSV waveform (t_seconds, strain, accel)
// ---------------------------------------------------------------------------

json passage_to_json(const synth::PassageSpec& spec);
synth::PassageSpec passage_from_json(const json& j);

// Strict single-passage config: unknown keys are rejected.
synth::PassageSpec passage_from_config(const json& j, std::optional<double>* snr_db_out = nullptr);

void write_waveform_csv(const std::filesystem::path& path, const synth::WaysideRecording& rec);

struct Waveform {
  dsp::ArrayXd t_seconds;
  dsp::ArrayXd strain;
  dsp::ArrayXd accel;
  double sample_rate_hz = 0.0;
};

Waveform read_waveform_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Peak sets / semantics
// ---------------------------------------------------------------------------

json peaks_to_json(const peaks::PeakSet& ps, const peaks::SemanticFeatures& sem);

// ---------------------------------------------------------------------------
// Fused datasets: CSV with named layout slots plus label/soft_label/domain_id,
// and a JSON sidecar describing how the dataset was produced.
// ---------------------------------------------------------------------------

void write_dataset_csv(const std::filesystem::path& path, const fuse::Dataset& ds);
fuse::Dataset read_dataset_csv(const std::filesystem::path& path, const fuse::FusionLayout& layout);

json dataset_sidecar(const fuse::FusionStrategy& strategy, const fuse::PipelineConfig& cfg,
                     std::uint64_t seed);

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

// VAE parameters: versioned binary, JSON header followed by raw doubles.
void save_vae(const std::filesystem::path& path, const embed::TrainedVae& model);
embed::TrainedVae load_vae(const std::filesystem::path& path);

// Inspectable GBDT dump: trees as nested JSON.
void save_gbdt(const std::filesystem::path& path, const gbdt::GbdtModel& model);
gbdt::GbdtModel load_gbdt(const std::filesystem::path& path);

}  // namespace wayside::io
