#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sreg/grid.hpp"
#include "sreg/losses.hpp"
#include "sreg/registrator.hpp"
#include "sreg/synth.hpp"

namespace sreg {

// ---------------------------------------------------------------------------
// SREG1 volume container: text header (magic, kind, dims, components,
// encoding) followed by a little-endian payload, component-planar with the
// last axis fastest. Round-trips are bit-identical.
// ---------------------------------------------------------------------------

void write_image(const std::filesystem::path& path, const ImageVolume& img);
void write_field(const std::filesystem::path& path, const DisplacementField& field);
void write_labels(const std::filesystem::path& path, const LabelVolume& labels);

ImageVolume read_image(const std::filesystem::path& path);
DisplacementField read_field(const std::filesystem::path& path);
LabelVolume read_labels(const std::filesystem::path& path);

void write_landmarks(const std::filesystem::path& path, const LandmarkSet& lm, int ndim);
LandmarkSet read_landmarks(const std::filesystem::path& path, const GridShape& shape);

// ---------------------------------------------------------------------------
// Run configuration: flat key=value text with a stable hash embedded in
// every artifact. Unknown keys are rejected.
// ---------------------------------------------------------------------------

struct RunConfig {
    SanityConfig sanity;
    std::string backend = "model";   // model | direct
    std::string similarity = "ncc";  // ncc | ssd
    std::string shape = "64x64";
    int pairs = 4;
    double magnitude = 2.0;
    double smoothness = 8.0;
    int steps = 300;
    int epochs = 40;
    double learning_rate = -1.0; // <0 means backend default (0.1 direct, 1e-3 model)
    uint64_t seed = 0;
    bool backproject_coord_grad = false;
    std::string data_dir;
    std::string out_dir;

    double effective_learning_rate() const {
        if (learning_rate > 0.0)
            return learning_rate;
        return backend == "direct" ? 0.1 : 1e-3;
    }
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::filesystem::path& path);
std::string config_to_text(const RunConfig& cfg); // canonical serialization
std::string config_hash(const RunConfig& cfg);    // FNV-1a 64 over the canonical text

GridShape parse_shape(const std::string& text);

// %.17g formatting used by every CSV so reruns are byte-identical.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// CSV reports: a config-hash comment line, a header row, then rows.
// ---------------------------------------------------------------------------

class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::string& config_hash,
              const std::vector<std::string>& header);
    ~CsvWriter();

    void row(const std::vector<std::string>& cells);
    // Flushes and atomically renames into place.
    void finish();

  private:
    std::filesystem::path path_;
    std::filesystem::path tmp_path_;
    std::ofstream out_;
    size_t columns_ = 0;
    bool finished_ = false;
};

// ---------------------------------------------------------------------------
// Checkpoints: text manifest with layer shapes plus raw tensor payloads.
// ---------------------------------------------------------------------------

struct Checkpoint {
    TinyNet net;
    GridShape grid;
    std::string config_hash;
};

void save_checkpoint(const std::filesystem::path& path, const TinyNet& net,
                     const GridShape& grid, const std::string& config_hash);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Datasets: one directory per pair plus a manifest.
// ---------------------------------------------------------------------------

struct DatasetManifest {
    std::string shape;
    int pairs = 0;
    double magnitude = 0.0;
    double smoothness = 0.0;
    uint64_t seed = 0;
    std::string hash;
    std::vector<std::string> pair_dirs;
};

// Generates `pairs` synthetic pairs into dir/pair_XXX and writes the
// manifest; per-pair seeds are seed + 1000 * index.
DatasetManifest write_dataset(const std::filesystem::path& dir, const GridShape& shape,
                              int pairs, double magnitude, double smoothness, uint64_t seed);

DatasetManifest read_manifest(const std::filesystem::path& dir);

struct LoadedPair {
    ImageVolume moving;
    ImageVolume fixed;
    LabelVolume moving_labels;
    LabelVolume fixed_labels;
    DisplacementField true_field;
    LandmarkSet landmarks;
};

LoadedPair load_pair(const std::filesystem::path& pair_dir);

} // namespace sreg
