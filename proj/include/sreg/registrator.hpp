#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sreg/autodiff.hpp"
#include "sreg/grid.hpp"
#include "sreg/losses.hpp"

namespace sreg {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias correction; state per parameter entry.
class Adam {
  public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
    void step(std::span<ad::Parameter*> params);

  private:
    AdamConfig cfg_;
    std::vector<ad::Tensor> m_, v_;
    long t_ = 0;
};

// The stacked per-pair output: both cross fields plus the identical-pair
// fields, with per-step loss and violator-fraction histories.
struct PairResult {
    DisplacementField g_mf, g_fm, g_mm, g_ff;
    std::vector<LossBreakdown> loss_history;
    std::vector<double> mask_history;
};

struct DirectOptions {
    int steps = 300;
    double learning_rate = 0.1;
    Similarity similarity = Similarity::kNcc;
    bool backproject_coord_grad = false;
};

// Per-pair gradient-descent registration. The identical-pair fields stay
// exactly zero in this backend, so only the similarity, smoothness and
// cross-sanity terms act. Throws DivergenceError if the loss goes
// non-finite.
PairResult register_pair_direct(const ImageVolume& moving, const ImageVolume& fixed,
                                const SanityConfig& cfg, const DirectOptions& opt);

// conv(3x3, 2->16) + ReLU, conv(3x3, 16->16) + ReLU, conv(3x3, 16->n),
// output scaled by a learnable global gain. One set of weights serves all
// four directional evaluations. 2-D grids only.
struct TinyNet {
    int ndim = 2;
    int hidden = 16;
    ad::Parameter w1, b1, w2, b2, w3, b3, gain;

    static TinyNet create(int ndim, uint64_t seed);
    std::vector<ad::Parameter*> parameters();
    std::vector<const ad::Parameter*> parameters() const;
};

// Deterministic forward pass; no sanity machinery at inference.
DisplacementField infer(const TinyNet& net, const ImageVolume& a, const ImageVolume& b);

struct TrainPair {
    ImageVolume moving;
    ImageVolume fixed;
};

struct EpochLog {
    int epoch = 0;
    LossBreakdown loss; // mean over pairs
    double sse = 0.0;
    double cse = 0.0;
    double violator_fraction = 0.0;
};

struct TrainOptions {
    int epochs = 40;
    double learning_rate = 1e-3;
    uint64_t seed = 0;
    bool backproject_coord_grad = false;
    bool shuffle = true;
};

struct TrainResult {
    TinyNet model;
    std::vector<EpochLog> log;
    // Step index of the first non-finite loss; the model carries the last
    // good weights when set.
    std::optional<long> diverged_at_step;
};

// Optimizes the bidirectional total loss over all pairs; each step
// evaluates the model on (m,f), (f,m), (m,m), (f,f) with shared weights.
// Identical-pair arms contribute only to the self-sanity term, and the
// sanity terms enter the objective per voxel (as SSE/CSE) so their default
// weights balance the windowed-correlation similarity.
TrainResult train_model(std::span<const TrainPair> dataset, const SanityConfig& cfg,
                        const TrainOptions& opt);

// Intensity normalization applied to every model input (and the images the
// training similarity sees).
ImageVolume normalize01(const ImageVolume& img);

} // namespace sreg
