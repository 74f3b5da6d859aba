#pragma once

#include "veloform/fields.hpp"
#include "veloform/geometry.hpp"
#include "veloform/integrate.hpp"
#include "veloform/losses.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace veloform {

struct TrainConfig {
    int time_steps = 8;   // T; losses are evaluated at the T+1 uniform stamps
    int epochs = 1;
    int steps_per_pair = 500;  // optimization steps per pair per epoch
    double lr_fields = 1e-4;
    double lr_latents = 1e-3;
    double lr_decay = 1.0;  // final lr fraction under the cosine schedule
    int surface_batch = 256;
    int volume_batch = 256;
    int match_batch = 128;
    LossWeights weights;
    FieldConfig fields;
    double latent_reg = 1e-4;  // ridge on the pair's latent codes, not a loss term
    std::uint64_t seed = 0;
    int checkpoint_interval = 500;
    IntegratorConfig train_integrator{IntegratorConfig::Scheme::Rk4, 8};
    AxisAlignedDomain domain = AxisAlignedDomain::unit_cube();
    double surface_noise_sigma = 0.05;  // spread of near-surface volume samples

    void validate() const;
};

struct PairRecord {
    int id = 0;
    int frame_0 = 0;
    int frame_1 = 1;
};

// Training data: correspondence pairs over a set of frames. In sequence mode
// the pairs chain consecutive frames; otherwise any combination is allowed.
struct PairDataset {
    std::vector<CorrespondencePair> pairs;
    bool sequence = true;
    SimilarityTransform normalization;  // world -> domain map already applied

    std::vector<int> frame_ids() const;  // unique, in first-appearance order
    void validate() const;
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::int64_t t = 0;
};

struct TrainState {
    TrainConfig config;
    ImplicitField phi;
    VelocityField vel;
    LatentTable latents;
    AdamState opt_phi;
    AdamState opt_vel;
    std::vector<AdamState> opt_latents;  // one per latent row
    std::int64_t step = 0;
    SimilarityTransform normalization;
    std::vector<PairRecord> pairs;

    const PairRecord& pair_by_id(int pair_id) const;

    // Self-describing archive; float64 keeps resume bitwise exact, float32 is
    // the compact export encoding. Load->save round-trips byte for byte.
    void save(const std::string& path, const std::string& dtype = "float64") const;
    static TrainState load(const std::string& path);
};

// i.i.d. normal entries scaled by 1/sqrt(m); deterministic per seed.
LatentTable init_latents(const std::vector<int>& frame_ids, int m, std::uint64_t seed);

// Assembles one training batch: endpoint surface samples, volume samples
// (half uniform, half Gaussian-perturbed surface points), matched positions,
// and the uniform time stamps. Throws "pair has no correspondences" when the
// matching term is active but the pair has none.
SampleBatch build_batch(const CorrespondencePair& pair, const TrainConfig& cfg,
                        const LatentTable& latents, Rng& rng);

// Gradients of the weighted objective for one pair batch.
struct PairGrads {
    MlpGrads phi;
    MlpGrads vel;
    Eigen::VectorXd code;  // d/d(z0 ++ z1)
};

// Evaluates every active loss term on the batch; when `grads` is non-null
// also accumulates parameter and latent gradients. Zero-weighted matching /
// smoothness terms are skipped (their evaluation is the expensive part);
// other zero-weighted terms are still reported for logging. Throws on a
// non-finite loss, naming the term.
LossBreakdown compute_losses(const ImplicitField& phi, const VelocityField& vel,
                             const SampleBatch& batch, const LossWeights& weights,
                             const IntegratorConfig& integrator, PairGrads* grads,
                             Eigen::Index* degenerate_tally = nullptr);

struct StepResult {
    LossBreakdown breakdown;
    Eigen::Index degenerate_points = 0;
};

// One optimizer step on both field parameter sets and the two latent codes of
// the batch's pair. lr_scale multiplies both learning rates (the training
// loop drives it from the cosine schedule).
StepResult train_step(TrainState& state, const SampleBatch& batch, double lr_scale = 1.0);

using StepLogger =
    std::function<void(std::int64_t step, int pair_id, const LossBreakdown& breakdown)>;

// Full loop: epochs x pairs x steps_per_pair, round-robin over pairs within
// an epoch. Writes `checkpoint_latest.vfc` into checkpoint_dir every
// checkpoint_interval steps (when the dir is non-empty). Resumable: pass the
// loaded state to continue from state.step with identical batches.
TrainState train(const PairDataset& dataset, const TrainConfig& cfg,
                 const std::string& checkpoint_dir = "", const StepLogger& logger = {});
TrainState train_continue(TrainState state, const PairDataset& dataset,
                          const std::string& checkpoint_dir = "", const StepLogger& logger = {});

}  // namespace veloform
