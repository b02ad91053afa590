// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ttl/data.hpp"
#include "ttl/model.hpp"
#include "ttl/rng.hpp"
#include "ttl/telemetry.hpp"

namespace ttl {

// Training hyperparameters. serialize() emits the flat `key = value` file
// the presets are committed as; field names mirror the config-table keys.
struct TrainConfig {
    int64_t tokens_per_batch = 8192;
    int64_t total_steps = 0;
    int64_t grad_accum_steps = 1;
    std::string optimizer = "AdamW";
    double peak_lr = 0.0;
    double min_lr = 0.0;
    double adam_eps = 1e-8;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double weight_decay = 0.01;
    std::string scheduler = "cosine";
    int64_t warmup_steps = 0;
    double grad_clip_norm = 1.0; // 0 disables clipping
    int64_t checkpoint_interval = 0; // 0 disables
    int64_t eval_interval = 0;       // 0 disables
    uint64_t seed = 42;
    double epochs = 0.0; // when > 0, total_steps is derived from the dataset

    void validate(int64_t sequence_length) const;
    std::string serialize() const;
    static TrainConfig parse(const std::string& text);

    static TrainConfig preset_160m();
    static TrainConfig preset_460m();
    static TrainConfig preset_sft();
};

// Linear warmup to peak_lr, then cosine decay to min_lr at total_steps.
double lr_at(int64_t step, const TrainConfig& config);

// One AdamW update over a parameter block. Arithmetic runs in double and
// results are stored back in T (float for training, double for reference
// checks). grad_scale folds in accumulation averaging and clipping.
// step is 1-based for bias correction.
template <typename T>
void adamw_update(T* params, const T* grads, T* m, T* v, int64_t n, int64_t step, double lr,
                  double beta1, double beta2, double eps, double weight_decay,
                  double grad_scale = 1.0);

extern template void adamw_update<float>(float*, const float*, float*, float*, int64_t, int64_t,
                                         double, double, double, double, double, double);
extern template void adamw_update<double>(double*, const double*, double*, double*, int64_t,
                                          int64_t, double, double, double, double, double,
                                          double);

// Complete resumable training state: everything a checkpoint holds.
struct TrainerState {
    ModelConfig model_config;
    TrainConfig config;
    int64_t step = 0;
    ModelParams params;
    // Adam moments in the exact order of params.named_tensors().
    std::vector<std::vector<float>> adam_m;
    std::vector<std::vector<float>> adam_v;
    Rng rng{0};
    uint64_t tokenizer_fingerprint = 0;
    // cumulative telemetry counters
    uint64_t tokens_processed = 0;
    double elapsed_s = 0.0;
    double energy_kwh = 0.0;
    double emissions_kg = 0.0;
};

void save_checkpoint(const TrainerState& state, const std::string& path);
TrainerState load_checkpoint(const std::string& path);

struct StepStats {
    int64_t step = 0;   // 1-based index of the completed step
    double loss = 0.0;  // mean micro-batch loss, nats
    double lr = 0.0;
    double grad_norm = 0.0;
    uint64_t tokens = 0; // tokens consumed by this step
};

struct EvalStats {
    double loss = 0.0;
    double perplexity = 0.0;
};

class Trainer {
  public:
    // Fresh run. The prompt mask, when given, switches the loss to the
    // SFT objective (prompt positions excluded).
    Trainer(ModelParams params, TrainConfig config, PackedDataset train_data,
            PackedDataset eval_data, std::optional<PackedMask> mask = std::nullopt);
    // Resumed run; datasets must match the checkpointed fingerprint.
    Trainer(TrainerState state, PackedDataset train_data, PackedDataset eval_data,
            std::optional<PackedMask> mask = std::nullopt);

    StepStats train_step();
    EvalStats evaluate();

    // Runs until total_steps, evaluating every eval_interval and writing a
    // checkpoint every checkpoint_interval under checkpoint_dir (when set).
    // Returns the telemetry log with one row per evaluation point.
    TelemetryLog run(TelemetryTracker& telemetry, const std::string& checkpoint_dir = "",
                     std::function<void(const StepStats&)> on_step = {});

    TrainerState& state() { return state_; }
    const TrainerState& state() const { return state_; }
    int64_t sequences_per_step() const;

  private:
    TrainerState state_;
    PackedDataset train_data_;
    PackedDataset eval_data_;
    std::optional<PackedMask> mask_;
    std::vector<int64_t> epoch_perm_; // cached shuffle of the current epoch
    int64_t perm_epoch_ = -1;

    void check_setup();
    // Dataset sequence scheduled at the given global position (epoch
    // shuffling applied).
    int64_t scheduled_sequence(int64_t global_index);
    double micro_batch_loss(int64_t first_global_seq, int64_t n_seqs);
};

} // namespace ttl
