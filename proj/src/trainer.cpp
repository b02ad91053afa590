// SPDX-License-Identifier: Apache-2.0
#include "ttl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ttl/io_util.hpp"

namespace ttl {

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

void TrainConfig::validate(int64_t sequence_length) const {
    if (tokens_per_batch <= 0) throw ConfigError("train config: tokens per batch must be > 0");
    if (grad_accum_steps <= 0)
        throw ConfigError("train config: gradient accumulation steps must be > 0");
    if (sequence_length > 0 &&
        tokens_per_batch % (sequence_length * grad_accum_steps) != 0)
        throw ConfigError(
            "train config: tokens per batch must be divisible by sequence length x "
            "accumulation steps");
    if (total_steps <= 0 && epochs <= 0.0)
        throw ConfigError("train config: total training steps (or epochs) must be set");
    if (total_steps > 0 && warmup_steps >= total_steps)
        throw ConfigError("train config: warmup steps must be below total steps");
    if (peak_lr <= 0.0) throw ConfigError("train config: learning rate must be > 0");
    if (optimizer != "AdamW") throw ConfigError("train config: unsupported optimizer");
    if (scheduler != "cosine") throw ConfigError("train config: unsupported scheduler");
}

namespace {

// strip leading zeros from the exponent: 6.0e-04 -> 6.0e-4, 1e+06 -> 1e6
std::string canon_exponent(std::string s) {
    const size_t e = s.find('e');
    if (e == std::string::npos) return s;
    size_t i = e + 1;
    std::string sign;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
        if (s[i] == '-') sign = "-";
        ++i;
    }
    while (i + 1 < s.size() && s[i] == '0') ++i;
    return s.substr(0, e + 1) + sign + s.substr(i);
}

// Exact round-trip with the most table-like spelling: integers plain,
// small magnitudes as 6.0e-4 style scientific.
std::string fmt_compact(double v) {
    char buf[40];
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    if (std::abs(v) < 1e-3) {
        std::snprintf(buf, sizeof(buf), "%.1e", v);
        std::string s = canon_exponent(buf);
        if (std::stod(s) == v) return s;
    }
    std::snprintf(buf, sizeof(buf), "%g", v);
    std::string s = canon_exponent(buf);
    if (std::stod(s) == v) return s;
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return canon_exponent(buf);
}

} // namespace

std::string TrainConfig::serialize() const {
    std::ostringstream os;
    os << "tokens per batch = " << tokens_per_batch << "\n";
    if (epochs > 0.0) os << "epochs = " << fmt_compact(epochs) << "\n";
    if (total_steps > 0) os << "total training steps = " << total_steps << "\n";
    os << "gradient accumulation steps = " << grad_accum_steps << "\n";
    os << "optimizer = " << optimizer << "\n";
    os << "learning rate = " << fmt_compact(peak_lr) << "\n";
    os << "min learning rate = " << fmt_compact(min_lr) << "\n";
    os << "adam epsilon = " << fmt_compact(adam_eps) << "\n";
    os << "adam beta 1 = " << fmt_compact(adam_beta1) << "\n";
    os << "adam beta 2 = " << fmt_compact(adam_beta2) << "\n";
    os << "weight decay = " << fmt_compact(weight_decay) << "\n";
    os << "scheduler type = " << scheduler << "\n";
    os << "warmup steps = " << warmup_steps << "\n";
    os << "gradient clip norm = " << fmt_compact(grad_clip_norm) << "\n";
    os << "checkpoint interval = " << checkpoint_interval << "\n";
    os << "eval interval = " << eval_interval << "\n";
    os << "seed = " << seed << "\n";
    return os.str();
}

TrainConfig TrainConfig::parse(const std::string& text) {
    TrainConfig c;
    c.total_steps = 0;
    std::istringstream is(text);
    std::string line;
    auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("train config: expected key = value: " + line);
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "tokens per batch") c.tokens_per_batch = std::stoll(val);
        else if (key == "total training steps") c.total_steps = std::stoll(val);
        else if (key == "epochs") c.epochs = std::stod(val);
        else if (key == "gradient accumulation steps") c.grad_accum_steps = std::stoll(val);
        else if (key == "optimizer") c.optimizer = val;
        else if (key == "learning rate") c.peak_lr = std::stod(val);
        else if (key == "min learning rate") c.min_lr = std::stod(val);
        else if (key == "adam epsilon") c.adam_eps = std::stod(val);
        else if (key == "adam beta 1") c.adam_beta1 = std::stod(val);
        else if (key == "adam beta 2") c.adam_beta2 = std::stod(val);
        else if (key == "weight decay") c.weight_decay = std::stod(val);
        else if (key == "scheduler type") c.scheduler = val;
        else if (key == "warmup steps") c.warmup_steps = std::stoll(val);
        else if (key == "gradient clip norm") c.grad_clip_norm = std::stod(val);
        else if (key == "checkpoint interval") c.checkpoint_interval = std::stoll(val);
        else if (key == "eval interval") c.eval_interval = std::stoll(val);
        else if (key == "seed") c.seed = std::stoull(val);
        else throw FormatError("train config: unknown key: " + key);
    }
    return c;
}

TrainConfig TrainConfig::preset_160m() {
    TrainConfig c;
    c.tokens_per_batch = 8192;
    c.total_steps = 458000;
    c.grad_accum_steps = 1;
    c.peak_lr = 6.0e-4;
    c.warmup_steps = 5000;
    c.checkpoint_interval = 22000;
    c.eval_interval = 100000;
    return c;
}

TrainConfig TrainConfig::preset_460m() {
    TrainConfig c;
    c.tokens_per_batch = 8192;
    c.total_steps = 1200000;
    c.grad_accum_steps = 2;
    c.peak_lr = 3.0e-4;
    c.warmup_steps = 10000;
    c.checkpoint_interval = 25000;
    c.eval_interval = 100000;
    return c;
}

TrainConfig TrainConfig::preset_sft() {
    TrainConfig c;
    c.tokens_per_batch = 8192;
    c.total_steps = 0;
    c.epochs = 3.0;
    c.grad_accum_steps = 2;
    c.peak_lr = 1.0e-5;
    c.warmup_steps = 1000;
    c.checkpoint_interval = 25000;
    c.eval_interval = 100000;
    return c;
}

double lr_at(int64_t step, const TrainConfig& c) {
    if (step < 0 || step > c.total_steps) throw DomainError("lr_at: step out of range");
    if (step < c.warmup_steps)
        return c.peak_lr * static_cast<double>(step) / static_cast<double>(c.warmup_steps);
    const double progress = static_cast<double>(step - c.warmup_steps) /
                            static_cast<double>(c.total_steps - c.warmup_steps);
    return c.min_lr + 0.5 * (c.peak_lr - c.min_lr) * (1.0 + std::cos(3.141592653589793 * progress));
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

template <typename T>
void adamw_update(T* params, const T* grads, T* m, T* v, int64_t n, int64_t step, double lr,
                  double beta1, double beta2, double eps, double weight_decay,
                  double grad_scale) {
    if (step < 1) throw DomainError("adamw_update: step must be >= 1");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (int64_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(grads[i]) * grad_scale;
        if (!std::isfinite(g)) throw DomainError("adamw_update: non-finite gradient");
        const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
        const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double m_hat = static_cast<double>(m[i]) / bc1;
        const double v_hat = static_cast<double>(v[i]) / bc2;
        const double p = static_cast<double>(params[i]);
        params[i] = static_cast<T>(p - lr * (m_hat / (std::sqrt(v_hat) + eps)) -
                                   lr * weight_decay * p);
    }
}

template void adamw_update<float>(float*, const float*, float*, float*, int64_t, int64_t, double,
                                  double, double, double, double, double);
template void adamw_update<double>(double*, const double*, double*, double*, int64_t, int64_t,
                                   double, double, double, double, double, double);

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(ModelParams params, TrainConfig config, PackedDataset train_data,
                 PackedDataset eval_data, std::optional<PackedMask> mask)
    : train_data_(std::move(train_data)), eval_data_(std::move(eval_data)),
      mask_(std::move(mask)) {
    state_.model_config = params.config;
    state_.config = std::move(config);
    state_.params = std::move(params);
    state_.rng = Rng(state_.config.seed);
    state_.tokenizer_fingerprint = train_data_.tokenizer_fingerprint;
    for (const auto& [name, t] : state_.params.named_tensors()) {
        (void)name;
        state_.adam_m.emplace_back(static_cast<size_t>(t.numel()), 0.0f);
        state_.adam_v.emplace_back(static_cast<size_t>(t.numel()), 0.0f);
    }
    check_setup();
}

Trainer::Trainer(TrainerState state, PackedDataset train_data, PackedDataset eval_data,
                 std::optional<PackedMask> mask)
    : state_(std::move(state)), train_data_(std::move(train_data)),
      eval_data_(std::move(eval_data)), mask_(std::move(mask)) {
    if (state_.tokenizer_fingerprint != 0 && train_data_.tokenizer_fingerprint != 0 &&
        state_.tokenizer_fingerprint != train_data_.tokenizer_fingerprint)
        throw FormatError("resume: dataset tokenizer fingerprint differs from checkpoint");
    check_setup();
}

void Trainer::check_setup() {
    if (train_data_.n_sequences() == 0) throw ConfigError("trainer: empty training dataset");
    state_.model_config.validate();
    if (state_.config.total_steps > 0 && state_.step > state_.config.total_steps)
        throw ConfigError("trainer: checkpoint step exceeds total training steps");
    // Derive total steps from the epoch budget when requested.
    if (state_.config.total_steps <= 0 && state_.config.epochs > 0.0) {
        const double steps = state_.config.epochs *
                             static_cast<double>(train_data_.total_tokens()) /
                             static_cast<double>(state_.config.tokens_per_batch);
        state_.config.total_steps = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(steps)));
    }
    state_.config.validate(train_data_.sequence_length);
    if (mask_ && static_cast<int64_t>(mask_->mask.size()) < train_data_.total_tokens())
        throw ConfigError("trainer: prompt mask shorter than the dataset");
}

int64_t Trainer::sequences_per_step() const {
    return state_.config.tokens_per_batch / train_data_.sequence_length;
}

int64_t Trainer::scheduled_sequence(int64_t global_index) {
    const int64_t n = train_data_.n_sequences();
    const int64_t epoch = global_index / n;
    const int64_t pos = global_index % n;
    if (epoch != perm_epoch_) {
        epoch_perm_.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) epoch_perm_[static_cast<size_t>(i)] = i;
        // deterministic permutation keyed by (seed, epoch)
        Rng rng = Rng::derive(state_.config.seed, 0x50ffe0ULL + static_cast<uint64_t>(epoch));
        for (int64_t i = n - 1; i > 0; --i)
            std::swap(epoch_perm_[static_cast<size_t>(i)],
                      epoch_perm_[static_cast<size_t>(rng.next_below(static_cast<uint64_t>(i + 1)))]);
        perm_epoch_ = epoch;
    }
    return epoch_perm_[static_cast<size_t>(pos)];
}

double Trainer::micro_batch_loss(int64_t first_global_seq, int64_t n_seqs) {
    const int64_t L = train_data_.sequence_length;
    const int64_t in_len = L - 1;
    std::vector<int32_t> inputs(static_cast<size_t>(n_seqs * in_len));
    std::vector<int32_t> targets(static_cast<size_t>(n_seqs * in_len));
    std::vector<uint8_t> prompt(static_cast<size_t>(n_seqs * in_len), 0);
    bool any_mask = false;
    for (int64_t b = 0; b < n_seqs; ++b) {
        const int64_t seq_idx = scheduled_sequence(first_global_seq + b);
        const int32_t* seq = train_data_.sequence(seq_idx);
        for (int64_t i = 0; i < in_len; ++i) {
            inputs[static_cast<size_t>(b * in_len + i)] = seq[i];
            targets[static_cast<size_t>(b * in_len + i)] = seq[i + 1];
            if (mask_) {
                // a position is excluded when its *target* token is prompt
                const uint8_t m = mask_->mask[static_cast<size_t>(seq_idx * L + i + 1)];
                prompt[static_cast<size_t>(b * in_len + i)] = m;
                any_mask = any_mask || m;
            }
        }
    }
    Tensor logits = model_forward(state_.params, inputs, n_seqs, in_len);
    Tensor loss = any_mask ? cross_entropy_masked(logits, targets, prompt)
                           : cross_entropy(logits, targets);
    backward(loss);
    return static_cast<double>(loss.item());
}

StepStats Trainer::train_step() {
    const TrainConfig& c = state_.config;
    const int64_t seqs_per_step = sequences_per_step();
    const int64_t n_micro = c.grad_accum_steps;
    const int64_t seqs_per_micro = seqs_per_step / n_micro;
    const int64_t first = state_.step * seqs_per_step;

    auto named = state_.params.named_tensors();
    for (auto& [name, t] : named) {
        (void)name;
        t.zero_grad();
    }

    double loss_sum = 0.0;
    for (int64_t micro = 0; micro < n_micro; ++micro)
        loss_sum += micro_batch_loss(first + micro * seqs_per_micro, seqs_per_micro);
    const double loss = loss_sum / static_cast<double>(n_micro);
    if (!std::isfinite(loss))
        throw DomainError("train_step: non-finite loss at step " + std::to_string(state_.step + 1) +
                          "; aborting");

    // Global gradient norm of the averaged gradient.
    const double inv_accum = 1.0 / static_cast<double>(n_micro);
    double sq = 0.0;
    for (auto& [name, t] : named) {
        (void)name;
        const float* g = t.grad();
        const int64_t n = t.numel();
        for (int64_t i = 0; i < n; ++i) {
            const double gi = static_cast<double>(g[i]) * inv_accum;
            sq += gi * gi;
        }
    }
    const double grad_norm = std::sqrt(sq);
    double scale = inv_accum;
    if (c.grad_clip_norm > 0.0 && grad_norm > c.grad_clip_norm)
        scale *= c.grad_clip_norm / grad_norm;

    const int64_t step = state_.step + 1; // 1-based for bias correction
    const double lr = lr_at(step, c);
    for (size_t i = 0; i < named.size(); ++i) {
        Tensor& t = named[i].second;
        try {
            adamw_update<float>(t.mutable_data(), t.grad(), state_.adam_m[i].data(),
                                state_.adam_v[i].data(), t.numel(), step, lr, c.adam_beta1,
                                c.adam_beta2, c.adam_eps, c.weight_decay, scale);
        } catch (const DomainError& e) {
            throw DomainError(std::string(e.what()) + " in tensor '" + named[i].first +
                              "' at step " + std::to_string(step));
        }
    }

    state_.step = step;
    state_.tokens_processed += static_cast<uint64_t>(c.tokens_per_batch);

    StepStats s;
    s.step = step;
    s.loss = loss;
    s.lr = lr;
    s.grad_norm = grad_norm;
    s.tokens = static_cast<uint64_t>(c.tokens_per_batch);
    return s;
}

EvalStats Trainer::evaluate() {
    if (eval_data_.n_sequences() == 0) throw ConfigError("evaluate: empty eval dataset");
    NoGradGuard no_grad;
    const int64_t L = eval_data_.sequence_length;
    const int64_t in_len = L - 1;
    double total = 0.0;
    int64_t count = 0;
    for (int64_t s = 0; s < eval_data_.n_sequences(); ++s) {
        const int32_t* seq = eval_data_.sequence(s);
        std::vector<int32_t> inputs(seq, seq + in_len);
        std::vector<int32_t> targets(seq + 1, seq + L);
        Tensor logits = model_forward(state_.params, inputs, 1, in_len);
        Tensor loss = cross_entropy(logits, targets);
        total += static_cast<double>(loss.item()) * static_cast<double>(in_len);
        count += in_len;
    }
    EvalStats e;
    e.loss = total / static_cast<double>(count);
    e.perplexity = std::exp(e.loss);
    return e;
}

TelemetryLog Trainer::run(TelemetryTracker& telemetry, const std::string& checkpoint_dir,
                          std::function<void(const StepStats&)> on_step) {
    const TrainConfig& c = state_.config;
    TelemetryLog log;
    log.power = telemetry.power();
    log.carbon_intensity = telemetry.carbon_intensity();
    telemetry.set_base(state_.tokens_processed, state_.elapsed_s, state_.energy_kwh,
                       state_.emissions_kg);
    telemetry.start();

    double last_loss = std::nan("");
    while (state_.step < c.total_steps) {
        StepStats s = train_step();
        last_loss = s.loss;
        telemetry.step_completed(s.tokens);
        state_.elapsed_s = telemetry.elapsed_s();
        state_.energy_kwh = telemetry.energy();
        state_.emissions_kg = telemetry.emissions();
        if (on_step) on_step(s);

        const bool final_step = state_.step == c.total_steps;
        if ((c.eval_interval > 0 && state_.step % c.eval_interval == 0) || final_step) {
            double ppl = std::nan("");
            if (eval_data_.n_sequences() > 0) ppl = evaluate().perplexity;
            log.rows.push_back(telemetry.row(state_.step, last_loss, ppl));
        }
        if (!checkpoint_dir.empty() && c.checkpoint_interval > 0 &&
            (state_.step % c.checkpoint_interval == 0 || final_step)) {
            std::filesystem::create_directories(checkpoint_dir);
            save_checkpoint(state_, checkpoint_dir + "/step-" + std::to_string(state_.step) +
                                        ".ttlc");
        }
    }
    return log;
}

// ---------------------------------------------------------------------------
// checkpoint file: magic TTLC, version, config, tensors, rng, telemetry
// ---------------------------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[4] = {'T', 'T', 'L', 'C'};
constexpr uint32_t kCheckpointVersion = 1;

void write_tensor(std::ostream& os, const std::string& name, const Shape& shape,
                  const float* data, int64_t n) {
    write_string(os, name);
    write_le<uint32_t>(os, static_cast<uint32_t>(shape.size()));
    for (int64_t d : shape) write_le<uint64_t>(os, static_cast<uint64_t>(d));
    for (int64_t i = 0; i < n; ++i) write_le<float>(os, data[i]);
}

std::vector<float> read_tensor(std::istream& is, const std::string& expect_name, Shape* shape) {
    const std::string name = read_string(is);
    if (name != expect_name)
        throw FormatError("checkpoint: expected tensor '" + expect_name + "', found '" + name +
                          "'");
    const uint32_t ndim = read_le<uint32_t>(is);
    shape->clear();
    int64_t n = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
        shape->push_back(static_cast<int64_t>(read_le<uint64_t>(is)));
        n *= shape->back();
    }
    std::vector<float> data(static_cast<size_t>(n));
    for (auto& v : data) v = read_le<float>(is);
    return data;
}

} // namespace

void save_checkpoint(const TrainerState& state, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    write_bytes(f, kCheckpointMagic, 4);
    write_le<uint32_t>(f, kCheckpointVersion);

    const ModelConfig& mc = state.model_config;
    write_le<uint64_t>(f, static_cast<uint64_t>(mc.hidden_size));
    write_le<uint64_t>(f, static_cast<uint64_t>(mc.intermediate_size));
    write_le<uint64_t>(f, static_cast<uint64_t>(mc.context_length));
    write_le<uint64_t>(f, static_cast<uint64_t>(mc.n_heads));
    write_le<uint64_t>(f, static_cast<uint64_t>(mc.n_kv_heads));
    write_le<uint64_t>(f, static_cast<uint64_t>(mc.n_layers));
    write_le<uint64_t>(f, static_cast<uint64_t>(mc.vocab_size));
    write_le<float>(f, mc.rope_theta);
    write_le<float>(f, mc.norm_eps);
    write_le<uint8_t>(f, mc.tie_embeddings ? 1 : 0);

    write_string(f, state.config.serialize());
    write_le<uint64_t>(f, static_cast<uint64_t>(state.step));
    write_le<uint64_t>(f, state.tokenizer_fingerprint);
    write_le<uint64_t>(f, state.rng.seed());
    write_le<uint64_t>(f, state.rng.counter());
    write_le<uint64_t>(f, state.tokens_processed);
    write_le<double>(f, state.elapsed_s);
    write_le<double>(f, state.energy_kwh);
    write_le<double>(f, state.emissions_kg);

    auto named = state.params.named_tensors();
    write_le<uint32_t>(f, static_cast<uint32_t>(named.size()));
    for (auto& [name, t] : named) write_tensor(f, name, t.shape(), t.data(), t.numel());
    for (size_t i = 0; i < named.size(); ++i)
        write_tensor(f, "m." + named[i].first, named[i].second.shape(),
                     state.adam_m[i].data(), named[i].second.numel());
    for (size_t i = 0; i < named.size(); ++i)
        write_tensor(f, "v." + named[i].first, named[i].second.shape(),
                     state.adam_v[i].data(), named[i].second.numel());
    if (!f) throw IoError("write failed: " + path);
}

TrainerState load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    char magic[4];
    read_bytes(f, magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw FormatError(path + ": not a checkpoint file");
    if (read_le<uint32_t>(f) != kCheckpointVersion)
        throw FormatError(path + ": unsupported checkpoint version");

    TrainerState state;
    ModelConfig& mc = state.model_config;
    mc.hidden_size = static_cast<int64_t>(read_le<uint64_t>(f));
    mc.intermediate_size = static_cast<int64_t>(read_le<uint64_t>(f));
    mc.context_length = static_cast<int64_t>(read_le<uint64_t>(f));
    mc.n_heads = static_cast<int64_t>(read_le<uint64_t>(f));
    mc.n_kv_heads = static_cast<int64_t>(read_le<uint64_t>(f));
    mc.n_layers = static_cast<int64_t>(read_le<uint64_t>(f));
    mc.vocab_size = static_cast<int64_t>(read_le<uint64_t>(f));
    mc.rope_theta = read_le<float>(f);
    mc.norm_eps = read_le<float>(f);
    mc.tie_embeddings = read_le<uint8_t>(f) != 0;

    state.config = TrainConfig::parse(read_string(f));
    state.step = static_cast<int64_t>(read_le<uint64_t>(f));
    state.tokenizer_fingerprint = read_le<uint64_t>(f);
    const uint64_t seed = read_le<uint64_t>(f);
    const uint64_t counter = read_le<uint64_t>(f);
    state.rng = Rng(seed, counter);
    state.tokens_processed = read_le<uint64_t>(f);
    state.elapsed_s = read_le<double>(f);
    state.energy_kwh = read_le<double>(f);
    state.emissions_kg = read_le<double>(f);

    state.params = ModelParams::zeros(mc);
    auto named = state.params.named_tensors();
    const uint32_t count = read_le<uint32_t>(f);
    if (count != named.size()) throw FormatError(path + ": tensor count mismatch");
    for (auto& [name, t] : named) {
        Shape shape;
        auto data = read_tensor(f, name, &shape);
        if (shape != t.shape()) throw FormatError(path + ": shape mismatch for " + name);
        std::copy(data.begin(), data.end(), t.mutable_data());
    }
    for (auto& [name, t] : named) {
        Shape shape;
        state.adam_m.push_back(read_tensor(f, "m." + name, &shape));
        if (shape != t.shape()) throw FormatError(path + ": shape mismatch for m." + name);
    }
    for (auto& [name, t] : named) {
        Shape shape;
        state.adam_v.push_back(read_tensor(f, "v." + name, &shape));
        if (shape != t.shape()) throw FormatError(path + ": shape mismatch for v." + name);
    }
    return state;
}

} // namespace ttl
