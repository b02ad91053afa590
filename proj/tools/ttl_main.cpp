// SPDX-License-Identifier: Apache-2.0
//
// ttl - desk-scale language model pre-training toolkit.
// Workflow: plan -> tok -> data -> train -> eval -> quantize -> generate -> report

#include <chrono>
#include <cstdio>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <sys/file.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "ttl/data.hpp"
#include "ttl/inference.hpp"
#include "ttl/io_util.hpp"
#include "ttl/model.hpp"
#include "ttl/planner.hpp"
#include "ttl/quant.hpp"
#include "ttl/telemetry.hpp"
#include "ttl/tensor.hpp"
#include "ttl/tokenizer.hpp"
#include "ttl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes: 0 ok, 2 usage, 3 missing/unreadable file, 4 format or
// fingerprint mismatch, 5 invalid values, 1 anything else.
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitFormat = 4;
constexpr int kExitDomain = 5;

// Advisory lock on the run directory so two trainers cannot write the same
// checkpoints. Held for the process lifetime.
class RunLock {
  public:
    explicit RunLock(const std::string& dir) {
        fs::create_directories(dir);
        const std::string path = dir + "/.lock";
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw ttl::IoError("cannot open lock file: " + path);
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw ttl::IoError("run directory is locked by another process: " + dir);
        }
    }
    ~RunLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

  private:
    int fd_ = -1;
};

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string read_text_file(const std::string& path) {
    auto bytes = ttl::read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

struct PresetBundle {
    ttl::ModelConfig model;
    ttl::TrainConfig train;
};

PresetBundle resolve_preset(const std::string& name) {
    if (name == "ttl-160m") return {ttl::ModelConfig::preset_160m(), ttl::TrainConfig::preset_160m()};
    if (name == "ttl-460m") return {ttl::ModelConfig::preset_460m(), ttl::TrainConfig::preset_460m()};
    if (name == "ttl-sft") return {ttl::ModelConfig::preset_460m(), ttl::TrainConfig::preset_sft()};
    throw ttl::ConfigError("unknown preset: " + name +
                           " (expected ttl-160m, ttl-460m or ttl-sft)");
}

std::string model_config_text(const ttl::ModelConfig& m) {
    std::ostringstream os;
    os << "hidden size = " << m.hidden_size << "\n";
    os << "intermediate size = " << m.intermediate_size << "\n";
    os << "context length = " << m.context_length << "\n";
    os << "attention heads = " << m.n_heads << "\n";
    os << "key-value heads = " << m.n_kv_heads << "\n";
    os << "layers = " << m.n_layers << "\n";
    os << "vocab size = " << m.vocab_size << "\n";
    os << "tie embeddings = " << (m.tie_embeddings ? "true" : "false") << "\n";
    return os.str();
}

// ---- plan ----

struct PlanArgs {
    double n_params = 0;
    double unique_tokens = 0;
    double ratio = 20.0;
    ttl::ScalingConstants constants;
};

int run_plan(const PlanArgs& a) {
    ttl::PlanReport r = ttl::make_plan(a.n_params, a.unique_tokens, a.ratio, a.constants);
    std::cout << r.human_text() << "\n" << r.machine_text();
    return 0;
}

// ---- tok ----

int run_tok_train(const std::vector<std::string>& inputs, const std::string& out,
                  int64_t vocab_size, int64_t min_pair_freq) {
    std::string corpus;
    for (const auto& path : inputs) corpus += read_text_file(path);
    ttl::Tokenizer::TrainOptions opts;
    opts.vocab_size = vocab_size;
    opts.min_pair_frequency = min_pair_freq;
    ttl::Tokenizer tok = ttl::Tokenizer::train(corpus, opts);
    tok.save(out);
    std::cout << "trained tokenizer: vocab_size=" << tok.vocab_size()
              << " merges=" << tok.merges().size() << " fingerprint=" << std::hex
              << tok.fingerprint() << std::dec << "\n";
    return 0;
}

int run_tok_encode(const std::string& tok_path, const std::string& text,
                   const std::string& file) {
    ttl::Tokenizer tok = ttl::Tokenizer::load(tok_path);
    const std::string payload = file.empty() ? text : read_text_file(file);
    auto ids = tok.encode(payload);
    for (size_t i = 0; i < ids.size(); ++i) std::cout << (i ? " " : "") << ids[i];
    std::cout << "\n";
    return 0;
}

int run_tok_decode(const std::string& tok_path, const std::string& ids_text) {
    ttl::Tokenizer tok = ttl::Tokenizer::load(tok_path);
    std::vector<int32_t> ids;
    std::istringstream is(ids_text);
    int64_t v;
    while (is >> v) ids.push_back(static_cast<int32_t>(v));
    std::cout << tok.decode(ids) << "\n";
    return 0;
}

int run_tok_bench(const std::string& wordlist_path, const std::vector<std::string>& tok_paths,
                  const std::string& fixtures_path, uint64_t words_override, bool csv) {
    std::string wordlist = wordlist_path.empty() ? "" : read_text_file(wordlist_path);
    std::vector<ttl::Tokenizer> toks;
    std::vector<std::pair<std::string, const ttl::Tokenizer*>> models;
    toks.reserve(tok_paths.size());
    for (const auto& p : tok_paths) {
        toks.push_back(ttl::Tokenizer::load(p));
        models.emplace_back(fs::path(p).stem().string(), &toks.back());
    }
    std::vector<ttl::FertilityRow> fixtures;
    if (!fixtures_path.empty()) fixtures = ttl::load_fertility_fixtures(fixtures_path);
    auto rep = ttl::benchmark_fertility(models, fixtures, wordlist, words_override);
    std::cout << (csv ? rep.csv() : rep.text());
    return 0;
}

// ---- data ----

int run_data_pack(const std::vector<std::string>& inputs, const std::string& tok_path,
                  int64_t seq_len, double eval_frac, uint64_t seed, const std::string& out,
                  bool per_line, int64_t min_doc_bytes, double max_non_alnum) {
    ttl::Tokenizer tok = ttl::Tokenizer::load(tok_path);
    ttl::IngestFilters filters;
    filters.min_doc_bytes = min_doc_bytes;
    filters.max_non_alnum_ratio = max_non_alnum;
    std::vector<int32_t> stream;
    std::vector<ttl::PackedDataset::ManifestEntry> manifest;
    for (const auto& path : inputs) {
        const auto docs = ttl::split_documents(read_text_file(path), per_line);
        auto ids = ttl::tokenize_corpus(tok, docs, filters);
        stream.insert(stream.end(), ids.begin(), ids.end());
        manifest.push_back({path, docs.size(), ids.size()});
        std::cout << path << ": " << docs.size() << " documents, " << ids.size() << " tokens\n";
    }
    ttl::PackedDataset ds = ttl::pack(stream, seq_len, tok.fingerprint());
    ds.manifest = std::move(manifest);
    std::cout << "packed " << ds.n_sequences() << " sequences of " << seq_len << " ("
              << ds.total_tokens() << " tokens, " << stream.size() - ds.tokens.size()
              << " dropped)\n";
    if (eval_frac > 0.0) {
        auto [train, eval] = ttl::split_eval(ds, eval_frac, seed);
        train.save(out + ".train.ttld");
        eval.save(out + ".eval.ttld");
        std::cout << "wrote " << out << ".train.ttld (" << train.n_sequences() << ") and " << out
                  << ".eval.ttld (" << eval.n_sequences() << ")\n";
    } else {
        ds.save(out + ".ttld");
        std::cout << "wrote " << out << ".ttld\n";
    }
    return 0;
}

int run_data_pack_sft(const std::string& pairs_path, const std::string& tok_path,
                      int64_t seq_len, const std::string& out) {
    ttl::Tokenizer tok = ttl::Tokenizer::load(tok_path);
    std::vector<std::pair<std::string, std::string>> pairs;
    std::istringstream is(read_text_file(pairs_path));
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw ttl::FormatError(pairs_path + ": expected 'prompt<TAB>completion' per line");
        pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    auto [ds, mask] = ttl::pack_sft(tok, pairs, seq_len);
    ds.save(out + ".ttld");
    mask.save(out + ".ttlm");
    std::cout << "packed " << ds.n_sequences() << " sequences from " << pairs.size()
              << " pairs; wrote " << out << ".ttld and " << out << ".ttlm\n";
    return 0;
}

// ---- train / resume ----

struct TrainArgs {
    std::string preset;
    std::string config_file;
    std::string data_path, eval_path, mask_path;
    std::string out_dir = "run";
    std::string tokenizer_path;
    bool dry_run = false;
    // overrides (negative / zero means "not set")
    int64_t steps = -1;
    double lr = -1;
    int64_t seed = -1;
    int64_t tokens_per_batch = -1;
    int64_t accum = -1;
    int64_t checkpoint_interval = -1;
    int64_t eval_interval = -1;
    // custom model dims
    int64_t hidden = 0, inter = 0, ctx = 0, heads = 0, kv_heads = 0, layers = 0, vocab = 0;
    bool tie = false;
    // telemetry
    double watts = 403.6, utilization = 1.0, intensity = ttl::kDefaultCarbonIntensity;
};

PresetBundle resolve_train_setup(const TrainArgs& a) {
    PresetBundle b;
    if (!a.preset.empty()) {
        b = resolve_preset(a.preset);
    } else {
        if (a.hidden <= 0)
            throw ttl::ConfigError("train: pass --preset or explicit model dimensions");
        b.model.hidden_size = a.hidden;
        b.model.intermediate_size = a.inter > 0 ? a.inter : 4 * a.hidden;
        b.model.context_length = a.ctx > 0 ? a.ctx : 2048;
        b.model.n_heads = a.heads > 0 ? a.heads : 8;
        b.model.n_kv_heads = a.kv_heads > 0 ? a.kv_heads : b.model.n_heads;
        b.model.n_layers = a.layers > 0 ? a.layers : 2;
        b.model.vocab_size = a.vocab > 0 ? a.vocab : 32000;
        b.model.tie_embeddings = a.tie;
        b.train = ttl::TrainConfig::preset_160m();
    }
    if (!a.config_file.empty()) b.train = ttl::TrainConfig::parse(read_text_file(a.config_file));
    if (a.steps > 0) {
        b.train.total_steps = a.steps;
        b.train.epochs = 0.0;
        if (b.train.warmup_steps >= a.steps) b.train.warmup_steps = a.steps / 10;
    }
    if (a.lr > 0) b.train.peak_lr = a.lr;
    if (a.seed >= 0) b.train.seed = static_cast<uint64_t>(a.seed);
    if (a.tokens_per_batch > 0) b.train.tokens_per_batch = a.tokens_per_batch;
    if (a.accum > 0) b.train.grad_accum_steps = a.accum;
    if (a.checkpoint_interval >= 0) b.train.checkpoint_interval = a.checkpoint_interval;
    if (a.eval_interval >= 0) b.train.eval_interval = a.eval_interval;
    return b;
}

void write_manifest(const TrainArgs& a, const PresetBundle& b, const std::string& out_dir,
                    uint64_t tokenizer_fingerprint) {
    json m;
    m["created"] = iso_timestamp();
    m["preset"] = a.preset;
    m["seed"] = b.train.seed;
    m["dataset"] = a.data_path;
    if (!a.data_path.empty()) m["dataset_fingerprint"] = ttl::file_fingerprint(a.data_path);
    if (!a.eval_path.empty()) {
        m["eval_dataset"] = a.eval_path;
        m["eval_dataset_fingerprint"] = ttl::file_fingerprint(a.eval_path);
    }
    if (!a.tokenizer_path.empty()) m["tokenizer"] = a.tokenizer_path;
    m["tokenizer_fingerprint"] = tokenizer_fingerprint;
    m["train_config_fingerprint"] = ttl::fnv1a64(b.train.serialize());
    m["checkpoints"] = out_dir + "/checkpoints";
    m["telemetry_csv"] = out_dir + "/telemetry.csv";
    std::ofstream f(out_dir + "/manifest.json");
    if (!f) throw ttl::IoError("cannot write manifest in " + out_dir);
    f << m.dump(2) << "\n";
}

int finish_run(ttl::Trainer& trainer, const TrainArgs& a, const std::string& out_dir) {
    ttl::PowerModel power{a.watts, a.utilization};
    ttl::TelemetryTracker tracker(power, a.intensity);
    int64_t last_logged = -1;
    ttl::TelemetryLog log = trainer.run(tracker, out_dir + "/checkpoints",
                                        [&](const ttl::StepStats& s) {
                                            if (s.step % 100 == 0 || s.step <= 5) {
                                                std::cout << "step " << s.step << " loss " << s.loss
                                                          << " lr " << s.lr << "\n";
                                                last_logged = s.step;
                                            }
                                        });
    log.power = power;
    log.carbon_intensity = a.intensity;
    log.save_csv(out_dir + "/telemetry.csv");
    if (!log.rows.empty()) std::cout << ttl::checkpoint_report(log);
    std::cout << "final checkpoint: " << out_dir << "/checkpoints/step-"
              << trainer.state().step << ".ttlc\n";
    return 0;
}

int run_train(const TrainArgs& a) {
    PresetBundle b = resolve_train_setup(a);

    if (a.dry_run) {
        std::cout << "# model\n" << model_config_text(b.model) << "# training\n"
                  << b.train.serialize();
        std::cout << "# dry run: nothing written\n";
        return 0;
    }
    if (a.data_path.empty()) throw ttl::ConfigError("train: --data is required");

    ttl::PackedDataset train_data = ttl::PackedDataset::load(a.data_path);
    ttl::PackedDataset eval_data;
    if (!a.eval_path.empty()) eval_data = ttl::PackedDataset::load(a.eval_path);
    std::optional<ttl::PackedMask> mask;
    if (!a.mask_path.empty()) mask = ttl::PackedMask::load(a.mask_path);

    RunLock lock(a.out_dir);
    write_manifest(a, b, a.out_dir, train_data.tokenizer_fingerprint);

    ttl::Rng init_rng = ttl::Rng::derive(b.train.seed, /*stream=*/1);
    ttl::ModelParams params = ttl::ModelParams::init(b.model, init_rng);
    ttl::Trainer trainer(std::move(params), b.train, std::move(train_data), std::move(eval_data),
                         std::move(mask));
    return finish_run(trainer, a, a.out_dir);
}

int run_resume(const std::string& checkpoint, const TrainArgs& a) {
    ttl::TrainerState state = ttl::load_checkpoint(checkpoint);
    if (a.data_path.empty()) throw ttl::ConfigError("resume: --data is required");
    ttl::PackedDataset train_data = ttl::PackedDataset::load(a.data_path);
    ttl::PackedDataset eval_data;
    if (!a.eval_path.empty()) eval_data = ttl::PackedDataset::load(a.eval_path);
    std::optional<ttl::PackedMask> mask;
    if (!a.mask_path.empty()) mask = ttl::PackedMask::load(a.mask_path);
    RunLock lock(a.out_dir);
    ttl::Trainer trainer(std::move(state), std::move(train_data), std::move(eval_data),
                         std::move(mask));
    std::cout << "resumed at step " << trainer.state().step << "\n";
    return finish_run(trainer, a, a.out_dir);
}

// ---- eval / generate / quantize / bench ----

int run_eval(const std::string& checkpoint, const std::string& data_path) {
    ttl::TrainerState state = ttl::load_checkpoint(checkpoint);
    ttl::PackedDataset eval_data = ttl::PackedDataset::load(data_path);
    if (state.tokenizer_fingerprint != 0 && eval_data.tokenizer_fingerprint != 0 &&
        state.tokenizer_fingerprint != eval_data.tokenizer_fingerprint)
        throw ttl::FormatError("eval: dataset tokenizer fingerprint differs from checkpoint");
    ttl::Trainer trainer(std::move(state), eval_data, eval_data);
    auto e = trainer.evaluate();
    std::cout << "eval loss = " << e.loss << " nats\nperplexity = " << e.perplexity << "\n";
    return 0;
}

int run_generate(const std::string& checkpoint, const std::string& quantized,
                 const std::string& tok_path, const std::string& prompt, int64_t max_new,
                 double temperature, int64_t top_k, uint64_t seed, bool no_cache,
                 bool print_ids) {
    std::optional<ttl::Tokenizer> tok;
    if (!tok_path.empty()) tok = ttl::Tokenizer::load(tok_path);

    ttl::GenerationParams p;
    p.max_new_tokens = max_new;
    p.temperature = temperature;
    p.top_k = top_k;
    p.seed = seed;
    p.use_cache = !no_cache;

    std::vector<int32_t> prompt_ids;
    if (tok) {
        prompt_ids = tok->encode(prompt);
        prompt_ids.insert(prompt_ids.begin(), tok->bos_id());
        p.stop_ids = {tok->eos_id()};
    } else {
        std::istringstream is(prompt);
        int64_t v;
        while (is >> v) prompt_ids.push_back(static_cast<int32_t>(v));
    }

    auto run_with = [&](const ttl::InferenceModel& model) {
        auto res = ttl::generate(model, prompt_ids, p);
        if (tok && !print_ids) {
            std::cout << tok->decode(res.ids) << "\n";
        } else {
            for (size_t i = 0; i < res.ids.size(); ++i) std::cout << (i ? " " : "") << res.ids[i];
            std::cout << "\n";
        }
    };
    if (!quantized.empty()) {
        ttl::QuantizedParams qp = ttl::QuantizedParams::load(quantized);
        run_with(ttl::InferenceModel(qp));
    } else {
        ttl::TrainerState state = ttl::load_checkpoint(checkpoint);
        run_with(ttl::InferenceModel(state.params));
    }
    return 0;
}

int run_quantize(const std::string& checkpoint, const std::string& out, int64_t group) {
    ttl::TrainerState state = ttl::load_checkpoint(checkpoint);
    ttl::QuantizedParams qp = ttl::quantize(state.params, group);
    qp.save(out);
    const uint64_t bytes = qp.footprint_bytes();
    std::cout << "quantized model written to " << out << "\n";
    std::cout << "group_size=" << group << "\n";
    std::cout << "footprint_bytes=" << bytes << " (" << static_cast<double>(bytes) / 1e6
              << " MB)\n";
    return 0;
}

int run_bench_throughput(const std::string& checkpoint, const std::string& quantized,
                         int64_t n_tokens, int64_t reps, const std::string& prompt_ids_text) {
    std::vector<int32_t> prompt;
    {
        std::istringstream is(prompt_ids_text);
        int64_t v;
        while (is >> v) prompt.push_back(static_cast<int32_t>(v));
    }
    if (prompt.empty()) prompt = {1}; // bos
    auto bench = [&](const ttl::InferenceModel& m) {
        auto st = ttl::measure_throughput(m, prompt, n_tokens, reps);
        std::cout << st.text();
        std::cout << "runs_t_per_s=";
        for (size_t i = 0; i < st.tokens_per_s.size(); ++i)
            std::cout << (i ? "," : "") << st.tokens_per_s[i];
        std::cout << "\n";
    };
    if (!quantized.empty()) {
        ttl::QuantizedParams qp = ttl::QuantizedParams::load(quantized);
        bench(ttl::InferenceModel(qp));
    } else {
        ttl::TrainerState state = ttl::load_checkpoint(checkpoint);
        bench(ttl::InferenceModel(state.params));
    }
    return 0;
}

int run_report(const std::string& telemetry_csv, const std::string& out_dir) {
    ttl::TelemetryLog log = ttl::TelemetryLog::load_csv(telemetry_csv);
    std::cout << ttl::checkpoint_report(log);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        log.save_csv(out_dir + "/telemetry.csv");
        std::vector<double> tokens, loss, ppl, energy;
        std::vector<double> tokens_loss, tokens_ppl;
        for (const auto& r : log.rows) {
            const double t = static_cast<double>(r.tokens);
            if (!std::isnan(r.loss)) {
                tokens_loss.push_back(t);
                loss.push_back(r.loss);
            }
            if (!std::isnan(r.perplexity)) {
                tokens_ppl.push_back(t);
                ppl.push_back(r.perplexity);
            }
            tokens.push_back(t);
            energy.push_back(r.energy_kwh);
        }
        if (!loss.empty())
            ttl::write_svg_chart(out_dir + "/loss.svg", "training loss", tokens_loss, loss,
                                 "tokens", "loss (nats)");
        if (!ppl.empty())
            ttl::write_svg_chart(out_dir + "/perplexity.svg", "eval perplexity", tokens_ppl, ppl,
                                 "tokens", "perplexity");
        ttl::write_svg_chart(out_dir + "/energy.svg", "energy consumption", tokens, energy,
                             "tokens", "kWh");
        std::cout << "charts written to " << out_dir << "\n";
    }
    return 0;
}

void add_train_flags(CLI::App* cmd, TrainArgs& a, bool for_resume) {
    if (!for_resume) {
        cmd->add_option("--preset", a.preset, "ttl-160m | ttl-460m | ttl-sft");
        cmd->add_option("--config", a.config_file, "flat key = value training config file");
        cmd->add_option("--hidden", a.hidden);
        cmd->add_option("--intermediate", a.inter);
        cmd->add_option("--context", a.ctx);
        cmd->add_option("--heads", a.heads);
        cmd->add_option("--kv-heads", a.kv_heads);
        cmd->add_option("--layers", a.layers);
        cmd->add_option("--vocab", a.vocab);
        cmd->add_flag("--tie-embeddings", a.tie);
        cmd->add_option("--seed", a.seed, "master seed for init, shuffling, splits");
        cmd->add_option("--lr", a.lr);
        cmd->add_option("--steps", a.steps);
        cmd->add_option("--tokens-per-batch", a.tokens_per_batch);
        cmd->add_option("--accum", a.accum);
        cmd->add_option("--checkpoint-interval", a.checkpoint_interval);
        cmd->add_option("--eval-interval", a.eval_interval);
        cmd->add_flag("--dry-run", a.dry_run, "print the resolved config and exit");
        cmd->add_option("--tokenizer", a.tokenizer_path, "recorded in the manifest");
    }
    cmd->add_option("--data", a.data_path, "packed training dataset (.ttld)");
    cmd->add_option("--eval-data", a.eval_path, "packed eval dataset (.ttld)");
    cmd->add_option("--mask", a.mask_path, "prompt mask (.ttlm) enabling the SFT objective");
    cmd->add_option("--out", a.out_dir, "run directory");
    cmd->add_option("--watts", a.watts, "power model: average device watts");
    cmd->add_option("--utilization", a.utilization, "power model: utilization factor");
    cmd->add_option("--intensity", a.intensity, "carbon intensity kgCO2eq/kWh");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale LLM pre-training toolkit"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads,
                   "worker threads for large matmuls (results are identical "
                   "for any count)");

    // plan
    PlanArgs plan_args;
    auto* plan = app.add_subcommand("plan", "size models and token budgets");
    plan->add_option("--n-params", plan_args.n_params, "parameter count (e.g. 160e6)")
        ->required();
    plan->add_option("--unique-tokens", plan_args.unique_tokens, "corpus size for epoch math");
    plan->add_option("--ratio", plan_args.ratio, "tokens per parameter");
    plan->add_option("--scale-a", plan_args.constants.A);
    plan->add_option("--scale-b", plan_args.constants.B);
    plan->add_option("--scale-e", plan_args.constants.E);
    plan->add_option("--scale-alpha", plan_args.constants.alpha);
    plan->add_option("--scale-beta", plan_args.constants.beta);

    // tok
    auto* tok = app.add_subcommand("tok", "tokenizer training and tools");
    tok->require_subcommand(1);
    std::vector<std::string> tok_inputs;
    std::string tok_out = "tokenizer.ttltok";
    int64_t tok_vocab = 32000, tok_minfreq = 2;
    auto* tok_train = tok->add_subcommand("train", "train a byte-level BPE tokenizer");
    tok_train->add_option("--corpus", tok_inputs, "input text files")->required();
    tok_train->add_option("--out", tok_out);
    tok_train->add_option("--vocab-size", tok_vocab);
    tok_train->add_option("--min-pair-freq", tok_minfreq);

    std::string tokenc_tok, tokenc_text, tokenc_file;
    auto* tok_encode = tok->add_subcommand("encode", "encode text to token ids");
    tok_encode->add_option("--tokenizer", tokenc_tok)->required();
    tok_encode->add_option("--text", tokenc_text);
    tok_encode->add_option("--file", tokenc_file);

    std::string tokdec_tok, tokdec_ids;
    auto* tok_decode = tok->add_subcommand("decode", "decode token ids to text");
    tok_decode->add_option("--tokenizer", tokdec_tok)->required();
    tok_decode->add_option("--ids", tokdec_ids)->required();

    std::string bench_wordlist, bench_fixtures;
    std::vector<std::string> bench_toks;
    uint64_t bench_words = 0;
    bool bench_csv = false;
    auto* tok_bench = tok->add_subcommand("bench", "tokenizer efficiency comparison");
    tok_bench->add_option("--wordlist", bench_wordlist, "text file of words");
    tok_bench->add_option("--tokenizer", bench_toks, "tokenizer files to measure");
    tok_bench->add_option("--fixtures", bench_fixtures, "externally measured rows csv");
    tok_bench->add_option("--words", bench_words, "word count when no wordlist is given");
    tok_bench->add_flag("--csv", bench_csv);

    // data
    auto* data = app.add_subcommand("data", "corpus packing");
    data->require_subcommand(1);
    std::vector<std::string> pack_inputs;
    std::string pack_tok, pack_out = "dataset";
    int64_t pack_seq = 2048, pack_min_bytes = 0;
    double pack_eval = 0.01, pack_max_symbols = 1.0;
    uint64_t pack_seed = 42;
    bool pack_per_line = false;
    auto* data_pack = data->add_subcommand("pack", "tokenize and pack fixed-length sequences");
    data_pack->add_option("--input", pack_inputs, "raw text files")->required();
    data_pack->add_option("--tokenizer", pack_tok)->required();
    data_pack->add_option("--seq-len", pack_seq);
    data_pack->add_option("--eval-frac", pack_eval, "0 disables the split");
    data_pack->add_option("--seed", pack_seed);
    data_pack->add_option("--out", pack_out, "output path stem");
    data_pack->add_flag("--per-line", pack_per_line, "one document per line");
    data_pack->add_option("--min-doc-bytes", pack_min_bytes, "ingestion filter");
    data_pack->add_option("--max-non-alnum", pack_max_symbols, "ingestion filter ratio");

    std::string sft_pairs, sft_tok, sft_out = "sft";
    int64_t sft_seq = 2048;
    auto* data_sft = data->add_subcommand("pack-sft", "pack prompt/completion pairs with a mask");
    data_sft->add_option("--pairs", sft_pairs, "prompt<TAB>completion lines")->required();
    data_sft->add_option("--tokenizer", sft_tok)->required();
    data_sft->add_option("--seq-len", sft_seq);
    data_sft->add_option("--out", sft_out);

    // train / resume
    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "pre-train or fine-tune");
    add_train_flags(train, train_args, false);

    TrainArgs resume_args;
    std::string resume_ckpt;
    auto* resume = app.add_subcommand("resume", "continue from a checkpoint");
    resume->add_option("--checkpoint", resume_ckpt)->required();
    add_train_flags(resume, resume_args, true);

    // eval
    std::string eval_ckpt, eval_data_path;
    auto* eval = app.add_subcommand("eval", "perplexity on a packed dataset");
    eval->add_option("--checkpoint", eval_ckpt)->required();
    eval->add_option("--data", eval_data_path)->required();

    // generate
    std::string gen_ckpt, gen_quant, gen_tok, gen_prompt;
    int64_t gen_max = 128, gen_topk = 0;
    double gen_temp = 1.0;
    uint64_t gen_seed = 0;
    bool gen_no_cache = false, gen_ids = false;
    auto* gen = app.add_subcommand("generate", "autoregressive text generation");
    gen->add_option("--checkpoint", gen_ckpt);
    gen->add_option("--quantized", gen_quant, "quantized model file (.ttlq)");
    gen->add_option("--tokenizer", gen_tok);
    gen->add_option("--prompt", gen_prompt, "text (or ids when no tokenizer)")->required();
    gen->add_option("--max-new-tokens", gen_max);
    gen->add_option("--temperature", gen_temp);
    gen->add_option("--top-k", gen_topk);
    gen->add_option("--seed", gen_seed);
    gen->add_flag("--no-cache", gen_no_cache, "recompute the prefix every step");
    gen->add_flag("--ids", gen_ids, "print token ids instead of text");

    // quantize
    std::string q_ckpt, q_out = "model.ttlq";
    int64_t q_group = 128;
    auto* quant = app.add_subcommand("quantize", "4-bit group quantization");
    quant->add_option("--checkpoint", q_ckpt)->required();
    quant->add_option("--out", q_out);
    quant->add_option("--group", q_group);

    // bench-throughput
    std::string bt_ckpt, bt_quant, bt_prompt;
    int64_t bt_tokens = 64, bt_reps = 5;
    auto* bt = app.add_subcommand("bench-throughput", "tokens/second measurement");
    bt->add_option("--checkpoint", bt_ckpt);
    bt->add_option("--quantized", bt_quant);
    bt->add_option("--n-tokens", bt_tokens);
    bt->add_option("--reps", bt_reps);
    bt->add_option("--prompt-ids", bt_prompt, "space-separated prompt ids (default: bos)");

    // report
    std::string rep_csv, rep_out;
    auto* rep = app.add_subcommand("report", "telemetry tables and charts");
    rep->add_option("--telemetry", rep_csv)->required();
    rep->add_option("--out-dir", rep_out, "write csv + svg charts here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }
    ttl::set_num_threads(threads);

    try {
        if (plan->parsed()) return run_plan(plan_args);
        if (tok_train->parsed()) return run_tok_train(tok_inputs, tok_out, tok_vocab, tok_minfreq);
        if (tok_encode->parsed()) return run_tok_encode(tokenc_tok, tokenc_text, tokenc_file);
        if (tok_decode->parsed()) return run_tok_decode(tokdec_tok, tokdec_ids);
        if (tok_bench->parsed())
            return run_tok_bench(bench_wordlist, bench_toks, bench_fixtures, bench_words,
                                 bench_csv);
        if (data_pack->parsed())
            return run_data_pack(pack_inputs, pack_tok, pack_seq, pack_eval, pack_seed, pack_out,
                                 pack_per_line, pack_min_bytes, pack_max_symbols);
        if (data_sft->parsed()) return run_data_pack_sft(sft_pairs, sft_tok, sft_seq, sft_out);
        if (train->parsed()) return run_train(train_args);
        if (resume->parsed()) return run_resume(resume_ckpt, resume_args);
        if (eval->parsed()) return run_eval(eval_ckpt, eval_data_path);
        if (gen->parsed())
            return run_generate(gen_ckpt, gen_quant, gen_tok, gen_prompt, gen_max, gen_temp,
                                gen_topk, gen_seed, gen_no_cache, gen_ids);
        if (quant->parsed()) return run_quantize(q_ckpt, q_out, q_group);
        if (bt->parsed()) return run_bench_throughput(bt_ckpt, bt_quant, bt_tokens, bt_reps,
                                                      bt_prompt);
        if (rep->parsed()) return run_report(rep_csv, rep_out);
    } catch (const ttl::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ttl::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const ttl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
