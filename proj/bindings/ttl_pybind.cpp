// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the main operations: compute planning, tokenizer
// training, dataset packing, training steps, checkpoints, quantization,
// generation and telemetry math.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ttl/data.hpp"
#include "ttl/inference.hpp"
#include "ttl/model.hpp"
#include "ttl/planner.hpp"
#include "ttl/quant.hpp"
#include "ttl/telemetry.hpp"
#include "ttl/tokenizer.hpp"
#include "ttl/trainer.hpp"

namespace py = pybind11;
using namespace ttl;

namespace {

// Python-facing trainer that owns its datasets and initializes parameters.
class PyTrainer {
  public:
    PyTrainer(const ModelConfig& model, const TrainConfig& config, const PackedDataset& train,
              const PackedDataset& eval, uint64_t init_seed)
        : trainer_([&] {
              Rng rng = Rng::derive(init_seed, 1);
              return Trainer(ModelParams::init(model, rng), config, train, eval);
          }()) {}

    explicit PyTrainer(const std::string& checkpoint, const PackedDataset& train,
                       const PackedDataset& eval)
        : trainer_(load_checkpoint(checkpoint), train, eval) {}

    py::dict step() {
        StepStats s = trainer_.train_step();
        py::dict d;
        d["step"] = s.step;
        d["loss"] = s.loss;
        d["lr"] = s.lr;
        d["grad_norm"] = s.grad_norm;
        d["tokens"] = s.tokens;
        return d;
    }

    py::dict evaluate() {
        EvalStats e = trainer_.evaluate();
        py::dict d;
        d["loss"] = e.loss;
        d["perplexity"] = e.perplexity;
        return d;
    }

    void save(const std::string& path) { save_checkpoint(trainer_.state(), path); }
    int64_t current_step() const { return trainer_.state().step; }
    uint64_t tokens_processed() const { return trainer_.state().tokens_processed; }

    std::vector<int32_t> generate_ids(const std::vector<int32_t>& prompt,
                                      int64_t max_new_tokens, double temperature, int64_t top_k,
                                      uint64_t seed) {
        InferenceModel model(trainer_.state().params);
        GenerationParams p;
        p.max_new_tokens = max_new_tokens;
        p.temperature = temperature;
        p.top_k = top_k;
        p.seed = seed;
        return generate(model, prompt, p).ids;
    }

  private:
    Trainer trainer_;
};

std::vector<int32_t> generate_from_file(const std::string& path,
                                        const std::vector<int32_t>& prompt,
                                        int64_t max_new_tokens, double temperature,
                                        int64_t top_k, uint64_t seed, bool quantized) {
    GenerationParams p;
    p.max_new_tokens = max_new_tokens;
    p.temperature = temperature;
    p.top_k = top_k;
    p.seed = seed;
    if (quantized) {
        QuantizedParams qp = QuantizedParams::load(path);
        return generate(InferenceModel(qp), prompt, p).ids;
    }
    TrainerState state = load_checkpoint(path);
    return generate(InferenceModel(state.params), prompt, p).ids;
}

} // namespace

PYBIND11_MODULE(_ttl, m) {
    m.doc() = "desk-scale LLM pre-training toolkit";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

    // ---- planner ----
    py::class_<ScalingConstants>(m, "ScalingConstants")
        .def(py::init<>())
        .def_readwrite("A", &ScalingConstants::A)
        .def_readwrite("B", &ScalingConstants::B)
        .def_readwrite("E", &ScalingConstants::E)
        .def_readwrite("alpha", &ScalingConstants::alpha)
        .def_readwrite("beta", &ScalingConstants::beta);
    m.def("predict_loss", &predict_loss, py::arg("n_params"), py::arg("n_tokens"),
          py::arg("constants") = ScalingConstants{},
          "Predicted language-modeling loss in nats");
    m.def("optimal_tokens", &optimal_tokens, py::arg("n_params"), py::arg("ratio") = 20.0);
    m.def(
        "epochs_required",
        [](double target, double unique) {
            EpochEstimate e = epochs_required(target, unique);
            return py::make_tuple(e.epochs, e.warning);
        },
        py::arg("target_tokens"), py::arg("unique_tokens"));
    m.def(
        "plan",
        [](double n_params, double unique_tokens, double ratio) {
            PlanReport r = make_plan(n_params, unique_tokens, ratio);
            py::dict d;
            d["n_params"] = r.n_params;
            d["optimal_tokens"] = r.optimal_tokens;
            d["predicted_loss"] = r.predicted_loss;
            d["epochs"] = r.epochs;
            d["epoch_warning"] = r.epoch_warning;
            d["estimated_flops"] = r.estimated_flops;
            return d;
        },
        py::arg("n_params"), py::arg("unique_tokens") = 0.0, py::arg("ratio") = 20.0);

    // ---- tokenizer ----
    py::class_<Tokenizer>(m, "Tokenizer")
        .def_static(
            "train",
            [](const std::string& corpus, int64_t vocab_size, int64_t min_pair_frequency) {
                Tokenizer::TrainOptions o;
                o.vocab_size = vocab_size;
                o.min_pair_frequency = min_pair_frequency;
                return Tokenizer::train(std::string_view(corpus), o);
            },
            py::arg("corpus"), py::arg("vocab_size") = 32000,
            py::arg("min_pair_frequency") = 2)
        .def_static("load", &Tokenizer::load, py::arg("path"))
        .def("save", &Tokenizer::save, py::arg("path"))
        .def("encode",
             [](const Tokenizer& t, const std::string& text) {
                 return t.encode(std::string_view(text));
             },
             py::arg("text"))
        .def("decode",
             [](const Tokenizer& t, const std::vector<int32_t>& ids, bool strip_specials) {
                 return py::bytes(t.decode(ids, strip_specials));
             },
             py::arg("ids"), py::arg("strip_specials") = true)
        .def("decode_text",
             [](const Tokenizer& t, const std::vector<int32_t>& ids) { return t.decode(ids); },
             py::arg("ids"))
        .def_property_readonly("vocab_size", &Tokenizer::vocab_size)
        .def_property_readonly("bos_id", &Tokenizer::bos_id)
        .def_property_readonly("eos_id", &Tokenizer::eos_id)
        .def_property_readonly("pad_id", &Tokenizer::pad_id)
        .def_property_readonly("unk_id", &Tokenizer::unk_id)
        .def_property_readonly("fingerprint", &Tokenizer::fingerprint);

    // ---- model ----
    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("hidden_size", &ModelConfig::hidden_size)
        .def_readwrite("intermediate_size", &ModelConfig::intermediate_size)
        .def_readwrite("context_length", &ModelConfig::context_length)
        .def_readwrite("n_heads", &ModelConfig::n_heads)
        .def_readwrite("n_kv_heads", &ModelConfig::n_kv_heads)
        .def_readwrite("n_layers", &ModelConfig::n_layers)
        .def_readwrite("vocab_size", &ModelConfig::vocab_size)
        .def_readwrite("rope_theta", &ModelConfig::rope_theta)
        .def_readwrite("norm_eps", &ModelConfig::norm_eps)
        .def_readwrite("tie_embeddings", &ModelConfig::tie_embeddings)
        .def_static("preset_160m", &ModelConfig::preset_160m)
        .def_static("preset_460m", &ModelConfig::preset_460m);
    m.def("param_count", &param_count, py::arg("config"));

    // ---- data ----
    py::class_<PackedDataset>(m, "PackedDataset")
        .def_static(
            "from_tokens",
            [](const std::vector<int32_t>& stream, int64_t sequence_length,
               uint64_t fingerprint) { return pack(stream, sequence_length, fingerprint); },
            py::arg("stream"), py::arg("sequence_length"), py::arg("fingerprint") = 0)
        .def_static("load", &PackedDataset::load, py::arg("path"))
        .def("save", &PackedDataset::save, py::arg("path"))
        .def_property_readonly("n_sequences", &PackedDataset::n_sequences)
        .def_property_readonly("total_tokens", &PackedDataset::total_tokens)
        .def_readonly("sequence_length", &PackedDataset::sequence_length);
    m.def(
        "split_eval",
        [](const PackedDataset& ds, double fraction, uint64_t seed) {
            auto [train, eval] = split_eval(ds, fraction, seed);
            return py::make_tuple(train, eval);
        },
        py::arg("dataset"), py::arg("fraction") = 0.01, py::arg("seed") = 0);
    m.def(
        "tokenize_corpus",
        [](const Tokenizer& tok, const std::vector<std::string>& documents) {
            return tokenize_corpus(tok, documents);
        },
        py::arg("tokenizer"), py::arg("documents"));

    // ---- trainer ----
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("tokens_per_batch", &TrainConfig::tokens_per_batch)
        .def_readwrite("total_steps", &TrainConfig::total_steps)
        .def_readwrite("grad_accum_steps", &TrainConfig::grad_accum_steps)
        .def_readwrite("peak_lr", &TrainConfig::peak_lr)
        .def_readwrite("min_lr", &TrainConfig::min_lr)
        .def_readwrite("adam_eps", &TrainConfig::adam_eps)
        .def_readwrite("adam_beta1", &TrainConfig::adam_beta1)
        .def_readwrite("adam_beta2", &TrainConfig::adam_beta2)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("warmup_steps", &TrainConfig::warmup_steps)
        .def_readwrite("grad_clip_norm", &TrainConfig::grad_clip_norm)
        .def_readwrite("checkpoint_interval", &TrainConfig::checkpoint_interval)
        .def_readwrite("eval_interval", &TrainConfig::eval_interval)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def("serialize", &TrainConfig::serialize)
        .def_static("parse", &TrainConfig::parse, py::arg("text"))
        .def_static("preset_160m", &TrainConfig::preset_160m)
        .def_static("preset_460m", &TrainConfig::preset_460m)
        .def_static("preset_sft", &TrainConfig::preset_sft);
    m.def("lr_at", &lr_at, py::arg("step"), py::arg("config"));

    py::class_<PyTrainer>(m, "Trainer")
        .def(py::init<const ModelConfig&, const TrainConfig&, const PackedDataset&,
                      const PackedDataset&, uint64_t>(),
             py::arg("model"), py::arg("config"), py::arg("train_data"), py::arg("eval_data"),
             py::arg("init_seed") = 7)
        .def(py::init<const std::string&, const PackedDataset&, const PackedDataset&>(),
             py::arg("checkpoint"), py::arg("train_data"), py::arg("eval_data"))
        .def("step", &PyTrainer::step)
        .def("evaluate", &PyTrainer::evaluate)
        .def("save", &PyTrainer::save, py::arg("path"))
        .def("generate", &PyTrainer::generate_ids, py::arg("prompt"),
             py::arg("max_new_tokens") = 64, py::arg("temperature") = 0.0,
             py::arg("top_k") = 0, py::arg("seed") = 0)
        .def_property_readonly("current_step", &PyTrainer::current_step)
        .def_property_readonly("tokens_processed", &PyTrainer::tokens_processed);

    // ---- quantization ----
    m.def(
        "quantize_roundtrip",
        [](const std::vector<float>& values, int64_t group_size) {
            QuantizedTensor q = quantize_tensor(
                values.data(), {static_cast<int64_t>(values.size())}, group_size);
            std::vector<float> out(values.size());
            q.dequantize(out.data());
            return out;
        },
        py::arg("values"), py::arg("group_size") = 128,
        "Quantize a vector to 4-bit groups and return the reconstruction");
    m.def("quantized_footprint_bytes", &quantized_footprint_bytes, py::arg("config"),
          py::arg("group_size") = 128);
    m.def(
        "quantize_checkpoint",
        [](const std::string& checkpoint, const std::string& out, int64_t group_size) {
            TrainerState state = load_checkpoint(checkpoint);
            QuantizedParams qp = quantize(state.params, group_size);
            qp.save(out);
            return qp.footprint_bytes();
        },
        py::arg("checkpoint"), py::arg("out"), py::arg("group_size") = 128);

    // ---- generation ----
    m.def("generate", &generate_from_file, py::arg("path"), py::arg("prompt"),
          py::arg("max_new_tokens") = 64, py::arg("temperature") = 0.0, py::arg("top_k") = 0,
          py::arg("seed") = 0, py::arg("quantized") = false,
          "Generate token ids from a checkpoint (.ttlc) or quantized model (.ttlq)");

    // ---- telemetry ----
    m.def("energy_kwh", &energy_kwh, py::arg("elapsed_s"), py::arg("avg_power_w"));
    m.def("emissions_kg", &emissions_kg, py::arg("energy_kwh"),
          py::arg("intensity_kg_per_kwh"));
    m.attr("DEFAULT_CARBON_INTENSITY") = kDefaultCarbonIntensity;
    m.attr("DEFAULT_CARBON_REGION") = kDefaultCarbonRegion;
}
