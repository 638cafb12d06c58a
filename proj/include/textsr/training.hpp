#pragma once

#include "textsr/degrade.hpp"
#include "textsr/metrics.hpp"
#include "textsr/srnet.hpp"
#include "textsr/textgen.hpp"

namespace textsr {

struct TrainingDiverged : std::runtime_error {
    explicit TrainingDiverged(const std::string& m) : std::runtime_error(m) {}
};

struct TrainConfig {
    std::string stage = "train-sr";  // pretrain-prior | train-sr

    // data
    std::string train_manifest;
    std::string val_manifest;
    std::string resume;

    // model
    std::string profile = "default";
    int scale = 2;
    std::vector<int> prior_scales{32, 64};
    std::string charset_utf8;  // empty = default charset
    std::string charset_file;
    std::string font_spec = "builtin:4";

    // optimization (paper defaults: lr 1e-4, prior finetune 1e-6, Adam 0.9/0.999)
    int batch = 0;  // 0 = stage default (16 for pretraining, 2 for SR)
    int64_t max_steps = 2000;
    uint64_t seed = 0;
    double lr_main = 1e-4;
    double lr_prior_finetune = 1e-6;
    double beta1 = 0.9, beta2 = 0.999;
    double lambda_recog = 1.0;
    LossWeights weights;  // lambda_per 0.05 (paper); other weights are config guesses

    int val_every = 200;
    int ckpt_every = 2000;
    int log_every = 25;
    int plateau_patience = 3;
    double plateau_eps = 0.01;

    bool online_degrade = false;  // regenerate LR from HR every step
    DegradeConfig degrade;
    TextgenConfig textgen;  // pretraining mask sampling

    // pretraining recognizer
    std::string recognizer_ckpt;
    double recog_acc_target = 0.99;
    int64_t recog_max_steps = 4000;

    double divergence_factor = 10.0;
    int divergence_window = 100;

    // optional early stop once all thresholds hold on validation (0 = disabled)
    bool early_stop = false;
    double stop_psnr = 0.0;
    double stop_str = 0.0;
    bool stop_full_accuracy = false;

    std::string out_dir = "runs/default";

    Charset resolve_charset() const;
    static TrainConfig from_file(const std::string& path);
    void apply_kv(const std::string& key, const std::string& value);
};

// pure function of the validation-loss history: consecutive validations whose
// best-so-far improvement stays under eps trigger one halving per window
double lr_from_history(double initial_lr, const std::vector<double>& history, int patience,
                       double eps);

// ---- recognizer pretraining (provided sub-command of the prior stage) ----

Recognizer train_recognizer(const Charset& charset, const FontSet& fonts,
                            const std::string& profile, uint64_t seed, double acc_target,
                            int64_t max_steps, const TextgenConfig& tg);
void save_recognizer(const std::string& path, Recognizer& rec, const Charset& charset,
                     const std::string& profile);
Recognizer load_recognizer(const std::string& path, const Charset& charset);

// ---- stages ----

// returns the final checkpoint path
std::string pretrain_prior(const TrainConfig& cfg);
std::string train_sr(const TrainConfig& cfg, const std::string& prior_ckpt);

// checkpoint loading
struct PriorCheckpointData {
    Charset charset = Charset::default_charset();
    std::string profile_name;
    std::shared_ptr<Generator> gen;
    int64_t step = 0;
};
PriorCheckpointData load_prior_generator(const std::string& path);
SrSystem load_sr_system(const std::string& path);

// ---- validation ----

struct ValidationReport {
    MetricsReport metrics;
    double l_rec = 0;  // pixel + perceptual, plateau signal
    double mean_structure_loss = 0;
};
ValidationReport validate_system(const SrSystem& sys, const DatasetManifest& manifest,
                                 const std::string& root, bool oracle_sr = false);

// ---- dataset synthesis ----

struct SynthConfig {
    int count = 100;
    int scale = 2;  // 0 = HR only
    uint64_t seed = 0;
    std::string out_dir;
    std::vector<std::string> corpus;  // empty + textgen.random_text => random strings
    TextgenConfig textgen;
    DegradeConfig degrade;
};
DatasetManifest synth_dataset(const SynthConfig& cfg, const Charset& charset,
                              const FontSet& fonts);

std::vector<std::string> load_corpus(const std::string& path);

}  // namespace textsr
