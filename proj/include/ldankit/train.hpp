#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldankit/checkpoint.hpp"
#include "ldankit/nn.hpp"
#include "ldankit/optim.hpp"
#include "ldankit/sh.hpp"
#include "ldankit/synth.hpp"

// Training procedures: paired synthetic pretraining, the adversarial
// label-denoising loop (critic epochs alternating with feature-net epochs),
// the direct noisy-label baseline, the two joint-training model variants,
// the two ablations, and inference.
namespace ldankit::train {

enum class Variant { kLdan, kReal, kModelB, kModelC, kNoGan, kNoRegression };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct ArchConfig {
  std::vector<int> stage_channels = {4, 8, 16};
  int blocks_per_stage = 1;
  int feature_dim = 128;
};

struct TrainConfig {
  Variant variant = Variant::kLdan;
  double mu = 50.0;
  double nu = 50.0;
  double lambda = 0.5;
  int critic_epochs = 5;
  int featnet_epochs = 2;
  int outer_iters = 50;
  int batch_size = 64;
  double clip_c = 0.01;
  int synth_epochs = 8;
  int real_epochs = 40;
  double rmsprop_lr = 5e-5;
  double rmsprop_rho = 0.9;
  double rmsprop_eps = 1e-8;
  double adadelta_rho = 0.95;
  double adadelta_eps = 1e-6;
  uint64_t seed = 1;
  int threads = 1;
  bool reference_mode = false;    // single-threaded, wall times logged as 0
  bool use_clean_labels = false;  // diagnostic ceiling runs only
  ArchConfig arch;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

std::vector<nn::LayerSpec> feature_net_specs(const ArchConfig& arch);
std::vector<nn::LayerSpec> lighting_net_specs(int feature_dim);
std::vector<nn::LayerSpec> critic_net_specs(int feature_dim);

// One dataset split flattened for training.
struct ImageBank {
  int n = 0, channels = 3, height = 0, width = 0;
  std::vector<float> images;  // n * c * h * w
  std::vector<std::array<float, 18>> clean, noisy;  // empty when absent
  std::vector<int> condition;                       // -1 when absent
  std::vector<int> pair;                            // -1 when absent
  std::vector<int> per_sample_shape() const { return {channels, height, width}; }
};

ImageBank bank_from_records(const std::vector<synth::LabeledImage>& records,
                            int channels, int height, int width);

// Loaded dataset with per-split access counters (the REAL baseline must be
// able to prove it never touched the synthetic split).
struct LoadedDataset {
  synth::Manifest manifest;
  shm::Subspace subspace;
  ImageBank synth_pairs_data, pseudo_real_data, eval_data;
  mutable uint64_t synth_accesses = 0, real_accesses = 0, eval_accesses = 0;

  const ImageBank& synth_pairs() const {
    ++synth_accesses;
    return synth_pairs_data;
  }
  const ImageBank& pseudo_real() const {
    ++real_accesses;
    return pseudo_real_data;
  }
  const ImageBank& eval() const {
    ++eval_accesses;
    return eval_data;
  }
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

struct ModelBundle {
  nn::Net<float> feat_synth;  // S (empty for the REAL baseline)
  nn::Net<float> feat_real;   // R
  nn::Net<float> lighting;    // L
  nn::Net<float> critic;      // D (empty when no critic was trained)
  shm::Subspace subspace;
  TrainConfig config;
  std::vector<nlohmann::json> log;  // one JSON object per line
};

// -- individual phases (exposed for tests and the model variants) --

// Eq.-style paired synthetic loss: nu * regression on both pair halves plus
// lambda * feature-match between the halves; Adadelta on S and L.
void train_synthetic(nn::Net<float>& feat_synth, nn::Net<float>& lighting,
                     const ImageBank& pairs, const TrainConfig& cfg, Rng& rng,
                     std::vector<nlohmann::json>* log);

// feature bank (n x feature_dim), inference mode
nn::Tensor<float> precompute_features(nn::Net<float>& net, const ImageBank& bank,
                                      int batch_size, int threads);
nn::Tensor<float> precompute_features_rows(nn::Net<float>& net, const ImageBank& bank,
                                           const std::vector<int>& rows,
                                           int batch_size, int threads);

// k epochs of mean D(f_synth) - mean D(f_real) by RMSProp, weights clipped
// to [-c, c] after every update. Returns the last epoch's mean objective.
double train_critic_epochs(nn::Net<float>& critic, nn::RmspropState<float>& state,
                           const nn::Tensor<float>& f_synth,
                           const nn::Tensor<float>& f_real, int k,
                           const TrainConfig& cfg, Rng& rng,
                           std::vector<double>* epoch_objectives = nullptr);

struct FeatnetEpochStats {
  double generator_objective = 0;  // -mean D(R(r)), when the GAN term is on
  double regression = 0;           // mu-weighted real regression term
};

// k epochs minimizing -mean D(R(r)) + mu * mse(L(R(r)), noisy labels);
// only R steps, D and L stay frozen.
std::vector<FeatnetEpochStats> train_featnet_epochs(
    nn::Net<float>& feat_real, nn::Net<float>& critic, nn::Net<float>& lighting,
    const ImageBank& real, int k, double mu, bool use_gan,
    nn::AdadeltaState<float>& state, const TrainConfig& cfg, Rng& rng);

// -- full procedures --
ModelBundle train_ldan(const LoadedDataset& ds, const TrainConfig& cfg);
ModelBundle train_real_baseline(const LoadedDataset& ds, const TrainConfig& cfg);
ModelBundle train_model_b(const LoadedDataset& ds, const TrainConfig& cfg);
ModelBundle train_model_c(const LoadedDataset& ds, const TrainConfig& cfg);
ModelBundle train_variant(const LoadedDataset& ds, const TrainConfig& cfg);

// L(R(image)) in inference mode; image is C*H*W floats.
shm::Vec18 predict(ModelBundle& bundle, const float* image, int channels, int height,
                   int width, int threads = 1);
// batched prediction over a bank
std::vector<shm::Vec18> predict_bank(ModelBundle& bundle, const ImageBank& bank,
                                     int batch_size, int threads);

// run directory: config echo, checkpoints, loss log
void save_run(ModelBundle& bundle, const std::filesystem::path& dir, bool force);
ModelBundle load_run(const std::filesystem::path& dir);

}  // namespace ldankit::train
