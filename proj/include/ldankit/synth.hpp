#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldankit/rng.hpp"
#include "ldankit/sh.hpp"

// Data generation: parametric Lambertian surfaces standing in for rendered
// faces, low-frequency lighting sampling, simulated noisy labels, and the
// three dataset splits (paired synthetic, pseudo-real with noisy labels,
// and the 19-condition eval bank).
namespace ldankit::synth {

enum class SurfaceKind { kSphere, kEllipsoidFace };

SurfaceKind surface_kind_from_string(const std::string& s);
std::string to_string(SurfaceKind k);

struct SurfacePatch {
  int height = 0, width = 0;
  std::vector<double> normals;  // H*W*3, zeros on masked pixels
  std::vector<uint8_t> mask;    // 1 where the surface is front-facing
  std::vector<float> albedo;    // H*W*3 in [0,1]
  uint64_t identity_seed = 0;
  std::array<double, 2> pose_jitter_deg{};  // sampled pitch / yaw
};

// Simulated label corruption standing in for the noise of an optimization-
// based estimator. Gaussian per dimension, occasional whole-record outliers,
// and a small constant bias.
struct NoiseModel {
  Eigen::Matrix<double, 18, 1> sigma = Eigen::Matrix<double, 18, 1>::Zero();
  double outlier_rate = 0.05;
  double outlier_scale = 5.0;
  Eigen::Matrix<double, 18, 1> bias = Eigen::Matrix<double, 18, 1>::Zero();
};

// Pseudo-real "camera": per-image gamma plus a fixed vignette, applied to
// the pseudo-real and eval splits only. This is what separates the real
// domain from the synthetic one at desk scale.
struct DomainShift {
  double gamma_min = 1.15;
  double gamma_max = 1.35;
  double vignette = 0.2;
};

struct LabeledImage {
  uint32_t record_index = 0;
  std::optional<uint32_t> pair_id;
  std::optional<uint16_t> condition_id;
  std::vector<float> image;  // C*H*W, C = 3
  std::optional<std::array<float, 18>> clean18;
  std::optional<std::array<float, 18>> noisy18;
};

struct DatasetConfig {
  uint64_t master_seed = 7;
  int resolution = 32;
  int n_synth_pairs = 2000;
  int n_real = 4000;
  int n_eval_conditions = 19;
  int n_eval_ids = 20;
  double pose_jitter_deg = 15.0;
  SurfaceKind surface_kind = SurfaceKind::kEllipsoidFace;
  double noise_sigma_scale = 0.3;  // x per-dim std of the split's clean labels
  double noise_outlier_rate = 0.05;
  double noise_outlier_scale = 5.0;
  double noise_bias_scale = 0.1;  // x sigma
  DomainShift real_domain;
  uint64_t bank_seed = 2024;
};

nlohmann::json dataset_config_to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

// Deterministic in (kind, resolution, identity_seed, jitter bound): the pose
// jitter and the procedural albedo both derive from identity_seed.
SurfacePatch make_surface(SurfaceKind kind, int resolution, uint64_t identity_seed,
                          double pose_jitter_bound_deg);

// Ambient plus one or two directional sources converted to order-2 SH via
// the clamped-cosine kernel, scaled so the brightest canonical-sphere pixel
// shades to 0.95. Ambient-only draws (no non-DC energy) are rejected and
// resampled.
shm::SHLight sample_lighting(Rng& rng);

// The k-th of the 19 fixed eval lighting conditions (0-based). Conditions
// are drawn from bank_seed and greedily accepted at pairwise projected
// distance >= 0.05 so no two conditions collide.
shm::SHLight condition_bank(int k, uint64_t bank_seed, int n_conditions);
inline constexpr double kBankMinSeparation = 0.05;

// albedo .* clamped shading, in [0,1], masked pixels zero; C x H x W floats.
std::vector<float> render_patch(const SurfacePatch& patch, const shm::SHLight& light);

// Two surfaces, one lighting, identical clean labels.
std::pair<LabeledImage, LabeledImage> render_pair(const shm::SHLight& light,
                                                  uint64_t seed_a, uint64_t seed_b,
                                                  SurfaceKind kind, int resolution,
                                                  double pose_jitter_bound_deg);

std::array<float, 18> corrupt_label(const std::array<float, 18>& clean,
                                    const NoiseModel& model, Rng& rng);

void apply_domain_shift(std::vector<float>& image, int height, int width,
                        const DomainShift& shift, Rng& rng);

// ---- binary record format ----
// Little-endian, per record: u32 record index, u32 pair id (0xFFFFFFFF when
// absent), u16 condition id (0xFFFF when absent), u8 flags (bit0 clean18
// present, bit1 noisy18 present), f32 image C*H*W, then clean18 / noisy18 as
// f32 x 18 per the flags.
void write_records(const std::filesystem::path& path,
                   const std::vector<LabeledImage>& records, int channels,
                   int height, int width);
std::vector<LabeledImage> read_records(const std::filesystem::path& path,
                                       int channels, int height, int width);

struct DatasetPaths {
  std::filesystem::path root;
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path subspace() const { return root / "subspace.json"; }
  std::filesystem::path split(const std::string& name) const {
    return root / name / "records.bin";
  }
};

struct Manifest {
  int format_version = 1;
  DatasetConfig config;
  NoiseModel noise;  // resolved sigma/bias vectors
  int channels = 3;
  std::map<std::string, int> counts;
};

// Writes manifest.json, subspace.json and one records.bin per split
// (synth_pairs, pseudo_real_train, eval). Pure function of the config.
void build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

Manifest load_manifest(const std::filesystem::path& dataset_dir);

}  // namespace ldankit::synth
