#include "ldankit/synth.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "ldankit/errors.hpp"

namespace ldankit::synth {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDcBasis = 0.28209479177387814;  // Y00
constexpr double kLightTargetPeak = 0.95;

Eigen::Matrix3d pose_rotation(double pitch_deg, double yaw_deg) {
  return (Eigen::AngleAxisd(yaw_deg * kPi / 180.0, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(pitch_deg * kPi / 180.0, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

// canonical frontal sphere grid used to normalize lighting energy
const shm::BasisMatrix& light_norm_basis() {
  static const shm::BasisMatrix basis = [] {
    std::vector<shm::Vec3> normals;
    const int res = 32;
    for (int iy = 0; iy < res; ++iy)
      for (int ix = 0; ix < res; ++ix) {
        const double u = (ix + 0.5) / res * 2 - 1, v = (iy + 0.5) / res * 2 - 1;
        const double r2 = u * u + v * v;
        if (r2 < 1.0) normals.emplace_back(u, v, std::sqrt(1 - r2));
      }
    return shm::build_basis_matrix(normals);
  }();
  return basis;
}

}  // namespace

SurfaceKind surface_kind_from_string(const std::string& s) {
  if (s == "sphere") return SurfaceKind::kSphere;
  if (s == "ellipsoid_face") return SurfaceKind::kEllipsoidFace;
  throw invalid_input_error("unknown surface kind: " + s);
}

std::string to_string(SurfaceKind k) {
  return k == SurfaceKind::kSphere ? "sphere" : "ellipsoid_face";
}

nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
  return {
      {"master_seed", c.master_seed},
      {"resolution", c.resolution},
      {"n_synth_pairs", c.n_synth_pairs},
      {"n_real", c.n_real},
      {"n_eval_conditions", c.n_eval_conditions},
      {"n_eval_ids", c.n_eval_ids},
      {"pose_jitter_deg", c.pose_jitter_deg},
      {"surface_kind", to_string(c.surface_kind)},
      {"noise",
       {{"sigma_scale", c.noise_sigma_scale},
        {"outlier_rate", c.noise_outlier_rate},
        {"outlier_scale", c.noise_outlier_scale},
        {"bias_scale", c.noise_bias_scale}}},
      {"real_domain",
       {{"gamma_min", c.real_domain.gamma_min},
        {"gamma_max", c.real_domain.gamma_max},
        {"vignette", c.real_domain.vignette}}},
      {"bank_seed", c.bank_seed},
  };
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  if (j.contains("master_seed")) c.master_seed = j["master_seed"].get<uint64_t>();
  if (j.contains("resolution")) c.resolution = j["resolution"].get<int>();
  if (j.contains("n_synth_pairs")) c.n_synth_pairs = j["n_synth_pairs"].get<int>();
  if (j.contains("n_real")) c.n_real = j["n_real"].get<int>();
  if (j.contains("n_eval_conditions")) c.n_eval_conditions = j["n_eval_conditions"].get<int>();
  if (j.contains("n_eval_ids")) c.n_eval_ids = j["n_eval_ids"].get<int>();
  if (j.contains("pose_jitter_deg")) c.pose_jitter_deg = j["pose_jitter_deg"].get<double>();
  if (j.contains("surface_kind"))
    c.surface_kind = surface_kind_from_string(j["surface_kind"].get<std::string>());
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    if (n.contains("sigma_scale")) c.noise_sigma_scale = n["sigma_scale"].get<double>();
    if (n.contains("outlier_rate")) c.noise_outlier_rate = n["outlier_rate"].get<double>();
    if (n.contains("outlier_scale")) c.noise_outlier_scale = n["outlier_scale"].get<double>();
    if (n.contains("bias_scale")) c.noise_bias_scale = n["bias_scale"].get<double>();
  }
  if (j.contains("real_domain")) {
    const auto& d = j["real_domain"];
    if (d.contains("gamma_min")) c.real_domain.gamma_min = d["gamma_min"].get<double>();
    if (d.contains("gamma_max")) c.real_domain.gamma_max = d["gamma_max"].get<double>();
    if (d.contains("vignette")) c.real_domain.vignette = d["vignette"].get<double>();
  }
  if (j.contains("bank_seed")) c.bank_seed = j["bank_seed"].get<uint64_t>();
  return c;
}

SurfacePatch make_surface(SurfaceKind kind, int resolution, uint64_t identity_seed,
                          double pose_jitter_bound_deg) {
  if (resolution < 16) throw invalid_input_error("make_surface: resolution below 16");
  Rng rng(derive_seed(identity_seed, "surface"));

  SurfacePatch patch;
  patch.height = patch.width = resolution;
  patch.identity_seed = identity_seed;
  patch.normals.assign(static_cast<size_t>(resolution) * resolution * 3, 0.0);
  patch.mask.assign(static_cast<size_t>(resolution) * resolution, 0);
  patch.albedo.assign(static_cast<size_t>(resolution) * resolution * 3, 0.0f);

  double ax = 1.0, ay = 1.0, az = 1.0;
  if (kind == SurfaceKind::kEllipsoidFace) {
    ax = rng.uniform(0.80, 1.00);
    ay = rng.uniform(1.00, 1.25);
    az = rng.uniform(0.55, 0.90);
  }
  patch.pose_jitter_deg = {rng.uniform(-pose_jitter_bound_deg, pose_jitter_bound_deg),
                           rng.uniform(-pose_jitter_bound_deg, pose_jitter_bound_deg)};
  const Eigen::Matrix3d rot =
      kind == SurfaceKind::kSphere
          ? Eigen::Matrix3d::Identity()  // a rotated sphere is the same sphere
          : pose_rotation(patch.pose_jitter_deg[0], patch.pose_jitter_deg[1]);

  // rotated quadric p' Q p = 1 with Q = M D M'
  const Eigen::Vector3d inv_sq(1.0 / (ax * ax), 1.0 / (ay * ay), 1.0 / (az * az));
  const Eigen::Matrix3d quad = rot * inv_sq.asDiagonal() * rot.transpose();

  // procedural albedo: warm base color + low-frequency cosine pattern in
  // object-space coordinates
  const double base_r = rng.uniform(0.45, 0.85);
  const double base_g = base_r * rng.uniform(0.78, 0.98);
  const double base_b = base_g * rng.uniform(0.70, 0.97);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::array<Wave, 3> waves;
  for (auto& w : waves)
    w = {rng.uniform(0.5, 2.5), rng.uniform(0.5, 2.5), rng.uniform(0.0, 2 * kPi),
         rng.uniform(0.05, 0.16)};

  const double window = 1.05 * std::max(ax, ay);
  for (int iy = 0; iy < resolution; ++iy) {
    for (int ix = 0; ix < resolution; ++ix) {
      const double u = ((ix + 0.5) / resolution * 2 - 1) * window;
      const double v = ((iy + 0.5) / resolution * 2 - 1) * window;
      // ray (u, v, t) into the quadric; front surface = larger root
      const double a = quad(2, 2);
      const double b = 2.0 * (quad(0, 2) * u + quad(1, 2) * v);
      const double cq = quad(0, 0) * u * u + 2.0 * quad(0, 1) * u * v +
                        quad(1, 1) * v * v - 1.0;
      const double disc = b * b - 4 * a * cq;
      if (disc <= 0) continue;
      const double t = (-b + std::sqrt(disc)) / (2 * a);
      const Eigen::Vector3d p(u, v, t);
      Eigen::Vector3d n = quad * p;
      const double nn = n.norm();
      if (nn < 1e-12) continue;
      n /= nn;
      if (n.z() <= 1e-4) continue;

      const size_t px = static_cast<size_t>(iy) * resolution + ix;
      patch.mask[px] = 1;
      patch.normals[3 * px + 0] = n.x();
      patch.normals[3 * px + 1] = n.y();
      patch.normals[3 * px + 2] = n.z();

      const Eigen::Vector3d q = rot.transpose() * p;  // object coords
      const double s = q.x() / ax, tt = q.y() / ay;
      double pattern = 0.0;
      for (const auto& w : waves)
        pattern += w.amp * std::cos(2 * kPi * (w.fx * s + w.fy * tt) + w.phase);
      const double shade = 1.0 + pattern;
      patch.albedo[3 * px + 0] = static_cast<float>(std::clamp(base_r * shade, 0.05, 1.0));
      patch.albedo[3 * px + 1] = static_cast<float>(std::clamp(base_g * shade, 0.05, 1.0));
      patch.albedo[3 * px + 2] = static_cast<float>(std::clamp(base_b * shade, 0.05, 1.0));
    }
  }
  return patch;
}

shm::SHLight sample_lighting(Rng& rng) {
  const shm::Vec9 kernel = shm::lambert_kernel();
  for (int attempt = 0; attempt < 100; ++attempt) {
    shm::SHLight light;
    const double tint_g = rng.uniform(0.75, 1.0);
    const double tint_b = rng.uniform(0.65, 1.0);
    const Eigen::Vector3d tint(1.0, tint_g, tint_b);

    const double ambient = rng.uniform(0.15, 0.45);
    for (int c = 0; c < 3; ++c)
      light.per_channel[c].coeffs(0) += ambient * tint(c) / kDcBasis;

    const double r = rng.uniform();
    const int n_dir = r < 0.05 ? 0 : (r < 0.60 ? 1 : 2);
    for (int k = 0; k < n_dir; ++k) {
      const double z = rng.uniform(0.2, 1.0);
      const double phi = rng.uniform(0.0, 2 * kPi);
      const double rr = std::sqrt(std::max(0.0, 1 - z * z));
      const shm::Vec3 dir(rr * std::cos(phi), rr * std::sin(phi), z);
      const shm::Vec9 dir_sh = shm::sh_basis(dir).coeffs;
      const double strength = rng.uniform(0.5, 1.2);
      for (int c = 0; c < 3; ++c)
        light.per_channel[c].coeffs +=
            strength * tint(c) * kernel.cwiseProduct(dir_sh);
    }

    // reject draws without non-DC energy (ambient-only)
    double non_dc = 0.0;
    for (int c = 0; c < 3; ++c) non_dc += light.per_channel[c].coeffs.tail(8).norm();
    if (non_dc <= 1e-9) continue;

    // normalize so the brightest canonical-sphere pixel shades to the target
    const auto& basis = light_norm_basis();
    double peak = 0.0;
    for (int c = 0; c < 3; ++c) {
      const Eigen::VectorXd shading = basis.rows * light.per_channel[c].coeffs;
      peak = std::max(peak, shading.maxCoeff());
    }
    if (peak <= 1e-9) continue;
    const double scale = kLightTargetPeak / peak;
    for (int c = 0; c < 3; ++c) light.per_channel[c].coeffs *= scale;
    return light;
  }
  throw numerical_abort_error("sample_lighting: rejection loop failed");
}

shm::SHLight condition_bank(int k, uint64_t bank_seed, int n_conditions) {
  if (k < 0 || k >= n_conditions)
    throw invalid_input_error("condition_bank: index out of range");
  // deterministic greedy construction; conditions closer than the minimum
  // projected distance to an accepted one are skipped
  const auto& sub = shm::canonical_subspace();
  Rng rng(derive_seed(bank_seed, "condition-bank"));
  std::vector<shm::SHLight> bank;
  std::vector<shm::Vec18> coords;
  int guard = 0;
  while (static_cast<int>(bank.size()) < n_conditions && ++guard < 10000) {
    shm::SHLight cand = sample_lighting(rng);
    const shm::Vec18 pc = shm::project(cand.per_channel, sub);
    bool ok = true;
    for (const auto& c : coords)
      if ((c - pc).norm() < kBankMinSeparation) ok = false;
    if (!ok) continue;
    cand.projected = pc;
    bank.push_back(cand);
    coords.push_back(pc);
  }
  if (static_cast<int>(bank.size()) < n_conditions)
    throw numerical_abort_error("condition_bank: could not separate conditions");
  return bank[k];
}

std::vector<float> render_patch(const SurfacePatch& patch, const shm::SHLight& light) {
  const int n = patch.height * patch.width;
  std::vector<float> image(static_cast<size_t>(3) * n, 0.0f);
  for (int i = 0; i < n; ++i) {
    if (!patch.mask[i]) continue;
    const shm::Vec3 normal(patch.normals[3 * i], patch.normals[3 * i + 1],
                           patch.normals[3 * i + 2]);
    const shm::Vec9 b = shm::sh_basis(normal).coeffs;
    for (int c = 0; c < 3; ++c) {
      const double shading = b.dot(light.per_channel[c].coeffs);
      const double v = patch.albedo[3 * i + c] * std::max(0.0, shading);
      image[static_cast<size_t>(c) * n + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return image;
}

std::pair<LabeledImage, LabeledImage> render_pair(const shm::SHLight& light,
                                                  uint64_t seed_a, uint64_t seed_b,
                                                  SurfaceKind kind, int resolution,
                                                  double pose_jitter_bound_deg) {
  if (seed_a == seed_b)
    throw invalid_input_error("render_pair: identity seeds must differ");
  const shm::Vec18 label =
      light.projected ? *light.projected
                      : shm::project(light.per_channel, shm::canonical_subspace());
  std::array<float, 18> clean{};
  for (int i = 0; i < 18; ++i) clean[i] = static_cast<float>(label(i));

  LabeledImage a, b;
  a.image = render_patch(make_surface(kind, resolution, seed_a, pose_jitter_bound_deg), light);
  b.image = render_patch(make_surface(kind, resolution, seed_b, pose_jitter_bound_deg), light);
  a.clean18 = clean;
  b.clean18 = clean;
  return {std::move(a), std::move(b)};
}

std::array<float, 18> corrupt_label(const std::array<float, 18>& clean,
                                    const NoiseModel& model, Rng& rng) {
  const bool outlier = rng.bernoulli(model.outlier_rate);
  std::array<float, 18> noisy{};
  for (int i = 0; i < 18; ++i) {
    double g = rng.normal() * model.sigma(i);
    if (outlier) g *= model.outlier_scale;
    noisy[i] = static_cast<float>(clean[i] + model.bias(i) + g);
  }
  return noisy;
}

void apply_domain_shift(std::vector<float>& image, int height, int width,
                        const DomainShift& shift, Rng& rng) {
  const double gamma = rng.uniform(shift.gamma_min, shift.gamma_max);
  const int n = height * width;
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  for (int c = 0; c < 3; ++c) {
    for (int iy = 0; iy < height; ++iy) {
      for (int ix = 0; ix < width; ++ix) {
        const double dx = (ix - cx) / (0.5 * width), dy = (iy - cy) / (0.5 * height);
        const double r2 = 0.5 * (dx * dx + dy * dy);  // 1 at the corners
        const double vig = 1.0 - shift.vignette * r2;
        float& v = image[static_cast<size_t>(c) * n + iy * width + ix];
        v = static_cast<float>(
            std::clamp(std::pow(static_cast<double>(v), gamma) * vig, 0.0, 1.0));
      }
    }
  }
}

namespace {

template <class T>
void put(std::ofstream& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void write_records(const std::filesystem::path& path,
                   const std::vector<LabeledImage>& records, int channels, int height,
                   int width) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw missing_input_error("write_records: cannot write " + path.string());
  const size_t pixels = static_cast<size_t>(channels) * height * width;
  for (const auto& r : records) {
    if (r.image.size() != pixels)
      throw invalid_input_error("write_records: image size mismatch");
    put<uint32_t>(out, r.record_index);
    put<uint32_t>(out, r.pair_id.value_or(0xFFFFFFFFu));
    put<uint16_t>(out, r.condition_id.value_or(0xFFFFu));
    const uint8_t flags = (r.clean18 ? 1 : 0) | (r.noisy18 ? 2 : 0);
    put<uint8_t>(out, flags);
    out.write(reinterpret_cast<const char*>(r.image.data()),
              static_cast<std::streamsize>(pixels * sizeof(float)));
    if (r.clean18)
      out.write(reinterpret_cast<const char*>(r.clean18->data()), 18 * sizeof(float));
    if (r.noisy18)
      out.write(reinterpret_cast<const char*>(r.noisy18->data()), 18 * sizeof(float));
  }
}

std::vector<LabeledImage> read_records(const std::filesystem::path& path, int channels,
                                       int height, int width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw missing_input_error("read_records: cannot read " + path.string());
  const size_t pixels = static_cast<size_t>(channels) * height * width;
  std::vector<LabeledImage> records;
  while (true) {
    LabeledImage r;
    r.record_index = get<uint32_t>(in);
    if (!in) break;
    const uint32_t pair = get<uint32_t>(in);
    if (pair != 0xFFFFFFFFu) r.pair_id = pair;
    const uint16_t cond = get<uint16_t>(in);
    if (cond != 0xFFFFu) r.condition_id = cond;
    const uint8_t flags = get<uint8_t>(in);
    r.image.resize(pixels);
    in.read(reinterpret_cast<char*>(r.image.data()),
            static_cast<std::streamsize>(pixels * sizeof(float)));
    if (flags & 1) {
      std::array<float, 18> v{};
      in.read(reinterpret_cast<char*>(v.data()), 18 * sizeof(float));
      r.clean18 = v;
    }
    if (flags & 2) {
      std::array<float, 18> v{};
      in.read(reinterpret_cast<char*>(v.data()), 18 * sizeof(float));
      r.noisy18 = v;
    }
    if (!in) throw invalid_input_error("read_records: truncated record");
    records.push_back(std::move(r));
  }
  return records;
}

void build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir) {
  if (config.n_synth_pairs < 1 || config.n_real < 1 || config.n_eval_conditions < 1 ||
      config.n_eval_ids < 1 || config.resolution < 16)
    throw invalid_input_error("build_dataset: invalid config");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir))
    throw missing_input_error("build_dataset: cannot create " + out_dir.string());
  DatasetPaths paths{out_dir};

  const auto& sub = shm::canonical_subspace();
  shm::save_subspace(sub, paths.subspace());
  const uint64_t master = config.master_seed;

  // synthetic pairs
  std::vector<LabeledImage> synth_records;
  synth_records.reserve(2 * config.n_synth_pairs);
  for (int p = 0; p < config.n_synth_pairs; ++p) {
    Rng lrng(derive_seed(master, "synth-light", p));
    shm::SHLight light = sample_lighting(lrng);
    light.projected = shm::project(light.per_channel, sub);
    auto [a, b] = render_pair(light, derive_seed(master, "synth-id-a", p),
                              derive_seed(master, "synth-id-b", p), config.surface_kind,
                              config.resolution, config.pose_jitter_deg);
    a.record_index = static_cast<uint32_t>(2 * p);
    b.record_index = static_cast<uint32_t>(2 * p + 1);
    a.pair_id = b.pair_id = static_cast<uint32_t>(p);
    synth_records.push_back(std::move(a));
    synth_records.push_back(std::move(b));
  }
  write_records(paths.split("synth_pairs"), synth_records, 3, config.resolution,
                config.resolution);

  // pseudo-real split: sample lights first so the noise scale can be derived
  // from the clean-label spread
  std::vector<shm::SHLight> real_lights(config.n_real);
  std::vector<std::array<float, 18>> real_clean(config.n_real);
  Eigen::Matrix<double, 18, 1> mean = Eigen::Matrix<double, 18, 1>::Zero();
  Eigen::Matrix<double, 18, 1> sq = Eigen::Matrix<double, 18, 1>::Zero();
  for (int i = 0; i < config.n_real; ++i) {
    Rng lrng(derive_seed(master, "real-light", i));
    real_lights[i] = sample_lighting(lrng);
    const shm::Vec18 c = shm::project(real_lights[i].per_channel, sub);
    real_lights[i].projected = c;
    for (int d = 0; d < 18; ++d) {
      real_clean[i][d] = static_cast<float>(c(d));
      mean(d) += c(d);
      sq(d) += c(d) * c(d);
    }
  }
  mean /= config.n_real;
  NoiseModel noise;
  for (int d = 0; d < 18; ++d) {
    const double var = std::max(0.0, sq(d) / config.n_real - mean(d) * mean(d));
    noise.sigma(d) = config.noise_sigma_scale * std::sqrt(var);
    noise.bias(d) = config.noise_bias_scale * noise.sigma(d);
  }
  noise.outlier_rate = config.noise_outlier_rate;
  noise.outlier_scale = config.noise_outlier_scale;

  std::vector<LabeledImage> real_records;
  real_records.reserve(config.n_real);
  for (int i = 0; i < config.n_real; ++i) {
    LabeledImage r;
    r.record_index = static_cast<uint32_t>(i);
    const auto patch = make_surface(config.surface_kind, config.resolution,
                                    derive_seed(master, "real-id", i),
                                    config.pose_jitter_deg);
    r.image = render_patch(patch, real_lights[i]);
    Rng drng(derive_seed(master, "real-domain", i));
    apply_domain_shift(r.image, config.resolution, config.resolution,
                       config.real_domain, drng);
    r.clean18 = real_clean[i];  // diagnostics only; training uses noisy18
    Rng nrng(derive_seed(master, "real-noise", i));
    r.noisy18 = corrupt_label(real_clean[i], noise, nrng);
    real_records.push_back(std::move(r));
  }
  write_records(paths.split("pseudo_real_train"), real_records, 3, config.resolution,
                config.resolution);

  // eval split: 19 fixed conditions x identities, labels withheld
  std::vector<LabeledImage> eval_records;
  eval_records.reserve(static_cast<size_t>(config.n_eval_conditions) * config.n_eval_ids);
  std::vector<SurfacePatch> eval_surfaces;
  for (int j = 0; j < config.n_eval_ids; ++j)
    eval_surfaces.push_back(make_surface(config.surface_kind, config.resolution,
                                         derive_seed(master, "eval-id", j),
                                         config.pose_jitter_deg));
  for (int c = 0; c < config.n_eval_conditions; ++c) {
    const shm::SHLight light = condition_bank(c, config.bank_seed, config.n_eval_conditions);
    for (int j = 0; j < config.n_eval_ids; ++j) {
      LabeledImage r;
      const int idx = c * config.n_eval_ids + j;
      r.record_index = static_cast<uint32_t>(idx);
      r.condition_id = static_cast<uint16_t>(c);
      r.image = render_patch(eval_surfaces[j], light);
      Rng drng(derive_seed(master, "eval-domain", idx));
      apply_domain_shift(r.image, config.resolution, config.resolution,
                         config.real_domain, drng);
      eval_records.push_back(std::move(r));
    }
  }
  write_records(paths.split("eval"), eval_records, 3, config.resolution,
                config.resolution);

  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["config"] = dataset_config_to_json(config);
  manifest["channels"] = 3;
  manifest["subspace_path"] = "subspace.json";
  manifest["counts"] = {{"synth_pairs", synth_records.size()},
                        {"pseudo_real_train", real_records.size()},
                        {"eval", eval_records.size()}};
  auto sig = nlohmann::json::array(), bias = nlohmann::json::array();
  for (int d = 0; d < 18; ++d) {
    sig.push_back(noise.sigma(d));
    bias.push_back(noise.bias(d));
  }
  manifest["noise_sigma"] = sig;
  manifest["noise_bias"] = bias;
  manifest["splits"] = {{"synth_pairs", "synth_pairs/records.bin"},
                        {"pseudo_real_train", "pseudo_real_train/records.bin"},
                        {"eval", "eval/records.bin"}};
  std::ofstream mf(paths.manifest());
  if (!mf) throw missing_input_error("build_dataset: cannot write manifest");
  mf << manifest.dump(2) << "\n";
}

Manifest load_manifest(const std::filesystem::path& dataset_dir) {
  DatasetPaths paths{dataset_dir};
  std::ifstream in(paths.manifest());
  if (!in)
    throw missing_input_error("load_manifest: no manifest.json in " +
                              dataset_dir.string());
  nlohmann::json j;
  in >> j;
  Manifest m;
  m.format_version = j.at("format_version").get<int>();
  m.config = dataset_config_from_json(j.at("config"));
  m.channels = j.at("channels").get<int>();
  for (int d = 0; d < 18; ++d) {
    m.noise.sigma(d) = j.at("noise_sigma").at(d).get<double>();
    m.noise.bias(d) = j.at("noise_bias").at(d).get<double>();
  }
  m.noise.outlier_rate = m.config.noise_outlier_rate;
  m.noise.outlier_scale = m.config.noise_outlier_scale;
  for (auto& [k, v] : j.at("counts").items()) m.counts[k] = v.get<int>();
  return m;
}

}  // namespace ldankit::synth
