#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ldankit/synth.hpp"

using namespace ldankit;
namespace fs = std::filesystem;

namespace {

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

synth::DatasetConfig tiny_config() {
  synth::DatasetConfig c;
  c.master_seed = 21;
  c.resolution = 16;
  c.n_synth_pairs = 20;
  c.n_real = 30;
  c.n_eval_conditions = 3;
  c.n_eval_ids = 4;
  return c;
}

}  // namespace

TEST_CASE("make_surface sphere geometry") {
  // odd resolution puts a pixel exactly at the center
  const auto patch = synth::make_surface(synth::SurfaceKind::kSphere, 33, 5, 0.0);
  const int center = 16 * 33 + 16;
  REQUIRE(patch.mask[center] == 1);
  CHECK(std::abs(patch.normals[3 * center + 0]) < 1e-12);
  CHECK(std::abs(patch.normals[3 * center + 1]) < 1e-12);
  CHECK(std::abs(patch.normals[3 * center + 2] - 1.0) < 1e-12);
}

TEST_CASE("make_surface invariants across seeds and kinds") {
  for (auto kind : {synth::SurfaceKind::kSphere, synth::SurfaceKind::kEllipsoidFace}) {
    for (uint64_t seed : {1ull, 17ull, 901ull}) {
      const auto p = synth::make_surface(kind, 32, seed, 15.0);
      CHECK(std::abs(p.pose_jitter_deg[0]) <= 15.0);
      CHECK(std::abs(p.pose_jitter_deg[1]) <= 15.0);
      int unmasked = 0;
      for (int i = 0; i < 32 * 32; ++i) {
        if (!p.mask[i]) {
          CHECK(p.normals[3 * i] == 0.0);
          continue;
        }
        ++unmasked;
        const double nx = p.normals[3 * i], ny = p.normals[3 * i + 1],
                     nz = p.normals[3 * i + 2];
        CHECK(std::abs(std::sqrt(nx * nx + ny * ny + nz * nz) - 1.0) < 1e-6);
        CHECK(nz > 0.0);
        for (int c = 0; c < 3; ++c) {
          CHECK(p.albedo[3 * i + c] >= 0.05f);
          CHECK(p.albedo[3 * i + c] <= 1.0f);
        }
      }
      CHECK(unmasked > 200);  // the surface fills a good part of the frame
    }
  }
  CHECK_THROWS_AS(synth::make_surface(synth::SurfaceKind::kSphere, 8, 1, 0.0),
                  invalid_input_error);
}

TEST_CASE("make_surface is deterministic in the identity seed") {
  const auto a = synth::make_surface(synth::SurfaceKind::kEllipsoidFace, 32, 77, 15.0);
  const auto b = synth::make_surface(synth::SurfaceKind::kEllipsoidFace, 32, 77, 15.0);
  CHECK(a.normals == b.normals);
  CHECK(a.albedo == b.albedo);
  CHECK(a.mask == b.mask);
  CHECK(a.pose_jitter_deg == b.pose_jitter_deg);
}

TEST_CASE("two identities differ visibly in albedo") {
  const auto a = synth::make_surface(synth::SurfaceKind::kEllipsoidFace, 32, 100, 15.0);
  const auto b = synth::make_surface(synth::SurfaceKind::kEllipsoidFace, 32, 101, 15.0);
  int both = 0, differing = 0;
  for (int i = 0; i < 32 * 32; ++i) {
    if (!a.mask[i] || !b.mask[i]) continue;
    ++both;
    float d = 0;
    for (int c = 0; c < 3; ++c)
      d = std::max(d, std::abs(a.albedo[3 * i + c] - b.albedo[3 * i + c]));
    if (d > 0.05f) ++differing;
  }
  REQUIRE(both > 0);
  CHECK(static_cast<double>(differing) / both >= 0.10);
}

TEST_CASE("sample_lighting contract") {
  Rng r1(42), r2(42);
  const auto a = synth::sample_lighting(r1);
  const auto b = synth::sample_lighting(r2);
  for (int c = 0; c < 3; ++c)
    CHECK(a.per_channel[c].coeffs == b.per_channel[c].coeffs);

  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const auto light = synth::sample_lighting(rng);
    double non_dc = 0;
    for (int c = 0; c < 3; ++c) non_dc += light.per_channel[c].coeffs.tail(8).norm();
    CHECK(non_dc > 1e-9);
  }
}

TEST_CASE("directional +z light is brightest at the sphere center") {
  shm::SHLight light;
  const shm::Vec9 dir_sh = shm::sh_basis(shm::Vec3(0, 0, 1)).coeffs;
  const shm::Vec9 kernel = shm::lambert_kernel();
  // half strength keeps the peak below the [0,1] clamp
  for (int c = 0; c < 3; ++c)
    light.per_channel[c].coeffs = 0.5 * kernel.cwiseProduct(dir_sh);

  const auto patch = synth::make_surface(synth::SurfaceKind::kSphere, 33, 3, 0.0);
  // flat albedo so the argmax reflects shading alone
  synth::SurfacePatch flat = patch;
  for (auto& v : flat.albedo) v = v > 0 ? 1.0f : 0.0f;
  const auto img = synth::render_patch(flat, light);
  int best = 0;
  for (int i = 0; i < 33 * 33; ++i)
    if (img[i] > img[best]) best = i;
  CHECK(best == 16 * 33 + 16);
}

TEST_CASE("condition_bank is fixed and separated") {
  const auto a = synth::condition_bank(2, 99, 19);
  const auto b = synth::condition_bank(2, 99, 19);
  for (int c = 0; c < 3; ++c)
    CHECK(a.per_channel[c].coeffs == b.per_channel[c].coeffs);

  std::vector<shm::Vec18> coords;
  for (int k = 0; k < 19; ++k) {
    const auto l = synth::condition_bank(k, 99, 19);
    REQUIRE(l.projected.has_value());
    coords.push_back(*l.projected);
  }
  for (size_t i = 0; i < coords.size(); ++i)
    for (size_t j = i + 1; j < coords.size(); ++j)
      CHECK((coords[i] - coords[j]).norm() >= synth::kBankMinSeparation);

  CHECK_THROWS_AS(synth::condition_bank(19, 99, 19), invalid_input_error);
}

TEST_CASE("render_pair shares labels and matches the sh_core renderer") {
  Rng rng(13);
  auto light = synth::sample_lighting(rng);
  light.projected = shm::project(light.per_channel, shm::canonical_subspace());
  auto [a, b] = synth::render_pair(light, 1001, 1002, synth::SurfaceKind::kEllipsoidFace,
                                   32, 15.0);
  REQUIRE(a.clean18.has_value());
  REQUIRE(b.clean18.has_value());
  CHECK(*a.clean18 == *b.clean18);
  for (float v : a.image) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  // recompute image a through the sh_core path on its own surface
  const auto patch = synth::make_surface(synth::SurfaceKind::kEllipsoidFace, 32, 1001, 15.0);
  std::vector<shm::Vec3> normals;
  std::vector<int> px;
  for (int i = 0; i < 32 * 32; ++i) {
    if (!patch.mask[i]) continue;
    normals.emplace_back(patch.normals[3 * i], patch.normals[3 * i + 1],
                         patch.normals[3 * i + 2]);
    px.push_back(i);
  }
  const auto basis = shm::build_basis_matrix(normals);
  Eigen::MatrixXd albedo(normals.size(), 3);
  for (size_t r = 0; r < px.size(); ++r)
    for (int c = 0; c < 3; ++c) albedo(r, c) = patch.albedo[3 * px[r] + c];
  const auto oracle = shm::render_shading(basis, light, albedo, true);
  for (size_t r = 0; r < px.size(); ++r)
    for (int c = 0; c < 3; ++c) {
      const float got = a.image[static_cast<size_t>(c) * 32 * 32 + px[r]];
      CHECK(std::abs(got - std::min(1.0, oracle(r, c))) < 1e-6);
    }

  CHECK_THROWS_AS(synth::render_pair(light, 5, 5, synth::SurfaceKind::kSphere, 32, 0.0),
                  invalid_input_error);
}

TEST_CASE("corrupt_label statistics") {
  std::array<float, 18> clean{};
  for (int i = 0; i < 18; ++i) clean[i] = static_cast<float>(0.1 * i - 0.5);

  SUBCASE("no noise is the identity") {
    synth::NoiseModel none;
    none.outlier_rate = 0.0;
    Rng rng(1);
    CHECK(synth::corrupt_label(clean, none, rng) == clean);
  }

  SUBCASE("gaussian std matches within 3 percent") {
    synth::NoiseModel m;
    m.sigma.setConstant(0.2);
    m.outlier_rate = 0.0;
    Rng rng(2);
    const int n = 100000;
    std::array<double, 18> sum{}, sq{};
    for (int i = 0; i < n; ++i) {
      const auto noisy = synth::corrupt_label(clean, m, rng);
      for (int d = 0; d < 18; ++d) {
        const double e = noisy[d] - clean[d];
        sum[d] += e;
        sq[d] += e * e;
      }
    }
    for (int d = 0; d < 18; ++d) {
      const double std_d = std::sqrt(sq[d] / n - (sum[d] / n) * (sum[d] / n));
      CHECK(std_d == doctest::Approx(0.2).epsilon(0.03));
    }
  }

  SUBCASE("outliers scale the noise") {
    synth::NoiseModel m;
    m.sigma.setConstant(0.1);
    m.outlier_rate = 1.0;
    m.outlier_scale = 10.0;
    Rng rng(3);
    const int n = 100000;
    double sq = 0;
    for (int i = 0; i < n; ++i) {
      const auto noisy = synth::corrupt_label(clean, m, rng);
      const double e = noisy[0] - clean[0];
      sq += e * e;
    }
    CHECK(std::sqrt(sq / n) == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("build_dataset counts, flags and determinism") {
  const auto cfg = tiny_config();
  const auto dir1 = temp_dir("ldankit_ds1");
  const auto dir2 = temp_dir("ldankit_ds2");
  synth::build_dataset(cfg, dir1);
  synth::build_dataset(cfg, dir2);

  synth::DatasetPaths p1{dir1}, p2{dir2};
  for (const char* split : {"synth_pairs", "pseudo_real_train", "eval"})
    CHECK(slurp(p1.split(split)) == slurp(p2.split(split)));

  const auto manifest = synth::load_manifest(dir1);
  CHECK(manifest.counts.at("synth_pairs") == 40);
  CHECK(manifest.counts.at("pseudo_real_train") == 30);
  CHECK(manifest.counts.at("eval") == 12);

  const auto synth_recs = synth::read_records(p1.split("synth_pairs"), 3, 16, 16);
  REQUIRE(synth_recs.size() == 40);
  std::set<uint32_t> pair_ids;
  for (size_t i = 0; i + 1 < synth_recs.size(); i += 2) {
    REQUIRE(synth_recs[i].pair_id.has_value());
    CHECK(*synth_recs[i].pair_id == *synth_recs[i + 1].pair_id);
    pair_ids.insert(*synth_recs[i].pair_id);
    REQUIRE(synth_recs[i].clean18.has_value());
    CHECK(*synth_recs[i].clean18 == *synth_recs[i + 1].clean18);
    CHECK_FALSE(synth_recs[i].noisy18.has_value());
    CHECK_FALSE(synth_recs[i].condition_id.has_value());
  }
  CHECK(pair_ids.size() == 20);

  const auto real_recs = synth::read_records(p1.split("pseudo_real_train"), 3, 16, 16);
  REQUIRE(real_recs.size() == 30);
  Eigen::Matrix<double, 18, 1> err_sum = Eigen::Matrix<double, 18, 1>::Zero();
  for (const auto& r : real_recs) {
    REQUIRE(r.clean18.has_value());
    REQUIRE(r.noisy18.has_value());
    for (int d = 0; d < 18; ++d) err_sum(d) += (*r.noisy18)[d] - (*r.clean18)[d];
  }
  // mean label error tracks the configured bias within 3 sigma / sqrt(N)
  for (int d = 0; d < 18; ++d) {
    const double tol = 3.0 * manifest.noise.sigma(d) *
                           std::sqrt(1 + manifest.noise.outlier_rate *
                                             (manifest.noise.outlier_scale *
                                                  manifest.noise.outlier_scale -
                                              1)) /
                           std::sqrt(30.0) +
                       1e-6;
    CHECK(std::abs(err_sum(d) / 30.0 - manifest.noise.bias(d)) <= tol);
  }

  const auto eval_recs = synth::read_records(p1.split("eval"), 3, 16, 16);
  REQUIRE(eval_recs.size() == 12);
  std::map<int, int> hist;
  for (const auto& r : eval_recs) {
    REQUIRE(r.condition_id.has_value());
    CHECK_FALSE(r.clean18.has_value());
    CHECK_FALSE(r.noisy18.has_value());
    hist[*r.condition_id]++;
  }
  for (const auto& [c, n] : hist) CHECK(n == 4);
  CHECK(hist.size() == 3);

  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("build_dataset rejects bad destinations and configs") {
  auto cfg = tiny_config();
  cfg.n_real = 0;
  CHECK_THROWS_AS(synth::build_dataset(cfg, temp_dir("ldankit_bad")), invalid_input_error);

  const auto file_path = fs::temp_directory_path() / "ldankit_blocker";
  std::ofstream(file_path) << "x";
  CHECK_THROWS_AS(synth::build_dataset(tiny_config(), file_path / "sub"),
                  missing_input_error);
  fs::remove(file_path);
}

TEST_CASE("record io round trip") {
  std::vector<synth::LabeledImage> recs(3);
  Rng rng(5);
  for (size_t i = 0; i < recs.size(); ++i) {
    recs[i].record_index = static_cast<uint32_t>(i);
    recs[i].image.resize(3 * 16 * 16);
    for (auto& v : recs[i].image) v = static_cast<float>(rng.uniform());
  }
  recs[0].pair_id = 9;
  recs[0].clean18 = std::array<float, 18>{};
  (*recs[0].clean18)[3] = 1.5f;
  recs[1].condition_id = 4;
  recs[2].clean18 = std::array<float, 18>{};
  recs[2].noisy18 = std::array<float, 18>{};
  (*recs[2].noisy18)[17] = -2.0f;

  const auto path = temp_dir("ldankit_rec") / "records.bin";
  synth::write_records(path, recs, 3, 16, 16);
  const auto back = synth::read_records(path, 3, 16, 16);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].record_index == recs[i].record_index);
    CHECK(back[i].image == recs[i].image);
    CHECK(back[i].pair_id == recs[i].pair_id);
    CHECK(back[i].condition_id == recs[i].condition_id);
    CHECK(back[i].clean18 == recs[i].clean18);
    CHECK(back[i].noisy18 == recs[i].noisy18);
  }
  fs::remove_all(path.parent_path());
}
