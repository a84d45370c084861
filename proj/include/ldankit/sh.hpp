#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ldankit/errors.hpp"

// Order-2 Spherical Harmonics lighting math: basis evaluation, Lambertian
// shading, the 18-dim lighting subspace shared by the whole pipeline, the
// log-shading correction solve, and lighting distances.
namespace ldankit::shm {

using Vec3 = Eigen::Vector3d;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Vec18 = Eigen::Matrix<double, 18, 1>;

// Coefficient order, fixed across the whole project (serialization included):
// Y00, Y10, Y11e, Y11o, Y20, Y21e, Y21o, Y22e, Y22o
// (DC, then the three first-order terms, then the five second-order terms).
struct SH9 {
  Vec9 coeffs = Vec9::Zero();
};

struct SHLight {
  std::array<SH9, 3> per_channel;  // r, g, b
  std::optional<Vec18> projected;  // 6 subspace coords per channel, concatenated
};

// n x 9 matrix Y; row i is sh_basis(normals[i]).
struct BasisMatrix {
  Eigen::MatrixXd rows;
  int64_t pixel_count() const { return rows.rows(); }
};

// The 6 dominant right-singular vectors of a basis matrix, plus all 9
// singular values (descending). Columns carry a fixed sign convention:
// the largest-magnitude entry of each column is positive.
struct Subspace {
  Eigen::Matrix<double, 9, 6> v6;
  Vec9 singular_values;
};

// Band-wise clamped-cosine (Lambertian) kernel: converting a directional
// light's SH into irradiance coefficients multiplies band l by these.
inline constexpr double kLambertBand0 = 3.141592653589793;
inline constexpr double kLambertBand1 = 2.094395102393195;  // 2*pi/3
inline constexpr double kLambertBand2 = 0.785398163397448;  // pi/4

// Per-coefficient kernel in canonical order.
Vec9 lambert_kernel();

SH9 sh_basis(const Vec3& normal);

BasisMatrix build_basis_matrix(std::span<const Vec3> normals);

// albedo is n x 3; returns n x 3: albedo(i,c) * (Y * l_c)(i), negatives
// clamped to zero when clamp is set.
Eigen::MatrixXd render_shading(const BasisMatrix& basis, const SHLight& light,
                               const Eigen::MatrixXd& albedo, bool clamp);

// Thin SVD of Y keeping the 6 dominant right-singular vectors. Throws
// degenerate_geometry_error when the numerical rank is below 6 (the
// subspace would not be well defined).
Subspace compute_subspace(const BasisMatrix& basis);

// sum of top-6 singular values over the sum of all 9.
double energy_fraction(const Subspace& sub);

Vec18 project(const std::array<SH9, 3>& light, const Subspace& sub);
std::array<SH9, 3> unproject(const Vec18& coords, const Subspace& sub);

// Least-squares solve of Y l = exp(Y l_log) per channel via column-pivoted
// QR; recovers linear-space SH from log-space (SIRFS-style) coefficients.
std::array<SH9, 3> correct_log_sh(const BasisMatrix& basis,
                                  const std::array<SH9, 3>& l_log);
SH9 correct_log_sh(const BasisMatrix& basis, const SH9& l_log);

// Fixed 9x9 quadratic form behind the DC-ignoring lighting distance.
struct QMatrix {
  Eigen::Matrix<double, 9, 9> q;
};
const QMatrix& q_matrix();

// 0.5 * (1 - y1'Qy2 / sqrt(y1'Qy1 * y2'Qy2)), in [0, 1]. Throws
// degenerate_lighting_error when either quadratic form is <= 1e-12
// (DC-only lighting carries no signal under Q).
double q_distance(const SH9& y1, const SH9& y2);

inline constexpr double kQDegenerateEps = 1e-12;

double euclidean_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Canonical normal population for the shared subspace: a near-frontal cap
// grid (18 degree cap) unioned over a ring of pose jitters at the dataset
// jitter bound (15 degrees). Chosen so the top-6 singular values carry
// >= 99% of the singular-value sum.
inline constexpr double kCanonicalCapDeg = 18.0;
inline constexpr double kCanonicalJitterDeg = 15.0;
inline constexpr int kCanonicalGridRes = 40;
inline constexpr int kCanonicalJitterCount = 8;

std::vector<Vec3> canonical_frontal_normals();
BasisMatrix canonical_frontal_basis();
const Subspace& canonical_subspace();

// JSON artifact: 9x6 matrix row-major plus 9 singular values, full
// round-trip precision, so every downstream module shares one V6.
void save_subspace(const Subspace& sub, const std::filesystem::path& path);
Subspace load_subspace(const std::filesystem::path& path);

}  // namespace ldankit::shm
