#include "ldankit/sh.hpp"

#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>

#include "json.hpp"

namespace ldankit::shm {

namespace {

constexpr double kPi = std::numbers::pi;

// sqrt(3/4pi), 0.5*sqrt(5/4pi), 3*sqrt(5/12pi)
const double kC1 = std::sqrt(3.0 / (4.0 * kPi));
const double kC2 = 0.5 * std::sqrt(5.0 / (4.0 * kPi));
const double kC3 = 3.0 * std::sqrt(5.0 / (12.0 * kPi));

}  // namespace

Vec9 lambert_kernel() {
  Vec9 k;
  k << kLambertBand0, kLambertBand1, kLambertBand1, kLambertBand1,
      kLambertBand2, kLambertBand2, kLambertBand2, kLambertBand2,
      kLambertBand2;
  return k;
}

SH9 sh_basis(const Vec3& normal) {
  if (!normal.allFinite()) throw invalid_input_error("sh_basis: non-finite normal");
  if (std::abs(normal.norm() - 1.0) > 1e-6)
    throw invalid_input_error("sh_basis: normal is not unit length");
  const double x = normal.x(), y = normal.y(), z = normal.z();
  SH9 out;
  out.coeffs << 1.0 / std::sqrt(4.0 * kPi),
      kC1 * z,
      kC1 * x,
      kC1 * y,
      kC2 * (3.0 * z * z - 1.0),
      kC3 * x * z,
      kC3 * y * z,
      0.5 * kC3 * (x * x - y * y),
      kC3 * x * y;
  return out;
}

BasisMatrix build_basis_matrix(std::span<const Vec3> normals) {
  if (normals.empty()) throw invalid_input_error("build_basis_matrix: empty normal list");
  BasisMatrix b;
  b.rows.resize(static_cast<int64_t>(normals.size()), 9);
  for (size_t i = 0; i < normals.size(); ++i)
    b.rows.row(static_cast<int64_t>(i)) = sh_basis(normals[i]).coeffs.transpose();
  return b;
}

Eigen::MatrixXd render_shading(const BasisMatrix& basis, const SHLight& light,
                               const Eigen::MatrixXd& albedo, bool clamp) {
  if (albedo.rows() != basis.pixel_count() || albedo.cols() != 3)
    throw invalid_input_error("render_shading: albedo shape mismatch");
  Eigen::MatrixXd img(basis.pixel_count(), 3);
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd shading = basis.rows * light.per_channel[c].coeffs;
    img.col(c) = albedo.col(c).cwiseProduct(shading);
  }
  if (clamp) img = img.cwiseMax(0.0);
  return img;
}

Subspace compute_subspace(const BasisMatrix& basis) {
  if (basis.pixel_count() < 9)
    throw invalid_input_error("compute_subspace: need at least 9 rows");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis.rows, Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  if (sv(5) <= 1e-10 * sv(0))
    throw degenerate_geometry_error(
        "compute_subspace: normal population is rank-deficient below 6");
  Subspace sub;
  sub.singular_values = sv;
  sub.v6 = svd.matrixV().leftCols(6);
  // Sign convention: largest-magnitude entry of each column positive
  // (first such entry on ties) so V6 is reproducible across runs.
  for (int j = 0; j < 6; ++j) {
    int arg = 0;
    double best = -1.0;
    for (int i = 0; i < 9; ++i) {
      const double m = std::abs(sub.v6(i, j));
      if (m > best + 1e-15) {
        best = m;
        arg = i;
      }
    }
    if (sub.v6(arg, j) < 0.0) sub.v6.col(j) = -sub.v6.col(j);
  }
  return sub;
}

double energy_fraction(const Subspace& sub) {
  return sub.singular_values.head(6).sum() / sub.singular_values.sum();
}

Vec18 project(const std::array<SH9, 3>& light, const Subspace& sub) {
  Vec18 out;
  for (int c = 0; c < 3; ++c)
    out.segment<6>(6 * c) = sub.v6.transpose() * light[c].coeffs;
  return out;
}

std::array<SH9, 3> unproject(const Vec18& coords, const Subspace& sub) {
  std::array<SH9, 3> out;
  for (int c = 0; c < 3; ++c) out[c].coeffs = sub.v6 * coords.segment<6>(6 * c);
  return out;
}

SH9 correct_log_sh(const BasisMatrix& basis, const SH9& l_log) {
  if (basis.pixel_count() < 9)
    throw invalid_input_error("correct_log_sh: need at least 9 rows");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis.rows);
  if (qr.rank() < 9)
    throw degenerate_geometry_error("correct_log_sh: basis rank below 9");
  const Eigen::VectorXd rhs = (basis.rows * l_log.coeffs).array().exp();
  SH9 out;
  out.coeffs = qr.solve(rhs);
  return out;
}

std::array<SH9, 3> correct_log_sh(const BasisMatrix& basis,
                                  const std::array<SH9, 3>& l_log) {
  std::array<SH9, 3> out;
  for (int c = 0; c < 3; ++c) out[c] = correct_log_sh(basis, l_log[c]);
  return out;
}

const QMatrix& q_matrix() {
  static const QMatrix q = [] {
    QMatrix m;
    m.q.setZero();
    const double s5 = std::sqrt(5.0), s3 = std::sqrt(3.0);
    m.q(1, 1) = kPi / 36.0;
    m.q(2, 2) = kPi / 9.0;
    m.q(3, 3) = kPi / 9.0;
    for (int i = 4; i < 9; ++i) m.q(i, i) = kPi / 64.0;
    m.q(1, 4) = m.q(4, 1) = s5 * kPi / (64.0 * s3);
    m.q(2, 5) = m.q(5, 2) = s5 * kPi / 64.0;
    m.q(3, 6) = m.q(6, 3) = s5 * kPi / 64.0;
    return m;
  }();
  return q;
}

double q_distance(const SH9& y1, const SH9& y2) {
  const auto& q = q_matrix().q;
  const double n1 = y1.coeffs.dot(q * y1.coeffs);
  const double n2 = y2.coeffs.dot(q * y2.coeffs);
  if (n1 <= kQDegenerateEps || n2 <= kQDegenerateEps)
    throw degenerate_lighting_error(
        "q_distance: DC-only lighting has no signal under the Q-measure");
  const double corr = y1.coeffs.dot(q * y2.coeffs) / std::sqrt(n1 * n2);
  return std::clamp(0.5 * (1.0 - corr), 0.0, 1.0);
}

double euclidean_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size())
    throw invalid_input_error("euclidean_distance: length mismatch");
  return (a - b).norm();
}

namespace {

Eigen::Matrix3d jitter_rotation(double pitch_rad, double yaw_rad) {
  return (Eigen::AngleAxisd(yaw_rad, Vec3::UnitY()) *
          Eigen::AngleAxisd(pitch_rad, Vec3::UnitX()))
      .toRotationMatrix();
}

}  // namespace

std::vector<Vec3> canonical_frontal_normals() {
  const double smax = std::sin(kCanonicalCapDeg * kPi / 180.0);
  std::vector<Vec3> base;
  base.reserve(kCanonicalGridRes * kCanonicalGridRes);
  for (int iy = 0; iy < kCanonicalGridRes; ++iy) {
    for (int ix = 0; ix < kCanonicalGridRes; ++ix) {
      const double u = ((ix + 0.5) / kCanonicalGridRes * 2.0 - 1.0) * smax;
      const double v = ((iy + 0.5) / kCanonicalGridRes * 2.0 - 1.0) * smax;
      const double r2 = u * u + v * v;
      if (r2 >= smax * smax) continue;
      base.emplace_back(u, v, std::sqrt(1.0 - r2));
    }
  }
  std::vector<Vec3> all = base;
  const double jr = kCanonicalJitterDeg * kPi / 180.0;
  for (int k = 0; k < kCanonicalJitterCount; ++k) {
    const double a = 2.0 * kPi * k / kCanonicalJitterCount;
    const Eigen::Matrix3d rot = jitter_rotation(jr * std::cos(a), jr * std::sin(a));
    for (const auto& n : base) {
      Vec3 m = rot * n;
      if (m.z() > 0.0) all.push_back(m.normalized());
    }
  }
  return all;
}

BasisMatrix canonical_frontal_basis() {
  const auto normals = canonical_frontal_normals();
  return build_basis_matrix(normals);
}

const Subspace& canonical_subspace() {
  static const Subspace sub = compute_subspace(canonical_frontal_basis());
  return sub;
}

void save_subspace(const Subspace& sub, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  auto& v = j["v6"] = nlohmann::json::array();
  for (int i = 0; i < 9; ++i) {
    auto row = nlohmann::json::array();
    for (int c = 0; c < 6; ++c) row.push_back(sub.v6(i, c));
    v.push_back(std::move(row));
  }
  auto& s = j["singular_values"] = nlohmann::json::array();
  for (int i = 0; i < 9; ++i) s.push_back(sub.singular_values(i));
  std::ofstream out(path);
  if (!out) throw missing_input_error("save_subspace: cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Subspace load_subspace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw missing_input_error("load_subspace: cannot read " + path.string());
  nlohmann::json j;
  in >> j;
  Subspace sub;
  for (int i = 0; i < 9; ++i)
    for (int c = 0; c < 6; ++c) sub.v6(i, c) = j.at("v6").at(i).at(c).get<double>();
  for (int i = 0; i < 9; ++i)
    sub.singular_values(i) = j.at("singular_values").at(i).get<double>();
  return sub;
}

}  // namespace ldankit::shm
