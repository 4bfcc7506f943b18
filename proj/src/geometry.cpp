#include "pairx/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "pairx/error.hpp"
#include "pairx/image.hpp"
#include "pairx/rng.hpp"

namespace pairx {

namespace {

using Mat3 = Eigen::Matrix3d;

Mat3 to_eigen(const Homography& h) {
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = h.matrix[r][c];
  return m;
}

std::optional<Homography> from_eigen(const Mat3& m) {
  if (!m.allFinite()) return std::nullopt;
  Mat3 n = m;
  if (std::abs(n(2, 2)) > 1e-12)
    n /= n(2, 2);
  else
    n /= n.norm();
  if (std::abs(n.determinant()) <= 1e-12) return std::nullopt;
  Homography h;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) h.matrix[r][c] = n(r, c);
  return h;
}

// Translate to the centroid, scale the mean distance to sqrt(2).
Mat3 normalizing_transform(const std::vector<Point2>& pts) {
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Mat3 t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

double triangle_area2(const Point2& p, const Point2& q, const Point2& r) {
  return std::abs((q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x));
}

// True when any three of the four points are (nearly) collinear.
bool degenerate_sample(const std::array<Point2, 4>& pts) {
  double scale = 0.0;
  for (const auto& p : pts)
    for (const auto& q : pts) scale = std::max(scale, std::hypot(p.x - q.x, p.y - q.y));
  if (scale <= 0.0) return true;
  const double tol = 1e-6 * scale * scale;
  static constexpr int kTriples[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  for (const auto& t : kTriples)
    if (triangle_area2(pts[t[0]], pts[t[1]], pts[t[2]]) < tol) return true;
  return false;
}

double residual(const Homography& h, const Correspondence& c) {
  const auto p = project(h, c.a);
  if (!p) return std::numeric_limits<double>::infinity();
  return std::hypot(p->x - c.b.x, p->y - c.b.y);
}

struct Consensus {
  std::vector<std::size_t> inliers;
  double residual_sum = 0.0;
};

Consensus consensus(const Homography& h, const std::vector<Correspondence>& points, double threshold) {
  Consensus c;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double r = residual(h, points[k]);
    if (r <= threshold) {
      c.inliers.push_back(k);
      c.residual_sum += r;
    }
  }
  return c;
}

bool better(const Consensus& x, const Consensus& y) {
  if (x.inliers.size() != y.inliers.size()) return x.inliers.size() > y.inliers.size();
  return x.residual_sum < y.residual_sum;
}

}  // namespace

Homography Homography::inverse() const {
  auto inv = from_eigen(to_eigen(*this).inverse());
  if (!inv) fail(ErrorKind::Numerical, "homography is not invertible");
  inv->inlier_count = inlier_count;
  inv->inlier_threshold = inlier_threshold;
  return *inv;
}

double Homography::determinant() const { return to_eigen(*this).determinant(); }

std::optional<Point2> project(const Homography& h, const Point2& p) {
  const auto& m = h.matrix;
  const double x = m[0][0] * p.x + m[0][1] * p.y + m[0][2];
  const double y = m[1][0] * p.x + m[1][1] * p.y + m[1][2];
  const double w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
  if (std::abs(w) < 1e-12) return std::nullopt;
  return Point2{x / w, y / w};
}

std::optional<Homography> fit_homography_dlt(const std::vector<Correspondence>& points) {
  if (points.size() < 4) return std::nullopt;
  std::vector<Point2> pa, pb;
  pa.reserve(points.size());
  pb.reserve(points.size());
  for (const auto& c : points) {
    pa.push_back(c.a);
    pb.push_back(c.b);
  }
  const Mat3 ta = normalizing_transform(pa);
  const Mat3 tb = normalizing_transform(pb);
  Eigen::MatrixXd a(2 * points.size(), 9);
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Eigen::Vector3d u = ta * Eigen::Vector3d(pa[k].x, pa[k].y, 1.0);
    const Eigen::Vector3d v = tb * Eigen::Vector3d(pb[k].x, pb[k].y, 1.0);
    const double x = u.x() / u.z(), y = u.y() / u.z();
    const double xp = v.x() / v.z(), yp = v.y() / v.z();
    const auto r = static_cast<Eigen::Index>(2 * k);
    a.row(r) << -x, -y, -1, 0, 0, 0, xp * x, xp * y, xp;
    a.row(r + 1) << 0, 0, 0, -x, -y, -1, yp * x, yp * y, yp;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return from_eigen(tb.inverse() * hn * ta);
}

std::optional<Homography> estimate_homography(const std::vector<Correspondence>& points,
                                              const RansacOptions& options) {
  const std::size_t n = points.size();
  if (n < 4) return std::nullopt;
  Rng rng(options.seed);
  std::optional<Homography> best_h;
  Consensus best;
  int required = options.max_iters;
  for (int iter = 0; iter < std::min(required, options.max_iters); ++iter) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t s = 0; s < 4; ++s) {
      bool fresh;
      do {
        idx[s] = static_cast<std::size_t>(uniform_index(rng, n));
        fresh = std::find(idx.begin(), idx.begin() + static_cast<long>(s), idx[s]) ==
                idx.begin() + static_cast<long>(s);
      } while (!fresh);
    }
    std::array<Point2, 4> sa{}, sb{};
    std::vector<Correspondence> sample;
    for (std::size_t s = 0; s < 4; ++s) {
      sa[s] = points[idx[s]].a;
      sb[s] = points[idx[s]].b;
      sample.push_back(points[idx[s]]);
    }
    if (degenerate_sample(sa) || degenerate_sample(sb)) continue;
    const auto h = fit_homography_dlt(sample);
    if (!h) continue;
    Consensus c = consensus(*h, points, options.threshold);
    if (!best_h || better(c, best)) {
      best_h = h;
      best = std::move(c);
      // Adaptive termination at 99.9% confidence of drawing an all-inlier sample.
      const double w = static_cast<double>(best.inliers.size()) / static_cast<double>(n);
      const double p_good = std::pow(w, 4.0);
      if (p_good >= 1.0 - 1e-12) {
        required = iter + 1;
      } else if (p_good > 0.0) {
        const double need = std::log(1.0 - 0.999) / std::log(1.0 - p_good);
        if (need < static_cast<double>(options.max_iters))
          required = std::max(iter + 1, static_cast<int>(std::ceil(need)));
      }
    }
  }
  if (!best_h) return std::nullopt;

  // Refit on the consensus set until it stops growing.
  for (int round = 0; round < 10 && best.inliers.size() >= 4; ++round) {
    std::vector<Correspondence> inl;
    for (std::size_t k : best.inliers) inl.push_back(points[k]);
    const auto refit = fit_homography_dlt(inl);
    if (!refit) break;
    Consensus c = consensus(*refit, points, options.threshold);
    if (c.inliers.size() < best.inliers.size()) break;
    const bool stable = c.inliers == best.inliers;
    best_h = refit;
    best = std::move(c);
    if (stable) break;
  }
  best_h->inlier_count = static_cast<int>(best.inliers.size());
  best_h->inlier_threshold = options.threshold;
  return best_h;
}

ResidualMetric inverted_residual_mean(const MatchSet& matches, const Homography& h,
                                      const GridToPixel& grid_to_pixel) {
  ResidualMetric out;
  double total = 0.0;
  for (const auto& m : matches.matches) {
    const auto p = project(h, grid_to_pixel(m.kp_a));
    if (!p) {
      ++out.points_at_infinity;
      continue;
    }
    const Point2 q = grid_to_pixel(m.kp_b);
    total += std::hypot(p->x - q.x, p->y - q.y);
    ++out.residual_count;
  }
  if (out.residual_count == 0) return out;
  if (total < 1e-9) {
    out.value = kResidualClamp;
    out.clamped = true;
  } else {
    out.value = out.residual_count / total;
  }
  return out;
}

std::optional<double> match_coverage(const std::vector<Keypoint>& matched_a,
                                     const std::vector<Keypoint>& matched_b,
                                     const RelevanceMap& rel_a, const RelevanceMap& rel_b) {
  if (rel_a.values.rank() != 3 || rel_b.values.rank() != 3)
    fail(ErrorKind::Contract, "match coverage needs rank-3 relevance maps");
  const Tensor sums_a = rel_a.channel_sums();
  const Tensor sums_b = rel_b.channel_sums();
  auto clamped = [](float v) { return v > 0.0f ? static_cast<double>(v) : 0.0; };
  auto total = [&](const Tensor& s) {
    double t = 0.0;
    for (float v : s.data()) t += clamped(v);
    return t;
  };
  auto matched = [&](const Tensor& s, const std::vector<Keypoint>& kps) {
    std::vector<Keypoint> unique = kps;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    double t = 0.0;
    for (const auto& kp : unique) {
      if (kp.i < 0 || kp.i >= s.dim(1) || kp.j < 0 || kp.j >= s.dim(0))
        fail(ErrorKind::Contract, "matched keypoint outside relevance grid");
      t += clamped(s[static_cast<std::size_t>(kp.j) * s.dim(1) + kp.i]);
    }
    return t;
  };
  const double denom = total(sums_a) + total(sums_b);
  if (!(denom > 0.0)) return std::nullopt;
  return (matched(sums_a, matched_a) + matched(sums_b, matched_b)) / denom;
}

std::vector<CorrespondenceFile> read_correspondences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open correspondence file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  auto parse_one = [&](const nlohmann::json& j) {
    CorrespondenceFile f;
    f.pair_id = j.value("pair_id", "");
    for (const auto& row : j.at("points")) {
      if (row.size() != 4) fail(ErrorKind::Io, "correspondence rows must have 4 numbers");
      f.points.push_back({{row[0].get<double>(), row[1].get<double>()},
                          {row[2].get<double>(), row[3].get<double>()}});
    }
    if (j.contains("size_a")) f.size_a = j.at("size_a").get<std::array<int, 2>>();
    if (j.contains("size_b")) f.size_b = j.at("size_b").get<std::array<int, 2>>();
    return f;
  };

  std::vector<CorrespondenceFile> out;
  try {
    if (nlohmann::json::accept(text)) {
      const auto j = nlohmann::json::parse(text);
      if (j.is_array())
        for (const auto& e : j) out.push_back(parse_one(e));
      else
        out.push_back(parse_one(j));
      return out;
    }
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      out.push_back(parse_one(nlohmann::json::parse(line)));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, "malformed correspondence file " + path.string() + ": " + e.what());
  }
  return out;
}

std::vector<Correspondence> rescale_correspondences(const std::vector<Correspondence>& points,
                                                    std::array<int, 2> size_a,
                                                    std::array<int, 2> size_b, int input_width,
                                                    int input_height) {
  std::vector<Correspondence> out;
  out.reserve(points.size());
  for (const auto& c : points)
    out.push_back({{rescale_coordinate(c.a.x, size_a[0], input_width),
                    rescale_coordinate(c.a.y, size_a[1], input_height)},
                   {rescale_coordinate(c.b.x, size_b[0], input_width),
                    rescale_coordinate(c.b.y, size_b[1], input_height)}});
  return out;
}

}  // namespace pairx
