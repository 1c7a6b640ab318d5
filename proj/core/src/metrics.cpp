#include "mvsfm/metrics.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace mvsfm {

namespace {

// Minimal median-split kd-tree for exact nearest-neighbor queries. Distances
// must match the exhaustive scan bit for bit, so all arithmetic is the same
// squared-distance accumulation the brute force uses.
class KdTree3 {
 public:
  explicit KdTree3(std::span<const Eigen::Vector3d> points) : points_(points) {
    index_.resize(points.size());
    std::iota(index_.begin(), index_.end(), size_t{0});
    nodes_.reserve(points.size());
    root_ = build(0, points.size(), 0);
  }

  double nearest_squared(const Eigen::Vector3d& query) const {
    double best = std::numeric_limits<double>::infinity();
    search(root_, query, best);
    return best;
  }

 private:
  struct Node {
    size_t point = 0;
    int axis = 0;
    int32_t left = -1;
    int32_t right = -1;
  };

  int32_t build(size_t begin, size_t end, int depth) {
    if (begin >= end) return -1;
    int axis = depth % 3;
    size_t mid = (begin + end) / 2;
    std::nth_element(index_.begin() + static_cast<ptrdiff_t>(begin),
                     index_.begin() + static_cast<ptrdiff_t>(mid),
                     index_.begin() + static_cast<ptrdiff_t>(end),
                     [&](size_t a, size_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    auto id = static_cast<int32_t>(nodes_.size());
    nodes_.push_back({index_[mid], axis, -1, -1});
    int32_t left = build(begin, mid, depth + 1);
    int32_t right = build(mid + 1, end, depth + 1);
    nodes_[static_cast<size_t>(id)].left = left;
    nodes_[static_cast<size_t>(id)].right = right;
    return id;
  }

  void search(int32_t id, const Eigen::Vector3d& query, double& best) const {
    if (id < 0) return;
    const Node& node = nodes_[static_cast<size_t>(id)];
    const Eigen::Vector3d& p = points_[node.point];
    double d2 = (p - query).squaredNorm();
    if (d2 < best) best = d2;
    double delta = query[node.axis] - p[node.axis];
    int32_t near = delta < 0 ? node.left : node.right;
    int32_t far = delta < 0 ? node.right : node.left;
    search(near, query, best);
    if (delta * delta < best) search(far, query, best);
  }

  std::span<const Eigen::Vector3d> points_;
  std::vector<size_t> index_;
  std::vector<Node> nodes_;
  int32_t root_ = -1;
};

void require_non_empty(std::span<const Eigen::Vector3d> a,
                       std::span<const Eigen::Vector3d> b) {
  if (a.empty() || b.empty())
    fail(ErrorCode::EmptySet, "point-cloud distance over an empty set");
}

double percentile_nearest_rank(std::vector<double>& sorted, double fraction) {
  size_t rank = static_cast<size_t>(std::ceil(fraction * static_cast<double>(sorted.size())));
  if (rank == 0) rank = 1;
  return sorted[std::min(rank, sorted.size()) - 1];
}

}  // namespace

ReprojStats reprojection_error(std::span<const TrackedPoint> tracks,
                               std::span<const Pose> poses,
                               const Intrinsics& intrinsics) {
  std::vector<double> residuals;
  for (const auto& track : tracks) {
    for (const auto& [frame, pixel] : track.observations) {
      if (frame >= poses.size())
        fail(ErrorCode::OutOfBounds,
             "track references frame " + std::to_string(frame) + " of " +
                 std::to_string(poses.size()));
      Vec2 projected = project_point(track.position, poses[frame], intrinsics);
      residuals.push_back(distance(projected, pixel));
    }
  }
  if (residuals.empty()) fail(ErrorCode::EmptyTracks, "no observations to score");

  ReprojStats stats;
  stats.count = residuals.size();
  stats.mean = std::accumulate(residuals.begin(), residuals.end(), 0.0) /
               static_cast<double>(residuals.size());
  std::sort(residuals.begin(), residuals.end());
  size_t n = residuals.size();
  stats.median = n % 2 == 1 ? residuals[n / 2]
                            : 0.5 * (residuals[n / 2 - 1] + residuals[n / 2]);
  stats.p95 = percentile_nearest_rank(residuals, 0.95);
  return stats;
}

double chamfer(std::span<const Eigen::Vector3d> a, std::span<const Eigen::Vector3d> b,
               bool squared) {
  require_non_empty(a, b);
  KdTree3 tree_a(a), tree_b(b);
  auto directed_mean = [&](std::span<const Eigen::Vector3d> from, const KdTree3& to) {
    double sum = 0.0;
    for (const auto& p : from) {
      double d2 = to.nearest_squared(p);
      sum += squared ? d2 : std::sqrt(d2);
    }
    return sum / static_cast<double>(from.size());
  };
  return 0.5 * (directed_mean(a, tree_b) + directed_mean(b, tree_a));
}

double hausdorff(std::span<const Eigen::Vector3d> a, std::span<const Eigen::Vector3d> b) {
  require_non_empty(a, b);
  KdTree3 tree_a(a), tree_b(b);
  auto directed_max = [](std::span<const Eigen::Vector3d> from, const KdTree3& to) {
    double worst = 0.0;
    for (const auto& p : from) worst = std::max(worst, to.nearest_squared(p));
    return std::sqrt(worst);
  };
  return std::max(directed_max(a, tree_b), directed_max(b, tree_a));
}

std::vector<Eigen::Vector3d> align_similarity(std::span<const Eigen::Vector3d> a,
                                              std::span<const Eigen::Vector3d> b) {
  require_non_empty(a, b);
  std::vector<Eigen::Vector3d> out(a.begin(), a.end());

  if (a.size() == b.size()) {
    Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(a.size()));
    Eigen::Matrix3Xd dst(3, static_cast<Eigen::Index>(b.size()));
    for (size_t i = 0; i < a.size(); ++i) {
      src.col(static_cast<Eigen::Index>(i)) = a[i];
      dst.col(static_cast<Eigen::Index>(i)) = b[i];
    }
    Eigen::Matrix4d transform = Eigen::umeyama(src, dst, true);
    for (auto& p : out) p = (transform * p.homogeneous()).hnormalized();
    return out;
  }

  auto centroid = [](std::span<const Eigen::Vector3d> pts) {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (const auto& p : pts) c += p;
    return Eigen::Vector3d(c / static_cast<double>(pts.size()));
  };
  auto rms_radius = [](std::span<const Eigen::Vector3d> pts, const Eigen::Vector3d& c) {
    double s = 0.0;
    for (const auto& p : pts) s += (p - c).squaredNorm();
    return std::sqrt(s / static_cast<double>(pts.size()));
  };
  Eigen::Vector3d ca = centroid(a), cb = centroid(b);
  double ra = rms_radius(a, ca), rb = rms_radius(b, cb);
  double scale = ra > 1e-15 ? rb / ra : 1.0;
  for (auto& p : out) p = cb + scale * (p - ca);
  return out;
}

Psnr psnr_y(const LumaImage& reference, const LumaImage& test) {
  if (reference.width != test.width || reference.height != test.height)
    fail(ErrorCode::DimensionMismatch,
         std::to_string(reference.width) + "x" + std::to_string(reference.height) +
             " vs " + std::to_string(test.width) + "x" + std::to_string(test.height));
  double sum_sq = 0.0;
  for (size_t i = 0; i < reference.pixels.size(); ++i) {
    double d = static_cast<double>(reference.pixels[i]) - test.pixels[i];
    sum_sq += d * d;
  }
  if (sum_sq == 0.0) return {0.0, true};
  double mse = sum_sq / static_cast<double>(reference.pixels.size());
  return {20.0 * std::log10(255.0 / std::sqrt(mse)), false};
}

SharpnessScore q_metric(const LumaImage& image, const QParams& params) {
  const uint32_t ps = params.patch_size;
  if (image.width < ps || image.height < ps)
    fail(ErrorCode::ImageTooSmall,
         std::to_string(image.width) + "x" + std::to_string(image.height) +
             " below patch size " + std::to_string(ps));

  double sum = 0.0;
  size_t kept = 0;
  std::vector<double> gx, gy;
  for (uint32_t py = 0; py + ps <= image.height; py += ps) {
    for (uint32_t px = 0; px + ps <= image.width; px += ps) {
      gx.clear();
      gy.clear();
      for (uint32_t y = py; y < py + ps; ++y) {
        for (uint32_t x = px; x < px + ps; ++x) {
          // Central differences; image-border pixels have no defined
          // gradient and are left out of the patch matrix.
          if (x == 0 || y == 0 || x + 1 >= image.width || y + 1 >= image.height)
            continue;
          gx.push_back((static_cast<double>(image.at(x + 1, y)) - image.at(x - 1, y)) / 2.0);
          gy.push_back((static_cast<double>(image.at(x, y + 1)) - image.at(x, y - 1)) / 2.0);
        }
      }
      if (gx.empty()) continue;
      // Singular values of the Nx2 gradient matrix via its 2x2 Gram matrix.
      double a = 0.0, b = 0.0, c = 0.0;  // [a b; b c]
      for (size_t i = 0; i < gx.size(); ++i) {
        a += gx[i] * gx[i];
        b += gx[i] * gy[i];
        c += gy[i] * gy[i];
      }
      double trace = a + c;
      if (trace <= 0.0) continue;  // flat patch, no direction
      double disc = std::sqrt(std::max(0.0, (a - c) * (a - c) + 4.0 * b * b));
      double s1 = std::sqrt(std::max(0.0, (trace + disc) / 2.0));
      double s2 = std::sqrt(std::max(0.0, (trace - disc) / 2.0));
      double coherence = (s1 + s2) > 0.0 ? (s1 - s2) / (s1 + s2) : 0.0;
      if (coherence > params.anisotropy_threshold) {
        sum += s1 * coherence;
        ++kept;
      }
    }
  }

  SharpnessScore score;
  score.patch_size = ps;
  score.anisotropy_threshold = params.anisotropy_threshold;
  score.q = kept > 0 ? sum / static_cast<double>(kept) : 0.0;
  return score;
}

double delta_q(const LumaImage& reference, const LumaImage& test, const QParams& params) {
  return std::abs(q_metric(reference, params).q - q_metric(test, params).q);
}

}  // namespace mvsfm
