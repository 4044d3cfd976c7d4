#include "risectl/trajectory.hpp"

#include <algorithm>
#include <cmath>

namespace risectl {

LimbPath make_path(const Eigen::Vector3d& from, const Eigen::Vector3d& to, double lift,
                   double duration) {
    if (!(duration > 0.0)) throw ConfigError("swing duration must be positive");
    if (lift < 0.0) throw ConfigError("swing lift must be non-negative");
    LimbPath path;
    path.p0 = from;
    path.p1 = from + Eigen::Vector3d(0.0, lift, 0.0);
    path.p2 = to + Eigen::Vector3d(0.0, lift, 0.0);
    path.p3 = to;
    path.duration = duration;
    path.lift = lift;
    return path;
}

Eigen::Vector3d eval_path(const LimbPath& path, double t) {
    const double u = std::clamp(t / path.duration, 0.0, 1.0);
    const double s = u * u * (3.0 - 2.0 * u); // smoothstep: zero slope at both ends
    if (s == 0.0) return path.p0;             // keep endpoints bit-exact
    if (s == 1.0) return path.p3;
    const double v = 1.0 - s;
    return v * v * v * path.p0 + 3.0 * v * v * s * path.p1 + 3.0 * v * s * s * path.p2 +
           s * s * s * path.p3;
}

Eigen::Vector3d eval_path_velocity(const LimbPath& path, double t) {
    const double h = 1e-6 * path.duration;
    const Eigen::Vector3d a = eval_path(path, std::max(0.0, t - h));
    const Eigen::Vector3d b = eval_path(path, std::min(path.duration, t + h));
    return (b - a) / (std::min(path.duration, t + h) - std::max(0.0, t - h));
}

} // namespace risectl
