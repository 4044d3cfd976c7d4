#pragma once

#include <Eigen/Core>

#include "risectl/errors.hpp"

namespace risectl {

// Cubic Bezier swing path for a limb end-effector. Control points lift the
// interior of the swing by `lift` along +y; time is reparameterized with a
// smoothstep so velocity is zero at both ends.
struct LimbPath {
    Eigen::Vector3d p0, p1, p2, p3;
    double duration = 0.0;
    double lift = 0.0;
};

// Build a swing from `from` to `to`. duration must be positive; lift may be 0
// (degenerate straight-line path). Throws ConfigError on invalid parameters.
LimbPath make_path(const Eigen::Vector3d& from, const Eigen::Vector3d& to, double lift,
                   double duration);

// Evaluate at time t (clamped to [0, duration]). Endpoints reproduce the inputs
// exactly: eval(0) == from, eval(duration) == to bit-for-bit.
Eigen::Vector3d eval_path(const LimbPath& path, double t);

// Finite-difference velocity, used by tests and the swing scheduler.
Eigen::Vector3d eval_path_velocity(const LimbPath& path, double t);

} // namespace risectl
