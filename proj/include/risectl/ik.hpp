#pragma once

#include <array>
#include <optional>

#include "risectl/character.hpp"
#include "risectl/kinematics.hpp"

namespace risectl {

// Closed-form two-link reach on an abstract limb: root joint at a fixed point,
// two segments l1/l2, a single hinge between them. The family of solutions for
// a reachable target is parameterized by the plane containing the limb; the
// plane is selected by `plane_angle`, measured about the root->target axis
// from a reference direction (the component of `reference` orthogonal to the
// axis; world -y by default).
struct TwoLinkIK {
    Eigen::Vector3d mid;                  // hinge joint position
    double hinge_angle;                   // bend from straight, >= 0 (0 = extended)
    Eigen::Quaterniond root_rotation;     // maps the rest frame (limb along -y,
                                          // hinge axis +z) onto the solved limb
    bool at_reach_limit;                  // target clamped into the reachable annulus
};

TwoLinkIK solve_two_link(const Eigen::Vector3d& root, const Eigen::Vector3d& target, double l1,
                         double l2, double plane_angle = 0.0,
                         const Eigen::Vector3d& reference = -Eigen::Vector3d::UnitY());

// One limb's goal within a whole-body reference: a world-space point for the
// limb end-effector, and whether the end link should be oriented flat for
// ground contact.
struct LimbTarget {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    bool plant = false;
    // Requested limb-plane angle. Two-DOF roots fully determine the plane, so
    // this only steers rigs with a spare root DOF; kept for interface parity
    // with solve_two_link.
    double plane_angle = 0.0;
};

// How the reference CoM position is interpreted when placing the root.
enum class ComMode {
    HipMidpoint, // place the hip midpoint at the reference point (fast proxy)
    GlobalCom,   // place the true whole-body CoM there (fixed-point iteration)
};

struct ReferencePose {
    Eigen::Vector3d com = Eigen::Vector3d::Zero();
    Eigen::Quaterniond root_orientation = Eigen::Quaterniond::Identity();
    std::array<std::optional<LimbTarget>, kEndEffectorCount> limbs;
    ComMode com_mode = ComMode::HipMidpoint;
};

// Hip midpoint in the root-link frame (midpoint of the leg-chain root joints).
Eigen::Vector3d hip_midpoint_local(const CharacterSpec& spec);

// Map a task-space reference onto joint angles. Joint limits are respected
// (targets outside the reachable set are met as closely as possible). DOFs not
// involved in a targeted limb chain keep their seed values. In GlobalCom mode
// `converged` (when given) reports whether the CoM fixed point reached 1e-4 m.
SkeletonPose map_reference(const CharacterSpec& spec, const SkeletonPose& seed,
                           const ReferencePose& ref, bool* converged = nullptr);

// DOFs that secondary styling may touch: only those that cannot displace any
// end-effector (e.g. the neck). Returns a mask over joint DOFs.
std::vector<bool> style_dof_mask(const CharacterSpec& spec);

// Blend styling angles into the maskable DOFs; limb-chain DOFs are preserved
// bit for bit. `blend` = 0 returns `base` unchanged, 1 adopts the style fully.
SkeletonPose apply_secondary_style(const CharacterSpec& spec, const SkeletonPose& base,
                                   const Eigen::VectorXd& style_angles, double blend);

} // namespace risectl
