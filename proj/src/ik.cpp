#include "risectl/ik.hpp"

#include <cmath>

namespace risectl {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_angle(double a) {
    while (a > kPi) a -= 2.0 * kPi;
    while (a < -kPi) a += 2.0 * kPi;
    return a;
}

// Interior bend angle from the straightened configuration for a two-segment
// chain spanning distance d. 0 = fully extended, pi = folded back on itself.
double bend_for_distance(double l1, double l2, double d) {
    const double c = std::clamp((l1 * l1 + l2 * l2 - d * d) / (2.0 * l1 * l2), -1.0, 1.0);
    return kPi - std::acos(c);
}

} // namespace

TwoLinkIK solve_two_link(const Eigen::Vector3d& root, const Eigen::Vector3d& target, double l1,
                         double l2, double plane_angle, const Eigen::Vector3d& reference) {
    if (!(l1 > 0.0) || !(l2 > 0.0)) throw ConfigError("two-link solve needs positive lengths");

    TwoLinkIK out;
    Eigen::Vector3d delta = target - root;
    double d = delta.norm();
    const double d_min = std::abs(l1 - l2);
    const double d_max = l1 + l2;
    out.at_reach_limit = (d < d_min || d > d_max);
    Eigen::Vector3d axis;
    if (d < 1e-12) {
        axis = Eigen::Vector3d::UnitX(); // direction is arbitrary for a coincident target
    } else {
        axis = delta / d;
    }
    d = std::clamp(d, d_min, d_max);

    // In-plane frame: u at plane_angle = 0, rotated about the root->target axis.
    Eigen::Vector3d u = reference - reference.dot(axis) * axis;
    if (u.norm() < 1e-9) {
        const Eigen::Vector3d alt = std::abs(axis.x()) < 0.9 ? Eigen::Vector3d::UnitX()
                                                             : Eigen::Vector3d::UnitY();
        u = alt - alt.dot(axis) * axis;
    }
    u.normalize();
    const Eigen::Vector3d v = axis.cross(u);
    const Eigen::Vector3d perp = std::cos(plane_angle) * u + std::sin(plane_angle) * v;

    // Root interior angle places the hinge off the root->target axis.
    const double cos_alpha =
        std::clamp((l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d), -1.0, 1.0);
    const double alpha = std::acos(cos_alpha);
    out.mid = root + l1 * (std::cos(alpha) * axis + std::sin(alpha) * perp);
    out.hinge_angle = bend_for_distance(l1, l2, d);

    // Frame carrying the limb: first segment along -y of the rest frame, hinge
    // axis along +z (the plane normal).
    const Eigen::Vector3d dir1 = (out.mid - root).normalized();
    const Eigen::Vector3d normal = axis.cross(perp).normalized();
    Eigen::Matrix3d frame;
    frame.col(1) = -dir1;
    frame.col(2) = normal;
    frame.col(0) = frame.col(1).cross(frame.col(2));
    out.root_rotation = Eigen::Quaterniond(frame);
    return out;
}

Eigen::Vector3d hip_midpoint_local(const CharacterSpec& spec) {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    int n = 0;
    for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) {
        const auto& chain = spec.limbs[static_cast<int>(ee)];
        if (!chain.has_value() || chain->root_dof_count == 0) continue;
        // Leg chains hang off the root link directly in all supported rigs.
        sum += spec.links[chain->root_link].parent_offset;
        ++n;
    }
    return n > 0 ? Eigen::Vector3d(sum / n) : Eigen::Vector3d::Zero();
}

namespace {

void clamp_dof(const DofSpec& dof, double& angle) {
    angle = std::clamp(wrap_angle(angle), dof.min_angle, dof.max_angle);
}

// Solve one limb chain so the point `q` — a fixed point in the mid-link frame,
// measured from the hinge joint — reaches `target` (world), writing joint
// angles into `pose`. Root joint axes are the canonical pitch-about-z /
// roll-about-x pair (or pitch only); the hinge bends about z. Passing
// q = (0, -l2, 0) recovers the plain two-link solve onto the distal joint.
void solve_limb(const CharacterSpec& spec, SkeletonPose& pose, const LimbChain& chain,
                const Eigen::Vector3d& target, const Eigen::Vector3d& q) {
    const LinkSpec& root_link = spec.links[chain.root_link];
    const LinkSpec& mid_link = spec.links[chain.mid_link];

    if (chain.root_dof_count == 0) {
        // Hinge-only limb (two-segment rod): aim the distal segment at the
        // target around its single axis.
        const Eigen::Isometry3d parent_tf = link_transform(spec, pose, mid_link.parent);
        const Eigen::Vector3d origin = parent_tf * mid_link.parent_offset;
        const Eigen::Vector3d t = parent_tf.rotation().transpose() * (target - origin);
        double angle = std::atan2(-t.x(), t.y());
        clamp_dof(mid_link.dofs[0], angle);
        pose.joint_angles[chain.hinge_dof] = angle;
        return;
    }

    const Eigen::Isometry3d parent_tf = link_transform(spec, pose, root_link.parent);
    const Eigen::Vector3d origin = parent_tf * root_link.parent_offset;
    Eigen::Vector3d t = parent_tf.rotation().transpose() * (target - origin);

    const double lq = std::max(q.norm(), 1e-9);
    double d = t.norm();
    const double d_min = std::abs(chain.l1 - lq);
    const double d_max = chain.l1 + lq;
    if (d < 1e-12) {
        t = Eigen::Vector3d(0.0, -std::max(d_min, 1e-9), 0.0);
        d = t.norm();
    } else if (d < d_min || d > d_max) {
        const double dc = std::clamp(d, d_min, d_max);
        t *= dc / d;
        d = dc;
    }

    // Law of cosines against the oblique distal point: |(0,-l1,0) + Rz(h)q|
    // equals d at h = phi ± acos(c); the hinge sign picks the branch.
    const double c = std::clamp(
        (d * d - chain.l1 * chain.l1 - lq * lq) / (2.0 * chain.l1 * lq), -1.0, 1.0);
    const double phi = std::atan2(-q.x(), -q.y());
    double hinge = wrap_angle(phi + chain.hinge_sign * std::acos(c));
    clamp_dof(mid_link.dofs[0], hinge);
    pose.joint_angles[chain.hinge_dof] = hinge;

    // End point in the limb-root frame before the root joint rotation: the
    // chain hangs along -y with the hinge folding it about z.
    const Eigen::Vector3d v = Eigen::Vector3d(0.0, -chain.l1, 0.0) +
                              Eigen::AngleAxisd(hinge, Eigen::Vector3d::UnitZ()) * q;

    double pitch = 0.0, roll = 0.0;
    if (chain.root_dof_count >= 2) {
        // R = Rz(pitch) * Rx(roll): roll supplies the lateral component, pitch
        // the in-plane direction. Branch chosen to keep roll near zero.
        const double m = std::max(std::hypot(v.y(), v.z()), 1e-12);
        const double delta = std::atan2(v.z(), v.y());
        const double sr = std::clamp(t.z() / m, -1.0, 1.0);
        roll = wrap_angle(kPi - std::asin(sr) - delta);
        const double wy = v.y() * std::cos(roll) - v.z() * std::sin(roll);
        pitch = std::atan2(t.y(), t.x()) - std::atan2(wy, v.x());
    } else {
        pitch = std::atan2(t.y(), t.x()) - std::atan2(v.y(), v.x());
    }
    clamp_dof(root_link.dofs[0], pitch);
    pose.joint_angles[chain.root_dof_start] = pitch;
    if (chain.root_dof_count >= 2) {
        clamp_dof(root_link.dofs[1], roll);
        pose.joint_angles[chain.root_dof_start + 1] = roll;
    }
}

// Horizontal forward direction of the body (fallback +x when the root faces
// straight up or down).
Eigen::Vector3d horizontal_forward(const SkeletonPose& pose) {
    Eigen::Vector3d fwd = pose.root_orientation * Eigen::Vector3d::UnitX();
    fwd.y() = 0.0;
    if (fwd.norm() < 1e-6) fwd = Eigen::Vector3d::UnitX();
    return fwd.normalized();
}

// World orientation a planted foot should hold: sole flat on the ground,
// toes along the body's forward direction.
Eigen::Matrix3d flat_foot_rotation(const SkeletonPose& pose) {
    const Eigen::Vector3d fwd = horizontal_forward(pose);
    Eigen::Matrix3d desired;
    desired.col(0) = fwd;
    desired.col(1) = Eigen::Vector3d::UnitY();
    desired.col(2) = desired.col(0).cross(desired.col(1)).normalized();
    return desired;
}

// World orientation a planted hand should hold: palm flat on the ground,
// fingers (the link's -y, where the contact point sits) pointing forward.
Eigen::Matrix3d flat_hand_rotation(const SkeletonPose& pose) {
    const Eigen::Vector3d fwd = horizontal_forward(pose);
    Eigen::Matrix3d desired;
    desired.col(1) = -fwd;
    desired.col(2) = Eigen::Vector3d::UnitY();
    desired.col(0) = desired.col(1).cross(desired.col(2)).normalized();
    return desired;
}

// Orient a planted end link (sole or palm) to the desired world rotation by
// back-solving its DOFs against the parent segment's orientation.
void flatten_end_link(const CharacterSpec& spec, SkeletonPose& pose, const LimbChain& chain,
                      const Eigen::Matrix3d& desired) {
    if (chain.end_link == chain.mid_link) return;
    const LinkSpec& end = spec.links[chain.end_link];
    if (end.dofs.empty()) return;

    const Eigen::Matrix3d parent_rot = link_transform(spec, pose, chain.mid_link).rotation();
    const Eigen::Matrix3d rel = parent_rot.transpose() * desired;

    const int base = spec.dof_index(chain.end_link);
    if (end.dofs.size() == 1) {
        double a = std::atan2(rel(1, 0), rel(0, 0));
        clamp_dof(end.dofs[0], a);
        pose.joint_angles[base] = a;
        return;
    }
    if (end.dofs.size() == 3) {
        // Canonical pitch(z) / roll(x) / yaw(y) triple.
        Eigen::Vector3d e = rel.eulerAngles(2, 0, 1);
        for (int i = 0; i < 3; ++i) {
            double a = e[i];
            clamp_dof(end.dofs[i], a);
            pose.joint_angles[base + i] = a;
        }
    }
}

void solve_all_limbs(const CharacterSpec& spec, SkeletonPose& pose, const ReferencePose& ref) {
    for (int e = 0; e < kEndEffectorCount; ++e) {
        if (!ref.limbs[e].has_value()) continue;
        const auto& chain = spec.limbs[e];
        if (!chain.has_value()) continue; // effector fixed to the body (rod base)
        const auto ee = static_cast<EndEffector>(e);
        const bool is_foot = ee == EndEffector::LeftFoot || ee == EndEffector::RightFoot;
        const bool flatten = ref.limbs[e]->plant && chain->end_link != chain->mid_link;
        const Eigen::Vector3d offset = spec.end_effectors[e]->local_offset;

        // The chain solve positions a point rigid in the mid-link frame, so
        // fold the contact point's offset into the solve exactly: the end
        // link's DOFs are known up front (held seed values, or the planted
        // flat orientation, which is independent of the chain solution).
        Eigen::Vector3d want = ref.limbs[e]->position;
        Eigen::Vector3d q;
        Eigen::Matrix3d flat = Eigen::Matrix3d::Identity();
        if (flatten) {
            flat = is_foot ? flat_foot_rotation(pose) : flat_hand_rotation(pose);
            q = spec.links[chain->end_link].parent_offset;
            want -= flat * offset;
        } else if (chain->end_link == chain->mid_link) {
            q = offset;
        } else {
            const LinkSpec& end = spec.links[chain->end_link];
            q = end.parent_offset +
                joint_rotation(end, pose.joint_angles, spec.dof_index(chain->end_link)) * offset;
        }
        solve_limb(spec, pose, *chain, want, q);
        if (flatten) flatten_end_link(spec, pose, *chain, flat);
    }
}

} // namespace

SkeletonPose map_reference(const CharacterSpec& spec, const SkeletonPose& seed,
                           const ReferencePose& ref, bool* converged) {
    SkeletonPose pose = seed;
    pose.root_orientation = ref.root_orientation.normalized();
    if (converged != nullptr) *converged = true;

    if (ref.com_mode == ComMode::HipMidpoint) {
        pose.root_position =
            ref.com - pose.root_orientation * hip_midpoint_local(spec);
        solve_all_limbs(spec, pose, ref);
        return pose;
    }

    // GlobalCom: limb targets are world-fixed, so each root shift changes the
    // limb fold, which moves the CoM again; iterate to a fixed point.
    bool ok = false;
    for (int iter = 0; iter < 20; ++iter) {
        solve_all_limbs(spec, pose, ref);
        const Eigen::Vector3d err = ref.com - compute_body_com(spec, pose);
        pose.root_position += err;
        if (err.norm() < 1e-4) {
            ok = true;
            break;
        }
    }
    solve_all_limbs(spec, pose, ref);
    if (converged != nullptr) *converged = ok;
    return pose;
}

std::vector<bool> style_dof_mask(const CharacterSpec& spec) {
    // A DOF is styleable only if moving it cannot displace any end-effector,
    // i.e. its link is not an ancestor (or carrier) of any end-effector link.
    std::vector<bool> mask(spec.joint_dof_count(), true);
    for (int e = 0; e < kEndEffectorCount; ++e) {
        const auto& ee = spec.end_effectors[e];
        if (!ee.has_value()) continue;
        for (int link = ee->link; link != -1; link = spec.links[link].parent) {
            const int base = spec.dof_index(link);
            for (size_t i = 0; i < spec.links[link].dofs.size(); ++i) {
                mask[base + static_cast<int>(i)] = false;
            }
        }
    }
    return mask;
}

SkeletonPose apply_secondary_style(const CharacterSpec& spec, const SkeletonPose& base,
                                   const Eigen::VectorXd& style_angles, double blend) {
    if (style_angles.size() != base.joint_angles.size()) {
        throw ConfigError("style vector size does not match the character's joint DOF count");
    }
    SkeletonPose out = base;
    const std::vector<bool> mask = style_dof_mask(spec);
    const double w = std::clamp(blend, 0.0, 1.0);
    int k = 0;
    for (const LinkSpec& l : spec.links) {
        for (const DofSpec& d : l.dofs) {
            if (mask[k]) {
                out.joint_angles[k] = std::clamp(
                    (1.0 - w) * base.joint_angles[k] + w * style_angles[k], d.min_angle,
                    d.max_angle);
            }
            ++k;
        }
    }
    return out;
}

} // namespace risectl
