#include "risectl/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace risectl {

SkeletonPose SkeletonPose::neutral(const CharacterSpec& spec) {
    SkeletonPose pose;
    pose.root_position = Eigen::Vector3d::Zero();
    pose.root_orientation = Eigen::Quaterniond::Identity();
    pose.joint_angles = Eigen::VectorXd::Zero(spec.joint_dof_count());
    int k = 0;
    for (const LinkSpec& l : spec.links) {
        for (const DofSpec& d : l.dofs) pose.joint_angles[k++] = d.rest_angle;
    }
    return pose;
}

void clamp_to_limits(const CharacterSpec& spec, SkeletonPose& pose) {
    int k = 0;
    for (const LinkSpec& l : spec.links) {
        for (const DofSpec& d : l.dofs) {
            pose.joint_angles[k] = std::clamp(pose.joint_angles[k], d.min_angle, d.max_angle);
            ++k;
        }
    }
}

bool within_limits(const CharacterSpec& spec, const SkeletonPose& pose, double tol) {
    int k = 0;
    for (const LinkSpec& l : spec.links) {
        for (const DofSpec& d : l.dofs) {
            const double a = pose.joint_angles[k++];
            if (a < d.min_angle - tol || a > d.max_angle + tol) return false;
        }
    }
    return true;
}

// Joint rotation for a link: the product of its DOF axis rotations in
// declaration order (applied left to right, so the first DOF is outermost).
Eigen::Matrix3d joint_rotation(const LinkSpec& link, const Eigen::VectorXd& angles,
                               int first_dof) {
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    for (size_t i = 0; i < link.dofs.size(); ++i) {
        r = r * Eigen::AngleAxisd(angles[first_dof + static_cast<int>(i)],
                                  link.dofs[i].axis).toRotationMatrix();
    }
    return r;
}

std::vector<Eigen::Isometry3d> link_transforms(const CharacterSpec& spec,
                                               const SkeletonPose& pose) {
    std::vector<Eigen::Isometry3d> tf(spec.link_count());
    tf[0] = Eigen::Isometry3d::Identity();
    tf[0].linear() = pose.root_orientation.toRotationMatrix();
    tf[0].translation() = pose.root_position;
    for (int i = 1; i < spec.link_count(); ++i) {
        const LinkSpec& l = spec.links[i];
        Eigen::Isometry3d local = Eigen::Isometry3d::Identity();
        local.translation() = l.parent_offset;
        local.linear() = joint_rotation(l, pose.joint_angles, spec.dof_index(i));
        tf[i] = tf[l.parent] * local;
    }
    return tf;
}

Eigen::Isometry3d link_transform(const CharacterSpec& spec, const SkeletonPose& pose, int link) {
    // Walk the ancestor chain only; cheaper than full FK for a single query.
    std::vector<int> chain;
    for (int l = link; l != -1; l = spec.links[l].parent) chain.push_back(l);
    Eigen::Isometry3d tf = Eigen::Isometry3d::Identity();
    tf.linear() = pose.root_orientation.toRotationMatrix();
    tf.translation() = pose.root_position;
    for (auto it = chain.rbegin() + 1; it != chain.rend(); ++it) {
        const LinkSpec& l = spec.links[*it];
        Eigen::Isometry3d local = Eigen::Isometry3d::Identity();
        local.translation() = l.parent_offset;
        local.linear() = joint_rotation(l, pose.joint_angles, spec.dof_index(*it));
        tf = tf * local;
    }
    return tf;
}

Eigen::Vector3d end_effector_world(const CharacterSpec& spec, const SkeletonPose& pose,
                                   EndEffector ee) {
    const EndEffectorSpec& e = spec.end_effector(ee);
    return link_transform(spec, pose, e.link) * e.local_offset;
}

Eigen::Vector3d compute_body_com(const CharacterSpec& spec, const SkeletonPose& pose) {
    const auto tf = link_transforms(spec, pose);
    Eigen::Vector3d weighted = Eigen::Vector3d::Zero();
    double mass = 0.0;
    for (int i = 0; i < spec.link_count(); ++i) {
        weighted += spec.links[i].mass * (tf[i] * spec.links[i].box_center);
        mass += spec.links[i].mass;
    }
    return weighted / mass;
}

std::array<Eigen::Vector3d, 8> link_box_corners(const CharacterSpec& spec,
                                                const Eigen::Isometry3d& link_tf, int link) {
    const LinkSpec& l = spec.links[link];
    std::array<Eigen::Vector3d, 8> out;
    int k = 0;
    for (int sx : {-1, 1}) {
        for (int sy : {-1, 1}) {
            for (int sz : {-1, 1}) {
                const Eigen::Vector3d local =
                    l.box_center + Eigen::Vector3d(sx * l.half_extents.x(),
                                                   sy * l.half_extents.y(),
                                                   sz * l.half_extents.z());
                out[k++] = link_tf * local;
            }
        }
    }
    return out;
}

double lowest_body_point(const CharacterSpec& spec, const SkeletonPose& pose) {
    const auto tf = link_transforms(spec, pose);
    double low = std::numeric_limits<double>::infinity();
    for (int i = 0; i < spec.link_count(); ++i) {
        for (const Eigen::Vector3d& c : link_box_corners(spec, tf[i], i)) {
            low = std::min(low, c.y());
        }
    }
    return low;
}

} // namespace risectl
