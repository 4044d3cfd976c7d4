#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "risectl/character.hpp"

namespace risectl {

// Generalized positions for a character: free root plus one angle per joint DOF.
struct SkeletonPose {
    Eigen::Vector3d root_position = Eigen::Vector3d::Zero();
    Eigen::Quaterniond root_orientation = Eigen::Quaterniond::Identity();
    Eigen::VectorXd joint_angles; // size = spec.joint_dof_count()

    static SkeletonPose neutral(const CharacterSpec& spec);
};

// Clamp every joint angle to its CharacterSpec limits in place.
void clamp_to_limits(const CharacterSpec& spec, SkeletonPose& pose);
bool within_limits(const CharacterSpec& spec, const SkeletonPose& pose, double tol = 0.0);

// Local joint rotation of one link: the product of its DOF axis rotations at
// the given angles (first_dof = spec.dof_index(link)).
Eigen::Matrix3d joint_rotation(const LinkSpec& link, const Eigen::VectorXd& angles,
                               int first_dof);

// World transform of every link frame (origin at the link's parent joint).
std::vector<Eigen::Isometry3d> link_transforms(const CharacterSpec& spec,
                                               const SkeletonPose& pose);

// World transform of a single link (computes only the ancestor chain).
Eigen::Isometry3d link_transform(const CharacterSpec& spec, const SkeletonPose& pose, int link);

// World position of an end-effector contact point.
Eigen::Vector3d end_effector_world(const CharacterSpec& spec, const SkeletonPose& pose,
                                   EndEffector ee);

// Mass-weighted body center of mass (box centers).
Eigen::Vector3d compute_body_com(const CharacterSpec& spec, const SkeletonPose& pose);

// World-space corners of a link's collision box.
std::array<Eigen::Vector3d, 8> link_box_corners(const CharacterSpec& spec,
                                                const Eigen::Isometry3d& link_tf, int link);

// Lowest world-space point over all link boxes for the posed body.
double lowest_body_point(const CharacterSpec& spec, const SkeletonPose& pose);

} // namespace risectl
