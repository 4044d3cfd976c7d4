#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "risectl/geometry.hpp"

namespace risectl {

// One servoed rotational degree of freedom. Multi-DOF joints are chains of
// these applied in order, each axis expressed in the frame produced by the
// previous rotation.
struct DofSpec {
    std::string name;
    Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
    double min_angle = -3.1415926535897931;
    double max_angle = 3.1415926535897931;
    double kp = 0.0;           // filled by derive_servo_gains when left at 0
    double kd = 0.0;
    double torque_limit = 0.0;
    double rest_angle = 0.0;   // neutral target used when a limb is unconstrained
};

// A rigid link. The link frame origin sits at the joint that connects it to its
// parent; the root link's frame is placed directly by the pose. Collision and
// inertia use a single box per link.
struct LinkSpec {
    std::string name;
    int parent = -1;                                   // -1 only for links[0]
    Eigen::Vector3d parent_offset = Eigen::Vector3d::Zero(); // joint origin in parent frame
    double length = 0.0;                               // geometric long dimension
    double mass = 0.0;
    Eigen::Vector3d box_center = Eigen::Vector3d::Zero();    // box center in link frame
    Eigen::Vector3d half_extents = Eigen::Vector3d::Zero();
    std::vector<DofSpec> dofs;                         // empty for the root link
};

struct EndEffectorSpec {
    int link = -1;
    Eigen::Vector3d local_offset = Eigen::Vector3d::Zero(); // contact point in link frame
};

// Analytic description of a two-link limb for the reference mapper: a 1- or
// 2-DOF root joint (hip/shoulder), a single hinge (knee/elbow), and the point
// the two-link solve targets (ankle/wrist, or the end-effector itself when the
// skeleton has no distal link).
struct LimbChain {
    EndEffector effector = EndEffector::LeftFoot;
    int root_link = -1;       // thigh / upper arm
    int mid_link = -1;        // shin / forearm
    int end_link = -1;        // foot / hand; may equal mid_link
    int root_dof_start = 0;   // global joint-DOF index of the limb root's first DOF
    int root_dof_count = 2;   // 2 for ball-like hips/shoulders, 1 for planar
    int hinge_dof = 0;        // global joint-DOF index of the knee/elbow
    double hinge_sign = 1.0;  // +1 elbows (bend forward), -1 knees (bend back)
    double l1 = 0.0;          // root joint to hinge
    double l2 = 0.0;          // hinge to solve target point
};

struct CharacterSpec {
    std::string name;
    std::vector<LinkSpec> links; // links[0] is the root
    double shoulder_width = 0.0;
    double hip_width = 0.0;
    std::array<std::optional<EndEffectorSpec>, kEndEffectorCount> end_effectors;
    std::array<std::optional<LimbChain>, kEndEffectorCount> limbs;
    bool planar = false; // sagittal variant: all joint axes lateral, GlobalCom IK default

    int link_count() const { return static_cast<int>(links.size()); }
    int joint_dof_count() const;          // sum over links
    int dof_count() const { return 6 + joint_dof_count(); } // + free root (velocity DOF)
    int dof_index(int link) const;        // global index of a link's first joint DOF
    int link_of_dof(int dof) const;
    double total_mass() const;
    const EndEffectorSpec& end_effector(EndEffector ee) const;
    bool has_end_effector(EndEffector ee) const {
        return end_effectors[static_cast<int>(ee)].has_value();
    }

    // Structural validation: tree shape, positive masses, ordered limits,
    // end-effector references. Throws ConfigError.
    void validate() const;
};

// Canonical builders. Dimensions are human-like; gains and limb chains are
// derived automatically.
CharacterSpec make_biped15();
CharacterSpec make_biped9();
CharacterSpec make_planar12();
// Two-link rod with uniform density; foot at the lower tip, hand at the upper tip.
CharacterSpec make_rod(double lower_length, double upper_length);

// Uniformly scaled copy: lengths/offsets/widths scale by s, masses by s^3;
// gains are re-derived.
CharacterSpec scaled(const CharacterSpec& spec, double s);

// Fill kp/kd/torque_limit for every DOF left at zero: kp = omega0^2 * I_sub,
// kd = 2*zeta*omega0*I_sub (I_sub = distal subtree inertia about the DOF axis
// in the neutral pose), torque_limit = strength * gravity-holding torque.
void derive_servo_gains(CharacterSpec& spec, double omega0 = 20.0, double zeta = 1.0,
                        double strength = 10.0);

// Derive the analytic limb chains from topology and end-effector declarations.
void derive_limb_chains(CharacterSpec& spec);

// JSON character file I/O (schema documented in docs/character_format.md).
CharacterSpec load_character_file(const std::string& path);
CharacterSpec parse_character_json(const std::string& text);
std::string character_to_json(const CharacterSpec& spec);
void save_character_file(const CharacterSpec& spec, const std::string& path);

// Builtin lookup used by the CLI: "biped15", "biped9", "planar12",
// "rod:<lower>:<upper>". Returns nullopt for unknown names.
std::optional<CharacterSpec> builtin_character(const std::string& name);

} // namespace risectl
