#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Geometry>

#include "risectl/character.hpp"
#include "risectl/geometry.hpp"
#include "risectl/kinematics.hpp"

namespace risectl {

struct SimConfig {
    double dt = 0.01;               // fixed integration step (s)
    double gravity = 9.81;          // m/s^2, along -y
    double ground_stiffness = 1.5e5; // N/m per penetrating box corner
    double ground_damping = 1500.0;  // N*s/m normal damping (handled implicitly)
    double friction = 1.2;          // tangential force cap as multiple of normal force
    double tangent_damping = 500.0; // N*s/m viscous tangential (clamped by friction)
    double velocity_limit = 150.0;  // any |v| beyond this counts as divergence
    int pin_sweeps = 12;            // Gauss-Seidel sweeps for pin projection
    double pin_tolerance = 1e-5;    // m, position-projection stop (drift << 1e-4)
};

// One joint servo's parameters, independent of any particular character DOF.
struct JointServo {
    double kp = 0.0;           // N*m/rad
    double kd = 0.0;           // N*m*s/rad
    double target = 0.0;       // desired angle (rad)
    double torque_limit = 0.0; // N*m, must be > 0
};

// Clamped PD torque law: clamp(kp*(target - theta) - kd*theta_dot, +/-limit).
double servo_torque(const JointServo& servo, double theta, double theta_dot);

// Per-link world-frame state refreshed every step (box-center velocity etc.).
struct LinkState {
    Eigen::Isometry3d transform = Eigen::Isometry3d::Identity();
    Eigen::Vector3d com = Eigen::Vector3d::Zero();
    Eigen::Vector3d com_velocity = Eigen::Vector3d::Zero();
    Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();
};

// Reduced-coordinate articulated rigid-body simulation: free 6-DOF root plus
// servoed joint DOFs. Ground contact is a per-corner penalty (implicit normal
// damping); planted end-effectors are bilateral point pins enforced by velocity
// and position projection. Joint damping integrates implicitly, PD servo
// torques are explicit and clamped. Deterministic for identical call sequences.
class ArticulatedSim {
public:
    explicit ArticulatedSim(const CharacterSpec& spec, const SimConfig& config = {});

    const CharacterSpec& spec() const { return spec_; }
    const SimConfig& config() const { return config_; }

    // State access. set_pose zeroes velocities and re-anchors nothing (pins keep
    // their anchors; re-pin explicitly if the pose teleports planted limbs).
    void set_pose(const SkeletonPose& pose);
    const SkeletonPose& pose() const { return pose_; }
    void set_velocity(const Eigen::VectorXd& v); // size 6 + joint count
    const Eigen::VectorXd& velocity() const { return vel_; }
    double time() const { return time_; }

    // Servo targets: desired joint angles (root part of the pose is ignored).
    void set_targets(const SkeletonPose& target);
    const Eigen::VectorXd& targets() const { return target_angles_; }

    // Prescribed-root mode: the root follows drive_root exactly (infinite mass)
    // while the joints stay dynamic. Used for the kinematic roll-over.
    void set_root_prescribed(bool on);
    bool root_prescribed() const { return root_prescribed_; }
    void drive_root(const Eigen::Vector3d& position, const Eigen::Quaterniond& orientation);

    // Contact pins. Newly pinned end-effectors anchor at their current world
    // position projected onto the ground; throws PinTooFarError if the
    // end-effector hovers more than 0.05 m above/below the plane.
    void set_contacts(const std::array<bool, kEndEffectorCount>& pinned);
    void pin(EndEffector ee);
    void release(EndEffector ee);
    const ContactSet& contacts() const { return pins_; }

    // Advance one fixed step. Throws SimulationDivergedError on blow-up/NaN.
    void step();

    // Queries.
    Eigen::Vector3d com() const;
    Eigen::Vector3d com_velocity() const;
    Eigen::Vector3d end_effector(EndEffector ee) const;
    Eigen::Vector3d end_effector_velocity(EndEffector ee) const;
    const std::vector<LinkState>& links() const { return link_states_; }
    const Eigen::VectorXd& last_torques() const { return last_torques_; }
    double max_pin_error() const; // current worst anchor distance (m)

    // Energy bookkeeping (used by dissipation checks).
    double kinetic_energy() const;
    double potential_energy() const;

private:
    struct DofInfo {
        int link = 0;
        int index_in_link = 0;
        const DofSpec* spec = nullptr;
    };

    void refresh_kinematics();
    void check_finite() const;
    Eigen::Vector3d point_velocity(int link, const Eigen::Vector3d& p) const;
    void point_jacobian(int link, const Eigen::Vector3d& p, Eigen::MatrixXd& jac) const;
    Eigen::MatrixXd mass_matrix() const;
    Eigen::VectorXd bias_forces() const;
    void apply_generalized_displacement(const Eigen::VectorXd& dq);
    void project_pins_velocity(const Eigen::LDLT<Eigen::MatrixXd>& solver);
    void project_pins_position(const Eigen::LDLT<Eigen::MatrixXd>& solver);
    void clamp_joint_limits();

    CharacterSpec spec_;
    SimConfig config_;
    int nj_ = 0; // joint DOF count
    int nv_ = 0; // 6 + nj_

    SkeletonPose pose_;
    Eigen::VectorXd vel_;
    Eigen::VectorXd target_angles_;
    Eigen::VectorXd last_torques_;
    double time_ = 0.0;

    bool root_prescribed_ = false;
    Eigen::Vector3d driven_pos_ = Eigen::Vector3d::Zero();
    Eigen::Quaterniond driven_orn_ = Eigen::Quaterniond::Identity();
    bool have_drive_ = false;

    ContactSet pins_;

    // Cached per-step kinematics.
    std::vector<DofInfo> dofs_;
    std::vector<std::vector<int>> ancestor_dofs_; // per link, global joint-dof ids
    std::vector<Eigen::Isometry3d> link_tf_;
    std::vector<Eigen::Vector3d> dof_axis_world_;
    std::vector<Eigen::Vector3d> dof_origin_world_;
    std::vector<LinkState> link_states_;
};

} // namespace risectl
