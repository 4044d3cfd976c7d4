#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "risectl/character.hpp"
#include "risectl/geometry.hpp"
#include "risectl/ik.hpp"
#include "risectl/kinematics.hpp"
#include "risectl/planner.hpp"
#include "risectl/sim.hpp"

namespace risectl {

enum class RiseOutcome : int { Upright = 0, Stuck = 1, Diverged = 2, Timeout = 3 };
const char* to_string(RiseOutcome outcome);

// Closed-loop tuning knobs. The planner re-reads the simulated state once per
// control tick; all planner-side tolerances here are the closed-loop values
// (looser than the pure point-mass defaults, since the tracked body sags a
// little below its reference).
struct ControllerConfig {
    double settle_linear = 0.05;   // m/s link-speed ceiling counting as "at rest"
    double settle_angular = 0.3;   // rad/s link angular-speed ceiling
    double settle_hold = 0.5;      // s the body must stay below both ceilings
    double planner_rate = 0.05;    // fraction of remaining CoM distance per tick
    double convergence_tol = 2e-3; // m per-tick CoM step ending a shift segment
    double stall_seconds = 2.0;    // s without measurable progress also ends one
    double phase2_tol = 0.05;      // m leg-extension slack accepted as standing
    double balance_margin = 0.02;  // m support-region shrink for balance checks
    double lift_height = 0.08;     // m swing apex above the straight-line path
    double swing_duration = 0.4;   // s per limb relocation
    double roll_duration = 1.5;    // s per half turn of the initial roll
    // CoM handle for the reference mapper; unset picks GlobalCom for planar
    // rigs and HipMidpoint otherwise.
    std::optional<ComMode> com_mode;
    bool style_enabled = false;    // blend style angles into no-effect DOFs
    Eigen::VectorXd style_angles;  // full joint-angle vector; masked internally
    double style_blend = 0.5;
    double max_sim_time = 60.0;    // s simulated-time budget
    int steps_per_tick = 5;        // simulation steps per control tick
    int max_iterations = 200;      // planner ticks per phase segment

    void validate() const; // throws ConfigError on nonpositive budgets/thresholds
    PlannerConfig planner_config() const;
};

// One simulation step of recorded motion. d_c is the horizontal distance of
// the body CoM from the margin-shrunk hull of the pinned contacts (0 when
// balanced over it, -1 while nothing is pinned).
struct MotionFrame {
    double time = 0.0;
    SkeletonPose pose;
    Eigen::VectorXd torques;
    Eigen::Vector3d com = Eigen::Vector3d::Zero();
    std::array<bool, kEndEffectorCount> contacts{};
    RisePhase phase = RisePhase::Phase0_StartPose;
    double d_c = 0.0;
};

// Worst link speeds at one instant, the unit the settle detector consumes.
struct VelocitySample {
    double time = 0.0;
    double max_linear = 0.0;  // fastest link CoM speed, m/s
    double max_angular = 0.0; // fastest link angular speed, rad/s
};

// True iff every sample in the trailing `settle_hold` seconds of `history`
// stays strictly below both thresholds. False while the recorded span is still
// shorter than the hold time, and false again as soon as any sample inside the
// trailing window moves — a body that slid and then stopped reads as settled
// only once the whole hold window postdates the stop.
bool detect_settled(const std::vector<VelocitySample>& history, const ControllerConfig& config);

// Root-orientation trajectory that rolls a lying body face-down about its
// spine axis, the shortest way around. Duration scales with the roll angle.
struct RollPlan {
    double angle = 0.0;    // signed roll, radians
    double duration = 0.0; // seconds; 0 marks a no-op plan
    Eigen::Vector3d axis = Eigen::Vector3d::UnitX(); // world-frame spine axis
    Eigen::Quaterniond start = Eigen::Quaterniond::Identity();
    Eigen::Quaterniond goal = Eigen::Quaterniond::Identity();

    bool empty() const { return duration <= 0.0; }
    Eigen::Quaterniond at(double t) const; // clamped interpolation start->goal
};

// Plan the face-down roll for the posed body. Returns an empty plan when the
// body already lies within 10 degrees of face-down, or when it is upright
// enough that "face-down" loses meaning (spine near vertical).
RollPlan roll_to_front(const CharacterSpec& spec, const SkeletonPose& pose,
                       double seconds_per_half_turn = 1.5);

// Procedural start-pose library: canonical lying/crouching poses generated
// from the character's own dimensions.
enum class StartPose : int { Supine = 0, Prone = 1, SideLeft = 2, SideRight = 3, Crouch = 4 };
const char* to_string(StartPose id);
std::optional<StartPose> parse_start_pose(const std::string& name);
SkeletonPose make_start_pose(const CharacterSpec& spec, StartPose id);

struct RiseResult {
    RiseOutcome outcome = RiseOutcome::Timeout;
    std::vector<MotionFrame> frames;
    double time_to_stand = -1.0; // first Complete-phase frame time; -1 if none
    int swap_count = 0;
    double mean_step_ms = 0.0;   // wall-clock per simulation step, control included
    double max_step_ms = 0.0;
    double max_dc = 0.0;         // worst d_c over frames past the preparation phase
    std::string message;         // diagnostic for Stuck/Diverged
};

// The full closed loop: settle, roll face-down, plant hands and feet, walk the
// CoM to the feet (relocating the free hand when the arm runs out of band),
// then rise to standing — every planner reference mapped through the analytic
// IK and tracked by the joint servos, with the planner re-reading the
// simulated CoM and contacts each tick.
RiseResult run_rise(const CharacterSpec& spec, const SkeletonPose& start,
                    const ControllerConfig& config = {}, const SimConfig& sim_config = {});

} // namespace risectl
