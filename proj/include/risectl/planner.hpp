#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "risectl/character.hpp"
#include "risectl/geometry.hpp"
#include "risectl/kinematics.hpp"

namespace risectl {

// Rise phases, in the order they run. Phase 0 settles the body into a
// comfortable all-fours start; Phase 1 walks the CoM toward the feet (swapping
// the support hand when the arm runs out of reach); Phase 2 raises the CoM to
// full leg extension over the feet.
enum class RisePhase : int {
    Phase0_StartPose = 0,
    Phase1_ShiftCom = 1,
    Phase2_Rise = 2,
    Complete = 3,
};
const char* to_string(RisePhase phase);

enum class SupportHand : int { None = 0, Left = 1, Right = 2 };
const char* to_string(SupportHand hand);

// One telescopic mass-less limb of the point-mass model: a ground anchor plus
// an attachment flag. `present` is false when the character simply has no such
// end-effector (e.g. the two-link rod has one foot and one hand).
struct SimplifiedLimb {
    Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
    bool attached = false;
    bool present = true;
};

// Point mass with four telescopic limbs. Legs share one [d_lmin, d_lmax]
// length band, arms share [d_amin, d_amax]; an attached limb's |com - anchor|
// must stay inside its band after every planner step.
struct SimplifiedModel {
    double mass = 1.0;
    Eigen::Vector3d com = Eigen::Vector3d::Zero();
    std::array<SimplifiedLimb, kEndEffectorCount> limbs;
    double d_lmin = 0.1;
    double d_lmax = 1.0;
    double d_amin = 0.1;
    double d_amax = 1.0;

    SimplifiedLimb& limb(EndEffector ee) { return limbs[static_cast<int>(ee)]; }
    const SimplifiedLimb& limb(EndEffector ee) const { return limbs[static_cast<int>(ee)]; }

    double limb_min(EndEffector ee) const;
    double limb_max(EndEffector ee) const;

    // Worst attached-limb band violation in meters (0 when all bands hold).
    double bound_violation() const;
    std::vector<EndEffector> attached() const;
};

// Build the point-mass model off a posed character: mass and CoM from the
// pose, anchors from end-effector world positions (contact positions for
// attached limbs), length bands from the character's proportions measured in
// the neutral pose. Two-link rod characters get their exact fold-geometry
// bands instead of the generic limb-chain bands.
SimplifiedModel make_simplified_model(const CharacterSpec& spec, const SkeletonPose& pose,
                                      const ContactSet& contacts);

// A pending free-hand relocation: swing `moving_hand` to `target`, plant it,
// then release `releasing_hand`. `clamped` marks a target that had to be
// pulled back to the arm's reach band.
struct HandSwapEvent {
    EndEffector moving_hand = EndEffector::LeftHand;
    EndEffector releasing_hand = EndEffector::RightHand;
    Eigen::Vector3d target = Eigen::Vector3d::Zero();
    bool clamped = false;
};

struct PhaseState {
    RisePhase phase = RisePhase::Phase0_StartPose;
    // A designated hand exists whenever the planner is still using the arms
    // (everything before Phase 2); the initial value is a nominal choice that
    // choose_support_hand revises when Phase 1 begins.
    SupportHand support_hand = SupportHand::Right;
    std::optional<HandSwapEvent> pending_swap;
    int iteration_count = 0;
    bool converged = false; // last Phase-1 step moved the CoM less than the tolerance
};

// One planner output consumed by the reference mapper: a CoM target, optional
// new limb anchor targets, and the set of contacts to release this step.
struct PlannerReference {
    Eigen::Vector3d com_target = Eigen::Vector3d::Zero();
    std::array<std::optional<Eigen::Vector3d>, kEndEffectorCount> limb_targets;
    std::array<bool, kEndEffectorCount> release{};
    int roll_direction = 0; // +-1 when a side-lying body must roll before planting
    bool clamped = false;
};

struct PlannerConfig {
    double rate = 0.05;            // fraction of remaining distance per planner step
    double convergence_tol = 1e-4; // per-step CoM displacement marking convergence
    double phase2_tol = 1e-3;      // leg-extension tolerance completing Phase 2
    int max_iterations = 200;      // per-phase step budget before StuckError
    double swap_clearance = 0.25;  // lateral hand offset from the CoM, metres
    double support_margin = 0.02;  // support-region shrink for balance checks, metres
};

// Comfortable four-contact start targets for a lying body: hands beside the
// chest at half the shoulder width, feet beside the pelvis at half the hip
// width, all measured laterally from the torso axis on the ground plane so
// same-side targets never cross the sagittal plane. For a body lying on its
// side, roll_direction reports which way to roll first (0 otherwise).
PlannerReference plan_start_pose(const CharacterSpec& spec, const SkeletonPose& lying);

// Constrained CoM optimum for Phase 1: the point minimizing horizontal
// distance to `region` subject to every attached limb's length band, found by
// alternating region pulls with band projections. Throws
// InfeasibleConstraintsError when the bands admit no common point.
Eigen::Vector3d solve_com_optimum(const SimplifiedModel& model, const SupportRegion& region);

// One Phase-1 step: interpolate the CoM toward the constrained optimum by
// `rate`, re-projecting onto the length bands. Returns the stepped model and
// whether the step converged (displacement below tolerance).
std::pair<SimplifiedModel, bool> optimize_phase1_step(const SimplifiedModel& model,
                                                      const SupportRegion& region, double rate,
                                                      double convergence_tol = 1e-4);

// Relocation target for the free hand: the CoM ground projection offset to the
// free hand's side of the body by `clearance` meters, clamped to the arm band.
PlannerReference plan_hand_swap(const SimplifiedModel& model, const PhaseState& state,
                                double clearance);

// One Phase-2 step: raise the CoM toward full leg extension while keeping its
// ground projection inside the feet region. Returns the stepped model and
// whether both legs reached d_lmax within `phase2_tol`.
std::pair<SimplifiedModel, bool> optimize_phase2_step(const SimplifiedModel& model,
                                                      const SupportRegion& feet_region,
                                                      double rate, double phase2_tol = 1e-3);

// Initial support hand: the attached hand whose retention admits the smaller
// constrained d_c; ties pick the right hand.
SupportHand choose_support_hand(const SimplifiedModel& model, const SupportRegion& feet_region);

// Phase transition logic. Pure: returns the next state, incrementing the
// per-phase iteration count and throwing StuckError past the budget.
PhaseState advance_phase(const PhaseState& state, const SimplifiedModel& model,
                         const SupportRegion& feet_region, const PlannerConfig& config = {});

// State bookkeeping after a pending swap's hand has been replanted.
PhaseState apply_hand_swap(const PhaseState& state, const HandSwapEvent& event);

// A body reduced to one folding joint can only place its CoM over the foot
// when the upper segment is longer than the lower one but shorter than twice
// its length. Throws ConfigError unless both lengths are positive.
bool check_rod_feasibility(double lower_len, double upper_len);

// check_rod_feasibility applied to a character when (and only when) it has the
// two-link single-fold shape; nullopt for everything else.
std::optional<bool> rod_precheck(const CharacterSpec& spec);

// Ground patch under the attached feet: hull of per-foot rectangles sized by
// each foot link's box footprint around its anchor.
SupportRegion feet_support_region(const CharacterSpec& spec, const SimplifiedModel& model);

// Ground patch under everything currently attached: the feet patch extended by
// any attached hand anchors. Throws NoSupportError when nothing is attached.
SupportRegion active_support_region(const CharacterSpec& spec, const SimplifiedModel& model);

enum class PlanOutcome { Complete = 0, Stuck = 1 };
const char* to_string(PlanOutcome outcome);

// Result of a pure point-mass rollout (no articulated dynamics).
struct PlanTrace {
    PlanOutcome outcome = PlanOutcome::Stuck;
    RisePhase final_phase = RisePhase::Phase0_StartPose;
    std::vector<double> converged_dc; // d_c at successive Phase-1 convergence events
    int swap_count = 0;
    std::vector<Eigen::Vector3d> com_path;
};

// Run the phase machine on the point-mass model alone, starting from a lying
// body with all contacts planted at their start targets, swaps applied
// instantly. Used to study planner progress independent of the simulation.
PlanTrace run_plan(const CharacterSpec& spec, const PlannerConfig& config = {});

} // namespace risectl
