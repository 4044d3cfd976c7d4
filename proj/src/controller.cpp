#include "risectl/controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Geometry>

#include "risectl/errors.hpp"
#include "risectl/trajectory.hpp"

namespace risectl {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Thresholds declaring the tracked body upright: legs at 95% of full
// extension or better, every joint quieter than 0.1 rad/s, CoM over the feet.
constexpr double kUprightExtension = 0.95;
constexpr double kUprightJointSpeed = 0.1;

// A roll within this angle of face-down is not worth executing.
constexpr double kFaceDownTol = 10.0 * kPi / 180.0;

// Clearance kept under the body while the root is carried around kinematically.
constexpr double kRollClearance = 0.01;

// Simulated-time cap on each settle wait; a body still jittering after this
// long on penalty ground is as settled as it will get.
constexpr double kSettleBudget = 5.0;

// Extra control ticks a swinging limb may spend closing the last few
// centimeters to pin range before the relocation is abandoned.
constexpr int kPinRetryTicks = 12;

// While closing, the contact reference is pushed this far below the ground so
// the servo presses the limb down firmly instead of hovering at touch height.
constexpr double kPressDepth = 0.02;

// A limb may pin only this close (horizontally) to its requested mark;
// anything farther is a missed swing, not a contact.
constexpr double kPinMissRadius = 0.15;

// Pike into a crawl posture: soles travel to their marks over this long, the
// whole maneuver giving up after the budget; the hip reference leads the
// measured body by at most kPikeLead so tracking lag cannot wind it up.
constexpr double kPikeDuration = 1.5;
constexpr double kPikeBudget = 4.0;
constexpr double kPikeLead = 0.06;

// Horizontal CoM-velocity lead (seconds) subtracted from the balance
// reference; roughly the inverted-pendulum time constant sqrt(h/g).
constexpr double kComVelLead = 0.35;

// Rising starts as a push-off: the hands stay pinned this long past the
// phase-2 hand release (bracing the squat while the legs take over), then let
// go one at a time once the CoM is balanced over the feet. A hand lets go
// early if its arm nears full stretch, and unconditionally at the timeout so
// an off-center squat cannot hang on its hands forever.
constexpr double kPushOffTime = 0.8;
constexpr double kPushOffStagger = 0.4;
constexpr double kPushOffTimeout = 3.0;
constexpr double kArmStretchLimit = 0.95;

// The root orientation reference finishes pitching upright this long after
// the hands let go, even if the CoM climb stalls partway.
constexpr double kUprightBlendTime = 2.0;

// Vertical bias added to the rise reference: the servos track a few
// centimeters shy of a loaded target, so an unbiased reference never finishes
// straightening the knees. Applied only once the CoM is balanced over the
// feet, and faded out across the last stretch of leg extension so the push
// stops before it tips the body onto its toes.
constexpr double kClimbPreload = 0.05;
constexpr double kPreloadFade = 0.10;

// Raised internally when the simulated-time budget runs out mid-stage.
struct TimeBudgetExceeded {};

using Clock = std::chrono::steady_clock;

// Standing heading for the root: keep the horizontal bearing the body already
// faces (mixing the face and spine axes so the bearing stays defined from
// prone through upright) and swing its up axis to world up.
Eigen::Quaterniond upright_goal(const Eigen::Quaterniond& q) {
    Eigen::Vector3d h = q * Eigen::Vector3d::UnitX() + q * Eigen::Vector3d::UnitY();
    h.y() = 0.0;
    if (h.norm() < 1e-9) {
        h = Eigen::Vector3d::UnitX();
    } else {
        h.normalize();
    }
    Eigen::Matrix3d r;
    r.col(0) = h;
    r.col(1) = Eigen::Vector3d::UnitY();
    r.col(2) = h.cross(Eigen::Vector3d::UnitY());
    return Eigen::Quaterniond(r).normalized();
}

} // namespace

const char* to_string(RiseOutcome outcome) {
    switch (outcome) {
        case RiseOutcome::Upright: return "Upright";
        case RiseOutcome::Stuck: return "Stuck";
        case RiseOutcome::Diverged: return "Diverged";
        case RiseOutcome::Timeout: return "Timeout";
    }
    return "?";
}

const char* to_string(StartPose id) {
    switch (id) {
        case StartPose::Supine: return "supine";
        case StartPose::Prone: return "prone";
        case StartPose::SideLeft: return "side-left";
        case StartPose::SideRight: return "side-right";
        case StartPose::Crouch: return "crouch";
    }
    return "?";
}

std::optional<StartPose> parse_start_pose(const std::string& name) {
    for (StartPose id : {StartPose::Supine, StartPose::Prone, StartPose::SideLeft,
                         StartPose::SideRight, StartPose::Crouch}) {
        if (name == to_string(id)) return id;
    }
    return std::nullopt;
}

void ControllerConfig::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(what);
    };
    need(settle_linear > 0.0 && settle_angular > 0.0 && settle_hold > 0.0,
         "settle thresholds must be positive");
    need(planner_rate > 0.0 && planner_rate <= 1.0, "planner rate must be in (0, 1]");
    need(convergence_tol > 0.0 && phase2_tol > 0.0 && stall_seconds > 0.0,
         "planner tolerances must be positive");
    need(balance_margin >= 0.0, "balance margin must be non-negative");
    need(lift_height >= 0.0, "lift height must be non-negative");
    need(swing_duration > 0.0 && roll_duration > 0.0, "trajectory durations must be positive");
    need(max_sim_time > 0.0, "max simulated time must be positive");
    need(steps_per_tick >= 1, "steps per tick must be at least 1");
    need(max_iterations >= 1, "iteration budget must be at least 1");
    if (style_enabled) {
        need(style_blend >= 0.0 && style_blend <= 1.0, "style blend must be in [0, 1]");
    }
}

PlannerConfig ControllerConfig::planner_config() const {
    PlannerConfig pc;
    pc.rate = planner_rate;
    pc.convergence_tol = convergence_tol;
    pc.phase2_tol = phase2_tol;
    pc.max_iterations = max_iterations;
    pc.support_margin = balance_margin;
    return pc;
}

bool detect_settled(const std::vector<VelocitySample>& history, const ControllerConfig& config) {
    if (history.empty()) return false;
    const double t_end = history.back().time;
    if (t_end - history.front().time < config.settle_hold) return false;
    const double cutoff = t_end - config.settle_hold;
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->time < cutoff) break;
        if (it->max_linear >= config.settle_linear || it->max_angular >= config.settle_angular) {
            return false;
        }
    }
    return true;
}

Eigen::Quaterniond RollPlan::at(double t) const {
    if (empty()) return start;
    const double a = std::clamp(t / duration, 0.0, 1.0);
    return (Eigen::Quaterniond(Eigen::AngleAxisd(angle * a, axis)) * start).normalized();
}

RollPlan roll_to_front(const CharacterSpec& spec, const SkeletonPose& pose,
                       double seconds_per_half_turn) {
    if (seconds_per_half_turn <= 0.0) throw ConfigError("roll duration must be positive");
    (void)spec;

    RollPlan plan;
    plan.start = pose.root_orientation.normalized();
    plan.goal = plan.start;

    const Eigen::Vector3d spine = plan.start * Eigen::Vector3d::UnitY();
    const Eigen::Vector3d front = plan.start * Eigen::Vector3d::UnitX();
    const Eigen::Vector3d down = -Eigen::Vector3d::UnitY();

    // Roll happens about the spine; compare the face direction with world-down
    // inside the plane normal to it.
    Eigen::Vector3d u = front - front.dot(spine) * spine;
    Eigen::Vector3d v = down - down.dot(spine) * spine;
    // A near-vertical spine means the body is not lying down at all; there is
    // no meaningful "face-down" to roll to.
    if (u.norm() < 1e-6 || v.norm() < 0.2) return plan;
    u.normalize();
    v.normalize();

    const double phi = std::atan2(u.cross(v).dot(spine), u.dot(v));
    if (std::abs(phi) <= kFaceDownTol) return plan;

    plan.axis = spine;
    plan.angle = phi;
    plan.goal = (Eigen::Quaterniond(Eigen::AngleAxisd(phi, spine)) * plan.start).normalized();
    plan.duration = seconds_per_half_turn * std::abs(phi) / kPi;
    return plan;
}

SkeletonPose make_start_pose(const CharacterSpec& spec, StartPose id) {
    SkeletonPose pose = SkeletonPose::neutral(spec);
    // Lying poses share one base rotation: spine along +x, face down.
    const Eigen::Quaterniond lie(Eigen::AngleAxisd(-kPi / 2.0, Eigen::Vector3d::UnitZ()));
    switch (id) {
        case StartPose::Prone:
            pose.root_orientation = lie;
            break;
        case StartPose::Supine:
            pose.root_orientation =
                Eigen::Quaterniond(Eigen::AngleAxisd(kPi, Eigen::Vector3d::UnitX())) * lie;
            break;
        case StartPose::SideLeft:
            pose.root_orientation =
                Eigen::Quaterniond(Eigen::AngleAxisd(-kPi / 2.0, Eigen::Vector3d::UnitX())) * lie;
            break;
        case StartPose::SideRight:
            pose.root_orientation =
                Eigen::Quaterniond(Eigen::AngleAxisd(kPi / 2.0, Eigen::Vector3d::UnitX())) * lie;
            break;
        case StartPose::Crouch:
            // Symmetric squat: thighs swung forward, knees folded, ankles
            // compensating toward flat feet, arms slightly forward.
            for (int e = 0; e < kEndEffectorCount; ++e) {
                const auto& chain = spec.limbs[e];
                if (!chain) continue;
                const bool leg = e == static_cast<int>(EndEffector::LeftFoot) ||
                                 e == static_cast<int>(EndEffector::RightFoot);
                pose.joint_angles[chain->root_dof_start] = leg ? 1.1 : 0.3;
                pose.joint_angles[chain->hinge_dof] = chain->hinge_sign * (leg ? 2.2 : 0.6);
                if (leg && chain->end_link != chain->mid_link &&
                    !spec.links[chain->end_link].dofs.empty()) {
                    pose.joint_angles[spec.dof_index(chain->end_link)] =
                        -(1.1 + chain->hinge_sign * 2.2);
                }
            }
            break;
    }
    clamp_to_limits(spec, pose);
    pose.root_position.y() -= lowest_body_point(spec, pose) - 0.005;
    return pose;
}

namespace {

// One rise attempt: owns the simulation, runs the stages, records frames.
class RiseEngine {
public:
    RiseEngine(const CharacterSpec& spec, const ControllerConfig& config,
               const SimConfig& sim_config)
        : spec_(spec),
          cfg_(config),
          pcfg_(config.planner_config()),
          dt_(sim_config.dt),
          sim_(spec, sim_config),
          rest_(SkeletonPose::neutral(spec).joint_angles) {
        com_mode_ =
            cfg_.com_mode.value_or(spec.planar ? ComMode::GlobalCom : ComMode::HipMidpoint);
    }

    RiseResult run(const SkeletonPose& start) {
        if (auto rod = rod_precheck(spec_); rod.has_value() && !*rod) {
            result_.outcome = RiseOutcome::Stuck;
            result_.message = "single-fold body cannot place its CoM over the foot";
            return finish();
        }
        try {
            sim_.set_pose(start);
            planner_com_target_ = sim_.com();
            settle_stage(kSettleBudget);
            roll_stage();
            plant_stage();
            result_.outcome = planner_loop();
        } catch (const TimeBudgetExceeded&) {
            result_.outcome = RiseOutcome::Timeout;
        } catch (const SimulationDivergedError& e) {
            result_.outcome = RiseOutcome::Diverged;
            result_.message = e.what();
        } catch (const RisectlError& e) {
            result_.outcome = RiseOutcome::Stuck;
            result_.message = e.what();
        }
        return finish();
    }

private:
    // ---- bookkeeping ----

    void guard_budget() const {
        if (sim_.time() >= cfg_.max_sim_time) throw TimeBudgetExceeded{};
    }

    void account(Clock::time_point t0, int steps) {
        const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        wall_ms_ += ms;
        if (steps > 0) max_step_ms_ = std::max(max_step_ms_, ms / steps);
    }

    void record_frame() {
        MotionFrame f;
        f.time = sim_.time();
        f.pose = sim_.pose();
        f.torques = sim_.last_torques();
        f.com = sim_.com();
        const ContactSet contacts = sim_.contacts();
        unsigned mask = 0;
        for (int e = 0; e < kEndEffectorCount; ++e) {
            f.contacts[e] = contacts.is_active(static_cast<EndEffector>(e));
            if (f.contacts[e]) mask |= 1u << e;
        }
        f.phase = label_;
        f.d_c = balance_distance(contacts, mask, f.com);
        result_.frames.push_back(std::move(f));
    }

    double balance_distance(const ContactSet& contacts, unsigned mask,
                            const Eigen::Vector3d& com) {
        if (mask == 0) return -1.0;
        if (mask != region_mask_) {
            const SimplifiedModel model = make_simplified_model(spec_, sim_.pose(), contacts);
            region_ = shrink_region(active_support_region(spec_, model), cfg_.balance_margin);
            region_mask_ = mask;
        }
        return query_balance(region_, com).distance;
    }

    VelocitySample measure_velocity() {
        VelocitySample s;
        s.time = sim_.time();
        for (const LinkState& link : sim_.links()) {
            s.max_linear = std::max(s.max_linear, link.com_velocity.norm());
            s.max_angular = std::max(s.max_angular, link.angular_velocity.norm());
        }
        return s;
    }

    // ---- reference mapping ----

    Eigen::Quaterniond root_reference() {
        const Eigen::Quaterniond measured = sim_.pose().root_orientation.normalized();
        if (static_cast<int>(state_.phase) < static_cast<int>(RisePhase::Phase2_Rise)) {
            return measured;
        }
        // Pitch the root upright in proportion to the height gained, with a
        // time floor so the torso keeps uncurling even if the climb pauses.
        const double span = std::max(kUprightExtension * stand_height_ - phase2_y0_, 1e-6);
        const double by_height = std::clamp((sim_.com().y() - phase2_y0_) / span, 0.0, 1.0);
        const double by_time =
            hands_free_t_ < 0.0
                ? 0.0
                : std::clamp((sim_.time() - hands_free_t_) / kUprightBlendTime, 0.0, 1.0);
        return measured.slerp(std::max(by_height, by_time), upright_goal(measured)).normalized();
    }

    ReferencePose base_reference() {
        ReferencePose ref;
        ref.com_mode = com_mode_;
        ref.root_orientation = root_reference();
        if (com_mode_ == ComMode::GlobalCom) {
            ref.com = planner_com_target_;
        } else {
            // Steer the hip midpoint by the displacement the planner wants
            // from the measured CoM.
            const SkeletonPose pose = sim_.pose();
            const Eigen::Vector3d hips =
                (Eigen::Translation3d(pose.root_position) * pose.root_orientation) *
                hip_midpoint_local(spec_);
            ref.com = hips + (planner_com_target_ - sim_.com());
        }
        if (static_cast<int>(state_.phase) >= static_cast<int>(RisePhase::Phase2_Rise)) {
            // Horizontal capture-point style braking: lead the reference
            // against the CoM velocity so the body decelerates instead of
            // pendulum-ing across the support region.
            const Eigen::Vector3d v = sim_.com_velocity();
            ref.com.x() -= kComVelLead * v.x();
            ref.com.z() -= kComVelLead * v.z();
            ref.com.y() += kClimbPreload * preload_scale_;
        }
        for (const Contact& c : sim_.contacts().active_contacts()) {
            ref.limbs[static_cast<int>(c.id)] = LimbTarget{c.position, true, 0.0};
        }
        return ref;
    }

    void tick_ref(const ReferencePose& ref) {
        guard_budget();
        const auto t0 = Clock::now();
        SkeletonPose seed = sim_.pose();
        seed.joint_angles = rest_;
        SkeletonPose targets = map_reference(spec_, seed, ref);
        if (cfg_.style_enabled && cfg_.style_angles.size() == targets.joint_angles.size()) {
            targets = apply_secondary_style(spec_, targets, cfg_.style_angles, cfg_.style_blend);
        }
        sim_.set_targets(targets);
        for (int i = 0; i < cfg_.steps_per_tick; ++i) {
            sim_.step();
            record_frame();
        }
        account(t0, cfg_.steps_per_tick);
    }

    // ---- stages ----

    void settle_stage(double budget) {
        sim_.set_targets(sim_.pose()); // hold the current articulation
        std::vector<VelocitySample> history;
        const double t0 = sim_.time();
        while (sim_.time() - t0 < budget) {
            guard_budget();
            const auto w0 = Clock::now();
            for (int i = 0; i < cfg_.steps_per_tick; ++i) {
                sim_.step();
                record_frame();
                history.push_back(measure_velocity());
            }
            account(w0, cfg_.steps_per_tick);
            if (detect_settled(history, cfg_)) return;
        }
    }

    void roll_stage() {
        const RollPlan plan = roll_to_front(spec_, sim_.pose(), cfg_.roll_duration);
        if (plan.empty()) return;

        // Limbs pull toward the neutral pose with hinges slightly bent so
        // nothing snags while the root is carried around.
        SkeletonPose tuck = sim_.pose();
        tuck.joint_angles = rest_;
        for (const auto& chain : spec_.limbs) {
            if (!chain) continue;
            tuck.joint_angles[chain->hinge_dof] = chain->hinge_sign * 0.3;
        }
        clamp_to_limits(spec_, tuck);
        sim_.set_targets(tuck);

        sim_.set_root_prescribed(true);
        const double t0 = sim_.time();
        const Eigen::Vector3d base = sim_.pose().root_position;
        while (sim_.time() - t0 < plan.duration - 1e-9) {
            guard_budget();
            const auto w0 = Clock::now();
            const Eigen::Quaterniond orn = plan.at(sim_.time() - t0 + dt_);
            SkeletonPose probe = sim_.pose();
            probe.root_position = base;
            probe.root_orientation = orn;
            Eigen::Vector3d pos = base;
            pos.y() -= lowest_body_point(spec_, probe) - kRollClearance;
            sim_.drive_root(pos, orn);
            sim_.step();
            record_frame();
            account(w0, 1);
        }
        sim_.set_root_prescribed(false);
        settle_stage(2.0);
    }

    // Feet already under the body with the CoM balanced over them (a crouch):
    // skip the crawl entirely and rise in place.
    bool crouch_shortcut() {
        for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) {
            if (!spec_.has_end_effector(ee)) return false;
            if (sim_.end_effector(ee).y() > 0.03) return false;
        }
        ContactSet probe;
        for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) {
            Eigen::Vector3d p = sim_.end_effector(ee);
            p.y() = 0.0;
            probe.set(ee, p, true);
        }
        const SimplifiedModel model = make_simplified_model(spec_, sim_.pose(), probe);
        const SupportRegion feet =
            shrink_region(feet_support_region(spec_, model), cfg_.balance_margin);
        if (!query_balance(feet, sim_.com()).inside) return false;
        for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) sim_.pin(ee);
        state_.phase = RisePhase::Phase2_Rise;
        state_.support_hand = SupportHand::None;
        label_ = RisePhase::Phase2_Rise;
        return true;
    }

    void plant_stage() {
        if (crouch_shortcut()) return;
        const PlannerReference ref = plan_start_pose(spec_, sim_.pose());
        planner_com_target_ = sim_.com(); // hold the weight while the hands relocate

        // Hands first: they are reachable from the lying pose and brace the
        // chest for the pike that follows. A limb that cannot be planted
        // leaves the phase machine waiting in Phase 0, where the iteration
        // budget reports Stuck honestly.
        for (EndEffector ee : {EndEffector::LeftHand, EndEffector::RightHand}) {
            const int e = static_cast<int>(ee);
            if (!spec_.has_end_effector(ee) || !ref.limb_targets[e]) continue;
            if (sim_.contacts().is_active(ee)) continue;
            swing_limb(ee, *ref.limb_targets[e]);
        }

        // With the pelvis on the ground the knees cannot fold the soles back
        // under the hips, so rise into a pike while the feet draw in: weight
        // stays on the planted hands and the shins while the soles travel.
        double leg_reach = 0.0;
        std::vector<EndEffector> pending;
        for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) {
            const int e = static_cast<int>(ee);
            if (!spec_.has_end_effector(ee) || !ref.limb_targets[e]) continue;
            if (sim_.contacts().is_active(ee)) continue;
            const auto& chain = spec_.limbs[e];
            if (chain && chain->root_dof_count > 0) {
                pending.push_back(ee);
                leg_reach = std::max(leg_reach, chain->l1 + chain->l2);
            } else {
                swing_limb(ee, *ref.limb_targets[e]);
            }
        }
        if (pending.empty()) return;

        const double hip_goal = 0.5 * leg_reach;
        std::array<LimbPath, kEndEffectorCount> paths;
        for (EndEffector ee : pending) {
            const int e = static_cast<int>(ee);
            paths[e] = make_path(sim_.end_effector(ee), *ref.limb_targets[e], cfg_.lift_height,
                                 kPikeDuration);
        }
        const double t0 = sim_.time();
        while (!pending.empty() && sim_.time() - t0 < kPikeBudget) {
            // Lead the hip reference a bounded step above the measured state;
            // an absolute ramp runs away from a lagging body and flings it.
            const SkeletonPose pose = sim_.pose();
            const double hips_y =
                ((Eigen::Translation3d(pose.root_position) * pose.root_orientation) *
                 hip_midpoint_local(spec_))
                    .y();
            const double lead = std::clamp(hip_goal - hips_y, 0.0, kPikeLead);
            planner_com_target_ = sim_.com() + Eigen::Vector3d(0.0, lead, 0.0);

            const double tau_goal =
                std::min(sim_.time() - t0 + cfg_.steps_per_tick * dt_, kPikeDuration);
            const bool closing = tau_goal >= kPikeDuration - 1e-9;
            ReferencePose r = base_reference();
            for (EndEffector ee : pending) {
                const int e = static_cast<int>(ee);
                Eigen::Vector3d point = eval_path(paths[e], tau_goal);
                if (closing) point.y() = -kPressDepth;
                r.limbs[e] = LimbTarget{point, closing, 0.0};
            }
            tick_ref(r);

            if (!closing) continue;
            for (auto it = pending.begin(); it != pending.end();) {
                const Eigen::Vector3d at = sim_.end_effector(*it);
                const Eigen::Vector3d want = *ref.limb_targets[static_cast<int>(*it)];
                bool planted = false;
                if (std::hypot(at.x() - want.x(), at.z() - want.z()) <= kPinMissRadius) {
                    try {
                        sim_.pin(*it);
                        planted = true;
                    } catch (const PinTooFarError&) {
                    }
                }
#ifdef RISECTL_PLANT_DEBUG
                fprintf(stderr, "pike foot %d %s at (%.3f %.3f %.3f) tgt=(%.3f %.3f %.3f) t=%.2f\n",
                        static_cast<int>(*it), planted ? "ok" : "wait", at.x(), at.y(), at.z(),
                        want.x(), want.y(), want.z(), sim_.time());
#endif
                it = planted ? pending.erase(it) : it + 1;
            }
        }
        // Anything still loose gets one last individual try; an honest failure
        // leaves Phase 0 waiting and the iteration budget reports Stuck.
        for (EndEffector ee : pending) {
            swing_limb(ee, *ref.limb_targets[static_cast<int>(ee)]);
        }
    }

    bool swing_limb(EndEffector ee, const Eigen::Vector3d& target) {
        const LimbPath path =
            make_path(sim_.end_effector(ee), target, cfg_.lift_height, cfg_.swing_duration);
        const double t0 = sim_.time();
        int extra = 0;
        while (true) {
            const double tau = sim_.time() - t0;
            const double tau_goal = std::min(tau + cfg_.steps_per_tick * dt_, path.duration);
            const bool closing = tau_goal >= path.duration - 1e-9;
            Eigen::Vector3d point = eval_path(path, tau_goal);
            // Press past touch height once the swing is spent, so the servo
            // loads the contact instead of hovering at the threshold.
            if (closing) point.y() = -kPressDepth;
            ReferencePose ref = base_reference();
            ref.limbs[static_cast<int>(ee)] = LimbTarget{point, closing, 0.0};
            tick_ref(ref);
            if (sim_.time() - t0 >= path.duration - 1e-9) {
                const Eigen::Vector3d at = sim_.end_effector(ee);
                const double miss = std::hypot(at.x() - target.x(), at.z() - target.z());
                if (miss <= kPinMissRadius) {
                    try {
                        sim_.pin(ee);
#ifdef RISECTL_PLANT_DEBUG
                        fprintf(stderr, "pin %d ok at (%.3f %.3f %.3f) t=%.2f\n",
                                static_cast<int>(ee), at.x(), at.y(), at.z(), sim_.time());
#endif
                        return true;
                    } catch (const PinTooFarError&) {
                    }
                }
#ifdef RISECTL_PLANT_DEBUG
                fprintf(stderr, "pin %d wait at (%.3f %.3f %.3f) tgt=(%.3f %.3f %.3f) t=%.2f\n",
                        static_cast<int>(ee), at.x(), at.y(), at.z(), target.x(), target.y(),
                        target.z(), sim_.time());
#endif
                if (++extra > kPinRetryTicks) return false;
            }
        }
    }

    void release_hands_for_rise(bool centered) {
        const EndEffector hands[2] = {EndEffector::LeftHand, EndEffector::RightHand};
        for (int i = 0; i < 2; ++i) {
            const EndEffector hand = hands[i];
            if (!sim_.contacts().is_active(hand)) continue;
            const double held = sim_.time() - phase2_t0_;
            bool release = (centered && held >= kPushOffTime + i * kPushOffStagger) ||
                           held >= kPushOffTimeout + i * kPushOffStagger;
            const auto& chain = spec_.limbs[static_cast<int>(hand)];
            if (!release && chain) {
                // A taut arm would start fighting the climb: let go early.
                const Eigen::Vector3d shoulder =
                    link_transform(spec_, sim_.pose(), chain->root_link).translation();
                double reach = chain->l1 + chain->l2;
                if (spec_.has_end_effector(hand)) {
                    reach += spec_.end_effectors[static_cast<int>(hand)]->local_offset.norm();
                }
                release =
                    (shoulder - sim_.end_effector(hand)).norm() >= kArmStretchLimit * reach;
            }
            if (release) sim_.release(hand);
        }
        if (hands_free_t_ < 0.0 && !sim_.contacts().is_active(EndEffector::LeftHand) &&
            !sim_.contacts().is_active(EndEffector::RightHand)) {
            hands_free_t_ = sim_.time();
        }
    }

    bool execute_swap(const HandSwapEvent& event) {
        planner_com_target_ = sim_.com(); // keep the weight put mid-swing
        if (sim_.contacts().is_active(event.moving_hand)) sim_.release(event.moving_hand);
        const bool planted = swing_limb(event.moving_hand, event.target);
        if (planted && event.releasing_hand != event.moving_hand &&
            sim_.contacts().is_active(event.releasing_hand)) {
            sim_.release(event.releasing_hand);
        }
        return planted;
    }

    bool physically_upright() {
        const SkeletonPose pose = sim_.pose();
        const SimplifiedModel model = make_simplified_model(spec_, pose, sim_.contacts());
        bool any_leg = false;
        for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) {
            if (!spec_.has_end_effector(ee)) continue;
            const auto& chain = spec_.limbs[static_cast<int>(ee)];
            double extension = 0.0;
            if (chain) {
                const Eigen::Vector3d hip =
                    link_transform(spec_, pose, chain->root_link).translation();
                const Eigen::Vector3d tip =
                    chain->end_link != chain->mid_link
                        ? link_transform(spec_, pose, chain->end_link).translation()
                        : end_effector_world(spec_, pose, ee);
                extension = (tip - hip).norm() / std::max(chain->l1 + chain->l2, 1e-9);
            } else {
                // No analytic chain (single-fold bodies): measure the band.
                const SimplifiedLimb& limb = model.limb(ee);
                if (!limb.attached) return false;
                extension = (model.com - limb.anchor).norm() / std::max(model.d_lmax, 1e-9);
            }
            if (extension < kUprightExtension) return false;
            any_leg = true;
        }
        if (!any_leg) return false;
        try {
            if (!query_balance(feet_support_region(spec_, model), sim_.com()).inside) {
                return false;
            }
        } catch (const NoSupportError&) {
            return false;
        }
        const int nj = spec_.joint_dof_count();
        if (nj > 0 && sim_.velocity().tail(nj).cwiseAbs().maxCoeff() >= kUprightJointSpeed) {
            return false;
        }
        return true;
    }

    RiseOutcome planner_loop() {
        double best_remaining = std::numeric_limits<double>::infinity();
        double last_progress = sim_.time();
        bool phase2_prepared = false;
        while (true) {
            const ContactSet contacts = sim_.contacts();
            SimplifiedModel model = make_simplified_model(spec_, sim_.pose(), contacts);
            const SupportRegion feet =
                shrink_region(feet_support_region(spec_, model), cfg_.balance_margin);

            const RisePhase before = state_.phase;
            state_ = advance_phase(state_, model, feet, pcfg_); // throws StuckError
            if (state_.phase != before) {
                label_ = state_.phase;
                best_remaining = std::numeric_limits<double>::infinity();
                last_progress = sim_.time();
            }
            if (!phase2_prepared &&
                static_cast<int>(state_.phase) >= static_cast<int>(RisePhase::Phase2_Rise)) {
                phase2_prepared = true;
                phase2_t0_ = sim_.time();
                phase2_y0_ = model.com.y();
                stand_height_ = model.d_lmax;
            }
            if (phase2_prepared) {
                // Rising is planned on the legs alone, but physically the
                // hands push off: they stay pinned until the CoM is balanced
                // over the feet and then let go staggered (or as soon as the
                // arm nears full stretch) so the squat is never dropped all
                // at once.
                const bool centered = query_balance(feet, model.com).inside;
                double max_leg = 0.0;
                for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) {
                    const SimplifiedLimb& leg = model.limb(ee);
                    if (leg.present && leg.attached) {
                        max_leg = std::max(max_leg, (model.com - leg.anchor).norm());
                    }
                }
                preload_scale_ =
                    centered
                        ? std::clamp((stand_height_ - max_leg) / kPreloadFade, 0.0, 1.0)
                        : 0.0;
                release_hands_for_rise(centered);
                for (EndEffector hand : {EndEffector::LeftHand, EndEffector::RightHand}) {
                    model.limb(hand).attached = false;
                }
            }

            if (state_.pending_swap) {
                const HandSwapEvent event = *state_.pending_swap;
                if (execute_swap(event)) {
                    state_ = apply_hand_swap(state_, event);
                    ++result_.swap_count;
                } else {
                    // Could not plant there; drop the request and let the
                    // segment re-converge (the budget bounds the retries).
                    state_.pending_swap.reset();
                    state_.converged = false;
                }
                best_remaining = std::numeric_limits<double>::infinity();
                last_progress = sim_.time();
                continue;
            }

            if (state_.phase == RisePhase::Phase1_ShiftCom) {
                const auto [next, converged] =
                    optimize_phase1_step(model, feet, cfg_.planner_rate, cfg_.convergence_tol);
                planner_com_target_ = next.com;
                // Tracking error keeps the measured CoM a little short of the
                // optimum; treat a stalled gap as converged so the swap/phase
                // logic still fires.
                const double remaining =
                    (next.com - model.com).norm() / std::max(cfg_.planner_rate, 1e-9);
                if (remaining < best_remaining - 1e-3) {
                    best_remaining = remaining;
                    last_progress = sim_.time();
                }
                state_.converged =
                    converged || (sim_.time() - last_progress > cfg_.stall_seconds);
            } else if (state_.phase == RisePhase::Phase2_Rise) {
                const auto [next, done] =
                    optimize_phase2_step(model, feet, cfg_.planner_rate, cfg_.phase2_tol);
                planner_com_target_ = next.com;
                (void)done; // advance_phase re-evaluates completion off the tracked state
#ifdef RISECTL_LOOP_DEBUG
                const auto& ll = model.limb(EndEffector::LeftFoot);
                const auto& rl = model.limb(EndEffector::RightFoot);
                fprintf(stderr,
                        "[loop] t=%.2f ph2 com=(%.3f %.3f %.3f) tgt=(%.3f %.3f %.3f) "
                        "legL=%.3f legR=%.3f d_lmax=%.3f dc=%.4f aL=(%.3f %.3f) aR=(%.3f %.3f) "
                        "iter=%d\n",
                        sim_.time(), model.com.x(), model.com.y(), model.com.z(), next.com.x(),
                        next.com.y(), next.com.z(), (model.com - ll.anchor).norm(),
                        (model.com - rl.anchor).norm(), model.d_lmax,
                        query_balance(feet, model.com).distance, ll.anchor.x(), ll.anchor.z(),
                        rl.anchor.x(), rl.anchor.z(), state_.iteration_count);
#endif
            }
            // Phase 0 (waiting on plants) and Complete hold the last target.

            const bool complete = state_.phase == RisePhase::Complete;
            tick_ref(base_reference());
            if (complete && physically_upright()) return RiseOutcome::Upright;
        }
    }

    RiseResult finish() {
        for (const MotionFrame& f : result_.frames) {
            if (f.phase == RisePhase::Complete) {
                result_.time_to_stand = f.time;
                break;
            }
        }
        for (const MotionFrame& f : result_.frames) {
            if (static_cast<int>(f.phase) >= static_cast<int>(RisePhase::Phase1_ShiftCom)) {
                result_.max_dc = std::max(result_.max_dc, f.d_c);
            }
        }
        if (!result_.frames.empty()) {
            result_.mean_step_ms = wall_ms_ / static_cast<double>(result_.frames.size());
        }
        result_.max_step_ms = max_step_ms_;
        return std::move(result_);
    }

    const CharacterSpec& spec_;
    ControllerConfig cfg_;
    PlannerConfig pcfg_;
    double dt_;
    ArticulatedSim sim_;
    Eigen::VectorXd rest_;
    ComMode com_mode_ = ComMode::HipMidpoint;

    RiseResult result_;
    PhaseState state_;
    RisePhase label_ = RisePhase::Phase0_StartPose;
    Eigen::Vector3d planner_com_target_ = Eigen::Vector3d::Zero();
    double phase2_t0_ = 0.0;
    double phase2_y0_ = 0.0;
    double hands_free_t_ = -1.0;
    double preload_scale_ = 0.0;
    double stand_height_ = 1.0;

    SupportRegion region_;
    unsigned region_mask_ = ~0u;

    double wall_ms_ = 0.0;
    double max_step_ms_ = 0.0;
};

} // namespace

RiseResult run_rise(const CharacterSpec& spec, const SkeletonPose& start,
                    const ControllerConfig& config, const SimConfig& sim_config) {
    config.validate();
    RiseEngine engine(spec, config, sim_config);
    return engine.run(start);
}

} // namespace risectl
