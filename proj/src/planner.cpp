#include "risectl/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace risectl {

namespace {

constexpr double kLegMinFraction = 0.35; // crouch floor: shortest useful CoM-to-foot distance
constexpr double kArmMinFraction = 0.30; // folded-arm floor as a fraction of full reach
// A planted palm is useful up to this fraction of the straight-line press
// reach (CoM-to-shoulder plus arm length). Full extension would put the
// shoulder, elbow and CoM exactly colinear, which a body can hold only in a
// perfect plank; beyond this fraction the support does no work and the hand
// must step closer instead.
constexpr double kArmExtensionFactor = 0.5;
constexpr double kBandTol = 1e-6;        // attached-limb band tolerance after a step
constexpr int kProjectionIters = 500;    // alternating-projection budget per solve
constexpr double kInteriorInset = 0.01;  // aim past the region edge so containment
                                         // triggers in finitely many rate steps

bool is_leg(EndEffector ee) {
    return ee == EndEffector::LeftFoot || ee == EndEffector::RightFoot;
}

Eigen::Vector3d lift(const Eigen::Vector2d& g, double y) {
    return {g.x(), y, g.y()};
}

// Pull a point into the spherical shell [lo, hi] around `anchor`, moving it
// radially. A point sitting on the anchor is pushed straight up.
Eigen::Vector3d project_to_shell(const Eigen::Vector3d& p, const Eigen::Vector3d& anchor,
                                 double lo, double hi) {
    const Eigen::Vector3d d = p - anchor;
    const double len = d.norm();
    if (len < 1e-12) return anchor + Eigen::Vector3d(0.0, lo, 0.0);
    if (len < lo) return anchor + d * (lo / len);
    if (len > hi) return anchor + d * (hi / len);
    return p;
}

Eigen::Vector3d project_to_bands(const SimplifiedModel& model, Eigen::Vector3d p) {
    for (int e = 0; e < kEndEffectorCount; ++e) {
        const SimplifiedLimb& limb = model.limbs[e];
        if (!limb.present || !limb.attached) continue;
        const auto ee = static_cast<EndEffector>(e);
        p = project_to_shell(p, limb.anchor, model.limb_min(ee), model.limb_max(ee));
    }
    return p;
}

// Support polygon the CoM must stay above while limbs are planted: the feet
// region extended by any attached hand anchors.
SupportRegion support_hull(const SimplifiedModel& model, const SupportRegion& feet_region) {
    std::vector<Eigen::Vector2d> pts = feet_region.vertices;
    bool extended = false;
    for (EndEffector ee : {EndEffector::LeftHand, EndEffector::RightHand}) {
        const SimplifiedLimb& limb = model.limb(ee);
        if (!limb.present || !limb.attached) continue;
        pts.push_back(ground_projection(limb.anchor));
        extended = true;
    }
    if (!extended) return feet_region;
    return hull_region(pts);
}

// Repeated constraint sweeps (support containment + length bands) until the
// point stops moving. Alternating projections settle into the constraint
// intersection when one is attainable; the band check afterwards is the real
// gate.
Eigen::Vector3d settle_constraints(const SimplifiedModel& model, const SupportRegion& hull,
                                   Eigen::Vector3d x) {
    for (int it = 0; it < kProjectionIters; ++it) {
        const Eigen::Vector3d prev = x;
        x = lift(nearest_region_point(hull, ground_projection(x)), x.y());
        x = project_to_bands(model, x);
        if ((x - prev).norm() < 1e-10) break;
    }
    return x;
}

double band_violation_at(const SimplifiedModel& model, const Eigen::Vector3d& x) {
    SimplifiedModel probe = model;
    probe.com = x;
    return probe.bound_violation();
}

// Objective pull for the balance distance. Every interior point minimizes
// d_c equally (it is zero there), so the tie is broken toward the region
// centroid: outside points are drawn to the nearest edge and then inward, and
// interior points keep drifting centroid-ward until a limb band stops them.
// Balancing deep inside the region instead of hugging the boundary is what
// makes the subsequent rise start with real margin.
Eigen::Vector2d region_pull(const SupportRegion& region, const Eigen::Vector2d& p) {
    const Eigen::Vector2d q = nearest_region_point(region, p);
    const Eigen::Vector2d c = region.centroid();
    const double span = (c - q).norm();
    if (span < 1e-12) return q;
    return q + std::min(kInteriorInset, span) * (c - q) / span;
}

// With exactly two attached limbs the band intersection can degenerate to a
// single point (anchors separated by exactly the sum of the length maxima —
// a rod lying straight). Iterative projection stalls there, so detect the
// near-tangent and truly separated cases in closed form.
struct TwoAnchor {
    Eigen::Vector3d a, b;
    double lo_a = 0.0, hi_a = 0.0, lo_b = 0.0, hi_b = 0.0;
};

std::optional<TwoAnchor> two_anchor_case(const SimplifiedModel& model) {
    const std::vector<EndEffector> atts = model.attached();
    if (atts.size() != 2) return std::nullopt;
    TwoAnchor t;
    t.a = model.limb(atts[0]).anchor;
    t.lo_a = model.limb_min(atts[0]);
    t.hi_a = model.limb_max(atts[0]);
    t.b = model.limb(atts[1]).anchor;
    t.lo_b = model.limb_min(atts[1]);
    t.hi_b = model.limb_max(atts[1]);
    return t;
}

} // namespace

const char* to_string(RisePhase phase) {
    switch (phase) {
        case RisePhase::Phase0_StartPose: return "Phase0";
        case RisePhase::Phase1_ShiftCom: return "Phase1";
        case RisePhase::Phase2_Rise: return "Phase2";
        case RisePhase::Complete: return "Complete";
    }
    return "?";
}

const char* to_string(SupportHand hand) {
    switch (hand) {
        case SupportHand::None: return "none";
        case SupportHand::Left: return "left";
        case SupportHand::Right: return "right";
    }
    return "?";
}

const char* to_string(PlanOutcome outcome) {
    return outcome == PlanOutcome::Complete ? "Complete" : "Stuck";
}

double SimplifiedModel::limb_min(EndEffector ee) const {
    return is_leg(ee) ? d_lmin : d_amin;
}

double SimplifiedModel::limb_max(EndEffector ee) const {
    return is_leg(ee) ? d_lmax : d_amax;
}

double SimplifiedModel::bound_violation() const {
    double worst = 0.0;
    for (int e = 0; e < kEndEffectorCount; ++e) {
        const SimplifiedLimb& limb = limbs[e];
        if (!limb.present || !limb.attached) continue;
        const auto ee = static_cast<EndEffector>(e);
        const double len = (com - limb.anchor).norm();
        worst = std::max(worst, limb_min(ee) - len);
        worst = std::max(worst, len - limb_max(ee));
    }
    return std::max(worst, 0.0);
}

std::vector<EndEffector> SimplifiedModel::attached() const {
    std::vector<EndEffector> out;
    for (int e = 0; e < kEndEffectorCount; ++e) {
        if (limbs[e].present && limbs[e].attached) out.push_back(static_cast<EndEffector>(e));
    }
    return out;
}

SimplifiedModel make_simplified_model(const CharacterSpec& spec, const SkeletonPose& pose,
                                      const ContactSet& contacts) {
    SimplifiedModel model;
    model.mass = spec.total_mass();
    model.com = compute_body_com(spec, pose);

    for (int e = 0; e < kEndEffectorCount; ++e) {
        const auto ee = static_cast<EndEffector>(e);
        SimplifiedLimb& limb = model.limbs[e];
        limb.present = spec.has_end_effector(ee);
        if (!limb.present) continue;
        if (contacts.is_active(ee)) {
            limb.attached = true;
            limb.anchor = contacts.get(ee)->position;
        } else {
            limb.attached = false;
            limb.anchor = end_effector_world(spec, pose, ee);
        }
    }

    if (auto rod = rod_precheck(spec); rod.has_value()) {
        // Single-fold body: length bands follow the exact fold geometry. With
        // lower length L and ratio k = upper/lower, the CoM-to-tip distances
        // range from the fully folded values up to the straight-rod value
        // (1+k)/2 * L at both ends.
        const double lower = spec.links[0].length;
        const double upper = spec.links[1].length;
        const double k = upper / lower;
        const double straight = 0.5 * (1.0 + k) * lower;
        model.d_lmax = straight;
        model.d_amax = straight;
        model.d_lmin = std::max(std::abs(1.0 + 2.0 * k - k * k) / (2.0 * (1.0 + k)) * lower,
                                1e-3 * lower);
        model.d_amin = std::max(std::abs(1.0 - k * (2.0 + k)) / (2.0 * (1.0 + k)) * lower,
                                1e-3 * lower);
        return model;
    }

    // Generic characters: bands measured on the neutral pose. Full leg
    // extension is the neutral-stance CoM-to-sole distance (so "legs at
    // d_lmax" corresponds exactly to standing straight). Arm reach is a
    // fraction of the straight press line through the shoulder — far enough
    // to be useful, short enough that it binds mid-walk and forces the
    // hand-stepping toward the feet.
    const SkeletonPose neutral = SkeletonPose::neutral(spec);
    const Eigen::Vector3d com_n = compute_body_com(spec, neutral);

    double leg_sum = 0.0;
    int legs = 0;
    double arm_sum = 0.0;
    int arms = 0;
    for (int e = 0; e < kEndEffectorCount; ++e) {
        const auto ee = static_cast<EndEffector>(e);
        if (!spec.has_end_effector(ee)) continue;
        const Eigen::Vector3d ee_n = end_effector_world(spec, neutral, ee);
        if (is_leg(ee)) {
            leg_sum += (com_n - ee_n).norm();
            ++legs;
        } else {
            const auto& chain = spec.limbs[e];
            Eigen::Vector3d shoulder = ee_n;
            if (chain.has_value()) {
                shoulder = link_transform(spec, neutral, chain->root_link).translation();
            }
            arm_sum +=
                kArmExtensionFactor * ((com_n - shoulder).norm() + (shoulder - ee_n).norm());
            ++arms;
        }
    }
    if (legs > 0) {
        model.d_lmax = leg_sum / legs;
        model.d_lmin = kLegMinFraction * model.d_lmax;
    }
    if (arms > 0) {
        model.d_amax = arm_sum / arms;
        model.d_amin = kArmMinFraction * model.d_amax;
    }
    return model;
}

PlannerReference plan_start_pose(const CharacterSpec& spec, const SkeletonPose& lying) {
    PlannerReference ref;
    ref.com_target = compute_body_com(spec, lying);

    // Longitudinal axis from the hip midpoint toward the shoulder midpoint,
    // measured on the posed skeleton and projected to the ground.
    Eigen::Vector3d hip_mid = Eigen::Vector3d::Zero();
    Eigen::Vector3d shoulder_mid = Eigen::Vector3d::Zero();
    int hips = 0, shoulders = 0;
    for (int e = 0; e < kEndEffectorCount; ++e) {
        const auto ee = static_cast<EndEffector>(e);
        if (!spec.has_end_effector(ee) || !spec.limbs[e].has_value()) continue;
        const Eigen::Vector3d root =
            link_transform(spec, lying, spec.limbs[e]->root_link).translation();
        if (is_leg(ee)) {
            hip_mid += root;
            ++hips;
        } else {
            shoulder_mid += root;
            ++shoulders;
        }
    }

    if (hips == 0 || shoulders == 0) {
        // Bodies without paired limb chains (the two-link rod): plant every
        // present end-effector where it already lies.
        for (int e = 0; e < kEndEffectorCount; ++e) {
            const auto ee = static_cast<EndEffector>(e);
            if (!spec.has_end_effector(ee)) continue;
            const Eigen::Vector3d p = end_effector_world(spec, lying, ee);
            ref.limb_targets[e] = lift(ground_projection(p), 0.0);
        }
        return ref;
    }
    hip_mid /= hips;
    shoulder_mid /= shoulders;

    Eigen::Vector2d axis = ground_projection(shoulder_mid) - ground_projection(hip_mid);
    if (axis.norm() < 1e-9) axis = {1.0, 0.0};
    axis.normalize();

    // Anatomical left projected to the ground. When the body lies on its side
    // that direction degenerates toward vertical; report a roll instead.
    const Eigen::Vector3d left_world = lying.root_orientation * Eigen::Vector3d(0.0, 0.0, -1.0);
    Eigen::Vector2d lat_left = ground_projection(left_world);
    if (lat_left.norm() < 0.5) {
        // Lying on a side: roll about the longitudinal axis toward whichever
        // of front/back is closer, then re-plan.
        ref.roll_direction = left_world.y() > 0.0 ? -1 : 1;
        lat_left = Eigen::Vector2d(axis.y(), -axis.x()); // provisional frame for targets
    } else {
        lat_left.normalize();
    }

    const double hand_off = 0.5 * spec.shoulder_width;
    const double foot_off = 0.5 * spec.hip_width;
    const Eigen::Vector2d chest = ground_projection(shoulder_mid);
    const Eigen::Vector2d pelvis = ground_projection(hip_mid);

    auto set_target = [&](EndEffector ee, const Eigen::Vector2d& base, double lateral) {
        if (!spec.has_end_effector(ee)) return;
        ref.limb_targets[static_cast<int>(ee)] = lift(base + lateral * lat_left, 0.0);
    };
    set_target(EndEffector::LeftHand, chest, hand_off);
    set_target(EndEffector::RightHand, chest, -hand_off);
    set_target(EndEffector::LeftFoot, pelvis, foot_off);
    set_target(EndEffector::RightFoot, pelvis, -foot_off);
    return ref;
}

Eigen::Vector3d solve_com_optimum(const SimplifiedModel& model, const SupportRegion& region) {
    // Two-anchor feasibility gates and the tangent special case.
    if (auto two = two_anchor_case(model)) {
        const double d = (two->a - two->b).norm();
        if (d > two->hi_a + two->hi_b + 1e-9 || two->lo_a > d + two->hi_b + 1e-9 ||
            two->lo_b > d + two->hi_a + 1e-9) {
            throw InfeasibleConstraintsError("limb length bands admit no feasible CoM position");
        }
        if (d >= two->hi_a + two->hi_b - 1e-5 && d > 1e-12) {
            // Bands meet in (effectively) a single point on the anchor line.
            return two->a + (two->b - two->a) * (two->hi_a / d);
        }
    }

    const SupportRegion hull = support_hull(model, region);
    Eigen::Vector3d x = model.com;
    for (int it = 0; it < kProjectionIters; ++it) {
        const Eigen::Vector3d prev = x;
        // Objective pull: move the ground projection toward the target region.
        x = lift(region_pull(region, ground_projection(x)), x.y());
        // Constraints: stay above the support hull, keep the limb bands.
        x = lift(nearest_region_point(hull, ground_projection(x)), x.y());
        x = project_to_bands(model, x);
        if ((x - prev).norm() < 1e-9) break;
    }
    // Polish with constraints only, dropping the objective pull, so the
    // returned point honours the bands to tolerance.
    x = settle_constraints(model, hull, x);
    if (band_violation_at(model, x) > kBandTol) {
        throw InfeasibleConstraintsError("limb length bands admit no feasible CoM position");
    }
    return x;
}

std::pair<SimplifiedModel, bool> optimize_phase1_step(const SimplifiedModel& model,
                                                      const SupportRegion& region, double rate,
                                                      double convergence_tol) {
    if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("phase-1 rate must be in (0, 1]");
    const Eigen::Vector3d optimum = solve_com_optimum(model, region);

    SimplifiedModel next = model;
    next.com = model.com + rate * (optimum - model.com);
    next.com = settle_constraints(next, support_hull(next, region), next.com);

    const double moved = (next.com - model.com).norm();
    return {next, moved < convergence_tol};
}

PlannerReference plan_hand_swap(const SimplifiedModel& model, const PhaseState& state,
                                double clearance) {
    const EndEffector support = state.support_hand == SupportHand::Left ? EndEffector::LeftHand
                                                                        : EndEffector::RightHand;
    // The moving hand is the free one; one-handed bodies relocate their only
    // hand (it briefly leaves the ground while the body pivots on the feet).
    EndEffector moving = support == EndEffector::LeftHand ? EndEffector::RightHand
                                                          : EndEffector::LeftHand;
    if (!model.limb(moving).present) moving = support;

    // Lateral axis: left of the feet-to-hand forward direction on the ground.
    Eigen::Vector2d feet_mid = Eigen::Vector2d::Zero();
    int feet = 0;
    for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) {
        const SimplifiedLimb& limb = model.limb(ee);
        if (!limb.present) continue;
        feet_mid += ground_projection(limb.anchor);
        ++feet;
    }
    if (feet > 0) feet_mid /= feet;
    Eigen::Vector2d fwd = ground_projection(model.limb(support).anchor) - feet_mid;
    fwd = fwd.norm() < 1e-9 ? Eigen::Vector2d(1.0, 0.0) : fwd.normalized();
    const Eigen::Vector2d left(fwd.y(), -fwd.x());
    const double side = moving == EndEffector::LeftHand ? 1.0 : -1.0;

    const Eigen::Vector2d com_g = ground_projection(model.com);
    Eigen::Vector2d target = com_g + clearance * side * left;

    // Clamp the ground target into the arm band around the current CoM: the
    // replanted hand must be reachable without moving the CoM.
    PlannerReference ref;
    const double y = model.com.y();
    const double r = (target - com_g).norm();
    const double r_min = model.d_amin > y ? std::sqrt(model.d_amin * model.d_amin - y * y) : 0.0;
    const double r_max = model.d_amax > y ? std::sqrt(model.d_amax * model.d_amax - y * y) : 0.0;
    if (model.d_amax <= y) {
        // CoM rides higher than the arm reaches the ground at all; plant
        // directly below the CoM as the nearest feasible compromise.
        ref.clamped = true;
        target = com_g;
    } else if (r < r_min || r > r_max) {
        ref.clamped = true;
        const double rc = std::clamp(r, r_min, r_max);
        const Eigen::Vector2d dir = r < 1e-12 ? side * left : Eigen::Vector2d((target - com_g) / r);
        target = com_g + rc * dir;
    }

    ref.com_target = model.com;
    ref.limb_targets[static_cast<int>(moving)] = lift(target, 0.0);
    if (moving != support) ref.release[static_cast<int>(support)] = true;
    return ref;
}

namespace {

bool legs_extended(const SimplifiedModel& model, const SupportRegion& feet_region,
                   double phase2_tol) {
    bool complete = query_balance(feet_region, model.com).inside;
    bool any_leg = false;
    for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) {
        const SimplifiedLimb& limb = model.limb(ee);
        if (!limb.present || !limb.attached) continue;
        any_leg = true;
        complete = complete && (model.com - limb.anchor).norm() >= model.d_lmax - phase2_tol;
    }
    return any_leg && complete;
}

} // namespace

std::pair<SimplifiedModel, bool> optimize_phase2_step(const SimplifiedModel& model,
                                                      const SupportRegion& feet_region,
                                                      double rate, double phase2_tol) {
    if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("phase-2 rate must be in (0, 1]");
    if (legs_extended(model, feet_region, phase2_tol)) return {model, true}; // fixed point

    // Both legs can only reach full extension simultaneously above a point
    // equidistant from the anchors, so steer the ground projection toward the
    // feet midpoint (primary containment) while raising the CoM (secondary).
    Eigen::Vector2d mid = Eigen::Vector2d::Zero();
    int feet = 0;
    for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) {
        const SimplifiedLimb& limb = model.limb(ee);
        if (!limb.present || !limb.attached) continue;
        mid += ground_projection(limb.anchor);
        ++feet;
    }
    if (feet == 0) return {model, false}; // nothing to stand on
    mid /= feet;
    const Eigen::Vector2d xz_goal = nearest_region_point(feet_region, mid);

    // Achievable CoM height with both legs capped at d_lmax over a given spot.
    auto reach_cap = [&](const Eigen::Vector2d& xz) {
        double cap = std::numeric_limits<double>::infinity();
        for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) {
            const SimplifiedLimb& limb = model.limb(ee);
            if (!limb.present || !limb.attached) continue;
            const double r2 = (xz - ground_projection(limb.anchor)).squaredNorm();
            const double reach2 = model.d_lmax * model.d_lmax - r2;
            cap = std::min(cap, reach2 > 0.0 ? std::sqrt(reach2) : 0.0);
        }
        return cap;
    };

    SimplifiedModel next = model;
    const Eigen::Vector2d xz = ground_projection(model.com);
    const Eigen::Vector2d xz_next = xz + rate * (xz_goal - xz);
    // Rise toward the height of the fully extended stance, but never above
    // what the legs reach from the current spot (keeps the climb monotone).
    const double y_next =
        std::min(model.com.y() + rate * (reach_cap(xz_goal) - model.com.y()), reach_cap(xz_next));
    next.com = lift(xz_next, std::max(y_next, model.com.y()));
    next.com = settle_constraints(next, feet_region, next.com);

    return {next, legs_extended(next, feet_region, phase2_tol)};
}

SupportHand choose_support_hand(const SimplifiedModel& model, const SupportRegion& feet_region) {
    double best_d = std::numeric_limits<double>::infinity();
    SupportHand best = SupportHand::None;
    // Right hand evaluated last wins ties.
    for (auto [ee, hand] : {std::pair{EndEffector::LeftHand, SupportHand::Left},
                            std::pair{EndEffector::RightHand, SupportHand::Right}}) {
        const SimplifiedLimb& limb = model.limb(ee);
        if (!limb.present || !limb.attached) continue;
        SimplifiedModel probe = model;
        for (EndEffector other : {EndEffector::LeftHand, EndEffector::RightHand}) {
            if (other != ee) probe.limb(other).attached = false;
        }
        double d;
        try {
            d = query_balance(feet_region, solve_com_optimum(probe, feet_region)).distance;
        } catch (const InfeasibleConstraintsError&) {
            continue;
        }
        if (d <= best_d) {
            best_d = d;
            best = hand;
        }
    }
    return best;
}

PhaseState advance_phase(const PhaseState& state, const SimplifiedModel& model,
                         const SupportRegion& feet_region, const PlannerConfig& config) {
    PhaseState next = state;
    switch (state.phase) {
        case RisePhase::Phase0_StartPose: {
            bool all_planted = true;
            for (const SimplifiedLimb& limb : model.limbs) {
                if (limb.present && !limb.attached) all_planted = false;
            }
            if (all_planted) {
                const SupportHand chosen = choose_support_hand(model, feet_region);
                if (chosen == SupportHand::None) {
                    // No usable hand (arm-less body): rising works only when
                    // the CoM already balances over the feet; otherwise keep
                    // waiting in Phase 0 until the budget expires.
                    if (query_balance(feet_region, model.com).inside) {
                        next.phase = RisePhase::Phase2_Rise;
                        next.support_hand = SupportHand::None;
                        next.iteration_count = 0;
                        next.converged = false;
                        next.pending_swap.reset();
                        return next;
                    }
                    break;
                }
                next.phase = RisePhase::Phase1_ShiftCom;
                next.support_hand = chosen;
                next.iteration_count = 0;
                next.converged = false;
                next.pending_swap.reset();
                return next;
            }
            break;
        }
        case RisePhase::Phase1_ShiftCom: {
            const BalanceQuery q = query_balance(feet_region, model.com);
            if (q.inside) {
                next.phase = RisePhase::Phase2_Rise;
                next.support_hand = SupportHand::None;
                next.pending_swap.reset();
                next.iteration_count = 0;
                next.converged = false;
                return next;
            }
            if (state.converged && !state.pending_swap.has_value()) {
                const PlannerReference ref = plan_hand_swap(model, state, config.swap_clearance);
                HandSwapEvent event;
                event.releasing_hand = state.support_hand == SupportHand::Left
                                           ? EndEffector::LeftHand
                                           : EndEffector::RightHand;
                for (int e = 0; e < kEndEffectorCount; ++e) {
                    if (ref.limb_targets[e].has_value()) {
                        event.moving_hand = static_cast<EndEffector>(e);
                        event.target = *ref.limb_targets[e];
                    }
                }
                event.clamped = ref.clamped;
                next.pending_swap = event;
            }
            break;
        }
        case RisePhase::Phase2_Rise: {
            if (legs_extended(model, feet_region, config.phase2_tol)) {
                next.phase = RisePhase::Complete;
                next.support_hand = SupportHand::None;
                next.pending_swap.reset();
                return next;
            }
            break;
        }
        case RisePhase::Complete:
            return next; // absorbing
    }
    next.iteration_count = state.iteration_count + 1;
    if (next.iteration_count > config.max_iterations) {
        throw StuckError(std::string("no planner progress in ") + to_string(state.phase));
    }
    return next;
}

PhaseState apply_hand_swap(const PhaseState& state, const HandSwapEvent& event) {
    PhaseState next = state;
    next.pending_swap.reset();
    next.converged = false;
    next.iteration_count = 0; // each swap restarts the shift toward the feet
    next.support_hand =
        event.moving_hand == EndEffector::LeftHand ? SupportHand::Left : SupportHand::Right;
    return next;
}

bool check_rod_feasibility(double lower_len, double upper_len) {
    if (!(lower_len > 0.0) || !(upper_len > 0.0)) {
        throw ConfigError("rod segment lengths must be positive");
    }
    return lower_len < upper_len && upper_len < 2.0 * lower_len;
}

std::optional<bool> rod_precheck(const CharacterSpec& spec) {
    if (spec.link_count() != 2) return std::nullopt;
    int feet = 0, hands = 0, foot_link = -1, hand_link = -1;
    for (int e = 0; e < kEndEffectorCount; ++e) {
        const auto ee = static_cast<EndEffector>(e);
        if (!spec.has_end_effector(ee)) continue;
        if (is_leg(ee)) {
            ++feet;
            foot_link = spec.end_effector(ee).link;
        } else {
            ++hands;
            hand_link = spec.end_effector(ee).link;
        }
    }
    if (feet != 1 || hands != 1 || foot_link != 0 || hand_link != 1) return std::nullopt;
    return check_rod_feasibility(spec.links[0].length, spec.links[1].length);
}

SupportRegion feet_support_region(const CharacterSpec& spec, const SimplifiedModel& model) {
    std::vector<Eigen::Vector2d> pts;
    for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) {
        const SimplifiedLimb& limb = model.limb(ee);
        if (!limb.present || !limb.attached) continue;
        const int link = spec.end_effector(ee).link;
        const Eigen::Vector3d half = spec.links[link].half_extents;
        const double hx = std::max(half.x(), 1e-3);
        const double hz = std::max(half.z(), 1e-3);
        const Eigen::Vector2d a = ground_projection(limb.anchor);
        pts.push_back(a + Eigen::Vector2d(hx, hz));
        pts.push_back(a + Eigen::Vector2d(hx, -hz));
        pts.push_back(a + Eigen::Vector2d(-hx, hz));
        pts.push_back(a + Eigen::Vector2d(-hx, -hz));
    }
    if (pts.empty()) throw NoSupportError("no attached feet to form a support region");
    return hull_region(pts);
}

SupportRegion active_support_region(const CharacterSpec& spec, const SimplifiedModel& model) {
    std::vector<Eigen::Vector2d> pts;
    for (EndEffector ee : {EndEffector::LeftFoot, EndEffector::RightFoot}) {
        const SimplifiedLimb& limb = model.limb(ee);
        if (!limb.present || !limb.attached) continue;
        const int link = spec.end_effector(ee).link;
        const Eigen::Vector3d half = spec.links[link].half_extents;
        const double hx = std::max(half.x(), 1e-3);
        const double hz = std::max(half.z(), 1e-3);
        const Eigen::Vector2d a = ground_projection(limb.anchor);
        pts.push_back(a + Eigen::Vector2d(hx, hz));
        pts.push_back(a + Eigen::Vector2d(hx, -hz));
        pts.push_back(a + Eigen::Vector2d(-hx, hz));
        pts.push_back(a + Eigen::Vector2d(-hx, -hz));
    }
    for (EndEffector ee : {EndEffector::LeftHand, EndEffector::RightHand}) {
        const SimplifiedLimb& limb = model.limb(ee);
        if (!limb.present || !limb.attached) continue;
        pts.push_back(ground_projection(limb.anchor));
    }
    if (pts.empty()) throw NoSupportError("no attached limbs to form a support region");
    return hull_region(pts);
}

PlanTrace run_plan(const CharacterSpec& spec, const PlannerConfig& config) {
    PlanTrace trace;

    // Single-fold bodies admit an upright CoM only for a narrow length ratio;
    // refuse infeasible rods up front instead of grinding to the budget.
    if (auto rod = rod_precheck(spec); rod.has_value() && !*rod) {
        trace.outcome = PlanOutcome::Stuck;
        trace.final_phase = RisePhase::Phase0_StartPose;
        return trace;
    }

    // Start from the body lying on its back along +x: root rotated so the
    // longitudinal axis lies on the ground, then rested on the plane.
    SkeletonPose lying = SkeletonPose::neutral(spec);
    lying.root_orientation =
        Eigen::Quaterniond(Eigen::AngleAxisd(-M_PI / 2.0, Eigen::Vector3d::UnitZ()));
    lying.root_position = Eigen::Vector3d(0.0, 0.3, 0.0);
    const double low = lowest_body_point(spec, lying);
    lying.root_position.y() -= low;

    const PlannerReference start = plan_start_pose(spec, lying);
    ContactSet contacts;
    for (int e = 0; e < kEndEffectorCount; ++e) {
        if (start.limb_targets[e].has_value()) {
            contacts.set(static_cast<EndEffector>(e), *start.limb_targets[e]);
        }
    }
    SimplifiedModel model = make_simplified_model(spec, lying, contacts);

    PhaseState state;
    const SupportRegion feet =
        shrink_region(feet_support_region(spec, model), config.support_margin);

    // Planting the contacts ends Phase 0: settle the point mass onto the
    // nearest configuration satisfying the planted-limb bands.
    model.com = settle_constraints(model, support_hull(model, feet), model.com);
    trace.com_path.push_back(model.com);

    try {
        state = advance_phase(state, model, feet, config);
        int guard = 0;
        const int hard_cap = 64 * config.max_iterations;
        while (state.phase != RisePhase::Complete && ++guard < hard_cap) {
            if (state.phase == RisePhase::Phase1_ShiftCom) {
                if (state.pending_swap.has_value()) {
                    const HandSwapEvent event = *state.pending_swap;
                    model.limb(event.releasing_hand).attached = false;
                    model.limb(event.moving_hand).attached = true;
                    model.limb(event.moving_hand).anchor = event.target;
                    state = apply_hand_swap(state, event);
                    ++trace.swap_count;
                    continue;
                }
                auto [next, converged] =
                    optimize_phase1_step(model, feet, config.rate, config.convergence_tol);
                model = next;
                state.converged = converged;
                trace.com_path.push_back(model.com);
                if (converged) {
                    trace.converged_dc.push_back(query_balance(feet, model.com).distance);
                }
            } else if (state.phase == RisePhase::Phase2_Rise) {
                auto [next, complete] =
                    optimize_phase2_step(model, feet, config.rate, config.phase2_tol);
                model = next;
                trace.com_path.push_back(model.com);
                (void)complete; // advance_phase re-derives completion from the model
            }
            const RisePhase before = state.phase;
            state = advance_phase(state, model, feet, config);
            if (before != RisePhase::Phase2_Rise && state.phase == RisePhase::Phase2_Rise) {
                // Rising is feet-only: release both hand constraints.
                model.limb(EndEffector::LeftHand).attached = false;
                model.limb(EndEffector::RightHand).attached = false;
            }
        }
        if (state.phase == RisePhase::Complete) {
            trace.outcome = PlanOutcome::Complete;
        }
    } catch (const StuckError&) {
        trace.outcome = PlanOutcome::Stuck;
    } catch (const InfeasibleConstraintsError&) {
        trace.outcome = PlanOutcome::Stuck;
    }
    trace.final_phase = state.phase;
    return trace;
}

} // namespace risectl
