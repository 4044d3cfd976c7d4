#include "risectl/character.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "risectl/kinematics.hpp"

namespace risectl {

namespace {

using nlohmann::json;

constexpr double kGravity = 9.81;

Eigen::Vector3d vec3_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) {
        throw ConfigError(std::string("expected a 3-element array for ") + what);
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

// Box inertia tensor about the box center, axis-aligned in the link frame.
Eigen::Matrix3d box_inertia(double mass, const Eigen::Vector3d& half) {
    const Eigen::Vector3d f = 2.0 * half;
    Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();
    inertia(0, 0) = mass / 12.0 * (f.y() * f.y() + f.z() * f.z());
    inertia(1, 1) = mass / 12.0 * (f.x() * f.x() + f.z() * f.z());
    inertia(2, 2) = mass / 12.0 * (f.x() * f.x() + f.y() * f.y());
    return inertia;
}

std::vector<int> subtree_links(const CharacterSpec& spec, int root) {
    std::vector<int> out{root};
    for (int i = root + 1; i < spec.link_count(); ++i) {
        int p = spec.links[i].parent;
        while (p > root) p = spec.links[p].parent;
        if (p == root) out.push_back(i);
    }
    return out;
}

DofSpec make_dof(const std::string& name, const Eigen::Vector3d& axis, double lo, double hi,
                 double rest = 0.0) {
    DofSpec d;
    d.name = name;
    d.axis = axis;
    d.min_angle = lo;
    d.max_angle = hi;
    d.rest_angle = rest;
    return d;
}

} // namespace

int CharacterSpec::joint_dof_count() const {
    int n = 0;
    for (const auto& l : links) n += static_cast<int>(l.dofs.size());
    return n;
}

int CharacterSpec::dof_index(int link) const {
    int n = 0;
    for (int i = 0; i < link; ++i) n += static_cast<int>(links[i].dofs.size());
    return n;
}

int CharacterSpec::link_of_dof(int dof) const {
    int n = 0;
    for (int i = 0; i < link_count(); ++i) {
        n += static_cast<int>(links[i].dofs.size());
        if (dof < n) return i;
    }
    throw ConfigError("joint DOF index out of range");
}

double CharacterSpec::total_mass() const {
    double m = 0.0;
    for (const auto& l : links) m += l.mass;
    return m;
}

const EndEffectorSpec& CharacterSpec::end_effector(EndEffector ee) const {
    const auto& slot = end_effectors[static_cast<int>(ee)];
    if (!slot.has_value()) {
        throw ConfigError(std::string("character has no end-effector ") + to_string(ee));
    }
    return *slot;
}

void CharacterSpec::validate() const {
    if (links.empty()) throw ConfigError("character has no links");
    if (links[0].parent != -1) throw ConfigError("links[0] must be the root (parent -1)");
    for (int i = 0; i < link_count(); ++i) {
        const LinkSpec& l = links[i];
        if (i > 0 && (l.parent < 0 || l.parent >= i)) {
            throw ConfigError("link '" + l.name + "' must reference an earlier parent link");
        }
        if (!(l.mass > 0.0)) throw ConfigError("link '" + l.name + "' needs positive mass");
        if (!(l.half_extents.minCoeff() > 0.0)) {
            throw ConfigError("link '" + l.name + "' needs positive box half extents");
        }
        if (l.dofs.size() > 3) throw ConfigError("link '" + l.name + "' has more than 3 DOF");
        if (i == 0 && !l.dofs.empty()) throw ConfigError("root link must not declare joint DOF");
        for (const DofSpec& d : l.dofs) {
            if (!(d.axis.norm() > 0.0)) throw ConfigError("dof '" + d.name + "' has a zero axis");
            if (!(d.min_angle <= d.max_angle)) {
                throw ConfigError("dof '" + d.name + "' has inverted limits");
            }
            if (!(d.min_angle <= d.rest_angle && d.rest_angle <= d.max_angle)) {
                throw ConfigError("dof '" + d.name + "' rest angle outside limits");
            }
        }
    }
    for (int e = 0; e < kEndEffectorCount; ++e) {
        const auto& ee = end_effectors[e];
        if (ee.has_value() && (ee->link < 0 || ee->link >= link_count())) {
            throw ConfigError("end-effector references an unknown link");
        }
    }
}

void derive_limb_chains(CharacterSpec& spec) {
    // Core links = ancestors of at least two distinct end-effectors, plus the root.
    std::vector<int> ee_ancestor_count(spec.link_count(), 0);
    for (int e = 0; e < kEndEffectorCount; ++e) {
        const auto& ee = spec.end_effectors[e];
        if (!ee.has_value()) continue;
        for (int l = ee->link; l != -1; l = spec.links[l].parent) ++ee_ancestor_count[l];
    }
    auto is_core = [&](int l) { return l == 0 || ee_ancestor_count[l] >= 2; };

    for (int e = 0; e < kEndEffectorCount; ++e) {
        spec.limbs[e].reset();
        const auto& ee = spec.end_effectors[e];
        if (!ee.has_value()) continue;

        // Path from the limb root (deepest non-core ancestor chain head) to the EE.
        std::vector<int> path;
        for (int l = ee->link; l != -1 && !is_core(l); l = spec.links[l].parent) {
            path.insert(path.begin(), l);
        }
        if (path.empty()) continue; // end-effector sits on a core link (rod foot)

        LimbChain chain;
        chain.effector = static_cast<EndEffector>(e);
        if (path.size() == 1 && spec.links[path[0]].dofs.size() == 1) {
            // Rod-style limb: a single hinged link off the body root.
            chain.root_link = spec.links[path[0]].parent;
            chain.mid_link = chain.end_link = path[0];
            chain.root_dof_start = spec.dof_index(path[0]);
            chain.root_dof_count = 0;
            chain.hinge_dof = spec.dof_index(path[0]);
            chain.hinge_sign = spec.links[path[0]].dofs[0].max_angle <= 1e-9 ? -1.0 : 1.0;
            chain.l1 = spec.links[path[0]].parent_offset.norm();
            chain.l2 = ee->local_offset.norm();
            spec.limbs[e] = chain;
            continue;
        }
        if (path.size() < 2) continue;

        chain.root_link = path[0];
        chain.mid_link = path[1];
        chain.end_link = path.size() >= 3 ? path[2] : path[1];
        const auto& root_dofs = spec.links[chain.root_link].dofs;
        const auto& mid_dofs = spec.links[chain.mid_link].dofs;
        if (mid_dofs.size() != 1 || root_dofs.empty() || root_dofs.size() > 2) {
            throw ConfigError("limb for " + std::string(to_string(chain.effector)) +
                              " is not a two-link chain (root 1-2 DOF, hinge 1 DOF)");
        }
        chain.root_dof_start = spec.dof_index(chain.root_link);
        chain.root_dof_count = static_cast<int>(root_dofs.size());
        chain.hinge_dof = spec.dof_index(chain.mid_link);
        chain.hinge_sign = mid_dofs[0].max_angle <= 1e-9 ? -1.0 : 1.0;
        chain.l1 = spec.links[chain.mid_link].parent_offset.norm();
        chain.l2 = (chain.end_link == chain.mid_link)
                       ? ee->local_offset.norm()
                       : spec.links[chain.end_link].parent_offset.norm();
        spec.limbs[e] = chain;
    }
}

void derive_servo_gains(CharacterSpec& spec, double omega0, double zeta, double strength) {
    const SkeletonPose neutral = SkeletonPose::neutral(spec);
    const std::vector<Eigen::Isometry3d> tf = link_transforms(spec, neutral);
    const double total_mass = spec.total_mass();

    // Which links directly carry an end-effector (their joints may have to steer
    // the whole planted body, e.g. ankles in late-phase standing).
    std::vector<bool> carries_ee(spec.link_count(), false);
    for (int e = 0; e < kEndEffectorCount; ++e) {
        if (spec.end_effectors[e].has_value()) carries_ee[spec.end_effectors[e]->link] = true;
    }

    for (int li = 1; li < spec.link_count(); ++li) {
        LinkSpec& link = spec.links[li];
        if (link.dofs.empty()) continue;
        const Eigen::Vector3d origin = tf[li].translation();
        const std::vector<int> sub = subtree_links(spec, li);

        // Subtree inertia/gravity lever about the joint origin, using full
        // distances as a horizontal-extension worst case.
        auto side_terms = [&](const std::vector<int>& side) {
            double inertia = 0.0, lever = 0.0;
            for (int m : side) {
                const LinkSpec& lm = spec.links[m];
                const Eigen::Vector3d com = tf[m] * lm.box_center;
                const Eigen::Matrix3d ibox =
                    tf[m].rotation() * box_inertia(lm.mass, lm.half_extents) *
                    tf[m].rotation().transpose();
                const double d = (com - origin).norm();
                inertia += ibox.trace() / 2.0 + lm.mass * d * d; // axis-agnostic bound
                lever += lm.mass * d;
            }
            return std::pair<double, double>(inertia, lever);
        };
        std::vector<int> comp;
        for (int m = 0; m < spec.link_count(); ++m) {
            if (std::find(sub.begin(), sub.end(), m) == sub.end()) comp.push_back(m);
        }
        const auto [inertia_sub, lever_sub] = side_terms(sub);
        const auto [inertia_comp, lever_comp] = side_terms(comp);

        bool subtree_has_ee = false;
        for (int m : sub) subtree_has_ee = subtree_has_ee || carries_ee[m];

        // Stiffness is sized against the larger load the joint may drive when its
        // end-effector is planted (ankle steering the whole body in stance, wrist
        // under a planted palm); damping is sized to the same inertia so those
        // modes come out critically damped rather than ringing.
        const double inertia_free = std::max(inertia_sub, 1e-4);
        const double inertia_gain =
            subtree_has_ee ? std::max(inertia_free, 0.25 * inertia_comp) : inertia_free;

        for (DofSpec& dof : link.dofs) {
            if (dof.kp == 0.0) dof.kp = omega0 * omega0 * inertia_gain;
            if (dof.kd == 0.0) dof.kd = 2.0 * zeta * omega0 * inertia_gain;
            if (dof.torque_limit == 0.0) {
                dof.torque_limit =
                    strength * kGravity * (lever_sub + 0.1 * total_mass * link.length);
            }
        }
    }
}

namespace {

void finalize(CharacterSpec& spec) {
    derive_limb_chains(spec);
    derive_servo_gains(spec);
    spec.validate();
}

} // namespace

CharacterSpec make_biped15() {
    CharacterSpec s;
    s.name = "biped15";
    s.shoulder_width = 0.40;
    s.hip_width = 0.20;

    auto add = [&](LinkSpec l) {
        s.links.push_back(std::move(l));
        return static_cast<int>(s.links.size()) - 1;
    };
    const Eigen::Vector3d X = Eigen::Vector3d::UnitX();
    const Eigen::Vector3d Y = Eigen::Vector3d::UnitY();
    const Eigen::Vector3d Z = Eigen::Vector3d::UnitZ();

    LinkSpec pelvis;
    pelvis.name = "pelvis";
    pelvis.parent = -1;
    pelvis.length = 0.20;
    pelvis.mass = 10.0;
    pelvis.box_center = {0.0, 0.0, 0.0};
    pelvis.half_extents = {0.10, 0.10, 0.12};
    const int pelvis_i = add(pelvis);

    LinkSpec torso;
    torso.name = "torso";
    torso.parent = pelvis_i;
    torso.parent_offset = {0.0, 0.10, 0.0};
    torso.length = 0.48;
    torso.mass = 26.0;
    torso.box_center = {0.0, 0.24, 0.0};
    torso.half_extents = {0.11, 0.24, 0.15};
    torso.dofs = {make_dof("waist_pitch", Z, -1.2, 1.2), make_dof("waist_roll", X, -0.6, 0.6),
                  make_dof("waist_yaw", Y, -0.8, 0.8)};
    const int torso_i = add(torso);

    LinkSpec head;
    head.name = "head";
    head.parent = torso_i;
    head.parent_offset = {0.0, 0.48, 0.0};
    head.length = 0.24;
    head.mass = 5.5;
    head.box_center = {0.0, 0.12, 0.0};
    head.half_extents = {0.09, 0.12, 0.08};
    head.dofs = {make_dof("neck_pitch", Z, -0.8, 0.8), make_dof("neck_roll", X, -0.5, 0.5),
                 make_dof("neck_yaw", Y, -1.2, 1.2)};
    add(head);

    auto add_leg = [&](const std::string& prefix, double side) {
        LinkSpec thigh;
        thigh.name = prefix + "_thigh";
        thigh.parent = pelvis_i;
        thigh.parent_offset = {0.0, -0.06, side * s.hip_width / 2.0};
        thigh.length = 0.44;
        thigh.mass = 8.0;
        thigh.box_center = {0.0, -0.22, 0.0};
        thigh.half_extents = {0.07, 0.22, 0.07};
        thigh.dofs = {make_dof(prefix + "_hip_pitch", Z, -2.4, 2.4),
                      make_dof(prefix + "_hip_roll", X, -1.0, 1.0)};
        const int thigh_i = add(thigh);

        LinkSpec shin;
        shin.name = prefix + "_shin";
        shin.parent = thigh_i;
        shin.parent_offset = {0.0, -0.44, 0.0};
        shin.length = 0.43;
        shin.mass = 3.7;
        shin.box_center = {0.0, -0.215, 0.0};
        shin.half_extents = {0.055, 0.215, 0.055};
        shin.dofs = {make_dof(prefix + "_knee", Z, -2.61, 0.0, 0.0)};
        const int shin_i = add(shin);

        LinkSpec foot;
        foot.name = prefix + "_foot";
        foot.parent = shin_i;
        foot.parent_offset = {0.0, -0.43, 0.0};
        foot.length = 0.22;
        foot.mass = 1.1;
        foot.box_center = {0.05, -0.03, 0.0};
        foot.half_extents = {0.11, 0.03, 0.045};
        foot.dofs = {make_dof(prefix + "_ankle_pitch", Z, -0.9, 0.9),
                     make_dof(prefix + "_ankle_roll", X, -0.5, 0.5),
                     make_dof(prefix + "_ankle_yaw", Y, -0.6, 0.6)};
        return add(foot);
    };

    auto add_arm = [&](const std::string& prefix, double side) {
        LinkSpec uarm;
        uarm.name = prefix + "_uarm";
        uarm.parent = torso_i;
        uarm.parent_offset = {0.0, 0.42, side * s.shoulder_width / 2.0};
        uarm.length = 0.30;
        uarm.mass = 2.1;
        uarm.box_center = {0.0, -0.15, 0.0};
        uarm.half_extents = {0.05, 0.15, 0.05};
        uarm.dofs = {make_dof(prefix + "_shoulder_pitch", Z, -3.0, 3.0),
                     make_dof(prefix + "_shoulder_roll", X, -1.6, 1.6)};
        const int uarm_i = add(uarm);

        LinkSpec farm;
        farm.name = prefix + "_farm";
        farm.parent = uarm_i;
        farm.parent_offset = {0.0, -0.30, 0.0};
        farm.length = 0.28;
        farm.mass = 1.3;
        farm.box_center = {0.0, -0.14, 0.0};
        farm.half_extents = {0.04, 0.14, 0.04};
        farm.dofs = {make_dof(prefix + "_elbow", Z, 0.0, 2.61, 0.0)};
        const int farm_i = add(farm);

        LinkSpec hand;
        hand.name = prefix + "_hand";
        hand.parent = farm_i;
        hand.parent_offset = {0.0, -0.28, 0.0};
        hand.length = 0.16;
        hand.mass = 0.45;
        hand.box_center = {0.0, -0.08, 0.0};
        hand.half_extents = {0.045, 0.08, 0.025};
        hand.dofs = {make_dof(prefix + "_wrist_pitch", Z, -0.9, 0.9),
                     make_dof(prefix + "_wrist_roll", X, -0.6, 0.6),
                     make_dof(prefix + "_wrist_yaw", Y, -0.9, 0.9)};
        return add(hand);
    };

    // Anatomical left is -z for a character facing +x with +y up.
    const int l_foot = add_leg("l", -1.0);
    const int r_foot = add_leg("r", +1.0);
    const int l_hand = add_arm("l", -1.0);
    const int r_hand = add_arm("r", +1.0);

    s.end_effectors[static_cast<int>(EndEffector::LeftFoot)] =
        EndEffectorSpec{l_foot, {0.05, -0.06, 0.0}};
    s.end_effectors[static_cast<int>(EndEffector::RightFoot)] =
        EndEffectorSpec{r_foot, {0.05, -0.06, 0.0}};
    s.end_effectors[static_cast<int>(EndEffector::LeftHand)] =
        EndEffectorSpec{l_hand, {0.0, -0.12, 0.0}};
    s.end_effectors[static_cast<int>(EndEffector::RightHand)] =
        EndEffectorSpec{r_hand, {0.0, -0.12, 0.0}};

    finalize(s);
    return s;
}

CharacterSpec make_biped9() {
    CharacterSpec s;
    s.name = "biped9";
    s.shoulder_width = 0.40;
    s.hip_width = 0.20;

    auto add = [&](LinkSpec l) {
        s.links.push_back(std::move(l));
        return static_cast<int>(s.links.size()) - 1;
    };
    const Eigen::Vector3d X = Eigen::Vector3d::UnitX();
    const Eigen::Vector3d Z = Eigen::Vector3d::UnitZ();

    LinkSpec torso;
    torso.name = "torso";
    torso.parent = -1;
    torso.length = 0.60;
    torso.mass = 40.0;
    torso.box_center = {0.0, 0.30, 0.0};
    torso.half_extents = {0.11, 0.30, 0.15};
    const int torso_i = add(torso);

    auto add_leg = [&](const std::string& prefix, double side) {
        LinkSpec thigh;
        thigh.name = prefix + "_thigh";
        thigh.parent = torso_i;
        thigh.parent_offset = {0.0, 0.0, side * s.hip_width / 2.0};
        thigh.length = 0.44;
        thigh.mass = 8.5;
        thigh.box_center = {0.0, -0.22, 0.0};
        thigh.half_extents = {0.07, 0.22, 0.07};
        thigh.dofs = {make_dof(prefix + "_hip_pitch", Z, -2.4, 2.4),
                      make_dof(prefix + "_hip_roll", X, -1.0, 1.0)};
        const int thigh_i = add(thigh);

        LinkSpec shin;
        shin.name = prefix + "_shin";
        shin.parent = thigh_i;
        shin.parent_offset = {0.0, -0.44, 0.0};
        shin.length = 0.47;
        shin.mass = 4.5;
        shin.box_center = {0.0, -0.235, 0.0};
        shin.half_extents = {0.055, 0.235, 0.055};
        shin.dofs = {make_dof(prefix + "_knee", Z, -2.61, 0.0, 0.0)};
        return add(shin);
    };

    auto add_arm = [&](const std::string& prefix, double side) {
        LinkSpec uarm;
        uarm.name = prefix + "_uarm";
        uarm.parent = torso_i;
        uarm.parent_offset = {0.0, 0.55, side * s.shoulder_width / 2.0};
        uarm.length = 0.30;
        uarm.mass = 2.4;
        uarm.box_center = {0.0, -0.15, 0.0};
        uarm.half_extents = {0.05, 0.15, 0.05};
        uarm.dofs = {make_dof(prefix + "_shoulder_pitch", Z, -3.0, 3.0),
                     make_dof(prefix + "_shoulder_roll", X, -1.6, 1.6)};
        const int uarm_i = add(uarm);

        LinkSpec farm;
        farm.name = prefix + "_farm";
        farm.parent = uarm_i;
        farm.parent_offset = {0.0, -0.30, 0.0};
        farm.length = 0.30;
        farm.mass = 1.8;
        farm.box_center = {0.0, -0.15, 0.0};
        farm.half_extents = {0.04, 0.15, 0.04};
        farm.dofs = {make_dof(prefix + "_elbow", Z, 0.0, 2.61, 0.0)};
        return add(farm);
    };

    const int l_shin = add_leg("l", -1.0);
    const int r_shin = add_leg("r", +1.0);
    const int l_farm = add_arm("l", -1.0);
    const int r_farm = add_arm("r", +1.0);

    s.end_effectors[static_cast<int>(EndEffector::LeftFoot)] =
        EndEffectorSpec{l_shin, {0.0, -0.47, 0.0}};
    s.end_effectors[static_cast<int>(EndEffector::RightFoot)] =
        EndEffectorSpec{r_shin, {0.0, -0.47, 0.0}};
    s.end_effectors[static_cast<int>(EndEffector::LeftHand)] =
        EndEffectorSpec{l_farm, {0.0, -0.30, 0.0}};
    s.end_effectors[static_cast<int>(EndEffector::RightHand)] =
        EndEffectorSpec{r_farm, {0.0, -0.30, 0.0}};

    finalize(s);
    return s;
}

CharacterSpec make_planar12() {
    CharacterSpec s;
    s.name = "planar12";
    s.shoulder_width = 0.36;
    s.hip_width = 0.18;
    s.planar = true;

    auto add = [&](LinkSpec l) {
        s.links.push_back(std::move(l));
        return static_cast<int>(s.links.size()) - 1;
    };
    const Eigen::Vector3d Z = Eigen::Vector3d::UnitZ();

    LinkSpec pelvis;
    pelvis.name = "pelvis";
    pelvis.parent = -1;
    pelvis.length = 0.20;
    pelvis.mass = 10.0;
    pelvis.box_center = {0.0, 0.0, 0.0};
    pelvis.half_extents = {0.10, 0.10, 0.10};
    const int pelvis_i = add(pelvis);

    LinkSpec torso;
    torso.name = "torso";
    torso.parent = pelvis_i;
    torso.parent_offset = {0.0, 0.10, 0.0};
    torso.length = 0.48;
    torso.mass = 28.0;
    torso.box_center = {0.0, 0.24, 0.0};
    torso.half_extents = {0.11, 0.24, 0.13};
    torso.dofs = {make_dof("waist", Z, -1.2, 1.2)};
    const int torso_i = add(torso);

    auto add_leg = [&](const std::string& prefix, double side) {
        LinkSpec thigh;
        thigh.name = prefix + "_thigh";
        thigh.parent = pelvis_i;
        thigh.parent_offset = {0.0, -0.06, side * s.hip_width / 2.0};
        thigh.length = 0.44;
        thigh.mass = 8.0;
        thigh.box_center = {0.0, -0.22, 0.0};
        thigh.half_extents = {0.07, 0.22, 0.07};
        thigh.dofs = {make_dof(prefix + "_hip", Z, -2.4, 2.4)};
        const int thigh_i = add(thigh);

        LinkSpec shin;
        shin.name = prefix + "_shin";
        shin.parent = thigh_i;
        shin.parent_offset = {0.0, -0.44, 0.0};
        shin.length = 0.43;
        shin.mass = 3.7;
        shin.box_center = {0.0, -0.215, 0.0};
        shin.half_extents = {0.055, 0.215, 0.055};
        shin.dofs = {make_dof(prefix + "_knee", Z, -2.61, 0.0, 0.0)};
        const int shin_i = add(shin);

        LinkSpec foot;
        foot.name = prefix + "_foot";
        foot.parent = shin_i;
        foot.parent_offset = {0.0, -0.43, 0.0};
        foot.length = 0.22;
        foot.mass = 1.1;
        foot.box_center = {0.05, -0.03, 0.0};
        foot.half_extents = {0.11, 0.03, 0.045};
        foot.dofs = {make_dof(prefix + "_ankle", Z, -0.9, 0.9)};
        return add(foot);
    };

    auto add_arm = [&](const std::string& prefix, double side) {
        LinkSpec uarm;
        uarm.name = prefix + "_uarm";
        uarm.parent = torso_i;
        uarm.parent_offset = {0.0, 0.42, side * s.shoulder_width / 2.0};
        uarm.length = 0.30;
        uarm.mass = 2.2;
        uarm.box_center = {0.0, -0.15, 0.0};
        uarm.half_extents = {0.05, 0.15, 0.05};
        uarm.dofs = {make_dof(prefix + "_shoulder", Z, -3.0, 3.0)};
        const int uarm_i = add(uarm);

        LinkSpec farm;
        farm.name = prefix + "_farm";
        farm.parent = uarm_i;
        farm.parent_offset = {0.0, -0.30, 0.0};
        farm.length = 0.28;
        farm.mass = 1.5;
        farm.box_center = {0.0, -0.14, 0.0};
        farm.half_extents = {0.04, 0.14, 0.04};
        farm.dofs = {make_dof(prefix + "_elbow", Z, 0.0, 2.61, 0.0)};
        return add(farm);
    };

    const int l_foot = add_leg("l", -1.0);
    const int r_foot = add_leg("r", +1.0);
    const int l_farm = add_arm("l", -1.0);
    const int r_farm = add_arm("r", +1.0);

    s.end_effectors[static_cast<int>(EndEffector::LeftFoot)] =
        EndEffectorSpec{l_foot, {0.05, -0.06, 0.0}};
    s.end_effectors[static_cast<int>(EndEffector::RightFoot)] =
        EndEffectorSpec{r_foot, {0.05, -0.06, 0.0}};
    s.end_effectors[static_cast<int>(EndEffector::LeftHand)] =
        EndEffectorSpec{l_farm, {0.0, -0.28, 0.0}};
    s.end_effectors[static_cast<int>(EndEffector::RightHand)] =
        EndEffectorSpec{r_farm, {0.0, -0.28, 0.0}};

    finalize(s);
    return s;
}

CharacterSpec make_rod(double lower_length, double upper_length) {
    if (!(lower_length > 0.0) || !(upper_length > 0.0)) {
        throw ConfigError("rod link lengths must be positive");
    }
    CharacterSpec s;
    s.name = "rod";
    s.shoulder_width = 0.0;
    s.hip_width = 0.0;
    s.planar = true;

    const double density = 8.0; // kg per meter, equal radial dimensions
    LinkSpec lower;
    lower.name = "lower";
    lower.parent = -1;
    lower.length = lower_length;
    lower.mass = density * lower_length;
    lower.box_center = {0.0, 0.0, 0.0};
    lower.half_extents = {0.04, lower_length / 2.0, 0.04};
    s.links.push_back(lower);

    LinkSpec upper;
    upper.name = "upper";
    upper.parent = 0;
    upper.parent_offset = {0.0, lower_length / 2.0, 0.0};
    upper.length = upper_length;
    upper.mass = density * upper_length;
    upper.box_center = {0.0, upper_length / 2.0, 0.0};
    upper.half_extents = {0.04, upper_length / 2.0, 0.04};
    upper.dofs = {make_dof("fold", Eigen::Vector3d::UnitZ(), -3.1415926535897931,
                           3.1415926535897931)};
    s.links.push_back(upper);

    s.end_effectors[static_cast<int>(EndEffector::RightFoot)] =
        EndEffectorSpec{0, {0.0, -lower_length / 2.0, 0.0}};
    s.end_effectors[static_cast<int>(EndEffector::RightHand)] =
        EndEffectorSpec{1, {0.0, upper_length, 0.0}};

    finalize(s);
    return s;
}

CharacterSpec scaled(const CharacterSpec& spec, double s) {
    if (!(s > 0.0)) throw ConfigError("scale factor must be positive");
    CharacterSpec out = spec;
    out.shoulder_width *= s;
    out.hip_width *= s;
    for (LinkSpec& l : out.links) {
        l.parent_offset *= s;
        l.length *= s;
        l.box_center *= s;
        l.half_extents *= s;
        l.mass *= s * s * s;
        for (DofSpec& d : l.dofs) d.kp = d.kd = d.torque_limit = 0.0; // re-derive below
    }
    for (auto& ee : out.end_effectors) {
        if (ee.has_value()) ee->local_offset *= s;
    }
    derive_limb_chains(out);
    derive_servo_gains(out);
    out.validate();
    return out;
}

namespace {

json dof_to_json(const DofSpec& d) {
    return json{{"name", d.name},        {"axis", vec3_to_json(d.axis)},
                {"min", d.min_angle},    {"max", d.max_angle},
                {"kp", d.kp},            {"kd", d.kd},
                {"torque_limit", d.torque_limit}, {"rest", d.rest_angle}};
}

DofSpec dof_from_json(const json& j) {
    DofSpec d;
    d.name = j.at("name").get<std::string>();
    d.axis = vec3_from_json(j.at("axis"), "dof axis").normalized();
    d.min_angle = j.at("min").get<double>();
    d.max_angle = j.at("max").get<double>();
    d.kp = j.value("kp", 0.0);
    d.kd = j.value("kd", 0.0);
    d.torque_limit = j.value("torque_limit", 0.0);
    d.rest_angle = j.value("rest", 0.0);
    return d;
}

} // namespace

std::string character_to_json(const CharacterSpec& spec) {
    json j;
    j["name"] = spec.name;
    j["shoulder_width"] = spec.shoulder_width;
    j["hip_width"] = spec.hip_width;
    j["planar"] = spec.planar;
    json links = json::array();
    for (const LinkSpec& l : spec.links) {
        json jl;
        jl["name"] = l.name;
        jl["parent"] = l.parent < 0 ? "" : spec.links[l.parent].name;
        jl["parent_offset"] = vec3_to_json(l.parent_offset);
        jl["length"] = l.length;
        jl["mass"] = l.mass;
        jl["box_center"] = vec3_to_json(l.box_center);
        jl["half_extents"] = vec3_to_json(l.half_extents);
        json dofs = json::array();
        for (const DofSpec& d : l.dofs) dofs.push_back(dof_to_json(d));
        jl["dofs"] = std::move(dofs);
        links.push_back(std::move(jl));
    }
    j["links"] = std::move(links);
    json ees = json::object();
    for (int e = 0; e < kEndEffectorCount; ++e) {
        const auto& ee = spec.end_effectors[e];
        if (!ee.has_value()) continue;
        ees[to_string(static_cast<EndEffector>(e))] = {
            {"link", spec.links[ee->link].name}, {"offset", vec3_to_json(ee->local_offset)}};
    }
    j["end_effectors"] = std::move(ees);
    return j.dump(2) + "\n";
}

CharacterSpec parse_character_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid character JSON: ") + e.what());
    }
    try {
        CharacterSpec spec;
        spec.name = j.value("name", "character");
        spec.shoulder_width = j.at("shoulder_width").get<double>();
        spec.hip_width = j.at("hip_width").get<double>();
        spec.planar = j.value("planar", false);

        std::map<std::string, int> by_name;
        for (const json& jl : j.at("links")) {
            LinkSpec l;
            l.name = jl.at("name").get<std::string>();
            const std::string parent = jl.value("parent", "");
            if (parent.empty()) {
                l.parent = -1;
            } else {
                auto it = by_name.find(parent);
                if (it == by_name.end()) {
                    throw ConfigError("link '" + l.name + "' references unknown parent '" +
                                      parent + "' (parents must be declared first)");
                }
                l.parent = it->second;
            }
            l.parent_offset = vec3_from_json(jl.value("parent_offset", json::array({0, 0, 0})),
                                             "parent_offset");
            l.length = jl.at("length").get<double>();
            l.mass = jl.at("mass").get<double>();
            l.box_center = vec3_from_json(jl.at("box_center"), "box_center");
            l.half_extents = vec3_from_json(jl.at("half_extents"), "half_extents");
            for (const json& jd : jl.value("dofs", json::array())) {
                l.dofs.push_back(dof_from_json(jd));
            }
            by_name[l.name] = static_cast<int>(spec.links.size());
            spec.links.push_back(std::move(l));
        }

        const json ees = j.value("end_effectors", json::object());
        for (auto it = ees.begin(); it != ees.end(); ++it) {
            int idx = -1;
            for (int e = 0; e < kEndEffectorCount; ++e) {
                if (it.key() == to_string(static_cast<EndEffector>(e))) idx = e;
            }
            if (idx < 0) throw ConfigError("unknown end-effector id '" + it.key() + "'");
            const std::string link_name = it.value().at("link").get<std::string>();
            auto lit = by_name.find(link_name);
            if (lit == by_name.end()) {
                throw ConfigError("end-effector '" + it.key() + "' references unknown link '" +
                                  link_name + "'");
            }
            spec.end_effectors[idx] =
                EndEffectorSpec{lit->second, vec3_from_json(it.value().at("offset"), "offset")};
        }

        spec.validate();
        derive_limb_chains(spec);
        derive_servo_gains(spec); // fills only gains left at zero
        return spec;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid character file: ") + e.what());
    }
}

CharacterSpec load_character_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open character file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_character_json(ss.str());
}

void save_character_file(const CharacterSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write character file: " + path);
    out << character_to_json(spec);
}

std::optional<CharacterSpec> builtin_character(const std::string& name) {
    if (name == "biped15") return make_biped15();
    if (name == "biped9") return make_biped9();
    if (name == "planar12") return make_planar12();
    if (name.rfind("rod:", 0) == 0) {
        const auto rest = name.substr(4);
        const auto sep = rest.find(':');
        if (sep == std::string::npos) return std::nullopt;
        try {
            return make_rod(std::stod(rest.substr(0, sep)), std::stod(rest.substr(sep + 1)));
        } catch (const std::invalid_argument&) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

} // namespace risectl
