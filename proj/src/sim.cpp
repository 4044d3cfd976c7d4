#include "risectl/sim.hpp"

#include <algorithm>
#include <cmath>

namespace risectl {

namespace {

Eigen::Matrix3d box_inertia_local(double mass, const Eigen::Vector3d& half) {
    const Eigen::Vector3d f = 2.0 * half;
    Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();
    inertia(0, 0) = mass / 12.0 * (f.y() * f.y() + f.z() * f.z());
    inertia(1, 1) = mass / 12.0 * (f.x() * f.x() + f.z() * f.z());
    inertia(2, 2) = mass / 12.0 * (f.x() * f.x() + f.y() * f.y());
    return inertia;
}

Eigen::Quaterniond quat_exp(const Eigen::Vector3d& w) {
    const double angle = w.norm();
    if (angle < 1e-12) return Eigen::Quaterniond::Identity();
    return Eigen::Quaterniond(Eigen::AngleAxisd(angle, w / angle));
}

Eigen::Vector3d quat_log(const Eigen::Quaterniond& q) {
    Eigen::AngleAxisd aa(q.normalized());
    double angle = aa.angle();
    if (angle > M_PI) angle -= 2.0 * M_PI; // shortest arc
    return angle * aa.axis();
}

} // namespace

double servo_torque(const JointServo& servo, double theta, double theta_dot) {
    if (servo.kp < 0.0 || servo.kd < 0.0 || !(servo.torque_limit > 0.0)) {
        throw ConfigError("servo needs kp >= 0, kd >= 0, torque_limit > 0");
    }
    const double raw = servo.kp * (servo.target - theta) - servo.kd * theta_dot;
    return std::clamp(raw, -servo.torque_limit, servo.torque_limit);
}

ArticulatedSim::ArticulatedSim(const CharacterSpec& spec, const SimConfig& config)
    : spec_(spec), config_(config) {
    spec_.validate();
    nj_ = spec_.joint_dof_count();
    nv_ = 6 + nj_;

    for (int li = 0; li < spec_.link_count(); ++li) {
        for (size_t d = 0; d < spec_.links[li].dofs.size(); ++d) {
            dofs_.push_back({li, static_cast<int>(d), &spec_.links[li].dofs[d]});
        }
    }
    ancestor_dofs_.resize(spec_.link_count());
    for (int li = 1; li < spec_.link_count(); ++li) {
        ancestor_dofs_[li] = ancestor_dofs_[spec_.links[li].parent];
        const int base = spec_.dof_index(li);
        for (size_t d = 0; d < spec_.links[li].dofs.size(); ++d) {
            ancestor_dofs_[li].push_back(base + static_cast<int>(d));
        }
    }

    link_tf_.resize(spec_.link_count());
    link_states_.resize(spec_.link_count());
    dof_axis_world_.resize(nj_);
    dof_origin_world_.resize(nj_);

    pose_ = SkeletonPose::neutral(spec_);
    vel_ = Eigen::VectorXd::Zero(nv_);
    target_angles_ = pose_.joint_angles;
    last_torques_ = Eigen::VectorXd::Zero(nj_);
    refresh_kinematics();
}

void ArticulatedSim::set_pose(const SkeletonPose& pose) {
    pose_ = pose;
    pose_.root_orientation.normalize();
    if (pose_.joint_angles.size() != nj_) {
        throw ConfigError("pose joint vector does not match the character's DOF count");
    }
    clamp_to_limits(spec_, pose_);
    vel_.setZero();
    refresh_kinematics();
}

void ArticulatedSim::set_velocity(const Eigen::VectorXd& v) {
    if (v.size() != nv_) throw ConfigError("velocity vector size mismatch");
    vel_ = v;
    refresh_kinematics();
}

void ArticulatedSim::set_targets(const SkeletonPose& target) {
    if (target.joint_angles.size() != nj_) {
        throw ConfigError("target joint vector does not match the character's DOF count");
    }
    target_angles_ = target.joint_angles;
    int k = 0;
    for (const LinkSpec& l : spec_.links) {
        for (const DofSpec& d : l.dofs) {
            target_angles_[k] = std::clamp(target_angles_[k], d.min_angle, d.max_angle);
            ++k;
        }
    }
}

void ArticulatedSim::set_root_prescribed(bool on) {
    root_prescribed_ = on;
    have_drive_ = false;
}

void ArticulatedSim::drive_root(const Eigen::Vector3d& position,
                                const Eigen::Quaterniond& orientation) {
    driven_pos_ = position;
    driven_orn_ = orientation.normalized();
    have_drive_ = true;
}

void ArticulatedSim::set_contacts(const std::array<bool, kEndEffectorCount>& pinned) {
    for (int e = 0; e < kEndEffectorCount; ++e) {
        const auto ee = static_cast<EndEffector>(e);
        if (pinned[e] && !pins_.is_active(ee)) {
            pin(ee);
        } else if (!pinned[e] && pins_.is_active(ee)) {
            release(ee);
        }
    }
}

void ArticulatedSim::pin(EndEffector ee) {
    const Eigen::Vector3d p = end_effector(ee);
    if (std::abs(p.y()) > 0.05) {
        throw PinTooFarError(std::string("cannot pin ") + to_string(ee) + ": end-effector is " +
                             std::to_string(p.y()) + " m from the ground plane");
    }
    pins_.set(ee, {p.x(), 0.0, p.z()});
}

void ArticulatedSim::release(EndEffector ee) { pins_.release(ee); }

void ArticulatedSim::refresh_kinematics() {
    link_tf_[0] = Eigen::Isometry3d::Identity();
    link_tf_[0].linear() = pose_.root_orientation.toRotationMatrix();
    link_tf_[0].translation() = pose_.root_position;
    for (int li = 1; li < spec_.link_count(); ++li) {
        const LinkSpec& l = spec_.links[li];
        const Eigen::Isometry3d& parent = link_tf_[l.parent];
        const Eigen::Vector3d origin = parent * l.parent_offset;
        Eigen::Matrix3d rot = parent.rotation();
        const int base = spec_.dof_index(li);
        for (size_t d = 0; d < l.dofs.size(); ++d) {
            const int g = base + static_cast<int>(d);
            dof_axis_world_[g] = rot * l.dofs[d].axis;
            dof_origin_world_[g] = origin;
            rot = rot * Eigen::AngleAxisd(pose_.joint_angles[g], l.dofs[d].axis)
                            .toRotationMatrix();
        }
        link_tf_[li].linear() = rot;
        link_tf_[li].translation() = origin;
    }

    const Eigen::Vector3d w_root = vel_.segment<3>(3);
    for (int li = 0; li < spec_.link_count(); ++li) {
        LinkState& s = link_states_[li];
        s.transform = link_tf_[li];
        s.com = link_tf_[li] * spec_.links[li].box_center;
        Eigen::Vector3d w = w_root;
        for (int g : ancestor_dofs_[li]) w += vel_[6 + g] * dof_axis_world_[g];
        s.angular_velocity = w;
        s.com_velocity = point_velocity(li, s.com);
    }
}

Eigen::Vector3d ArticulatedSim::point_velocity(int link, const Eigen::Vector3d& p) const {
    Eigen::Vector3d v = vel_.head<3>() + vel_.segment<3>(3).cross(p - pose_.root_position);
    for (int g : ancestor_dofs_[link]) {
        v += vel_[6 + g] * dof_axis_world_[g].cross(p - dof_origin_world_[g]);
    }
    return v;
}

void ArticulatedSim::point_jacobian(int link, const Eigen::Vector3d& p,
                                    Eigen::MatrixXd& jac) const {
    jac.setZero(3, nv_);
    jac.block<3, 3>(0, 0).setIdentity();
    const Eigen::Vector3d r = p - pose_.root_position;
    for (int k = 0; k < 3; ++k) {
        jac.col(3 + k) = Eigen::Vector3d::Unit(k).cross(r);
    }
    for (int g : ancestor_dofs_[link]) {
        jac.col(6 + g) = dof_axis_world_[g].cross(p - dof_origin_world_[g]);
    }
}

Eigen::MatrixXd ArticulatedSim::mass_matrix() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nv_, nv_);
    Eigen::MatrixXd jv(3, nv_), jw(3, nv_);
    for (int li = 0; li < spec_.link_count(); ++li) {
        const LinkSpec& l = spec_.links[li];
        const Eigen::Vector3d c = link_states_[li].com;
        point_jacobian(li, c, jv);
        jw.setZero();
        jw.block<3, 3>(0, 3).setIdentity();
        for (int g : ancestor_dofs_[li]) jw.col(6 + g) = dof_axis_world_[g];
        const Eigen::Matrix3d inertia =
            link_tf_[li].rotation() * box_inertia_local(l.mass, l.half_extents) *
            link_tf_[li].rotation().transpose();
        m.noalias() += l.mass * jv.transpose() * jv;
        m.noalias() += jw.transpose() * inertia * jw;
    }
    return m;
}

Eigen::VectorXd ArticulatedSim::bias_forces() const {
    const int n = spec_.link_count();
    const Eigen::Vector3d g_vec(0.0, -config_.gravity, 0.0);

    // Forward pass: zero-acceleration (bias) angular/linear accelerations.
    std::vector<Eigen::Vector3d> alpha(n), a_origin(n), a_com(n);
    alpha[0].setZero();
    a_origin[0].setZero();
    {
        const Eigen::Vector3d w0 = link_states_[0].angular_velocity;
        const Eigen::Vector3d rc = link_states_[0].com - pose_.root_position;
        a_com[0] = w0.cross(w0.cross(rc));
    }
    for (int li = 1; li < n; ++li) {
        const int p = spec_.links[li].parent;
        const Eigen::Vector3d& o_p = link_tf_[p].translation();
        const Eigen::Vector3d& o_i = link_tf_[li].translation();
        const Eigen::Vector3d w_p = link_states_[p].angular_velocity;
        a_origin[li] = a_origin[p] + alpha[p].cross(o_i - o_p) + w_p.cross(w_p.cross(o_i - o_p));
        Eigen::Vector3d al = alpha[p];
        Eigen::Vector3d w_run = w_p;
        for (int g : ancestor_dofs_[li]) {
            if (spec_.link_of_dof(g) != li) continue;
            const Eigen::Vector3d aw = dof_axis_world_[g] * vel_[6 + g];
            al += w_run.cross(aw);
            w_run += aw;
        }
        alpha[li] = al;
        const Eigen::Vector3d rc = link_states_[li].com - o_i;
        const Eigen::Vector3d w_i = link_states_[li].angular_velocity;
        a_com[li] = a_origin[li] + alpha[li].cross(rc) + w_i.cross(w_i.cross(rc));
    }

    // Backward pass: subtree force/torque about each link origin.
    std::vector<Eigen::Vector3d> f_tot(n, Eigen::Vector3d::Zero());
    std::vector<Eigen::Vector3d> n_tot(n, Eigen::Vector3d::Zero());
    for (int li = n - 1; li >= 0; --li) {
        const LinkSpec& l = spec_.links[li];
        const Eigen::Vector3d w = link_states_[li].angular_velocity;
        const Eigen::Matrix3d inertia =
            link_tf_[li].rotation() * box_inertia_local(l.mass, l.half_extents) *
            link_tf_[li].rotation().transpose();
        const Eigen::Vector3d f = l.mass * (a_com[li] - g_vec);
        const Eigen::Vector3d tau_com = inertia * alpha[li] + w.cross(inertia * w);
        const Eigen::Vector3d origin =
            li == 0 ? pose_.root_position : link_tf_[li].translation();
        f_tot[li] += f;
        n_tot[li] += tau_com + (link_states_[li].com - origin).cross(f);
        if (li > 0) {
            const int p = spec_.links[li].parent;
            const Eigen::Vector3d origin_p =
                p == 0 ? pose_.root_position : link_tf_[p].translation();
            f_tot[p] += f_tot[li];
            n_tot[p] += n_tot[li] + (origin - origin_p).cross(f_tot[li]);
        }
    }

    Eigen::VectorXd bias = Eigen::VectorXd::Zero(nv_);
    bias.head<3>() = f_tot[0];
    bias.segment<3>(3) = n_tot[0];
    for (int g = 0; g < nj_; ++g) {
        bias[6 + g] = dof_axis_world_[g].dot(n_tot[spec_.link_of_dof(g)]);
    }
    return bias;
}

void ArticulatedSim::apply_generalized_displacement(const Eigen::VectorXd& dq) {
    pose_.root_position += dq.head<3>();
    pose_.root_orientation = (quat_exp(dq.segment<3>(3)) * pose_.root_orientation).normalized();
    for (int g = 0; g < nj_; ++g) pose_.joint_angles[g] += dq[6 + g];
}

void ArticulatedSim::project_pins_velocity(const Eigen::LDLT<Eigen::MatrixXd>& solver) {
    const auto active = pins_.active_contacts();
    if (active.empty()) return;
    Eigen::MatrixXd jac(3, nv_);
    for (int sweep = 0; sweep < 4; ++sweep) {
        for (const Contact& c : active) {
            const EndEffectorSpec& ee = spec_.end_effector(c.id);
            const Eigen::Vector3d p = link_tf_[ee.link] * ee.local_offset;
            point_jacobian(ee.link, p, jac);
            if (root_prescribed_) jac.leftCols<6>().setZero();
            const Eigen::MatrixXd minv_jt = solver.solve(jac.transpose());
            Eigen::Matrix3d s = jac * minv_jt;
            s.diagonal().array() += 1e-9;
            const Eigen::Vector3d u = jac * vel_;
            vel_.noalias() -= minv_jt * s.ldlt().solve(u).eval();
        }
    }
}

void ArticulatedSim::project_pins_position(const Eigen::LDLT<Eigen::MatrixXd>& solver) {
    const auto active = pins_.active_contacts();
    if (active.empty()) return;
    Eigen::MatrixXd jac(3, nv_);
    for (int sweep = 0; sweep < config_.pin_sweeps; ++sweep) {
        double worst = 0.0;
        for (const Contact& c : active) {
            const EndEffectorSpec& ee = spec_.end_effector(c.id);
            const Eigen::Vector3d p = link_tf_[ee.link] * ee.local_offset;
            const Eigen::Vector3d err = p - c.position;
            worst = std::max(worst, err.norm());
            if (err.norm() < config_.pin_tolerance) continue;
            point_jacobian(ee.link, p, jac);
            if (root_prescribed_) jac.leftCols<6>().setZero();
            const Eigen::MatrixXd minv_jt = solver.solve(jac.transpose());
            Eigen::Matrix3d s = jac * minv_jt;
            s.diagonal().array() += 1e-9;
            const Eigen::VectorXd dq = -minv_jt * s.ldlt().solve(err).eval();
            apply_generalized_displacement(dq);
            refresh_kinematics();
        }
        if (worst < config_.pin_tolerance) break;
    }
}

void ArticulatedSim::clamp_joint_limits() {
    for (int g = 0; g < nj_; ++g) {
        const DofSpec& d = *dofs_[g].spec;
        double& a = pose_.joint_angles[g];
        if (a < d.min_angle) {
            a = d.min_angle;
            vel_[6 + g] = std::max(vel_[6 + g], 0.0);
        } else if (a > d.max_angle) {
            a = d.max_angle;
            vel_[6 + g] = std::min(vel_[6 + g], 0.0);
        }
    }
}

void ArticulatedSim::check_finite() const {
    if (!vel_.allFinite() || !pose_.joint_angles.allFinite() ||
        !pose_.root_position.allFinite()) {
        throw SimulationDivergedError("non-finite state at t=" + std::to_string(time_));
    }
    if (vel_.cwiseAbs().maxCoeff() > config_.velocity_limit ||
        pose_.root_position.cwiseAbs().maxCoeff() > 1e3) {
#ifdef RISECTL_SIM_DEBUG
        int worst = 0;
        vel_.cwiseAbs().maxCoeff(&worst);
        fprintf(stderr, "[simdbg] blow-up t=%.3f worst dof %d vel=%.1f\n", time_, worst,
                vel_[worst]);
        for (int g = 0; g < nv_; ++g) {
            if (std::abs(vel_[g]) > 0.2 * config_.velocity_limit) {
                fprintf(stderr, "[simdbg]   dof %d vel=%.1f\n", g, vel_[g]);
            }
        }
#endif
        throw SimulationDivergedError("velocity blow-up at t=" + std::to_string(time_));
    }
}

void ArticulatedSim::step() {
    const double dt = config_.dt;

    const Eigen::MatrixXd m = mass_matrix();
    const Eigen::VectorXd bias = bias_forces();

    // Base force/matrix contributions independent of the servo clamp state:
    // ground contact (spring normal force explicit, normal damping implicit,
    // clamped viscous tangential friction on box corners) and the bias forces.
    Eigen::MatrixXd a_base = m;
    Eigen::VectorXd f_base = -bias;
    Eigen::MatrixXd jac(3, nv_);
    for (int li = 0; li < spec_.link_count(); ++li) {
        const auto corners = link_box_corners(spec_, link_tf_[li], li);
        bool any = false;
        for (const auto& c : corners) any = any || c.y() < 0.0;
        if (!any) continue;
        const double mass = spec_.links[li].mass;
        for (const auto& p : corners) {
            if (p.y() >= 0.0) continue;
            const double pen = -p.y();
            const double normal = config_.ground_stiffness * pen;
            const Eigen::Vector3d u = point_velocity(li, p);
            Eigen::Vector3d tangential(u.x(), 0.0, u.z());
            const double speed = tangential.norm();
            Eigen::Vector3d friction = Eigen::Vector3d::Zero();
            if (speed > 1e-9) {
                const double cap_stability = 0.2 * mass / (dt * 4.0);
                const double c_eff = std::min(
                    {config_.tangent_damping, cap_stability, config_.friction * normal / speed});
                friction = -c_eff * tangential;
            }
            point_jacobian(li, p, jac);
            f_base.noalias() +=
                jac.transpose() * Eigen::Vector3d(friction.x(), normal, friction.z());
            // Normal spring and damper both implicit (force evaluated against
            // the post-step corner velocity/predicted penetration), so stiff
            // ground stays stable for light links.
            a_base.noalias() += dt * (dt * config_.ground_stiffness + config_.ground_damping) *
                                jac.row(1).transpose() * jac.row(1);
        }
    }

    Eigen::VectorXd v_root = Eigen::VectorXd::Zero(6);
    if (root_prescribed_ && have_drive_) {
        v_root.head<3>() = (driven_pos_ - pose_.root_position) / dt;
        v_root.tail<3>() = quat_log(driven_orn_ * pose_.root_orientation.conjugate()) / dt;
    }

    // Servo torques evaluated against the post-step state (stable-PD): the
    // spring/damper move into the system matrix, so arbitrary stiffness stays
    // stable. Torque limits are honored by re-solving saturated DOFs as
    // constant-torque actuators (the clamp set grows monotonically per step).
    std::vector<char> clamped(nj_, 0);
    Eigen::VectorXd tau_fixed = Eigen::VectorXd::Zero(nj_);
    Eigen::LDLT<Eigen::MatrixXd> solver;
    for (int pass = 0; pass < 3; ++pass) {
        Eigen::MatrixXd a = a_base;
        Eigen::VectorXd force = f_base;
        for (int g = 0; g < nj_; ++g) {
            const DofSpec& d = *dofs_[g].spec;
            if (clamped[g]) {
                // Saturated drive: constant torque at the limit, but the
                // actuator still brakes — dropping the implicit damping here
                // lets light links bang-bang at the step rate and blow up.
                force[6 + g] += tau_fixed[g];
                a(6 + g, 6 + g) += dt * d.kd;
            } else {
                // Velocity coefficient max(kd, dt*kp): damping-rich joints keep
                // their exact kd; stiff joints get the full stable-PD term.
                force[6 + g] += d.kp * (target_angles_[g] - pose_.joint_angles[g]);
                a(6 + g, 6 + g) += dt * std::max(d.kd, dt * d.kp);
            }
        }
        Eigen::VectorXd rhs = m * vel_ + dt * force;
        if (root_prescribed_) {
            rhs.tail(nj_) -= a.bottomLeftCorner(nj_, 6) * v_root;
            a.topRows<6>().setZero();
            a.leftCols<6>().setZero();
            a.topLeftCorner<6, 6>().setIdentity();
            rhs.head<6>() = v_root;
        }
        solver.compute(a);
        vel_ = solver.solve(rhs);

        bool grew = false;
        for (int g = 0; g < nj_; ++g) {
            if (clamped[g]) {
                last_torques_[g] = tau_fixed[g];
                continue;
            }
            const DofSpec& d = *dofs_[g].spec;
            const double tau = d.kp * (target_angles_[g] - pose_.joint_angles[g]) -
                               std::max(d.kd, dt * d.kp) * vel_[6 + g];
            if (std::abs(tau) > d.torque_limit) {
                clamped[g] = 1;
                tau_fixed[g] = std::copysign(d.torque_limit, tau);
                grew = true;
            }
            last_torques_[g] = std::clamp(tau, -d.torque_limit, d.torque_limit);
        }
        if (!grew) break;
    }

    project_pins_velocity(solver);

    // Semi-implicit position update.
    pose_.root_position += dt * vel_.head<3>();
    pose_.root_orientation =
        (quat_exp(dt * vel_.segment<3>(3)) * pose_.root_orientation).normalized();
    pose_.joint_angles += dt * vel_.tail(nj_);
    if (root_prescribed_ && have_drive_) {
        pose_.root_position = driven_pos_; // exact tracking, no fd drift
        pose_.root_orientation = driven_orn_;
    }
    refresh_kinematics();

    // Pins and joint limits interact (clamping a joint moves the limb); iterate
    // the two projections, ending on the clamp so limits hold exactly.
    for (int round = 0; round < 3; ++round) {
        project_pins_position(solver);
        clamp_joint_limits();
        refresh_kinematics();
        if (max_pin_error() < config_.pin_tolerance) break;
    }

    check_finite();
    time_ += dt;
}

Eigen::Vector3d ArticulatedSim::com() const {
    Eigen::Vector3d weighted = Eigen::Vector3d::Zero();
    double mass = 0.0;
    for (int li = 0; li < spec_.link_count(); ++li) {
        weighted += spec_.links[li].mass * link_states_[li].com;
        mass += spec_.links[li].mass;
    }
    return weighted / mass;
}

Eigen::Vector3d ArticulatedSim::com_velocity() const {
    Eigen::Vector3d weighted = Eigen::Vector3d::Zero();
    double mass = 0.0;
    for (int li = 0; li < spec_.link_count(); ++li) {
        weighted += spec_.links[li].mass * link_states_[li].com_velocity;
        mass += spec_.links[li].mass;
    }
    return weighted / mass;
}

Eigen::Vector3d ArticulatedSim::end_effector(EndEffector ee) const {
    const EndEffectorSpec& e = spec_.end_effector(ee);
    return link_tf_[e.link] * e.local_offset;
}

Eigen::Vector3d ArticulatedSim::end_effector_velocity(EndEffector ee) const {
    const EndEffectorSpec& e = spec_.end_effector(ee);
    return point_velocity(e.link, link_tf_[e.link] * e.local_offset);
}

double ArticulatedSim::max_pin_error() const {
    double worst = 0.0;
    for (const Contact& c : pins_.active_contacts()) {
        const EndEffectorSpec& e = spec_.end_effector(c.id);
        worst = std::max(worst, (link_tf_[e.link] * e.local_offset - c.position).norm());
    }
    return worst;
}

double ArticulatedSim::kinetic_energy() const {
    return 0.5 * vel_.dot(mass_matrix() * vel_);
}

double ArticulatedSim::potential_energy() const {
    double e = 0.0;
    for (int li = 0; li < spec_.link_count(); ++li) {
        e += spec_.links[li].mass * config_.gravity * link_states_[li].com.y();
    }
    return e;
}

} // namespace risectl
