#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "risectl/errors.hpp"

namespace risectl {

// World frame: +y up, ground plane y = 0. Ground coordinates are (x, z).
inline Eigen::Vector2d ground_projection(const Eigen::Vector3d& p) {
    return {p.x(), p.z()};
}

enum class EndEffector : int { LeftFoot = 0, RightFoot = 1, LeftHand = 2, RightHand = 3 };
constexpr int kEndEffectorCount = 4;

const char* to_string(EndEffector ee);

struct Contact {
    EndEffector id;
    Eigen::Vector3d position; // on the ground plane (|y| <= 1e-9, snapped to 0)
    bool active = true;
};

// At most one contact per end-effector. Positions must lie on the ground plane.
class ContactSet {
public:
    void set(EndEffector id, const Eigen::Vector3d& position, bool active = true);
    void release(EndEffector id);
    void clear();

    const std::optional<Contact>& get(EndEffector id) const { return slots_[static_cast<int>(id)]; }
    bool is_active(EndEffector id) const;
    int active_count() const;
    std::vector<Contact> active_contacts() const;
    std::vector<Eigen::Vector2d> active_ground_points() const;

private:
    std::array<std::optional<Contact>, kEndEffectorCount> slots_;
};

enum class RegionKind { Point, Segment, Polygon };

// Convex support polygon on the ground plane. Vertices are counter-clockwise and
// deduplicated; degenerate contact sets yield Point or Segment kinds.
struct SupportRegion {
    RegionKind kind = RegionKind::Point;
    std::vector<Eigen::Vector2d> vertices;

    bool degenerate() const { return kind != RegionKind::Polygon; }
    Eigen::Vector2d centroid() const;
    double area() const;
};

struct BalanceQuery {
    Eigen::Vector2d com_projection;
    double distance = 0.0; // horizontal distance from the region, 0 iff inside
    bool inside = false;   // boundary counts as inside
};

// Convex hull of the active contacts' ground projections. Throws NoSupportError
// when no contact is active.
SupportRegion build_support_region(const ContactSet& contacts);

// Convex hull of arbitrary ground points (used for contact patches with extent).
SupportRegion hull_region(const std::vector<Eigen::Vector2d>& points);

// Distance of the CoM ground projection from the region. inside == (distance == 0).
BalanceQuery query_balance(const SupportRegion& region, const Eigen::Vector3d& com);

// Closest point of the region to a ground point (the point itself when inside).
Eigen::Vector2d nearest_region_point(const SupportRegion& region, const Eigen::Vector2d& p);

// Region shrunk inward by a uniform margin. Collapses to the centroid when the
// margin exceeds the inradius; degenerate regions shorten along their extent.
SupportRegion shrink_region(const SupportRegion& region, double margin);

} // namespace risectl
