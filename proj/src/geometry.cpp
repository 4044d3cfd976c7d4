#include "risectl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace risectl {

namespace {

constexpr double kGroundTol = 1e-9;   // contacts must sit on the ground plane
constexpr double kMergeTol = 1e-9;    // coincident-point merge distance
constexpr double kCollinearTol = 1e-12;
constexpr double kDistanceSnap = 1e-12; // snap sub-noise distances to exactly 0

double cross2(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b) {
    const Eigen::Vector2d ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 <= 0.0) return (p - a).norm();
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

// Andrew monotone chain; returns CCW hull without repeated last point.
std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
    std::sort(pts.begin(), pts.end(), [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                              return (a - b).norm() <= kMergeTol;
                          }),
              pts.end());
    const int n = static_cast<int>(pts.size());
    if (n <= 2) return pts;

    std::vector<Eigen::Vector2d> hull(2 * n);
    int k = 0;
    for (int i = 0; i < n; ++i) { // lower chain
        while (k >= 2 && cross2(hull[k - 2], hull[k - 1], pts[i]) <= kCollinearTol) --k;
        hull[k++] = pts[i];
    }
    for (int i = n - 2, lower = k + 1; i >= 0; --i) { // upper chain
        while (k >= lower && cross2(hull[k - 2], hull[k - 1], pts[i]) <= kCollinearTol) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

SupportRegion classify(std::vector<Eigen::Vector2d> pts) {
    SupportRegion region;
    if (pts.empty()) throw NoSupportError("no active contacts to form a support region");

    // Fully collinear inputs come back from the hull as their sorted extremes.
    std::vector<Eigen::Vector2d> hull = convex_hull(std::move(pts));
    if (hull.size() == 1) {
        region.kind = RegionKind::Point;
        region.vertices = std::move(hull);
    } else if (hull.size() == 2) {
        region.kind = RegionKind::Segment;
        region.vertices = std::move(hull);
    } else {
        region.kind = RegionKind::Polygon;
        region.vertices = std::move(hull);
    }
    return region;
}

// Clip a CCW polygon against the halfplane on the left of the directed line a->b
// shifted inward by `offset` (Sutherland-Hodgman step).
std::vector<Eigen::Vector2d> clip_halfplane(const std::vector<Eigen::Vector2d>& poly,
                                            const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                                            double offset) {
    const Eigen::Vector2d dir = (b - a).normalized();
    const Eigen::Vector2d inward(-dir.y(), dir.x()); // left normal of a CCW edge
    const double d0 = inward.dot(a) + offset;        // keep points with inward.p >= d0

    std::vector<Eigen::Vector2d> out;
    const int n = static_cast<int>(poly.size());
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d& p = poly[i];
        const Eigen::Vector2d& q = poly[(i + 1) % n];
        const double sp = inward.dot(p) - d0;
        const double sq = inward.dot(q) - d0;
        if (sp >= 0.0) out.push_back(p);
        if ((sp > 0.0 && sq < 0.0) || (sp < 0.0 && sq > 0.0)) {
            out.push_back(p + (sp / (sp - sq)) * (q - p));
        }
    }
    return out;
}

} // namespace

const char* to_string(EndEffector ee) {
    switch (ee) {
        case EndEffector::LeftFoot: return "LeftFoot";
        case EndEffector::RightFoot: return "RightFoot";
        case EndEffector::LeftHand: return "LeftHand";
        case EndEffector::RightHand: return "RightHand";
    }
    return "?";
}

void ContactSet::set(EndEffector id, const Eigen::Vector3d& position, bool active) {
    if (std::abs(position.y()) > kGroundTol) {
        throw ConfigError(std::string("contact for ") + to_string(id) +
                          " is not on the ground plane (y=" + std::to_string(position.y()) + ")");
    }
    Eigen::Vector3d snapped = position;
    snapped.y() = 0.0;
    slots_[static_cast<int>(id)] = Contact{id, snapped, active};
}

void ContactSet::release(EndEffector id) { slots_[static_cast<int>(id)].reset(); }

void ContactSet::clear() {
    for (auto& s : slots_) s.reset();
}

bool ContactSet::is_active(EndEffector id) const {
    const auto& s = slots_[static_cast<int>(id)];
    return s.has_value() && s->active;
}

int ContactSet::active_count() const {
    int n = 0;
    for (const auto& s : slots_)
        if (s.has_value() && s->active) ++n;
    return n;
}

std::vector<Contact> ContactSet::active_contacts() const {
    std::vector<Contact> out;
    for (const auto& s : slots_)
        if (s.has_value() && s->active) out.push_back(*s);
    return out;
}

std::vector<Eigen::Vector2d> ContactSet::active_ground_points() const {
    std::vector<Eigen::Vector2d> out;
    for (const auto& s : slots_)
        if (s.has_value() && s->active) out.push_back(ground_projection(s->position));
    return out;
}

Eigen::Vector2d SupportRegion::centroid() const {
    if (vertices.empty()) return Eigen::Vector2d::Zero();
    if (kind != RegionKind::Polygon) {
        Eigen::Vector2d c = Eigen::Vector2d::Zero();
        for (const auto& v : vertices) c += v;
        return c / static_cast<double>(vertices.size());
    }
    // Area centroid; falls back to the vertex mean for near-zero areas.
    double a2 = 0.0;
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    const int n = static_cast<int>(vertices.size());
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d& p = vertices[i];
        const Eigen::Vector2d& q = vertices[(i + 1) % n];
        const double w = p.x() * q.y() - q.x() * p.y();
        a2 += w;
        c += w * (p + q);
    }
    if (std::abs(a2) < 1e-15) {
        c.setZero();
        for (const auto& v : vertices) c += v;
        return c / static_cast<double>(n);
    }
    return c / (3.0 * a2);
}

double SupportRegion::area() const {
    if (kind != RegionKind::Polygon) return 0.0;
    double a2 = 0.0;
    const int n = static_cast<int>(vertices.size());
    for (int i = 0; i < n; ++i) {
        a2 += vertices[i].x() * vertices[(i + 1) % n].y() -
              vertices[(i + 1) % n].x() * vertices[i].y();
    }
    return 0.5 * a2;
}

SupportRegion build_support_region(const ContactSet& contacts) {
    return classify(contacts.active_ground_points());
}

SupportRegion hull_region(const std::vector<Eigen::Vector2d>& points) {
    return classify(points);
}

BalanceQuery query_balance(const SupportRegion& region, const Eigen::Vector3d& com) {
    BalanceQuery q;
    q.com_projection = ground_projection(com);

    double d = 0.0;
    switch (region.kind) {
        case RegionKind::Point:
            d = (q.com_projection - region.vertices[0]).norm();
            break;
        case RegionKind::Segment:
            d = point_segment_distance(q.com_projection, region.vertices[0], region.vertices[1]);
            break;
        case RegionKind::Polygon: {
            const int n = static_cast<int>(region.vertices.size());
            bool contained = true;
            for (int i = 0; i < n && contained; ++i) {
                if (cross2(region.vertices[i], region.vertices[(i + 1) % n], q.com_projection) <
                    -kDistanceSnap) {
                    contained = false;
                }
            }
            if (contained) {
                d = 0.0;
            } else {
                d = std::numeric_limits<double>::infinity();
                for (int i = 0; i < n; ++i) {
                    d = std::min(d, point_segment_distance(q.com_projection, region.vertices[i],
                                                           region.vertices[(i + 1) % n]));
                }
            }
            break;
        }
    }
    if (d < kDistanceSnap) d = 0.0;
    q.distance = d;
    q.inside = (d == 0.0);
    return q;
}

Eigen::Vector2d nearest_region_point(const SupportRegion& region, const Eigen::Vector2d& p) {
    auto segment_point = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        const Eigen::Vector2d ab = b - a;
        const double len2 = ab.squaredNorm();
        if (len2 <= 0.0) return a;
        const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
        return Eigen::Vector2d(a + t * ab);
    };
    switch (region.kind) {
        case RegionKind::Point:
            return region.vertices[0];
        case RegionKind::Segment:
            return segment_point(region.vertices[0], region.vertices[1]);
        case RegionKind::Polygon: {
            const int n = static_cast<int>(region.vertices.size());
            bool contained = true;
            for (int i = 0; i < n && contained; ++i) {
                if (cross2(region.vertices[i], region.vertices[(i + 1) % n], p) < -kDistanceSnap) {
                    contained = false;
                }
            }
            if (contained) return p;
            Eigen::Vector2d best = region.vertices[0];
            double best_d = std::numeric_limits<double>::infinity();
            for (int i = 0; i < n; ++i) {
                const Eigen::Vector2d q =
                    segment_point(region.vertices[i], region.vertices[(i + 1) % n]);
                const double d = (p - q).norm();
                if (d < best_d) {
                    best_d = d;
                    best = q;
                }
            }
            return best;
        }
    }
    return region.vertices[0];
}

SupportRegion shrink_region(const SupportRegion& region, double margin) {
    if (margin < 0.0) throw ConfigError("shrink margin must be non-negative");
    if (margin == 0.0) return region;

    SupportRegion out;
    switch (region.kind) {
        case RegionKind::Point:
            out = region;
            break;
        case RegionKind::Segment: {
            const Eigen::Vector2d a = region.vertices[0];
            const Eigen::Vector2d b = region.vertices[1];
            const double len = (b - a).norm();
            if (len <= 2.0 * margin) {
                out.kind = RegionKind::Point;
                out.vertices = {0.5 * (a + b)};
            } else {
                const Eigen::Vector2d dir = (b - a) / len;
                out.kind = RegionKind::Segment;
                out.vertices = {a + margin * dir, b - margin * dir};
            }
            break;
        }
        case RegionKind::Polygon: {
            std::vector<Eigen::Vector2d> poly = region.vertices;
            const int n = static_cast<int>(region.vertices.size());
            for (int i = 0; i < n && !poly.empty(); ++i) {
                poly = clip_halfplane(poly, region.vertices[i], region.vertices[(i + 1) % n],
                                      margin);
            }
            if (poly.empty()) {
                out.kind = RegionKind::Point;
                out.vertices = {region.centroid()};
            } else {
                out = classify(std::move(poly));
            }
            break;
        }
    }
    return out;
}

} // namespace risectl
