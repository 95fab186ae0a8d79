#include "packlab/settle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "packlab/separation.hpp"

namespace packlab {

namespace {

constexpr double BIG = 1e30;

// Spatial hash over particle centers. Cell size = 2 * circumradius, so any
// pair that can touch lies in adjacent cells.
class Grid {
public:
    Grid(double half_extent, double zmax, double cell)
        : cell_(cell), half_(half_extent),
          nx_(std::max(1, int(std::ceil(2 * half_extent / cell)))),
          nz_(std::max(1, int(std::ceil(zmax / cell)))),
          cells_(std::size_t(nx_) * nx_ * nz_) {}

    int index(const Vec3& p) const {
        int ix = std::clamp(int((p.x + half_) / cell_), 0, nx_ - 1);
        int iy = std::clamp(int((p.y + half_) / cell_), 0, nx_ - 1);
        int iz = std::clamp(int(p.z / cell_), 0, nz_ - 1);
        return (iz * nx_ + iy) * nx_ + ix;
    }

    void insert(int i, const Vec3& p) { cells_[index(p)].push_back(i); }

    void remove(int i, const Vec3& p) {
        auto& c = cells_[index(p)];
        c.erase(std::find(c.begin(), c.end(), i));
    }

    void move(int i, const Vec3& from, const Vec3& to) {
        int a = index(from), b = index(to);
        if (a == b) return;
        auto& c = cells_[a];
        c.erase(std::find(c.begin(), c.end(), i));
        cells_[std::size_t(b)].push_back(i);
    }

    // neighbors in the 27 cells around p, excluding `self`
    template <class F>
    void for_neighbors(const Vec3& p, int self, F&& f) const {
        int ix = std::clamp(int((p.x + half_) / cell_), 0, nx_ - 1);
        int iy = std::clamp(int((p.y + half_) / cell_), 0, nx_ - 1);
        int iz = std::clamp(int(p.z / cell_), 0, nz_ - 1);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int jx = ix + dx, jy = iy + dy, jz = iz + dz;
                    if (jx < 0 || jx >= nx_ || jy < 0 || jy >= nx_ || jz < 0 || jz >= nz_)
                        continue;
                    for (int j : cells_[(std::size_t(jz) * nx_ + jy) * nx_ + jx])
                        if (j != self) f(j);
                }
    }

    // neighbors within Chebyshev distance `range` of p (covering cell block);
    // guarantees every particle with |center - p| <= range is visited
    template <class F>
    void for_range(const Vec3& p, double range, int self, F&& f) const {
        int k = std::max(1, int(std::ceil(range / cell_)));
        int ix = std::clamp(int((p.x + half_) / cell_), 0, nx_ - 1);
        int iy = std::clamp(int((p.y + half_) / cell_), 0, nx_ - 1);
        int iz = std::clamp(int(p.z / cell_), 0, nz_ - 1);
        int jx0 = std::max(0, ix - k), jx1 = std::min(nx_ - 1, ix + k);
        int jy0 = std::max(0, iy - k), jy1 = std::min(nx_ - 1, iy + k);
        int jz0 = std::max(0, iz - k), jz1 = std::min(nz_ - 1, iz + k);
        for (int jz = jz0; jz <= jz1; ++jz)
            for (int jy = jy0; jy <= jy1; ++jy)
                for (int jx = jx0; jx <= jx1; ++jx)
                    for (int j : cells_[(std::size_t(jz) * nx_ + jy) * nx_ + jx])
                        if (j != self) f(j);
    }

    // neighbors near the swept segment p .. p + u*t (bounding-box walk)
    template <class F>
    void for_segment(const Vec3& p, const Vec3& u, double t, int self, F&& f) const {
        Vec3 q = p + u * t;
        double x0 = std::min(p.x, q.x) - cell_, x1 = std::max(p.x, q.x) + cell_;
        double y0 = std::min(p.y, q.y) - cell_, y1 = std::max(p.y, q.y) + cell_;
        double z0 = std::min(p.z, q.z) - cell_, z1 = std::max(p.z, q.z) + cell_;
        int ix0 = std::clamp(int((x0 + half_) / cell_), 0, nx_ - 1);
        int ix1 = std::clamp(int((x1 + half_) / cell_), 0, nx_ - 1);
        int iy0 = std::clamp(int((y0 + half_) / cell_), 0, nx_ - 1);
        int iy1 = std::clamp(int((y1 + half_) / cell_), 0, nx_ - 1);
        int iz0 = std::clamp(int(z0 / cell_), 0, nz_ - 1);
        int iz1 = std::clamp(int(z1 / cell_), 0, nz_ - 1);
        for (int jz = iz0; jz <= iz1; ++jz)
            for (int jy = iy0; jy <= iy1; ++jy)
                for (int jx = ix0; jx <= ix1; ++jx)
                    for (int j : cells_[(std::size_t(jz) * nx_ + jy) * nx_ + jx])
                        if (j != self) f(j);
    }

private:
    double cell_, half_;
    int nx_, nz_;
    std::vector<std::vector<int>> cells_;
};

double container_bound_radius(const Container& c) {
    if (c.kind() == ContainerKind::ScaledConvex) {
        // conservative: use height as a bound on the lateral extent too
        return std::max(c.height(), c.interior_radius(0.0) * 3.0);
    }
    return c.r() + c.height();  // bumps are bounded by d << height
}

// Projects gravity onto the feasible cone of contact normals. Returns a unit
// descent direction, or nullopt when blocked (locally stable).
std::optional<Vec3> descent_direction(const Vec3& gdir, const std::vector<Vec3>& normals) {
    Vec3 dir = gdir;
    for (int rep = 0; rep < 6; ++rep) {
        for (const Vec3& n : normals) {
            double s = dir.dot(n);
            if (s < 0) dir -= n * s;
        }
    }
    for (const Vec3& n : normals) {
        if (dir.dot(n) < -1e-9) return std::nullopt;  // sharp cone, blocked
    }
    double m2 = dir.norm2();
    if (m2 < 1e-24) return std::nullopt;
    // cyclic projection can leave a direction that raises the potential;
    // only strict descent counts as progress
    if (dir.dot(gdir) <= 1e-7 * std::sqrt(m2)) return std::nullopt;
    return dir / std::sqrt(m2);
}

class Bed {
public:
    Bed(const Container& container, const ConvexSolid& solid, double headroom)
        : container_(container), solid_(solid), d_(solid.diameter()),
          reach_(2.0 * solid.circumradius()),
          grid_(container_bound_radius(container) + reach_,
                container.height() + headroom + 2 * reach_, std::max(reach_, 1e-12)) {}

    const std::vector<Pose>& poses() const { return poses_; }
    std::vector<Pose>& poses_mut() { return poses_; }

    void add(const Pose& p) {
        poses_.push_back(p);
        grid_.insert(int(poses_.size()) - 1, p.translation);
    }

    void remove_last() {
        grid_.remove(int(poses_.size()) - 1, poses_.back().translation);
        poses_.pop_back();
    }

    void set_pose(int i, const Pose& p) {
        grid_.move(i, poses_[std::size_t(i)].translation, p.translation);
        poses_[std::size_t(i)] = p;
    }

    void load(const std::vector<Pose>& poses) {
        for (const Pose& p : poses) add(p);
    }

    double top_of(int i) const { return solid_.support_value(poses_[std::size_t(i)], {0, 0, 1}); }

    // ---- ball path ----

    bool ball_free(const Vec3& p, int self, double clearance) const {
        if (!container_.inside_ball(p, solid_.radius(), -clearance)) return false;
        bool ok = true;
        double dd = (d_ + clearance) * (d_ + clearance);
        grid_.for_neighbors(p, self, [&](int j) {
            if ((poses_[std::size_t(j)].translation - p).norm2() < dd) ok = false;
        });
        return ok;
    }

    // steepest-descent settle of ball i from its current position
    double settle_ball(int i, const Vec3& gdir, double start_scale, double min_scale) {
        const double R = solid_.radius();
        Vec3 p = poses_[std::size_t(i)].translation;
        const Vec3 p0 = p;
        std::vector<Vec3> normals;
        normals.reserve(8);

        for (double delta = start_scale; delta >= min_scale; delta *= 0.5) {
            const double eps_c = std::max(1e-9 * d_, 1.3 * delta * delta / d_);
            int stall = 0;
            for (int iter = 0; iter < 400; ++iter) {
                normals.clear();
                container_.ball_contacts(p, R, eps_c, normals);
                std::size_t wall_n = normals.size();
                grid_.for_neighbors(p, i, [&](int j) {
                    Vec3 w = p - poses_[std::size_t(j)].translation;
                    double dist = w.norm();
                    if (dist - d_ <= eps_c && dist > 0) normals.push_back(w / dist);
                });
                // deterministic nudge off a knife-edge apex contact
                if (wall_n == 0 && normals.size() == 1 &&
                    normals[0].dot(-gdir) > 1.0 - 1e-10) {
                    double phi =
                        2.0 * M_PI *
                        (double(CounterRng::mix64(std::uint64_t(i) + 1) >> 11) * 0x1.0p-53);
                    p += Vec3{std::cos(phi), std::sin(phi), 0} * (1e-7 * d_);
                    continue;
                }
                auto u = descent_direction(gdir, normals);
                if (!u) break;  // stable at this scale
                double tmax = normals.empty() ? BIG : delta;
                double t = toi(i, p, *u, tmax);
                if (t <= 1e-14 * d_) {
                    if (++stall > 2) break;
                    continue;
                }
                stall = 0;
                p += *u * t;
#ifdef PACKLAB_SETTLE_TRACE
                if (i == PACKLAB_SETTLE_TRACE) {
                    std::fprintf(stderr,
                                 "STEP i=%d delta=%.4f iter=%d p=(%.9f,%.9f,%.9f) "
                                 "u=(%.6f,%.6f,%.6f) t=%.9f tmax=%.3g nc=%zu\n",
                                 i, delta, iter, p.x, p.y, p.z, u->x, u->y, u->z, t, tmax,
                                 normals.size());
                }
#endif
#ifdef PACKLAB_SETTLE_TRACE
                if (!container_.inside_ball(p, R, 1e-8 * d_)) {
                    std::fprintf(stderr,
                                 "ESCAPE i=%d p=(%.9f,%.9f,%.9f) rho=%.9f u=(%.6f,%.6f,%.6f) "
                                 "t=%.9f tmax=%.3g delta=%.6f ncontacts=%zu\n",
                                 i, p.x, p.y, p.z, p.radial(), u->x, u->y, u->z, t, tmax, delta,
                                 normals.size());
                }
#endif
            }
        }
        set_pose(i, Pose::at(p));
#ifdef PACKLAB_SETTLE_TRACE
        grid_.for_neighbors(p, i, [&](int j) {
            double dist = (p - poses_[std::size_t(j)].translation).norm();
            if (dist < d_ - 1e-8) {
                std::fprintf(stderr,
                             "OVERLAP after settle_ball i=%d j=%d pen=%.9f p=(%.6f,%.6f,%.6f) "
                             "q=(%.6f,%.6f,%.6f) start=(%.6f,%.6f,%.6f)\n",
                             i, j, d_ - dist, p.x, p.y, p.z,
                             poses_[std::size_t(j)].translation.x,
                             poses_[std::size_t(j)].translation.y,
                             poses_[std::size_t(j)].translation.z, p0.x, p0.y, p0.z);
            }
        });
#endif
        return (p - p0).norm();
    }

    // settle with lateral restarts: keep the lowest rest among `kicks` kicked
    // re-settles (breaks fragile two-contact bridges over pores)
    double settle_ball_kicked(int i, const Vec3& gdir, double start_scale, double min_scale,
                              CounterRng& prng, int kicks, double kick_r) {
        const Vec3 before = poses_[std::size_t(i)].translation;
        settle_ball(i, gdir, start_scale, min_scale);
        for (int k = 0; k < kicks; ++k) {
            Pose best = poses_[std::size_t(i)];
            Vec3 cand = best.translation + prng.uniform_disk(kick_r);
            if (!ball_free(cand, i, 0.0)) continue;
            set_pose(i, Pose::at(cand));
            settle_ball(i, gdir, start_scale, min_scale);
            if (poses_[std::size_t(i)].translation.dot(gdir) <
                best.translation.dot(gdir) + 1e-9 * d_) {
                set_pose(i, best);  // no strict descent: revert
            }
        }
        return (poses_[std::size_t(i)].translation - before).norm();
    }

    // first contact time along unit dir, capped at tmax (finite result:
    // the container floor is always downstream of gravity)
    double toi(int i, const Vec3& p, const Vec3& u, double tmax) const {
        const double R = solid_.radius();
        double best = container_.ball_toi(p, R, u, tmax == BIG ? BIG : tmax);
        if (best == std::numeric_limits<double>::infinity()) best = tmax;
        double seg = std::min(best, tmax);
        auto check = [&](int j) {
            Vec3 w = p - poses_[std::size_t(j)].translation;
            double b = u.dot(w);
            // receding, or tangent within the projection cone tolerance; a
            // tangential chord moves away from a sphere, so skipping the cap
            // here cannot create real penetration
            if (b >= -1e-8 * d_) return;
            double c0 = w.norm2() - d_ * d_;
            double disc = b * b - c0;
            if (disc < 0) return;
            double t = -b - std::sqrt(disc);
            if (t >= 0 && t < best) best = t;
            else if (t < 0 && c0 < 0 && 0 < best) best = 0;  // rounding: already touching
        };
        grid_.for_segment(p, u, seg, i, check);
        return std::min(best, tmax == BIG ? best : tmax);
    }

    // ---- polytope path ----

    bool poly_free(const Pose& pose, int self, double clearance) const {
        if (container_.solid_clearance(solid_, pose) < clearance) return false;
        bool ok = true;
        double rr = (reach_ + clearance) * (reach_ + clearance);
        grid_.for_neighbors(pose.translation, self, [&](int j) {
            if (!ok) return;
            if ((poses_[std::size_t(j)].translation - pose.translation).norm2() >= rr) return;
            if (overlaps(solid_, pose, solid_, poses_[std::size_t(j)], clearance)) ok = false;
        });
        return ok;
    }

    double poly_min_gap(const Pose& pose, int self, std::vector<std::pair<int, Vec3>>* contacts,
                        double contact_tol) const {
        double mg = container_.solid_clearance(solid_, pose);
        // ranged query: advancement steps up to reach_, so every particle whose
        // gap could close within one step must be visited (unseen centers are
        // farther than 2*reach_, leaving positive gap after any single step)
        grid_.for_range(pose.translation, 2.0 * reach_, self, [&](int j) {
            Vec3 cc = poses_[std::size_t(j)].translation - pose.translation;
            double center_gap = cc.norm() - reach_;
            if (center_gap > contact_tol + 0.1 * d_) {
                mg = std::min(mg, center_gap);
                return;
            }
            Vec3 dir;
            double g = distance_or_zero(solid_, pose, solid_, poses_[std::size_t(j)], &dir);
            mg = std::min(mg, g);
            if (contacts && g <= contact_tol) contacts->emplace_back(j, dir);
        });
        return mg;
    }

    // Largest travel along unit dir keeping the container clearance and every
    // pair separation certificate at or above `margin`. Directional
    // conservative advancement: a separating plane with unit normal n and gap
    // g erodes at rate -dir.n under translation, so it allows
    // (g - margin) / (-dir.n) of travel and never obstructs tangential slides.
    double poly_toi(const Pose& pose, int self, const Vec3& dir, double margin,
                    double tmax) const {
        double t = container_.solid_toi(solid_, pose, dir, margin, tmax);
        grid_.for_range(pose.translation, reach_ + tmax, self, [&](int j) {
            if (t <= 0) return;
            const Pose& other = poses_[std::size_t(j)];
            // centers further apart than reach + travel cannot engage
            if ((other.translation - pose.translation).norm() - reach_ >= tmax + margin) return;
            Vec3 n;
            double g = distance_or_zero(solid_, pose, solid_, other, &n);
            if (g <= 0) { t = 0; return; }
            double rate = -dir.dot(n);
            if (rate <= 1e-12) return;  // receding or tangent: the gap cannot close
            t = std::min(t, std::max(0.0, (g - margin) / rate));
        });
        return t;
    }

    double settle_poly(int i, const Vec3& gdir, double min_scale) {
        Pose pose = poses_[std::size_t(i)];
        const Vec3 p0 = pose.translation;
        const double target = 1e-7 * d_;  // resting clearance
        std::vector<std::pair<int, Vec3>> contacts;
        std::vector<Vec3> normals;

        for (double delta = 0.25 * d_; delta >= min_scale; delta *= 0.5) {
            const double eps_c = std::max(target * 2, 1.3 * delta * delta / d_);
            for (int iter = 0; iter < 160; ++iter) {
                contacts.clear();
                normals.clear();
                container_.solid_contacts(solid_, pose, eps_c, normals);
                poly_min_gap(pose, i, &contacts, eps_c);
                for (auto& [j, n] : contacts) normals.push_back(n);
                auto u = descent_direction(gdir, normals);
                bool moved = false;
                if (u) {
                    double remaining = normals.empty() ? BIG : delta;
                    for (int k = 0; k < 24 && remaining > 0; ++k) {
                        double L = std::min(remaining, reach_);
                        double t = poly_toi(pose, i, *u, target, L);
                        if (t <= 1e-12 * d_) break;
                        pose.translation += *u * t;
                        remaining -= t;
                        moved = true;
                        if (t < L - 1e-12 * d_) break;  // constraint engaged: re-project
                    }
                }
                // small-angle rotational descent about the deepest support point
                bool rotated = rotate_step(i, pose, gdir, delta, eps_c, target);
                if (!moved && !rotated) break;
            }
        }
        set_pose(i, pose);
        return (pose.translation - p0).norm();
    }

    bool rotate_step(int i, Pose& pose, const Vec3& gdir, double delta, double eps_c,
                     double target) {
        // pivot at the lowest support point (deepest along gravity)
        Vec3 pivot = solid_.support(pose, gdir);
        Vec3 lever = pose.translation - pivot;
        Vec3 axis = lever.cross(gdir);
        if (axis.norm2() < 1e-24) return false;
        axis = axis.normalized();
        double max_angle = std::min(2.0 * M_PI / 180.0, delta / std::max(reach_, 1e-12));
        for (double ang = max_angle; ang > max_angle / 16; ang *= 0.5) {
            Quat dq = Quat::from_axis_angle(axis, ang);
            Pose cand;
            cand.rotation = (dq * pose.rotation).normalized();
            cand.translation = pivot + dq.rotate(pose.translation - pivot);
            if (cand.translation.dot(-gdir) >= pose.translation.dot(-gdir) - 1e-15 * d_)
                continue;  // no potential gain
            if (!poly_free(cand, i, target * 0.5)) continue;
            (void)eps_c;
            pose = cand;
            return true;
        }
        return false;
    }

#ifdef PACKLAB_SETTLE_TRACE
    void verify_grid(const char* where) const {
        for (std::size_t i = 0; i < poses_.size(); ++i) {
            bool found = false;
            grid_.for_neighbors(poses_[i].translation, -1, [&](int j) {
                if (j == int(i)) found = true;
            });
            if (!found)
                std::fprintf(stderr, "GRIDBAD %s: ball %zu at (%.6f,%.6f,%.6f) not indexed\n",
                             where, i, poses_[i].translation.x, poses_[i].translation.y,
                             poses_[i].translation.z);
        }
    }
#endif

    const Container& container_;
    const ConvexSolid& solid_;
    double d_, reach_;
    Grid grid_;
    std::vector<Pose> poses_;
};

// deposit one particle: entry position, then settle to rest
// returns false if the particle could not be placed (discard)
bool deposit(Bed& bed, CounterRng& prng, double entry_z,
             const Vec3& gdir, double min_scale) {
    const ConvexSolid& K = bed.solid_;
    const Container& C = bed.container_;
    double rw = C.interior_radius(0.0) - K.circumradius();
    if (rw <= 0) throw SettleError("pour: container too small for a single particle");

    if (K.is_ball()) {
        // a slow pour lets each piece find a deep pocket: drop at several
        // candidate sites with kicked settling and keep the lowest rest
        const double d = K.diameter();
        int idx = -1;
        Pose best;
        bool have = false;
        for (int attempt = 0; attempt < 24; ++attempt) {
            Vec3 xy = prng.uniform_disk(rw);
            Vec3 entry{xy.x, xy.y, entry_z};
            if (idx < 0) {
                if (!bed.ball_free(entry, int(bed.poses().size()), 0.0)) continue;
                idx = int(bed.poses().size());
                bed.add(Pose::at(entry));
            } else {
                if (!bed.ball_free(entry, idx, 0.0)) continue;
                bed.set_pose(idx, Pose::at(entry));
            }
            bed.settle_ball_kicked(idx, gdir, 0.25 * d, min_scale, prng, 8, 0.35 * d);
            const Pose& rest = bed.poses()[std::size_t(idx)];
            if (!have || rest.translation.dot(gdir) > best.translation.dot(gdir)) {
                best = rest;
                have = true;
            }
        }
        if (idx < 0) return false;
        bed.set_pose(idx, best);
        return true;
    }
    for (int attempt = 0; attempt < 8; ++attempt) {
        Vec3 xy = prng.uniform_disk(rw);
        Pose pose;
        pose.translation = {xy.x, xy.y, entry_z};
        pose.rotation = prng.uniform_rotation();
        int idx = int(bed.poses().size());
        if (!bed.poly_free(pose, idx, 1e-7 * K.diameter())) continue;
        bed.add(pose);
        bed.settle_poly(idx, gdir, min_scale);
        return true;
    }
    return false;
}

double total_height_sum(const std::vector<Pose>& poses) {
    double s = 0;
    for (const Pose& p : poses) s += p.translation.z;
    return s;
}

} // namespace

PackingState pour(const Container& container, const ConvexSolid& solid,
                  const ProtocolSpec& spec, std::uint64_t rng_seed) {
    spec.validate();
    if (!(solid.diameter() < container.interior_radius(0.0)))
        throw SettleError("pour: solid diameter must be below the container radius");

    Bed bed(container, solid, spec.pour_height);
    CounterRng root(rng_seed);
    CounterRng pour_rng = root.stream(1);

    const double d = solid.diameter();
    const double min_scale = 1e-6 * d;
    const double stop_height = container.height() / 2.0;  // half-full margin
    double fill_so_far = 0.0;
    std::size_t discarded = 0;
    std::size_t placed = 0;
    const std::size_t limit =
        spec.target_count > 0 ? spec.target_count : std::size_t(1) << 40;

    while (placed < limit) {
        CounterRng prng = pour_rng.stream(placed + discarded);
        double entry = fill_so_far + spec.pour_height;
        std::size_t before = bed.poses().size();
        if (!deposit(bed, prng, entry, Vec3{0, 0, -1}, min_scale)) {
            ++discarded;
            if (discarded > 50 + limit / 10) break;
            continue;
        }
        int idx = int(before);
#ifdef PACKLAB_SETTLE_TRACE
        bed.verify_grid("after deposit");
#endif
        double top = bed.top_of(idx);
        if (top > stop_height && spec.target_count == 0) {
            // particle rests above the half-height margin: remove and stop
            // (keep state valid: it is the last one added)
            bed.remove_last();
            break;
        }
        fill_so_far = std::max(fill_so_far, top);
        ++placed;
    }

    PackingState st{container, solid, bed.poses(), rng_seed, {}};
    st.protocol_trace.push_back("pour n=" + std::to_string(st.count()) +
                                " discarded=" + std::to_string(discarded));
    audit_state(st);
    return st;
}

void agitate_cycle(PackingState& state, const ProtocolSpec& spec, CounterRng& rng) {
    if (state.poses.empty()) return;
    const ConvexSolid& K = state.solid;
    const double d = K.diameter();
    const double lift = spec.effective_lift(d);
    const double jitter = spec.resolved_jitter(d);
    if (lift <= 0.0) return;  // zero amplitude: fixed point

    const std::vector<Pose> saved = state.poses;
    const double pre_energy = total_height_sum(saved);
    const int n = int(state.poses.size());

    Bed bed(state.container, K, spec.pour_height + 2 * d);
    bed.load(state.poses);

    // phase 1: lift every particle by the effective amplitude with independent
    // lateral jitter, rejecting overlap/exit moves. Top-down order lets each
    // particle rise into the space the one above has just vacated, so the
    // whole bed takes part in the tap.
    std::vector<int> order(std::size_t(n), 0);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        double za = bed.poses()[std::size_t(a)].translation.z;
        double zb = bed.poses()[std::size_t(b)].translation.z;
        return za != zb ? za > zb : a < b;
    });
    for (int i : order) {
        Vec3 off = rng.uniform_disk(jitter);
        off.z = lift;
        Pose cand = bed.poses()[std::size_t(i)];
        cand.translation += off;
        if (K.is_ball()) {
            if (bed.ball_free(cand.translation, i, 0.0)) bed.set_pose(i, cand);
        } else {
            if (bed.poly_free(cand, i, 1e-7 * d)) bed.set_pose(i, cand);
        }
    }

    // phase 2: global resettle, bottom-up sweeps
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        double za = bed.poses()[std::size_t(a)].translation.z;
        double zb = bed.poses()[std::size_t(b)].translation.z;
        return za != zb ? za < zb : a < b;
    });
    const double start_scale = std::max(2.0 * lift, 0.05 * d);
    for (int sweep = 0; sweep < 30; ++sweep) {
        double max_move = 0.0;
        for (int i : order) {
            double moved;
            if (K.is_ball()) {
                // kicked settle on the first sweep ratchets particles into the
                // lowest nearby pocket; later sweeps only relax the bed
                moved = sweep == 0 ? bed.settle_ball_kicked(i, {0, 0, -1}, start_scale,
                                                            1e-6 * d, rng, 3, 0.35 * d)
                                   : bed.settle_ball(i, {0, 0, -1}, start_scale, 1e-6 * d);
            } else {
                moved = bed.settle_poly(i, {0, 0, -1}, 1e-5 * d);
            }
            max_move = std::max(max_move, moved);
        }
        if (max_move < 1e-6 * d) break;
    }

    // A cycle never increases the total potential energy: if the re-settled
    // bed ends higher than the pre-lift bed, the tap is rejected and the bed
    // keeps its best configuration (basin hopping with fresh jitter each tap).
    double post_energy = total_height_sum(bed.poses());
    if (post_energy > pre_energy + 1e-9 * d * n) {
        state.poses = saved;
    } else {
        state.poses = bed.poses();
    }
    audit_state(state);
}

void loosen(PackingState& state, const ProtocolSpec& spec, CounterRng& rng) {
    if (state.poses.empty()) return;
    const ConvexSolid& K = state.solid;
    const double d = K.diameter();
    const std::size_t n = state.count();

    // randomized re-deposition order
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = rng.uniform_index(i);
        std::swap(order[i - 1], order[j]);
    }

    Bed bed(state.container, K, spec.pour_height + 2 * d);
    const double min_scale = 2e-3 * d;  // first stable contact set, no fine polishing
    double fill_so_far = 0.0;
    std::size_t discarded = 0;

    for (std::size_t k = 0; k < n; ++k) {
        // tilt schedule: max_tilt -> 0 over loosen_cycles batches, slowly rotating
        int batch = int(double(k) * spec.loosen_cycles / double(n));
        double frac = spec.loosen_cycles > 1 ? double(batch) / (spec.loosen_cycles - 1) : 1.0;
        double tilt = spec.max_tilt_deg * (1.0 - frac) * M_PI / 180.0;
        double psi = 2.0 * M_PI * 2.0 * frac;  // two slow turns about the axis
        Vec3 gdir{-std::sin(tilt) * std::cos(psi), -std::sin(tilt) * std::sin(psi),
                  -std::cos(tilt)};
        CounterRng prng = rng.stream(1000 + k);
        if (!deposit(bed, prng, fill_so_far + spec.pour_height, gdir, min_scale)) {
            ++discarded;
            continue;
        }
        fill_so_far = std::max(fill_so_far, bed.top_of(int(bed.poses().size()) - 1));
    }

    state.poses = bed.poses();
    state.protocol_trace.push_back("loosen discarded=" + std::to_string(discarded));
    audit_state(state);
}

// Ideal densification for spheres: start from a poured bed, then model the
// grains as soft harmonic spheres and lower a lid onto the bed, re-minimizing
// the elastic energy (FIRE) after each lid step until the bed jams. The
// returned configuration is fully relaxed: residual overlaps are below
// 1e-10 d, well inside the validity tolerance.
PackingState densify_ideal(std::size_t count, const ConvexSolid& ball,
                           const Container& container, std::uint64_t rng_seed) {
    if (!ball.is_ball()) throw SettleError("densify_ideal: spheres only");
    if (count < 1) throw SettleError("densify_ideal: need at least one particle");
    const double R0 = ball.radius();
    const double d = 2 * R0;
    const double rw = container.interior_radius(0.0);
    if (rw <= R0) throw SettleError("densify_ideal: container too narrow");

    // initial bed: sequential deposition with the default pour settings
    ProtocolSpec pour_spec = ProtocolSpec::dense_pour_tap();
    pour_spec.agitation_cycles = 0;
    pour_spec.target_count = count;
    PackingState st = pour(container, ball, pour_spec, rng_seed);

    std::vector<Vec3> x(count), v(count, Vec3{}), F(count), x_ref(count);
    double H = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        x[i] = st.poses[i].translation;
        H = std::max(H, x[i].z + R0);
    }
    CounterRng rng = CounterRng(rng_seed).stream(7);

    // Verlet pair list, rebuilt when any particle strays half a skin
    const double skin = 0.15 * d;
    std::vector<std::pair<int, int>> pairs;
    auto rebuild = [&]() {
        pairs.clear();
        const double cut = d + skin, cut2 = cut * cut;
        const double cell = cut;
        int nx = std::max(1, int(std::ceil(2 * (rw + d) / cell)));
        int nz = std::max(1, int(std::ceil((H + d) / cell)));
        std::vector<std::vector<int>> cells(std::size_t(nx) * nx * nz);
        auto at = [&](double c, double lo) { return int((c - lo) / cell); };
        auto cof = [&](const Vec3& p) {
            int ix = std::clamp(at(p.x, -rw - d), 0, nx - 1);
            int iy = std::clamp(at(p.y, -rw - d), 0, nx - 1);
            int iz = std::clamp(at(p.z, 0.0), 0, nz - 1);
            return (std::size_t(iz) * nx + iy) * nx + ix;
        };
        for (std::size_t i = 0; i < count; ++i) cells[cof(x[i])].push_back(int(i));
        for (std::size_t i = 0; i < count; ++i) {
            const Vec3 p = x[i];
            int ix = std::clamp(at(p.x, -rw - d), 0, nx - 1);
            int iy = std::clamp(at(p.y, -rw - d), 0, nx - 1);
            int iz = std::clamp(at(p.z, 0.0), 0, nz - 1);
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        int jx = ix + dx, jy = iy + dy, jz = iz + dz;
                        if (jx < 0 || jx >= nx || jy < 0 || jy >= nx || jz < 0 || jz >= nz)
                            continue;
                        for (int j : cells[(std::size_t(jz) * nx + jy) * nx + jx])
                            if (j > int(i) && (x[std::size_t(j)] - p).norm2() < cut2)
                                pairs.emplace_back(int(i), j);
                    }
        }
        x_ref = x;
    };

    // harmonic forces from pair overlaps and the floor / wall / lid
    auto forces = [&]() {
        double worst = 0.0;
        for (std::size_t i = 0; i < count; ++i) F[i] = {0, 0, 0};
        for (auto [i, j] : pairs) {
            Vec3 w = x[std::size_t(i)] - x[std::size_t(j)];
            double dist2 = w.norm2();
            if (dist2 >= d * d) continue;
            double dist = std::sqrt(dist2);
            if (dist < 1e-14) continue;
            double over = d - dist;
            worst = std::max(worst, over);
            Vec3 f = w * (over / dist);
            F[std::size_t(i)] += f;
            F[std::size_t(j)] -= f;
        }
        const double rlim = rw - R0;
        for (std::size_t i = 0; i < count; ++i) {
            const Vec3 p = x[i];
            double rho = p.radial();
            if (rho > rlim && rho > 1e-14) {
                double over = rho - rlim;
                worst = std::max(worst, over);
                F[i] += Vec3{-p.x / rho, -p.y / rho, 0} * over;
            }
            if (p.z < R0) {
                worst = std::max(worst, R0 - p.z);
                F[i] += Vec3{0, 0, R0 - p.z};
            }
            if (p.z > H - R0) {
                worst = std::max(worst, p.z - (H - R0));
                F[i] += Vec3{0, 0, (H - R0) - p.z};
            }
        }
        return worst;
    };

    // harmonic force has units of length, so dt is dimensionless and the whole
    // dynamics commutes with uniform scaling
    double dt = 0.05, dt_max = 0.3, alpha = 0.1;
    int n_pos = 0;
    rebuild();
    double worst = forces();

    auto minimize = [&](double tol, long long max_steps) {
        long long steps = 0;
        while (worst > tol && steps < max_steps) {
            double P = 0;
            for (std::size_t i = 0; i < count; ++i) P += F[i].dot(v[i]);
            if (P > 0) {
                if (++n_pos > 5) {
                    dt = std::min(dt * 1.1, dt_max);
                    alpha *= 0.99;
                }
                double vn = 0, fn = 0;
                for (std::size_t i = 0; i < count; ++i) {
                    vn += v[i].norm2();
                    fn += F[i].norm2();
                }
                double s = fn > 0 ? std::sqrt(vn / fn) : 0.0;
                for (std::size_t i = 0; i < count; ++i)
                    v[i] = v[i] * (1 - alpha) + F[i] * (alpha * s);
            } else {
                n_pos = 0;
                dt *= 0.5;
                alpha = 0.1;
                for (std::size_t i = 0; i < count; ++i) v[i] = {0, 0, 0};
            }
            for (std::size_t i = 0; i < count; ++i) {
                v[i] += F[i] * (0.5 * dt);
                x[i] += v[i] * dt;
            }
            double mm = 0;
            for (std::size_t i = 0; i < count; ++i)
                mm = std::max(mm, (x[i] - x_ref[i]).norm2());
            if (std::sqrt(mm) > 0.5 * skin) rebuild();
            worst = forces();
            for (std::size_t i = 0; i < count; ++i) v[i] += F[i] * (0.5 * dt);
            ++steps;
        }
        return steps;
    };

    const double converged = 1e-11 * d;
    minimize(converged, 500'000);

    // lower the lid until the bed jams; bisect the lid step on failure, with
    // one annealing shake before giving a step up
    double dH = 4e-2 * d;
    const double dH_min = 1e-3 * d;
    while (dH >= dH_min) {
        double H_try = H - dH;
        if (H_try < 2.0 * d) break;
        double H_save = H;
        H = H_try;
        rebuild();
        worst = forces();
        minimize(converged, 60'000);
        if (worst > converged) {
            for (std::size_t i = 0; i < count; ++i)
                x[i] += rng.uniform_direction() * (0.05 * d * rng.uniform());
            rebuild();
            worst = forces();
            minimize(converged, 40'000);
        }
        if (worst > converged) {
            H = H_save;
            rebuild();
            worst = forces();
            minimize(converged, 200'000);
            dH *= 0.5;
        }
    }
    minimize(converged, 2'000'000);
    if (worst > 1e-10 * d)
        throw SettleError("densify_ideal: failed to relax, residual overlap " +
                          std::to_string(worst));

    st.poses.clear();
    st.poses.reserve(count);
    for (const Vec3& p : x) st.poses.push_back(Pose::at(p));
    st.protocol_trace.push_back("densify_ideal");
    audit_state(st);
    return st;
}

TrialResult run_protocol(const ConvexSolid& solid, const Container& container,
                         const ProtocolSpec& spec, std::uint64_t seed,
                         PackingState* state_out) {
    spec.validate();
    TrialResult res;
    res.seed = seed;

    PackingState st{container, solid, {}, seed, {}};
    if (spec.family == ProtocolFamily::DenseIdeal) {
        std::size_t n = spec.target_count > 0 ? spec.target_count : 500;
        st = densify_ideal(n, solid, container, seed);
    } else {
        st = pour(container, solid, spec, seed);
        if (spec.family == ProtocolFamily::DensePourTap) {
            CounterRng agit = CounterRng(seed).stream(2);
            for (int cycle = 0; cycle < spec.agitation_cycles; ++cycle) {
                agitate_cycle(st, spec, agit);
                res.density_history.push_back(apparent_density(st));
                ++res.cycles_executed;
                int w = spec.plateau_window;
                if (int(res.density_history.size()) >= 2 * w) {
                    double now = res.density_history.back();
                    double then = res.density_history[res.density_history.size() - w];
                    if (now - then < spec.plateau_tolerance) break;
                }
            }
        } else if (spec.family == ProtocolFamily::LooseRotate) {
            CounterRng lo = CounterRng(seed).stream(3);
            loosen(st, spec, lo);
            res.cycles_executed = spec.loosen_cycles;
        }
    }

    res.particle_count = st.count();
    if (!st.poses.empty()) {
        res.fill_height = fill_height(st);
        res.apparent_density = apparent_density(st);
        BulkDensity b = bulk_density_auto(st);
        res.bulk_density = b.value;
        res.bulk_stderr = b.stderr_est;
    }
    if (state_out) *state_out = std::move(st);
    return res;
}

double max_penetration(const PackingState& state) {
    if (state.poses.empty()) return 0.0;
    const ConvexSolid& K = state.solid;
    const double d = K.diameter();
    double reach = 2 * K.circumradius();
    Grid grid(container_bound_radius(state.container) + reach,
              state.container.height() + 4 * d, std::max(reach, 1e-12));
    for (std::size_t i = 0; i < state.count(); ++i)
        grid.insert(int(i), state.poses[i].translation);
    double worst = 0.0;
    for (std::size_t i = 0; i < state.count(); ++i) {
        const Pose& pi = state.poses[i];
        grid.for_neighbors(pi.translation, int(i), [&](int j) {
            if (j < int(i)) return;
            const Pose& pj = state.poses[std::size_t(j)];
            if (K.is_ball()) {
                double gap = (pi.translation - pj.translation).norm() - d;
                worst = std::max(worst, -gap);
            } else {
                if ((pi.translation - pj.translation).norm() > reach) return;
                SeparationResult s = separation(K, pi, K, pj);
                worst = std::max(worst, -s.gap);
            }
        });
        double cl = state.container.solid_clearance(K, pi);
        worst = std::max(worst, -cl);
    }
    return worst;
}

void audit_state(const PackingState& state) {
    double pen = max_penetration(state);
    double d = state.solid.diameter();
    if (pen > 1e-9 * d) {
        throw SettleError("audit: penetration " + std::to_string(pen) + " exceeds 1e-9 d (d=" +
                          std::to_string(d) + ")");
    }
}

} // namespace packlab
