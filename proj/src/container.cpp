#include "packlab/container.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace packlab {

namespace {

constexpr double INF = std::numeric_limits<double>::infinity();

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Halton radical inverse
double radical_inverse(std::uint64_t i, unsigned base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * double(i % base);
        i /= base;
    }
    return r;
}

} // namespace

Container Container::cylinder(double r) {
    if (!(r > 0.0)) throw std::invalid_argument("cylinder: r must be positive");
    Container c;
    c.kind_ = ContainerKind::Cylinder;
    c.r_ = r;
    c.height_ = 2.0 * r;
    c.spec_ = "cylinder:r=" + fmt17(r);
    return c;
}

Container Container::perturbed_cylinder(double r, double bump_limit, int n_theta, int n_z,
                                        double amplitude, std::uint64_t bump_seed) {
    if (!(r > 0.0) || bump_limit < 0.0 || n_theta < 1 || n_z < 1 || amplitude < 0.0 ||
        amplitude > 1.0)
        throw std::invalid_argument("perturbed_cylinder: bad parameters");
    Container c;
    c.kind_ = ContainerKind::PerturbedCylinder;
    c.r_ = r;
    c.height_ = 2.0 * r;
    c.n_theta_ = n_theta;
    c.n_z_ = n_z;
    c.bump_limit_ = bump_limit;
    c.amplitude_ = amplitude;
    c.bump_seed_ = bump_seed;
    CounterRng rng(bump_seed);
    c.bumps_.resize(std::size_t(n_theta) * n_z);
    for (double& b : c.bumps_) b = amplitude * bump_limit * rng.uniform();
    std::ostringstream os;
    os << "perturbed:r=" << fmt17(r) << ",d=" << fmt17(bump_limit) << ",nt=" << n_theta
       << ",nz=" << n_z << ",amp=" << fmt17(amplitude) << ",seed=" << bump_seed;
    c.spec_ = os.str();
    return c;
}

Container Container::scaled_convex(const ConvexSolid& base, double scale) {
    if (base.is_ball()) throw std::invalid_argument("scaled_convex: polytope base required");
    if (!(scale > 0.0)) throw std::invalid_argument("scaled_convex: scale must be positive");
    Container c;
    c.kind_ = ContainerKind::ScaledConvex;
    c.base_ = base;
    c.scale_ = scale;
    double zmin = INF, zmax = -INF;
    for (const Vec3& v : base.vertices()) {
        zmin = std::min(zmin, v.z * scale);
        zmax = std::max(zmax, v.z * scale);
    }
    // lowest point on the floor, centroid on the z-axis
    Vec3 shift{0, 0, -zmin};
    for (const Plane& f : base.facets()) {
        c.facets_.push_back({f.normal, f.offset * scale + f.normal.dot(shift)});
    }
    c.height_ = zmax - zmin;
    c.r_ = 0.0;  // set below from the inscribed cross-section
    Container tmp = c;
    c.r_ = tmp.interior_radius(0.0);
    std::ostringstream os;
    os << "convex:" << base.spec_string() << ";scale=" << fmt17(scale);
    c.spec_ = os.str();
    return c;
}

Container Container::parse(const std::string& spec) {
    auto num = [&](const std::string& s, const std::string& key) {
        auto pos = s.find(key + "=");
        if (pos == std::string::npos)
            throw std::invalid_argument("container spec '" + spec + "': missing " + key);
        return std::stod(s.substr(pos + key.size() + 1));
    };
    if (spec.rfind("cylinder:", 0) == 0) return cylinder(num(spec, "r"));
    if (spec.rfind("perturbed:", 0) == 0) {
        return perturbed_cylinder(num(spec, "r"), num(spec, "d"), int(num(spec, "nt")),
                                  int(num(spec, "nz")), num(spec, "amp"),
                                  std::uint64_t(num(spec, "seed")));
    }
    if (spec.rfind("convex:", 0) == 0) {
        auto semi = spec.find(";scale=");
        if (semi == std::string::npos)
            throw std::invalid_argument("container spec '" + spec + "': missing scale");
        std::string base_spec = spec.substr(7, semi - 7);
        double scale = std::stod(spec.substr(semi + 7));
        return scaled_convex(parse_solid_spec(base_spec), scale);
    }
    if (spec.rfind("cube:", 0) == 0) {
        // convenience: cube container with the given side length
        double side = num(spec, "side");
        return scaled_convex(make_platonic(PlatonicKind::Cube, 1.0), side);
    }
    throw std::invalid_argument("unknown container spec: " + spec);
}

double Container::wall_radius_at(const Vec3& center) const {
    if (kind_ == ContainerKind::Cylinder) return r_;
    if (kind_ == ContainerKind::ScaledConvex) return interior_radius(0.0);
    double theta = std::atan2(center.y, center.x);
    if (theta < 0) theta += 2.0 * M_PI;
    int it = std::min(n_theta_ - 1, int(theta / (2.0 * M_PI) * n_theta_));
    int iz = std::clamp(int(center.z / height_ * n_z_), 0, n_z_ - 1);
    double bmin = INF;
    for (int dt = -1; dt <= 1; ++dt) {
        int t = (it + dt + n_theta_) % n_theta_;
        for (int dz = -1; dz <= 1; ++dz) {
            int z = std::clamp(iz + dz, 0, n_z_ - 1);
            bmin = std::min(bmin, bumps_[std::size_t(z) * n_theta_ + t]);
        }
    }
    return r_ + bmin;
}

bool Container::inside_ball(const Vec3& c, double ball_r, double tol) const {
    if (kind_ == ContainerKind::ScaledConvex) {
        for (const Plane& f : facets_)
            if (f.slack(c) < ball_r - tol) return false;
        return true;
    }
    if (c.z < ball_r - tol || c.z > height_ - ball_r + tol) return false;
    return c.radial() <= wall_radius_at(c) - ball_r + tol;
}

double Container::ball_toi(const Vec3& c, double ball_r, const Vec3& dir, double tmax) const {
    double best = INF;
    if (kind_ == ContainerKind::ScaledConvex) {
        for (const Plane& f : facets_) {
            double rate = f.normal.dot(dir);
            if (rate <= 0) continue;  // moving away from this wall
            double slack = f.slack(c) - ball_r;
            // at or past the wall and still approaching: no free motion
            double t = slack <= 0 ? 0.0 : slack / rate;
            if (t < best) best = t;
        }
        return best > tmax ? INF : std::max(best, 0.0);
    }
    // floor / ceiling
    if (dir.z < 0) best = std::min(best, (ball_r - c.z) / dir.z);
    if (dir.z > 0) best = std::min(best, (height_ - ball_r - c.z) / dir.z);
    // wall (conservative local radius for the perturbed case)
    double W = wall_radius_at(c) - ball_r;
    double a = dir.x * dir.x + dir.y * dir.y;
    if (a > 0) {
        double b = 2.0 * (c.x * dir.x + c.y * dir.y);
        double c0 = c.x * c.x + c.y * c.y - W * W;
        double disc = b * b - 4 * a * c0;
        if (c0 >= 0 && (b >= 0 || disc < 0)) {
            // at or past the wall, and the ray never re-enters the interior: a
            // straight step can only keep the center outside (the chord of the
            // wall circle sags outward), so no free motion at all
            best = 0.0;
        } else if (disc >= 0) {
            double t = (-b + std::sqrt(disc)) / (2 * a);
            if (t >= 0) best = std::min(best, t);
        }
    }
    if (best > tmax) return INF;
    return std::max(best, 0.0);
}

void Container::ball_contacts(const Vec3& c, double ball_r, double tol,
                              std::vector<Vec3>& normals) const {
    if (kind_ == ContainerKind::ScaledConvex) {
        for (const Plane& f : facets_)
            if (f.slack(c) - ball_r <= tol) normals.push_back(-f.normal);
        return;
    }
    if (c.z - ball_r <= tol) normals.push_back({0, 0, 1});
    if (height_ - ball_r - c.z <= tol) normals.push_back({0, 0, -1});
    double rho = c.radial();
    if (wall_radius_at(c) - ball_r - rho <= tol && rho > 0) {
        normals.push_back({-c.x / rho, -c.y / rho, 0});
    }
}

double Container::solid_clearance(const ConvexSolid& solid, const Pose& pose) const {
    if (solid.is_ball()) {
        const Vec3& c = pose.translation;
        double R = solid.radius();
        if (kind_ == ContainerKind::ScaledConvex) {
            double m = INF;
            for (const Plane& f : facets_) m = std::min(m, f.slack(c) - R);
            return m;
        }
        double m = std::min(c.z - R, height_ - c.z - R);
        return std::min(m, wall_radius_at(c) - R - c.radial());
    }
    double m = INF;
    for (const Vec3& bv : solid.vertices()) {
        Vec3 v = pose.apply(bv);
        if (kind_ == ContainerKind::ScaledConvex) {
            for (const Plane& f : facets_) m = std::min(m, f.slack(v));
        } else {
            m = std::min({m, v.z, height_ - v.z, wall_radius_at(v) - v.radial()});
        }
    }
    return m;
}

void Container::solid_contacts(const ConvexSolid& solid, const Pose& pose, double tol,
                               std::vector<Vec3>& normals) const {
    if (solid.is_ball()) {
        ball_contacts(pose.translation, solid.radius(), tol, normals);
        return;
    }
    for (const Vec3& bv : solid.vertices()) {
        Vec3 v = pose.apply(bv);
        if (kind_ == ContainerKind::ScaledConvex) {
            for (const Plane& f : facets_)
                if (f.slack(v) <= tol) normals.push_back(-f.normal);
        } else {
            if (v.z <= tol) normals.push_back({0, 0, 1});
            if (height_ - v.z <= tol) normals.push_back({0, 0, -1});
            double rho = v.radial();
            if (wall_radius_at(v) - rho <= tol && rho > 0)
                normals.push_back({-v.x / rho, -v.y / rho, 0});
        }
    }
}

double Container::solid_toi(const ConvexSolid& solid, const Pose& pose, const Vec3& dir,
                            double margin, double tmax) const {
    if (solid.is_ball()) {
        double t = ball_toi(pose.translation, solid.radius() + margin, dir, tmax);
        return std::min(t, tmax);
    }
    double best = tmax;
    for (const Vec3& bv : solid.vertices()) {
        Vec3 v = pose.apply(bv);
        if (kind_ == ContainerKind::ScaledConvex) {
            for (const Plane& f : facets_) {
                double rate = f.normal.dot(dir);
                if (rate <= 0) continue;  // slack grows along dir
                double slack = f.slack(v) - margin;
                best = std::min(best, slack <= 0 ? 0.0 : slack / rate);
            }
            continue;
        }
        if (dir.z < 0) best = std::min(best, std::max(0.0, (v.z - margin) / -dir.z));
        if (dir.z > 0) best = std::min(best, std::max(0.0, (height_ - v.z - margin) / dir.z));
        double W = wall_radius_at(v) - margin;
        double a = dir.x * dir.x + dir.y * dir.y;
        if (a > 0) {
            double b = 2.0 * (v.x * dir.x + v.y * dir.y);
            double c0 = v.x * v.x + v.y * v.y - W * W;
            double disc = b * b - 4 * a * c0;
            if (c0 >= 0 && (b >= 0 || disc < 0)) {
                best = 0.0;  // at or past the wall and not re-entering
            } else if (disc >= 0) {
                double t = (-b + std::sqrt(disc)) / (2 * a);
                if (t >= 0) best = std::min(best, t);
            }
        }
    }
    return std::max(best, 0.0);
}

double Container::interior_radius(double margin) const {
    if (kind_ != ContainerKind::ScaledConvex) return r_ - margin;
    Vec3 p0{0, 0, height_ / 2};
    double best = INF;
    for (const Plane& f : facets_) {
        double nxy = std::sqrt(f.normal.x * f.normal.x + f.normal.y * f.normal.y);
        if (nxy < 1e-12) continue;
        best = std::min(best, f.slack(p0) / nxy);
    }
    return best - margin;
}

double Container::section_volume(double h) const {
    if (kind_ != ContainerKind::ScaledConvex) return M_PI * r_ * r_ * h;
    // clip the container polytope below z = h
    std::vector<Vec3> base_world;
    for (const Vec3& v : base_->vertices()) base_world.push_back(v * scale_);
    double zmin = INF;
    for (const Vec3& v : base_world) zmin = std::min(zmin, v.z);
    for (Vec3& v : base_world) v.z -= zmin;

    Hull hull = convex_hull(base_world);
    std::vector<Vec3> clipped;
    for (const Vec3& v : hull.vertices)
        if (v.z <= h) clipped.push_back(v);
    // add edge intersections with z = h
    for (const auto& t : hull.tris) {
        for (int e = 0; e < 3; ++e) {
            const Vec3& a = hull.vertices[t[e]];
            const Vec3& b = hull.vertices[t[(e + 1) % 3]];
            if ((a.z - h) * (b.z - h) < 0) {
                double s = (h - a.z) / (b.z - a.z);
                clipped.push_back(a + (b - a) * s);
            }
        }
    }
    if (clipped.size() < 4) return 0.0;
    try {
        return convex_hull(clipped).volume;
    } catch (const std::invalid_argument&) {
        return 0.0;
    }
}

Container Container::scaled(double lambda) const {
    switch (kind_) {
        case ContainerKind::Cylinder:
            return cylinder(r_ * lambda);
        case ContainerKind::PerturbedCylinder:
            return perturbed_cylinder(r_ * lambda, bump_limit_ * lambda, n_theta_, n_z_,
                                      amplitude_, bump_seed_);
        case ContainerKind::ScaledConvex:
            return scaled_convex(*base_, scale_ * lambda);
    }
    throw std::logic_error("unreachable");
}

bool contains_solid(const Container& c, const ConvexSolid& solid, const Pose& pose,
                    double tol) {
    return c.solid_clearance(solid, pose) >= -tol;
}

double fill_height(const PackingState& state) {
    if (state.poses.empty()) throw std::invalid_argument("fill_height: empty state");
    const Vec3 up{0, 0, 1};
    std::vector<double> tops;
    tops.reserve(state.poses.size());
    for (const Pose& p : state.poses) tops.push_back(state.solid.support_value(p, up));
    std::sort(tops.begin(), tops.end(), std::greater<>());
    std::size_t discard = std::size_t(0.02 * double(tops.size()));
    double tmax = tops[discard];
    double d = state.solid.diameter();
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = discard; i < tops.size() && tops[i] > tmax - d; ++i) {
        sum += tops[i];
        ++n;
    }
    return sum / double(n);
}

double apparent_density(const PackingState& state) {
    if (state.poses.empty()) return 0.0;
    double h = fill_height(state);
    double vol = state.container.section_volume(h);
    if (vol <= 0.0) return 0.0;
    return double(state.count()) * state.solid.volume() / vol;
}

BulkDensity bulk_density(const PackingState& state, double wall_margin, double floor_margin,
                         const BulkOptions& opts) {
    const double top_cut = opts.top_cut < 0 ? floor_margin : opts.top_cut;
    const double rw = state.container.interior_radius(wall_margin);
    const double z0 = floor_margin;
    const double z1 = (state.poses.empty() ? 0.0 : fill_height(state)) - top_cut;
    if (!(rw > 0.0) || !(z1 > z0)) throw std::invalid_argument("bulk_density: degenerate window");

    BulkDensity out;
    out.samples = opts.points;
    if (state.poses.empty()) return out;

    const ConvexSolid& K = state.solid;
    const double reach = K.circumradius();
    const double cell = std::max(2.0 * reach, 1e-9);

    // grid over the window bounding box
    const double bx0 = -rw - reach, bx1 = rw + reach;
    const double bz0 = z0 - reach, bz1 = z1 + reach;
    const int nx = std::max(1, int((bx1 - bx0) / cell));
    const int nz = std::max(1, int((bz1 - bz0) / cell));
    auto cell_of = [&](const Vec3& p) {
        int ix = std::clamp(int((p.x - bx0) / (bx1 - bx0) * nx), 0, nx - 1);
        int iy = std::clamp(int((p.y - bx0) / (bx1 - bx0) * nx), 0, nx - 1);
        int iz = std::clamp(int((p.z - bz0) / (bz1 - bz0) * nz), 0, nz - 1);
        return (std::size_t(iz) * nx + iy) * nx + ix;
    };
    std::vector<std::vector<int>> grid(std::size_t(nx) * nx * nz);
    struct PosedPoly {
        std::vector<Plane> planes;
    };
    std::vector<PosedPoly> posed;
    if (!K.is_ball()) posed.resize(state.count());
    for (std::size_t i = 0; i < state.count(); ++i) {
        const Vec3& c = state.poses[i].translation;
        if (c.x < bx0 || c.x > bx1 || c.y < bx0 || c.y > bx1 || c.z < bz0 || c.z > bz1) continue;
        grid[cell_of(c)].push_back(int(i));
        if (!K.is_ball()) {
            for (const Plane& f : K.facets()) {
                Vec3 nw = state.poses[i].rotation.rotate(f.normal);
                posed[i].planes.push_back({nw, f.offset + nw.dot(c)});
            }
        }
    }

    const double r2 = K.is_ball() ? K.radius() * K.radius() : 0.0;
    auto covered = [&](const Vec3& p) {
        int ix = std::clamp(int((p.x - bx0) / (bx1 - bx0) * nx), 0, nx - 1);
        int iy = std::clamp(int((p.y - bx0) / (bx1 - bx0) * nx), 0, nx - 1);
        int iz = std::clamp(int((p.z - bz0) / (bz1 - bz0) * nz), 0, nz - 1);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int jx = ix + dx, jy = iy + dy, jz = iz + dz;
                    if (jx < 0 || jx >= nx || jy < 0 || jy >= nx || jz < 0 || jz >= nz) continue;
                    for (int i : grid[(std::size_t(jz) * nx + jy) * nx + jx]) {
                        const Vec3& c = state.poses[i].translation;
                        Vec3 dpc = p - c;
                        if (K.is_ball()) {
                            if (dpc.norm2() <= r2) return true;
                        } else {
                            if (dpc.norm2() > reach * reach) continue;
                            bool in = true;
                            for (const Plane& f : posed[std::size_t(i)].planes)
                                if (f.slack(p) < 0) { in = false; break; }
                            if (in) return true;
                        }
                    }
                }
        return false;
    };

    std::size_t hits = 0;
    for (std::uint64_t k = 1; k <= opts.points; ++k) {
        double u1 = radical_inverse(k, 2);
        double u2 = radical_inverse(k, 3);
        double u3 = radical_inverse(k, 5);
        double rho = rw * std::sqrt(u1);
        double phi = 2.0 * M_PI * u2;
        Vec3 p{rho * std::cos(phi), rho * std::sin(phi), z0 + u3 * (z1 - z0)};
        if (covered(p)) ++hits;
    }
    out.hits = hits;
    double pfrac = double(hits) / double(opts.points);
    out.value = pfrac;
    out.stderr_est = std::sqrt(std::max(pfrac * (1 - pfrac), 0.0) / double(opts.points));
    return out;
}

BulkDensity bulk_density_auto(const PackingState& state, const BulkOptions& opts) {
    const double d = state.solid.diameter();
    double h = state.poses.empty() ? 0.0 : fill_height(state);
    double wall = 2.0 * d;
    if (state.container.interior_radius(wall) < d) {
        wall = std::max(0.5 * d, state.container.interior_radius(0.0) - d);
    }
    // floor margin and top cut shrink on shallow beds, never below 0.8 d as
    // long as a window remains; for very shallow beds fall back to whatever
    // margin still leaves a usable slice
    double fm = std::min(2.0 * d, (h - 1.2 * d) / 2.0);
    fm = std::max(fm, 0.8 * d);
    fm = std::min(fm, (h - 0.2 * d) / 2.0);
    fm = std::max(fm, 0.01 * d);
    BulkOptions o = opts;
    o.top_cut = fm;
    return bulk_density(state, wall, fm, o);
}

void write_snapshot(const PackingState& state, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_snapshot: cannot open " + path);
    out << "# packlab snapshot v1\n";
    out << "# solid=" << state.solid.spec_string() << "\n";
    out << "# container=" << state.container.spec_string() << "\n";
    out << "# seed=" << state.seed << "\n";
    out << "index,x,y,z,qw,qx,qy,qz\n";
    char buf[256];
    for (std::size_t i = 0; i < state.count(); ++i) {
        const Pose& p = state.poses[i];
        std::snprintf(buf, sizeof buf,
                      "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i,
                      p.translation.x, p.translation.y, p.translation.z, p.rotation.w,
                      p.rotation.x, p.rotation.y, p.rotation.z);
        out << buf;
    }
}

PackingState read_snapshot(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_snapshot: cannot open " + path);
    std::string line;
    std::string solid_spec, container_spec;
    std::uint64_t seed = 0;
    int lineno = 0;
    std::vector<Pose> poses;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# solid=", 0) == 0) solid_spec = line.substr(8);
            else if (line.rfind("# container=", 0) == 0) container_spec = line.substr(12);
            else if (line.rfind("# seed=", 0) == 0) seed = std::stoull(line.substr(7));
            continue;
        }
        if (line.rfind("index,", 0) == 0) continue;
        Pose p;
        std::size_t idx;
        if (std::sscanf(line.c_str(), "%zu,%lg,%lg,%lg,%lg,%lg,%lg,%lg", &idx,
                        &p.translation.x, &p.translation.y, &p.translation.z, &p.rotation.w,
                        &p.rotation.x, &p.rotation.y, &p.rotation.z) != 8) {
            throw std::runtime_error("read_snapshot: malformed row at line " +
                                     std::to_string(lineno));
        }
        poses.push_back(p);
    }
    if (solid_spec.empty() || container_spec.empty())
        throw std::runtime_error("read_snapshot: missing header in " + path);
    PackingState st{Container::parse(container_spec), parse_solid_spec(solid_spec),
                    std::move(poses), seed, {}};
    return st;
}

PackingState make_lattice_packing(LatticeKind kind, double a, const Container& container,
                                  double clearance) {
    ConvexSolid ball = make_ball(a);
    std::vector<Vec3> bases;
    double s;
    if (kind == LatticeKind::SimpleCubic) {
        s = 2.0 * a;
        bases = {{0, 0, 0}};
    } else {
        s = 2.0 * a * std::sqrt(2.0);
        bases = {{0, 0, 0}, {0.5, 0.5, 0}, {0.5, 0, 0.5}, {0, 0.5, 0.5}};
    }
    double rmax = container.interior_radius(0.0);
    double H = container.height();
    int n = int(rmax / s) + 2;
    int nzc = int(H / s) + 2;
    PackingState st{container, ball, {}, 0, {"lattice"}};
    for (int k = 0; k < nzc; ++k)
        for (int i = -n; i <= n; ++i)
            for (int j = -n; j <= n; ++j)
                for (const Vec3& b : bases) {
                    Vec3 c{(i + b.x) * s, (j + b.y) * s, a + clearance + (k + b.z) * s};
                    if (container.inside_ball(c, a + clearance, 0.0))
                        st.poses.push_back(Pose::at(c));
                }
    return st;
}

} // namespace packlab
