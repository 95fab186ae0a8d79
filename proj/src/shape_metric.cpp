#include "packlab/shape_metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "packlab/rng.hpp"

namespace packlab {

namespace {

constexpr double LP_EPS = 1e-11;

// Dense two-phase simplex for tiny problems:
//   minimize c . y   subject to   A y <= b,  y >= 0.
// Returns the solution vector, or nullopt if infeasible/unbounded.
std::optional<std::vector<double>> lp_solve(const std::vector<std::vector<double>>& A,
                                            const std::vector<double>& b,
                                            const std::vector<double>& c, double* objective) {
    const int m = int(A.size());
    const int n = int(c.size());

    // columns: n structural + m slack + artificials + rhs
    std::vector<int> art_row;
    for (int i = 0; i < m; ++i)
        if (b[i] < 0) art_row.push_back(i);
    const int na = int(art_row.size());
    const int cols = n + m + na + 1;

    std::vector<std::vector<double>> T(std::size_t(m), std::vector<double>(std::size_t(cols), 0.0));
    std::vector<int> basic(std::size_t(m), 0);
    int ai = 0;
    for (int i = 0; i < m; ++i) {
        double sign = b[std::size_t(i)] < 0 ? -1.0 : 1.0;
        for (int j = 0; j < n; ++j) T[i][j] = sign * A[std::size_t(i)][std::size_t(j)];
        T[i][n + i] = sign;
        T[i][cols - 1] = sign * b[std::size_t(i)];
        if (b[std::size_t(i)] < 0) {
            T[i][n + m + ai] = 1.0;
            basic[std::size_t(i)] = n + m + ai;
            ++ai;
        } else {
            basic[std::size_t(i)] = n + i;
        }
    }

    auto run = [&](const std::vector<double>& cost, int usable_cols) -> bool {
        for (int iter = 0; iter < 200 * (m + n); ++iter) {
            // reduced costs under the current basis (recomputed; sizes are tiny)
            int enter = -1;
            for (int j = 0; j < usable_cols; ++j) {
                double r = cost[std::size_t(j)];
                for (int i = 0; i < m; ++i) r -= cost[std::size_t(basic[std::size_t(i)])] * T[i][j];
                if (r < -LP_EPS) {  // Bland's rule: first eligible column
                    enter = j;
                    break;
                }
            }
            if (enter < 0) return true;  // optimal
            int leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m; ++i) {
                if (T[i][enter] > LP_EPS) {
                    double ratio = T[i][cols - 1] / T[i][enter];
                    if (ratio < best - LP_EPS ||
                        (ratio < best + LP_EPS && leave >= 0 &&
                         basic[std::size_t(i)] < basic[std::size_t(leave)])) {
                        best = ratio;
                        leave = i;
                    }
                }
            }
            if (leave < 0) return false;  // unbounded
            double piv = T[leave][enter];
            for (int j = 0; j < cols; ++j) T[leave][j] /= piv;
            for (int i = 0; i < m; ++i) {
                if (i == leave || std::abs(T[i][enter]) < 1e-14) continue;
                double f = T[i][enter];
                for (int j = 0; j < cols; ++j) T[i][j] -= f * T[leave][j];
            }
            basic[std::size_t(leave)] = enter;
        }
        return false;  // iteration cap: treat as failure
    };

    if (na > 0) {
        std::vector<double> phase1(std::size_t(cols), 0.0);
        for (int j = n + m; j < n + m + na; ++j) phase1[std::size_t(j)] = 1.0;
        if (!run(phase1, n + m + na)) return std::nullopt;
        double infeas = 0.0;
        for (int i = 0; i < m; ++i)
            if (basic[std::size_t(i)] >= n + m) infeas += T[i][cols - 1];
        if (infeas > 1e-8) return std::nullopt;
        // drive remaining artificials out of the basis where possible
        for (int i = 0; i < m; ++i) {
            if (basic[std::size_t(i)] < n + m) continue;
            for (int j = 0; j < n + m; ++j) {
                if (std::abs(T[i][j]) > 1e-9) {
                    double piv = T[i][j];
                    for (int k = 0; k < cols; ++k) T[i][k] /= piv;
                    for (int r = 0; r < m; ++r) {
                        if (r == i || std::abs(T[r][j]) < 1e-14) continue;
                        double f = T[r][j];
                        for (int k = 0; k < cols; ++k) T[r][k] -= f * T[i][k];
                    }
                    basic[std::size_t(i)] = j;
                    break;
                }
            }
        }
    }

    std::vector<double> cost(std::size_t(cols), 0.0);
    for (int j = 0; j < n; ++j) cost[std::size_t(j)] = c[std::size_t(j)];
    if (!run(cost, n + m)) return std::nullopt;

    std::vector<double> y(std::size_t(n), 0.0);
    for (int i = 0; i < m; ++i)
        if (basic[std::size_t(i)] < n) y[std::size_t(basic[std::size_t(i)])] = T[i][cols - 1];
    if (objective) {
        double obj = 0.0;
        for (int j = 0; j < n; ++j) obj += c[std::size_t(j)] * y[std::size_t(j)];
        *objective = obj;
    }
    return y;
}

// Shape data normalized to unit diameter (the distance is scale invariant,
// and normalization keeps the LP well conditioned).
struct NormShape {
    std::vector<Vec3> verts;
    std::vector<Plane> facets;  // offsets positive: centroid interior
    double diam = 1.0;
};

NormShape normalize(const ConvexSolid& s) {
    NormShape n;
    n.diam = s.diameter();
    double inv = 1.0 / n.diam;
    for (const Vec3& v : s.vertices()) n.verts.push_back(v * inv);
    for (const Plane& f : s.facets()) n.facets.push_back({f.normal, f.offset * inv});
    return n;
}

double support_of(const std::vector<Vec3>& verts, const Vec3& u) {
    double best = -std::numeric_limits<double>::infinity();
    for (const Vec3& v : verts) best = std::max(best, u.dot(v));
    return best;
}

Vec3 mirror_z(const Vec3& v) { return {v.x, v.y, -v.z}; }

struct RotationFit {
    double gamma = std::numeric_limits<double>::infinity();
    double s = 0;
    Vec3 t, x;
};

// Minimal gamma for a fixed rotation/reflection; a linear program in
// (s, gamma, t, x) once the orientation is pinned:
//   K1 <= s R K2' + t       : h1(R n) - (R n).t <= s o        per facet of K2'
//   s R K2' + t <= g K1 + x : s h2'(R^T m) + m.(t - x) <= g p  per facet of K1
// where K2' is K2 mirrored across z = 0 when reflect is set.
std::optional<RotationFit> fit_rotation(const NormShape& k1, const NormShape& k2,
                                        const Quat& rot, bool reflect) {
    // variables: s, gamma, t+, t-, x+, x- (free vectors split into halves)
    const int NV = 14;
    std::vector<std::vector<double>> A;
    std::vector<double> b;
    auto row = [&]() -> std::vector<double>& {
        A.emplace_back(std::size_t(NV), 0.0);
        b.push_back(0.0);
        return A.back();
    };
    auto put_vec = [](std::vector<double>& r, int base, const Vec3& v, double sign) {
        r[std::size_t(base)] += sign * v.x;
        r[std::size_t(base) + 1] += sign * v.y;
        r[std::size_t(base) + 2] += sign * v.z;
    };

    Quat inv = rot.conjugate();
    for (const Plane& f : k2.facets) {
        Vec3 n = reflect ? mirror_z(f.normal) : f.normal;
        Vec3 rn = rot.rotate(n);
        auto& r = row();
        r[0] = -f.offset;         // -o * s
        put_vec(r, 2, rn, -1.0);  // -(R n) . t+
        put_vec(r, 5, rn, 1.0);   // +(R n) . t-
        b.back() = -support_of(k1.verts, rn);
    }
    for (const Plane& g : k1.facets) {
        Vec3 back = inv.rotate(g.normal);
        if (reflect) back = mirror_z(back);
        auto& r = row();
        r[0] = support_of(k2.verts, back);  // s * h_{K2'}(R^T m)
        r[1] = -g.offset;                   // -p * gamma
        put_vec(r, 2, g.normal, 1.0);
        put_vec(r, 5, g.normal, -1.0);
        put_vec(r, 8, g.normal, -1.0);
        put_vec(r, 11, g.normal, 1.0);
    }
    {
        auto& r = row();  // s >= s_min
        r[0] = -1.0;
        b.back() = -1e-8;
    }

    std::vector<double> c(std::size_t(NV), 0.0);
    c[1] = 1.0;  // minimize gamma
    double obj = 0.0;
    auto y = lp_solve(A, b, c, &obj);
    if (!y) return std::nullopt;
    RotationFit fit;
    fit.gamma = obj;
    fit.s = (*y)[0];
    fit.t = {(*y)[2] - (*y)[5], (*y)[3] - (*y)[6], (*y)[4] - (*y)[7]};
    fit.x = {(*y)[8] - (*y)[11], (*y)[9] - (*y)[12], (*y)[10] - (*y)[13]};
    return fit;
}

// Circumradius / inradius ratio of a polytope as seen from center c.
double radius_ratio(const ConvexSolid& poly, const Vec3& c) {
    double rho = std::numeric_limits<double>::infinity();
    for (const Plane& f : poly.facets()) rho = std::min(rho, f.slack(c));
    if (rho <= 0) return std::numeric_limits<double>::infinity();
    double R2 = 0;
    for (const Vec3& v : poly.vertices()) R2 = std::max(R2, (v - c).norm2());
    return std::sqrt(R2) / rho;
}

// Best center for the ball <-> polytope distance: minimize R(c)/rho(c).
// The ratio is quasi-convex over the interior, so pattern descent from the
// centroid converges to the global optimum.
Vec3 best_ball_center(const ConvexSolid& poly, double tol) {
    static const Vec3 dirs[] = {{1, 0, 0},   {-1, 0, 0},  {0, 1, 0},    {0, -1, 0},
                                {0, 0, 1},   {0, 0, -1},  {1, 1, 1},    {1, 1, -1},
                                {1, -1, 1},  {1, -1, -1}, {-1, 1, 1},   {-1, 1, -1},
                                {-1, -1, 1}, {-1, -1, -1}};
    Vec3 c{0, 0, 0};
    double val = radius_ratio(poly, c);
    double step = 0.25 * poly.circumradius();
    double floor_step = tol * poly.diameter();
    while (step > floor_step) {
        bool improved = false;
        for (const Vec3& d : dirs) {
            Vec3 trial = c + d * (step / d.norm());
            double v = radius_ratio(poly, trial);
            if (v < val * (1.0 - 1e-15)) {
                c = trial;
                val = v;
                improved = true;
            }
        }
        if (!improved) step *= 0.5;
    }
    return c;
}

ShapeDistanceResult ball_polytope_distance(const ConvexSolid& ball, const ConvexSolid& poly,
                                           bool ball_first, double tol) {
    Vec3 c = best_ball_center(poly, tol);
    double rho = std::numeric_limits<double>::infinity();
    for (const Plane& f : poly.facets()) rho = std::min(rho, f.slack(c));
    double R = 0;
    for (const Vec3& v : poly.vertices()) R = std::max(R, (v - c).norm());
    ShapeDistanceResult res;
    res.gamma = R / rho;
    res.log_gamma = std::log(res.gamma);
    res.exact = true;
    double rb = ball.radius();
    if (ball_first) {
        // ball <= sigma(poly) <= gamma ball: map the inball at c onto the ball
        res.witness_sigma.scale = rb / rho;
        res.witness_sigma.translation = c * (-rb / rho);
        res.witness_x = {0, 0, 0};
    } else {
        // poly <= sigma(ball) <= gamma poly + x: circumball at c; the offset
        // recenters the scaled copy of the polytope onto it
        res.witness_sigma.scale = R / rb;
        res.witness_sigma.translation = c;
        res.witness_x = c * (1.0 - res.gamma);
    }
    return res;
}

} // namespace

std::pair<double, double> verify_containment(const ConvexSolid& k1, const Similarity& sigma,
                                             const ConvexSolid& k2, double gamma, const Vec3& x) {
    double inner = std::numeric_limits<double>::infinity();
    double outer = std::numeric_limits<double>::infinity();

    const double s = sigma.scale;
    const Vec3& t = sigma.translation;

    // inner: K1 <= sigma(K2)
    if (k2.is_ball()) {
        double r = s * k2.radius();  // sigma(K2) = ball of radius r about t
        if (k1.is_ball()) {
            inner = r - t.norm() - k1.radius();
        } else {
            for (const Vec3& v : k1.vertices()) inner = std::min(inner, r - (v - t).norm());
        }
    } else {
        for (const Plane& f : k2.facets()) {
            Vec3 n = sigma.reflect ? Vec3{f.normal.x, f.normal.y, -f.normal.z} : f.normal;
            Vec3 u = sigma.rotation.rotate(n);
            double cap = s * f.offset + u.dot(t);
            if (k1.is_ball()) {
                inner = std::min(inner, cap - k1.radius());
            } else {
                for (const Vec3& v : k1.vertices()) inner = std::min(inner, cap - u.dot(v));
            }
        }
    }

    // outer: sigma(K2) <= gamma K1 + x
    auto point_slack = [&](const Vec3& w) {
        double m = std::numeric_limits<double>::infinity();
        if (k1.is_ball()) {
            m = gamma * k1.radius() - (w - x).norm();
        } else {
            for (const Plane& g : k1.facets())
                m = std::min(m, gamma * g.offset - g.normal.dot(w - x));
        }
        return m;
    };
    if (k2.is_ball()) {
        double r = s * k2.radius();
        if (k1.is_ball()) {
            outer = gamma * k1.radius() - (t - x).norm() - r;
        } else {
            for (const Plane& g : k1.facets())
                outer = std::min(outer, gamma * g.offset - g.normal.dot(t - x) - r);
        }
    } else {
        for (const Vec3& v : k2.vertices()) outer = std::min(outer, point_slack(sigma.apply(v)));
    }

    return {inner, outer};
}

ShapeDistanceResult shape_distance(const ConvexSolid& k1, const ConvexSolid& k2,
                                   const ShapeMetricOptions& opts) {
    ShapeDistanceResult res;
    if (k1.is_ball() && k2.is_ball()) {
        res.witness_sigma.scale = k1.radius() / k2.radius();
        res.exact = true;
    } else if (!opts.force_general && (k1.is_ball() || k2.is_ball())) {
        res = k1.is_ball() ? ball_polytope_distance(k1, k2, true, opts.tol)
                           : ball_polytope_distance(k2, k1, false, opts.tol);
    } else {
        if (k1.is_ball() || k2.is_ball())
            throw std::invalid_argument("shape_distance: the general solver needs two polytopes");
        NormShape n1 = normalize(k1), n2 = normalize(k2);

        struct Candidate {
            Quat rot = Quat::identity();
            bool reflect = false;
            RotationFit fit;
        };
        std::vector<Candidate> cands;
        auto consider = [&](const Quat& q, bool refl) {
            if (auto fit = fit_rotation(n1, n2, q, refl)) cands.push_back({q, refl, *fit});
        };

        CounterRng rng(opts.seed);
        int reflections = opts.allow_reflection ? 2 : 1;
        for (int refl = 0; refl < reflections; ++refl) {
            consider(Quat::identity(), refl != 0);
            for (int i = 1; i < opts.rotation_starts; ++i)
                consider(rng.uniform_rotation(), refl != 0);
        }
        if (cands.empty()) throw std::runtime_error("shape_distance: no feasible orientation");
        std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            return a.fit.gamma < b.fit.gamma;
        });
        if (int(cands.size()) > opts.refine_top) cands.resize(std::size_t(opts.refine_top));

        Candidate best = cands.front();
        for (Candidate cand : cands) {
            double step = 0.3;
            const double floor_step = std::max(opts.tol, 1e-9);
            while (step > floor_step) {
                bool improved = false;
                for (int axis = 0; axis < 3 && !improved; ++axis) {
                    for (double sgn : {1.0, -1.0}) {
                        Vec3 ax{axis == 0 ? 1.0 : 0.0, axis == 1 ? 1.0 : 0.0,
                                axis == 2 ? 1.0 : 0.0};
                        Quat q = Quat::from_axis_angle(ax, sgn * step) * cand.rot;
                        auto fit = fit_rotation(n1, n2, q, cand.reflect);
                        if (fit && fit->gamma < cand.fit.gamma * (1.0 - 1e-13)) {
                            cand.rot = q;
                            cand.fit = *fit;
                            improved = true;
                            break;
                        }
                    }
                }
                if (!improved) step *= 0.5;
            }
            if (cand.fit.gamma < best.fit.gamma) best = cand;
        }

        res.gamma = std::max(best.fit.gamma, 1.0);
        res.log_gamma = std::log(res.gamma);
        res.witness_sigma.scale = best.fit.s * n1.diam / n2.diam;
        res.witness_sigma.rotation = best.rot;
        res.witness_sigma.reflect = best.reflect;
        res.witness_sigma.translation = best.fit.t * n1.diam;
        res.witness_x = best.fit.x * n1.diam;
    }

    res.gamma = std::max(res.gamma, 1.0);
    res.log_gamma = std::max(res.log_gamma, 0.0);
    auto [inner, outer] =
        verify_containment(k1, res.witness_sigma, k2, res.gamma, res.witness_x);
    res.inner_margin = inner;
    res.outer_margin = outer;
    return res;
}

} // namespace packlab
