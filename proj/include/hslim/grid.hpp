#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "hslim/errors.hpp"

namespace hslim::fields {

enum class Boundary { Periodic, NoSlipBox };

inline std::string to_string(Boundary b) {
    return b == Boundary::Periodic ? "periodic" : "noslip_box";
}

/// Uniform box [-L, L]^dim with cell-centered scalars and face-centered vector
/// components (MAC layout). For NoSlipBox grids the vector degrees of freedom on
/// the boundary faces are identically zero.
struct GridSpec {
    int dim = 1;
    std::array<double, 3> extent{1.0, 1.0, 1.0}; // half-widths L per axis
    std::array<int, 3> cells{8, 1, 1};
    Boundary boundary = Boundary::Periodic;

    double h(int a) const { return 2.0 * extent[a] / cells[a]; }
    double cell_volume() const {
        double v = 1.0;
        for (int a = 0; a < dim; ++a) v *= h(a);
        return v;
    }
    std::size_t cell_count() const {
        std::size_t n = 1;
        for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(cells[a]);
        return n;
    }
    double volume() const {
        double v = 1.0;
        for (int a = 0; a < dim; ++a) v *= 2.0 * extent[a];
        return v;
    }
    double center(int a, int i) const { return -extent[a] + (i + 0.5) * h(a); }
    double face(int a, int i) const { return -extent[a] + i * h(a); }

    /// Face count of vector component c along axis a.
    int face_cells(int c, int a) const {
        if (a != c) return cells[a];
        return boundary == Boundary::NoSlipBox ? cells[a] + 1 : cells[a];
    }
    std::size_t face_count(int c) const {
        std::size_t n = 1;
        for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(face_cells(c, a));
        return n;
    }

    bool operator==(const GridSpec& o) const {
        if (dim != o.dim || boundary != o.boundary) return false;
        for (int a = 0; a < dim; ++a)
            if (extent[a] != o.extent[a] || cells[a] != o.cells[a]) return false;
        return true;
    }
};

inline GridSpec make_grid(int dim, double L, int N, Boundary b) {
    if (dim < 1 || dim > 3) throw GridError("grid dimension must be 1, 2 or 3");
    if (N < 8) throw GridError("grids need at least 8 cells per axis");
    GridSpec g;
    g.dim = dim;
    g.boundary = b;
    for (int a = 0; a < 3; ++a) {
        g.extent[a] = a < dim ? L : 1.0;
        g.cells[a] = a < dim ? N : 1;
    }
    return g;
}

struct ScalarField {
    GridSpec grid;
    std::vector<double> v;

    ScalarField() = default;
    explicit ScalarField(const GridSpec& g) : grid(g), v(g.cell_count(), 0.0) {}

    double& at(int i) { return v[static_cast<std::size_t>(i)]; }
    double at(int i) const { return v[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) {
        return v[static_cast<std::size_t>(i) +
                 static_cast<std::size_t>(grid.cells[0]) * j];
    }
    double at(int i, int j) const {
        return v[static_cast<std::size_t>(i) +
                 static_cast<std::size_t>(grid.cells[0]) * j];
    }

    static ScalarField from_function(const GridSpec& g,
                                     const std::function<double(double)>& f) {
        ScalarField out(g);
        for (int i = 0; i < g.cells[0]; ++i) out.at(i) = f(g.center(0, i));
        return out;
    }
    static ScalarField from_function(
        const GridSpec& g, const std::function<double(double, double)>& f) {
        ScalarField out(g);
        for (int j = 0; j < g.cells[1]; ++j)
            for (int i = 0; i < g.cells[0]; ++i)
                out.at(i, j) = f(g.center(0, i), g.center(1, j));
        return out;
    }
};

/// MAC vector field: component c lives on faces normal to axis c.
struct VectorField {
    GridSpec grid;
    std::array<std::vector<double>, 3> comp;

    VectorField() = default;
    explicit VectorField(const GridSpec& g) : grid(g) {
        for (int c = 0; c < g.dim; ++c)
            comp[c].assign(g.face_count(c), 0.0);
    }

    int nx(int c) const { return grid.face_cells(c, 0); }
    double& at(int c, int i) { return comp[c][static_cast<std::size_t>(i)]; }
    double at(int c, int i) const { return comp[c][static_cast<std::size_t>(i)]; }
    double& at(int c, int i, int j) {
        return comp[c][static_cast<std::size_t>(i) +
                       static_cast<std::size_t>(nx(c)) * j];
    }
    double at(int c, int i, int j) const {
        return comp[c][static_cast<std::size_t>(i) +
                       static_cast<std::size_t>(nx(c)) * j];
    }

    /// Coordinate of the face carrying comp[c] at multi-index (i along own axis).
    double face_coord(int c, int a, int idx) const {
        return a == c ? grid.face(a, idx) : grid.center(a, idx);
    }

    /// Force the no-slip boundary faces to zero (no-op on periodic grids).
    void zero_boundary_faces() {
        if (grid.boundary != Boundary::NoSlipBox) return;
        for (int c = 0; c < grid.dim; ++c) {
            if (grid.dim == 1) {
                comp[c].front() = 0.0;
                comp[c].back() = 0.0;
            } else {
                const int mx = nx(c), my = grid.face_cells(c, 1);
                for (int j = 0; j < my; ++j)
                    for (int i = 0; i < mx; ++i) {
                        const bool bd = (c == 0 && (i == 0 || i == mx - 1)) ||
                                        (c == 1 && (j == 0 || j == my - 1));
                        if (bd) at(c, i, j) = 0.0;
                    }
            }
        }
    }

    double max_boundary_face_magnitude() const {
        if (grid.boundary != Boundary::NoSlipBox) return 0.0;
        double m = 0.0;
        for (int c = 0; c < grid.dim; ++c) {
            if (grid.dim == 1) {
                m = std::max({m, std::abs(comp[c].front()), std::abs(comp[c].back())});
            } else {
                const int mx = nx(c), my = grid.face_cells(c, 1);
                for (int j = 0; j < my; ++j)
                    for (int i = 0; i < mx; ++i) {
                        const bool bd = (c == 0 && (i == 0 || i == mx - 1)) ||
                                        (c == 1 && (j == 0 || j == my - 1));
                        if (bd) m = std::max(m, std::abs(at(c, i, j)));
                    }
            }
        }
        return m;
    }
};

// --- reductions -------------------------------------------------------------

inline void check_same_grid(const GridSpec& a, const GridSpec& b) {
    if (!(a == b)) throw GridMismatch("fields live on different grids");
}

inline double mean(const ScalarField& f) {
    double s = std::accumulate(f.v.begin(), f.v.end(), 0.0);
    return s / static_cast<double>(f.v.size());
}

inline double integral(const ScalarField& f) {
    return std::accumulate(f.v.begin(), f.v.end(), 0.0) * f.grid.cell_volume();
}

inline double norm_lp(const ScalarField& f, double p) {
    double s = 0.0;
    for (double x : f.v) s += std::pow(std::abs(x), p);
    return std::pow(s * f.grid.cell_volume(), 1.0 / p);
}

inline double norm_l2(const ScalarField& f) {
    double s = 0.0;
    for (double x : f.v) s += x * x;
    return std::sqrt(s * f.grid.cell_volume());
}

inline double norm_linf(const ScalarField& f) {
    double m = 0.0;
    for (double x : f.v) m = std::max(m, std::abs(x));
    return m;
}

inline double norm_l2(const VectorField& u) {
    double s = 0.0;
    for (int c = 0; c < u.grid.dim; ++c)
        for (double x : u.comp[c]) s += x * x;
    return std::sqrt(s * u.grid.cell_volume());
}

inline double norm_lp(const VectorField& u, double p) {
    double s = 0.0;
    for (int c = 0; c < u.grid.dim; ++c)
        for (double x : u.comp[c]) s += std::pow(std::abs(x), p);
    return std::pow(s * u.grid.cell_volume(), 1.0 / p);
}

inline double norm_linf(const VectorField& u) {
    double m = 0.0;
    for (int c = 0; c < u.grid.dim; ++c)
        for (double x : u.comp[c]) m = std::max(m, std::abs(x));
    return m;
}

inline double inner(const ScalarField& a, const ScalarField& b) {
    check_same_grid(a.grid, b.grid);
    double s = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) s += a.v[i] * b.v[i];
    return s * a.grid.cell_volume();
}

inline double inner(const VectorField& a, const VectorField& b) {
    check_same_grid(a.grid, b.grid);
    double s = 0.0;
    for (int c = 0; c < a.grid.dim; ++c)
        for (std::size_t i = 0; i < a.comp[c].size(); ++i)
            s += a.comp[c][i] * b.comp[c][i];
    return s * a.grid.cell_volume();
}

// --- small arithmetic helpers ------------------------------------------------

inline ScalarField operator-(const ScalarField& a, const ScalarField& b) {
    check_same_grid(a.grid, b.grid);
    ScalarField out(a.grid);
    for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] - b.v[i];
    return out;
}

inline VectorField operator-(const VectorField& a, const VectorField& b) {
    check_same_grid(a.grid, b.grid);
    VectorField out(a.grid);
    for (int c = 0; c < a.grid.dim; ++c)
        for (std::size_t i = 0; i < a.comp[c].size(); ++i)
            out.comp[c][i] = a.comp[c][i] - b.comp[c][i];
    return out;
}

inline void axpy(double alpha, const ScalarField& x, ScalarField& y) {
    check_same_grid(x.grid, y.grid);
    for (std::size_t i = 0; i < x.v.size(); ++i) y.v[i] += alpha * x.v[i];
}

inline void axpy(double alpha, const VectorField& x, VectorField& y) {
    check_same_grid(x.grid, y.grid);
    for (int c = 0; c < x.grid.dim; ++c)
        for (std::size_t i = 0; i < x.comp[c].size(); ++i)
            y.comp[c][i] += alpha * x.comp[c][i];
}

inline void scale(ScalarField& f, double alpha) {
    for (double& x : f.v) x *= alpha;
}

inline void scale(VectorField& u, double alpha) {
    for (int c = 0; c < u.grid.dim; ++c)
        for (double& x : u.comp[c]) x *= alpha;
}

} // namespace hslim::fields
