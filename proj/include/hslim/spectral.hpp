#pragma once

#include <complex>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "hslim/errors.hpp"
#include "hslim/grid.hpp"

namespace hslim::fields {

namespace detail {
inline std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}
} // namespace detail

/// Real-to-complex FFT workspace for a periodic grid (any dim up to 3).
/// Wavenumber of mode m along axis a is pi * m / L_a on the box [-L, L].
/// Plan creation is serialized; execution uses instance-private buffers, so
/// distinct instances are safe to use from different threads.
class Spectral {
public:
    explicit Spectral(const GridSpec& g) : grid_(g) {
        if (g.boundary != Boundary::Periodic)
            throw GridError("spectral workspace requires a periodic grid");
        n_real_ = g.cell_count();
        cx_ = g.cells[0] / 2 + 1;
        n_complex_ = static_cast<std::size_t>(cx_);
        for (int a = 1; a < g.dim; ++a) n_complex_ *= static_cast<std::size_t>(g.cells[a]);

        real_ = fftw_alloc_real(n_real_);
        cplx_ = fftw_alloc_complex(n_complex_);
        std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
        // FFTW uses row-major with the fastest index last; our x index is fastest
        switch (g.dim) {
            case 1:
                fwd_ = fftw_plan_dft_r2c_1d(g.cells[0], real_, cplx_, FFTW_ESTIMATE);
                bwd_ = fftw_plan_dft_c2r_1d(g.cells[0], cplx_, real_, FFTW_ESTIMATE);
                break;
            case 2:
                fwd_ = fftw_plan_dft_r2c_2d(g.cells[1], g.cells[0], real_, cplx_,
                                            FFTW_ESTIMATE);
                bwd_ = fftw_plan_dft_c2r_2d(g.cells[1], g.cells[0], cplx_, real_,
                                            FFTW_ESTIMATE);
                break;
            default:
                fwd_ = fftw_plan_dft_r2c_3d(g.cells[2], g.cells[1], g.cells[0], real_,
                                            cplx_, FFTW_ESTIMATE);
                bwd_ = fftw_plan_dft_c2r_3d(g.cells[2], g.cells[1], g.cells[0], cplx_,
                                            real_, FFTW_ESTIMATE);
                break;
        }
        if (!fwd_ || !bwd_) throw SolverError("fftw plan creation failed");
    }

    ~Spectral() {
        std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(real_);
        fftw_free(cplx_);
    }

    Spectral(const Spectral&) = delete;
    Spectral& operator=(const Spectral&) = delete;

    const GridSpec& grid() const { return grid_; }
    std::size_t mode_count() const { return n_complex_; }

    std::vector<std::complex<double>> forward(const std::vector<double>& in) const {
        if (in.size() != n_real_) throw GridMismatch("spectral forward: size mismatch");
        std::copy(in.begin(), in.end(), real_);
        fftw_execute(fwd_);
        std::vector<std::complex<double>> out(n_complex_);
        for (std::size_t i = 0; i < n_complex_; ++i)
            out[i] = {cplx_[i][0], cplx_[i][1]};
        return out;
    }

    std::vector<double> backward(const std::vector<std::complex<double>>& in) const {
        if (in.size() != n_complex_) throw GridMismatch("spectral backward: size mismatch");
        for (std::size_t i = 0; i < n_complex_; ++i) {
            cplx_[i][0] = in[i].real();
            cplx_[i][1] = in[i].imag();
        }
        fftw_execute(bwd_);
        std::vector<double> out(n_real_);
        const double scale = 1.0 / static_cast<double>(n_real_);
        for (std::size_t i = 0; i < n_real_; ++i) out[i] = real_[i] * scale;
        return out;
    }

    /// Signed mode integer along axis a for flat complex index f.
    int mode(int a, std::size_t f) const {
        int idx;
        if (a == 0) {
            idx = static_cast<int>(f % static_cast<std::size_t>(cx_));
            return idx; // half spectrum, always >= 0
        }
        std::size_t rest = f / static_cast<std::size_t>(cx_);
        if (a == 1) {
            idx = static_cast<int>(rest % static_cast<std::size_t>(grid_.cells[1]));
        } else {
            idx = static_cast<int>(rest / static_cast<std::size_t>(grid_.cells[1]));
        }
        const int n = grid_.cells[a];
        return idx <= n / 2 ? idx : idx - n;
    }

    /// Wavenumber along axis a for flat complex index f.
    double k(int a, std::size_t f) const {
        return M_PI / grid_.extent[a] * static_cast<double>(mode(a, f));
    }

    /// True if the mode sits on the (real-valued) Nyquist line of axis a.
    bool nyquist(int a, std::size_t f) const {
        const int n = grid_.cells[a];
        return n % 2 == 0 && std::abs(mode(a, f)) == n / 2;
    }

    bool any_nyquist(std::size_t f) const {
        for (int a = 0; a < grid_.dim; ++a)
            if (nyquist(a, f)) return true;
        return false;
    }

    double k_squared(std::size_t f) const {
        double s = 0.0;
        for (int a = 0; a < grid_.dim; ++a) {
            const double ka = k(a, f);
            s += ka * ka;
        }
        return s;
    }

private:
    GridSpec grid_;
    std::size_t n_real_ = 0, n_complex_ = 0;
    int cx_ = 0;
    double* real_ = nullptr;
    fftw_complex* cplx_ = nullptr;
    fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

/// Per-grid spectral workspaces. The cache is thread-local: workspaces carry
/// private transform buffers, so concurrent sweep points never share one.
inline std::shared_ptr<Spectral> spectral_for(const GridSpec& g) {
    struct Entry {
        GridSpec grid;
        std::shared_ptr<Spectral> ws;
    };
    thread_local std::vector<Entry> cache;
    for (auto& e : cache)
        if (e.grid == g) return e.ws;
    auto ws = std::make_shared<Spectral>(g);
    cache.push_back({g, ws});
    if (cache.size() > 16) cache.erase(cache.begin());
    return ws;
}

} // namespace hslim::fields
