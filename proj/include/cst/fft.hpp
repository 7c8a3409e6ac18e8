#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace cst {

using cplx = std::complex<double>;

/// Unnormalized forward DFT, X_m = sum_n x_n exp(-2 pi i m n / N).
inline std::vector<cplx> dft(const std::vector<cplx>& x) {
    Eigen::FFT<double> fft;
    std::vector<cplx> out;
    fft.fwd(out, x);
    return out;
}

/// Inverse of dft, including the 1/N factor.
inline std::vector<cplx> idft(const std::vector<cplx>& X) {
    Eigen::FFT<double> fft;
    std::vector<cplx> out;
    fft.inv(out, X);
    return out;
}

/// Signed frequency index of DFT bin m for length n, in [-n/2, n/2).
inline long fft_index(std::size_t m, std::size_t n) {
    const auto mm = static_cast<long>(m), nn = static_cast<long>(n);
    return mm < (nn + 1) / 2 ? mm : mm - nn;
}

/// 2-D DFT of a row-major nx * ny array (x fastest), separable over rows and columns.
inline std::vector<cplx> dft2(std::vector<cplx> a, std::size_t nx, std::size_t ny, bool inverse = false) {
    Eigen::FFT<double> fft;
    std::vector<cplx> line, out;
    line.resize(nx);
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) line[i] = a[j * nx + i];
        inverse ? fft.inv(out, line) : fft.fwd(out, line);
        for (std::size_t i = 0; i < nx; ++i) a[j * nx + i] = out[i];
    }
    line.resize(ny);
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) line[j] = a[j * nx + i];
        inverse ? fft.inv(out, line) : fft.fwd(out, line);
        for (std::size_t j = 0; j < ny; ++j) a[j * nx + i] = out[j];
    }
    return a;
}

inline std::vector<cplx> to_complex(const std::vector<double>& v) { return {v.begin(), v.end()}; }

} // namespace cst
