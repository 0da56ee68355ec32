#include "pat/kernels.hpp"

namespace pat::kernels {

// Row-level bodies are shared by the serial and OpenMP drivers so both
// variants evaluate the exact same floating-point expressions per element.

namespace {

inline void vel_row_x(const WaveDims& d, const WaveCoeffs& c,
                      double* ux, const double* px, const double* py, int j) {
    const int nx = d.nx;
    const double* pxr = px + static_cast<std::size_t>(j) * nx;
    const double* pyr = py + static_cast<std::size_t>(j) * nx;
    double* uxr = ux + static_cast<std::size_t>(j) * (nx + 1);
    const double* bxr = c.bx + static_cast<std::size_t>(j) * (nx + 1);
    for (int I = 1; I < nx; ++I)
        uxr[I] = c.ax[I] * uxr[I] + bxr[I] * ((pxr[I] + pyr[I]) - (pxr[I - 1] + pyr[I - 1]));
}

inline void vel_row_y(const WaveDims& d, const WaveCoeffs& c,
                      double* uy, const double* px, const double* py, int J) {
    const int nx = d.nx;
    double* uyr = uy + static_cast<std::size_t>(J) * nx;
    const double* byr = c.by + static_cast<std::size_t>(J) * nx;
    const double* pxr = px + static_cast<std::size_t>(J) * nx;
    const double* pyr = py + static_cast<std::size_t>(J) * nx;
    const double* pxm = pxr - nx;
    const double* pym = pyr - nx;
    for (int i = 0; i < nx; ++i)
        uyr[i] = c.ay[J] * uyr[i] + byr[i] * ((pxr[i] + pyr[i]) - (pxm[i] + pym[i]));
}

inline void pres_row(const WaveDims& d, const WaveCoeffs& c,
                     double* px, double* py, const double* ux, const double* uy,
                     double* divx_out, double* divy_out, int j) {
    const int nx = d.nx;
    const std::size_t ji = static_cast<std::size_t>(j) * nx;
    const double* uxr = ux + static_cast<std::size_t>(j) * (nx + 1);
    const double* uyr = uy + ji;
    const double* uyp = uy + ji + nx;
    const double cyj = c.cy[j];
    for (int i = 0; i < nx; ++i) {
        const double dvx = uxr[i + 1] - uxr[i];
        const double dvy = uyp[i] - uyr[i];
        if (divx_out) divx_out[ji + i] = dvx;
        if (divy_out) divy_out[ji + i] = dvy;
        px[ji + i] = c.cx[i] * px[ji + i] + c.kx[ji + i] * dvx;
        py[ji + i] = cyj * py[ji + i] + c.ky[ji + i] * dvy;
    }
}

inline void adj_pres_face_x_row(const WaveDims& d, const WaveCoeffs& c,
                                const double* apx, double* aux, int j) {
    const int nx = d.nx;
    const std::size_t ji = static_cast<std::size_t>(j) * nx;
    double* uxr = aux + static_cast<std::size_t>(j) * (nx + 1);
    for (int I = 1; I < nx; ++I)
        uxr[I] += c.kx[ji + I - 1] * apx[ji + I - 1] - c.kx[ji + I] * apx[ji + I];
}

inline void adj_pres_face_y_row(const WaveDims& d, const WaveCoeffs& c,
                                const double* apy, double* auy, int J) {
    const int nx = d.nx;
    const std::size_t Ji = static_cast<std::size_t>(J) * nx;
    for (int i = 0; i < nx; ++i)
        auy[Ji + i] += c.ky[Ji - nx + i] * apy[Ji - nx + i] - c.ky[Ji + i] * apy[Ji + i];
}

inline void adj_pres_grad_row(const WaveDims& d, const double* apx, const double* apy,
                              const double* divx, const double* divy,
                              const double* gx, const double* gy,
                              double* kappa_grad, int j) {
    const int nx = d.nx;
    const std::size_t ji = static_cast<std::size_t>(j) * nx;
    const double gyj = gy[j];
    for (int i = 0; i < nx; ++i)
        kappa_grad[ji + i] += apx[ji + i] * gx[i] * divx[ji + i] + apy[ji + i] * gyj * divy[ji + i];
}

inline void adj_pres_decay_row(const WaveDims& d, const WaveCoeffs& c,
                               double* apx, double* apy, int j) {
    const int nx = d.nx;
    const std::size_t ji = static_cast<std::size_t>(j) * nx;
    const double cyj = c.cy[j];
    for (int i = 0; i < nx; ++i) {
        apx[ji + i] *= c.cx[i];
        apy[ji + i] *= cyj;
    }
}

// Gather form of the velocity-update transpose; boundary faces carry zero
// b coefficients, so no range branches are needed.
inline void adj_vel_scatter_row(const WaveDims& d, const WaveCoeffs& c,
                                const double* aux, const double* auy,
                                double* apx, double* apy, int j) {
    const int nx = d.nx;
    const std::size_t ji = static_cast<std::size_t>(j) * nx;
    const double* uxr = aux + static_cast<std::size_t>(j) * (nx + 1);
    const double* bxr = c.bx + static_cast<std::size_t>(j) * (nx + 1);
    const double* uyr = auy + ji;
    const double* uyp = auy + ji + nx;
    const double* byr = c.by + ji;
    const double* byp = c.by + ji + nx;
    for (int i = 0; i < nx; ++i) {
        const double add = bxr[i] * uxr[i] - bxr[i + 1] * uxr[i + 1]
                         + byr[i] * uyr[i] - byp[i] * uyp[i];
        apx[ji + i] += add;
        apy[ji + i] += add;
    }
}

inline void adj_vel_decay_x_row(const WaveDims& d, const WaveCoeffs& c, double* aux, int j) {
    double* uxr = aux + static_cast<std::size_t>(j) * (d.nx + 1);
    for (int I = 1; I < d.nx; ++I) uxr[I] *= c.ax[I];
}

inline void adj_vel_decay_y_row(const WaveDims& d, const WaveCoeffs& c, double* auy, int J) {
    double* uyr = auy + static_cast<std::size_t>(J) * d.nx;
    for (int i = 0; i < d.nx; ++i) uyr[i] *= c.ay[J];
}

}  // namespace

void update_velocity_serial(const WaveDims& d, const WaveCoeffs& c,
                            double* ux, double* uy,
                            const double* px, const double* py) {
    for (int j = 0; j < d.ny; ++j) vel_row_x(d, c, ux, px, py, j);
    for (int J = 1; J < d.ny; ++J) vel_row_y(d, c, uy, px, py, J);
}

void update_velocity_omp(const WaveDims& d, const WaveCoeffs& c,
                         double* ux, double* uy,
                         const double* px, const double* py) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < d.ny; ++j) vel_row_x(d, c, ux, px, py, j);
#pragma omp parallel for schedule(static)
    for (int J = 1; J < d.ny; ++J) vel_row_y(d, c, uy, px, py, J);
}

void update_pressure_serial(const WaveDims& d, const WaveCoeffs& c,
                            double* px, double* py,
                            const double* ux, const double* uy,
                            double* divx_out, double* divy_out) {
    for (int j = 0; j < d.ny; ++j) pres_row(d, c, px, py, ux, uy, divx_out, divy_out, j);
}

void update_pressure_omp(const WaveDims& d, const WaveCoeffs& c,
                         double* px, double* py,
                         const double* ux, const double* uy,
                         double* divx_out, double* divy_out) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < d.ny; ++j) pres_row(d, c, px, py, ux, uy, divx_out, divy_out, j);
}

void adjoint_pressure_serial(const WaveDims& d, const WaveCoeffs& c,
                             double* apx, double* apy,
                             double* aux, double* auy,
                             const double* divx, const double* divy,
                             const double* gx, const double* gy,
                             double* kappa_grad) {
    for (int j = 0; j < d.ny; ++j) adj_pres_face_x_row(d, c, apx, aux, j);
    for (int J = 1; J < d.ny; ++J) adj_pres_face_y_row(d, c, apy, auy, J);
    if (kappa_grad)
        for (int j = 0; j < d.ny; ++j)
            adj_pres_grad_row(d, apx, apy, divx, divy, gx, gy, kappa_grad, j);
    for (int j = 0; j < d.ny; ++j) adj_pres_decay_row(d, c, apx, apy, j);
}

void adjoint_pressure_omp(const WaveDims& d, const WaveCoeffs& c,
                          double* apx, double* apy,
                          double* aux, double* auy,
                          const double* divx, const double* divy,
                          const double* gx, const double* gy,
                          double* kappa_grad) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < d.ny; ++j) adj_pres_face_x_row(d, c, apx, aux, j);
#pragma omp parallel for schedule(static)
    for (int J = 1; J < d.ny; ++J) adj_pres_face_y_row(d, c, apy, auy, J);
    if (kappa_grad) {
#pragma omp parallel for schedule(static)
        for (int j = 0; j < d.ny; ++j)
            adj_pres_grad_row(d, apx, apy, divx, divy, gx, gy, kappa_grad, j);
    }
#pragma omp parallel for schedule(static)
    for (int j = 0; j < d.ny; ++j) adj_pres_decay_row(d, c, apx, apy, j);
}

void adjoint_velocity_serial(const WaveDims& d, const WaveCoeffs& c,
                             double* aux, double* auy,
                             double* apx, double* apy) {
    for (int j = 0; j < d.ny; ++j) adj_vel_scatter_row(d, c, aux, auy, apx, apy, j);
    for (int j = 0; j < d.ny; ++j) adj_vel_decay_x_row(d, c, aux, j);
    for (int J = 1; J < d.ny; ++J) adj_vel_decay_y_row(d, c, auy, J);
}

void adjoint_velocity_omp(const WaveDims& d, const WaveCoeffs& c,
                          double* aux, double* auy,
                          double* apx, double* apy) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < d.ny; ++j) adj_vel_scatter_row(d, c, aux, auy, apx, apy, j);
#pragma omp parallel for schedule(static)
    for (int j = 0; j < d.ny; ++j) adj_vel_decay_x_row(d, c, aux, j);
#pragma omp parallel for schedule(static)
    for (int J = 1; J < d.ny; ++J) adj_vel_decay_y_row(d, c, auy, J);
}

// ---------------------------------------------------------------------------
// 3x3 convolutions

namespace {

// One output row (fixed sample, output channel, row j), summing input
// channels in order; taps run k00..k22 with zero padding outside the image.
inline void conv_row(int cin, int h, int w,
                     const double* x, const double* kernel, double bias,
                     double* yrow, int n, int oc, int j, int cin_stride_images) {
    for (int i = 0; i < w; ++i) yrow[i] = bias;
    for (int ic = 0; ic < cin; ++ic) {
        const double* xc = x + (static_cast<std::size_t>(n) * cin_stride_images + ic) *
                                   static_cast<std::size_t>(h) * w;
        const double* kk = kernel + (static_cast<std::size_t>(oc) * cin + ic) * 9;
        const double k00 = kk[0], k01 = kk[1], k02 = kk[2];
        const double k10 = kk[3], k11 = kk[4], k12 = kk[5];
        const double k20 = kk[6], k21 = kk[7], k22 = kk[8];
        const double* r0 = (j > 0) ? xc + static_cast<std::size_t>(j - 1) * w : nullptr;
        const double* r1 = xc + static_cast<std::size_t>(j) * w;
        const double* r2 = (j + 1 < h) ? xc + static_cast<std::size_t>(j + 1) * w : nullptr;
        for (int i = 0; i < w; ++i) {
            double acc = 0.0;
            const bool l = i > 0, r = i + 1 < w;
            if (r0) {
                if (l) acc += k00 * r0[i - 1];
                acc += k01 * r0[i];
                if (r) acc += k02 * r0[i + 1];
            }
            if (l) acc += k10 * r1[i - 1];
            acc += k11 * r1[i];
            if (r) acc += k12 * r1[i + 1];
            if (r2) {
                if (l) acc += k20 * r2[i - 1];
                acc += k21 * r2[i];
                if (r) acc += k22 * r2[i + 1];
            }
            yrow[i] += acc;
        }
    }
}

// One input-gradient row: correlation of gy with the flipped kernel, summing
// output channels in order.
inline void conv_bwd_data_row(int cin, int cout, int h, int w,
                              const double* gy, const double* kernel,
                              double* gxrow, int n, int ic, int j) {
    for (int i = 0; i < w; ++i) gxrow[i] = 0.0;
    for (int oc = 0; oc < cout; ++oc) {
        const double* gc = gy + (static_cast<std::size_t>(n) * cout + oc) *
                                    static_cast<std::size_t>(h) * w;
        const double* kk = kernel + (static_cast<std::size_t>(oc) * cin + ic) * 9;
        // flipped taps
        const double k00 = kk[8], k01 = kk[7], k02 = kk[6];
        const double k10 = kk[5], k11 = kk[4], k12 = kk[3];
        const double k20 = kk[2], k21 = kk[1], k22 = kk[0];
        const double* r0 = (j > 0) ? gc + static_cast<std::size_t>(j - 1) * w : nullptr;
        const double* r1 = gc + static_cast<std::size_t>(j) * w;
        const double* r2 = (j + 1 < h) ? gc + static_cast<std::size_t>(j + 1) * w : nullptr;
        for (int i = 0; i < w; ++i) {
            double acc = 0.0;
            const bool l = i > 0, r = i + 1 < w;
            if (r0) {
                if (l) acc += k00 * r0[i - 1];
                acc += k01 * r0[i];
                if (r) acc += k02 * r0[i + 1];
            }
            if (l) acc += k10 * r1[i - 1];
            acc += k11 * r1[i];
            if (r) acc += k12 * r1[i + 1];
            if (r2) {
                if (l) acc += k20 * r2[i - 1];
                acc += k21 * r2[i];
                if (r) acc += k22 * r2[i + 1];
            }
            gxrow[i] += acc;
        }
    }
}

// Weight gradient for a fixed (oc, ic) pair, accumulated over batch, rows
// and columns in a fixed serial order.
inline void conv_bwd_weight_pair(int n_batch, int cin, int cout, int h, int w,
                                 const double* x, const double* gy,
                                 double* gk9, int oc, int ic) {
    double a[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
    for (int n = 0; n < n_batch; ++n) {
        const double* xc = x + (static_cast<std::size_t>(n) * cin + ic) *
                                   static_cast<std::size_t>(h) * w;
        const double* gc = gy + (static_cast<std::size_t>(n) * cout + oc) *
                                    static_cast<std::size_t>(h) * w;
        for (int j = 0; j < h; ++j) {
            const double* grow = gc + static_cast<std::size_t>(j) * w;
            const double* r0 = (j > 0) ? xc + static_cast<std::size_t>(j - 1) * w : nullptr;
            const double* r1 = xc + static_cast<std::size_t>(j) * w;
            const double* r2 = (j + 1 < h) ? xc + static_cast<std::size_t>(j + 1) * w : nullptr;
            for (int i = 0; i < w; ++i) {
                const double g = grow[i];
                const bool l = i > 0, r = i + 1 < w;
                if (r0) {
                    if (l) a[0] += g * r0[i - 1];
                    a[1] += g * r0[i];
                    if (r) a[2] += g * r0[i + 1];
                }
                if (l) a[3] += g * r1[i - 1];
                a[4] += g * r1[i];
                if (r) a[5] += g * r1[i + 1];
                if (r2) {
                    if (l) a[6] += g * r2[i - 1];
                    a[7] += g * r2[i];
                    if (r) a[8] += g * r2[i + 1];
                }
            }
        }
    }
    for (int t = 0; t < 9; ++t) gk9[t] += a[t];
}

inline double bias_grad_channel(int n_batch, int cout, int h, int w,
                                const double* gy, int oc) {
    double s = 0.0;
    for (int n = 0; n < n_batch; ++n) {
        const double* gc = gy + (static_cast<std::size_t>(n) * cout + oc) *
                                    static_cast<std::size_t>(h) * w;
        const std::size_t count = static_cast<std::size_t>(h) * w;
        for (std::size_t k = 0; k < count; ++k) s += gc[k];
    }
    return s;
}

}  // namespace

void conv3x3_forward_serial(int n, int cin, int cout, int h, int w,
                            const double* x, const double* kernel,
                            const double* bias, double* y) {
    for (int t = 0; t < n * cout; ++t) {
        const int nn = t / cout, oc = t % cout;
        for (int j = 0; j < h; ++j) {
            double* yrow = y + ((static_cast<std::size_t>(nn) * cout + oc) *
                                    static_cast<std::size_t>(h) + j) * w;
            conv_row(cin, h, w, x, kernel, bias[oc], yrow, nn, oc, j, cin);
        }
    }
}

void conv3x3_forward_omp(int n, int cin, int cout, int h, int w,
                         const double* x, const double* kernel,
                         const double* bias, double* y) {
#pragma omp parallel for schedule(static)
    for (int t = 0; t < n * cout; ++t) {
        const int nn = t / cout, oc = t % cout;
        for (int j = 0; j < h; ++j) {
            double* yrow = y + ((static_cast<std::size_t>(nn) * cout + oc) *
                                    static_cast<std::size_t>(h) + j) * w;
            conv_row(cin, h, w, x, kernel, bias[oc], yrow, nn, oc, j, cin);
        }
    }
}

void conv3x3_backward_data_serial(int n, int cin, int cout, int h, int w,
                                  const double* gy, const double* kernel,
                                  double* gx) {
    for (int t = 0; t < n * cin; ++t) {
        const int nn = t / cin, ic = t % cin;
        for (int j = 0; j < h; ++j) {
            double* gxrow = gx + ((static_cast<std::size_t>(nn) * cin + ic) *
                                      static_cast<std::size_t>(h) + j) * w;
            conv_bwd_data_row(cin, cout, h, w, gy, kernel, gxrow, nn, ic, j);
        }
    }
}

void conv3x3_backward_data_omp(int n, int cin, int cout, int h, int w,
                               const double* gy, const double* kernel,
                               double* gx) {
#pragma omp parallel for schedule(static)
    for (int t = 0; t < n * cin; ++t) {
        const int nn = t / cin, ic = t % cin;
        for (int j = 0; j < h; ++j) {
            double* gxrow = gx + ((static_cast<std::size_t>(nn) * cin + ic) *
                                      static_cast<std::size_t>(h) + j) * w;
            conv_bwd_data_row(cin, cout, h, w, gy, kernel, gxrow, nn, ic, j);
        }
    }
}

void conv3x3_backward_weights_serial(int n, int cin, int cout, int h, int w,
                                     const double* x, const double* gy,
                                     double* gkernel, double* gbias) {
    for (int t = 0; t < cout * cin; ++t) {
        const int oc = t / cin, ic = t % cin;
        conv_bwd_weight_pair(n, cin, cout, h, w, x, gy,
                             gkernel + static_cast<std::size_t>(t) * 9, oc, ic);
    }
    for (int oc = 0; oc < cout; ++oc)
        gbias[oc] += bias_grad_channel(n, cout, h, w, gy, oc);
}

void conv3x3_backward_weights_omp(int n, int cin, int cout, int h, int w,
                                  const double* x, const double* gy,
                                  double* gkernel, double* gbias) {
#pragma omp parallel for schedule(static)
    for (int t = 0; t < cout * cin; ++t) {
        const int oc = t / cin, ic = t % cin;
        conv_bwd_weight_pair(n, cin, cout, h, w, x, gy,
                             gkernel + static_cast<std::size_t>(t) * 9, oc, ic);
    }
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < cout; ++oc)
        gbias[oc] += bias_grad_channel(n, cout, h, w, gy, oc);
}

}  // namespace pat::kernels
