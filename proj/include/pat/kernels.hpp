#pragma once
// Data-parallel inner loops: staggered-grid wave updates, their transposes,
// and 3x3 convolution passes. Every kernel comes in a serial reference
// variant and an OpenMP variant; both compute each output element with the
// same scalar expression, so results are bit-identical for any thread count.
//
// Wave layouts (computational grid, row-major):
//   cell fields px, py          ny x nx
//   x-face field ux             ny x (nx+1), face (j,I) between cells I-1 and I
//   y-face field uy             (ny+1) x nx, face (J,i) between rows J-1 and J
// Boundary faces (I=0, I=nx, J=0, J=ny) are rigid: held at zero, never updated.
//
// One time step advances velocity first from p = px+py, then pressure from
// the fresh velocity divergence:
//   ux(j,I) = ax[I]*ux(j,I) + bx(j,I)*(p(j,I) - p(j,I-1))
//   uy(J,i) = ay[J]*uy(J,i) + by(J,i)*(p(J,i) - p(J-1,i))
//   px(j,i) = cx[i]*px(j,i) + kx(j,i)*(ux(j,i+1) - ux(j,i))
//   py(j,i) = cy[j]*py(j,i) + ky(j,i)*(uy(j+1,i) - uy(j,i))
// ax, ay, cx, cy are 1-D absorption decay profiles; bx, by fold the density
// and spacing; kx, ky fold the bulk modulus rho*c^2, spacing and absorption.

#include <cstddef>

namespace pat::kernels {

struct WaveDims {
    int nx = 0;
    int ny = 0;
};

struct WaveCoeffs {
    const double* ax;  // nx+1
    const double* ay;  // ny+1
    const double* bx;  // ny*(nx+1)
    const double* by;  // (ny+1)*nx
    const double* cx;  // nx
    const double* cy;  // ny
    const double* kx;  // ny*nx
    const double* ky;  // ny*nx
};

void update_velocity_serial(const WaveDims& d, const WaveCoeffs& c,
                            double* ux, double* uy,
                            const double* px, const double* py);
void update_velocity_omp(const WaveDims& d, const WaveCoeffs& c,
                         double* ux, double* uy,
                         const double* px, const double* py);

// Optionally captures the raw face differences used by the update
// (divx(j,i) = ux(j,i+1)-ux(j,i), divy likewise); pass nullptr to skip.
void update_pressure_serial(const WaveDims& d, const WaveCoeffs& c,
                            double* px, double* py,
                            const double* ux, const double* uy,
                            double* divx_out, double* divy_out);
void update_pressure_omp(const WaveDims& d, const WaveCoeffs& c,
                         double* px, double* py,
                         const double* ux, const double* uy,
                         double* divx_out, double* divy_out);

// Transpose of update_pressure. Accumulates into the adjoint faces from the
// incoming adjoint pressures, then applies the decay profiles to them.
// When kappa_grad is requested, divx/divy must hold the forward captures of
// the matching step and gx (len nx), gy (len ny) the kappa-independent
// pressure-update factors; the kernel accumulates
//   kappa_grad(j,i) += apx(j,i)*gx[i]*divx(j,i) + apy(j,i)*gy[j]*divy(j,i)
// using the pre-decay adjoint values.
void adjoint_pressure_serial(const WaveDims& d, const WaveCoeffs& c,
                             double* apx, double* apy,
                             double* aux, double* auy,
                             const double* divx, const double* divy,
                             const double* gx, const double* gy,
                             double* kappa_grad);
void adjoint_pressure_omp(const WaveDims& d, const WaveCoeffs& c,
                          double* apx, double* apy,
                          double* aux, double* auy,
                          const double* divx, const double* divy,
                          const double* gx, const double* gy,
                          double* kappa_grad);

// Transpose of update_velocity: scatters adjoint faces into both adjoint
// pressure components, then decays the adjoint faces.
void adjoint_velocity_serial(const WaveDims& d, const WaveCoeffs& c,
                             double* aux, double* auy,
                             double* apx, double* apy);
void adjoint_velocity_omp(const WaveDims& d, const WaveCoeffs& c,
                          double* aux, double* auy,
                          double* apx, double* apy);

// 3x3 convolution, stride 1, zero padding 1, NCHW layout.
// x: n*cin*h*w, kernel: cout*cin*3*3, bias: cout, y: n*cout*h*w.
void conv3x3_forward_serial(int n, int cin, int cout, int h, int w,
                            const double* x, const double* kernel,
                            const double* bias, double* y);
void conv3x3_forward_omp(int n, int cin, int cout, int h, int w,
                         const double* x, const double* kernel,
                         const double* bias, double* y);

// Gradient with respect to the input: correlation of gy with the flipped kernel.
void conv3x3_backward_data_serial(int n, int cin, int cout, int h, int w,
                                  const double* gy, const double* kernel,
                                  double* gx);
void conv3x3_backward_data_omp(int n, int cin, int cout, int h, int w,
                               const double* gy, const double* kernel,
                               double* gx);

// Gradients with respect to kernel and bias, accumulated over batch and pixels
// in a fixed order (deterministic for any thread count).
void conv3x3_backward_weights_serial(int n, int cin, int cout, int h, int w,
                                     const double* x, const double* gy,
                                     double* gkernel, double* gbias);
void conv3x3_backward_weights_omp(int n, int cin, int cout, int h, int w,
                                  const double* x, const double* gy,
                                  double* gkernel, double* gbias);

}  // namespace pat::kernels
