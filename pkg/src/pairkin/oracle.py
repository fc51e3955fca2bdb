"""Independent short-horizon reference solver by Picard iteration.

The integral (Duhamel) form of the system is iterated on the density
histories rho_i(x, s) sampled on a uniform time grid:

    f1(x,v,t) = Q2(x,v,0,t) f10(x - (v/eps) t, v)
                + chi1(v) int_0^t Q2(x,v,tau,t) (1 + (sigma/eps^2)
                      rho1(x + (v/eps)(tau - t), tau)) dtau,

    Q_i(x,v,tau,t) = exp(sigma (tau - t)/eps^2
                         - int_tau^t rho_i(x + (v/eps)(s - t), s) ds),

and symmetrically for f2 with Q1.  Characteristic foot points are evaluated
by trigonometric interpolation (FFT phase shifts), time integrals by
composite Simpson rules; the quadrature nodes coincide with the stored
history nodes, so no interpolation in time is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .phase import PhaseGrid, StatePair, moments
from .solver import ModelParams


class PicardConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"Picard iteration did not converge within {iterations} iterations "
            f"(last residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class PicardConfig:
    max_iterations: int = 50
    tol: float = 1e-10
    time_nodes: int = 64   # number of uniform time intervals on [0, t]

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.time_nodes < 8:
            raise ValueError("time_nodes must be >= 8")


@dataclass
class PicardInfo:
    converged: bool = False
    iterations: int = 0
    residuals: list = field(default_factory=list)


def composite_weights(n: int) -> np.ndarray:
    """Unit-spacing quadrature weights over n uniform intervals (n+1 nodes).

    Composite Simpson for even n, Simpson plus a trailing 3/8 block for odd
    n >= 3, trapezoid for n = 1; exact on cubics for n >= 2.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    w = np.zeros(n + 1)
    if n == 0:
        return w
    if n == 1:
        w[:] = 0.5
        return w
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / 3.0
        w[1:n:2] = 4.0 / 3.0
        w[2:n:2] = 2.0 / 3.0
        return w
    m = n - 3
    if m > 0:
        w[0] = w[m] = 1.0 / 3.0
        w[1:m:2] = 4.0 / 3.0
        w[2:m:2] = 2.0 / 3.0
    w[m] += 3.0 / 8.0
    w[m + 1] += 9.0 / 8.0
    w[m + 2] += 9.0 / 8.0
    w[n] += 3.0 / 8.0
    return w


def prefix_weight_matrix(n: int) -> np.ndarray:
    """Row m holds the unit-spacing weights for integrating over nodes m..n."""
    S = np.zeros((n + 1, n + 1))
    for m in range(n + 1):
        S[m, m:] = composite_weights(n - m)
    return S


def q_factor(rho_samples, sigma: float, epsilon: float, tau: float, t: float) -> float:
    """Damping factor exp(sigma (tau - t)/eps^2 - int_tau^t rho ds).

    rho_samples are uniform samples of the density along the characteristic
    on [tau, t]; the integral uses the composite Simpson rule.
    """
    if tau > t:
        raise ValueError(f"need tau <= t, got tau={tau} > t={t}")
    if tau == t:
        return 1.0
    rho = np.asarray(rho_samples, dtype=float)
    if rho.ndim != 1 or rho.size < 2:
        raise ValueError("need at least two uniform samples on [tau, t]")
    n = rho.size - 1
    h = (t - tau) / n
    integral = h * float(composite_weights(n) @ rho)
    return math.exp(sigma * (tau - t) / epsilon**2 - integral)


def _kv_grid(grid: PhaseGrid) -> np.ndarray:
    k = grid.k1d
    v = grid.v
    if grid.d == 1:
        return np.multiply.outer(k, v[:, 0])
    return k[:, None, None] * v[None, None, :, 0] + k[None, :, None] * v[None, None, :, 1]


def picard_solve(F0: StatePair, t: float, params: ModelParams, grid: PhaseGrid,
                 config: PicardConfig = PicardConfig(), return_info: bool = False):
    """Fixed point of the integral formulation at horizon t.

    Convergence is declared when successive density histories agree within
    config.tol in sup norm; non-convergence raises PicardConvergenceError
    (the map contracts only on short horizons).
    """
    if t < 0.0:
        raise ValueError("horizon must be nonnegative")
    info = PicardInfo()
    if t == 0.0:
        info.converged = True
        return (F0.copy(), info) if return_info else F0.copy()

    M = config.time_nodes
    h = t / M
    eps = params.epsilon
    sig_eps2 = params.sigma / eps**2
    sp_axes = grid.spatial_axes
    hist_axes = tuple(a + 1 for a in sp_axes)

    # phases[j] shifts a field by -(v/eps) * j * h; phases[n] is the foot shift
    j_over_eps = np.arange(M + 1) * (h / eps)
    kv = _kv_grid(grid)
    phases = np.exp(-2j * math.pi * j_over_eps.reshape((-1,) + (1,) * kv.ndim) * kv)

    S = [prefix_weight_matrix(n) * h for n in range(M + 1)]
    mac0 = moments(F0, grid)
    f0hat1 = np.fft.fftn(F0.f1, axes=sp_axes)
    f0hat2 = np.fft.fftn(F0.f2, axes=sp_axes)
    chi1v, chi2v = grid.chi1.values, grid.chi2.values
    w = grid.w

    hist_shape = (M + 1,) + grid.spatial_shape
    P1 = np.broadcast_to(mac0.rho1, hist_shape).copy()
    P2 = np.broadcast_to(mac0.rho2, hist_shape).copy()
    bshape = (-1,) + (1,) * (grid.d + 1)
    out_f1 = out_f2 = None

    for it in range(1, config.max_iterations + 1):
        P1hat = np.fft.fftn(P1, axes=hist_axes)
        P2hat = np.fft.fftn(P2, axes=hist_axes)
        new_P1 = np.empty_like(P1)
        new_P2 = np.empty_like(P2)
        new_P1[0] = mac0.rho1
        new_P2[0] = mac0.rho2
        for n in range(1, M + 1):
            ph = phases[n::-1]
            E1 = np.fft.ifftn(P1hat[: n + 1][..., None] * ph, axes=hist_axes).real
            E2 = np.fft.ifftn(P2hat[: n + 1][..., None] * ph, axes=hist_axes).real
            W1 = np.tensordot(S[n], E1, axes=(1, 0))
            W2 = np.tensordot(S[n], E2, axes=(1, 0))
            dtau = (np.arange(n + 1) - n) * h
            Q1 = np.exp(sig_eps2 * dtau.reshape(bshape) - W1)
            Q2 = np.exp(sig_eps2 * dtau.reshape(bshape) - W2)
            w_full = S[n][0]
            duh1 = np.tensordot(w_full, Q2 * (1.0 + sig_eps2 * E1), axes=(0, 0))
            duh2 = np.tensordot(w_full, Q1 * (1.0 + sig_eps2 * E2), axes=(0, 0))
            foot1 = np.fft.ifftn(f0hat1 * phases[n], axes=sp_axes).real
            foot2 = np.fft.ifftn(f0hat2 * phases[n], axes=sp_axes).real
            f1n = Q2[0] * foot1 + chi1v * duh1
            f2n = Q1[0] * foot2 + chi2v * duh2
            new_P1[n] = f1n @ w
            new_P2[n] = f2n @ w
            if n == M:
                out_f1, out_f2 = f1n, f2n
        residual = max(float(np.max(np.abs(new_P1 - P1))),
                       float(np.max(np.abs(new_P2 - P2))))
        info.residuals.append(residual)
        info.iterations = it
        P1, P2 = new_P1, new_P2
        if residual < config.tol:
            info.converged = True
            break
    else:
        raise PicardConvergenceError(info.residuals[-1], info.iterations)

    out = StatePair(out_f1, out_f2, F0.t + t)
    return (out, info) if return_info else out
