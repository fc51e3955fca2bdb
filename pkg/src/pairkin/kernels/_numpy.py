"""Pure numpy twin of the compiled kernels (same signatures, same math)."""

from __future__ import annotations

import numpy as np

# Below this offset from 1 the entropy integrand u*ln(u)-u+1 is evaluated by
# its series in w = u-1 to avoid cancellation; the cutoff matches _core.pyx.
PHI_SERIES_CUTOFF = 1e-4


def _phi(u):
    w = u - 1.0
    series = w * w * (0.5 + w * (-1.0 / 6.0 + w * (1.0 / 12.0 + w * (-0.05 + w / 30.0))))
    direct = u * np.log(u) - w
    return np.where(np.abs(w) < PHI_SERIES_CUTOFF, series, direct)


def relax_update(f, chi, rho_new, rho_old, lam):
    f -= rho_old[:, None] * chi[None, :]
    f *= lam[:, None]
    f += rho_new[:, None] * chi[None, :]


def entropy_sum(f, chi, w, rho_inf):
    u = f / (rho_inf * chi[None, :])
    return float(rho_inf * np.sum(_phi(u) @ (w * chi)))


def d12_sum(f, rho, chi, w):
    u = f / (rho[:, None] * chi[None, :])
    psi = (u - 1.0) * np.log1p(u - 1.0)
    return float(np.dot(rho, psi @ (w * chi)))


def d3_sum(f1, f2, rho1, rho2, chi1, chi2, w):
    t1 = (rho2[:, None] * f1 - chi1[None, :]) * np.log(f1 / chi1[None, :])
    t2 = (rho1[:, None] * f2 - chi2[None, :]) * np.log(f2 / chi2[None, :])
    return float(np.sum(t1 @ w) + np.sum(t2 @ w))


def weighted_dot(f, g, chi, w):
    return float(np.sum((f * g) @ (w / chi)))


def ratio_extrema(f, chi):
    r = f / chi[None, :]
    return float(r.min()), float(r.max())
