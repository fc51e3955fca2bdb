"""Hot inner-loop kernels with a compiled core and a pure-numpy fallback.

The compiled extension is used when available; set PAIRKIN_KERNELS to
"numpy" or "compiled" to force a backend.  All kernels operate on
(n_cells, n_v) float64 C-contiguous views of the phase-space arrays.
"""

from __future__ import annotations

import os

from . import _numpy

try:
    from . import _core
except ImportError:
    _core = None


def available_backends() -> tuple[str, ...]:
    return ("numpy",) if _core is None else ("compiled", "numpy")


def _select(name: str):
    if name == "numpy":
        return _numpy, "numpy"
    if name == "compiled":
        if _core is None:
            raise ImportError(
                "compiled kernels requested via PAIRKIN_KERNELS but the "
                "extension is not built; run `pip install -e . --no-build-isolation`"
            )
        return _core, "compiled"
    if name == "auto":
        return (_numpy, "numpy") if _core is None else (_core, "compiled")
    raise ValueError(f"unknown kernel backend {name!r}")


_impl, BACKEND = _select(os.environ.get("PAIRKIN_KERNELS", "auto"))


def use_backend(name: str) -> str:
    """Switch the active backend; returns the previous backend name."""
    global _impl, BACKEND
    previous = BACKEND
    _impl, BACKEND = _select(name)
    return previous


def relax_update(f, chi, rho_new, rho_old, lam):
    """In place: f[c,k] = rho_new[c]*chi[k] + lam[c]*(f[c,k] - rho_old[c]*chi[k])."""
    return _impl.relax_update(f, chi, rho_new, rho_old, lam)


def entropy_sum(f, chi, w, rho_inf):
    """sum_{c,k} w[k] * rho_inf*chi[k] * phi(f/(rho_inf*chi[k])), phi(u)=u*ln(u)-u+1."""
    return _impl.entropy_sum(f, chi, w, rho_inf)


def d12_sum(f, rho, chi, w):
    """sum_{c,k} w[k] * rho[c]*chi[k] * (u-1)*ln(u) with u = f/(rho[c]*chi[k])."""
    return _impl.d12_sum(f, rho, chi, w)


def d3_sum(f1, f2, rho1, rho2, chi1, chi2, w):
    """Reaction dissipation reduced to single-velocity integrals.

    sum_{c,k} w[k] * [(rho2[c]*f1 - chi1)*ln(f1/chi1)
                      + (rho1[c]*f2 - chi2)*ln(f2/chi2)].
    """
    return _impl.d3_sum(f1, f2, rho1, rho2, chi1, chi2, w)


def weighted_dot(f, g, chi, w):
    """sum_{c,k} w[k] * f[c,k]*g[c,k] / chi[k]."""
    return _impl.weighted_dot(f, g, chi, w)


def ratio_extrema(f, chi):
    """(min, max) over all entries of f[c,k] / chi[k]."""
    return _impl.ratio_extrema(f, chi)
