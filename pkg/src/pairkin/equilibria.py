"""Equilibrium velocity distributions on a truncated uniform velocity grid.

The velocity domain is the box [-v_max, v_max]^d with a symmetric uniform
node layout and trapezoid weights, so that even distributions have discrete
mean zero and the discrete normalization can be enforced exactly by
renormalization.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Equilibrium:
    """A strictly positive velocity probability density on quadrature nodes.

    values are renormalized so that sum(weights * values) == 1 to machine
    precision.  second_moment is the discrete integral of |v|^2 * values and
    temperature_like = second_moment / dim.
    """

    dim: int
    nodes: np.ndarray      # (n_nodes, dim)
    weights: np.ndarray    # (n_nodes,)
    values: np.ndarray     # (n_nodes,)
    second_moment: float
    temperature_like: float

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def v_max(self) -> float:
        return float(np.max(np.abs(self.nodes)))


@dataclass(frozen=True)
class EquilibriumCheck:
    name: str
    passed: bool
    residual: float


@dataclass(frozen=True)
class EquilibriumReport:
    checks: tuple[EquilibriumCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.name}: residual={c.residual:.3e}")
        return "\n".join(lines)


def uniform_velocity_layout(d: int, v_max: float, n_per_dim: int):
    """Symmetric uniform nodes with trapezoid weights on [-v_max, v_max]^d."""
    x = np.linspace(-v_max, v_max, n_per_dim)
    w1 = np.full(n_per_dim, x[1] - x[0])
    w1[0] *= 0.5
    w1[-1] *= 0.5
    grids = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=1)
    weights = np.ones(1)
    for _ in range(d):
        weights = np.multiply.outer(weights, w1).reshape(-1)
    return nodes, weights


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def _build(dim: int, nodes: np.ndarray, weights: np.ndarray, raw: np.ndarray) -> Equilibrium:
    if np.any(raw <= 0.0) or not np.all(np.isfinite(raw)):
        raise ValueError("equilibrium values must be strictly positive and finite")
    values = raw / float(np.sum(weights * raw))
    second = float(np.sum(weights * values * np.sum(nodes * nodes, axis=1)))
    return Equilibrium(
        dim=dim,
        nodes=_freeze(nodes),
        weights=_freeze(weights),
        values=_freeze(values),
        second_moment=second,
        temperature_like=second / dim,
    )


def _check_layout(d: int, v_max: float, n_per_dim: int) -> None:
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if v_max <= 0.0:
        raise ValueError(f"v_max must be positive, got {v_max}")
    if n_per_dim < 4 or n_per_dim % 2 != 0:
        raise ValueError(f"n_nodes_per_dim must be even and >= 4, got {n_per_dim}")


def make_gaussian(temperature: float, d: int, v_max: float, n_nodes_per_dim: int) -> Equilibrium:
    """Discrete centered Gaussian with the given temperature, renormalized.

    v_max >= 4*sqrt(temperature) is recommended so that the truncated tail
    is negligible.
    """
    if temperature <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    _check_layout(d, v_max, n_nodes_per_dim)
    nodes, weights = uniform_velocity_layout(d, v_max, n_nodes_per_dim)
    vsq = np.sum(nodes * nodes, axis=1)
    raw = np.exp(-vsq / (2.0 * temperature)) / (2.0 * math.pi * temperature) ** (d / 2.0)
    return _build(d, nodes, weights, raw)


def tabulated(values, d: int, v_max: float, n_nodes_per_dim: int) -> Equilibrium:
    """Equilibrium from user-supplied strictly positive values on the uniform layout."""
    _check_layout(d, v_max, n_nodes_per_dim)
    nodes, weights = uniform_velocity_layout(d, v_max, n_nodes_per_dim)
    raw = np.asarray(values, dtype=float).reshape(-1)
    if raw.shape[0] != nodes.shape[0]:
        raise ValueError(f"expected {nodes.shape[0]} values, got {raw.shape[0]}")
    return _build(d, nodes, weights, raw)


def validate_equilibrium(chi: Equilibrium) -> EquilibriumReport:
    """Check positivity, normalization, zero mean and second moment; never raises."""
    min_val = float(np.min(chi.values))
    norm_res = abs(float(np.sum(chi.weights * chi.values)) - 1.0)
    mean = chi.weights @ (chi.values[:, None] * chi.nodes)
    mean_res = float(np.max(np.abs(mean)))
    second = float(np.sum(chi.weights * chi.values * np.sum(chi.nodes * chi.nodes, axis=1)))
    checks = (
        EquilibriumCheck("positivity", min_val > 0.0, min_val),
        EquilibriumCheck("normalization", norm_res <= 1e-12, norm_res),
        EquilibriumCheck("zero_mean", mean_res <= 1e-12, mean_res),
        EquilibriumCheck("second_moment", math.isfinite(second) and second > 0.0, second),
    )
    return EquilibriumReport(checks)


def diffusion_coefficient(chi: Equilibrium, sigma: float) -> float:
    """Limiting diffusion coefficient temperature_like / sigma."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return chi.temperature_like / sigma


def equilibrium_to_text(chi: Equilibrium) -> str:
    """Reproducible structured text snapshot (nodes, weights, values)."""
    buf = io.StringIO()
    buf.write("pairkin-equilibrium 1\n")
    buf.write(f"dim {chi.dim}\n")
    buf.write(f"n_nodes {chi.n_nodes}\n")
    for i in range(chi.n_nodes):
        coords = " ".join(f"{c:.17g}" for c in chi.nodes[i])
        buf.write(f"{coords} {chi.weights[i]:.17g} {chi.values[i]:.17g}\n")
    return buf.getvalue()


def equilibrium_from_text(text: str) -> Equilibrium:
    """Inverse of equilibrium_to_text; values are taken verbatim (no renormalization)."""
    lines = text.strip().splitlines()
    if not lines or not lines[0].startswith("pairkin-equilibrium"):
        raise ValueError("not an equilibrium snapshot")
    dim = int(lines[1].split()[1])
    n = int(lines[2].split()[1])
    rows = np.array([[float(tok) for tok in ln.split()] for ln in lines[3 : 3 + n]])
    if rows.shape != (n, dim + 2):
        raise ValueError("malformed equilibrium snapshot")
    nodes, weights, values = rows[:, :dim], rows[:, dim], rows[:, dim + 1]
    second = float(np.sum(weights * values * np.sum(nodes * nodes, axis=1)))
    return Equilibrium(
        dim=dim,
        nodes=_freeze(nodes),
        weights=_freeze(weights),
        values=_freeze(values),
        second_moment=second,
        temperature_like=second / dim,
    )
