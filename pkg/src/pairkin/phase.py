"""Discrete phase space on the flat torus [0,1)^d times a velocity grid.

Spatial integrals use the midpoint rule on the uniform periodic grid,
velocity integrals use the equilibrium quadrature weights.  The torus has
unit volume, so spatial means and spatial integrals coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .equilibria import Equilibrium, make_gaussian

SNAPSHOT_MAGIC = b"PAIRKIN\x00"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class PhaseGrid:
    """Spatial torus grid shared by both species plus their velocity quadrature."""

    d: int
    nx: int
    chi1: Equilibrium
    chi2: Equilibrium

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"spatial dimension must be 1 or 2, got {self.d}")
        if self.nx < 4:
            raise ValueError(f"nx must be >= 4, got {self.nx}")
        if self.chi1.dim != self.d or self.chi2.dim != self.d:
            raise ValueError("equilibrium dimension must match the spatial dimension")
        if self.chi1.nodes.shape != self.chi2.nodes.shape or not np.array_equal(
            self.chi1.nodes, self.chi2.nodes
        ):
            raise ValueError("both species must share one velocity node set")

    @property
    def x1d(self) -> np.ndarray:
        return np.arange(self.nx) / self.nx

    @property
    def k1d(self) -> np.ndarray:
        """Integer Fourier wavenumbers along one spatial axis."""
        return np.fft.fftfreq(self.nx, 1.0 / self.nx)

    @property
    def v(self) -> np.ndarray:
        return self.chi1.nodes

    @property
    def w(self) -> np.ndarray:
        return self.chi1.weights

    @property
    def n_v(self) -> int:
        return self.chi1.n_nodes

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.nx,) * self.d

    @property
    def n_cells(self) -> int:
        return self.nx**self.d

    @property
    def cell_volume(self) -> float:
        return self.nx ** (-float(self.d))

    @property
    def spatial_axes(self) -> tuple[int, ...]:
        return tuple(range(self.d))

    def laplacian_symbol(self) -> np.ndarray:
        """-(2 pi |k|)^2 multipliers on the spatial Fourier grid."""
        k = self.k1d
        if self.d == 1:
            ksq = k * k
        else:
            ksq = k[:, None] ** 2 + k[None, :] ** 2
        return -((2.0 * math.pi) ** 2) * ksq


def gaussian_grid(d: int, nx: int, n_v_per_dim: int, v_max: float,
                  temperature1: float = 1.0, temperature2: float = 1.0) -> PhaseGrid:
    """Convenience constructor with Gaussian equilibria for both species."""
    chi1 = make_gaussian(temperature1, d, v_max, n_v_per_dim)
    if temperature2 == temperature1:
        chi2 = chi1
    else:
        chi2 = make_gaussian(temperature2, d, v_max, n_v_per_dim)
    return PhaseGrid(d=d, nx=nx, chi1=chi1, chi2=chi2)


@dataclass
class StatePair:
    """The pair of phase-space densities at one time, shape (*spatial, n_v)."""

    f1: np.ndarray
    f2: np.ndarray
    t: float = 0.0

    def copy(self) -> "StatePair":
        return StatePair(self.f1.copy(), self.f2.copy(), self.t)


@dataclass(frozen=True)
class MacroFields:
    rho1: np.ndarray
    rho2: np.ndarray


@dataclass(frozen=True)
class EquilibriumState:
    """Global equilibrium determined by the conserved mass difference."""

    rho1_inf: float
    rho2_inf: float
    f_inf: StatePair


def _flat(f: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    return f.reshape(grid.n_cells, grid.n_v)


def _check_shape(f: np.ndarray, grid: PhaseGrid, name: str) -> None:
    expected = grid.spatial_shape + (grid.n_v,)
    if f.shape != expected:
        raise ValueError(f"{name} has shape {f.shape}, expected {expected}")


def moments(F: StatePair, grid: PhaseGrid) -> MacroFields:
    """Position densities rho_i(x) = sum_k w_k f_i(x, v_k)."""
    _check_shape(F.f1, grid, "f1")
    _check_shape(F.f2, grid, "f2")
    return MacroFields(F.f1 @ grid.w, F.f2 @ grid.w)


def conserved_mass_difference(F: StatePair, grid: PhaseGrid) -> float:
    mac = moments(F, grid)
    return float(grid.cell_volume * (np.sum(mac.rho1) - np.sum(mac.rho2)))


def rho_infinity_pair(mass_difference: float) -> tuple[float, float]:
    """Positive roots of rho1*rho2 = 1, rho1 - rho2 = mass_difference."""
    m = mass_difference
    r1 = 0.5 * (m + math.sqrt(m * m + 4.0))
    return r1, 1.0 / r1


def equilibrium_state(F0: StatePair, grid: PhaseGrid) -> EquilibriumState:
    """Global equilibrium seeded by the conserved mass difference of F0."""
    r1, r2 = rho_infinity_pair(conserved_mass_difference(F0, grid))
    shape = grid.spatial_shape + (grid.n_v,)
    f1 = np.broadcast_to(r1 * grid.chi1.values, shape).copy()
    f2 = np.broadcast_to(r2 * grid.chi2.values, shape).copy()
    return EquilibriumState(r1, r2, StatePair(f1, f2, F0.t))


def weighted_inner(F: StatePair, G: StatePair, eq: EquilibriumState, grid: PhaseGrid) -> float:
    """Scalar product sum_i int f_i g_i / (rho_i_inf chi_i) dv dx."""
    h = grid.cell_volume
    s1 = kernels.weighted_dot(_flat(F.f1, grid), _flat(G.f1, grid), grid.chi1.values, grid.w)
    s2 = kernels.weighted_dot(_flat(F.f2, grid), _flat(G.f2, grid), grid.chi2.values, grid.w)
    return h * (s1 / eq.rho1_inf + s2 / eq.rho2_inf)


def weighted_norm_sq(F: StatePair, eq: EquilibriumState, grid: PhaseGrid) -> float:
    return weighted_inner(F, F, eq, grid)


def state_diff(F: StatePair, G: StatePair) -> StatePair:
    return StatePair(F.f1 - G.f1, F.f2 - G.f2, F.t)


def species_norm_sq(g: np.ndarray, chi: Equilibrium, grid: PhaseGrid) -> float:
    """Single-species squared norm int g^2 / chi dv dx (no rho_inf weight)."""
    s = kernels.weighted_dot(_flat(g, grid), _flat(g, grid), chi.values, grid.w)
    return grid.cell_volume * s


def projection_pi(F: StatePair, grid: PhaseGrid) -> StatePair:
    """Projection onto local thermal states (rho1 chi1, rho2 chi2)."""
    mac = moments(F, grid)
    return StatePair(
        mac.rho1[..., None] * grid.chi1.values,
        mac.rho2[..., None] * grid.chi2.values,
        F.t,
    )


def projection_pi_omega(F: StatePair, grid: PhaseGrid) -> StatePair:
    """Projection onto spatially averaged thermal states."""
    mac = moments(F, grid)
    r1 = float(np.mean(mac.rho1))
    r2 = float(np.mean(mac.rho2))
    shape = grid.spatial_shape + (grid.n_v,)
    return StatePair(
        np.broadcast_to(r1 * grid.chi1.values, shape).copy(),
        np.broadcast_to(r2 * grid.chi2.values, shape).copy(),
        F.t,
    )


# ---------------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProfileSpec:
    """Spatial density profile r(x); for d=2 the profile varies along x1 only.

    kinds: constant (base), cosine (base + amplitude*cos(2 pi mode x + phase)),
    step (tanh-mollified square wave between lo and hi, edge width `width`;
    a sharp step is incompatible with spectral transport), random (base +
    amplitude * smooth random trigonometric polynomial, normalized to [-1,1]).
    """

    kind: str = "constant"
    base: float = 1.0
    amplitude: float = 0.0
    mode: int = 1
    phase: float = 0.0
    lo: float = 0.8
    hi: float = 1.2
    width: float = 0.05
    seed: int = 0

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full_like(x, self.base)
        if self.kind == "cosine":
            return self.base + self.amplitude * np.cos(2.0 * math.pi * self.mode * x + self.phase)
        if self.kind == "step":
            edge0 = np.tanh(np.sin(2.0 * math.pi * (x - 0.25)) / self.width)
            r = 0.5 * (self.lo + self.hi) + 0.5 * (self.hi - self.lo) * edge0
            return r
        if self.kind == "random":
            rng = np.random.default_rng(self.seed)
            raw = np.zeros_like(x)
            for k in range(1, 4):
                a, p = rng.normal(), rng.uniform(0.0, 2.0 * math.pi)
                raw += a * np.cos(2.0 * math.pi * k * x + p)
            top = float(np.max(np.abs(raw)))
            if top > 0.0:
                raw /= top
            return self.base + self.amplitude * raw
        raise ValueError(f"unknown profile kind {self.kind!r}")


def parse_profile(text: str) -> ProfileSpec:
    """Parse 'kind:key=value,key=value' profile strings used by the CLI."""
    kind, _, rest = text.partition(":")
    kwargs = {}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            key = key.strip()
            if key not in ProfileSpec.__dataclass_fields__ or key == "kind":
                raise ValueError(f"unknown profile parameter {key!r}")
            typ = int if key in ("mode", "seed") else float
            kwargs[key] = typ(val)
    spec = ProfileSpec(kind=kind.strip(), **kwargs)
    spec.evaluate(np.zeros(2))  # validates the kind eagerly
    return spec


def _spatial_field(r: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Broadcast a 1d profile along the first spatial axis to the full grid."""
    if grid.d == 1:
        return r
    return np.broadcast_to(r[:, None], grid.spatial_shape).copy()


def make_initial_condition(profile1: ProfileSpec, profile2: ProfileSpec,
                           grid: PhaseGrid, rho_m: float, rho_M: float) -> StatePair:
    """Separable initial state f_i = r_i(x) chi_i(v) with exact sandwich bounds.

    r1 must lie in [rho_m, rho_M] and r2 in [1/rho_M, 1/rho_m]; profiles
    violating the bounds are rejected.
    """
    if not (0.0 < rho_m <= rho_M):
        raise ValueError(f"need 0 < rho_m <= rho_M, got ({rho_m}, {rho_M})")
    x = np.arange(grid.nx) / grid.nx
    r1 = _spatial_field(profile1.evaluate(x), grid)
    r2 = _spatial_field(profile2.evaluate(x), grid)
    return make_state(r1, r2, grid, rho_m=rho_m, rho_M=rho_M)


def make_state(h1: np.ndarray, h2: np.ndarray, grid: PhaseGrid,
               rho_m: float | None = None, rho_M: float | None = None,
               unchecked: bool = False, t: float = 0.0) -> StatePair:
    """State from ratio fields h_i = f_i/chi_i (spatial or full phase-space).

    With bounds given, h1 is validated against [rho_m, rho_M] and h2 against
    [1/rho_M, 1/rho_m] unless unchecked=True.
    """
    def expand(h, chi):
        h = np.asarray(h, dtype=float)
        if h.shape == grid.spatial_shape:
            h = h[..., None]
        elif h.shape != grid.spatial_shape + (grid.n_v,):
            raise ValueError(f"ratio field has shape {h.shape}")
        return np.ascontiguousarray(np.broadcast_to(h, grid.spatial_shape + (grid.n_v,)) * chi.values)

    if not unchecked:
        if rho_m is None or rho_M is None:
            raise ValueError("bounds are required unless unchecked=True")
        for h, lo, hi, name in ((h1, rho_m, rho_M, "species 1"),
                                (h2, 1.0 / rho_M, 1.0 / rho_m, "species 2")):
            hmin, hmax = float(np.min(h)), float(np.max(h))
            if hmin < lo or hmax > hi:
                raise ValueError(
                    f"{name} ratio range [{hmin:.6g}, {hmax:.6g}] violates [{lo:.6g}, {hi:.6g}]"
                )
    return StatePair(expand(h1, grid.chi1), expand(h2, grid.chi2), t)


def random_bounded_state(grid: PhaseGrid, rho_m: float, rho_M: float,
                         rng: np.random.Generator, margin: float = 0.05,
                         t: float = 0.0) -> StatePair:
    """Random smooth state strictly inside the sandwich bounds.

    Ratio fields mix a few spatial Fourier modes with smooth velocity
    envelopes and are rescaled affinely into the margin-shrunk intervals,
    so the bounds hold by construction.
    """
    x = np.arange(grid.nx) / grid.nx
    vsq = np.sum(grid.v * grid.v, axis=1)

    def raw_field():
        out = np.zeros(grid.spatial_shape + (grid.n_v,))
        for _ in range(3):
            k = int(rng.integers(1, 4))
            p = rng.uniform(0.0, 2.0 * math.pi)
            sx = _spatial_field(np.cos(2.0 * math.pi * k * x + p), grid)
            c0, c1 = rng.normal(size=2)
            envelope = np.exp(-0.5 * vsq) * (c0 + c1 * grid.v[:, 0])
            out += rng.normal() * sx[..., None] * (1.0 + envelope)
        return out

    def rescale(raw, lo, hi):
        lo_m = lo + margin * (hi - lo)
        hi_m = hi - margin * (hi - lo)
        rmin, rmax = float(np.min(raw)), float(np.max(raw))
        if rmax - rmin < 1e-300:
            return np.full_like(raw, 0.5 * (lo_m + hi_m))
        return lo_m + (hi_m - lo_m) * (raw - rmin) / (rmax - rmin)

    h1 = rescale(raw_field(), rho_m, rho_M)
    h2 = rescale(raw_field(), 1.0 / rho_M, 1.0 / rho_m)
    return make_state(h1, h2, grid, rho_m=rho_m, rho_M=rho_M, t=t)


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def save_state(path, F: StatePair, grid: PhaseGrid, sigma: float = 0.0,
               epsilon: float = 1.0) -> None:
    """Write a little-endian binary snapshot plus a plain-text sidecar.

    Layout (see README): magic, version int64, then int64 d, nx, n_v,
    float64 v_max, t, sigma, epsilon, then f1 and f2 as flat float64 arrays
    in C order.
    """
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        np.array([SNAPSHOT_VERSION, grid.d, grid.nx, grid.n_v], dtype="<i8").tofile(fh)
        np.array([grid.chi1.v_max, F.t, sigma, epsilon], dtype="<f8").tofile(fh)
        F.f1.astype("<f8").tofile(fh)
        F.f2.astype("<f8").tofile(fh)
    with open(path + ".txt", "w") as fh:
        fh.write(
            "pairkin state snapshot\n"
            f"binary: {path}\n"
            f"magic={SNAPSHOT_MAGIC!r} version={SNAPSHOT_VERSION}\n"
            f"d={grid.d} nx={grid.nx} n_v={grid.n_v}\n"
            f"v_max={grid.chi1.v_max!r} t={F.t!r} sigma={sigma!r} epsilon={epsilon!r}\n"
            "data: f1 then f2, float64 little-endian, C order, shape (nx,)*d + (n_v,)\n"
        )


def load_state(path, grid: PhaseGrid | None = None):
    """Read a snapshot; returns (StatePair, header dict).

    When a grid is given the header is validated against it.
    """
    with open(str(path), "rb") as fh:
        magic = fh.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a pairkin snapshot")
        version, d, nx, n_v = (int(x) for x in np.fromfile(fh, dtype="<i8", count=4))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        v_max, t, sigma, epsilon = (float(x) for x in np.fromfile(fh, dtype="<f8", count=4))
        n = nx**d * n_v
        f1 = np.fromfile(fh, dtype="<f8", count=n)
        f2 = np.fromfile(fh, dtype="<f8", count=n)
    if f1.size != n or f2.size != n:
        raise ValueError(f"{path}: truncated snapshot")
    header = {"d": d, "nx": nx, "n_v": n_v, "v_max": v_max, "t": t,
              "sigma": sigma, "epsilon": epsilon}
    if grid is not None:
        if (d, nx, n_v) != (grid.d, grid.nx, grid.n_v):
            raise ValueError(f"{path}: snapshot header {header} does not match grid")
        shape = grid.spatial_shape + (grid.n_v,)
    else:
        shape = (nx,) * d + (n_v,)
    return StatePair(f1.reshape(shape), f2.reshape(shape), t), header
