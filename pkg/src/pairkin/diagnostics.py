"""Entropy, dissipation, coupling operators and decay-rate diagnostics.

The scalar product throughout is the equilibrium-weighted one,
<F,G> = sum_i int f_i g_i / (rho_i_inf chi_i) dv dx.  The auxiliary operator
couples dissipation with transport: applied to F it solves, per species, the
torus Helmholtz problem (1 - theta_i Lap) w_i = -div J_i with flux
J_i = int v f_i dv, and returns (w_1 chi_1, w_2 chi_2).  All elliptic solves
are spectral and exact per Fourier mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .phase import (
    EquilibriumState,
    PhaseGrid,
    StatePair,
    moments,
    projection_pi,
    state_diff,
    weighted_inner,
    weighted_norm_sq,
)

CSV_COLUMNS = ["t", "H", "D1", "D2", "D3", "Gamma", "dist2", "micro2", "R2",
               "massdiff", "r1min", "r1max", "r2min", "r2max", "coupling"]


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One time-stamped row of scalar diagnostics.

    dist2 = ||F - F_inf||^2, micro2 = ||(I-Pi)F||^2, R2 = ||R(F)||^2 in the
    weighted norm, coupling = <A(F - F_inf), F - F_inf>, massdiff the
    conserved integral of f1 - f2, r*min/r*max the sandwich-bound extrema
    of f_i/chi_i.
    """

    t: float
    H: float
    D1: float
    D2: float
    D3: float
    Gamma: float
    dist2: float
    micro2: float
    R2: float
    massdiff: float
    r1min: float
    r1max: float
    r2min: float
    r2max: float
    coupling: float

    def row(self) -> list[float]:
        return [getattr(self, c) for c in CSV_COLUMNS]


class CsvSink:
    """Streams DiagnosticsRecords to CSV (mandatory header, full precision)."""

    def __init__(self, path):
        self._fh = open(str(path), "w", newline="")
        self._fh.write(",".join(CSV_COLUMNS) + "\n")

    def emit(self, rec: DiagnosticsRecord) -> None:
        self._fh.write(",".join(f"{x:.17g}" for x in rec.row()) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class ListSink:
    def __init__(self):
        self.records: list[DiagnosticsRecord] = []

    def emit(self, rec: DiagnosticsRecord) -> None:
        self.records.append(rec)


def _flat(f: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    return np.ascontiguousarray(f).reshape(grid.n_cells, grid.n_v)


# ---------------------------------------------------------------------------
# entropy and dissipation
# ---------------------------------------------------------------------------

def entropy_H(F: StatePair, eq: EquilibriumState, grid: PhaseGrid) -> float:
    """Relative entropy sum_i int [f_i (ln(f_i/f_i_inf) - 1) + f_i_inf]."""
    if float(F.f1.min()) <= 0.0 or float(F.f2.min()) <= 0.0:
        raise ValueError("entropy requires strictly positive distributions")
    s1 = kernels.entropy_sum(_flat(F.f1, grid), grid.chi1.values, grid.w, eq.rho1_inf)
    s2 = kernels.entropy_sum(_flat(F.f2, grid), grid.chi2.values, grid.w, eq.rho2_inf)
    return grid.cell_volume * (s1 + s2)


def dissipation_D12(F: StatePair, grid: PhaseGrid) -> tuple[float, float]:
    """Relaxation dissipation integrals int (f_i - rho_i chi_i) ln(f_i/(rho_i chi_i)).

    These carry no sigma factor; the entropy balance multiplies them by sigma.
    """
    if float(F.f1.min()) <= 0.0 or float(F.f2.min()) <= 0.0:
        raise ValueError("dissipation requires strictly positive distributions")
    mac = moments(F, grid)
    d1 = kernels.d12_sum(_flat(F.f1, grid), mac.rho1.reshape(-1), grid.chi1.values, grid.w)
    d2 = kernels.d12_sum(_flat(F.f2, grid), mac.rho2.reshape(-1), grid.chi2.values, grid.w)
    return grid.cell_volume * d1, grid.cell_volume * d2


def dissipation_D3(F: StatePair, grid: PhaseGrid) -> float:
    """Reaction dissipation int (f1 f2' - chi1 chi2') ln(f1 f2'/(chi1 chi2')).

    Evaluated through the factorization ln(f1 f2'/(chi1 chi2')) = u1 + u2'
    with u_i = ln(f_i/chi_i), which collapses the (v, v') double integral to
    single-velocity integrals: D3 = int [(rho2 f1 - chi1) u1 + (rho1 f2 -
    chi2) u2] dv dx.  A value below -1e-12 indicates an implementation bug
    and raises.
    """
    if float(F.f1.min()) <= 0.0 or float(F.f2.min()) <= 0.0:
        raise ValueError("dissipation requires strictly positive distributions")
    mac = moments(F, grid)
    s = kernels.d3_sum(
        _flat(F.f1, grid), _flat(F.f2, grid),
        mac.rho1.reshape(-1), mac.rho2.reshape(-1),
        grid.chi1.values, grid.chi2.values, grid.w,
    )
    val = grid.cell_volume * s
    if val < -1e-12:
        raise ArithmeticError(f"reaction dissipation came out negative: {val:.3e}")
    return max(val, 0.0)


def dissipation_D3_naive(F: StatePair, grid: PhaseGrid) -> float:
    """O(n_v^2) double-velocity-loop reference for dissipation_D3 (small grids)."""
    w = grid.w
    c1, c2 = grid.chi1.values, grid.chi2.values
    f1 = _flat(F.f1, grid)
    f2 = _flat(F.f2, grid)
    total = 0.0
    for c in range(grid.n_cells):
        a = np.outer(f1[c], f2[c])
        b = np.outer(c1, c2)
        total += float(np.einsum("k,l,kl->", w, w, (a - b) * np.log(a / b)))
    return grid.cell_volume * total


def reaction_R(F: StatePair, grid: PhaseGrid) -> StatePair:
    """Componentwise reaction residual (chi1 - rho2 f1, chi2 - rho1 f2)."""
    mac = moments(F, grid)
    return StatePair(
        grid.chi1.values - mac.rho2[..., None] * F.f1,
        grid.chi2.values - mac.rho1[..., None] * F.f2,
        F.t,
    )


def reaction_norm_sq(F: StatePair, eq: EquilibriumState, grid: PhaseGrid) -> float:
    return weighted_norm_sq(reaction_R(F, grid), eq, grid)


# ---------------------------------------------------------------------------
# coupling operators (spectral Helmholtz solves on the torus)
# ---------------------------------------------------------------------------

def _helmholtz_hat(rhs_hat: np.ndarray, theta: float, grid: PhaseGrid) -> np.ndarray:
    # laplacian_symbol is -(2 pi |k|)^2, so this is (1 - theta Lap)^{-1}
    return rhs_hat / (1.0 - theta * grid.laplacian_symbol())


def _spectral_gradient(field_hat: np.ndarray, grid: PhaseGrid) -> list[np.ndarray]:
    """Gradient components of a transformed field; spatial axes come first."""
    k = grid.k1d
    axes = grid.spatial_axes
    grads = []
    for a in range(grid.d):
        shape = [1] * field_hat.ndim
        shape[a] = grid.nx
        ka = k.reshape(shape)
        grads.append(np.fft.ifftn(2j * math.pi * ka * field_hat, axes=axes).real)
    return grads


def _flux(f: np.ndarray, grid: PhaseGrid) -> list[np.ndarray]:
    return [f @ (grid.w * grid.v[:, a]) for a in range(grid.d)]


def operator_A_apply(F: StatePair, grid: PhaseGrid) -> StatePair:
    """A F = (w1 chi1, w2 chi2) with (1 - theta_i Lap) w_i = -div J_i."""
    axes = grid.spatial_axes
    out = []
    for f, chi in ((F.f1, grid.chi1), (F.f2, grid.chi2)):
        J = _flux(f, grid)
        k = grid.k1d
        div_hat = np.zeros(grid.spatial_shape, dtype=complex)
        for a in range(grid.d):
            shape = [1] * grid.d
            shape[a] = grid.nx
            div_hat += 2j * math.pi * k.reshape(shape) * np.fft.fftn(J[a], axes=axes)
        w_hat = _helmholtz_hat(-div_hat, chi.temperature_like, grid)
        w = np.fft.ifftn(w_hat, axes=axes).real
        out.append(w[..., None] * chi.values)
    return StatePair(out[0], out[1], F.t)


def operator_Astar_apply(G: StatePair, grid: PhaseGrid) -> StatePair:
    """Adjoint of A: (chi_i v . grad u_i) with (1 - theta_i Lap) u_i = rho_i[G]."""
    axes = grid.spatial_axes
    mac = moments(G, grid)
    out = []
    for rho, chi in ((mac.rho1, grid.chi1), (mac.rho2, grid.chi2)):
        u_hat = _helmholtz_hat(np.fft.fftn(rho, axes=axes), chi.temperature_like, grid)
        grads = _spectral_gradient(u_hat, grid)
        vdotgrad = sum(grads[a][..., None] * grid.v[:, a] for a in range(grid.d))
        out.append(vdotgrad * chi.values)
    return StatePair(out[0], out[1], G.t)


def operator_T_apply(F: StatePair, grid: PhaseGrid) -> StatePair:
    """Transport operator v . grad_x F (unit epsilon convention)."""
    axes = grid.spatial_axes
    out = []
    for f in (F.f1, F.f2):
        fhat = np.fft.fftn(f, axes=axes)
        grads = _spectral_gradient(fhat, grid)
        out.append(sum(grads[a] * grid.v[:, a] for a in range(grid.d)))
    return StatePair(out[0], out[1], F.t)


def coupling_term(F: StatePair, eq: EquilibriumState, grid: PhaseGrid) -> float:
    """<A(F - F_inf), F - F_inf> in the weighted product."""
    diff = state_diff(F, eq.f_inf)
    return weighted_inner(operator_A_apply(diff, grid), diff, eq, grid)


def modified_entropy_Gamma(F: StatePair, eq: EquilibriumState, grid: PhaseGrid,
                           delta: float) -> float:
    """Entropy plus the transport-coupling correction, H + delta <A(F-Finf), F-Finf>."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    return entropy_H(F, eq, grid) + delta * coupling_term(F, eq, grid)


# ---------------------------------------------------------------------------
# inequality battery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InequalityCheck:
    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class InequalityReport:
    checks: tuple[InequalityCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        return "\n".join(
            f"{'PASS' if c.passed else 'FAIL'} {c.name}: lhs={c.lhs:.6e} "
            f"rhs={c.rhs:.6e} margin={c.margin:.3e}"
            for c in self.checks
        )


def verify_inequalities(F: StatePair, eq: EquilibriumState, grid: PhaseGrid) -> InequalityReport:
    """Evaluate the four parameter-free structural inequalities on a state.

    (a) <A T Pi F, F - F_inf> >= 0;
    (b) ||A(F - F_inf)|| <= 1/2 ||F - F_inf||;
    (c) D3 >= c1 ||R(F)||^2 with c1 from the measured bound extrema;
    (d) |<T A F, F>| <= ||(I - Pi)F||^2.
    """
    diff = state_diff(F, eq.f_inf)
    dist2 = weighted_norm_sq(diff, eq, grid)

    atpi = weighted_inner(
        operator_A_apply(operator_T_apply(projection_pi(F, grid), grid), grid),
        diff, eq, grid,
    )
    check_a = InequalityCheck("positivity_ATPi", atpi, 0.0, atpi, atpi >= -1e-12)

    a_diff = math.sqrt(weighted_norm_sq(operator_A_apply(diff, grid), eq, grid))
    half_dist = 0.5 * math.sqrt(dist2)
    check_b = InequalityCheck("A_bounded_by_half", a_diff, half_dist,
                              half_dist - a_diff, a_diff <= half_dist + 1e-12)

    d3 = dissipation_D3(F, grid)
    r2 = reaction_norm_sq(F, eq, grid)
    nc, nv = grid.n_cells, grid.n_v
    _, r1max = kernels.ratio_extrema(_flat(F.f1, grid), grid.chi1.values)
    _, r2max = kernels.ratio_extrema(_flat(F.f2, grid), grid.chi2.values)
    rho_hat = max(r1max * r2max, 1.0)
    c1 = 1.0 / ((eq.rho1_inf + eq.rho2_inf) * rho_hat)
    slack_c = 1e-12 * max(1.0, c1 * r2)
    check_c = InequalityCheck("D3_controls_R", d3, c1 * r2, d3 - c1 * r2,
                              d3 >= c1 * r2 - slack_c)

    taf = abs(weighted_inner(operator_T_apply(operator_A_apply(F, grid), grid), F, eq, grid))
    micro2 = weighted_norm_sq(state_diff(F, projection_pi(F, grid)), eq, grid)
    slack_d = 1e-10 * max(1.0, micro2)
    check_d = InequalityCheck("TA_bounded_by_micro", taf, micro2, micro2 - taf,
                              taf <= micro2 + slack_d)

    return InequalityReport((check_a, check_b, check_c, check_d))


def reaction_chain_check(F: StatePair, eq: EquilibriumState, grid: PhaseGrid):
    """Lower bound ||R(F)||^2 >= c2 int (1-rho1 rho2)^2 + c3 ||(I-Pi)F||^2.

    c2 = rho1_inf + rho2_inf and c3 the squared minimum of the measured
    densities.  Returns (lhs, rhs).
    """
    mac = moments(F, grid)
    r2 = reaction_norm_sq(F, eq, grid)
    c2 = eq.rho1_inf + eq.rho2_inf
    c3 = min(float(mac.rho1.min()), float(mac.rho2.min())) ** 2
    react = grid.cell_volume * float(np.sum((1.0 - mac.rho1 * mac.rho2) ** 2))
    micro2 = weighted_norm_sq(state_diff(F, projection_pi(F, grid)), eq, grid)
    return r2, c2 * react + c3 * micro2


# ---------------------------------------------------------------------------
# record assembly, decay fits, entropy balance
# ---------------------------------------------------------------------------

def compute_record(F: StatePair, eq: EquilibriumState, grid: PhaseGrid,
                   delta: float) -> DiagnosticsRecord:
    mac = moments(F, grid)
    massdiff = grid.cell_volume * float(np.sum(mac.rho1) - np.sum(mac.rho2))
    h_val = entropy_H(F, eq, grid)
    d1, d2 = dissipation_D12(F, grid)
    d3 = dissipation_D3(F, grid)
    diff = state_diff(F, eq.f_inf)
    dist2 = weighted_norm_sq(diff, eq, grid)
    micro2 = weighted_norm_sq(state_diff(F, projection_pi(F, grid)), eq, grid)
    r2 = reaction_norm_sq(F, eq, grid)
    coupling = weighted_inner(operator_A_apply(diff, grid), diff, eq, grid)
    r1min, r1max = kernels.ratio_extrema(_flat(F.f1, grid), grid.chi1.values)
    r2min, r2max = kernels.ratio_extrema(_flat(F.f2, grid), grid.chi2.values)
    return DiagnosticsRecord(
        t=F.t, H=h_val, D1=d1, D2=d2, D3=d3,
        Gamma=h_val + delta * coupling,
        dist2=dist2, micro2=micro2, R2=r2, massdiff=massdiff,
        r1min=r1min, r1max=r1max, r2min=r2min, r2max=r2max,
        coupling=coupling,
    )


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_squared: float
    n_points: int
    at_equilibrium: bool = False


def decay_rate_fit(records, window=None, field: str = "Gamma") -> DecayFit:
    """Least-squares slope of ln(field) vs t; rate is the negated slope.

    window is an optional (t0, t1) interval.  All-nonpositive data means the
    trajectory already sits at equilibrium: rate=+inf sentinel with the flag
    set.  Requires at least 10 positive samples otherwise.
    """
    t = np.array([r.t for r in records])
    y = np.array([getattr(r, field) for r in records])
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, y = t[sel], y[sel]
    pos = y > 0.0
    if not pos.any():
        return DecayFit(math.inf, math.nan, 0, at_equilibrium=True)
    t, y = t[pos], y[pos]
    if t.size < 10:
        raise ValueError(f"need >= 10 positive records in the window, got {t.size}")
    logy = np.log(y)
    slope, intercept = np.polyfit(t, logy, 1)
    resid = logy - (slope * t + intercept)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 if ss_tot < 1e-300 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return DecayFit(-float(slope), r2, int(t.size))


@dataclass(frozen=True)
class BalanceReport:
    max_rel_mismatch: float
    max_abs_mismatch: float
    rhs_scale: float
    n_interior: int


def entropy_balance_check(records, sigma: float) -> BalanceReport:
    """Central-difference dH/dt against -sigma (D1 + D2) - D3 at interior times.

    The relative mismatch is normalized by the peak dissipation magnitude
    over the window; records must be uniformly spaced in time.
    """
    t = np.array([r.t for r in records])
    if t.size < 3:
        raise ValueError("need at least 3 records")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(float(dt[0]))):
        raise ValueError("records are not uniformly spaced")
    H = np.array([r.H for r in records])
    rhs = np.array([-sigma * (r.D1 + r.D2) - r.D3 for r in records])
    dHdt = (H[2:] - H[:-2]) / (t[2:] - t[:-2])
    mism = np.abs(dHdt - rhs[1:-1])
    scale = float(np.max(np.abs(rhs[1:-1])))
    # bound-respecting states have O(1) dissipation; a scale below 1e-20
    # means the trajectory sits at equilibrium and both sides vanish
    rel = 0.0 if scale < 1e-20 else float(np.max(mism)) / scale
    return BalanceReport(rel, float(np.max(mism)), scale, int(mism.size))


@dataclass(frozen=True)
class DeltaSweepRow:
    delta: float
    monotone: bool
    rate: float


def delta_sweep(records, deltas=(0.2, 0.1, 0.05, 0.01)) -> list[DeltaSweepRow]:
    """Gamma-monotonicity and decay rate across delta values, from one run.

    Gamma_delta(t) is reassembled from the stored H and coupling columns,
    so no re-integration is needed.
    """
    t = np.array([r.t for r in records])
    H = np.array([r.H for r in records])
    coup = np.array([r.coupling for r in records])
    rows = []
    for d in deltas:
        g = H + d * coup
        slack = 1e-12 * max(abs(float(g[0])), 1e-300)
        monotone = bool(np.all(np.diff(g) <= slack))
        pos = g > 0.0
        if pos.sum() >= 10:
            half = t[pos][0] + 0.5 * (t[pos][-1] - t[pos][0])
            sel = pos & (t >= half)
            if sel.sum() >= 10:
                slope, _ = np.polyfit(t[sel], np.log(g[sel]), 1)
                rate = -float(slope)
            else:
                rate = math.nan
        else:
            rate = math.nan
        rows.append(DeltaSweepRow(d, monotone, rate))
    return rows
