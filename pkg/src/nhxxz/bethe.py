"""Discrete Bethe equations of the open chain with imaginary boundary fields.

For M magnons with complexified momenta beta_j = exp(i k_j):

    beta_j^{2N} (beta_j - D+)(beta_j - D-) / ((1 - D+ beta_j)(1 - D- beta_j))
        = prod_{l != j} S(beta_j, beta_l)

with D+- = delta +- i g and S the open-chain two-body scattering factor.  The
energy is E = -(N-1) delta / 4 + sum_j (delta - (beta_j + 1/beta_j) / 2).

Roots are solved by continuation from the free-fermion point delta = 0, where
the equations decouple into one polynomial of degree 2N + 2.

The boundary root sits exponentially close to D- (distance ~ |D-|^{-2N}), far
below double-precision resolution of beta itself for N ~ 40.  It is therefore
stored as an offset from D- and the Newton iteration updates the offset.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from itertools import permutations, product

import numpy as np

from .model import ModelParams, SectorBasis, StateVector
from .roots import aberth_roots

log = logging.getLogger(__name__)

STEADY, GROUND = "steady", "ground"


class BetheSolverError(RuntimeError):
    """Continuation or Newton failure; ``diagnostics`` carries the last good point."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class BetheState:
    """Set of Bethe roots with its energy.

    ``boundary_index`` marks the root stored as ``delta_minus + offset``; its
    entry in ``roots`` is kept in sync but ``boundary_offset`` is authoritative.
    """

    roots: np.ndarray
    params: ModelParams
    quantum_numbers: list = field(default_factory=list)
    boundary_index: int | None = None
    boundary_offset: complex = 0j
    residual: float = float("nan")
    energy: complex = complex("nan")
    path: list = field(default_factory=list)

    def __post_init__(self):
        self.roots = np.asarray(self.roots, dtype=complex).copy()
        if not self.quantum_numbers:
            self.quantum_numbers = list(range(1, len(self.roots) + 1))
        if self.boundary_index is not None:
            self.roots[self.boundary_index] = self.params.delta_minus + self.boundary_offset

    @property
    def n_magnons(self) -> int:
        return len(self.roots)

    def with_params(self, params: ModelParams) -> "BetheState":
        """Same roots (boundary offset preserved) under new parameters."""
        return BetheState(self.roots, params, list(self.quantum_numbers), self.boundary_index,
                          self.boundary_offset, path=list(self.path))

    def to_json(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "roots": [[float(b.real), float(b.imag)] for b in self.roots],
            "quantum_numbers": list(self.quantum_numbers),
            "residual": float(self.residual),
            "energy": [float(np.real(self.energy)), float(np.imag(self.energy))],
            "path": [[float(d), float(g)] for d, g in self.path],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def from_json(cls, data: dict) -> "BetheState":
        params = ModelParams(**data["params"])
        roots = np.array([complex(re, im) for re, im in data["roots"]])
        st = cls(roots, params, list(data.get("quantum_numbers", [])))
        st.path = [tuple(p) for p in data.get("path", [])]
        st.residual = bethe_residual_norm(params, st.roots)
        st.energy = bethe_energy(params, st.roots)
        return st


@dataclass(frozen=True)
class ContinuationPath:
    g_initial: float = 1.5
    step_delta: float = 0.01
    step_g: float = 0.01
    margin: float = 0.05
    min_step: float = 1e-4
    newton_tol: float = 1e-12
    max_newton: int = 40
    via: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "via", tuple((float(d), float(g)) for d, g in self.via))
        if self.g_initial <= 1:
            raise ValueError("g_initial must exceed 1 so the boundary mode is present")
        if min(self.step_delta, self.step_g, self.margin, self.min_step) <= 0:
            raise ValueError("steps and margin must be positive")

    def waypoints(self, delta: float, g: float) -> list:
        """Corner points: start, then ``via`` (or the end of the delta leg), then target."""
        if self.via:
            return [(0.0, self.g_initial), *self.via, (delta, g)]
        return [(0.0, self.g_initial), (delta, self.g_initial), (delta, g)]

    def check_target(self, delta: float, g: float):
        m = self.margin
        if abs(delta) > 1 - m:
            raise ValueError(
                f"target delta={delta} is not reachable from the free-fermion point "
                f"(needs |delta| <= {1 - m})"
            )
        if delta * delta + g * g < (1 + m) ** 2 and g < math.sqrt(max(1 - delta * delta, 0)) + m:
            raise ValueError(
                f"target (delta={delta}, g={g}) lies within {m} of the PT boundary "
                "delta^2 + g^2 = 1 or inside the PT-exact region"
            )
        if abs(g - math.sqrt(max(1 - delta * delta, 0.0))) < m:
            raise ValueError(f"target g={g} is within {m} of g_c")


# -- energy ----------------------------------------------------------------

def bethe_energy(params: ModelParams, roots) -> complex:
    roots = np.asarray(roots, dtype=complex)
    if np.any(roots == 0):
        raise ValueError("Bethe root at zero")
    e0 = -(params.n_sites - 1) * params.delta / 4.0
    return complex(e0 + np.sum(params.delta - 0.5 * (roots + 1.0 / roots)))


# -- residuals -------------------------------------------------------------

def _pair_factors(delta: float, bj: np.ndarray, bl: np.ndarray):
    """Numerator and denominator factors of S(bj, bl) after clearing 1/bl."""
    a = 1 - 2 * delta * bj + bj * bl
    b = bl + bj - 2 * delta * bj * bl
    c = 1 - 2 * delta * bl + bj * bl
    d = bl + bj - 2 * delta
    return a, b, c, d


def _log_sides(params: ModelParams, roots: np.ndarray, offsets: np.ndarray | None = None):
    """log of both sides of every Bethe equation (up to multiples of 2 pi i).

    Returns (log_lhs_num + log_rhs_den, log_rhs_num + log_lhs_den) per equation,
    so that the equation reads exp(first) == exp(second).
    """
    n = params.n_sites
    dp, dm = params.delta_plus, params.delta_minus
    delta = params.delta
    roots = np.asarray(roots, dtype=complex)
    if np.any(roots == 0):
        raise ValueError("Bethe root at zero")
    beta_minus_dm = roots - dm
    if offsets is not None:
        mask = ~np.isnan(offsets)
        beta_minus_dm = np.where(mask, offsets, beta_minus_dm)
    with np.errstate(divide="ignore"):
        lhs_num = 2 * n * np.log(roots) + np.log(roots - dp) + np.log(beta_minus_dm)
        lhs_den = np.log(1 - dp * roots) + np.log(1 - dm * roots)
    m = len(roots)
    rhs_num = np.zeros(m, dtype=complex)
    rhs_den = np.zeros(m, dtype=complex)
    if m > 1:
        bj, bl = roots[:, None], roots[None, :]
        a, b, c, d = _pair_factors(delta, bj, bl)
        off = ~np.eye(m, dtype=bool)
        with np.errstate(divide="ignore"):
            rhs_num = np.sum(np.where(off, np.log(a) + np.log(b), 0), axis=1)
            rhs_den = np.sum(np.where(off, np.log(c) + np.log(d), 0), axis=1)
    return lhs_num + rhs_den, rhs_num + lhs_den


def _wrap(z: np.ndarray) -> np.ndarray:
    return z.real + 1j * (np.mod(z.imag + np.pi, 2 * np.pi) - np.pi)


def _offsets_of(state: BetheState) -> np.ndarray:
    off = np.full(state.n_magnons, np.nan, dtype=complex)
    if state.boundary_index is not None:
        off[state.boundary_index] = state.boundary_offset
    return off


def bethe_residual(params: ModelParams, roots, offsets=None) -> np.ndarray:
    """Scale-free residual of the denominator-cleared Bethe equations.

    For each j: (P_j - Q_j) / max(|P_j|, |Q_j|) where P_j = LHS numerator times
    RHS denominator and Q_j = RHS numerator times LHS denominator.
    """
    roots = np.asarray(roots, dtype=complex)
    if np.any(roots == 0):
        raise ValueError("Bethe root at zero")
    m = len(roots)
    if m > 1:
        diff = np.abs(roots[:, None] - roots[None, :]) + np.eye(m)
        if np.any(diff == 0):
            raise ValueError("degenerate input: coinciding Bethe roots")
    lp, lq = _log_sides(params, roots, offsets)
    scale = np.maximum(lp.real, lq.real)
    scale = np.where(np.isfinite(scale), scale, 0.0)
    return np.exp(lp - scale) - np.exp(lq - scale)


def bethe_residual_norm(params: ModelParams, roots, offsets=None) -> float:
    r = bethe_residual(params, roots, offsets)
    return float(np.max(np.abs(r))) if len(r) else 0.0


def _log_residual(params: ModelParams, roots: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    lp, lq = _log_sides(params, roots, offsets)
    return _wrap(lp - lq)


def _jacobian(params: ModelParams, roots: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """d(log residual_j)/d(beta_l); holomorphic, identical for offset variables."""
    n = params.n_sites
    dp, dm = params.delta_plus, params.delta_minus
    delta = params.delta
    m = len(roots)
    beta_minus_dm = np.where(np.isnan(offsets), roots - dm, offsets)
    diag = (2 * n / roots + 1 / (roots - dp) + 1 / beta_minus_dm
            + dp / (1 - dp * roots) + dm / (1 - dm * roots))
    jac = np.zeros((m, m), dtype=complex)
    if m > 1:
        bj, bl = roots[:, None], roots[None, :]
        a, b, c, d = _pair_factors(delta, bj, bl)
        off = ~np.eye(m, dtype=bool)
        # derivative of log(c d / (a b)) with respect to bj, summed over l
        dj = bl / c + 1 / d - (bl - 2 * delta) / a - (1 - 2 * delta * bl) / b
        diag = diag + np.sum(np.where(off, dj, 0), axis=1)
        # with respect to bl
        dl = (bj - 2 * delta) / c + 1 / d - bj / a - (1 - 2 * delta * bj) / b
        jac = np.where(off, dl, 0)
    jac[np.diag_indices(m)] = diag
    return jac


def newton_refine(params: ModelParams, seed: BetheState, tol: float = 1e-12,
                  max_iter: int = 40, basin: float | None = 1e-2) -> BetheState:
    """Damped Newton on the logarithmic Bethe equations.

    Steps are halved (up to 30 times) until the residual decreases.  The
    returned state carries the max rationalized residual; callers check it
    against their own acceptance threshold.
    """
    state = seed.with_params(params)
    if state.n_magnons == 0:
        state.residual = 0.0
        state.energy = bethe_energy(params, state.roots)
        return state
    roots = state.roots.copy()
    offsets = _offsets_of(state)
    bi = state.boundary_index

    f = _log_residual(params, roots, offsets)
    fnorm = np.max(np.abs(f))
    if basin is not None and not fnorm < max(basin, 10 * tol) * 1e3:
        log.debug("seed residual %.3g is outside the Newton basin", fnorm)
    it = 0
    while fnorm > tol and it < max_iter:
        it += 1
        jac = _jacobian(params, roots, offsets)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise BetheSolverError("singular Bethe Jacobian", {"roots": roots.tolist()}) from exc
        lam = 1.0
        for _ in range(31):
            trial = roots + lam * step
            trial_off = offsets.copy()
            if bi is not None:
                trial_off[bi] = offsets[bi] + lam * step[bi]
                trial[bi] = params.delta_minus + trial_off[bi]
            if np.all(trial != 0):
                f_trial = _log_residual(params, trial, trial_off)
                n_trial = np.max(np.abs(f_trial))
                if np.isfinite(n_trial) and n_trial < fnorm:
                    break
            lam *= 0.5
        else:
            break
        roots, offsets, f, fnorm = trial, trial_off, f_trial, n_trial

    out = BetheState(roots, params, list(state.quantum_numbers), bi,
                     offsets[bi] if bi is not None else 0j, path=list(state.path))
    try:
        out.residual = bethe_residual_norm(params, out.roots, offsets)
    except ValueError:
        out.residual = float("inf")
    out.energy = bethe_energy(params, out.roots)
    out.newton_iterations = it
    return canonicalize(out)


def canonicalize(state: BetheState, tie_tol: float = 1e-13) -> BetheState:
    """Pick |beta| >= 1 from each inversion pair (upper half plane on the unit circle)."""
    roots = state.roots.copy()
    for j, b in enumerate(roots):
        if j == state.boundary_index:
            continue
        mod = abs(b)
        if mod < 1 - tie_tol or (abs(mod - 1) <= tie_tol and b.imag < 0):
            roots[j] = 1.0 / b
    state.roots = roots
    return state


# -- free-fermion seed -----------------------------------------------------

def single_magnon_polynomial(n_sites: int, delta: float, g: float) -> np.ndarray:
    """Coefficients (highest first) of beta^{2N}(beta-D+)(beta-D-) - (1-D+ beta)(1-D- beta)."""
    dp, dm = complex(delta, g), complex(delta, -g)
    deg = 2 * n_sites + 2
    c = np.zeros(deg + 1, dtype=complex)
    c[0] = 1.0
    c[1] = -(dp + dm)
    c[2] = dp * dm
    c[-1] -= 1.0
    c[-2] -= -(dp + dm)
    c[-3] -= dp * dm
    return c


def free_fermion_roots(n_sites: int, g: float) -> np.ndarray:
    """All 2N+2 roots of the single-magnon equation at delta = 0."""
    if g <= 1:
        raise ValueError("free-fermion seeding needs g > 1 (boundary mode present)")
    coeffs = single_magnon_polynomial(n_sites, 0.0, g)
    roots = aberth_roots(coeffs)
    return roots


def _boundary_offset_at_free_point(n_sites: int, g: float, beta: complex) -> complex:
    """Offset u = beta + i g of the boundary root at delta = 0, resolved below roundoff.

    From beta^{2N}(beta^2 + g^2) = 1 + g^2 beta^2 with beta = -ig + u:
    u = (1 + g^2 beta^2) / (beta^{2N} (beta - i g)), iterated to a fixed point.
    """
    u = beta + 1j * g
    for _ in range(60):
        b = -1j * g + u
        u_new = (1 + g * g * b * b) / (np.exp(2 * n_sites * np.log(b)) * (b - 1j * g))
        if abs(u_new - u) <= 1e-16 * abs(u_new):
            u = u_new
            break
        u = u_new
    return complex(u)


def select_state_roots(all_roots, n_sites: int, g: float, n_magnons: int,
                       target: str = STEADY, tol: float = 1e-8) -> BetheState:
    """Pick a seed state at delta = 0 from the free-fermion roots.

    Inversion pairs are merged and the spurious roots beta = +-1 dropped.  The
    boundary root nearest D- = -i g is always occupied; the remaining
    ``n_magnons - 1`` slots take the unit-circle roots of lowest energy
    -cos(k).  At delta = 0 this is both the ground state (lowest real part
    among boundary-mode states) and a steady state.
    """
    if target not in (STEADY, GROUND):
        raise ValueError(f"unknown target {target!r}")
    params = ModelParams(n_sites, 0.0, g)
    if n_magnons == 0:
        st = BetheState(np.zeros(0, dtype=complex), params)
        st.residual, st.energy = 0.0, bethe_energy(params, st.roots)
        return st
    roots = np.asarray(all_roots, dtype=complex)
    roots = roots[np.abs(roots * roots - 1) > tol]
    reps = []
    for b in roots:
        if abs(b) < 1 - tol or (abs(abs(b) - 1) <= tol and b.imag < 0):
            b = 1 / b
        if not any(abs(b - r) < tol for r in reps):
            reps.append(b)
    reps = np.array(reps)
    dm = complex(0.0, -g)
    ib = int(np.argmin(np.abs(reps - dm)))
    boundary = reps[ib]
    unit = np.array([r for r in reps if abs(abs(r) - 1) <= 1e-6])
    if len(unit) < n_magnons - 1:
        raise ValueError(
            f"only {len(unit)} unit-circle roots available for {n_magnons - 1} slots"
        )
    energies = -unit.real
    chosen = unit[np.argsort(energies, kind="stable")[: n_magnons - 1]]
    offset = _boundary_offset_at_free_point(n_sites, g, boundary)
    st = BetheState(np.concatenate([[boundary], chosen]), params, boundary_index=0,
                    boundary_offset=offset)
    st.quantum_numbers = list(range(0, n_magnons))
    st.residual = bethe_residual_norm(params, st.roots, _offsets_of(st))
    st.energy = bethe_energy(params, st.roots)
    st.path = [(0.0, g)]
    return st


# -- continuation ----------------------------------------------------------

def _continue_leg(state: BetheState, param_at, start: float, stop: float, step: float,
                  path: ContinuationPath, label: str) -> BetheState:
    if start == stop:
        return state
    direction = 1.0 if stop > start else -1.0
    h = step
    x = start
    while direction * (stop - x) > 1e-15:
        x_next = x + direction * min(h, abs(stop - x))
        try:
            trial = newton_refine(param_at(x_next), state, tol=path.newton_tol,
                                  max_iter=path.max_newton)
        except BetheSolverError:
            trial = None
        ok = False
        if trial is not None:
            moved = np.max(np.abs(trial.roots - _match(trial.roots, state.roots)))
            # a pair collapsing onto itself lands on the spurious coincident-root family
            sep = _min_separation(trial.roots)
            ok = (trial.residual <= 1e-10 and moved < 10 * h
                  and sep > min(max(1e-6, 0.2 * _min_separation(state.roots)), 1e300))
        if ok:
            state = trial
            x = x_next
            p = state.params
            state.path.append((p.delta, p.g))
            h = min(step, h * 1.5)
            continue
        h *= 0.5
        if h < path.min_step:
            p = state.params
            raise BetheSolverError(
                f"continuation in {label} stalled at ({p.delta:.6g}, {p.g:.6g})",
                {"last_good": (p.delta, p.g),
                 "residual": trial.residual if trial is not None else float("nan"),
                 "state": state},
            )
    return state


def _min_separation(roots: np.ndarray) -> float:
    """Smallest distance between distinct roots modulo inversion."""
    r = np.asarray(roots)
    if len(r) < 2:
        return np.inf
    d = np.minimum(np.abs(r[:, None] - r[None, :]), np.abs(r[:, None] - 1 / r[None, :]))
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def _match(new: np.ndarray, old: np.ndarray) -> np.ndarray:
    """Old roots aligned with new ones modulo inversion."""
    inv = 1 / old
    return np.where(np.abs(new - old) <= np.abs(new - inv), old, inv)


def adiabatic_solve(target: ModelParams, n_magnons: int,
                    path: ContinuationPath | None = None,
                    which: str = STEADY) -> BetheState:
    """Solve the Bethe equations at ``target`` by continuation from (0, g_initial)."""
    path = path or ContinuationPath()
    if target.delta_prime != 0:
        raise ValueError("Bethe equations hold only for delta_prime = 0")
    if which not in (STEADY, GROUND):
        raise ValueError(f"unknown target state {which!r}")
    if which == STEADY and target.delta < 0:
        raise ValueError("steady-state continuation is defined for delta >= 0; "
                         "use the ground state or the delta -> -delta map")
    if n_magnons > target.n_sites // 2:
        raise ValueError("n_magnons must not exceed N/2")
    n = target.n_sites
    g0 = path.g_initial
    seed = select_state_roots(free_fermion_roots(n, g0), n, g0, n_magnons, which)
    state = newton_refine(ModelParams(n, 0.0, g0), seed, tol=path.newton_tol)
    if target.delta == 0.0 and target.g == g0:
        return state
    path.check_target(target.delta, target.g)
    for d, g in path.via:
        path.check_target(d, g)

    corners = path.waypoints(target.delta, target.g)
    for (d0, g0_), (d1, g1) in zip(corners[:-1], corners[1:]):
        length = math.hypot(d1 - d0, g1 - g0_)
        if length == 0.0:
            continue
        # legs are parametrized by arc length s in [0, length]
        step = path.step_g if d0 == d1 else path.step_delta
        state = _continue_leg(
            state,
            lambda s, d0=d0, g0_=g0_, d1=d1, g1=g1, L=length: ModelParams(
                n, d0 + (d1 - d0) * s / L, g0_ + (g1 - g0_) * s / L),
            0.0, length, step, path,
            "g" if d0 == d1 else ("delta" if g0_ == g1 else "path"))
    if state.residual > 1e-10:
        raise BetheSolverError(f"final residual {state.residual:.3g} exceeds 1e-10",
                               {"state": state})
    return state


# -- wavefunction ----------------------------------------------------------

def _sign(perm) -> int:
    s, seen = 1, list(perm)
    for i in range(len(seen)):
        while seen[i] != i:
            j = seen[i]
            seen[i], seen[j] = seen[j], seen[i]
            s = -s
    return s


def bethe_wavefunction(params: ModelParams, state, basis: SectorBasis) -> StateVector:
    """Coordinate Bethe ansatz amplitudes on every configuration (M <= 3)."""
    roots = np.asarray(state.roots if isinstance(state, BetheState) else state, dtype=complex)
    m = len(roots)
    if m != basis.n_magnons:
        raise ValueError("number of roots does not match the sector")
    if m > 3:
        raise ValueError("bethe_wavefunction is limited to M <= 3")
    dp = params.delta_plus
    delta = params.delta
    n = params.n_sites
    positions = np.array([np.nonzero(row)[0] + 1 for row in basis.occupations]).reshape(basis.dim, m)
    psi = np.zeros(basis.dim, dtype=complex)
    for perm in permutations(range(m)):
        sgn = _sign(perm)
        for etas in product((1, -1), repeat=m):
            b = np.array([roots[perm[j]] ** etas[j] for j in range(m)])
            # amplitudes anchored at site 1; the far boundary is then the Bethe equations
            amp = sgn * np.prod(etas) * np.prod(1 - dp / b)
            for k in range(m):
                for l in range(k + 1, m):
                    amp *= ((1 - 2 * delta * b[k] + b[k] * b[l])
                            * (1 - 2 * delta / b[k] + b[l] / b[k]) / b[l])
            term = np.prod(b[None, :] ** positions, axis=1) if m else np.ones(basis.dim)
            psi += amp * term
    if m == 0:
        psi[:] = 1.0
    if not np.any(np.abs(psi) > 0):
        raise ValueError("Bethe amplitude vanishes identically for these roots")
    return StateVector(psi, basis)


# -- boundary strings ------------------------------------------------------

@dataclass(frozen=True)
class BoundaryString:
    roots: np.ndarray
    im_energy: float
    fixed_points: tuple


def boundary_string_roots(delta: float, g: float, n_magnons: int) -> BoundaryString:
    """Roots of the boundary string beta_{j+1} = 2 delta - 1/beta_j, beta_1 = delta - i g.

    Scattering among the deep string members is neglected, so the roots are
    only approximate solutions of the finite-N Bethe equations.
    """
    if n_magnons < 1:
        raise ValueError("a boundary string needs at least one magnon")
    roots = np.empty(n_magnons, dtype=complex)
    roots[0] = complex(delta, -g)
    for j in range(1, n_magnons):
        if roots[j - 1] == 0:
            raise ZeroDivisionError(f"string root {j} vanished")
        roots[j] = 2 * delta - 1 / roots[j - 1]
    if roots[-1] == 0:
        raise ZeroDivisionError("last string root vanished")
    im_e = -0.5 * float(np.imag(roots[0] + 1 / roots[-1]))
    disc = complex(delta * delta - 1) ** 0.5
    fixed = (complex(delta + disc), complex(delta - disc))
    return BoundaryString(roots, im_e, fixed)


def isotropic_string_roots(g: float, n_magnons: int) -> np.ndarray:
    """Closed form of the string at delta = 1: beta_n = 1 + 1/(n - 1 + i/g)."""
    nn = np.arange(1, n_magnons + 1)
    return 1 + 1 / (nn - 1 + 1j / g)


def two_magnon_kappa(delta: float, g: float, k: float) -> float:
    """Localization factor kappa with |beta_2|^(2N) ~ exp(2 kappa) for a magnon of
    momentum k scattering off the boundary mode beta_1 = delta - i g."""
    bl = complex(delta, -g)
    bj = np.exp(1j * k)
    a, b, c, d = _pair_factors(delta, bj, bl)
    return 0.5 * float(np.log(abs(a * b / (c * d))))
