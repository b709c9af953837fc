"""Post-selected (no-jump) evolution under the non-Hermitian Hamiltonian.

The state follows d psi/dt = -i H psi and is renormalized after every RK4
step, so the component with the largest Im E takes over at late times.
Observables follow the model Hamiltonian: Im<H> = g (<Sz_N> - <Sz_1>)/2.
Quoting g <Sz_N> alone corresponds to the effective Hamiltonian shifted by
-ig/2, which is exact for PX-symmetric steady states where <Sz_1> = -<Sz_N>.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, SectorBasis, StateVector, get_operator
from .spectral import MIN_REAL, EigenConvergenceError, EigenTarget, targeted_eigenpair

BOUNDARY_POLARIZATION = "boundary_polarization"
FULL_PROFILE = "full_profile"
IM_ESTIMATE = "im_estimate"
_OBSERVABLES = {BOUNDARY_POLARIZATION, FULL_PROFILE, IM_ESTIMATE}


class DynamicsError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_max: float
    record_every: int = 1
    observables: frozenset = frozenset(_OBSERVABLES)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_max >= self.dt:
            raise ValueError(f"t_max ({self.t_max}) must be at least dt ({self.dt})")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        unknown = set(self.observables) - _OBSERVABLES
        if unknown:
            raise ValueError(f"unknown observables: {sorted(unknown)}")
        object.__setattr__(self, "observables", frozenset(self.observables))

    @classmethod
    def for_params(cls, params: ModelParams, t_max_over_g: float, record_every: int = 50,
                   **kw) -> "EvolutionConfig":
        """Time measured in units of 1/g, default step 0.02/g."""
        unit = 1.0 / params.g if params.g > 0 else 1.0
        return cls(dt=0.02 * unit, t_max=t_max_over_g * unit, record_every=record_every, **kw)


@dataclass
class TimeSeries:
    times: np.ndarray
    values: dict
    final_state: StateVector
    n_sites: int = 0
    meta: dict = field(default_factory=dict)

    def to_csv(self, fh=None) -> str:
        """Columns t, sz_1..sz_N, im_estimate; 12 significant digits."""
        prof = self.values.get(FULL_PROFILE)
        if prof is None:
            raise ValueError("CSV export needs the full_profile observable")
        im = self.values.get(IM_ESTIMATE)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"sz_{j}" for j in range(1, self.n_sites + 1)] + ["im_estimate"])
        for k, t in enumerate(self.times):
            row = [t, *prof[k], im[k] if im is not None else float("nan")]
            w.writerow([format_float(x) for x in row])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def format_float(x: float) -> str:
    x = float(x)
    if x == 0.0:
        return "0"
    return f"{x:.12g}"


# -- initial states --------------------------------------------------------

def domain_wall_state(basis: SectorBasis) -> StateVector:
    """Left half down, right half up."""
    n = basis.n_sites
    if basis.n_magnons != n // 2:
        raise ValueError(f"domain wall needs M = N/2 = {n // 2}, got {basis.n_magnons}")
    config = sum(1 << j for j in range(n // 2, n))
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.index_of[config]] = 1.0
    return StateVector(psi, basis)


def hermitian_ground_state(delta: float, n_sites: int, basis: SectorBasis,
                           tol: float = 1e-10) -> StateVector:
    """Ground state of the g = 0 chain by imaginary-time filtering."""
    if basis.n_sites != n_sites:
        raise ValueError("basis does not match n_sites")
    if basis.n_magnons != n_sites // 2:
        raise ValueError(f"expected the M = N/2 sector, got M = {basis.n_magnons}")
    params = ModelParams(n_sites, delta, 0.0)
    try:
        rec = targeted_eigenpair(params, basis, EigenTarget(MIN_REAL, tol))
    except EigenConvergenceError as exc:
        raise DynamicsError(f"ground state did not converge: {exc}") from exc
    # the Hermitian ground state can be made real; fix the global phase
    v = rec.eigenvector.amplitudes
    k = int(np.argmax(np.abs(v)))
    v = v * (abs(v[k]) / v[k])
    return StateVector(v / np.linalg.norm(v), basis)


def px_partner(psi: StateVector) -> StateVector:
    """Spin-flipped, space-reflected state (maps the M = N/2 sector to itself)."""
    basis = psi.basis
    n = basis.n_sites
    full = (1 << n) - 1
    rev = np.zeros_like(basis.configs)
    for j in range(n):
        rev |= ((basis.configs >> j) & 1) << (n - 1 - j)
    target = rev ^ full
    if basis.n_magnons * 2 != n:
        raise ValueError("PX maps M to N - M; only the M = N/2 sector is closed")
    out = np.zeros_like(psi.amplitudes)
    out[basis.lookup(target)] = psi.amplitudes
    return StateVector(out, basis)


# -- observables -----------------------------------------------------------

def polarization_profile(psi: StateVector) -> np.ndarray:
    """<Sz_j> for j = 1..N."""
    w = np.abs(psi.amplitudes) ** 2
    total = w.sum()
    if total == 0.0:
        raise ValueError("zero-norm state")
    return w @ psi.basis.sz / total


def im_estimate(params: ModelParams, profile) -> float:
    return 0.5 * params.g * (profile[-1] - profile[0])


# -- evolution -------------------------------------------------------------

def rk4_step(op, psi: np.ndarray, dt: float) -> np.ndarray:
    def f(y):
        return -1j * op.matvec(y)

    k1 = f(psi)
    k2 = f(psi + 0.5 * dt * k1)
    k3 = f(psi + 0.5 * dt * k2)
    k4 = f(psi + dt * k3)
    return psi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve(params: ModelParams, psi0: StateVector, cfg: EvolutionConfig) -> TimeSeries:
    """Normalized RK4 trajectory; records every ``cfg.record_every`` steps and at the end."""
    basis = psi0.basis
    if basis.n_sites != params.n_sites:
        raise ValueError("initial state and params disagree on n_sites")
    op = get_operator(params, basis)
    psi = psi0.normalized().amplitudes
    n_steps = int(round(cfg.t_max / cfg.dt))
    times, profiles = [], []

    def record(step):
        times.append(step * cfg.dt)
        profiles.append(np.abs(psi) ** 2 @ basis.sz)

    record(0)
    for step in range(1, n_steps + 1):
        nxt = rk4_step(op, psi, cfg.dt)
        nrm = np.linalg.norm(nxt)
        if not np.isfinite(nrm) or nrm < 1e-300:
            raise DynamicsError(f"norm collapsed to {nrm:.3g} at t = {step * cfg.dt:.6g}; reduce dt")
        if nrm > 10.0:
            raise DynamicsError(
                f"norm grew by {nrm:.3g} in one step at t = {step * cfg.dt:.6g}; dt is unstable")
        psi = nxt / nrm
        if step % cfg.record_every == 0 or step == n_steps:
            record(step)

    profiles = np.array(profiles)
    values = {}
    if FULL_PROFILE in cfg.observables:
        values[FULL_PROFILE] = profiles
    if BOUNDARY_POLARIZATION in cfg.observables:
        values[BOUNDARY_POLARIZATION] = profiles[:, [0, -1]]
    if IM_ESTIMATE in cfg.observables:
        values[IM_ESTIMATE] = 0.5 * params.g * (profiles[:, -1] - profiles[:, 0])
    return TimeSeries(np.array(times), values, StateVector(psi, basis), params.n_sites,
                      {"dt": cfg.dt, "steps": n_steps})
