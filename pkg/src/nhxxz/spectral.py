"""Full spectra of small sectors and filtered eigenpairs of large ones.

Large sectors are handled with the normalized propagator exp(-i H dt), whose
dominant eigenvector is the steady state (largest Im E).  The propagator is
applied matrix-free through scipy's truncated Taylor ``expm_multiply`` and
accelerated with implicitly restarted Arnoldi; a plain block subspace filter
with Rayleigh-Ritz extraction is kept for small sectors and as a fallback.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigs, expm_multiply

from .model import (
    DENSE_CAP,
    ModelParams,
    SectorBasis,
    StateVector,
    XXZOperator,
    get_operator,
    participation_entropy,
)

MAX_IMAG, MIN_REAL, MAX_REAL = "max_imag", "min_real", "max_real"
_KINDS = (MAX_IMAG, MIN_REAL, MAX_REAL)


class EigenConvergenceError(RuntimeError):
    """Filtered iteration failed; ``diagnostics`` holds residual history."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class SpectrumRecord:
    eigenvalue: complex
    eigenvector: StateVector | None = None
    participation: float | None = None
    polarization_profile: np.ndarray | None = None
    residual: float | None = None
    tol: float | None = None


@dataclass(frozen=True)
class EigenTarget:
    kind: str = MAX_IMAG
    tolerance: float = 1e-8
    max_iterations: int = 1_000_000

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown eigen target {self.kind!r}; expected one of {_KINDS}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class PTClassification:
    phase: str
    max_abs_imag: float


# -- dense path ------------------------------------------------------------

def full_spectrum(H, want_vectors: bool = False, basis: SectorBasis | None = None,
                  cap: int = DENSE_CAP) -> list:
    """All eigenpairs of a dense complex matrix (LAPACK zgeev: Hessenberg + shifted QR).

    Records come back sorted by (Re E, Im E).  With ``want_vectors`` and a
    ``basis`` the records also carry S2 entropy and the Sz profile.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if H.shape[0] > cap:
        raise ValueError(f"dimension {H.shape[0]} exceeds dense cap {cap}")
    if H.shape[0] == 0:
        return []
    try:
        if want_vectors:
            w, v = la.eig(H)
        else:
            w, v = la.eigvals(H), None
    except la.LinAlgError as exc:
        raise EigenConvergenceError(f"QR iteration failed: {exc}") from exc
    order = np.lexsort((w.imag, w.real))
    out = []
    for i in order:
        rec = SpectrumRecord(complex(w[i]))
        if v is not None:
            vec = v[:, i] / np.linalg.norm(v[:, i])
            rec.residual = float(np.linalg.norm(H @ vec - w[i] * vec))
            if basis is not None:
                sv = StateVector(vec, basis)
                rec.eigenvector = sv
                rec.participation = participation_entropy(sv)
                rec.polarization_profile = np.abs(vec) ** 2 @ basis.sz
            else:
                rec.eigenvector = vec
        out.append(rec)
    return out


def spectrum_eigenvalues(records) -> np.ndarray:
    return np.array([r.eigenvalue for r in records], dtype=complex)


def classify_pt(eigenvalues, tol: float = 1e-9) -> PTClassification:
    ev = np.asarray(eigenvalues, dtype=complex)
    if ev.size == 0:
        raise ValueError("classify_pt needs at least one eigenvalue")
    m = float(np.max(np.abs(ev.imag)))
    return PTClassification("exact" if m <= tol else "broken", m)


# -- targeted path ---------------------------------------------------------

def _score(kind: str, values):
    values = np.asarray(values)
    if kind == MAX_IMAG:
        return values.imag
    if kind == MIN_REAL:
        return -values.real
    return values.real


def _pick(kind: str, values, rel: float = 1e-9) -> int:
    """Index of the target value; ties (conjugate partners share Re E) go to larger Im."""
    values = np.asarray(values)
    score = _score(kind, values)
    best = score.max()
    near = np.nonzero(score >= best - rel * max(1.0, abs(best)))[0]
    return int(near[np.argmax(values[near].imag)])


def default_step(params: ModelParams, kind: str) -> float:
    # the Arnoldi filter needs propagator phases spread around the circle;
    # steps well below 1 make clustered Im levels indistinguishable
    scale = max(1.0, abs(params.delta), params.g)
    return 1.0 / scale if kind == MAX_IMAG else 0.5 / scale


def _generator(op: XXZOperator, kind: str, dt: float):
    """Sparse matrix A with exp(A) the filter, shifted by the mean diagonal."""
    c = float(op.diagonal.real.mean())
    shifted = op.hopping.astype(complex) + sp.diags(op.diagonal - c)
    if kind == MAX_IMAG:
        return (-1j * dt) * shifted
    if kind == MIN_REAL:
        return (-dt) * shifted
    return dt * shifted


def _ritz(op: XXZOperator, Q: np.ndarray, kind: str):
    """Rayleigh-Ritz on the orthonormal block Q; returns the best pair and its residual."""
    HQ = op.matmat(Q)
    w, y = la.eig(Q.conj().T @ HQ)
    i = _pick(kind, w)
    x = Q @ y[:, i]
    x /= np.linalg.norm(x)
    e = complex(np.vdot(x, op.matvec(x)))
    return e, x, float(np.linalg.norm(op.matvec(x) - e * x))


def _subspace_filter(op, kind, tol, budget, dt, block, rng, diag):
    n = op.shape[0]
    block = min(block, n)
    A = _generator(op, kind, dt)
    Q, _ = np.linalg.qr(rng.standard_normal((n, block)) + 1j * rng.standard_normal((n, block)))
    applications = 0
    history = diag.setdefault("residual_history", [])
    while True:
        e, x, res = _ritz(op, Q, kind)
        history.append(res)
        if res <= tol or block == n:
            diag["applications"] = applications
            return e, x, res
        if applications >= budget:
            tail = [complex(v) for v in diag.get("ritz_tail", [])]
            raise EigenConvergenceError(
                f"filter did not reach tol {tol:g} within {budget} applications "
                f"(residual {res:.3g})",
                {**diag, "applications": applications, "residual": res,
                 "oscillation": float(np.ptp(np.abs(tail))) if tail else None},
            )
        diag.setdefault("ritz_tail", []).append(e)
        diag["ritz_tail"] = diag["ritz_tail"][-10:]
        Q, _ = np.linalg.qr(expm_multiply(A, Q))
        applications += block


def _arnoldi_filter(op, kind, tol, budget, dt, nev, rng):
    n = op.shape[0]
    A = _generator(op, kind, dt)
    count = [0]

    def mv(x):
        count[0] += 1
        return expm_multiply(A, x)

    U = LinearOperator(op.shape, matvec=mv, dtype=complex)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    ncv = min(n - 1, max(4 * nev, 40))
    # ARPACK counts restarts; each restart costs about ncv propagator applications
    w, v = eigs(U, k=nev, which="LM", ncv=ncv, v0=v0, tol=tol * 1e-3,
                maxiter=max(1, budget // ncv))
    Q, _ = np.linalg.qr(v)
    e, x, res = _ritz(op, Q, kind)
    return e, x, res, count[0]


def targeted_eigenpair(params: ModelParams, basis: SectorBasis,
                       target: EigenTarget | None = None, dt: float | None = None,
                       block: int = 8, seed: int = 0, method: str = "auto") -> SpectrumRecord:
    """Steady state (max_imag), ground state (min_real) or max_real eigenpair.

    ``method`` is "arnoldi", "subspace" or "auto" (Arnoldi with a subspace
    fallback; sectors smaller than a few blocks use the subspace filter, which
    is exact once the block spans the sector).
    """
    target = target or EigenTarget()
    op = get_operator(params, basis)
    n = op.shape[0]
    kind, tol, budget = target.kind, target.tolerance, target.max_iterations
    dt = default_step(params, kind) if dt is None else float(dt)
    if dt <= 0:
        raise ValueError("dt must be positive")
    rng = np.random.default_rng(seed)
    diag = {"dt": dt, "method": None}

    use_arnoldi = method == "arnoldi" or (method == "auto" and n > 6 * block)
    if method not in ("auto", "arnoldi", "subspace"):
        raise ValueError(f"unknown method {method!r}")
    result = None
    if use_arnoldi:
        try:
            e, x, res, used = _arnoldi_filter(op, kind, tol, budget, dt, block, rng)
            diag.update(method="arnoldi", applications=used, residual_history=[res])
            if res <= tol:
                result = (e, x, res)
        except (ArpackNoConvergence, ArpackError) as exc:
            diag["arnoldi_error"] = str(exc)
        if result is None and method == "arnoldi":
            raise EigenConvergenceError(
                f"Arnoldi filter did not converge to tol {tol:g}", diag)
    if result is None:
        diag["method"] = "subspace"
        result = _subspace_filter(op, kind, tol, budget, dt, block, rng, diag)
    e, x, res = result
    sv = StateVector(x, basis)
    return SpectrumRecord(
        eigenvalue=e,
        eigenvector=sv,
        participation=participation_entropy(sv),
        polarization_profile=np.abs(x) ** 2 @ basis.sz,
        residual=res,
        tol=tol,
    )


def boundary_im_estimate(params: ModelParams, record: SpectrumRecord) -> float:
    """g (<Sz_N> - <Sz_1>) / 2, equal to Im E for an eigenvector at delta_prime = 0."""
    prof = record.polarization_profile
    if prof is None:
        raise ValueError("record carries no polarization profile")
    return 0.5 * params.g * (prof[-1] - prof[0])


# -- finite-size analysis --------------------------------------------------

def positive_continuum_mean(eigenvalues, window: float = 0.3, floor: float = 1e-9) -> tuple:
    """Mean Im E of the positive-Im continuum and the number of levels used.

    Levels with Im E > floor are kept if they lie within ``window`` (relative)
    of the median positive Im E; this drops isolated bound or fully-bulk
    levels sitting far from the scale-free band.
    """
    im = np.asarray(eigenvalues, dtype=complex).imag
    pos = im[im > floor]
    if pos.size == 0:
        raise ValueError("no eigenvalues with positive imaginary part")
    med = float(np.median(pos))
    sel = pos[np.abs(pos - med) <= window * med]
    return float(sel.mean()), int(sel.size)


@dataclass(frozen=True)
class LinearFit:
    intercept: float
    slope: float
    r_squared: float


def fit_inverse_n(ns, values) -> LinearFit:
    """Least-squares fit values = a + b / N."""
    x = 1.0 / np.asarray(ns, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two sizes for a fit")
    A = np.vstack([np.ones_like(x), x]).T
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - a - b * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(float(a), float(b), r2)
