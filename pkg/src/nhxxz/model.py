"""Open XXZ chain with an imaginary boundary field.

    H = -sum_{j=1}^{N-1} (Sx_j Sx_{j+1} + Sy_j Sy_{j+1} + delta Sz_j Sz_{j+1})
        + (i g / 2) (Sz_N - Sz_1)
        - sum_{j=1}^{N-2} delta_prime Sz_j Sz_{j+2}

Spin operators are S = sigma / 2.  Configurations are little-endian bitmasks:
bit j set means site j+1 carries an up spin (a magnon).  The Hamiltonian
conserves the number of up spins, so everything works inside a fixed-M sector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import combinations
from math import comb, sqrt

import numpy as np
import scipy.sparse as sp

DENSE_CAP = 2048


@dataclass(frozen=True)
class ModelParams:
    n_sites: int
    delta: float
    g: float
    delta_prime: float = 0.0

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise ValueError(f"n_sites must be an integer >= 2, got {self.n_sites}")
        if self.n_sites % 2:
            raise ValueError(f"n_sites must be even, got {self.n_sites}")
        if self.g < 0:
            raise ValueError(f"g must be non-negative, got {self.g}")

    @property
    def delta_plus(self) -> complex:
        return complex(self.delta, self.g)

    @property
    def delta_minus(self) -> complex:
        return complex(self.delta, -self.g)

    @property
    def g_c(self) -> float:
        """Critical dissipation sqrt(1 - delta^2) of the PT transition."""
        if abs(self.delta) > 1:
            raise ValueError("g_c is defined only for |delta| <= 1")
        return sqrt(1.0 - self.delta**2)

    def replace(self, **changes) -> "ModelParams":
        kw = dict(n_sites=self.n_sites, delta=self.delta, g=self.g,
                  delta_prime=self.delta_prime)
        kw.update(changes)
        return ModelParams(**kw)

    def to_dict(self) -> dict:
        return {"n_sites": self.n_sites, "delta": self.delta, "g": self.g,
                "delta_prime": self.delta_prime}


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """All configurations of ``n_sites`` spins with ``n_magnons`` up spins."""

    n_sites: int
    n_magnons: int
    configs: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.configs)

    @property
    def dim(self) -> int:
        return len(self.configs)

    @cached_property
    def index_of(self) -> dict:
        return {int(c): i for i, c in enumerate(self.configs)}

    def lookup(self, states: np.ndarray) -> np.ndarray:
        """Vectorized inverse of ``configs``; every state must be in the sector."""
        idx = np.searchsorted(self.configs, states)
        return idx

    @cached_property
    def occupations(self) -> np.ndarray:
        """(dim, n_sites) array of 0/1 site occupations."""
        bits = np.arange(self.n_sites, dtype=np.int64)
        return ((self.configs[:, None] >> bits[None, :]) & 1).astype(np.int8)

    @cached_property
    def sz(self) -> np.ndarray:
        """(dim, n_sites) array of Sz eigenvalues (+-1/2)."""
        return self.occupations.astype(float) - 0.5


def build_sector_basis(n_sites: int, n_magnons: int) -> SectorBasis:
    """Enumerate the fixed-magnetization sector in ascending bitmask order."""
    if n_sites < 1 or n_sites % 2:
        raise ValueError(f"n_sites must be a positive even integer, got {n_sites}")
    if not 0 <= n_magnons <= n_sites:
        raise ValueError(f"n_magnons must lie in [0, {n_sites}], got {n_magnons}")
    if n_sites > 62:
        raise ValueError("bitmask encoding supports at most 62 sites")
    configs = np.fromiter(
        (sum(1 << j for j in sites) for sites in combinations(range(n_sites), n_magnons)),
        dtype=np.int64,
        count=comb(n_sites, n_magnons),
    )
    configs.sort()
    return SectorBasis(n_sites, n_magnons, configs)


@dataclass(eq=False)
class StateVector:
    amplitudes: np.ndarray
    basis: SectorBasis

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError(
                f"amplitude length {self.amplitudes.shape} does not match basis dimension {self.basis.dim}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        nrm = self.norm()
        if not np.isfinite(nrm) or nrm == 0.0:
            raise ValueError("cannot normalize a zero or non-finite state")
        return StateVector(self.amplitudes / nrm, self.basis)

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.basis)


def basis_state(basis: SectorBasis, config: int) -> StateVector:
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.index_of[int(config)]] = 1.0
    return StateVector(psi, basis)


class XXZOperator:
    """Sector-restricted Hamiltonian applied without dense assembly.

    Holds the diagonal (Ising + boundary field) and the real symmetric
    nearest-neighbour exchange as a sparse matrix.  Compatible with
    ``scipy.sparse.linalg.LinearOperator`` via ``matvec``.
    """

    def __init__(self, params: ModelParams, basis: SectorBasis):
        if basis.n_sites != params.n_sites:
            raise ValueError(
                f"basis has {basis.n_sites} sites but params has {params.n_sites}"
            )
        self.params = params
        self.basis = basis
        self.shape = (basis.dim, basis.dim)
        self.dtype = np.dtype(complex)
        self.diagonal = diagonal_energies(params, basis)
        self.hopping = _exchange_matrix(basis)

    def matvec(self, psi: np.ndarray) -> np.ndarray:
        return self.diagonal * psi + self.hopping @ psi

    def matmat(self, block: np.ndarray) -> np.ndarray:
        return self.diagonal[:, None] * block + self.hopping @ block

    def __matmul__(self, psi):
        psi = np.asarray(psi)
        return self.matvec(psi) if psi.ndim == 1 else self.matmat(psi)

    def adjoint_matvec(self, psi: np.ndarray) -> np.ndarray:
        return np.conj(self.diagonal) * psi + self.hopping @ psi

    def aslinearoperator(self):
        from scipy.sparse.linalg import LinearOperator

        return LinearOperator(self.shape, matvec=self.matvec, rmatvec=self.adjoint_matvec,
                              matmat=self.matmat, dtype=complex)


def diagonal_energies(params: ModelParams, basis: SectorBasis) -> np.ndarray:
    """Diagonal matrix elements for every configuration of the sector."""
    sz = basis.sz
    n = params.n_sites
    zz1 = (sz[:, :-1] * sz[:, 1:]).sum(axis=1)
    diag = -params.delta * zz1 + 0.5j * params.g * (sz[:, n - 1] - sz[:, 0])
    if n > 2 and params.delta_prime != 0.0:
        zz2 = (sz[:, :-2] * sz[:, 2:]).sum(axis=1)
        diag = diag - params.delta_prime * zz2
    return diag.astype(complex)


def _exchange_matrix(basis: SectorBasis) -> sp.csr_matrix:
    configs = basis.configs
    rows, cols = [], []
    for j in range(basis.n_sites - 1):
        pair = (1 << j) | (1 << (j + 1))
        bits = configs & pair
        src = np.nonzero((bits != 0) & (bits != pair))[0]
        dst = basis.lookup(configs[src] ^ pair)
        rows.append(dst)
        cols.append(src)
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.full(len(rows), -0.5)
    return sp.csr_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim))


@lru_cache(maxsize=16)
def get_operator(params: ModelParams, basis: SectorBasis) -> XXZOperator:
    """Cached operator for repeated application on the same sector."""
    return XXZOperator(params, basis)


def apply_hamiltonian(params: ModelParams, basis: SectorBasis, psi: StateVector) -> StateVector:
    """Return H psi inside the sector of ``basis``."""
    if psi.basis is not basis and (
        psi.basis.n_sites != basis.n_sites or psi.basis.n_magnons != basis.n_magnons
    ):
        raise ValueError("state vector belongs to a different sector")
    return StateVector(get_operator(params, basis).matvec(psi.amplitudes), basis)


def assemble_dense(params: ModelParams, basis: SectorBasis, cap: int = DENSE_CAP) -> np.ndarray:
    if basis.dim > cap:
        raise ValueError(f"sector dimension {basis.dim} exceeds dense cap {cap}")
    op = XXZOperator(params, basis)
    h = op.hopping.toarray().astype(complex)
    h[np.diag_indices_from(h)] += op.diagonal
    return h


def local_sz_expectation(psi: StateVector, site: int) -> float:
    """<psi|Sz_site|psi> / <psi|psi> for a 1-based ``site``."""
    n = psi.basis.n_sites
    if not 1 <= site <= n:
        raise ValueError(f"site must lie in [1, {n}], got {site}")
    weights = np.abs(psi.amplitudes) ** 2
    total = weights.sum()
    if total == 0.0:
        raise ValueError("zero-norm state")
    return float(weights @ psi.basis.sz[:, site - 1] / total)


def participation_entropy(psi) -> float:
    """Second participation (Renyi) entropy -log(sum p^2) in the configuration basis."""
    amps = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi)
    w = np.abs(amps) ** 2
    total = w.sum()
    if total == 0.0:
        raise ValueError("participation entropy of a zero vector")
    p = w / total
    return float(max(-np.log(np.sum(p * p)), 0.0))
