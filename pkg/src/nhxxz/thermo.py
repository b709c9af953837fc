"""Thermodynamic-limit imaginary energies of the steady and ground states.

Gapless regime (|delta| < 1): rapidities parametrize the Bethe roots through
gamma = arccos(-delta), and the scale-free magnons contribute

    (sin g / g) * int_0^inf dw sin(w lam0) tanh(w) sinh((pi/gamma - 2) w) / sinh(pi w / gamma)

on top of the boundary-mode energy.  Gapped regime (delta < -1): gamma -> i phi
and the integral becomes a Fourier series.  For delta > 1 the boundary string
pins the imaginary energy at g/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

GAPLESS, GAPPED, STRING = "gapless", "gapped", "string"


@dataclass(frozen=True)
class ThermoParams:
    delta: float
    g: float
    regime: str
    gamma_or_phi: float
    lambda0: float

    @classmethod
    def from_model(cls, delta: float, g: float) -> "ThermoParams":
        if abs(delta) < 1:
            gamma = math.acos(-delta)
            gc = math.sin(gamma)
            if g <= gc:
                raise ValueError(
                    f"boundary rapidity undefined for g={g} <= g_c={gc:.6g}"
                )
            lam0 = math.log((g - gc) / (g + gc)) / gamma
            return cls(delta, g, GAPLESS, gamma, lam0)
        if delta < -1:
            phi = math.acosh(-delta)
            if g <= 0:
                raise ValueError("gapped regime requires g > 0")
            lam0 = -(2.0 / phi) * math.atan(math.sinh(phi) / g)
            return cls(delta, g, GAPPED, phi, lam0)
        if delta > 1:
            return cls(delta, g, STRING, math.acosh(delta), float("nan"))
        raise ValueError("|delta| = 1 is the isotropic point; no regular parametrization")


@dataclass(frozen=True)
class ThermoResult:
    e_boundary: float
    e_scalefree: float
    im_total: float
    error_estimate: float = 0.0


def boundary_mode_energy(delta: float, g: float) -> float:
    """Imaginary energy of one boundary magnon, -Im(D- + 1/D-)/2 with D- = delta - i g."""
    r2 = delta * delta + g * g
    if r2 == 0.0:
        raise ValueError("boundary mode energy undefined at delta = g = 0")
    return 0.5 * (g - g / r2)


# -- kernels ---------------------------------------------------------------

def kernel_theta(n, x, tp: ThermoParams):
    """Two-body phase theta_n(x); complex ``n`` and ``x`` are accepted."""
    x = np.asarray(x)
    if tp.regime == GAPLESS:
        gam = tp.gamma_or_phi
        return 2.0 * np.arctan(np.tanh(gam * x / 2.0) / np.tan(n * gam / 2.0))
    if tp.regime == GAPPED:
        phi = tp.gamma_or_phi
        return 2.0 * np.arctan(np.tan(phi * x / 2.0) / np.tanh(n * phi / 2.0))
    raise ValueError(f"no kernel for regime {tp.regime!r}")


def kernel_K(n, lam, tp: ThermoParams):
    """Derivative of ``kernel_theta`` with respect to the rapidity."""
    lam = np.asarray(lam, dtype=float)
    if tp.regime == GAPLESS:
        gam = tp.gamma_or_phi
        den = np.cosh(gam * lam) - np.cos(n * gam)
        num = gam * np.sin(n * gam)
    elif tp.regime == GAPPED:
        phi = tp.gamma_or_phi
        den = np.cosh(n * phi) - np.cos(phi * lam)
        num = phi * np.sinh(n * phi)
    else:
        raise ValueError(f"no kernel for regime {tp.regime!r}")
    if np.any(den == 0.0):
        raise ZeroDivisionError("kernel evaluated at a pole")
    return num / den


def _sinh_ratio(a: float, b: float, w):
    """sinh(a w) / sinh(b w) for b > 0, w >= 0, without overflow."""
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    small = w * b < 1e-8
    out[small] = a / b
    ws = w[~small]
    if a == 0.0:
        out[~small] = 0.0
        return out
    aa = abs(a)
    out[~small] = (math.copysign(1.0, a) * np.exp((aa - b) * ws)
                   * (-np.expm1(-2.0 * aa * ws)) / (-np.expm1(-2.0 * b * ws)))
    return out


def kernel_K_tilde(n, w, tp: ThermoParams):
    """Fourier transform of K_n/(2 pi): continuous frequency (gapless) or integer mode (gapped)."""
    if tp.regime == GAPLESS:
        p = math.pi / tp.gamma_or_phi
        w = np.abs(np.asarray(w, dtype=float))
        return _sinh_ratio(p - n, p, w)
    if tp.regime == GAPPED:
        return np.exp(-n * np.abs(np.asarray(w, dtype=float)) * tp.gamma_or_phi)
    raise ValueError(f"no kernel for regime {tp.regime!r}")


def root_density(lam):
    """Ground-state rapidity density 1/(2 cosh(pi lam / 2)) at zero magnetization."""
    x = 0.5 * np.pi * np.abs(np.asarray(lam, dtype=float))
    return np.exp(-x) / (1.0 + np.exp(-2.0 * x))


# -- imaginary energies ----------------------------------------------------

def _gapless_weight(w, tp: ThermoParams):
    p = math.pi / tp.gamma_or_phi
    return np.tanh(w) * _sinh_ratio(p - 2.0, p, w)


def gapless_cutoff(gamma: float) -> float:
    # envelope of tanh * sinh ratio decays as exp(-2 min(1, pi/gamma - 1) w)
    p = math.pi / gamma
    return max(20.0, 40.0 / min(1.0, p - 1.0))


def fredholm_source_transform(w, delta: float, g: float):
    """Fourier transform of the boundary source of the imaginary Fredholm equation.

    Debug hook: returns the transform Theta(w) of
    Im[theta_2(lam - x0) + theta_2(lam + x0)] (gapless regime, w != 0).
    """
    tp = ThermoParams.from_model(delta, g)
    if tp.regime != GAPLESS:
        raise ValueError("only the gapless source transform is exposed")
    w = np.asarray(w, dtype=float)
    p = math.pi / tp.gamma_or_phi
    return (2j * np.sin(w * tp.lambda0) * np.sinh(w) * _sinh_ratio(p - 2.0, p, np.abs(w))
            * np.sign(w) / np.abs(w))


def scalefree_density_transform(w, delta: float, g: float):
    """Fourier transform of rho*sigma solving the imaginary Fredholm equation (debug hook)."""
    tp = ThermoParams.from_model(delta, g)
    return fredholm_source_transform(w, delta, g) / (2 * np.pi * (1.0 + kernel_K_tilde(2, w, tp)))


def im_energy_gapless(delta: float, g: float, epsabs: float = 1e-12) -> ThermoResult:
    """Imaginary energy of the scale-free state for |delta| < 1 and g > g_c.

    For 0 < delta < 1 this is the steady state; for -1 < delta < 0 the same
    expression describes the ground state (lowest real part).
    """
    if not abs(delta) < 1:
        raise ValueError(f"gapless formula needs |delta| < 1, got {delta}")
    tp = ThermoParams.from_model(delta, g)
    gam, lam0 = tp.gamma_or_phi, tp.lambda0
    cutoff = gapless_cutoff(gam)
    # QAWO handles the sin(w lam0) oscillation; large |lam0| near g_c is the hard case
    val, err = integrate.quad(lambda w: float(_gapless_weight(np.array([w]), tp)[0]),
                              0.0, cutoff, weight="sin", wvar=lam0,
                              epsabs=epsabs, epsrel=1e-12, limit=2000)
    scalefree = math.sin(gam) / gam * val
    eb = boundary_mode_energy(delta, g)
    return ThermoResult(eb, scalefree, eb + scalefree, math.sin(gam) / gam * err)


def im_energy_gapped(delta: float, g: float, tol: float = 1e-14) -> ThermoResult:
    """Imaginary ground-state energy for delta < -1 from the Fourier series."""
    if not delta < -1:
        raise ValueError(f"gapped formula needs delta < -1, got {delta}")
    if g == 0.0:
        return ThermoResult(0.0, 0.0, 0.0)
    tp = ThermoParams.from_model(delta, g)
    phi, lam0 = tp.gamma_or_phi, tp.lambda0
    q = math.exp(-2.0 * phi)
    total, m = 0.0, 1
    while True:
        term = math.sin(m * phi * lam0) * math.tanh(m * phi) * q**m
        total += term
        # remaining tail is bounded by the geometric series of q^k, k > m
        if q ** (m + 1) / (1.0 - q) < tol:
            break
        m += 1
    scalefree = math.sinh(phi) * total
    eb = boundary_mode_energy(delta, g)
    err = math.sinh(phi) * q ** (m + 1) / (1.0 - q)
    return ThermoResult(eb, scalefree, eb + scalefree, err)


def string_im_energy(delta: float, g: float) -> float:
    """Imaginary steady-state energy of the boundary string, |delta| > 1."""
    if not abs(delta) > 1:
        raise ValueError(f"boundary string needs |delta| > 1, got {delta}")
    return 0.5 * g


def im_energy(delta: float, g: float) -> ThermoResult:
    """Dispatch to the formula describing the state that matches ED at (delta, g).

    delta > 0: steady state; delta < 0: ground state.
    """
    if abs(delta) < 1:
        return im_energy_gapless(delta, g)
    if delta < -1:
        return im_energy_gapped(delta, g)
    if delta > 1:
        eb = boundary_mode_energy(delta, g)
        return ThermoResult(eb, 0.5 * g - eb, 0.5 * g)
    return ThermoResult(boundary_mode_energy(delta, g), 0.5 * g - boundary_mode_energy(delta, g), 0.5 * g)
