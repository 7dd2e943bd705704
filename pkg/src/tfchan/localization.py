"""Localization operator Q with spreading chi_U/|U| at polarization 0.

Q is represented in the Hermite basis, Q_ij = (1/|U|) int_U <h_i, S_mu h_j> d mu.
For every slice of U at fixed mu_1 the mu_2 integral of the modulation is a
sinc in x, so each slice costs one Hermite-weighted sum over an x grid; the
remaining mu_1 (or angle, for discs) integral is adaptive and matrix-valued.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .channel import SupportRegion
from .specfun import MAX_HERMITE_ORDER, hermite_all, integrate_1d, integrate_2d, laguerre_fn

DEFAULT_ORDER = 32
ORDERS = (16, 32, 64, 128)


@dataclass(frozen=True, eq=False)
class QMatrix:
    order: int
    entries: np.ndarray
    U: SupportRegion
    tol: float

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def hermitian_defect(self) -> float:
        e = self.entries
        return float(np.max(np.abs(e - e.conj().T)))


@dataclass(frozen=True)
class EigenResult:
    value: float
    order: int
    converged: bool
    history: tuple


def _x_grid(M: int, reach: float):
    # Hermite functions up to order M-1 live in |x| < sqrt((2M-1)/2pi)+O(1); also shifted by reach.
    half = math.sqrt((2 * M - 1) / (2 * math.pi)) + 5.5 + reach
    n = int(math.ceil(2 * half / 0.02)) + 1
    return np.linspace(-half, half, n)


def _slices(U: SupportRegion):
    """Yield (param interval, map t -> (mu1, lo, hi, jac)) for the slice decomposition of U."""
    if U.shape == "disc":
        R = U.params[0]

        def disc(t):
            m1 = R * np.sin(t)
            h = R * np.cos(t)
            return m1, -h, h, R * np.cos(t)

        return [((-math.pi / 2, math.pi / 2), disc)]
    out = []
    for (a1, b1), (a2, b2) in U.cells():
        def cell(t, a2=a2, b2=b2):
            return t, np.full_like(t, a2), np.full_like(t, b2), np.ones_like(t)

        out.append(((a1, b1), cell))
    return out


def build_q(U: SupportRegion, M: int = DEFAULT_ORDER, tol: float = 1e-9) -> QMatrix:
    """Hermite-basis matrix of Q, truncated to orders 0..M-1."""
    if M < 1:
        raise ValueError("M must be positive")
    if M > MAX_HERMITE_ORDER:
        raise ValueError(f"M exceeds {MAX_HERMITE_ORDER}")
    (lo1, hi1), _ = U.bounding_box()
    x = _x_grid(M, max(abs(lo1), abs(hi1)))
    dx = x[1] - x[0]
    H = hermite_all(M - 1, x)
    slices = _slices(U)
    total = np.zeros((M, M), complex)
    for interval, fn in slices:
        def integrand(t, fn=fn):
            m1, a, b, jac = fn(np.asarray(t, float))
            out = np.empty((t.size, M, M), complex)
            for i in range(t.size):
                xs = x - 0.5 * m1[i]
                w = (b[i] - a[i]) * np.exp(1j * np.pi * (a[i] + b[i]) * xs) * np.sinc((b[i] - a[i]) * xs)
                Hs = hermite_all(M - 1, x - m1[i])
                out[i] = (H * (w * dx * jac[i])) @ Hs.T
            return out

        res = integrate_1d(integrand, *interval, tol * U.measure / len(slices))
        total += np.asarray(res.value)
    return QMatrix(M, total / U.measure, U, tol)


def lambda_max(Q: QMatrix, which: str = "QstarQ") -> float:
    """Largest eigenvalue of Q (Hermitian part when U is symmetric) or of Q*Q."""
    e = np.asarray(Q.entries)
    if which == "Q":
        return float(np.linalg.eigvalsh(0.5 * (e + e.conj().T))[-1])
    if which == "QstarQ":
        return float(np.linalg.eigvalsh(e.conj().T @ e)[-1])
    raise ValueError("which must be 'Q' or 'QstarQ'")


def lambda_max_converged(U: SupportRegion, which: str = "QstarQ", rtol: float = 1e-6,
                         orders=ORDERS, tol: float = 1e-10) -> EigenResult:
    """Doubles the Hermite truncation until lambda_max changes by less than rtol."""
    hist = []
    prev = None
    for M in orders:
        val = lambda_max(build_q(U, M, tol), which)
        hist.append((M, val))
        if prev is not None and abs(val - prev) <= rtol * max(abs(val), 1e-300):
            return EigenResult(val, M, True, tuple(hist))
        prev = val
    return EigenResult(prev, orders[-1], False, tuple(hist))


def l_disc(x: float) -> float:
    """Normalized Gaussian mass 2(1 - e^{-x/2})/x of a centered disc."""
    return float(-2 * math.expm1(-x / 2) / x)


def l_square(x: float) -> float:
    """Normalized Gaussian mass 2 erf(sqrt(pi x / 8))^2 / x of a centered square."""
    return float(2 * math.erf(math.sqrt(math.pi * x / 8)) ** 2 / x)


def laguerre_mean(U: SupportRegion, m: int, tol: float = 1e-12) -> float:
    """(1/|U|) int_U l_m(pi |mu|^2) d mu."""
    if m == 0 and U.shape in ("disc", "centered_square"):
        return (l_disc if U.shape == "disc" else l_square)(U.measure)
    if U.shape == "disc":
        # d mu over the disc is dt with t = pi r^2
        res = integrate_1d(lambda t: laguerre_fn(m, t), 0.0, U.measure, tol * U.measure)
        return float(res.value) / U.measure
    total = 0.0
    cells = U.cells()
    for rect in cells:
        f = lambda a, b: laguerre_fn(m, np.pi * (a * a + b * b))
        total += integrate_2d(f, rect, tol * U.measure / len(cells)).value
    return float(total) / U.measure


def laguerre_lower_bound(U: SupportRegion, m: int = 0, tol: float = 1e-12) -> float:
    """Squared Laguerre mean, a lower bound on lambda_max(Q*Q); +inf if U is not symmetric."""
    if not U.origin_symmetric:
        return math.inf
    return laguerre_mean(U, m, tol) ** 2


def n_r(U_measure: float, r: float) -> float:
    """Closed-form optimal fidelity bound for the weight chi_U/|U|."""
    if not (r > 0 and U_measure > 0):
        raise ValueError("need r > 0 and |U| > 0")
    rs = max(r, 2.0)
    if U_measure <= 2 * math.e / rs:
        return math.exp(-r * U_measure / (2 * math.e))
    return (2 / (rs * U_measure)) ** (r / rs)


def n_r_numeric(C_norms: Callable[[float], float], r: float, s_hi: float | None = None) -> float:
    """min over s >= max(1, 2/r) of (2/(rs))^(1/s) ||C||_{s'}.

    ``C_norms(s)`` returns ||C||_{s'} with s' the dual exponent of s. The
    default upper end is max(10, 4e ||C||_inf / r), which for flat weights
    contains the unconstrained minimizer 2e/(r|U|).
    """
    if not r > 0:
        raise ValueError("r must be positive")
    s_lo = max(1.0, 2.0 / r)
    if s_hi is None:
        s_hi = max(10.0, 4 * math.e * C_norms(1.0) / r)
    s_hi = max(s_hi, 2 * s_lo)

    def log_bound(s):
        return math.log(2 / (r * s)) / s + math.log(C_norms(s))

    res = optimize.minimize_scalar(log_bound, bounds=(s_lo, s_hi), method="bounded",
                                   options={"xatol": 1e-12})
    best = min(res.fun, log_bound(s_lo), log_bound(s_hi))
    return math.exp(best)


def flat_norms(U_measure: float) -> Callable[[float], float]:
    """s -> ||chi_U/|U| ||_{s'} = |U|^{-1/s}."""
    return lambda s: U_measure ** (-1.0 / s)


def r_inf_necessary_size(threshold: float, k: int) -> float:
    """Largest |U| compatible with R_inf <= threshold; +inf when threshold >= k."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    if threshold >= k:
        return math.inf
    return -k * math.e * math.log1p(-threshold / k)


def loc_report(U: SupportRegion, r: float | None = None, rtol: float = 1e-6) -> dict:
    q = lambda_max_converged(U, "Q", rtol)
    qq = lambda_max_converged(U, "QstarQ", rtol)
    out = {
        "shape": U.shape,
        "U_measure": U.measure,
        "lambda_max_Q": q.value,
        "lambda_max_QstarQ": qq.value,
        "converged": q.converged and qq.converged,
        "order": max(q.order, qq.order),
        "laguerre_lower": [laguerre_lower_bound(U, m) for m in range(4)],
        "N1": n_r(U.measure, 1.0),
        "N2": n_r(U.measure, 2.0),
    }
    if r is not None:
        out["Nr"] = n_r(U.measure, r)
    return out
