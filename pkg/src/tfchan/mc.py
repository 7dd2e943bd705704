"""Monte-Carlo verification of the E_p bounds for random piecewise-constant channels.

The channel is Sigma = sum_k c_k chi_k, with chi_k the indicator of the k-th
cell of a K x K grid of side u, and the pulses are g = gamma = standard
Gaussian. After pulling S_mu out of the error,

    E_p(mu) = || g(x) sum_k c_k F_k(x) ||_p,
    F_k(x)  = int_cell exp(-i 2 pi eta(nu, mu)) f(nu, x) d nu,
    f(nu, x) = (S_nu^(alpha) g)(x) / g(x) - B(nu),

where B is the Gaussian ambiguity (case C1) or 1 (case C2). The inner
nu2-integral of the first term is elementary; the remaining one-dimensional
integrals use composite Simpson with doubling, and the x-integral is
truncated to [-L, L] with a rigorous tail bound.
"""
from __future__ import annotations

import concurrent.futures as cf
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.optimize import brentq

from .channel import SupportRegion
from .specfun import AccuracyError, gauss_exp_integral
from .tfcore import PhasePoint, as_point

MAX_PANELS = 2**14


@dataclass(frozen=True)
class AccuracyBudget:
    Delta: float
    delta: float
    L: float
    c_norm1: float
    norm_q: float
    g_norm_p: float
    tail: float = 0.0
    err_f: float = 0.0
    err_x: float = 0.0
    nodes_x: int = 0
    panels_nu: int = 0

    @property
    def certificate(self) -> float:
        """Bound on |ratio error| implied by the achieved sub-errors."""
        if self.norm_q == 0:
            return 0.0
        return (self.err_x + self.c_norm1 * self.g_norm_p * (self.err_f + self.tail)) / self.norm_q


@dataclass(frozen=True)
class McConfig:
    N: int = 1000
    K: int = 4
    p: float = 2.0
    q: float = 2.0
    case: str = "C1"
    alpha: float = 0.0
    U_range: tuple = (1e-3, 1e-2)
    mu_range: tuple = (-5.0, 5.0)
    Delta: float = 1e-8
    master_seed: int = 0
    variance: float = 1.0
    placement: str = "corner"
    threads: int = 1

    def __post_init__(self):
        if self.N < 1 or self.K < 1:
            raise ValueError("need N >= 1 and K >= 1")
        if not self.Delta > 0:
            raise ValueError("Delta must be positive")
        if not 1 <= self.p < np.inf or not self.q >= 1:
            raise ValueError("need 1 <= p < inf and q >= 1")
        if self.case not in ("C1", "C2"):
            raise ValueError("Monte-Carlo cases are C1 and C2")
        if self.placement not in ("corner", "centered"):
            raise ValueError("placement is 'corner' or 'centered'")
        lo, hi = self.U_range
        if not 0 < lo <= hi:
            raise ValueError("bad support-size range")
        if not self.mu_range[0] <= self.mu_range[1]:
            raise ValueError("bad mu range")

    def to_dict(self) -> dict:
        return {
            "N": self.N, "K": self.K, "p": self.p, "q": self.q, "case": self.case,
            "alpha": self.alpha, "U_range": list(self.U_range), "mu_range": list(self.mu_range),
            "Delta": self.Delta, "master_seed": self.master_seed, "variance": self.variance,
            "placement": self.placement,
        }


@dataclass(frozen=True)
class McRecord:
    run_id: int
    seed: int
    U_size: float
    u: float
    mu: PhasePoint
    p: float
    q: float
    case: str
    alpha: float
    ratio: float
    certificate: float
    uniform_bound: float
    gl_bound: float
    kozek_bound: float = float("nan")
    notes: str = ""
    failed: bool = field(default=False, compare=False)


def run_seed(master_seed: int, run_index: int) -> int:
    """Stable 63-bit per-run seed derived from (master_seed, run_index)."""
    ss = np.random.SeedSequence([int(master_seed) % 2**64, int(run_index)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def sample_channel(K: int, U_size: float, rng: np.random.Generator, variance: float = 1.0):
    """Circular complex normal coefficients on a K x K grid covering area U_size."""
    if not U_size > 0:
        raise ValueError("U_size must be positive")
    z = rng.standard_normal((K * K, 2))
    c = np.sqrt(variance / 2) * (z[:, 0] + 1j * z[:, 1])
    return c, math.sqrt(U_size) / K


def model_origin(K: int, u: float, placement: str = "corner") -> tuple:
    return (0.0, 0.0) if placement == "corner" else (-K * u / 2, -K * u / 2)


def _cells(K: int, u: float, origin) -> np.ndarray:
    """(K^2, 2, 2) array of [[a1, b1], [a2, b2]], row-major in (k1, k2)."""
    return np.array(SupportRegion.grid_union(K, u, origin=origin).cells())


def _simpson_weights(n: int) -> np.ndarray:
    w = np.ones(n + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    return w / (3 * n)


def _shift_term_integrand(nu1, x, m2, w2, mu, alpha):
    """exp(-i2pi nu1 mu2 + 2pi x nu1 - pi nu1^2) * int_{cell nu2} exp(i beta nu2) d nu2."""
    beta = 2 * np.pi * (mu.mu1 + x - (0.5 - alpha) * nu1)
    e = np.exp(-2j * np.pi * nu1 * mu.mu2 + 2 * np.pi * x * nu1 - np.pi * nu1 * nu1)
    return e * w2 * np.exp(1j * beta * m2) * np.sinc(beta * w2 / (2 * np.pi))


def _simpson_doubling(integrand, a, width, tol, n0=2, n_max=MAX_PANELS):
    """Composite Simpson on [a, a + width] (arrays broadcast) doubled until max error <= tol."""
    n = n0
    prev = None
    while True:
        t = np.linspace(0.0, 1.0, n + 1)
        vals = integrand(a[..., None] + width[..., None] * t)
        cur = width * np.tensordot(vals, _simpson_weights(n), axes=([-1], [0]))
        if prev is not None:
            diff = (cur - prev) / 15
            err = float(np.max(np.abs(cur - prev))) if diff.size else 0.0
            if err <= tol:
                return cur + diff, err, n
        if n >= n_max:
            raise AccuracyError(f"Simpson doubling did not reach {tol:.3g} with {n} panels")
        prev, n = cur, 2 * n


def _shift_table(cells, x, mu, alpha, tol, n0=2):
    """P_k(x) for all cells and x, shape (K^2, nx), with absolute error <= tol."""
    a1, b1 = cells[:, 0, 0], cells[:, 0, 1]
    a2, b2 = cells[:, 1, 0], cells[:, 1, 1]
    m2, w2 = 0.5 * (a2 + b2), b2 - a2
    if alpha == 0.5:
        beta = 2 * np.pi * (mu.mu1 + x)[None, :]
        e2 = w2[:, None] * np.exp(1j * beta * m2[:, None]) * np.sinc(beta * w2[:, None] / (2 * np.pi))
        e1 = gauss_exp_integral(a1[:, None], b1[:, None], 1.0, x[None, :] - 1j * mu.mu2)
        return e1 * e2, 0.0, 0
    A = np.broadcast_to(a1[:, None], (a1.size, x.size))
    W = np.broadcast_to((b1 - a1)[:, None], A.shape)

    def integrand(nu1):
        return _shift_term_integrand(nu1, x[None, :, None], m2[:, None, None], w2[:, None, None], mu, alpha)

    return _simpson_doubling(integrand, A, W, tol, n0)


def _b_table(cells, mu, case, alpha, tol):
    """b_k = int_cell exp(-i 2 pi eta(nu, mu)) B(nu) d nu, shape (K^2,)."""
    a1, b1 = cells[:, 0, 0], cells[:, 0, 1]
    a2, b2 = cells[:, 1, 0], cells[:, 1, 1]
    if case == "C2":
        e1 = (b1 - a1) * np.exp(-1j * np.pi * mu.mu2 * (a1 + b1)) * np.sinc(mu.mu2 * (b1 - a1))
        e2 = (b2 - a2) * np.exp(1j * np.pi * mu.mu1 * (a2 + b2)) * np.sinc(mu.mu1 * (b2 - a2))
        return e1 * e2, 0.0
    if alpha == 0:
        e1 = gauss_exp_integral(a1, b1, 0.5, -1j * mu.mu2)
        e2 = gauss_exp_integral(a2, b2, 0.5, 1j * mu.mu1)
        return e1 * e2, 0.0

    def integrand(nu1):
        outer = np.exp(-0.5 * np.pi * nu1 * nu1 - 2j * np.pi * nu1 * mu.mu2)
        inner = gauss_exp_integral(a2[:, None], b2[:, None], 0.5, 1j * (mu.mu1 + alpha * nu1))
        return outer * inner

    val, err, _ = _simpson_doubling(integrand, a1, b1 - a1, tol)
    return val, err


def _log_erfc(y):
    return math.log(2.0) + special.log_ndtr(-math.sqrt(2.0) * y)


def truncation_half_width(u: float, delta: float, p: float, reach: float) -> tuple[float, float]:
    """Half-width L of the x-window and the per-cell tail bound it achieves.

    The tail of each cell term is at most
    u^2 [erfc(sqrt(pi p)(L - reach))^(1/p) + erfc(sqrt(pi p) L)^(1/p)]
    (in units of ||g||_p), where reach bounds |nu1| on the support. L is the
    smallest value meeting delta, but never below pi L >= max(sqrt(log(2u^2/delta)), 1).
    """
    L0 = max(math.sqrt(max(math.log(2 * u * u / delta), 0.0)), 1.0) / math.pi
    c = math.sqrt(math.pi * p)

    def log_tail(L):
        t1 = _log_erfc(c * (L - reach)) / p
        t2 = _log_erfc(c * L) / p
        return 2 * math.log(u) + np.logaddexp(t1, t2)

    target = math.log(delta)
    if log_tail(L0) <= target:
        L = L0
    else:
        hi = L0 + 1.0
        while log_tail(hi) > target:
            hi *= 2
        L = brentq(lambda z: log_tail(z) - target, L0, hi, xtol=1e-12)
        L = max(L, L0) * (1 + 1e-12)
    return L, math.exp(log_tail(L))


def g_norm_p(p: float) -> float:
    return 2**0.25 * p ** (-1 / (2 * p))


def _root_error(I, dI, p):
    if dI == 0:
        return 0.0
    lo = max(I - dI, 0.0)
    crude = dI ** (1 / p)
    return min(crude, dI / (p * lo ** (1 - 1 / p))) if lo > 0 else crude


def f_k_integral(k, mu, x, u: float, alpha: float = 0.0, case: str = "C1", delta: float = 1e-12,
                 K: int | None = None, origin=(0.0, 0.0)):
    """F_k(x) for the cell with index k = (k1, k2), within absolute error delta.

    The cell is centered at u (k + (1/2, 1/2)) + origin with side u. The
    Gaussian factor is kept outside, so |exp(-pi x^2) F_k(x)| <= 2 u^2 while
    F_k itself may exceed that for x nu_1 > 0.
    """
    mu = as_point(mu)
    k1, k2 = k
    K = K or max(k1, k2) + 1
    cells = _cells(K, u, origin)[[k1 * K + k2]]
    xs = np.atleast_1d(np.asarray(x, float))
    P, _, _ = _shift_table(cells, xs, mu, float(alpha), delta / 2)
    b, _ = _b_table(cells, mu, case, float(alpha), delta / 2)
    out = P[0] - b[0]
    return complex(out[0]) if np.ndim(x) == 0 else out


def ep_certified(c, u: float, mu, p: float, q: float, case: str = "C1", alpha: float = 0.0,
                 Delta: float = 1e-8, origin=(0.0, 0.0)):
    """Certified ratio E_p(mu)/||Sigma||_q for the Gaussian finite model.

    Returns (ratio, certificate, budget) with certificate <= Delta.
    """
    if not Delta > 0:
        raise ValueError("Delta must be positive")
    if not 1 <= p < np.inf:
        raise ValueError("need 1 <= p < inf")
    mu = as_point(mu)
    c = np.asarray(c, dtype=complex).ravel()
    K = int(round(math.sqrt(c.size)))
    if K * K != c.size:
        raise ValueError("need K^2 coefficients")
    ac = np.abs(c)
    c1 = float(ac.sum())
    norm_q = float(ac.max()) if q == np.inf else float(u ** (2 / q) * np.sum(ac**q) ** (1 / q))
    gp = g_norm_p(p)
    if c1 == 0:
        return 0.0, 0.0, AccuracyBudget(Delta, 0.0, 0.0, 0.0, 0.0, gp)
    delta = Delta * norm_q / (1 + 2 * c1 * gp)
    cells = _cells(K, u, origin)
    reach = float(np.max(np.abs(cells[:, 0, :])))
    L, tail = truncation_half_width(u, delta, p, reach)
    b, err_b = _b_table(cells, mu, case, float(alpha), delta / 2)

    n_x, n_nu = 32, 2
    prev_I = None
    while True:
        x = np.linspace(-L, L, n_x + 1)
        P, err_p, used = _shift_table(cells, x, mu, float(alpha), delta / 2, n0=max(2, n_nu // 2))
        n_nu = max(n_nu, used)
        G = np.exp(-np.pi * x * x) * 2**0.25 * (c @ (P - b[:, None]))
        I = 2 * L * float(_simpson_weights(n_x) @ (np.abs(G) ** p))
        if prev_I is not None:
            dI = abs(I - prev_I)
            I_best = I + (I - prev_I) / 15
            err_x = _root_error(max(I_best, 0.0), dI, p)
            if err_x <= delta:
                break
        if n_x >= MAX_PANELS:
            raise AccuracyError("x-integration did not converge")
        prev_I, n_x = I, 2 * n_x
    value = max(I_best, 0.0) ** (1 / p)
    budget = AccuracyBudget(Delta, delta, L, c1, norm_q, gp, tail, err_p + err_b, err_x, n_x + 1, n_nu)
    cert = budget.certificate
    if cert > Delta * (1 + 1e-9):
        raise AccuracyError(f"certificate {cert:.3g} exceeds Delta {Delta:.3g}")
    return value / norm_q, cert, budget


class McAbort(RuntimeError):
    """More than the tolerated fraction of runs failed."""

    def __init__(self, message: str, records: list):
        super().__init__(message)
        self.records = records


FAILURE_LIMIT = 0.01


def _bounds_for(cfg: McConfig, U_size: float, u: float, origin) -> tuple[float, float, float]:
    from . import bounds

    region = SupportRegion.grid_union(cfg.K, u, origin=origin)
    inputs = bounds.BoundInputs.gaussian(region, cfg.p, cfg.q, cfg.case, cfg.alpha)
    uniform = bounds.bound_uniform(inputs)
    gl = bounds.bound_thm3(inputs)
    kozek = float("nan")
    if cfg.case == "C2" and cfg.alpha == 0 and cfg.p == 2 and cfg.q == 1:
        kozek = bounds.bound_kozek(None, inputs.gamma, region)[1]
    return uniform, gl, kozek


def run_one(cfg: McConfig, run_index: int) -> McRecord:
    seed = run_seed(cfg.master_seed, run_index)
    rng = np.random.default_rng(seed)
    U_size = float(rng.uniform(*cfg.U_range))
    mu = PhasePoint(*(float(v) for v in rng.uniform(cfg.mu_range[0], cfg.mu_range[1], 2)))
    c, u = sample_channel(cfg.K, U_size, rng, cfg.variance)
    origin = model_origin(cfg.K, u, cfg.placement)
    common = dict(run_id=run_index, seed=seed, U_size=U_size, u=u, mu=mu, p=cfg.p, q=cfg.q,
                  case=cfg.case, alpha=cfg.alpha)
    try:
        uniform, gl, kozek = _bounds_for(cfg, U_size, u, origin)
        ratio, cert, _ = ep_certified(c, u, mu, cfg.p, cfg.q, cfg.case, cfg.alpha, cfg.Delta, origin)
    except (AccuracyError, ArithmeticError) as exc:
        nan = float("nan")
        return McRecord(**common, ratio=nan, certificate=nan, uniform_bound=nan, gl_bound=nan,
                        notes=f"failed: {exc}", failed=True)
    notes = "fast path" if cfg.case == "C2" and cfg.alpha == 0.5 else ""
    return McRecord(**common, ratio=ratio, certificate=cert, uniform_bound=uniform, gl_bound=gl,
                    kozek_bound=kozek, notes=notes)


def run_mc(cfg: McConfig, threads: int | None = None, progress=None) -> list:
    """All runs of a campaign, ordered by run_id.

    Records do not depend on the thread count. Raises McAbort (carrying the
    records) when more than 1% of the runs fail.
    """
    n_threads = max(1, int(threads if threads is not None else cfg.threads))
    if n_threads == 1:
        records = []
        for i in range(cfg.N):
            records.append(run_one(cfg, i))
            if progress is not None:
                progress(i + 1, cfg.N)
    else:
        with cf.ThreadPoolExecutor(n_threads) as pool:
            records = list(pool.map(lambda i: run_one(cfg, i), range(cfg.N)))
    failed = sum(r.failed for r in records)
    if failed > FAILURE_LIMIT * cfg.N:
        raise McAbort(f"{failed} of {cfg.N} runs failed", records)
    return records


def summarize(records: list, Delta: float) -> dict:
    ok = [r for r in records if not r.failed]
    if not ok:
        return {"runs": len(records), "failed": len(records)}
    ratio = np.array([r.ratio for r in ok])
    uni = np.array([r.uniform_bound for r in ok])
    gl = np.array([r.gl_bound for r in ok])
    out = {
        "runs": len(records),
        "failed": len(records) - len(ok),
        "max_certificate": float(max(r.certificate for r in ok)),
        "uniform_dominated": int(np.sum(ratio <= uni + Delta)),
        "gl_dominated": int(np.sum(ratio <= gl + Delta)),
    }
    if np.all(np.isfinite(gl)) and np.all(np.isfinite(uni)):
        out["max_ratio_over_gl"] = float(np.max(ratio / gl))
        out["median_gl_over_uniform"] = float(np.median(gl / uni))
        out["min_gl_over_uniform"] = float(np.min(gl / uni))
        out["max_gl_over_uniform"] = float(np.max(gl / uni))
    koz = np.array([r.kozek_bound for r in ok])
    if np.all(np.isfinite(koz)):
        out["kozek_dominated"] = int(np.sum(ratio <= koz + Delta))
    return out
