"""Phase-space primitives for one time and one frequency variable.

Conventions: zeta(mu, nu) = mu1*nu2, eta(mu, nu) = zeta(mu, nu) - zeta(nu, mu),
S_mu f(x) = exp(i 2 pi mu2 x) f(x - mu1) and
S_mu^(alpha) = exp(-i 2 pi (1/2 - alpha) zeta(mu, mu)) S_mu.
The inner product is conjugate-linear in its first argument.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import integrate as _sint
from scipy import optimize

from .specfun import hermite_fn, integrate_1d, integrate_2d

DEFAULT_HALF_WIDTH = 8.0
DEFAULT_SAMPLES = 4097
_OVERFLOW_REL = 1e-12


class GridOverflowError(ValueError):
    """A sampled signal would be shifted beyond its decayed support."""


class UnsupportedDomainError(ValueError):
    pass


@dataclass(frozen=True)
class PhasePoint:
    mu1: float
    mu2: float

    def __post_init__(self):
        if not (np.isfinite(self.mu1) and np.isfinite(self.mu2)):
            raise ValueError("phase point components must be finite")

    def zeta(self, other: "PhasePoint") -> float:
        return self.mu1 * other.mu2

    def eta(self, other: "PhasePoint") -> float:
        return self.zeta(other) - other.zeta(self)

    def __add__(self, other):
        return PhasePoint(self.mu1 + other.mu1, self.mu2 + other.mu2)

    def __sub__(self, other):
        return PhasePoint(self.mu1 - other.mu1, self.mu2 - other.mu2)

    def __neg__(self):
        return PhasePoint(-self.mu1, -self.mu2)

    def norm(self) -> float:
        return float(np.hypot(self.mu1, self.mu2))

    def as_array(self) -> np.ndarray:
        return np.array([self.mu1, self.mu2])


@dataclass(frozen=True)
class Polarization:
    alpha: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")


Alpha = Union[float, Polarization]
Point = Union[PhasePoint, tuple, np.ndarray]


def alpha_value(alpha: Alpha) -> float:
    return float(alpha.alpha if isinstance(alpha, Polarization) else alpha)


def as_point(mu: Point) -> PhasePoint:
    if isinstance(mu, PhasePoint):
        return mu
    a, b = mu
    return PhasePoint(float(a), float(b))


def as_points(mu) -> tuple[np.ndarray, np.ndarray, bool]:
    """Split a point or an (..., 2) array into component arrays."""
    if isinstance(mu, PhasePoint):
        return np.array([mu.mu1]), np.array([mu.mu2]), True
    arr = np.asarray(mu, dtype=float)
    if arr.shape == (2,):
        return arr[:1], arr[1:], True
    return arr[..., 0], arr[..., 1], False


def zeta(a1, a2, b1, b2):
    return a1 * b2


def eta(a1, a2, b1, b2):
    return a1 * b2 - b1 * a2


def commutation_phase(mu: Point, nu: Point) -> complex:
    """exp(-i 2 pi eta(mu, nu)); S_mu S_nu = phase * S_nu S_mu for any polarizations."""
    m, n = as_point(mu), as_point(nu)
    return complex(np.exp(-2j * np.pi * m.eta(n)))


def polarization_phase(mu1, mu2, alpha: Alpha):
    """Factor relating S^(alpha) to S = S^(1/2)."""
    return np.exp(-2j * np.pi * (0.5 - alpha_value(alpha)) * mu1 * mu2)


@dataclass(frozen=True, eq=False)
class Signal:
    """Unit-norm signal: analytic (gaussian, hermite) or sampled on [-X, X].

    Analytic signals carry an accumulated displacement so that
    s(x) = phase * exp(i 2 pi t2 x) * base(x - t1).
    """

    kind: str
    order: int = 0
    half_width: float = DEFAULT_HALF_WIDTH
    values: np.ndarray | None = field(default=None, repr=False)
    t1: float = 0.0
    t2: float = 0.0
    phase: complex = 1.0 + 0j

    @classmethod
    def gaussian(cls) -> "Signal":
        return cls("gaussian")

    @classmethod
    def hermite(cls, m: int) -> "Signal":
        if m < 0 or int(m) != m:
            raise ValueError("Hermite order must be a non-negative integer")
        return cls("gaussian") if m == 0 else cls("hermite", order=int(m))

    @classmethod
    def sampled(cls, values, half_width: float = DEFAULT_HALF_WIDTH, normalize: bool = True) -> "Signal":
        v = np.array(values, dtype=complex)
        if v.ndim != 1 or v.size < 3 or v.size % 2 == 0:
            raise ValueError("sampled signals need an odd number (>= 3) of samples")
        s = cls("sampled", half_width=float(half_width), values=v)
        if normalize:
            n = s.norm(2)
            if n == 0:
                raise ValueError("cannot normalize the zero signal")
            s = cls("sampled", half_width=float(half_width), values=v / n)
        s.values.setflags(write=False)
        return s

    @classmethod
    def from_function(cls, fn: Callable, half_width: float = DEFAULT_HALF_WIDTH,
                      samples: int = DEFAULT_SAMPLES, normalize: bool = True) -> "Signal":
        x = np.linspace(-half_width, half_width, samples)
        return cls.sampled(fn(x), half_width, normalize)

    @property
    def is_analytic(self) -> bool:
        return self.kind != "sampled"

    @property
    def is_standard_gaussian(self) -> bool:
        return self.kind == "gaussian" and self.t1 == 0 and self.t2 == 0 and self.phase == 1

    @property
    def grid(self) -> np.ndarray:
        if self.kind != "sampled":
            raise AttributeError("analytic signals have no grid")
        return np.linspace(-self.half_width, self.half_width, self.values.size)

    @property
    def norm2(self) -> float:
        return self.norm(2)

    def window(self) -> tuple[float, float]:
        """Interval outside which the signal is negligible (below ~1e-40)."""
        if self.kind == "sampled":
            return -self.half_width, self.half_width
        w = np.sqrt((2 * self.order + 1) / (2 * np.pi)) + 5.5
        return self.t1 - w, self.t1 + w

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sampled":
            re = np.interp(x, self.grid, self.values.real, left=0.0, right=0.0)
            im = np.interp(x, self.grid, self.values.imag, left=0.0, right=0.0)
            return re + 1j * im
        base = hermite_fn(self.order, x - self.t1)
        if self.t2 == 0 and self.phase == 1:
            return base + 0j
        return self.phase * np.exp(2j * np.pi * self.t2 * x) * base

    def norm(self, p: float = 2.0, tol: float = 1e-13) -> float:
        if p == np.inf:
            return self.sup_norm()
        if p < 1:
            raise ValueError("p must be >= 1")
        if self.kind == "sampled":
            return float(_sint.simpson(np.abs(self.values) ** p, x=self.grid) ** (1 / p))
        a, b = self.window()
        res = integrate_1d(lambda x: np.abs(hermite_fn(self.order, x - self.t1)) ** p, a, b, tol)
        return float(res.value ** (1 / p))

    def sup_norm(self) -> float:
        if self.kind == "sampled":
            return float(np.max(np.abs(self.values)))
        if self.kind == "gaussian":
            return 2**0.25
        a, b = self.window()
        x = np.linspace(a, b, 20001)
        v = np.abs(hermite_fn(self.order, x - self.t1))
        i = int(np.argmax(v))
        h = x[1] - x[0]
        res = optimize.minimize_scalar(lambda t: -abs(hermite_fn(self.order, t - self.t1)),
                                       bounds=(x[i] - h, x[i] + h), method="bounded",
                                       options={"xatol": 1e-12})
        return float(max(v[i], -res.fun))

    def on_grid(self, x) -> np.ndarray:
        """Values on an arbitrary grid (sampled kinds must use their own grid)."""
        if self.kind == "sampled":
            if x.shape == self.values.shape and np.allclose(x, self.grid, rtol=0, atol=1e-14):
                return np.asarray(self.values)
        return self(x)


def _fft_translates(values: np.ndarray, h: float, shifts: np.ndarray) -> np.ndarray:
    """Band-limited translates v(x - s) on the same grid, one row per shift."""
    n = values.size
    freqs = np.fft.fftfreq(n, d=h)
    spec = np.fft.fft(values)
    ramp = np.exp(-2j * np.pi * np.multiply.outer(shifts, freqs))
    return np.fft.ifft(spec * ramp, axis=-1)


def _check_overflow(s: Signal, mu1: float):
    if mu1 == 0:
        return
    x, v = s.grid, np.abs(s.values)
    edge = x > s.half_width - abs(mu1) if mu1 > 0 else x < -s.half_width + abs(mu1)
    if np.any(edge) and v[edge].max() > _OVERFLOW_REL * v.max():
        raise GridOverflowError(
            f"shift by {mu1:g} moves non-negligible samples beyond the grid [-{s.half_width:g}, {s.half_width:g}]")


def sampled_translates(s: Signal, shifts) -> np.ndarray:
    shifts = np.asarray(shifts, dtype=float)
    if shifts.size:
        _check_overflow(s, float(max(shifts.max(), 0.0)))
        _check_overflow(s, float(min(shifts.min(), 0.0)))
    h = 2 * s.half_width / (s.values.size - 1)
    return _fft_translates(np.asarray(s.values), h, shifts)


def shift(s: Signal, mu: Point, alpha: Alpha = 0.5) -> Signal:
    """S_mu^(alpha) s; an isometry on every L^p."""
    m = as_point(mu)
    pol = complex(polarization_phase(m.mu1, m.mu2, alpha))
    if s.kind == "sampled":
        x = s.grid
        moved = sampled_translates(s, np.array([m.mu1]))[0] if m.mu1 else np.asarray(s.values)
        vals = pol * np.exp(2j * np.pi * m.mu2 * x) * moved
        out = Signal("sampled", half_width=s.half_width, values=vals)
        out.values.setflags(write=False)
        return out
    # S_mu^(alpha) [phase e^{i2pi t2 x} b(x - t1)] = phase' e^{i2pi (t2+mu2) x} b(x - t1 - mu1)
    new_phase = s.phase * pol * np.exp(-2j * np.pi * s.t2 * m.mu1)
    return Signal(s.kind, s.order, s.half_width, None, s.t1 + m.mu1, s.t2 + m.mu2, complex(new_phase))


def shifted_values(s: Signal, nu1, nu2, alpha: Alpha, x) -> np.ndarray:
    """(S_nu^(alpha) s)(x) for arrays nu1, nu2 (shape P) and x (shape N) -> (P, N)."""
    nu1, nu2, x = np.asarray(nu1, float), np.asarray(nu2, float), np.asarray(x, float)
    pol = polarization_phase(nu1, nu2, alpha)[..., None]
    mod = np.exp(2j * np.pi * nu2[..., None] * x)
    if s.kind == "sampled":
        if x.shape != s.values.shape:
            raise ValueError("sampled signals are shifted on their own grid")
        moved = sampled_translates(s, nu1.ravel()).reshape(nu1.shape + x.shape)
        return pol * mod * moved
    base = hermite_fn(s.order, x - s.t1 - nu1[..., None])
    inner = s.phase * np.exp(2j * np.pi * s.t2 * (x - nu1[..., None]))
    return pol * mod * inner * base


def gaussian_shift_closed_form(nu: Point, alpha: Alpha, x):
    """S_nu^(alpha) g for the standard Gaussian written as a multiple of g(x)."""
    n = as_point(nu)
    a = alpha_value(alpha)
    x = np.asarray(x, dtype=float)
    # eta(nu, x e) with e = (1, i): nu1 * i x - x * nu2
    eta_c = n.mu1 * 1j * x - x * n.mu2
    expo = -np.pi * (2j * eta_c + 1j * (1 - 2 * a) * n.mu1 * n.mu2 + n.mu1**2)
    return np.exp(expo) * hermite_fn(0, x)


def gaussian_ambiguity(mu1, mu2, alpha: Alpha = 0.0):
    """<g, S_mu^(alpha) g> for the standard Gaussian g."""
    a = alpha_value(alpha)
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    return np.exp(-0.5 * np.pi * (mu1 * mu1 + mu2 * mu2) + 2j * np.pi * a * mu1 * mu2)


def ambiguity(g: Signal, gamma: Signal, mu, alpha: Alpha = 0.0, tol: float = 1e-12):
    """Cross-ambiguity <g, S_mu^(alpha) gamma> at a point or an (..., 2) array."""
    m1, m2, scalar = as_points(mu)
    if g.is_standard_gaussian and gamma.is_standard_gaussian:
        out = gaussian_ambiguity(m1, m2, alpha)
    elif g.kind == "sampled" or gamma.kind == "sampled":
        out = _ambiguity_on_grid(g, gamma, m1, m2, alpha)
    else:
        flat1, flat2 = m1.ravel(), m2.ravel()
        a, b = g.window()
        lo = max(a, min(gamma.window()[0] + flat1.min(), b - 1))
        hi = min(b, max(gamma.window()[1] + flat1.max(), lo + 1))

        def integrand(x):
            gx = np.conj(g(x))
            return gx[:, None] * shifted_values(gamma, flat1, flat2, alpha, x).T

        res = integrate_1d(integrand, lo, hi, tol)
        out = np.asarray(res.value).reshape(m1.shape)
    return complex(out.ravel()[0]) if scalar else out


def _ambiguity_on_grid(g: Signal, gamma: Signal, m1, m2, alpha):
    ref = g if g.kind == "sampled" else gamma
    x = ref.grid
    gv = np.conj(g.on_grid(x))
    flat1, flat2 = m1.ravel(), m2.ravel()
    sv = shifted_values(gamma, flat1, flat2, alpha, x)
    vals = _sint.simpson(gv[None, :] * sv, x=x, axis=-1)
    return vals.reshape(m1.shape)


def symplectic_fourier(F: Callable, mu, rect, tol: float = 1e-10):
    """(F_s F)(mu) = integral over rect of exp(-i 2 pi eta(nu, mu)) F(nu) d nu.

    F is called as F(nu1, nu2) with broadcasting arrays; mu may be a point
    or an (n, 2) array, evaluated in one vector-valued quadrature.
    """
    (a1, b1), (a2, b2) = rect
    if not np.all(np.isfinite([a1, b1, a2, b2])):
        raise UnsupportedDomainError("symplectic Fourier transform needs a bounded support rectangle")
    m1, m2, scalar = as_points(mu)
    f1, f2 = m1.ravel(), m2.ravel()

    def integrand(n1, n2):
        n1e, n2e = n1[..., None], n2[..., None]
        val = np.asarray(F(n1, n2))[..., None]
        return val * np.exp(-2j * np.pi * (n1e * f2 - f1 * n2e))

    res = integrate_2d(integrand, rect, tol)
    out = np.asarray(res.value).reshape(m1.shape)
    return complex(out.ravel()[0]) if scalar else out
