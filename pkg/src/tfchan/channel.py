"""Channel operators given by compactly supported spreading functions.

A channel is H = int Sigma(nu) S_nu^(alpha) d nu. Spreading functions are
stored as a list of pieces; each piece is a parameter rectangle mapped to the
phase plane (identity or polar) together with a vectorized value function.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _sint
from scipy import special
from scipy.stats import qmc

from .specfun import AccuracyError, integrate_1d, integrate_2d
from .tfcore import (
    PhasePoint,
    Signal,
    alpha_value,
    ambiguity,
    as_point,
    as_points,
    gaussian_ambiguity,
    shift,
    shifted_values,
    symplectic_fourier,
)

DEFAULT_GRID = (8.0, 4097)


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class Patch:
    """Parameter rectangle ((a1, b1), (a2, b2)); polar patches use (r, theta)."""

    rect: tuple
    polar: bool = False

    def map(self, s, t):
        if self.polar:
            return s * np.cos(t), s * np.sin(t)
        return s, t

    def jac(self, s, t):
        return s if self.polar else 1.0

    def negated(self) -> "Patch":
        (a1, b1), (a2, b2) = self.rect
        if self.polar:
            return Patch(((a1, b1), (a2 + np.pi, b2 + np.pi)), True)
        return Patch(((-b1, -a1), (-b2, -a2)))


@dataclass(frozen=True)
class SupportRegion:
    """Compact support U: rect, centered_square, disc or grid_union."""

    shape: str
    params: tuple

    @classmethod
    def rect(cls, tau: Sequence[float], nu: Sequence[float]) -> "SupportRegion":
        (a1, b1), (a2, b2) = tuple(map(float, tau)), tuple(map(float, nu))
        if not (a1 < b1 and a2 < b2):
            raise ValueError("rectangle must have positive measure")
        return cls("rect", ((a1, b1), (a2, b2)))

    @classmethod
    def centered_square(cls, side: float) -> "SupportRegion":
        if not side > 0:
            raise ValueError("side must be positive")
        return cls("centered_square", (float(side),))

    @classmethod
    def disc(cls, radius: float) -> "SupportRegion":
        if not radius > 0:
            raise ValueError("radius must be positive")
        return cls("disc", (float(radius),))

    @classmethod
    def grid_union(cls, K: int, u: float, offset=(0.5, 0.5), origin=(0.0, 0.0)) -> "SupportRegion":
        if K < 1 or not u > 0:
            raise ValueError("need K >= 1 and u > 0")
        return cls("grid_union", (int(K), float(u), tuple(map(float, offset)), tuple(map(float, origin))))

    @classmethod
    def from_measure(cls, shape: str, measure: float) -> "SupportRegion":
        """Disc or centered square of prescribed area."""
        if not measure > 0:
            raise ValueError("measure must be positive")
        if shape == "disc":
            return cls.disc(np.sqrt(measure / np.pi))
        if shape in ("square", "centered_square"):
            return cls.centered_square(np.sqrt(measure))
        raise ValueError(f"unknown shape {shape!r}")

    @property
    def measure(self) -> float:
        if self.shape == "rect":
            (a1, b1), (a2, b2) = self.params
            return (b1 - a1) * (b2 - a2)
        if self.shape == "centered_square":
            return self.params[0] ** 2
        if self.shape == "disc":
            return np.pi * self.params[0] ** 2
        K, u = self.params[0], self.params[1]
        return K * K * u * u

    def cells(self) -> list[tuple]:
        """Rectangles whose disjoint union is U (not available for discs)."""
        if self.shape == "rect":
            return [self.params]
        if self.shape == "centered_square":
            h = self.params[0] / 2
            return [((-h, h), (-h, h))]
        if self.shape == "disc":
            raise ContractError("a disc is not a union of rectangles")
        K, u, o, org = self.params
        out = []
        for k1 in range(K):
            for k2 in range(K):
                c1 = org[0] + u * (k1 + o[0])
                c2 = org[1] + u * (k2 + o[1])
                out.append(((c1 - u / 2, c1 + u / 2), (c2 - u / 2, c2 + u / 2)))
        return out

    def patches(self) -> list[Patch]:
        if self.shape == "disc":
            return [Patch(((0.0, self.params[0]), (0.0, 2 * np.pi)), polar=True)]
        return [Patch(c) for c in self.cells()]

    @property
    def origin_symmetric(self) -> bool:
        if self.shape in ("centered_square", "disc"):
            return True
        cells = self.cells()
        key = lambda c: (round(c[0][0], 12), round(c[0][1], 12), round(c[1][0], 12), round(c[1][1], 12))
        own = {key(c) for c in cells}
        neg = {key(((-b1, -a1), (-b2, -a2))) for (a1, b1), (a2, b2) in cells}
        return own == neg

    def is_rect_union(self) -> bool:
        return self.shape != "disc"

    def bounding_box(self) -> tuple:
        if self.shape == "disc":
            r = self.params[0]
            return ((-r, r), (-r, r))
        cells = self.cells()
        return ((min(c[0][0] for c in cells), max(c[0][1] for c in cells)),
                (min(c[1][0] for c in cells), max(c[1][1] for c in cells)))

    def contains(self, mu1, mu2):
        mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
        if self.shape == "disc":
            return mu1 * mu1 + mu2 * mu2 <= self.params[0] ** 2 * (1 + 1e-14)
        inside = np.zeros(np.broadcast(mu1, mu2).shape, dtype=bool)
        for (a1, b1), (a2, b2) in self.cells():
            inside |= (mu1 >= a1) & (mu1 <= b1) & (mu2 >= a2) & (mu2 <= b2)
        return inside

    def negated(self) -> "SupportRegion":
        if self.shape in ("centered_square", "disc"):
            return self
        if self.shape == "rect":
            (a1, b1), (a2, b2) = self.params
            return SupportRegion.rect((-b1, -a1), (-b2, -a2))
        K, u, o, org = self.params
        return SupportRegion.grid_union(K, u, o, (-org[0] - K * u, -org[1] - K * u))

    def sample_points(self, n_interior: int = 2**12, n_boundary: int = 2**11) -> np.ndarray:
        """Deterministic candidate points: Halton interior, dense boundary, corners."""
        pts = []
        halton = qmc.Halton(d=2, scramble=False).random(n_interior + 1)[1:]
        patches = self.patches()
        per = max(1, n_interior // len(patches))
        for p in patches:
            (a1, b1), (a2, b2) = p.rect
            h = halton[:per]
            if p.polar:
                r = b1 * np.sqrt(h[:, 0])
                t = a2 + (b2 - a2) * h[:, 1]
                pts.append(np.column_stack([r * np.cos(t), r * np.sin(t)]))
            else:
                pts.append(np.column_stack([a1 + (b1 - a1) * h[:, 0], a2 + (b2 - a2) * h[:, 1]]))
        if self.shape == "disc":
            t = np.linspace(0, 2 * np.pi, n_boundary, endpoint=False)
            r = self.params[0]
            pts.append(np.column_stack([r * np.cos(t), r * np.sin(t)]))
            pts.append(np.zeros((1, 2)))
        else:
            m = max(4, n_boundary // (4 * len(patches)))
            s = np.linspace(0, 1, m)
            for (a1, b1), (a2, b2) in self.cells():
                x = a1 + (b1 - a1) * s
                y = a2 + (b2 - a2) * s
                pts += [np.column_stack([x, np.full(m, a2)]), np.column_stack([x, np.full(m, b2)]),
                        np.column_stack([np.full(m, a1), y]), np.column_stack([np.full(m, b1), y])]
            if self.contains(0.0, 0.0):
                pts.append(np.zeros((1, 2)))
        return np.concatenate(pts)

    def gaussian_mass(self, s: float) -> float:
        """Closed form of the integral over U of exp(-pi s |nu|^2)."""
        if self.shape == "disc":
            return float(-np.expm1(-np.pi * s * self.params[0] ** 2) / s)
        c = np.sqrt(np.pi * s)
        total = 0.0
        for (a1, b1), (a2, b2) in self.cells():
            f1 = (special.erf(c * b1) - special.erf(c * a1)) / (2 * np.sqrt(s))
            f2 = (special.erf(c * b2) - special.erf(c * a2)) / (2 * np.sqrt(s))
            total += f1 * f2
        return float(total)


@dataclass(frozen=True)
class Piece:
    patch: Patch
    fn: Callable
    const: complex | None = None

    def values(self, mu1, mu2):
        if self.const is not None:
            return np.full(np.broadcast(mu1, mu2).shape, self.const, dtype=complex)
        return np.asarray(self.fn(mu1, mu2), dtype=complex)


@dataclass(frozen=True)
class CaseTag:
    case: str
    B: Callable | None = None

    def __post_init__(self):
        if self.case not in ("C1", "C2", "generalB"):
            raise ValueError(f"unknown case {self.case!r}")
        if (self.case == "generalB") != (self.B is not None):
            raise ValueError("a general case needs its B handle, and only it")

    @classmethod
    def C1(cls):
        return cls("C1")

    @classmethod
    def C2(cls):
        return cls("C2")

    @classmethod
    def general(cls, B: Callable):
        return cls("generalB", B)

    @property
    def k(self) -> int | None:
        return {"C1": 1, "C2": 2}.get(self.case)


@dataclass(frozen=True, eq=False)
class SpreadingFunction:
    support: SupportRegion
    pieces: tuple
    alpha: float = 0.0
    form: str = "closed_form"
    coefficients: np.ndarray | None = None
    u: float | None = None

    @classmethod
    def piecewise_constant(cls, c, u: float, alpha: float = 0.0, origin=(0.0, 0.0)) -> "SpreadingFunction":
        """Sum of c_k times the indicator of the k-th cell of a K x K grid of side u.

        Coefficients are indexed row-major by (k1, k2), k1 along time.
        """
        c = np.asarray(c, dtype=complex).ravel()
        K = int(round(np.sqrt(c.size)))
        if K * K != c.size:
            raise ValueError("need K^2 coefficients")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        U = SupportRegion.grid_union(K, u, origin=origin)
        pieces = tuple(Piece(Patch(cell), None, complex(ck)) for cell, ck in zip(U.cells(), c))
        c.setflags(write=False)
        return cls(U, pieces, float(alpha_value(alpha)), "piecewise_constant", c, float(u))

    @classmethod
    def closed_form(cls, fn: Callable, support: SupportRegion, alpha: float = 0.0) -> "SpreadingFunction":
        pieces = tuple(Piece(p, fn) for p in support.patches())
        return cls(support, pieces, float(alpha_value(alpha)), "closed_form")

    @property
    def K(self) -> int:
        return self.support.params[0] if self.support.shape == "grid_union" else 1

    def __call__(self, mu1, mu2):
        mu1, mu2 = np.broadcast_arrays(np.asarray(mu1, float), np.asarray(mu2, float))
        out = np.zeros(mu1.shape, dtype=complex)
        for pc in self.pieces:
            if pc.patch.polar:
                inside = self.support.contains(mu1, mu2)
            else:
                (a1, b1), (a2, b2) = pc.patch.rect
                inside = (mu1 >= a1) & (mu1 < b1) & (mu2 >= a2) & (mu2 < b2)
            if np.any(inside):
                out[inside] = pc.values(mu1[inside], mu2[inside])
        return out

    def is_rect_union(self) -> bool:
        return all(not pc.patch.polar for pc in self.pieces)


def _integrate_pieces(S: SpreadingFunction, kernel: Callable, tol: float, max_batch: int | None = None):
    """Sum over pieces of the integral of Sigma(nu) * kernel(nu)."""
    total, err = 0.0, 0.0
    n = len(S.pieces)
    for pc in S.pieces:
        patch = pc.patch

        def f(s, t, pc=pc, patch=patch):
            m1, m2 = patch.map(s, t)
            w = pc.values(m1, m2) * patch.jac(s, t)
            k = np.asarray(kernel(m1, m2))
            return w.reshape(w.shape + (1,) * (k.ndim - w.ndim)) * k

        res = integrate_2d(f, patch.rect, tol / n, max_batch=max_batch)
        total = total + np.asarray(res.value)
        err += res.error_estimate
    return total, err


def spreading_norm(S: SpreadingFunction, q: float, tol: float = 1e-12) -> float:
    """||Sigma||_q; exact for piecewise-constant spreading functions."""
    if not q >= 1:
        raise ValueError("q must be >= 1")
    if S.form == "piecewise_constant":
        c = np.abs(S.coefficients)
        if q == np.inf:
            return float(c.max())
        return float(S.u ** (2 / q) * np.sum(c**q) ** (1 / q))
    if q == np.inf:
        pts = S.support.sample_points()
        return float(np.max(np.abs(S(pts[:, 0], pts[:, 1]))))
    total = 0.0
    for pc in S.pieces:
        f = lambda s, t, pc=pc: np.abs(pc.values(*pc.patch.map(s, t))) ** q * pc.patch.jac(s, t)
        total += integrate_2d(f, pc.patch.rect, tol / len(S.pieces)).value
    return float(total ** (1 / q))


def default_grid(s: Signal | None = None) -> np.ndarray:
    if s is not None and s.kind == "sampled":
        return s.grid
    X, N = DEFAULT_GRID
    return np.linspace(-X, X, N)


def apply(S: SpreadingFunction, s: Signal, accuracy: float = 1e-10, grid=None) -> Signal:
    """(H s)(x) = int Sigma(nu) (S_nu^(alpha) s)(x) d nu, sampled on a uniform grid."""
    if not accuracy > 0:
        raise ValueError("accuracy must be positive")
    x = default_grid(s) if grid is None else np.asarray(grid, float)
    if s.kind == "sampled" and x.shape != s.values.shape:
        raise ValueError("sampled input is applied on its own grid")
    X = float(x[-1])
    if S.form == "piecewise_constant" and not np.any(S.coefficients):
        return Signal.sampled(np.zeros(x.size), X, normalize=False)
    alpha = S.alpha
    kernel = lambda n1, n2: shifted_values(s, n1, n2, alpha, x)
    batch = max(1, 2**21 // (17 * x.size))
    vals, _ = _integrate_pieces(S, kernel, accuracy, max_batch=batch)
    return Signal.sampled(vals, X, normalize=False)


def _phase_kernel(mu):
    m1, m2, scalar = as_points(mu)
    f1, f2 = m1.ravel(), m2.ravel()

    def kernel(n1, n2):
        return np.exp(-2j * np.pi * (n1[..., None] * f2 - f1 * n2[..., None]))

    return kernel, m1.shape, scalar


def weyl_symbol(S: SpreadingFunction, mu, tol: float = 1e-10):
    """L = F_s Sigma at a point or an (n, 2) array of points."""
    total = 0.0
    n = len(S.pieces)
    kernel, shape, scalar = _phase_kernel(mu)
    for pc in S.pieces:
        if pc.patch.polar:
            val, _ = _integrate_pieces(SpreadingFunction(S.support, (pc,), S.alpha), kernel, tol / n)
            val = np.asarray(val).reshape(shape)
        else:
            val = symplectic_fourier(pc.values, mu, pc.patch.rect, tol / n)
        total = total + np.asarray(val)
    out = np.asarray(total)
    return complex(out.ravel()[0]) if scalar else out.reshape(shape)


def adjoint(S: SpreadingFunction) -> SpreadingFunction:
    """Spreading function of H*: conj(Sigma(-mu)) exp(-i 4 pi alpha zeta(mu, mu))."""
    a = S.alpha
    pieces = []
    for pc in S.pieces:
        def fn(m1, m2, pc=pc):
            return np.conj(pc.values(-m1, -m2)) * np.exp(-4j * np.pi * a * m1 * m2)
        if pc.const is not None and a == 0:
            pieces.append(Piece(pc.patch.negated(), None, np.conj(pc.const)))
        else:
            pieces.append(Piece(pc.patch.negated(), fn))
    return SpreadingFunction(S.support.negated(), tuple(pieces), a, "closed_form")


def twist_phase(mu1, mu2, rho1, rho2, alpha: float):
    """phi(mu, rho) of the twisted convolution in polarization alpha."""
    return (alpha + 0.5) * mu1 * rho2 + (alpha - 0.5) * rho1 * mu2 - 2 * alpha * mu1 * mu2


_PAIR_CHUNK = 256


def phase_box_integral(l1, w1, l2, w2, q1, q2, alpha: float, tol: float):
    """int over the box [l1, l1+w1] x [l2, l2+w2] of exp(-2 pi i twist_phase(mu, q)) d mu.

    The mu_2 integral is a sinc; at alpha = 0 so is the mu_1 integral, otherwise
    the remaining smooth mu_1 integral is done by vector-valued quadrature.
    """
    A, B, C = (alpha + 0.5) * q2, (alpha - 0.5) * q1, -2 * alpha

    def inner(m1):
        k = B + C * m1
        return w2 * np.exp(-2j * np.pi * k * (l2 + 0.5 * w2)) * np.sinc(k * w2)

    if C == 0:
        return w1 * np.exp(-2j * np.pi * A * (l1 + 0.5 * w1)) * np.sinc(A * w1) * inner(l1)

    def f(t):
        m1 = l1 + t[:, None] * w1
        return w1 * np.exp(-2j * np.pi * A * m1) * inner(m1)

    return np.asarray(integrate_1d(f, 0.0, 1.0, tol).value)


def _abs_sin_antiderivative(x):
    """int_0^x |sin(pi t)| dt."""
    n = np.floor(x)
    return (2 * n + 1 - np.cos(np.pi * (x - n))) / np.pi


def abs_sin_box_integral(l1, w1, l2, w2, q1, q2, alpha: float, tol: float):
    """int over the box of |sin(pi twist_phase(mu, q))| d mu.

    For fixed mu_1 the phase is affine in mu_2, so the inner integral is a
    difference of the |sin| antiderivative; the mu_1 integral is adaptive.
    """
    def f(t):
        m1 = l1 + t[:, None] * w1
        a = (alpha + 0.5) * m1 * q2
        b = (alpha - 0.5) * q1 - 2 * alpha * m1
        tiny = np.abs(b * w2) < 1e-9
        bs = np.where(tiny, 1.0, b)
        exact = np.abs(_abs_sin_antiderivative(a + bs * (l2 + w2)) - _abs_sin_antiderivative(a + bs * l2)) / np.abs(bs)
        flat = w2 * np.abs(np.sin(np.pi * (a + b * (l2 + 0.5 * w2))))
        return w1 * np.where(tiny, flat, exact)

    return np.asarray(integrate_1d(f, 0.0, 1.0, tol).value)


def _pair_values(Sx: SpreadingFunction, Sy: SpreadingFunction, rho1, rho2, tol: float, weight: Callable,
                 box: Callable | None = None):
    """Sum over piece pairs of int Sigma_X(mu) Sigma_Y(rho - mu) weight(...) d mu, vectorized in rho.

    ``box(l1, w1, l2, w2, q1, q2, alpha, tol)`` integrates the weight over an
    axis-aligned box; when given, pairs of constant pieces use it instead of
    the generic two-dimensional quadrature.
    """
    if Sx.alpha != Sy.alpha:
        raise ContractError("twisted convolution needs equal polarizations")
    if not (Sx.is_rect_union() and Sy.is_rect_union()):
        raise ContractError("twisted convolution is implemented for unions of rectangles")
    r1, r2 = np.asarray(rho1, float).ravel(), np.asarray(rho2, float).ravel()
    if r1.size > _PAIR_CHUNK:
        # the quadratures below are vector-valued in rho; chunks bound their memory
        return np.concatenate([_pair_values(Sx, Sy, r1[i:i + _PAIR_CHUNK], r2[i:i + _PAIR_CHUNK], tol, weight, box)
                               for i in range(0, r1.size, _PAIR_CHUNK)])
    out = np.zeros(r1.size, dtype=complex)
    pairs = [(px, py) for px in Sx.pieces for py in Sy.pieces]
    for px, py in pairs:
        (ax1, bx1), (ax2, bx2) = px.patch.rect
        (ay1, by1), (ay2, by2) = py.patch.rect
        lo1, hi1 = np.maximum(ax1, r1 - by1), np.minimum(bx1, r1 - ay1)
        lo2, hi2 = np.maximum(ax2, r2 - by2), np.minimum(bx2, r2 - ay2)
        live = (hi1 > lo1) & (hi2 > lo2)
        if not np.any(live):
            continue
        l1, w1 = lo1[live], (hi1 - lo1)[live]
        l2, w2 = lo2[live], (hi2 - lo2)[live]
        q1, q2 = r1[live], r2[live]
        if box is not None and px.const is not None and py.const is not None:
            cc = px.const * py.const
            out[live] += cc * box(l1, w1, l2, w2, q1, q2, Sx.alpha, tol / len(pairs) / max(abs(cc), 1e-300))
            continue

        def f(t1, t2, px=px, py=py, l1=l1, w1=w1, l2=l2, w2=w2, q1=q1, q2=q2):
            m1 = l1 + t1[..., None] * w1
            m2 = l2 + t2[..., None] * w2
            val = px.values(m1, m2) * py.values(q1 - m1, q2 - m2)
            return val * weight(m1, m2, q1, q2) * (w1 * w2)

        res = integrate_2d(f, ((0.0, 1.0), (0.0, 1.0)), tol / len(pairs))
        out[live] += np.asarray(res.value)
    return out


def twisted_convolution(Sx: SpreadingFunction, Sy: SpreadingFunction, rho, tol: float = 1e-10):
    """(Sigma_X twisted-convolved with Sigma_Y)(rho): the spreading function of XY."""
    m1, m2, scalar = as_points(rho)
    a = Sx.alpha
    w = lambda u1, u2, q1, q2: np.exp(-2j * np.pi * twist_phase(u1, u2, q1, q2, a))
    out = _pair_values(Sx, Sy, m1, m2, tol, w, phase_box_integral).reshape(m1.shape)
    return complex(out.ravel()[0]) if scalar else out


def _breakpoints(Sx, Sy, axis):
    pts = set()
    for px in Sx.pieces:
        for py in Sy.pieces:
            for a in px.patch.rect[axis]:
                for b in py.patch.rect[axis]:
                    pts.add(round(a + b, 14))
    return sorted(pts)


def compose(Sx: SpreadingFunction, Sy: SpreadingFunction, tol: float = 1e-10) -> SpreadingFunction:
    """Spreading function of the product XY, split into kink-free rectangles."""
    if Sx.alpha != Sy.alpha:
        raise ContractError("composition needs equal polarizations")
    b1, b2 = _breakpoints(Sx, Sy, 0), _breakpoints(Sx, Sy, 1)
    a = Sx.alpha
    w = lambda u1, u2, q1, q2: np.exp(-2j * np.pi * twist_phase(u1, u2, q1, q2, a))

    def fn(r1, r2):
        r1, r2 = np.broadcast_arrays(np.asarray(r1, float), np.asarray(r2, float))
        return _pair_values(Sx, Sy, r1, r2, tol, w, phase_box_integral).reshape(r1.shape)

    pieces = tuple(Piece(Patch(((x0, x1), (y0, y1))), fn)
                   for x0, x1 in zip(b1[:-1], b1[1:]) for y0, y1 in zip(b2[:-1], b2[1:]))
    U = SupportRegion.rect((b1[0], b1[-1]), (b2[0], b2[-1]))
    return SpreadingFunction(U, pieces, a, "composed")


def _b_function(tag: CaseTag, g: Signal | None, gamma: Signal | None, alpha: float, tol: float):
    if tag.case == "C2":
        return None
    if tag.case == "generalB":
        return tag.B
    if g is None or gamma is None:
        raise ContractError("case C1 needs both pulses")
    if g.is_standard_gaussian and gamma.is_standard_gaussian:
        return lambda n1, n2: gaussian_ambiguity(n1, n2, alpha)
    return lambda n1, n2: ambiguity(g, gamma, np.stack(np.broadcast_arrays(n1, n2), axis=-1), alpha, tol)


def lambda_value(S: SpreadingFunction, tag: CaseTag, g: Signal | None, gamma: Signal | None, mu,
                 tol: float = 1e-10):
    """lambda(mu) = F_s(Sigma B)(mu) for the chosen case."""
    B = _b_function(tag, g, gamma, S.alpha, tol * 1e-2)
    if B is None:
        return weyl_symbol(S, mu, tol)
    kernel, shape, scalar = _phase_kernel(mu)
    k = lambda n1, n2: np.asarray(B(n1, n2))[..., None] * kernel(n1, n2)
    val, _ = _integrate_pieces(S, k, tol)
    out = np.asarray(val).reshape(shape)
    return complex(out.ravel()[0]) if scalar else out


def _pnorm_grid(v: np.ndarray, x: np.ndarray, p: float) -> tuple[float, float]:
    """Composite Simpson p-norm plus a two-grid Richardson estimate."""
    w = np.abs(v) ** p
    fine = _sint.simpson(w, x=x)
    coarse = _sint.simpson(w[::2], x=x[::2]) if (x.size - 1) % 4 == 0 else fine
    err_int = abs(fine - coarse)
    val = max(fine, 0.0) ** (1 / p)
    return val, _root_error(fine, err_int, p)


def _root_error(I: float, dI: float, p: float) -> float:
    """Bound on |(I+e)^(1/p) - I^(1/p)| for |e| <= dI (mean value theorem)."""
    if dI == 0:
        return 0.0
    lo = max(I - dI, 0.0)
    crude = dI ** (1 / p)
    if lo > 0:
        return min(crude, dI / (p * lo ** (1 - 1 / p)))
    return crude


def ep_error(S: SpreadingFunction, tag: CaseTag, g: Signal, gamma: Signal, mu, p: float,
             accuracy: float = 1e-8, q: float = 2.0, grid=None) -> tuple[float, float]:
    """E_p(mu) = ||H S_mu gamma - lambda(mu) S_mu g||_p with an error certificate.

    Returns (value, certificate); the certificate is at most
    accuracy * ||Sigma||_q. Standard Gaussian pulses with a piecewise-constant
    channel use the rigorous budget of the Monte-Carlo kernel; everything else
    is evaluated on a sampled grid with a two-grid estimate.
    """
    if not 1 <= p < np.inf:
        raise ValueError("E_p needs 1 <= p < inf")
    if not accuracy > 0:
        raise ValueError("accuracy must be positive")
    mu = as_point(mu)
    if S.form == "piecewise_constant" and not np.any(S.coefficients):
        return 0.0, 0.0
    norm_q = spreading_norm(S, q)
    if (S.form == "piecewise_constant" and tag.case in ("C1", "C2")
            and g.is_standard_gaussian and gamma.is_standard_gaussian):
        from .mc import ep_certified
        origin = S.support.params[3]
        ratio, cert, _ = ep_certified(S.coefficients, S.u, mu, p, q, tag.case, S.alpha, accuracy, origin=origin)
        return ratio * norm_q, cert * norm_q
    return _ep_generic(S, tag, g, gamma, mu, p, accuracy * norm_q, grid)


def _ep_generic(S, tag, g, gamma, mu: PhasePoint, p, target, grid=None, lam=None):
    x = default_grid(gamma if gamma.kind == "sampled" else g) if grid is None else np.asarray(grid, float)
    width = float(x[-1] - x[0])
    gp = g.norm(p)
    a_tol = target / (4 * width ** (1 / p))
    l_tol = target / (4 * max(gp, 1e-300))
    Hs = apply(S, shift(gamma, mu), a_tol, grid=x)
    if lam is None:
        lam = lambda_value(S, tag, g, gamma, mu, l_tol)
    diff = Hs.values - lam * shift(g, mu).on_grid(x)
    val, err_grid = _pnorm_grid(diff, x, p)
    cert = a_tol * width ** (1 / p) + l_tol * gp + err_grid
    if cert > target:
        raise AccuracyError(f"grid estimate {cert:.3g} exceeds the requested {target:.3g}")
    return val, cert


def bound_interference(f_norm: float, p: float, q: float, U_measure: float, c_q: float, L: float) -> float:
    """Interference estimate A_f(p) (|U|(1 - L^2))^(1/max(q', p)) |U|^(1/q) c_q.

    A_f(p) = f_norm * 32^((p-2)/(4p)), f_norm being the p'-norm of the
    interfering pulse. The (1 - L^2) factor is kept as published.
    """
    qp = np.inf if q == 1 else q / (q - 1)
    A = f_norm * 32 ** ((p - 2) / (4 * p))
    expo = 1 / max(qp, p)
    return float(A * (U_measure * (1 - L * L)) ** expo * U_measure ** (1 / q) * c_q)


def sup_over_region(func: Callable, U: SupportRegion, polish: bool = True) -> float:
    """Supremum of a real function over U from deterministic sampling plus polishing."""
    from scipy import optimize

    pts = U.sample_points()
    # chunks bound the memory of vector-valued quadratures inside func
    vals = np.concatenate([np.asarray(func(c[:, 0], c[:, 1]), float).ravel()
                           for c in np.array_split(pts, max(1, len(pts) // 256))])
    best = float(vals.max())
    if not polish:
        return best
    for i in np.argsort(vals)[-4:]:
        start = pts[i]

        def neg(z):
            if not U.contains(z[0], z[1]):
                return np.inf
            return -float(np.asarray(func(np.array([z[0]]), np.array([z[1]])))[0])

        res = optimize.minimize(neg, start, method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 400})
        if U.contains(res.x[0], res.x[1]):
            best = max(best, -res.fun)
    return best
