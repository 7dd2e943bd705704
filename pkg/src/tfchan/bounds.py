"""Upper bounds on E_p(mu)/||Sigma||_q and the quantities they are built from.

V(nu, x) = |S_nu^(alpha) gamma(x) - B(nu) g(x)| on U and
R(nu) = (1 + |B|^2 - 2 Re(A B*)) chi_U(nu), A the cross-ambiguity of (g, gamma).
Inapplicable bounds evaluate to +inf.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from .channel import CaseTag, SpreadingFunction, SupportRegion, sup_over_region
from .localization import n_r
from .specfun import integrate_2d
from .tfcore import Signal, alpha_value, ambiguity, as_point, gaussian_ambiguity

INAPPLICABLE = math.inf


def dual_exponent(q: float) -> float:
    if q == 1:
        return math.inf
    if q == math.inf:
        return 1.0
    return q / (q - 1)


@dataclass(frozen=True)
class BoundInputs:
    g: Signal
    gamma: Signal
    tag: CaseTag
    U: SupportRegion
    p: float
    q: float
    alpha: float = 0.0

    def __post_init__(self):
        if not 1 <= self.p < math.inf:
            raise ValueError("need 1 <= p < inf")
        if not self.q >= 1:
            raise ValueError("need q >= 1")

    @classmethod
    def gaussian(cls, U: SupportRegion, p: float, q: float, case: str = "C1", alpha: float = 0.0):
        g = Signal.gaussian()
        return cls(g, g, CaseTag(case), U, float(p), float(q), float(alpha_value(alpha)))

    @property
    def q_dual(self) -> float:
        return dual_exponent(self.q)

    @property
    def gaussian_pulses(self) -> bool:
        return self.g.is_standard_gaussian and self.gamma.is_standard_gaussian


@dataclass
class BoundEntry:
    name: str
    value: float
    applicable: bool
    notes: str = ""


@dataclass
class BoundReport:
    entries: list = field(default_factory=list)
    context: dict = field(default_factory=dict)

    def add(self, name: str, value: float, notes: str = ""):
        ok = bool(np.isfinite(value))
        self.entries.append(BoundEntry(name, float(value) if ok else math.inf, ok, notes))

    def __getitem__(self, name: str) -> BoundEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "context": self.context,
            "bounds": [
                {"name": e.name, "value": e.value if e.applicable else None,
                 "applicable": e.applicable, "notes": e.notes}
                for e in self.entries
            ],
        }


def _amb_fn(inputs: BoundInputs, tol: float = 1e-12):
    a = inputs.alpha
    if inputs.gaussian_pulses:
        return lambda n1, n2: gaussian_ambiguity(n1, n2, a)
    g, gm = inputs.g, inputs.gamma
    return lambda n1, n2: ambiguity(g, gm, np.stack(np.broadcast_arrays(n1, n2), axis=-1), a, tol)


def _r_fn(inputs: BoundInputs):
    A = _amb_fn(inputs)
    case = inputs.tag.case
    if case == "C1":
        return lambda n1, n2: np.maximum(1 - np.abs(A(n1, n2)) ** 2, 0.0)
    if case == "C2":
        return lambda n1, n2: np.maximum(2 * (1 - np.real(A(n1, n2))), 0.0)
    B = inputs.tag.B

    def R(n1, n2):
        b = np.asarray(B(n1, n2), complex)
        return np.maximum(1 + np.abs(b) ** 2 - 2 * np.real(A(n1, n2) * np.conj(b)), 0.0)

    return R


def v_sup(inputs: BoundInputs) -> float:
    """Sup of V over U and x: 32^(1/4) for Gaussian pulses, else ||gamma|| + ||B|| ||g||."""
    if inputs.gaussian_pulses:
        return 32**0.25
    if inputs.tag.case in ("C1", "C2"):
        b_sup = 1.0
    else:
        B = inputs.tag.B
        b_sup = sup_over_region(lambda n1, n2: np.abs(B(n1, n2)), inputs.U)
    return inputs.gamma.sup_norm() + b_sup * inputs.g.sup_norm()


def _far_point_sq(U: SupportRegion) -> float:
    if U.shape == "disc":
        return U.params[0] ** 2
    return max(max(a1 * a1, b1 * b1) + max(a2 * a2, b2 * b2) for (a1, b1), (a2, b2) in U.cells())


@dataclass(frozen=True)
class _GradedPatch:
    """Patch with apex at the origin and radial variable r = w^2.

    Triangle (0, P, Q): mu = w^2 (P + v (Q - P)), w, v in [0, 1]. Polar
    sector: mu = R w^2 (cos v, sin v). R vanishes quadratically at the
    origin, so R^s with s < 1 has a cusp there; the squared radial variable
    multiplies it by w^3 and leaves a smooth integrand.
    """

    P: tuple
    Q: tuple | None = None
    rect: tuple = ((0.0, 1.0), (0.0, 1.0))

    def map(self, w, v):
        w2 = w * w
        if self.Q is None:
            R = self.P[0]
            return R * w2 * np.cos(v), R * w2 * np.sin(v)
        (p1, p2), (q1, q2) = self.P, self.Q
        return w2 * (p1 + v * (q1 - p1)), w2 * (p2 + v * (q2 - p2))

    def jac(self, w, v):
        if self.Q is None:
            return 2 * self.P[0] ** 2 * w**3
        (p1, p2), (q1, q2) = self.P, self.Q
        return 2 * abs(p1 * q2 - p2 * q1) * w**3


def _graded_patches(U: SupportRegion) -> list:
    """U.patches(), with pieces touching the origin replaced by origin-graded ones."""
    if U.shape == "disc":
        return [_GradedPatch((U.params[0],), None, ((0.0, 1.0), (0.0, 2 * np.pi)))]
    out = []
    for pt in U.patches():
        (a1, b1), (a2, b2) = pt.rect
        if not (a1 <= 0 <= b1 and a2 <= 0 <= b2):
            out.append(pt)
            continue
        corners = [(a1, a2), (b1, a2), (b1, b2), (a1, b2)]
        for P, Q in zip(corners, corners[1:] + corners[:1]):
            if abs(P[0] * Q[1] - P[1] * Q[0]) > 0:  # skip sides through the origin
                out.append(_GradedPatch(P, Q))
    return out


def r_moments(inputs: BoundInputs, s: float, tol: float = 1e-11) -> float:
    """R_s = ||R||_s over U (a quasi-norm for s < 1).

    ``tol`` bounds the error of int R^s, relative to that integral once it
    exceeds one; R reaches 4 in case C2, so R^s spans many decades for large s.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    U, case, a = inputs.U, inputs.tag.case, inputs.alpha
    closed = inputs.gaussian_pulses and (case == "C1" or (case == "C2" and a == 0))
    k = inputs.tag.k
    if s == math.inf:
        if closed:
            r2 = _far_point_sq(U)
            return 1 - math.exp(-math.pi * r2) if case == "C1" else 2 * (1 - math.exp(-math.pi * r2 / 2))
        return sup_over_region(_r_fn(inputs), U)
    if closed and s == 1:
        return k * (U.measure - U.gaussian_mass(1 / k))
    R = _r_fn(inputs)
    total = 0.0
    patches = _graded_patches(U) if s < 1 else U.patches()
    # generic pulses evaluate A by a vector-valued quadrature per batch; keep batches small
    batch = None if inputs.gaussian_pulses else 64
    fs = [lambda x, y, pt=pt: R(*pt.map(x, y)) ** s * pt.jac(x, y) for pt in patches]
    # a crude pass (initial nodes only) fixes the scale of the integral
    scale = sum(abs(integrate_2d(f, pt.rect, 1e300, max_batch=batch).value) for f, pt in zip(fs, patches))
    abs_tol = tol * max(1.0, scale)
    for f, pt in zip(fs, patches):
        total += integrate_2d(f, pt.rect, abs_tol / len(patches), max_batch=batch).value
    return float(max(total, 0.0) ** (1 / s))


def c_pq(p: float, q: float, R_inf: float, U_measure: float, k: int = 1) -> tuple[float, float]:
    """(C_pq, uniform cap) of the interpolation step; +inf at q = 1."""
    qp = dual_exponent(q)
    if qp == math.inf:
        return INAPPLICABLE, INAPPLICABLE
    if p <= qp:
        return R_inf ** ((qp - p) / (qp * p)), float(k)
    return U_measure ** ((p - qp) / (qp * p)), max(U_measure, 1.0)


def bound_thm2(inputs: BoundInputs) -> float:
    """C^((p-2)/p) ||R||_{q'/p}^(1/p), for p >= 2."""
    p = inputs.p
    if p < 2:
        return INAPPLICABLE
    s = inputs.q_dual / p
    Rs = r_moments(inputs, s)
    return v_sup(inputs) ** ((p - 2) / p) * Rs ** (1 / p)


def bound_thm3(inputs: BoundInputs) -> float:
    """C^((p-2)/p) k (k(|U| - <A_k, chi_U>))^(1/max(q', p)); |U| <= 1, q > 1, p >= 2."""
    p, qp, k = inputs.p, inputs.q_dual, inputs.tag.k
    if k is None or inputs.U.measure > 1 or qp == math.inf or p < 2:
        return INAPPLICABLE
    R1 = r_moments(inputs, 1.0)
    return v_sup(inputs) ** ((p - 2) / p) * k * R1 ** (1 / max(qp, p))


def bound_thm4(inputs: BoundInputs, L: float) -> float:
    """32^((p-2)/(4p)) k (k|U|(1 - L))^(1/max(q', p)) for symmetric U, |U| <= 1."""
    p, qp, k, U = inputs.p, inputs.q_dual, inputs.tag.k, inputs.U
    if k is None or not U.origin_symmetric or U.measure > 1 or qp == math.inf or p < 2:
        return INAPPLICABLE
    return gaussian_localization_bound(U.measure, p, inputs.q, k, L)


def gaussian_localization_bound(U_measure: float, p: float, q: float, k: int, L: float) -> float:
    """The arithmetic form 32^((p-2)/(4p)) k (k|U|(1 - L))^(1/max(q', p))."""
    qp = dual_exponent(q)
    if qp == math.inf:
        return INAPPLICABLE
    return 32 ** ((p - 2) / (4 * p)) * k * (k * U_measure * max(1 - L, 0.0)) ** (1 / max(qp, p))


def gaussian_mean_localization(U: SupportRegion, k: int) -> float:
    """<chi_U/|U|, exp(-pi |nu|^2 / k)>: l(2|U|/k) for centered discs and squares."""
    return U.gaussian_mass(1 / k) / U.measure


def bound_uniform(inputs: BoundInputs) -> float:
    """||V||^((p-2)/p) k^(2/p) |U|^(1/q'), q > 1."""
    qp, p, k = inputs.q_dual, inputs.p, inputs.tag.k
    if qp == math.inf or k is None:
        return INAPPLICABLE
    return v_sup(inputs) ** ((p - 2) / p) * k ** (2 / p) * inputs.U.measure ** (1 / qp)


def _omega_fn(gamma: Signal):
    if gamma.is_standard_gaussian:
        return lambda n1, n2: np.abs(gaussian_ambiguity(n1, n2, 0.0) - 1)
    return lambda n1, n2: np.abs(ambiguity(gamma, gamma, np.stack(np.broadcast_arrays(n1, n2), -1), 0.0, 1e-12) - 1)


def _weighted_l1(S: SpreadingFunction, w, tol: float) -> float:
    total = 0.0
    for pc in S.pieces:
        pt = pc.patch

        def f(x, y, pc=pc, pt=pt):
            m1, m2 = pt.map(x, y)
            return np.abs(pc.values(m1, m2)) * w(m1, m2) * pt.jac(x, y)

        total += integrate_2d(f, pt.rect, tol / len(S.pieces)).value
    return float(total)


def bound_lemma2(S: SpreadingFunction, gamma: Signal, mu, tol: float = 1e-7) -> float:
    """Absolute bound on E_2(mu) for g = gamma and the Weyl-symbol choice of lambda."""
    mu = as_point(mu)
    if S.form == "piecewise_constant" and not np.any(S.coefficients):
        return 0.0
    HH = ch.compose(ch.adjoint(S), S, tol * 1e-2)
    omega = _omega_fn(gamma)
    LH = ch.weyl_symbol(S, mu, tol)
    LHH = ch.weyl_symbol(HH, mu, tol)
    t1 = abs(LHH - abs(LH) ** 2)
    t2 = _weighted_l1(HH, omega, tol)
    t3 = 2 * abs(LH) * _weighted_l1(S, omega, tol)
    return math.sqrt(t1 + t2 + t3)


def kozek_epsilon(gamma: Signal, U: SupportRegion) -> float:
    """sup over U of |A^(0)_{gamma gamma} - 1|."""
    if gamma.is_standard_gaussian:
        return 1 - math.exp(-math.pi * _far_point_sq(U) / 2)
    return sup_over_region(_omega_fn(gamma), U)


def _kozek_applicable(U: SupportRegion) -> bool:
    """Centered full rectangles of measure at most one."""
    if U.measure > 1 or U.shape not in ("rect", "centered_square", "grid_union"):
        return False
    (a1, b1), (a2, b2) = U.bounding_box()
    scale = max(b1 - a1, b2 - a2)
    return abs(a1 + b1) <= 1e-12 * scale and abs(a2 + b2) <= 1e-12 * scale


def bound_kozek(S: SpreadingFunction | None, gamma: Signal, U: SupportRegion,
                tol: float = 1e-7) -> tuple[float, float]:
    """(full absolute bound, simplified ratio bound) for centered rectangles with |U| <= 1."""
    if not _kozek_applicable(U) or (S is not None and S.alpha != 0):
        return INAPPLICABLE, INAPPLICABLE
    eps = kozek_epsilon(gamma, U)
    s = math.sin(math.pi * U.measure / 4)
    simple = math.sqrt(2 * s + 3 * eps)
    if S is None:
        return INAPPLICABLE, simple
    n1 = ch.spreading_norm(S, 1)
    HH = ch.compose(ch.adjoint(S), S, tol * 1e-2)
    nHH = ch.spreading_norm(HH, 1, tol)
    return math.sqrt(2 * s * n1**2 + eps * (nHH + 2 * n1**2)), simple


def critical_size_band(U_measure: float) -> tuple[float, float]:
    """Lower and upper envelope of bound_thm2 at C1, p = q = 2, Gaussian pulses.

    The lower one uses |U| N_2 with both branches of the closed-form N_2,
    i.e. |U| exp(-|U|/e) up to |U| = e and 1 beyond.
    """
    if not U_measure > 0:
        raise ValueError("|U| must be positive")
    cap = U_measure * n_r(U_measure, 2.0)
    return math.sqrt(max(U_measure - cap, 0.0)), math.sqrt(U_measure)


def bound_kozek_c2_comparison(U: SupportRegion) -> float:
    """(2 sup_U (1 - A))^(1/2) for the Gaussian at alpha = 0."""
    return math.sqrt(2 * (1 - math.exp(-math.pi * _far_point_sq(U) / 2)))


def hausdorff_young_constant(p: float) -> float:
    """c_p^2 = p^(1/p) / p'^(1/p') for the two-dimensional phase plane."""
    if p == 1 or p == math.inf:
        return 1.0
    pp = p / (p - 1)
    return p ** (1 / p) / pp ** (1 / pp)


def approx_product_defect(Sx: SpreadingFunction, Sy: SpreadingFunction, p: float = 1.0,
                          tol: float = 1e-8) -> float:
    """2 c_p^2 ||F||_p, a bound on ||L_XY - L_X L_Y||_{p'}."""
    if not 1 <= p <= 2:
        raise ValueError("need 1 <= p <= 2")
    F = _defect_density(Sx, Sy, tol * 1e-2)
    return 2 * hausdorff_young_constant(p) * ch.spreading_norm(F, p, tol)


def _defect_density(Sx: SpreadingFunction, Sy: SpreadingFunction, tol: float) -> SpreadingFunction:
    a = Sx.alpha
    composed = ch.compose(Sx, Sy, tol)
    ax = _abs_spreading(Sx)
    ay = _abs_spreading(Sy)
    w = lambda u1, u2, q1, q2: np.abs(np.sin(np.pi * ch.twist_phase(u1, u2, q1, q2, a)))

    def fn(r1, r2):
        r1, r2 = np.broadcast_arrays(np.asarray(r1, float), np.asarray(r2, float))
        return ch._pair_values(ax, ay, r1, r2, tol, w, ch.abs_sin_box_integral).reshape(r1.shape)

    pieces = tuple(ch.Piece(pc.patch, fn) for pc in composed.pieces)
    return SpreadingFunction(composed.support, pieces, a, "composed")


def _abs_spreading(S: SpreadingFunction) -> SpreadingFunction:
    pieces = tuple(ch.Piece(pc.patch, (lambda m1, m2, pc=pc: np.abs(pc.values(m1, m2))),
                            None if pc.const is None else abs(pc.const)) for pc in S.pieces)
    return SpreadingFunction(S.support, pieces, S.alpha, "closed_form")


def bound_report(inputs: BoundInputs, L: float | None = None, kozek: bool = True) -> BoundReport:
    """All bounds applicable to Gaussian-or-generic pulses on U (no channel needed)."""
    rep = BoundReport(context={
        "case": inputs.tag.case, "p": inputs.p, "q": inputs.q, "alpha": inputs.alpha,
        "U_shape": inputs.U.shape, "U_measure": inputs.U.measure,
    })
    rep.add("thm2", bound_thm2(inputs), "p >= 2")
    rep.add("thm3", bound_thm3(inputs), "|U| <= 1, q > 1, p >= 2")
    if L is not None:
        rep.add("thm4", bound_thm4(inputs, L), f"L = {L:.17g}")
    rep.add("uniform", bound_uniform(inputs), "q > 1")
    if kozek:
        _, simple = bound_kozek(None, inputs.gamma, inputs.U)
        rep.add("kozek_simplified", simple, "ratio form; centered rectangle, |U| <= 1, alpha = 0")
    lo, hi = critical_size_band(inputs.U.measure)
    rep.add("critical_band_lower", lo, "C1, p = q = 2 envelope")
    rep.add("critical_band_upper", hi, "C1, p = q = 2 envelope")
    return rep
