"""Constructive eigenvalue assignment for the block-tridiagonal matrix M.

Given a monic target of degree 2n-2, the gain pairs are peeled off from the
last block inward. At stage i the target of degree 2i is split into a pair
K_i and a reduced polynomial of degree 2i-2 that becomes the target of stage
i-1; the final quadratic gives K_1 directly.

Coefficient vectors ``m`` below are the non-leading coefficients
(m_1, ..., m_d) of a monic polynomial.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .canon import GainLadder, build_M
from .errors import ConsistencyError, StageError
from .matstack import (
    Polynomial,
    _as_complex,
    char_poly,
    eigvals,
    is_hurwitz,
    real_roots,
    root_match_error,
)

DENOM_TOL = 1e-12
RESIDUAL_TOL = 1e-6


def char_recursion(p_prev: Polynomial, p_prevprev: Polynomial, k1, k1_prev, k2) -> Polynomial:
    """P_i = l(l+k1) P_{i-1} + k2 [P_{i-1} - l(l+k1_prev) P_{i-2}]."""
    if p_prev.degree != p_prevprev.degree + 2:
        raise ValueError(
            f"degree mismatch: {p_prev.degree} should be {p_prevprev.degree} + 2"
        )
    a, b = p_prev.array, p_prevprev.array
    lead = np.polymul([1.0, k1, 0.0], a)
    bracket = np.polysub(a, np.polymul([1.0, k1_prev, 0.0], b))
    return Polynomial.monic(np.polyadd(lead, k2 * bracket))


def ladder_char_poly(g: GainLadder) -> Polynomial:
    """Characteristic polynomial of M(g) through the recursion alone."""
    one = Polynomial((1.0,))
    k11, k12 = g.pairs[0]
    prev2, prev = one, Polynomial((1.0, k11, k12))
    for i in range(1, len(g.pairs)):
        k1, k2 = g.pairs[i]
        prev2, prev = prev, char_recursion(prev, prev2, k1, g.pairs[i - 1][0], k2)
    return prev


def lambda_map(m_head, k1) -> np.ndarray:
    """Solve (I + k1 F) x = m_head - k1 v1, F the down-shift."""
    m = np.asarray(m_head, dtype=float)
    x = np.empty_like(m)
    for j, mj in enumerate(m):
        x[j] = mj - k1 * (x[j - 1] if j else 1.0)
    return x


def sigma1(m_head, k1) -> float:
    """k1 * last(Lambda(m[:2i-2], k1)) - m[2i-1]; m_head holds m_1..m_{2i-1}."""
    m = np.asarray(m_head, dtype=float)
    return k1 * lambda_map(m[:-1], k1)[-1] - m[-1]


def sigma2(m_full, k1, stage=None) -> float:
    """m_{2i} / last(Lambda(m[:2i-2], k1))."""
    m = np.asarray(m_full, dtype=float)
    den = lambda_map(m[:-2], k1)[-1]
    if abs(den) < DENOM_TOL and m[-1] == 0.0:
        # k2 * den = m_2i holds for every k2; take the zero gain
        return 0.0
    if abs(den) < DENOM_TOL:
        raise StageError(f"sigma2 denominator {den:.3g} vanishes at k1 = {k1:.6g}", stage)
    return m[-1] / den


def sigma1_poly(m_head) -> Polynomial:
    """sigma1(m_head, k) as a polynomial in k (monic, degree 2i-1).

    Runs the forward substitution of :func:`lambda_map` on coefficient
    vectors instead of numbers.
    """
    m = np.asarray(m_head, dtype=float)
    prev = np.array([1.0])
    for mj in m[:-1]:
        prev = np.polysub([mj], np.polymul([1.0, 0.0], prev))
    return Polynomial.monic(np.polysub(np.polymul([1.0, 0.0], prev), [m[-1]]))


@dataclass(frozen=True)
class AssignmentStep:
    stage: int
    k1: float
    k2: float
    candidates: tuple
    reduced: Polynomial
    sigma1_residual: float


@dataclass(frozen=True)
class AssignmentReport:
    target: Polynomial
    ladder: GainLadder
    steps: tuple
    residual: float

    @property
    def positivity(self) -> bool:
        return self.ladder.positivity

    def eigenvalues(self) -> np.ndarray:
        return eigvals(build_M(self.ladder))


def _polish(poly: Polynomial, root: float, iters=3) -> float:
    d = np.polyder(poly.array)
    for _ in range(iters):
        slope = np.polyval(d, root)
        if slope == 0:
            break
        step = poly(root) / slope
        if not np.isfinite(step):
            break
        root -= step
    return float(root)


def _sigma1_candidates(s1: Polynomial) -> np.ndarray:
    roots = real_roots(s1)
    if roots.size == 0:
        # odd degree guarantees a real root; it can hide inside a tight
        # complex cluster, so fall back to the most nearly real eigenvalue
        w = np.roots(s1.array)
        roots = np.array([w[np.argmin(np.abs(w.imag))].real])
    polished = sorted(_polish(s1, r) for r in roots)
    merged = []
    for r in polished:
        # a multiple root comes back as a tight cluster
        if merged and abs(r - merged[-1]) <= 1e-6 * (1 + abs(r)):
            continue
        merged.append(r)
    return np.array(merged)


def basic_assign(target: Polynomial, stage=None):
    """One stage: split a degree-2i target into K_i and a degree-(2i-2) reduced target.

    Returns ``((k1, k2), reduced, step)``. Among the real roots of sigma1,
    the smallest k1 > 0 with k2 > 0 is taken; if no root gives a positive
    pair, the root of smallest magnitude is used.
    """
    d = target.degree
    if d < 4 or d % 2:
        raise ValueError(f"basic_assign needs even degree >= 4, got {d}")
    i = d // 2 if stage is None else stage
    m = target.tail
    s1 = sigma1_poly(m[:-1])
    candidates = _sigma1_candidates(s1)

    scored = []
    for k1 in candidates:
        try:
            k2 = sigma2(m, k1, stage=i)
        except StageError:
            continue
        scored.append((k1, k2))
    if not scored:
        raise StageError(f"no usable real root of sigma1 among {candidates}", i)
    positive = [(k1, k2) for k1, k2 in scored if k1 > 0 and k2 > 0]
    if positive:
        k1, k2 = min(positive)
    else:
        k1, k2 = min(scored, key=lambda kk: abs(kk[0]))

    reduced = Polynomial((1.0, *lambda_map(m[:-2], k1)))
    step = AssignmentStep(
        stage=i,
        k1=float(k1),
        k2=float(k2),
        candidates=tuple(float(c) for c in candidates),
        reduced=reduced,
        sigma1_residual=float(abs(sigma1(m[:-1], k1))),
    )
    return (float(k1), float(k2)), reduced, step


def coefficient_residual(p: Polynomial, target: Polynomial) -> float:
    """max |p - target| over coefficients, scaled by 1 + max |target|."""
    return float(np.max(np.abs(p.array - target.array)) / (1.0 + np.max(np.abs(target.array))))


def assign_gains(target: Polynomial) -> AssignmentReport:
    """Gain ladder whose matrix M has characteristic polynomial ``target``."""
    d = target.degree
    if d < 2 or d % 2:
        raise ValueError(f"target degree must be even and >= 2, got {d}")
    if not is_hurwitz(target):
        warnings.warn(
            "target polynomial is not Hurwitz; assigning anyway", RuntimeWarning, stacklevel=2
        )
    n = d // 2 + 1
    pairs = [None] * (n - 1)
    steps = []
    current = target
    for i in range(n - 1, 1, -1):
        pairs[i - 1], current, step = basic_assign(current, stage=i)
        steps.append(step)
    pairs[0] = tuple(current.tail)
    ladder = GainLadder(pairs)
    residual = coefficient_residual(char_poly(build_M(ladder)), target)
    if residual > RESIDUAL_TOL:
        raise ConsistencyError(
            f"char_poly(M) deviates from the target by {residual:.3g} (scaled)"
        )
    return AssignmentReport(target, ladder, tuple(steps), residual)


# -- float-level refinement ---------------------------------------------------
#
# A root of multiplicity m moves like |dp|^(1/m) under a perturbation dp of
# the characteristic polynomial, so rounding the gains to doubles alone
# splits double roots by ~1e-6. Nudging the gains by a few ulps so that the
# exact characteristic polynomial of the stored matrix (and its derivatives)
# vanishes at the repeated targets removes most of that splitting.


def _exact_char_poly(pairs) -> list:
    """Coefficients of det(lI - M) as Fractions, from the float gains exactly."""

    def mul(a, b):
        out = [Fraction(0)] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            for j, y in enumerate(b):
                out[i + j] += x * y
        return out

    def add(a, b):
        k = max(len(a), len(b))
        a = [Fraction(0)] * (k - len(a)) + a
        b = [Fraction(0)] * (k - len(b)) + b
        return [x + y for x, y in zip(a, b)]

    fr = [(Fraction(a), Fraction(b)) for a, b in pairs]
    prev2, prev = [Fraction(1)], [Fraction(1), fr[0][0], fr[0][1]]
    for i in range(1, len(fr)):
        k1, k2 = fr[i]
        quad_prev = mul([Fraction(1), fr[i - 1][0], Fraction(0)], prev2)
        bracket = add(prev, [-c for c in quad_prev])
        nxt = add(mul([Fraction(1), k1, Fraction(0)], prev), [k2 * c for c in bracket])
        prev2, prev = prev, nxt
    return prev


def _horner(coeffs, re, im):
    """Exact p(re + i im) as a (real, imag) pair of Fractions."""
    vr, vi = Fraction(0), Fraction(0)
    for c in coeffs:
        vr, vi = vr * re - vi * im + c, vr * im + vi * re
    return vr, vi


def _root_conditions(roots, tol=1e-9):
    """Distinct roots (upper half plane) with multiplicities."""
    groups = []
    for r in _as_complex(roots):
        if r.imag < -tol:
            continue
        for g in groups:
            if abs(g[0] - r) <= tol * (1 + abs(r)):
                g[1] += 1
                break
        else:
            groups.append([r, 1])
    return [(Fraction(float(r.real)), Fraction(float(r.imag)), m) for r, m in groups]


def _condition_values(pairs, conds) -> np.ndarray:
    p = _exact_char_poly(pairs)
    out = []
    for re, im, mult in conds:
        q = p
        for _ in range(mult):
            vr, vi = _horner(q, re, im)
            out.append(float(vr))
            if im != 0:
                out.append(float(vi))
            d = len(q) - 1
            q = [c * (d - j) for j, c in enumerate(q[:-1])]
    return np.array(out)


def _nudge(x: float, steps: int) -> float:
    direction = np.inf if steps > 0 else -np.inf
    for _ in range(abs(steps)):
        x = float(np.nextafter(x, direction))
    return x


def refine_ladder(report: AssignmentReport, roots, rounds: int = 3, max_ulps: int = 4096) -> AssignmentReport:
    """Shift every gain by a few ulps to best realize ``roots`` in floating point.

    Linearizes the exact conditions p^(k)(r) = 0 (k below the multiplicity
    of r) in ulp units, rounds the least-squares step and keeps it only if
    the eigenvalues of M move closer to ``roots``.
    """
    target = _as_complex(roots)
    conds = _root_conditions(target)
    x = [v for pr in report.ladder.pairs for v in pr]

    def to_pairs(v):
        return [(v[2 * j], v[2 * j + 1]) for j in range(len(v) // 2)]

    def distance(v):
        return root_match_error(eigvals(build_M(GainLadder(to_pairs(v)))), target)

    best, best_err = list(x), distance(x)
    for _ in range(rounds):
        f0 = _condition_values(to_pairs(best), conds)
        J = np.empty((f0.size, len(best)))
        for j in range(len(best)):
            v = list(best)
            v[j] = _nudge(v[j], 1)
            J[:, j] = _condition_values(to_pairs(v), conds) - f0
        step = np.linalg.lstsq(J, -f0, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            break
        step = np.clip(np.round(step), -max_ulps, max_ulps).astype(int)
        if not step.any():
            break
        cand = [_nudge(v, int(s)) for v, s in zip(best, step)]
        err = distance(cand)
        if err >= best_err:
            break
        best, best_err = cand, err
    if best == x:
        return report
    ladder = GainLadder(to_pairs(best))
    residual = coefficient_residual(char_poly(build_M(ladder)), report.target)
    return replace(report, ladder=ladder, residual=residual)
