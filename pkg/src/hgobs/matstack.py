"""Dense matrix and polynomial numerics used throughout the package.

Matrices are plain ``numpy`` arrays. Polynomials are monic and stored with
coefficients ordered from the highest power down to the constant term, the
same convention as ``numpy.polyval``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotHurwitzError, NumericalError

# a companion eigenvalue counts as real when |Im| <= REAL_TOL * (1 + |Re|)
REAL_TOL = 1e-7


@dataclass(frozen=True)
class Polynomial:
    """Real monic polynomial, coefficients highest degree first."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(np.asarray(self.coeffs, dtype=float)))
        if not c:
            raise ValueError("polynomial needs at least one coefficient")
        if c[0] != 1.0:
            raise ValueError(f"polynomial must be monic, leading coefficient is {c[0]!r}")
        if not all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def monic(cls, coeffs) -> "Polynomial":
        """Normalise an arbitrary coefficient vector by its leading entry."""
        c = np.trim_zeros(np.asarray(coeffs, dtype=float), "f")
        if c.size == 0:
            raise ValueError("zero polynomial has no monic normalisation")
        out = c / c[0]
        out[0] = 1.0
        return cls(tuple(out))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coeffs)

    @property
    def tail(self) -> np.ndarray:
        """Coefficients without the leading 1 (m_1, ..., m_d)."""
        return np.array(self.coeffs[1:])

    def __call__(self, x):
        return np.polyval(self.array, x)

    def __repr__(self):
        return f"Polynomial({list(self.coeffs)})"


def _as_complex(roots) -> np.ndarray:
    arr = np.asarray(roots)
    if arr.ndim == 2 and arr.shape[1] == 2 and not np.iscomplexobj(arr):
        arr = arr[:, 0] + 1j * arr[:, 1]
    return np.atleast_1d(arr).astype(complex)


def is_conjugate_closed(roots, tol=1e-9) -> bool:
    z = _as_complex(roots)
    remaining = list(z[np.abs(z.imag) > tol * (1 + np.abs(z))])
    while remaining:
        r = remaining.pop()
        dists = [abs(np.conj(r) - s) for s in remaining]
        if not dists:
            return False
        j = int(np.argmin(dists))
        if dists[j] > tol * (1 + abs(r)):
            return False
        remaining.pop(j)
    return True


def poly_from_roots(roots) -> Polynomial:
    """Monic polynomial with the given roots.

    ``roots`` may be a sequence of complex numbers or of (re, im) pairs; it
    must be closed under conjugation so that the result is real.
    """
    z = _as_complex(roots)
    if not np.all(np.isfinite(z)):
        raise ValueError("roots must be finite")
    if not is_conjugate_closed(z):
        raise ValueError(f"roots are not closed under complex conjugation: {z}")
    coeffs = np.array([1.0 + 0j])
    for r in z:
        coeffs = np.convolve(coeffs, [1.0, -r])
    return Polynomial(tuple(coeffs.real))


def root_match_error(found, target) -> float:
    """Smallest achievable largest distance over one-to-one pairings of two root sets.

    Bottleneck assignment: binary search over the pairwise distances with a
    bipartite matching test, so repeated roots are paired optimally.
    """
    f = _as_complex(found)
    t = _as_complex(target)
    if len(f) != len(t):
        raise ValueError(f"root counts differ: {len(f)} vs {len(t)}")
    if len(t) == 0:
        return 0.0
    dist = np.abs(t[:, None] - f[None, :])

    def perfect(limit):
        owner = [-1] * len(f)

        def augment(i, seen):
            for j in np.flatnonzero(dist[i] <= limit):
                if not seen[j]:
                    seen[j] = True
                    if owner[j] < 0 or augment(owner[j], seen):
                        owner[j] = i
                        return True
            return False

        return all(augment(i, [False] * len(f)) for i in range(len(t)))

    levels = np.unique(dist)
    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if perfect(levels[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(levels[lo])


def companion(p: Polynomial) -> np.ndarray:
    """Companion matrix whose characteristic polynomial is ``p``."""
    d = p.degree
    C = np.zeros((d, d))
    C[0, :] = -p.tail
    C[1:, :-1] = np.eye(d - 1)
    return C


def _require_square(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def char_poly(m) -> Polynomial:
    """det(lambda*I - m) by the Faddeev-LeVerrier recursion."""
    A = _require_square(m)
    n = A.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    Mk = np.zeros_like(A)
    I = np.eye(n)
    for k in range(1, n + 1):
        Mk = A @ Mk + coeffs[k - 1] * I
        coeffs[k] = -np.trace(A @ Mk) / k
    return Polynomial(tuple(coeffs))


def eigvals(m) -> np.ndarray:
    """All eigenvalues of a real square matrix as a complex array.

    Backed by LAPACK ``geev`` (Hessenberg reduction followed by shifted QR).
    Output is sorted by real part, then imaginary part.
    """
    A = _require_square(m)
    if A.size == 0:
        return np.zeros(0, dtype=complex)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    try:
        w = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"QR iteration did not converge: {exc}") from exc
    return np.sort_complex(w.astype(complex))


def real_roots(p: Polynomial) -> np.ndarray:
    """Real roots of ``p`` in ascending order."""
    if p.degree < 1:
        raise ValueError("real_roots needs degree >= 1")
    if p.degree == 1:
        return np.array([-p.coeffs[1]])
    w = eigvals(companion(p))
    keep = np.abs(w.imag) <= REAL_TOL * (1 + np.abs(w.real))
    return np.sort(w.real[keep])


def routh_first_column(p: Polynomial) -> np.ndarray:
    """First column of the Routh array, stopping at the first zero (or overflowing) pivot."""
    c = p.array
    rows = [c[0::2].copy(), c[1::2].copy()]
    width = len(rows[0])
    rows = [np.pad(r, (0, width - len(r))) for r in rows]
    col = [rows[0][0], rows[1][0]]
    for _ in range(p.degree - 1):
        upper, lower = rows[-2], rows[-1]
        if lower[0] == 0.0:
            break
        nxt = np.zeros(width)
        with np.errstate(over="ignore", invalid="ignore"):
            nxt[:-1] = (lower[0] * upper[1:] - upper[0] * lower[1:]) / lower[0]
        if not np.all(np.isfinite(nxt)):
            # a pivot tiny enough to overflow the next row: treat as zero
            break
        rows.append(nxt)
        col.append(nxt[0])
    return np.array(col)


def is_hurwitz(p: Polynomial) -> bool:
    """True iff every root of ``p`` has strictly negative real part.

    Uses the Routh-Hurwitz table. A zero pivot in the first column (either a
    lone zero or a vanishing row) means a root on or to the right of the
    imaginary axis, so the answer is False in both cases.
    """
    if p.degree < 1:
        raise ValueError("is_hurwitz needs degree >= 1")
    col = routh_first_column(p)
    return len(col) == p.degree + 1 and bool(np.all(col > 0))


def solve_lyapunov(m) -> np.ndarray:
    """Symmetric P with P m + m^T P = -I.

    The n(n+1)/2 independent entries of P are solved from one dense linear
    system, one equation per upper-triangular entry of the identity.
    """
    M = _require_square(m)
    n = M.shape[0]
    w = eigvals(M)
    if np.any(w.real >= 0):
        bad = w[np.argmax(w.real)]
        raise NotHurwitzError(f"matrix is not Hurwitz (eigenvalue {bad:.6g})", bad)
    iu = np.triu_indices(n)
    nunk = len(iu[0])
    system = np.zeros((nunk, nunk))
    for col, (i, j) in enumerate(zip(*iu)):
        E = np.zeros((n, n))
        E[i, j] = E[j, i] = 1.0
        system[:, col] = (E @ M + M.T @ E)[iu]
    rhs = -np.eye(n)[iu]
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Lyapunov system is singular: {exc}") from exc
    P = np.zeros((n, n))
    P[iu] = sol
    P = P + P.T - np.diag(np.diag(P))
    residual = np.linalg.norm(P @ M + M.T @ P + np.eye(n))
    if residual > 1e-8 * n:
        raise NumericalError(f"Lyapunov residual {residual:.3g} exceeds tolerance")
    return P
