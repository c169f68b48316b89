"""Canonical structures: prime-form triplets, dilations, the block-tridiagonal
matrix M, the selector matrices and the two observer vector fields.

Sign convention: both observers inject ``gain * (y - y_hat)`` with positive
gain entries, so the standard error matrix is ``A_n - K_n C_n`` and the
limited-power one is ``M``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np

from .matstack import eigvals

STANDARD = "standard"
LIMITED = "limited"


class PrimeTriplet(NamedTuple):
    n: int
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


def prime_triplet(n: int) -> PrimeTriplet:
    """Upper shift A, last basis vector B (column), first basis vector C (row)."""
    if n < 1:
        raise ValueError(f"prime form needs n >= 1, got {n}")
    A = np.eye(n, k=1)
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = np.zeros((1, n))
    C[0, 0] = 1.0
    return PrimeTriplet(n, A, B, C)


@dataclass(frozen=True)
class GainLadder:
    """The n-1 pairs (k_i1, k_i2), i = 1..n-1."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple((float(a), float(b)) for a, b in self.pairs)
        if not pairs:
            raise ValueError("a gain ladder needs at least one pair (n >= 2)")
        if not np.all(np.isfinite(pairs)):
            raise ValueError("gain ladder entries must be finite")
        object.__setattr__(self, "pairs", pairs)

    @property
    def n(self) -> int:
        return len(self.pairs) + 1

    @property
    def positivity(self) -> bool:
        return all(a > 0 and b > 0 for a, b in self.pairs)

    def K(self, i: int) -> np.ndarray:
        """Column (k_i1, k_i2) for 1-based block index i."""
        return np.array(self.pairs[i - 1])

    def as_array(self) -> np.ndarray:
        return np.array(self.pairs)


@dataclass(frozen=True)
class Dilations:
    """Diagonal scaling matrices parameterised by n and the high gain."""

    n: int
    ell: float

    @cached_property
    def D(self) -> np.ndarray:
        return np.diag(self.ell ** np.arange(1.0, self.n + 1))

    @cached_property
    def D2(self) -> np.ndarray:
        return np.diag([self.ell, self.ell**2])

    @cached_property
    def Gamma(self) -> np.ndarray:
        return np.diag(self.ell ** np.arange(self.n - 1.0, -1.0, -1.0))

    @cached_property
    def Theta(self) -> np.ndarray:
        return np.diag(self.ell ** (np.arange(1.0, self.n + 1) - self.n))

    @cached_property
    def S(self) -> np.ndarray:
        # diag(1/l, 1, l, ..., l^(n-3)) kron D2, size 2n-2
        outer = self.ell ** np.arange(-1.0, self.n - 2.0)
        return np.kron(np.diag(outer), self.D2)


_N_BLOCK = np.array([[0.0, 0.0], [0.0, 1.0]])


def build_M(g: GainLadder) -> np.ndarray:
    """Block-tridiagonal (2n-2)x(2n-2) matrix with blocks E_i, N, Q_i."""
    n = g.n
    M = np.zeros((2 * n - 2, 2 * n - 2))
    for i, (k1, k2) in enumerate(g.pairs):
        r = 2 * i
        M[r : r + 2, r : r + 2] = [[-k1, 1.0], [-k2, 0.0]]
        if i < n - 2:
            M[r : r + 2, r + 2 : r + 4] = _N_BLOCK
        if i > 0:
            M[r : r + 2, r - 2 : r] = [[0.0, k1], [0.0, k2]]
    return M


def selectors(n: int) -> tuple[np.ndarray, np.ndarray]:
    """L1 = blkdiag(C,...,C, I2) and L2 = blkdiag(I2, B^T,...,B^T)."""
    if n < 2:
        raise ValueError("selectors need n >= 2")
    L1 = np.zeros((n, 2 * n - 2))
    L2 = np.zeros((n, 2 * n - 2))
    for i in range(n - 2):
        L1[i, 2 * i] = 1.0
        L2[i + 2, 2 * i + 3] = 1.0
    L1[n - 2 :, 2 * n - 4 :] = np.eye(2)
    L2[:2, :2] = np.eye(2)
    return L1, L2


def saturate(v: float, bound: float) -> float:
    """Clamp ``v`` to [-bound, bound]."""
    if not bound > 0:
        raise ValueError("saturation bound must be positive")
    return min(max(v, -bound), bound)


def _zero_phi(x):
    return 0.0


@dataclass(frozen=True, eq=False)
class ObserverSpec:
    """Configuration of one observer.

    ``gains`` is the K_n vector for the standard observer and a
    :class:`GainLadder` for the limited-power one. ``phi`` maps an n-vector
    estimate to a scalar; it is always evaluated through :func:`saturate`.
    """

    kind: str
    ell: float
    gains: object
    bound: float = np.inf
    phi: Callable = field(default=_zero_phi, compare=False)

    def __post_init__(self):
        if self.kind not in (STANDARD, LIMITED):
            raise ValueError(f"unknown observer kind {self.kind!r}")
        if not self.ell >= 1:
            raise ValueError(f"high gain must satisfy ell >= 1, got {self.ell}")
        if not self.bound > 0:
            raise ValueError("saturation bound must be positive")
        if self.kind == STANDARD:
            K = np.asarray(self.gains, dtype=float).ravel()
            object.__setattr__(self, "gains", K)
        elif not isinstance(self.gains, GainLadder):
            object.__setattr__(self, "gains", GainLadder(self.gains))
        w = eigvals(self.error_matrix())
        if np.any(w.real >= 0):
            raise ValueError(f"error matrix is not Hurwitz: eigenvalues {w}")

    @property
    def n(self) -> int:
        return len(self.gains) if self.kind == STANDARD else self.gains.n

    @property
    def dim(self) -> int:
        """Observer state dimension (n or 2n-2)."""
        return self.n if self.kind == STANDARD else 2 * self.n - 2

    def error_matrix(self) -> np.ndarray:
        """Unscaled error dynamics: A_n - K_n C_n, or M."""
        if self.kind == STANDARD:
            tri = prime_triplet(len(self.gains))
            return tri.A - np.outer(self.gains, tri.C)
        return build_M(self.gains)

    def phi_s(self, x) -> float:
        return saturate(float(self.phi(x)), self.bound)


def standard_observer_rhs(spec: ObserverSpec, xhat, y) -> np.ndarray:
    """A_n xhat + B_n phi_s(xhat) + D_n(ell) K_n (y - C_n xhat)."""
    if spec.kind != STANDARD:
        raise ValueError("standard_observer_rhs needs a standard observer")
    xhat = np.asarray(xhat, dtype=float)
    n = spec.n
    out = np.empty(n)
    out[:-1] = xhat[1:]
    out[-1] = spec.phi_s(xhat)
    out += Dilations(n, spec.ell).D @ spec.gains * (y - xhat[0])
    return out


def innovations(xi, y) -> np.ndarray:
    """e_1 = y - C xi_1 and e_i = B^T xi_{i-1} - C xi_i."""
    xi = np.asarray(xi, dtype=float).reshape(-1, 2)
    e = np.empty(len(xi))
    e[0] = y - xi[0, 0]
    e[1:] = xi[:-1, 1] - xi[1:, 0]
    return e


def limited_observer_rhs(spec: ObserverSpec, xi, y) -> np.ndarray:
    """Block i: A xi_i + N xi_{i+1} + D2 K_i e_i; last block adds B phi_s(L1 xi)."""
    if spec.kind != LIMITED:
        raise ValueError("limited_observer_rhs needs a limited-power observer")
    n = spec.n
    blocks = np.asarray(xi, dtype=float).reshape(n - 1, 2)
    e = innovations(blocks, y)
    D2 = Dilations(n, spec.ell).D2
    L1, _ = selectors(n)
    out = np.zeros((n - 1, 2))
    for i in range(n - 1):
        out[i, 0] = blocks[i, 1]
        if i < n - 2:
            out[i, 1] = blocks[i + 1, 1]
        else:
            out[i, 1] = spec.phi_s(L1 @ blocks.ravel())
        out[i] += D2 @ spec.gains.K(i + 1) * e[i]
    return out.ravel()


class LinearForm(NamedTuple):
    """rhs(state, y) = F @ state + g * y + last * phi_s(select @ state)."""

    F: np.ndarray
    g: np.ndarray
    select: np.ndarray


def linear_form(spec: ObserverSpec) -> LinearForm:
    """Matrix form of either observer, used by the simulator's inner loop."""
    n, dil = spec.n, Dilations(spec.n, spec.ell)
    if spec.kind == STANDARD:
        tri = prime_triplet(n)
        DK = dil.D @ spec.gains
        return LinearForm(tri.A - np.outer(DK, tri.C), DK, np.eye(n))
    m = 2 * n - 2
    F = np.zeros((m, m))
    g = np.zeros(m)
    A2 = np.array([[0.0, 1.0], [0.0, 0.0]])
    for i in range(n - 1):
        r = 2 * i
        DK = dil.D2 @ spec.gains.K(i + 1)
        F[r : r + 2, r : r + 2] = A2
        F[r : r + 2, r] -= DK
        if i < n - 2:
            F[r : r + 2, r + 2 : r + 4] = _N_BLOCK
        if i > 0:
            F[r : r + 2, r - 1] += DK
        else:
            g[:2] = DK
    return LinearForm(F, g, selectors(n)[0])
