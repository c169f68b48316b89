"""Noise sensitivity of both observers for linear plants phi(x) = Phi x.

Each estimation-error channel is a SISO system driven by the sensor noise.
The standard observer's channels all have relative degree 1; the
limited-power observer's channel i has relative degree
r'_i = min(i, n-1, rho+n-i+1), so its high-frequency gain rolls off faster.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .canon import Dilations, GainLadder, build_M, prime_triplet, selectors
from .errors import NotHurwitzError, NumericalError
from .matstack import eigvals

MARKOV_TOL = 1e-9
DEFAULT_OMEGAS = np.geomspace(1e3, 1e6, 20)


@dataclass(frozen=True)
class LinearPlant:
    Phi: tuple

    def __post_init__(self):
        phi = tuple(float(v) for v in np.ravel(self.Phi))
        if not phi or not np.all(np.isfinite(phi)):
            raise ValueError("Phi must be a non-empty finite row")
        object.__setattr__(self, "Phi", phi)

    @property
    def n(self) -> int:
        return len(self.Phi)

    @property
    def row(self) -> np.ndarray:
        return np.array(self.Phi)


@dataclass(frozen=True, eq=False)
class SisoSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(-1)
        C = np.asarray(self.C, dtype=float).reshape(-1)
        if A.shape[0] != A.shape[1] or B.size != A.shape[0] or C.size != A.shape[0]:
            raise ValueError(f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def dim(self) -> int:
        return self.A.shape[0]


def rho_index(Phi) -> int:
    """1-based position of the first nonzero entry of Phi (n if none)."""
    phi = np.ravel(Phi)
    nz = np.flatnonzero(phi != 0)
    return int(nz[0]) + 1 if nz.size else len(phi)


def r_prime(i: int, n: int, rho: int) -> int:
    return min(i, n - 1, rho + n - i + 1)


def _require_hurwitz(A, what):
    w = eigvals(A)
    if np.any(w.real >= 0):
        bad = w[np.argmax(w.real)]
        raise NotHurwitzError(f"{what} is not Hurwitz: eigenvalue {bad:.6g}", bad)


def error_system_standard(plant: LinearPlant, K, ell, i: int) -> SisoSystem:
    """Noise-to-(xhat_i - x_i) channel of the standard observer.

    Scaled error e = ell D_n(ell)^-1 (xhat - x), so
    e' = ell (A_n - K_n C_n) e + B_n Phi Theta_n(ell) e + ell K_n nu.
    """
    n = plant.n
    K = np.asarray(K, dtype=float).ravel()
    tri = prime_triplet(n)
    base = tri.A - np.outer(K, tri.C)
    _require_hurwitz(base, "A_n - K_n C_n")
    A = ell * base + tri.B @ (plant.row[None, :] @ Dilations(n, ell).Theta)
    _require_hurwitz(A, "closed standard error matrix")
    C = np.zeros(n)
    C[i - 1] = ell ** (i - 1)
    return SisoSystem(A, ell * K, C)


def error_system_new(plant: LinearPlant, g: GainLadder, ell, i: int) -> SisoSystem:
    """Noise-to-(xhat'_i - x_i) channel of the limited-power observer.

    Coordinates eps_i = ell^(2-i) D_2(ell)^-1 (xi_i - (x_i, x_{i+1})); the
    nonlinearity row is ell^-(n-1) Phi L1 S(ell).
    """
    n = plant.n
    if g.n != n:
        raise ValueError(f"gain ladder is for n={g.n}, plant has n={n}")
    dim = 2 * n - 2
    L1, _ = selectors(n)
    feedback = ell ** (-(n - 1)) * plant.row @ L1 @ Dilations(n, ell).S
    A = ell * build_M(g)
    A[-1, :] += feedback
    _require_hurwitz(A, "closed limited-power error matrix")
    B = np.zeros(dim)
    B[:2] = ell * g.K(1)
    C = np.zeros(dim)
    if i <= n - 1:
        C[2 * (i - 1)] = ell ** (i - 1)
    else:
        C[dim - 1] = ell ** (n - 1)
    return SisoSystem(A, B, C)


def freq_response(sys: SisoSystem, omega) -> complex:
    """C (j omega I - A)^-1 B."""
    Mw = 1j * omega * np.eye(sys.dim) - sys.A
    try:
        x = np.linalg.solve(Mw, sys.B.astype(complex))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"j*omega*I - A is singular at omega = {omega}") from exc
    return complex(sys.C @ x)


def freq_response_mag(sys: SisoSystem, omega) -> float:
    return abs(freq_response(sys, omega))


def markov_parameters(sys: SisoSystem, count=None) -> np.ndarray:
    count = sys.dim if count is None else count
    out, v = [], sys.B.copy()
    for _ in range(count):
        out.append(sys.C @ v)
        v = sys.A @ v
    return np.array(out)


def relative_degree(sys: SisoSystem, tol=MARKOV_TOL) -> int:
    """Smallest k with |C A^(k-1) B| above tol * |C| |A|^(k-1) |B|."""
    nA = np.linalg.norm(sys.A, 2)
    scale = np.linalg.norm(sys.C) * np.linalg.norm(sys.B)
    v = sys.B.copy()
    for k in range(1, sys.dim + 1):
        if abs(sys.C @ v) > tol * scale * nA ** (k - 1):
            return k
        v = sys.A @ v
    raise NumericalError("all Markov parameters vanish: no path from noise to output")


def ratio_slope(plant: LinearPlant, K, g: GainLadder, ell, i: int, omegas=DEFAULT_OMEGAS) -> float:
    """Log-log slope of |F'_i| / |F_i| over the frequency grid."""
    std = error_system_standard(plant, K, ell, i)
    new = error_system_new(plant, g, ell, i)
    omegas = np.asarray(omegas, dtype=float)
    ratio = [freq_response_mag(new, w) / freq_response_mag(std, w) for w in omegas]
    slope, _ = np.polyfit(np.log(omegas), np.log(ratio), 1)
    return float(slope)


def sensitivity_sweep(plant: LinearPlant, K, g: GainLadder, ell, omegas=DEFAULT_OMEGAS):
    """Per-channel magnitudes, ratio slope, relative degrees and r' prediction."""
    rho = rho_index(plant.Phi)
    omegas = np.asarray(omegas, dtype=float)
    channels = []
    for i in range(1, plant.n + 1):
        std = error_system_standard(plant, K, ell, i)
        new = error_system_new(plant, g, ell, i)
        mag_std = np.array([freq_response_mag(std, w) for w in omegas])
        mag_new = np.array([freq_response_mag(new, w) for w in omegas])
        slope, _ = np.polyfit(np.log(omegas), np.log(mag_new / mag_std), 1)
        channels.append(
            {
                "channel": i,
                "omega": omegas,
                "mag_std": mag_std,
                "mag_new": mag_new,
                "ratio": mag_new / mag_std,
                "slope": float(slope),
                "r_std": relative_degree(std),
                "r_new": relative_degree(new),
                "r_prime": r_prime(i, plant.n, rho),
            }
        )
    return channels


def write_sweep_csv(channel: dict, path) -> None:
    i = channel["channel"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", f"mag_std_{i}", f"mag_new_{i}", "ratio"])
        for row in zip(channel["omega"], channel["mag_std"], channel["mag_new"], channel["ratio"]):
            w.writerow([f"{v:.17g}" for v in row])
