"""Fixed-step co-simulation of a plant and any number of observers.

The plant, every observer and the measured output are advanced together as
one ODE with classical RK4. Signals (noise, disturbance) are evaluated at
the RK stage times.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .canon import LIMITED, STANDARD, ObserverSpec, linear_form, selectors
from .errors import DivergenceError, InsufficientDataError
from .matstack import eigvals

DIVERGENCE_LIMIT = 1e12
STEP_GUARD = 0.2
NOISE_GUARD = 0.5


@dataclass(frozen=True)
class SinusoidSignal:
    amplitude: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0 or self.omega < 0:
            raise ValueError("amplitude and frequency must be non-negative")

    def __call__(self, t):
        return self.amplitude * np.sin(self.omega * t + self.phase)


@dataclass(frozen=True)
class DisturbanceSignal:
    """Additive plant disturbance, one optional function of t per component."""

    funcs: tuple = ()
    bounds: tuple = ()

    def __call__(self, t, dim) -> np.ndarray:
        out = np.zeros(dim)
        for i, f in enumerate(self.funcs):
            if f is not None:
                out[i] = f(t)
        return out

    @property
    def active(self) -> bool:
        return any(f is not None for f in self.funcs)

    def check_bounds(self, grid) -> None:
        for i, f in enumerate(self.funcs):
            if f is None:
                continue
            bound = self.bounds[i] if i < len(self.bounds) else math.inf
            peak = max(abs(f(t)) for t in grid)
            if peak > bound:
                raise ValueError(f"disturbance component {i + 1} reaches {peak:.3g} > {bound}")


def sinusoid_disturbance(amplitudes, omegas) -> DisturbanceSignal:
    funcs = tuple(
        None if a == 0 else (lambda t, a=a, w=w: a * math.sin(w * t))
        for a, w in zip(amplitudes, omegas)
    )
    return DisturbanceSignal(funcs, tuple(abs(a) for a in amplitudes))


@dataclass(frozen=True)
class SimConfig:
    h: float
    T: float
    stride: int = 1
    steady_fraction: float = 0.5

    def __post_init__(self):
        if not (self.h > 0 and self.T > 0):
            raise ValueError("step and horizon must be positive")
        if self.stride < 1:
            raise ValueError("record stride must be >= 1")
        if not 0 < self.steady_fraction < 1:
            raise ValueError("steady window fraction must lie in (0, 1)")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.h))

    def max_step(self, ell, lambda_max) -> float:
        return STEP_GUARD / (ell * abs(lambda_max))


def step_guard(cfg: SimConfig, observers: Mapping[str, ObserverSpec]) -> None:
    for label, spec in observers.items():
        lam = np.max(np.abs(eigvals(spec.error_matrix())))
        hmax = cfg.max_step(spec.ell, lam)
        if cfg.h > hmax:
            raise ValueError(
                f"step {cfg.h} exceeds stability guard {hmax:.3g} for observer {label!r}"
            )


def rk4_step(f: Callable, x, t: float, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of x' = f(t, x)."""
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise DivergenceError("non-finite stage value", t)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class SimTrace:
    """Recorded trajectories.

    ``estimates`` maps an estimate name (``xhat``, ``xhatp``, ``xhatpp``,
    optionally prefixed ``label:``) to an array of shape (samples, n).
    Components passed to the metric functions are 1-based.
    """

    t: np.ndarray
    x: np.ndarray
    estimates: dict
    nu: np.ndarray
    states: dict = field(default_factory=dict)
    steady_fraction: float = 0.5

    def error(self, name) -> np.ndarray:
        return self.estimates[name] - self.x

    def error_norm(self, names) -> np.ndarray:
        """Euclidean norm over the stacked errors of one or more estimates."""
        if isinstance(names, str):
            names = [names]
        sq = sum(np.sum(self.error(nm) ** 2, axis=1) for nm in names)
        return np.sqrt(sq)

    def to_csv(self, path, every: int = 1) -> None:
        """Write the trace as CSV, keeping one row in ``every``."""
        n = self.x.shape[1]
        cols = ["t"] + [f"x{i}" for i in range(1, n + 1)]
        blocks = [self.t[:, None], self.x]
        for name, est in self.estimates.items():
            cols += [f"{name}{i}" for i in range(1, n + 1)]
            blocks.append(est)
        for name in self.estimates:
            cols += [f"err_{name}{i}" for i in range(1, n + 1)]
            blocks.append(self.error(name))
        cols.append("nu")
        blocks.append(self.nu[:, None])
        data = np.hstack(blocks)[::every]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in data:
                w.writerow([f"{v:.17g}" for v in row])


def _estimate_names(observers: Mapping[str, ObserverSpec]) -> dict:
    counts = {STANDARD: 0, LIMITED: 0}
    for spec in observers.values():
        counts[spec.kind] += 1
    names = {}
    for label, spec in observers.items():
        prefix = f"{label}:" if counts[spec.kind] > 1 else ""
        if spec.kind == STANDARD:
            names[label] = (prefix + "xhat",)
        else:
            names[label] = (prefix + "xhatp", prefix + "xhatpp")
    return names


def cosimulate(
    plant_rhs: Callable,
    observers,
    noise: SinusoidSignal,
    dist: DisturbanceSignal,
    x0,
    observer_inits,
    cfg: SimConfig,
    *,
    plant_output: Callable | None = None,
) -> SimTrace:
    """Integrate plant and observers in lock step on a fixed grid.

    ``plant_rhs(t, p)`` gives the plant derivative; ``plant_output(p)`` maps
    the plant state to the n-dimensional canonical state x (identity by
    default), whose first entry is the measured output before noise.
    ``observers`` is a mapping label -> ObserverSpec (a plain list gets
    labels ``obs0``, ``obs1``, ...); ``observer_inits`` follows the same
    keys or order.
    """
    if not isinstance(observers, Mapping):
        observers = {f"obs{i}": s for i, s in enumerate(observers)}
    if not isinstance(observer_inits, Mapping):
        observer_inits = dict(zip(observers, observer_inits))
    output = plant_output if plant_output is not None else (lambda p: p)

    step_guard(cfg, observers)
    if noise.amplitude > 0 and noise.omega * cfg.h > NOISE_GUARD:
        raise ValueError(
            f"noise frequency {noise.omega} is under-resolved by step {cfg.h} "
            f"(need omega*h <= {NOISE_GUARD})"
        )

    p0 = np.asarray(x0, dtype=float).ravel()
    n = len(output(p0))
    forms, slices, inits = [], [], [p0]
    offset = len(p0)
    for label, spec in observers.items():
        if spec.n != n:
            raise ValueError(f"observer {label!r} has n={spec.n}, plant has n={n}")
        z0 = np.asarray(observer_inits[label], dtype=float).ravel()
        if z0.shape != (spec.dim,):
            raise ValueError(f"observer {label!r} needs an initial state of size {spec.dim}")
        forms.append((spec, linear_form(spec)))
        slices.append(slice(offset, offset + spec.dim))
        inits.append(z0)
        offset += spec.dim
    state = np.concatenate(inits)
    np_ = len(p0)
    use_dist = dist.active

    def rhs(t, s):
        p = s[:np_]
        dp = plant_rhs(t, p)
        if use_dist:
            dp = dp + dist(t, np_)
        y = output(p)[0] + noise(t)
        parts = [dp]
        for (spec, form), sl in zip(forms, slices):
            z = s[sl]
            dz = form.F @ z + form.g * y
            dz[-1] += spec.phi_s(form.select @ z)
            parts.append(dz)
        return np.concatenate(parts)

    steps = cfg.steps
    idx = list(range(0, steps + 1, cfg.stride))
    if idx[-1] != steps:
        idx.append(steps)
    nrec = len(idx)
    rec_t = np.empty(nrec)
    rec_s = np.empty((nrec, len(state)))
    h = cfg.h
    k = 0
    for step in range(steps + 1):
        t = step * h
        if step == idx[k]:
            rec_t[k] = t
            rec_s[k] = state
            k += 1
        if step == steps:
            break
        state = rk4_step(rhs, state, t, h)
        if np.max(np.abs(state)) > DIVERGENCE_LIMIT:
            raise DivergenceError("state magnitude exceeded 1e12", t + h)

    x = np.array([output(p) for p in rec_s[:, :np_]])
    names = _estimate_names(observers)
    estimates, states = {}, {}
    for (spec, form), sl, label in zip(forms, slices, observers):
        z = rec_s[:, sl]
        states[label] = z
        if spec.kind == STANDARD:
            estimates[names[label][0]] = z.copy()
        else:
            L1, L2 = selectors(n)
            estimates[names[label][0]] = z @ L1.T
            estimates[names[label][1]] = z @ L2.T
    states["plant"] = rec_s[:, :np_]
    return SimTrace(
        t=rec_t,
        x=x,
        estimates=estimates,
        nu=noise(rec_t),
        states=states,
        steady_fraction=cfg.steady_fraction,
    )


def _steady_mask(trace: SimTrace, fraction=None) -> np.ndarray:
    w = trace.steady_fraction if fraction is None else fraction
    t0 = trace.t[-1] - w * (trace.t[-1] - trace.t[0])
    mask = trace.t >= t0
    if not mask.any():
        raise InsufficientDataError("steady window is empty")
    return mask


def asymptotic_error(trace: SimTrace, component: int, estimate="xhat", fraction=None) -> float:
    """sup |estimate_i - x_i| over the final window (approximate limsup)."""
    err = trace.error(estimate)[:, component - 1]
    return float(np.max(np.abs(err[_steady_mask(trace, fraction)])))


def peak_error(trace: SimTrace, estimate="xhat") -> float:
    return float(np.max(trace.error_norm(estimate)))


def decay_fit(trace: SimTrace, estimate="xhat", floor=1e-9, min_samples=10):
    """Least-squares fit of log||e|| = log(c) + rate * t after the peak.

    Only samples with floor <= ||e|| <= 0.1 * peak are used. Returns
    ``(rate, prefactor)``; the rate is negative for a decaying error.
    """
    norm = trace.error_norm(estimate)
    peak = np.max(norm)
    ipk = int(np.argmax(norm))
    t, e = trace.t[ipk:], norm[ipk:]
    mask = (e >= floor) & (e <= 0.1 * peak)
    if mask.sum() < min_samples:
        raise InsufficientDataError(
            f"only {int(mask.sum())} samples in the fitting band, need {min_samples}"
        )
    rate, intercept = np.polyfit(t[mask], np.log(e[mask]), 1)
    return float(rate), float(np.exp(intercept))


def linear_plant_rhs(Phi) -> Callable:
    """x' = A_n x + B_n Phi x for a linear canonical plant."""
    Phi = np.asarray(Phi, dtype=float).ravel()

    def rhs(t, x):
        dx = np.empty_like(x)
        dx[:-1] = x[1:]
        dx[-1] = Phi @ x
        return dx

    return rhs


def parallel_map(fn, jobs: Sequence, workers=None) -> list:
    """Run independent simulations in worker processes, preserving order."""
    from concurrent.futures import ProcessPoolExecutor

    if workers == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))
