"""
Trajectory integration through the reduced velocity field.

Trajectories are advanced with the Dormand-Prince 5(4) embedded pair. The
ensemble integrator is vectorized: every trajectory keeps its own time and
step size, and all unfinished trajectories attempt a step together. Steps
whose stages touch a density node (see ``EPS_NODE``) are rejected and
retried with a smaller step; a trajectory whose step drops below
``dt_min`` is aborted.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .decoherence import SlitLabel
from .errors import EnsembleFailure, StepUnderflow
from .velocity_field import FieldContext, batch_field

log = logging.getLogger(__name__)

#: Fraction of aborted trajectories above which an ensemble run fails.
MAX_ABORT_FRACTION = 0.005

#: Trajectories per vectorized batch. Fixed so results do not depend on threads.
CHUNK_SIZE = 8192

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_NODE_FACTOR = 0.25


@dataclass(frozen=True)
class IntegratorSettings:
    t_final: float
    dt_init: float = 1e-5
    dt_min: float = 1e-13
    dt_max: float = 1e-3
    tol_rel: float = 1e-8
    tol_abs: float = 1e-11

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if self.tol_rel <= 0 or self.tol_abs <= 0:
            raise ValueError("tolerances must be positive")
        if not (self.t_final > 0 and np.isfinite(self.t_final)):
            raise ValueError("t_final must be positive and finite")


@dataclass
class Trajectory:
    """Transverse path ``x(t)`` of one particle.

    ``t`` and ``x`` hold the accepted integration steps (or just the end points
    when samples were not kept). ``crossing_times`` is filled from every
    accepted step either way.
    """

    t: np.ndarray
    x: np.ndarray
    slit: SlitLabel
    crossing_times: list = field(default_factory=list)
    aborted: bool = False

    @classmethod
    def from_samples(cls, t, x, slit, aborted=False):
        """Build a trajectory from sampled points, detecting axis crossings."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        if t.ndim != 1 or t.shape != x.shape or t.size == 0:
            raise ValueError("t and x must be 1-D arrays of equal, non-zero length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        return cls(t, x, SlitLabel(slit), detect_crossings(t, x), aborted)

    @property
    def samples(self):
        return list(zip(self.t.tolist(), self.x.tolist()))

    @property
    def crossed_axis(self) -> bool:
        return bool(self.crossing_times)

    @property
    def x0(self) -> float:
        return float(self.x[0])

    @property
    def x_final(self) -> float:
        return float(self.x[-1])


def detect_crossings(t, x) -> list[float]:
    """Times at which the sampled path changes sign, by linear interpolation."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    out = []
    last_sign = 0.0
    for i, xi in enumerate(x):
        s = np.sign(xi)
        if s == 0:
            continue
        if last_sign and s != last_sign:
            x_prev, t_prev = x[i - 1], t[i - 1]
            denom = x_prev - xi
            frac = x_prev / denom if denom != 0 else 0.0
            out.append(float(t_prev + frac * (t[i] - t_prev)))
        last_sign = s
    return out


@dataclass
class _BatchResult:
    x_final: np.ndarray
    t_reached: np.ndarray
    aborted: np.ndarray
    crossings: dict
    samples: dict
    n_steps: np.ndarray


def _integrate_batch(ctx, x0, labels, settings, keep):
    """Integrate all ``x0`` to ``settings.t_final`` simultaneously.

    ``keep`` is a boolean mask of trajectories whose accepted steps are recorded.
    """
    n = x0.size
    t_final = settings.t_final
    x = x0.astype(float).copy()
    t = np.zeros(n)
    dt = np.full(n, settings.dt_init)
    aborted = np.zeros(n, dtype=bool)
    n_steps = np.zeros(n, dtype=np.int64)
    last_sign = np.sign(x)
    crossings: dict[int, list[float]] = {}
    samples = {int(i): ([0.0], [float(x[i])]) for i in np.flatnonzero(keep)}

    def rhs(idx, xs, ts):
        return batch_field(ctx, xs, ts, labels[idx])

    k_first, ok_first = rhs(np.arange(n), x, t)
    active = np.arange(n)
    stale = ~ok_first
    k_first = np.where(ok_first, k_first, 0.0)

    while active.size:
        xa = x[active]
        ta = t[active]
        remaining = t_final - ta
        h = np.minimum(dt[active], remaining)
        last = h >= remaining
        h = np.where(last, remaining, h)

        # Recompute the first stage where FSAL is unavailable.
        if np.any(stale[active]):
            redo = np.flatnonzero(stale[active])
            kv, okv = rhs(active[redo], xa[redo], ta[redo])
            k_first[active[redo]] = kv
            stale[active[redo]] = ~okv
        ok = ~stale[active]
        ks = [k_first[active]]
        for s in range(1, 7):
            xs = xa + h * sum(a * k for a, k in zip(_A[s], ks) if a != 0.0)
            kv, okv = rhs(active, xs, ta + _C[s] * h)
            ks.append(kv)
            ok &= okv
        x_new = xa + h * sum(b * k for b, k in zip(_B5, ks) if b != 0.0)
        err = h * sum(e * k for e, k in zip(_E, ks))
        scale = settings.tol_abs + settings.tol_rel * np.maximum(np.abs(xa), np.abs(x_new))
        # Error per unit step: local error <= tol * h / t_final keeps the
        # accumulated error over the flight within tol.
        err_norm = np.abs(err) / (scale * (h / t_final))
        ok &= np.isfinite(x_new)
        accept = ok & (err_norm <= 1.0)

        with np.errstate(divide="ignore"):
            factor = np.clip(_SAFETY * err_norm ** -0.25, _MIN_FACTOR, _MAX_FACTOR)
        factor = np.where(ok, factor, _NODE_FACTOR)
        h_next = np.minimum(h * factor, settings.dt_max)

        # Accepted steps.
        acc = np.flatnonzero(accept)
        if acc.size:
            idx = active[acc]
            x_old = xa[acc]
            x_acc = x_new[acc]
            t_old = ta[acc]
            t_acc = np.where(last[acc], t_final, t_old + h[acc])
            x[idx] = x_acc
            t[idx] = t_acc
            n_steps[idx] += 1
            k_first[idx] = ks[6][acc]
            new_sign = np.sign(x_acc)
            flipped = (new_sign != 0) & (last_sign[idx] != 0) & (new_sign != last_sign[idx])
            for j in np.flatnonzero(flipped):
                i = int(idx[j])
                denom = x_old[j] - x_acc[j]
                frac = x_old[j] / denom if denom != 0 else 0.0
                crossings.setdefault(i, []).append(float(t_old[j] + frac * (t_acc[j] - t_old[j])))
            nz = new_sign != 0
            last_sign[idx[nz]] = new_sign[nz]
            for j in np.flatnonzero(keep[idx]):
                ts_list, xs_list = samples[int(idx[j])]
                ts_list.append(float(t_acc[j]))
                xs_list.append(float(x_acc[j]))

        # Step-size bookkeeping and underflow detection.
        rej = np.flatnonzero(~accept)
        underflow = rej[h_next[rej] < settings.dt_min]
        if underflow.size:
            aborted[active[underflow]] = True
        dt[active] = np.maximum(h_next, settings.dt_min)

        done = (t[active] >= t_final) | aborted[active]
        active = active[~done]

    return _BatchResult(x, t, aborted, crossings, samples, n_steps)


def _coerce_initial_conditions(initial_conditions):
    if len(initial_conditions) == 0:
        raise ValueError("need at least one initial condition")
    x0 = np.array([float(ic[0]) for ic in initial_conditions])
    labels = np.array([int(SlitLabel(ic[1])) for ic in initial_conditions], dtype=np.int8)
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial positions must be finite")
    return x0, labels


def integrate_trajectory(ctx: FieldContext, x0: float, slit: SlitLabel, settings: IntegratorSettings) -> Trajectory:
    """Integrate one trajectory from ``(0, x0)`` to ``settings.t_final``.

    Raises
    ------
    StepUnderflow
        If the step size drops below ``settings.dt_min``.
    """
    x0_arr, labels = _coerce_initial_conditions([(x0, slit)])
    res = _integrate_batch(ctx.for_slit(slit), x0_arr, labels, settings, np.ones(1, dtype=bool))
    ts, xs = res.samples[0]
    if res.aborted[0]:
        raise StepUnderflow(
            f"step size fell below dt_min={settings.dt_min:g} s at t={ts[-1]:.6g} s, x={xs[-1]:.6g} m",
            t=ts[-1],
            x=xs[-1],
        )
    return Trajectory(np.array(ts), np.array(xs), SlitLabel(slit), res.crossings.get(0, []))


def run_ensemble(
    ctx: FieldContext,
    initial_conditions,
    settings: IntegratorSettings,
    keep_samples=True,
    threads: int = 1,
    max_abort_fraction: float = MAX_ABORT_FRACTION,
) -> list[Trajectory]:
    """Integrate one trajectory per ``(x0, slit)`` initial condition.

    ``ctx`` is a template: with screening enabled, each trajectory uses its own
    slit as the traversed one. ``keep_samples`` is True (record every accepted
    step), False (end points only) or a collection of indices to record.
    Aborted trajectories are returned with ``aborted=True``; if more than
    ``max_abort_fraction`` of them abort, :class:`EnsembleFailure` is raised.
    Output order matches input order.
    """
    x0, labels = _coerce_initial_conditions(initial_conditions)
    n = x0.size
    if keep_samples is True:
        keep = np.ones(n, dtype=bool)
    elif keep_samples is False or keep_samples is None:
        keep = np.zeros(n, dtype=bool)
    else:
        keep = np.zeros(n, dtype=bool)
        keep[np.asarray(list(keep_samples), dtype=int)] = True

    starts = list(range(0, n, CHUNK_SIZE))

    def work(start):
        sl = slice(start, start + CHUNK_SIZE)
        return _integrate_batch(ctx, x0[sl], labels[sl], settings, keep[sl])

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, starts))
    else:
        results = [work(s) for s in starts]

    trajectories = []
    for start, res in zip(starts, results):
        for j in range(res.x_final.size):
            i = start + j
            if j in res.samples:
                ts, xs = res.samples[j]
                t_arr, x_arr = np.array(ts), np.array(xs)
            else:
                t_arr = np.array([0.0, res.t_reached[j]])
                x_arr = np.array([x0[i], res.x_final[j]])
            trajectories.append(
                Trajectory(t_arr, x_arr, SlitLabel(int(labels[i])), res.crossings.get(j, []), bool(res.aborted[j]))
            )

    n_aborted = sum(tr.aborted for tr in trajectories)
    if n_aborted:
        log.warning("%d of %d trajectories aborted (step underflow)", n_aborted, n)
    if n_aborted > max_abort_fraction * n:
        raise EnsembleFailure(
            f"{n_aborted} of {n} trajectories aborted (limit {max_abort_fraction:.2%})", n_aborted, n
        )
    return trajectories


def crossing_count(trajectories) -> tuple[int, float]:
    """Number and fraction of non-aborted trajectories that crossed x = 0."""
    valid = [tr for tr in trajectories if not tr.aborted]
    if not valid:
        return 0, 0.0
    n_cross = sum(tr.crossed_axis for tr in valid)
    return n_cross, n_cross / len(valid)


def final_positions(trajectories) -> np.ndarray:
    """Final positions of the non-aborted trajectories."""
    return np.array([tr.x_final for tr in trajectories if not tr.aborted])
