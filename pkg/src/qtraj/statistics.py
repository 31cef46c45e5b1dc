"""
Ensemble statistics: initial-condition sampling, intensity histograms,
fringe visibility, comparison against the analytic reduced density and the
finite-difference continuity check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks
from scipy.special import erfc

from .decoherence import SlitLabel
from .dynamics import final_positions
from .errors import NoFringes
from .velocity_field import FieldContext, reduced_current, reduced_density
from .wavepacket import GaussianPacket

# Sub-samples per bin when averaging the analytic density over a bin.
_BIN_QUADRATURE = 16


@dataclass
class IntensityHistogram:
    """Binned final positions.

    ``density`` is normalized over the in-range counts, so
    ``sum(density * widths) == 1``; out-of-range trajectories are counted in
    ``n_underflow`` / ``n_overflow`` and excluded from ``n_total``.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray
    n_total: int
    n_underflow: int = 0
    n_overflow: int = 0

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def bin_widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def integral(self) -> float:
        return float(np.sum(self.density * self.bin_widths))


@dataclass
class ComparisonReport:
    l1_error: float
    linf_error: float
    visibility_measured: float
    visibility_analytic: float
    fringes_measured: bool = True
    fringes_analytic: bool = True

    def as_dict(self) -> dict:
        return {
            "l1_error": self.l1_error,
            "linf_error": self.linf_error,
            "visibility_measured": self.visibility_measured,
            "visibility_analytic": self.visibility_analytic,
            "fringes_measured": self.fringes_measured,
            "fringes_analytic": self.fringes_analytic,
        }


def sample_initial_conditions(p1: GaussianPacket, p2: GaussianPacket, c1, c2, n: int, seed) -> list:
    """Draw ``n`` initial ``(x0, SlitLabel)`` pairs at the slit plane.

    Each sample goes through slit 1 with probability ``|c1|^2`` and its
    position is drawn from that slit's ``|psi_j(x, 0)|^2``. The interference
    term of the initial density is neglected. When the packets sit on opposite
    sides of x = 0, draws that land on the wrong side are redrawn so slit
    labels agree with the sign of ``x0``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    w1 = abs(c1) ** 2
    w2 = abs(c2) ** 2
    p_slit1 = w1 / (w1 + w2)
    rng = np.random.default_rng(seed)
    on1 = rng.random(n) < p_slit1
    centers = np.where(on1, p1.center_x0, p2.center_x0)
    widths = np.where(on1, p1.sigma0, p2.sigma0)
    x0 = rng.normal(centers, widths)
    if p1.center_x0 > 0 > p2.center_x0:
        wrong = np.flatnonzero(np.where(on1, x0 <= 0, x0 >= 0))
        while wrong.size:
            x0[wrong] = rng.normal(centers[wrong], widths[wrong])
            wrong = wrong[np.where(on1[wrong], x0[wrong] <= 0, x0[wrong] >= 0)]
    labels = np.where(on1, SlitLabel.SLIT1, SlitLabel.SLIT2)
    return [(float(x), SlitLabel(int(s))) for x, s in zip(x0, labels)]


def default_histogram_range(p1: GaussianPacket, p2: GaussianPacket, t: float) -> tuple[float, float]:
    """Symmetric range of 6 x (largest spread at ``t`` plus slit separation)."""
    half = 6.0 * (max(float(p1.spread(t)), float(p2.spread(t))) + abs(p1.center_x0 - p2.center_x0))
    mid = 0.5 * (p1.center_x0 + p2.center_x0)
    return mid - half, mid + half


def build_histogram(trajectories_or_positions, bin_width: float, range) -> IntensityHistogram:
    """Histogram of final positions with bins of ``bin_width`` over ``range``.

    Accepts a list of trajectories (aborted ones are skipped) or an array of
    positions. The range is widened to a whole number of bins about its centre.
    """
    items = trajectories_or_positions
    if len(items) and hasattr(items[0], "x_final"):
        x = final_positions(items)
    else:
        x = np.asarray(items, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no positions to histogram")
    lo, hi = float(range[0]), float(range[1])
    if not (hi > lo) or bin_width <= 0:
        raise ValueError("need hi > lo and bin_width > 0")
    n_bins = int(np.ceil((hi - lo) / bin_width - 1e-9))
    mid = 0.5 * (lo + hi)
    edges = mid + (np.arange(n_bins + 1) - 0.5 * n_bins) * bin_width
    counts, _ = np.histogram(x, edges)
    n_under = int(np.sum(x < edges[0]))
    n_over = int(np.sum(x > edges[-1]))
    n_in = int(counts.sum())
    density = counts / (n_in * np.diff(edges)) if n_in else np.zeros(n_bins)
    return IntensityHistogram(edges, counts, density, n_in, n_under, n_over)


def histogram_from_bins(trajectories_or_positions, n_bins: int, range) -> IntensityHistogram:
    lo, hi = range
    return build_histogram(trajectories_or_positions, (hi - lo) / n_bins, range)


def _as_profile(hist_or_density):
    if isinstance(hist_or_density, IntensityHistogram):
        return hist_or_density.bin_centers, hist_or_density.density
    x, y = hist_or_density
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def _local_extrema(y, min_prominence):
    if min_prominence > 0:
        thr = min_prominence * np.max(y)
        return find_peaks(y, prominence=thr)[0], find_peaks(-y, prominence=thr)[0]
    # Plateaus are collapsed to their first point.
    keep = np.concatenate(([True], np.diff(y) != 0))
    idx = np.flatnonzero(keep)
    z = y[idx]
    if z.size < 3:
        return np.array([], int), np.array([], int)
    d = np.sign(np.diff(z))
    maxima = idx[1:-1][(d[:-1] > 0) & (d[1:] < 0)]
    minima = idx[1:-1][(d[:-1] < 0) & (d[1:] > 0)]
    return maxima, minima


def fringe_visibility(hist_or_density, window=None, min_prominence: float = 0.0) -> float:
    """Visibility ``(I_max - I_min) / (I_max + I_min)`` of the central fringe.

    ``hist_or_density`` is an :class:`IntensityHistogram` or an ``(x, I)`` pair.
    The central maximum is the interior local maximum closest to the window
    centre; ``I_min`` is the nearest interior local minimum next to it.
    ``min_prominence`` (fraction of the peak value) suppresses noise extrema.

    Raises
    ------
    NoFringes
        If the window holds no interior maximum with an adjacent minimum.
    """
    x, y = _as_profile(hist_or_density)
    if window is not None:
        sel = (x >= window[0]) & (x <= window[1])
        x, y = x[sel], y[sel]
        centre = 0.5 * (window[0] + window[1])
    else:
        centre = 0.5 * (x[0] + x[-1]) if x.size else 0.0
    maxima, minima = _local_extrema(y, min_prominence)
    if maxima.size == 0 or minima.size == 0:
        raise NoFringes("no interior maximum/minimum pair in window")
    i_max = maxima[np.argmin(np.abs(x[maxima] - centre))]
    i_min = minima[np.argmin(np.abs(minima - i_max))]
    hi, lo = y[i_max], y[i_min]
    if hi + lo <= 0:
        raise NoFringes("zero intensity in window")
    return float((hi - lo) / (hi + lo))


def bin_averaged_density(ctx: FieldContext, edges, t: float) -> np.ndarray:
    """Analytic reduced density averaged over each bin (Gauss-Legendre)."""
    edges = np.asarray(edges, dtype=float)
    nodes, weights = np.polynomial.legendre.leggauss(_BIN_QUADRATURE)
    lo, hi = edges[:-1, None], edges[1:, None]
    xs = 0.5 * (hi + lo) + 0.5 * (hi - lo) * nodes[None, :]
    vals = reduced_density(ctx, xs, np.full(xs.shape, float(t)))
    return 0.5 * vals @ weights


def compare_to_analytic(
    hist: IntensityHistogram,
    ctx: FieldContext,
    t: float,
    window=None,
    min_prominence: float = 0.05,
) -> ComparisonReport:
    """Distances between a trajectory histogram and the analytic reduced density.

    ``l1_error`` integrates ``|hist - rho|`` over the bins with ``rho``
    averaged over each bin; ``linf_error`` is the largest bin deviation. Only
    valid for unscreened contexts.
    """
    if ctx.screening_enabled and ctx.model.screening:
        raise ValueError("analytic comparison needs an unscreened context")
    target = bin_averaged_density(ctx, hist.bin_edges, t)
    diff = np.abs(hist.density - target)
    l1 = float(np.sum(diff * hist.bin_widths))
    linf = float(np.max(diff))

    lo, hi = hist.bin_edges[0], hist.bin_edges[-1]
    xs = np.linspace(lo, hi, 4001)
    rho = reduced_density(ctx, xs, np.full(xs.shape, float(t)))
    try:
        vis_analytic, fr_a = fringe_visibility((xs, rho), window), True
    except NoFringes:
        vis_analytic, fr_a = 0.0, False
    try:
        vis_measured, fr_m = fringe_visibility(hist, window, min_prominence), True
    except NoFringes:
        vis_measured, fr_m = 0.0, False
    return ComparisonReport(l1, linf, vis_measured, vis_analytic, fr_m, fr_a)


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform grid ``x`` (m) by ``t`` (s) for the continuity check."""

    x_lo: float
    x_hi: float
    nx: int
    t_lo: float
    t_hi: float
    nt: int

    @property
    def x(self):
        return np.linspace(self.x_lo, self.x_hi, self.nx)

    @property
    def t(self):
        return np.linspace(self.t_lo, self.t_hi, self.nt)

    def refined(self, factor: int = 2) -> "SpaceTimeGrid":
        """Same extent with spacings divided by ``factor``."""
        return SpaceTimeGrid(
            self.x_lo, self.x_hi, (self.nx - 1) * factor + 1, self.t_lo, self.t_hi, (self.nt - 1) * factor + 1
        )


def _tail_mass(packet, lo, hi, t):
    s = packet.spread(t) * np.sqrt(2.0)
    c = packet.center(t)
    return 0.5 * (erfc((c - lo) / s) + erfc((hi - c) / s))


def continuity_residual(ctx: FieldContext, grid: SpaceTimeGrid, current=None, density=None) -> float:
    """Max-norm of ``d rho/dt + d J/dx`` by central differences on ``grid``.

    ``current`` / ``density`` override the analytic ``J(x, t)`` / ``rho(x, t)``
    callables; used to check that a corrupted field is detected.
    """
    if ctx.screening_enabled and ctx.model.screening:
        raise ValueError("continuity check needs an unscreened context")
    if grid.nx < 3 or grid.nt < 3:
        raise ValueError("grid needs at least 3 points per axis")
    for packet in (ctx.packet1, ctx.packet2):
        if np.max(_tail_mass(packet, grid.x_lo, grid.x_hi, grid.t)) > 1e-8:
            raise ValueError("grid does not cover the density support to 1e-8 tail mass")
    current = current or (lambda x, t: reduced_current(ctx, x, t))
    density = density or (lambda x, t: reduced_density(ctx, x, t))
    X, T = np.meshgrid(grid.x, grid.t, indexing="ij")
    rho = density(X, T)
    J = current(X, T)
    dx = (grid.x_hi - grid.x_lo) / (grid.nx - 1)
    dt = (grid.t_hi - grid.t_lo) / (grid.nt - 1)
    drho_dt = (rho[1:-1, 2:] - rho[1:-1, :-2]) / (2 * dt)
    dJ_dx = (J[2:, 1:-1] - J[:-2, 1:-1]) / (2 * dx)
    return float(np.max(np.abs(drho_dt + dJ_dx)))


def residual_convergence(ctx: FieldContext, grid: SpaceTimeGrid, levels: int = 3, current=None):
    """Residuals under repeated paired halving of dx and dt, and observed orders.

    Returns ``(residuals, orders)`` with ``orders[k] = log2(r[k] / r[k+1])``.
    """
    residuals = []
    g = grid
    for _ in range(levels):
        residuals.append(continuity_residual(ctx, g, current=current))
        g = g.refined(2)
    r = np.array(residuals)
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log2(r[:-1] / r[1:])
    return r, orders


def central_density(hist: IntensityHistogram, x: float = 0.0) -> float:
    """Histogram density at ``x``; the mean of both neighbours when ``x`` is a bin edge."""
    edges = hist.bin_edges
    if not (edges[0] <= x <= edges[-1]):
        raise ValueError("x outside histogram range")
    i = int(np.searchsorted(edges, x, side="right")) - 1
    on_edge = np.isclose(edges, x, rtol=0, atol=1e-9 * np.min(hist.bin_widths))
    if np.any(on_edge):
        j = int(np.flatnonzero(on_edge)[0])
        neighbours = [k for k in (j - 1, j) if 0 <= k < hist.density.size]
        return float(np.mean(hist.density[neighbours]))
    return float(hist.density[min(i, hist.density.size - 1)])
