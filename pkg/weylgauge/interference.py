"""Two-beam interference: fringes, probe-induced gauge shifts and trajectory counting.

Slits sit at x_i = (0, -d_s/2) and x_f = (0, +d_s/2) in the slit plane; the
screen is the line z = d_o with transverse coordinate x_hat.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal

import numpy as np
from scipy import optimize

from . import constants
from .errors import ConfigError, DegenerateStatisticsError
from .utils import TWO_PI, wrap_phase

log = logging.getLogger(__name__)

Mode = Literal["exact", "small-angle"]


@dataclass(frozen=True)
class TwoPathSetup:
    d_s: float
    d_o: float
    p: float
    sigma_i: float = 0.0
    sigma_f: float = 0.0
    flux_term: float = 0.0
    half_width: float | None = None
    samples: int | None = None

    def __post_init__(self):
        for name in ("d_s", "d_o", "p"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ConfigError(f"{name} must be a positive finite number, got {value}")
        if self.half_width is not None and not self.half_width > 0.0:
            raise ConfigError(f"screen half_width must be > 0, got {self.half_width}")
        if self.samples is not None and self.samples < 2:
            raise ConfigError(f"screen samples must be >= 2, got {self.samples}")
        if self.d_s / self.d_o > 0.1:
            log.warning(
                f"d_s/d_o = {self.d_s / self.d_o:.3g} > 0.1; small-angle estimates are unreliable"
            )

    @property
    def delta_sigma(self) -> float:
        return self.sigma_i - self.sigma_f

    @property
    def fringe_spacing(self) -> float:
        """d = 2 pi d_o / (p d_s), i.e. d_s/d_o = dr/d with dr = 2 pi / p."""
        return TWO_PI * self.d_o / (self.p * self.d_s)

    @property
    def screen_half_width(self) -> float:
        if self.half_width is not None:
            return self.half_width
        return constants.SCREEN_FRINGES * self.fringe_spacing

    @property
    def screen_samples(self) -> int:
        return constants.SCREEN_SAMPLES if self.samples is None else self.samples

    def screen(self) -> np.ndarray:
        w = self.screen_half_width
        return np.linspace(-w, w, self.screen_samples)

    @property
    def slit_i(self) -> np.ndarray:
        return np.array([0.0, -0.5 * self.d_s])

    @property
    def slit_f(self) -> np.ndarray:
        return np.array([0.0, 0.5 * self.d_s])


@dataclass(frozen=True)
class ScatterProbe:
    p_ph: float = 0.0
    delta_p: float | None = None

    def __post_init__(self):
        if self.p_ph < 0.0:
            raise ConfigError(f"p_ph must be >= 0, got {self.p_ph}")
        if self.delta_p is not None and self.delta_p < 0.0:
            raise ConfigError(f"delta_p must be >= 0, got {self.delta_p}")

    @property
    def transferred(self) -> float:
        """Statistical average of the momentum transfer, p_ph / 2 unless given."""
        return 0.5 * self.p_ph if self.delta_p is None else self.delta_p


@dataclass(frozen=True)
class MeasurementImpact:
    s: float
    delta_S: float
    visibility: float
    which_path: bool
    delta_S_estimate: float


@dataclass(frozen=True)
class PatternResult:
    x_hat: np.ndarray
    density: np.ndarray
    maxima: list[float]
    d: float
    s: float
    delta_S: float
    visibility: float
    which_path: bool
    flux_term: float = 0.0

    def summary(self) -> dict:
        return {
            "maxima": [float(v) for v in self.maxima],
            "d": self.d,
            "s": self.s,
            "delta_S": self.delta_S,
            "visibility": self.visibility,
            "which_path": self.which_path,
        }


# ---------------------------------------------------------------------------
# Analytic pattern
# ---------------------------------------------------------------------------


def path_length_difference(setup: TwoPathSetup, x_hat, mode: Mode = "exact"):
    """Length via x_i minus length via x_f to the screen point x_hat."""
    x = np.asarray(x_hat, dtype=float)
    if mode == "small-angle":
        out = setup.d_s * x / setup.d_o
    elif mode == "exact":
        half = 0.5 * setup.d_s
        out = np.hypot(setup.d_o, x + half) - np.hypot(setup.d_o, x - half)
    else:
        raise ConfigError(f"unknown path-length mode '{mode}'")
    return float(out) if out.ndim == 0 else out


def beam_phase(setup: TwoPathSetup, x_hat, mode: Mode = "exact"):
    """p dr' + (sigma_i - sigma_f) + e f at the screen."""
    return setup.p * path_length_difference(setup, x_hat, mode) + setup.delta_sigma + setup.flux_term


def _fringe_orders(setup: TwoPathSetup, half_width: float, mode: Mode) -> range:
    lo = beam_phase(setup, -half_width, mode) / TWO_PI
    hi = beam_phase(setup, half_width, mode) / TWO_PI
    return range(math.ceil(lo), math.floor(hi) + 1)


def fringe_positions(
    setup: TwoPathSetup,
    n_range: Iterable[int] | None = None,
    mode: Mode = "exact",
    half_width: float | None = None,
) -> list[float]:
    """Screen points where the beam phase is 2 n pi, one per order n that lands on the screen."""
    w = setup.screen_half_width if half_width is None else half_width
    orders = _fringe_orders(setup, w, mode) if n_range is None else n_range
    scale = setup.d_o / (setup.p * setup.d_s)
    positions = []
    for n in orders:
        target = TWO_PI * n - setup.delta_sigma - setup.flux_term
        guess = scale * target
        if mode == "small-angle":
            if abs(guess) <= w:
                positions.append(guess)
            continue
        if abs(target / setup.p) >= setup.d_s:
            log.debug(f"Fringe order {n} has no exact-geometry root")
            continue

        def residual(x, target=target):
            return setup.p * path_length_difference(setup, x) - target

        if residual(-w) > 0.0 or residual(w) < 0.0:
            log.debug(f"Fringe order {n} falls outside the screen (guess {guess:.6g})")
            continue
        # bracket around the small-angle guess when it is on screen
        lo, hi = -w, w
        if -w < guess < w:
            step = 0.5 * setup.fringe_spacing
            a, b = max(-w, guess - step), min(w, guess + step)
            if residual(a) <= 0.0 <= residual(b):
                lo, hi = a, b
        positions.append(
            optimize.brentq(residual, lo, hi, xtol=1e-14 * max(1.0, w), rtol=4 * np.finfo(float).eps)
        )
    return positions


def measurement_impact(setup: TwoPathSetup, probe: ScatterProbe) -> MeasurementImpact:
    if probe.p_ph == 0.0 and probe.delta_p in (None, 0.0):
        return MeasurementImpact(s=0.0, delta_S=0.0, visibility=1.0, which_path=False, delta_S_estimate=0.0)
    dp = probe.transferred
    if dp > 0.1 * setup.p:
        log.warning(f"delta_p = {dp:g} is not small against p = {setup.p:g}; shift estimates assume it is")
    s = setup.d_o * dp / setup.p
    d = setup.fringe_spacing
    return MeasurementImpact(
        s=s,
        delta_S=0.5 * s * dp,
        visibility=max(0.0, 1.0 - 2.0 * s / d),
        which_path=bool(probe.p_ph > 0.0 and setup.d_s * probe.p_ph >= TWO_PI),
        delta_S_estimate=action_shift_estimate(setup, probe),
    )


def action_shift_estimate(setup: TwoPathSetup, probe: ScatterProbe) -> float:
    """d_o dp^2 / (2 p), the near-equal-path estimate of the beam's action change."""
    dp = probe.transferred
    return setup.d_o * dp * dp / (2.0 * setup.p)


def probed_setup(setup: TwoPathSetup, impact: MeasurementImpact) -> TwoPathSetup:
    """kappa'(x_i) = kappa(x_i) exp(i dS), i.e. sigma_i -> sigma_i - dS."""
    return replace(setup, sigma_i=setup.sigma_i - impact.delta_S)


def density_pattern(
    setup: TwoPathSetup, probe: ScatterProbe | None = None, x_hat=None
) -> PatternResult:
    impact = measurement_impact(setup, probe or ScatterProbe())
    shifted = probed_setup(setup, impact)
    x = setup.screen() if x_hat is None else np.asarray(x_hat, dtype=float)
    density = 1.0 + impact.visibility * np.cos(beam_phase(shifted, x))
    maxima = fringe_positions(shifted) if impact.visibility > 0.0 else []
    return PatternResult(
        x_hat=x,
        density=density,
        maxima=maxima,
        d=setup.fringe_spacing,
        s=impact.s,
        delta_S=impact.delta_S,
        visibility=impact.visibility,
        which_path=impact.which_path,
        flux_term=setup.flux_term,
    )


def flux_shift_rate(setup: TwoPathSetup) -> float:
    """d x_hat / d(e f) of every maximum in the small-angle geometry."""
    return -setup.d_o / (setup.p * setup.d_s)


def central_maximum(setup: TwoPathSetup, mode: Mode = "small-angle") -> float:
    """Maximum nearest the axis; periodic in e f with period 2 pi."""
    offset = wrap_phase(setup.delta_sigma + setup.flux_term)
    centred = replace(setup, sigma_i=offset, sigma_f=0.0, flux_term=0.0)
    found = fringe_positions(centred, [0], mode=mode, half_width=setup.screen_half_width + setup.fringe_spacing)
    if not found:
        raise ConfigError("central maximum lies off the screen")
    return found[0]


def ab_flux_sweep(
    setup: TwoPathSetup, flux_values: Iterable[float], probe: ScatterProbe | None = None
) -> list[PatternResult]:
    results = [density_pattern(replace(setup, flux_term=float(ef)), probe) for ef in flux_values]
    log.debug(f"Flux sweep over {len(results)} values, shift rate {flux_shift_rate(setup):.6g}")
    return results


# ---------------------------------------------------------------------------
# Trajectory counting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MCSampler:
    seed: int
    jitter_scale: float = 0.5
    samples: int = 100_000
    tol_phase: float | None = None
    chunk_size: int | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.samples < 1:
            raise ConfigError(f"mc samples must be >= 1, got {self.samples}")
        if self.jitter_scale < 0.0:
            raise ConfigError(f"mc jitter must be >= 0, got {self.jitter_scale}")
        if self.seed < 0:
            raise ConfigError(f"mc seed must be a non-negative integer, got {self.seed}")

    @property
    def tolerance(self) -> float:
        return constants.MC_TOLERANCE if self.tol_phase is None else self.tol_phase

    @property
    def chunk(self) -> int:
        return constants.MC_CHUNK_SIZE if self.chunk_size is None else self.chunk_size

    @property
    def worker_count(self) -> int:
        return constants.WORKERS if self.workers is None else max(1, self.workers)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray
    accepted: int = field(default=0)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])


def screen_bins(setup: TwoPathSetup) -> np.ndarray:
    w = setup.screen_half_width
    width = setup.fringe_spacing / constants.BINS_PER_FRINGE
    count = max(1, int(round(2.0 * w / width)))
    return np.linspace(-w, w, count + 1)


def _jittered_lengths(setup, x_hat, slit, jitter, rng):
    screen = np.stack([np.full_like(x_hat, setup.d_o), x_hat], axis=-1)
    middle = 0.5 * (slit + screen)
    if jitter > 0.0:
        middle = middle + jitter * rng.standard_normal(middle.shape)
    return np.linalg.norm(middle - slit, axis=-1) + np.linalg.norm(screen - middle, axis=-1)


def _draw_chunk(setup: TwoPathSetup, sampler: MCSampler, seq: np.random.SeedSequence, size: int, edges):
    """One substream: screen draws, jittered polylines through each slit, union phases."""
    rng = np.random.default_rng(seq)
    x_hat = rng.uniform(edges[0], edges[-1], size)
    len_i = _jittered_lengths(setup, x_hat, setup.slit_i, sampler.jitter_scale, rng)
    len_f = _jittered_lengths(setup, x_hat, setup.slit_f, sampler.jitter_scale, rng)
    # x_i -> x_hat followed by x_hat -> x_f retraced: the second leg enters with a minus sign
    phase = setup.p * (len_i - len_f) + setup.delta_sigma + setup.flux_term
    index = np.clip(np.searchsorted(edges, x_hat, side="right") - 1, 0, len(edges) - 2)
    return index, phase


def _chunks(sampler: MCSampler) -> list[tuple[np.random.SeedSequence, int]]:
    size = sampler.chunk
    n_chunks = -(-sampler.samples // size)
    children = np.random.SeedSequence(sampler.seed).spawn(n_chunks)
    sizes = [size] * (n_chunks - 1) + [sampler.samples - size * (n_chunks - 1)]
    return list(zip(children, sizes))


def _map_chunks(fn, sampler: MCSampler):
    chunks = _chunks(sampler)
    if sampler.worker_count == 1 or len(chunks) == 1:
        return [fn(seq, size) for seq, size in chunks]
    with ThreadPoolExecutor(max_workers=sampler.worker_count) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))


def mc_density(setup: TwoPathSetup, sampler: MCSampler) -> Histogram:
    """Count physical two-beam unions per screen bin, normalised to unit mean.

    Each chunk of draws has its own SeedSequence child, and per-chunk integer
    counts are summed, so the histogram does not depend on the worker count.
    """
    edges = screen_bins(setup)
    nbins = len(edges) - 1
    tol = sampler.tolerance

    def count(seq, size):
        index, phase = _draw_chunk(setup, sampler, seq, size, edges)
        accepted = np.abs(wrap_phase(phase)) < tol
        return np.bincount(index[accepted], minlength=nbins)

    counts = np.zeros(nbins, dtype=np.int64)
    for part in _map_chunks(count, sampler):
        counts += part
    total = int(counts.sum())
    if total == 0:
        raise DegenerateStatisticsError(
            f"no sampled union was physical within tol_phase={tol:g} over {sampler.samples} draws"
        )
    log.debug(f"Counting estimator accepted {total} of {sampler.samples} draws")
    return Histogram(edges=edges, counts=counts, density=counts / counts.mean(), accepted=total)


def mc_phase_sum_density(setup: TwoPathSetup, sampler: MCSampler) -> Histogram:
    """Per-bin equal-weight average of exp(i Phi): D = 1 + <cos Phi>."""
    edges = screen_bins(setup)
    nbins = len(edges) - 1

    def accumulate(seq, size):
        index, phase = _draw_chunk(setup, sampler, seq, size, edges)
        return (
            np.bincount(index, minlength=nbins),
            np.bincount(index, weights=np.cos(phase), minlength=nbins),
        )

    counts = np.zeros(nbins, dtype=np.int64)
    sums = np.zeros(nbins)
    for part_counts, part_sums in _map_chunks(accumulate, sampler):
        counts += part_counts
        sums += part_sums
    if not np.any(counts):
        raise DegenerateStatisticsError("phase-sum estimator received no samples")
    with np.errstate(invalid="ignore", divide="ignore"):
        density = np.where(counts > 0, 1.0 + sums / np.maximum(counts, 1), np.nan)
    return Histogram(edges=edges, counts=counts, density=density, accepted=int(counts.sum()))


def histogram_modes(hist: Histogram, setup: TwoPathSetup, expected: Iterable[float]) -> list[float]:
    """Count-weighted centre of the histogram within half a fringe of each expected maximum."""
    centers = hist.centers
    half = 0.5 * setup.fringe_spacing
    modes = []
    for x in expected:
        window = np.abs(centers - x) < half
        weights = hist.counts[window]
        if weights.sum() == 0:
            modes.append(float("nan"))
            continue
        modes.append(float(np.average(centers[window], weights=weights)))
    return modes
