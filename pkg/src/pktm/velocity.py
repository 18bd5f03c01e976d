"""Velocity analysis built on migration focusing.

A correct migration velocity collapses a diffractor to one flat, tight
response, so image energy concentrates and the common-offset panels align.
Both effects are measured here: total squared amplitude of the stack as the
focusing objective, and per-offset-bin lag of the image column at the
strongest lateral position as residual moveout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .kirchhoff import MigrationJob, migrate_survey_serial, stack_offsets
from .mapreduce import JobConfig
from .model import GridSpec, ImageGrid, OffsetBinning, Survey, VelocityModel
from .traveltime import KernelParams


@dataclass(frozen=True)
class MoveoutResult:
    """Per-bin sample lags of image columns against offset bin 0.

    ``degenerate`` flags bins whose correlation was meaningless (all-zero
    column or reference); their lag is reported as 0.
    """

    lateral_index: int
    lags: tuple[int, ...]
    degenerate: tuple[bool, ...]

    @property
    def max_abs_lag(self) -> int:
        return max(abs(lag) for lag in self.lags)


@dataclass(frozen=True)
class ScanResult:
    candidates: tuple[float, ...]
    metrics: tuple[float, ...]
    best_velocity: float


@dataclass(frozen=True)
class LoopIteration:
    iteration: int
    velocity: float
    focus: float
    max_abs_lag: int
    lags: tuple[int, ...]
    scanned: bool
    next_velocity: float


@dataclass(frozen=True)
class LoopReport:
    iterations: tuple[LoopIteration, ...]
    final_velocity: float
    converged: bool


def focus_metric(stacked: np.ndarray) -> float:
    """Total squared amplitude of a stacked section (higher is better)."""
    stacked = np.asarray(stacked, dtype=np.float64)
    return float(np.sum(stacked * stacked))


def _crosscorr_at(col: np.ndarray, ref: np.ndarray, s: int) -> float:
    """sum_t col[t + s] * ref[t] over the overlapping range."""
    n = col.shape[0]
    if s >= 0:
        return float(np.dot(col[s:], ref[:n - s])) if s < n else 0.0
    return float(np.dot(col[:s], ref[-s:]))


def residual_moveout(
    image: ImageGrid,
    lateral_index: int | None = None,
    max_lag: int = 20,
) -> MoveoutResult:
    """Lag of each common-offset column against bin 0 at one lateral index.

    When ``lateral_index`` is omitted, the column with the most stacked
    energy is analyzed.  Each lag maximizes the cross-correlation over
    [-max_lag, max_lag]; bin 0 is its own reference, so its lag is 0, and
    ties prefer the smaller magnitude, then the negative lag.
    """
    if max_lag < 0:
        raise ValueError(f"max_lag must be >= 0, got {max_lag}")
    values = image.values
    if lateral_index is None:
        stacked = values.sum(axis=0)
        lateral_index = int(np.argmax(np.sum(stacked * stacked, axis=1)))
    elif not 0 <= lateral_index < image.nx:
        raise IndexError(
            f"lateral index {lateral_index} out of range [0, {image.nx})")
    ref = values[0, lateral_index, :]
    ref_dead = not np.any(ref)
    # visit lags in (|s|, s) order so the first strict maximum realizes the
    # tie-break: smaller magnitude first, negative before positive
    lag_order = sorted(range(-max_lag, max_lag + 1), key=lambda s: (abs(s), s))
    lags = []
    degenerate = []
    for b in range(values.shape[0]):
        col = values[b, lateral_index, :]
        if ref_dead or not np.any(col):
            lags.append(0)
            degenerate.append(True)
            continue
        best_s, best_c = 0, -np.inf
        for s in lag_order:
            c = _crosscorr_at(col, ref, s)
            if c > best_c:
                best_s, best_c = s, c
        lags.append(best_s)
        degenerate.append(False)
    return MoveoutResult(lateral_index, tuple(lags), tuple(degenerate))


def _migrate(survey: Survey, job: MigrationJob, config: JobConfig | None) -> ImageGrid:
    if config is None:
        return migrate_survey_serial(survey, job)
    from .pipeline import migrate_survey
    return migrate_survey(survey, job, config)


def constant_velocity_scan(
    survey: Survey,
    grid: GridSpec,
    params: KernelParams,
    binning: OffsetBinning,
    candidates: Sequence[float],
    config: JobConfig | None = None,
    progress: Callable[[float, float], None] | None = None,
) -> ScanResult:
    """Migrate with each candidate velocity and rank by stack focusing.

    Ties select the lower velocity.  ``progress`` (if given) receives each
    (velocity, metric) as soon as it is known.
    """
    cands = [float(v) for v in candidates]
    if not cands:
        raise ValueError("candidate list must not be empty")
    if any(not (np.isfinite(v) and v > 0.0) for v in cands):
        raise ValueError("candidate velocities must be finite and > 0")
    metrics = []
    for v in cands:
        job = MigrationJob(grid, VelocityModel.constant(v), params, binning)
        metric = focus_metric(stack_offsets(_migrate(survey, job, config)))
        metrics.append(metric)
        if progress:
            progress(v, metric)
    best_velocity, _ = max(
        zip(cands, metrics), key=lambda vm: (vm[1], -vm[0]))
    return ScanResult(tuple(cands), tuple(metrics), best_velocity)


def update_velocity(model: VelocityModel, best_velocity: float) -> VelocityModel:
    """Replace a model with the single-knot constant picked by a scan."""
    del model  # the scan picks an unconditional replacement
    return VelocityModel.constant(best_velocity)


def imaging_loop(
    survey: Survey,
    grid: GridSpec,
    params: KernelParams,
    binning: OffsetBinning,
    initial_velocity: float,
    candidates: Sequence[float],
    lag_tolerance: int = 1,
    max_iterations: int = 10,
    max_lag: int = 20,
    config: JobConfig | None = None,
) -> LoopReport:
    """Iterate migrate -> residual moveout -> rescan until panels align.

    Each pass migrates with the current velocity, measures per-bin lags at
    the strongest lateral position, and stops once the largest magnitude is
    within ``lag_tolerance`` samples.  Otherwise the candidate scan picks
    the next velocity; a scan that cannot improve on the current velocity
    ends the loop unconverged.
    """
    if max_iterations < 1:
        raise ValueError(f"max_iterations must be >= 1, got {max_iterations}")
    vel = float(initial_velocity)
    if not (np.isfinite(vel) and vel > 0.0):
        raise ValueError(f"initial velocity must be finite and > 0, got {vel}")
    iterations: list[LoopIteration] = []
    converged = False
    for it in range(max_iterations):
        job = MigrationJob(grid, VelocityModel.constant(vel), params, binning)
        image = _migrate(survey, job, config)
        focus = focus_metric(stack_offsets(image))
        rmo = residual_moveout(image, max_lag=max_lag)
        if rmo.max_abs_lag <= lag_tolerance:
            iterations.append(LoopIteration(
                it, vel, focus, rmo.max_abs_lag, rmo.lags, False, vel))
            converged = True
            break
        scan = constant_velocity_scan(
            survey, grid, params, binning, candidates, config)
        iterations.append(LoopIteration(
            it, vel, focus, rmo.max_abs_lag, rmo.lags, True,
            scan.best_velocity))
        if scan.best_velocity == vel:
            break
        vel = scan.best_velocity
    return LoopReport(tuple(iterations), vel, converged)
