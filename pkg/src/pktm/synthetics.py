"""Synthetic survey generation: regular 2-D acquisition geometries and
kinematic point-scatterer data with a Ricker wavelet.

Events are placed at the same double-square-root times the migration kernel
evaluates, so a synthetic diffractor focuses at its true position when
migrated with the velocity used to build it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import OffsetBinning, Survey, Trace, TraceHeader, VelocityModel
from .traveltime import dsr_total_time


@dataclass(frozen=True)
class Scatterer:
    """Point diffractor at lateral position ``x`` and two-way image time ``tau``."""

    x: float
    tau: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.x):
            raise ValueError("x must be finite")
        if not (np.isfinite(self.tau) and self.tau >= 0.0):
            raise ValueError(f"tau must be finite and >= 0, got {self.tau}")
        if not np.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")


@dataclass(frozen=True)
class RickerWavelet:
    """Zero-phase Ricker pulse; ``peak_frequency`` in Hz."""

    peak_frequency: float

    def __post_init__(self):
        if not (np.isfinite(self.peak_frequency) and self.peak_frequency > 0.0):
            raise ValueError(
                f"peak_frequency must be finite and > 0, got {self.peak_frequency}"
            )

    def __call__(self, t):
        return ricker(self.peak_frequency, t)


def ricker(peak_frequency: float, t):
    """Ricker wavelet (1 - 2 pi^2 f^2 t^2) exp(-pi^2 f^2 t^2).

    Accepts scalar or array ``t``.  First zero crossing sits at
    ``1 / (pi * f * sqrt(2))``.
    """
    if peak_frequency <= 0.0:
        raise ValueError(f"peak_frequency must be > 0, got {peak_frequency}")
    a = (np.pi * peak_frequency * np.asarray(t, dtype=np.float64)) ** 2
    out = (1.0 - 2.0 * a) * np.exp(-a)
    return float(out) if np.ndim(t) == 0 else out


def make_acquisition(
    n_sources: int,
    source_x0: float,
    source_dx: float,
    n_receivers: int,
    receiver_x0: float,
    receiver_dx: float,
    t0: float,
    dt: float,
    n_samples: int,
) -> list[TraceHeader]:
    """Cross every source with every receiver on two regular lines.

    Headers come back source-major with ``trace_id = s * n_receivers + r``,
    all sharing one time axis.
    """
    if n_sources < 1:
        raise ValueError(f"n_sources must be >= 1, got {n_sources}")
    if n_receivers < 1:
        raise ValueError(f"n_receivers must be >= 1, got {n_receivers}")
    headers = []
    for s in range(n_sources):
        sx = source_x0 + s * source_dx
        for r in range(n_receivers):
            rx = receiver_x0 + r * receiver_dx
            headers.append(TraceHeader(
                trace_id=s * n_receivers + r,
                source_x=sx,
                receiver_x=rx,
                t0=t0,
                dt=dt,
                n_samples=n_samples,
            ))
    return headers


def synth_survey(
    headers: list[TraceHeader],
    scatterers: list[Scatterer],
    vel: VelocityModel,
    wavelet: RickerWavelet,
    binning: OffsetBinning | None = None,
) -> Survey:
    """Superpose one wavelet-shaped event per (header, scatterer) pair.

    Each event is centered at the double-square-root traveltime from the
    header's source to the scatterer and back to the receiver; amplitudes
    add linearly.  Swapping source and receiver positions yields identical
    samples because the traveltime is symmetric in them.
    """
    traces = []
    for h in headers:
        t_axis = h.time_axis()
        samples = np.zeros(h.n_samples, dtype=np.float64)
        for sc in scatterers:
            t_star = dsr_total_time(sc.x, sc.tau, h.source_x, h.receiver_x, vel)
            samples += sc.amplitude * wavelet(t_axis - t_star)
        traces.append(Trace(h, samples))
    return Survey(traces, binning if binning is not None else OffsetBinning.single())
