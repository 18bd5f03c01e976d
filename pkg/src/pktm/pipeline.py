"""Survey-scale migration through the MapReduce runtime.

The map record is one trace, the map function is per-trace Kirchhoff
scattering, and the reduced totals are scattered back onto the image grid.
Because per-key totals are exact sums, the result equals
:func:`pktm.kirchhoff.migrate_survey_serial` bit for bit in every mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kirchhoff import MigrationJob, migrate_trace
from .mapreduce import JobConfig, reassemble_image, run_job
from .mapreduce.engine import Observer
from .model import ImageGrid, Survey, Trace


@dataclass(frozen=True)
class MigrationMapFn:
    """Picklable per-trace map function for distributed migration."""

    job: MigrationJob

    def __call__(self, trace: Trace) -> tuple[np.ndarray, np.ndarray]:
        c = migrate_trace(trace, self.job)
        return c.ordinals, c.values


def migrate_survey(
    survey: Survey,
    job: MigrationJob,
    config: JobConfig | None = None,
    *,
    listen: str | None = None,
    spawn_workers: int | None = None,
    observer: Observer | None = None,
) -> ImageGrid:
    """Migrate a survey as one MapReduce job (serial engine by default).

    The job's offset binning governs; the survey's own binning is only used
    when reading data from disk.
    """
    if config is None:
        config = JobConfig()
    totals = run_job(
        list(survey), MigrationMapFn(job), config,
        listen=listen, spawn_workers=spawn_workers, observer=observer)
    return reassemble_image(totals, job.grid)
