"""Prestack Kirchhoff time migration with an exact adjoint, run on a
deterministic MapReduce runtime sized for a single workstation.

The package migrates binned common-offset gathers by diffraction summation,
models data back with the exact transpose operator, and reduces per-cell
contributions with correctly rounded exact sums so that serial, threaded,
and multiprocess executions agree bit for bit.
"""

from .kirchhoff import (
    Contributions,
    MigrationJob,
    forward_model,
    interp_sample,
    migrate_survey_serial,
    migrate_trace,
    stack_offsets,
)
from .mapreduce import (
    ContractViolationError,
    JobConfig,
    JobError,
    KeyedTotals,
    combine,
    partition_of,
    reassemble_image,
    run_job,
)
from .model import (
    CellKey,
    ConfigurationError,
    Contribution,
    GridSpec,
    ImageGrid,
    OffsetBinning,
    Survey,
    Trace,
    TraceHeader,
    VelocityModel,
    cell_key_ordinal,
    estimate_flops,
    ordinal_to_cell_key,
)
from .pipeline import MigrationMapFn, migrate_survey
from .synthetics import RickerWavelet, Scatterer, make_acquisition, ricker, synth_survey
from .traveltime import (
    KernelParams,
    WeightMode,
    dsr_total_time,
    one_way_time,
    weight,
    within_aperture,
)
from .velocity import (
    LoopIteration,
    LoopReport,
    MoveoutResult,
    ScanResult,
    constant_velocity_scan,
    focus_metric,
    imaging_loop,
    residual_moveout,
    update_velocity,
)

__version__ = "0.1.0"

__all__ = [
    "CellKey",
    "ConfigurationError",
    "ContractViolationError",
    "Contribution",
    "Contributions",
    "GridSpec",
    "ImageGrid",
    "JobConfig",
    "JobError",
    "KernelParams",
    "KeyedTotals",
    "LoopIteration",
    "LoopReport",
    "MigrationJob",
    "MigrationMapFn",
    "MoveoutResult",
    "OffsetBinning",
    "RickerWavelet",
    "ScanResult",
    "Scatterer",
    "Survey",
    "Trace",
    "TraceHeader",
    "VelocityModel",
    "WeightMode",
    "cell_key_ordinal",
    "combine",
    "constant_velocity_scan",
    "dsr_total_time",
    "estimate_flops",
    "focus_metric",
    "forward_model",
    "imaging_loop",
    "interp_sample",
    "make_acquisition",
    "migrate_survey",
    "migrate_survey_serial",
    "migrate_trace",
    "one_way_time",
    "ordinal_to_cell_key",
    "partition_of",
    "reassemble_image",
    "ricker",
    "residual_moveout",
    "run_job",
    "stack_offsets",
    "synth_survey",
    "update_velocity",
    "weight",
    "within_aperture",
]
