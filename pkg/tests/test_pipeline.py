import pickle

import numpy as np

from pktm import (
    JobConfig,
    MigrationMapFn,
    migrate_survey,
    migrate_survey_serial,
    migrate_trace,
)


class TestMigrationMapFn:
    def test_emits_what_migrate_trace_emits(self, small_survey, small_job):
        fn = MigrationMapFn(small_job)
        trace = small_survey.traces[5]
        keys, values = fn(trace)
        c = migrate_trace(trace, small_job)
        assert keys.tobytes() == c.ordinals.tobytes()
        assert values.tobytes() == c.values.tobytes()

    def test_survives_pickling(self, small_survey, small_job):
        fn = pickle.loads(pickle.dumps(MigrationMapFn(small_job)))
        trace = small_survey.traces[0]
        keys, values = fn(trace)
        c = migrate_trace(trace, small_job)
        assert keys.tobytes() == c.ordinals.tobytes()
        assert values.tobytes() == c.values.tobytes()


class TestMigrateSurvey:
    def test_default_engine_matches_serial_oracle(self, small_survey,
                                                  small_job, spill_dir):
        oracle = migrate_survey_serial(small_survey, small_job)
        image = migrate_survey(small_survey, small_job,
                               JobConfig(spill_dir=spill_dir))
        assert image.values.tobytes() == oracle.values.tobytes()

    def test_threaded_with_combiner_matches_oracle(self, small_survey,
                                                   small_job, spill_dir):
        oracle = migrate_survey_serial(small_survey, small_job)
        config = JobConfig(mode="threaded", n_workers=4,
                           combiner_enabled=True, n_partitions=5,
                           chunk_size=7, spill_dir=spill_dir)
        image = migrate_survey(small_survey, small_job, config)
        assert image.values.tobytes() == oracle.values.tobytes()

    def test_image_carries_job_grid(self, small_survey, small_job, spill_dir):
        image = migrate_survey(small_survey, small_job,
                               JobConfig(spill_dir=spill_dir))
        assert image.spec == small_job.grid
        assert image.values.shape == (3, 51, 201)

    def test_observer_is_invoked(self, small_survey, small_job, spill_dir):
        events = []
        migrate_survey(small_survey, small_job,
                       JobConfig(spill_dir=spill_dir, chunk_size=16),
                       observer=events.append)
        kinds = {e.kind for e in events}
        assert "map_task_done" in kinds
        assert "reduce_task_done" in kinds

    def test_nonzero_energy_lands_near_scatterer(self, small_survey,
                                                 small_job, spill_dir):
        image = migrate_survey(small_survey, small_job,
                               JobConfig(spill_dir=spill_dir))
        stacked = image.values.sum(axis=0)
        ix, itau = np.unravel_index(np.argmax(np.abs(stacked)), stacked.shape)
        # scatterer sits at x = 450 m, tau = 0.5 s on a 20 m x 4 ms grid
        assert abs(small_job.grid.x_axis()[ix] - 450.0) <= 40.0
        assert abs(small_job.grid.tau_axis()[itau] - 0.5) <= 0.012
