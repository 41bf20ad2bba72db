import os
import sys
import tempfile
import unittest

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from backend.utils.seeding import replication_seed
from models.dist import ProcTimeDist
from models.paths import DisciplineKind
from models.system import HeavyTrafficParams
from services import experiment_service, file_service, htseq_service, srpt_engine
from services.dist_service import SFunction
from services.srpt_engine import JobSet

HAND_TRACE = [(0.0, 3.0), (1.0, 1.0)]
HAND_GRID = np.arange(10) * 0.5  # 0, 0.5, ..., 4.5


class TestJobSet(unittest.TestCase):
    def test_srpt_preemption_and_aggregates(self):
        jobs = JobSet()
        jobs.arrive(3.0)
        jobs.advance(1.0)
        jobs.arrive(1.0)
        self.assertEqual(jobs.served_residual, 1.0)
        self.assertEqual(jobs.total_count, 2)
        count, work = jobs.recompute()
        self.assertEqual(count, 2)
        self.assertAlmostEqual(work, jobs.total_work, places=12)

    def test_fifo_keeps_head_of_line(self):
        jobs = JobSet(DisciplineKind.FIFO)
        jobs.arrive(3.0)
        jobs.arrive(1.0)
        self.assertEqual(jobs.served_residual, 3.0)
        self.assertEqual(jobs.served_seq, 0)

    def test_rejects_nonpositive_residual(self):
        with self.assertRaises(ValueError):
            JobSet().add(0.0)


class TestHandTraces(unittest.TestCase):
    def test_srpt_trace(self):
        path = srpt_engine.inject_trace(HAND_TRACE, DisciplineKind.SRPT, HAND_GRID, [1.0])
        # t:   0  .5   1  1.5  2  2.5  3  3.5  4  4.5
        np.testing.assert_array_equal(path.q, [1, 1, 2, 2, 1, 1, 1, 1, 0, 0])
        self.assertEqual(path.w[path.grid_index(1.0)], 3.0)
        self.assertEqual(path.w[path.grid_index(2.0)], 2.0)
        self.assertEqual(path.w[path.grid_index(4.0)], 0.0)

    def test_fifo_trace(self):
        path = srpt_engine.inject_trace(HAND_TRACE, DisciplineKind.FIFO, HAND_GRID, [1.0])
        np.testing.assert_array_equal(path.q, [1, 1, 2, 2, 2, 2, 1, 1, 0, 0])
        srpt = srpt_engine.inject_trace(HAND_TRACE, DisciplineKind.SRPT, HAND_GRID, [1.0])
        np.testing.assert_allclose(path.w, srpt.w, atol=1e-12)

    def test_completion_order_with_events(self):
        path = srpt_engine.inject_trace(HAND_TRACE, DisciplineKind.SRPT, HAND_GRID, [1.0], record_events=True)
        completions = [(e.time, e.job_seq) for e in path.events if e.kind == "completion"]
        self.assertEqual(completions, [(2.0, 1), (4.0, 0)])
        crossings = [(e.time, e.residual_after) for e in path.events if e.kind == "crossing"]
        self.assertEqual(crossings, [(3.0, 1.0)])

    def test_equal_residual_tie_serves_lower_seq(self):
        path = srpt_engine.inject_trace([(0.0, 2.0), (1.0, 1.0)], DisciplineKind.SRPT, [0.0, 3.0], [],
                                        record_events=True)
        completions = [(e.time, e.job_seq) for e in path.events if e.kind == "completion"]
        self.assertEqual(completions, [(2.0, 0), (3.0, 1)])

    def test_single_job(self):
        grid = np.arange(7, dtype=float)
        path = srpt_engine.inject_trace([(0.0, 5.0)], DisciplineKind.SRPT, grid, [])
        np.testing.assert_array_equal(path.w, np.maximum(5.0 - grid, 0.0))

    def test_empty_system(self):
        path = srpt_engine.inject_trace([], DisciplineKind.SRPT, [0.0, 1.0, 2.0], [1.0, 5.0])
        np.testing.assert_array_equal(path.q, [0, 0, 0])
        np.testing.assert_array_equal(path.w, [0.0, 0.0, 0.0])
        self.assertEqual(srpt_engine.theta_at(path, 2.0, 5.0), 0.0)

    def test_theta(self):
        path = srpt_engine.inject_trace(HAND_TRACE, DisciplineKind.SRPT, HAND_GRID, [1.0, 10.0])
        self.assertEqual(srpt_engine.theta_at(path, 3.5, 1.0), 0.5)
        self.assertEqual(srpt_engine.theta_at(path, 1.5, 1.0), 0.5)
        self.assertEqual(srpt_engine.theta_at(path, 2.5, 1.0), 0.0)
        # busy since 0 with every size below x
        self.assertEqual(srpt_engine.theta_at(path, 3.5, 10.0), 3.5)
        with self.assertRaises(KeyError):
            srpt_engine.theta_at(path, 1.0, 2.0)
        with self.assertRaises(ValueError):
            srpt_engine.theta_at(path, 1.25, 1.0)

    def test_balance_residual(self):
        path = srpt_engine.inject_trace(HAND_TRACE, DisciplineKind.SRPT, HAND_GRID, [1.0])
        self.assertEqual(srpt_engine.balance_residual(path, 1.0, 1.5, 1.0), 0.0)
        self.assertEqual(srpt_engine.balance_residual(path, None, 2.5, 1.0), 0.0)
        with self.assertRaises(ValueError):
            srpt_engine.balance_residual(path, 0.5, 1.5, 1.0)
        fifo = srpt_engine.inject_trace(HAND_TRACE, DisciplineKind.FIFO, HAND_GRID, [1.0])
        with self.assertRaises(ValueError):
            srpt_engine.balance_residual(fifo, None, 1.5, 1.0)

    def test_trace_validation(self):
        with self.assertRaises(ValueError):
            srpt_engine.inject_trace([(1.0, 1.0), (0.5, 1.0)], DisciplineKind.SRPT, [0.0, 1.0], [])
        with self.assertRaises(ValueError):
            srpt_engine.inject_trace([(0.0, 1.0), (0.0, 1.0)], DisciplineKind.SRPT, [0.0, 1.0], [])
        with self.assertRaises(ValueError):
            srpt_engine.inject_trace([(0.0, -1.0)], DisciplineKind.SRPT, [0.0, 1.0], [])

    def test_repeated_trace_is_bit_identical(self):
        a = srpt_engine.inject_trace(HAND_TRACE, DisciplineKind.SRPT, HAND_GRID, [1.0])
        b = srpt_engine.inject_trace(HAND_TRACE, DisciplineKind.SRPT, HAND_GRID, [1.0])
        np.testing.assert_array_equal(a.w, b.w)
        np.testing.assert_array_equal(a.series(1.0).tau, b.series(1.0).tau)


class TestSeededPaths(unittest.TestCase):
    """Pathwise identities over seeded Exp(1)/Poisson replications with an initial condition."""

    def setUp(self):
        self.dist = ProcTimeDist.exponential()
        self.sf = SFunction(self.dist)
        self.p = HeavyTrafficParams(dist=self.dist, w0=1.0)
        self.grid = np.arange(101) * 0.01

    def _paths(self, r, i):
        cfg = htseq_service.make_system(self.p, r, self.sf)
        xs = [1.0, cfg.c_r]
        seed = replication_seed(0, r, i)
        phys = cfg.physical_scale * self.grid
        srpt = srpt_engine.run(cfg, self.p, DisciplineKind.SRPT, cfg.physical_scale, phys, xs, seed)
        fifo = srpt_engine.run(cfg, self.p, DisciplineKind.FIFO, cfg.physical_scale, phys, xs, seed)
        return cfg, xs, srpt, fifo

    def test_pathwise_identities(self):
        for r in (5.0, 10.0):
            for i in range(25):
                cfg, xs, srpt, fifo = self._paths(r, i)
                for x in xs:
                    for t in srpt.times:
                        self.assertLess(abs(srpt_engine.balance_residual(srpt, None, t, x)), 1e-9)
                        self.assertGreaterEqual(srpt_engine.timetau_residual(srpt, t, x), -1e-9)
                        self.assertGreaterEqual(srpt_engine.rep_work_below_x_residual(srpt, t, x), -1e-9)
                        self.assertGreaterEqual(srpt_engine.queue_rep_residual(srpt, t, x), -1e-9)
                for j in range(1, len(srpt.times)):
                    self.assertLess(abs(srpt_engine.workload_balance_residual(srpt, j - 1, j)), 1e-9)
                    self.assertLess(abs(srpt_engine.workload_balance_residual(fifo, j - 1, j)), 1e-9)

    def test_discipline_comparison(self):
        for r in (5.0, 10.0):
            for i in range(25):
                _, _, srpt, fifo = self._paths(r, i)
                self.assertLess(float(np.max(np.abs(srpt.w - fifo.w))), 1e-9)
                self.assertTrue(np.all(srpt.q <= fifo.q))
                np.testing.assert_array_equal(srpt.e, fifo.e)

    def test_path_invariants(self):
        _, xs, srpt, _ = self._paths(10.0, 3)
        self.assertTrue(np.all(srpt.w >= 0))
        self.assertTrue(np.all(np.diff(srpt.e) >= 0))
        for x in xs:
            ser = srpt.series(x)
            self.assertTrue(np.all(np.diff(ser.vx) >= 0))
            self.assertTrue(np.all(srpt.theta[x] >= 0))
            self.assertEqual(ser.count_initial, ser.count_in[0])

    def test_grid_end_one_ulp_past_horizon(self):
        cfg = htseq_service.make_system(self.p, 10.0, self.sf)
        horizon = cfg.physical_scale * 0.3
        grid = cfg.physical_scale * (np.arange(4) * 0.1)
        grid[-1] = np.nextafter(horizon, np.inf)
        path = srpt_engine.run(cfg, self.p, DisciplineKind.SRPT, horizon, grid, [1.0], 5)
        self.assertEqual(len(path.times), 4)
        grid[-1] = horizon * 1.001
        with self.assertRaises(ValueError):
            srpt_engine.run(cfg, self.p, DisciplineKind.SRPT, horizon, grid, [1.0], 5)

    def test_same_seed_same_path(self):
        _, _, a, _ = self._paths(10.0, 7)
        _, _, b, _ = self._paths(10.0, 7)
        np.testing.assert_array_equal(a.q, b.q)
        np.testing.assert_array_equal(a.w, b.w)


class TestEventLog(unittest.TestCase):
    def test_dump_and_replay(self):
        dist = ProcTimeDist.exponential()
        p = HeavyTrafficParams(dist=dist, w0=1.0)
        cfg = htseq_service.make_system(p, 10.0, SFunction(dist))
        grid = cfg.physical_scale * (np.arange(21) * 0.05)
        path = srpt_engine.run(cfg, p, DisciplineKind.SRPT, cfg.physical_scale, grid, [1.0], 42, record_events=True)
        with tempfile.TemporaryDirectory() as tmp:
            log = file_service.write_event_log(os.path.join(tmp, "events.csv"), path.events)
            events = file_service.read_event_log(log)
        self.assertEqual(events, path.events)
        table = experiment_service.replay(events)
        self.assertEqual(len(table["t"]), len(grid))
        np.testing.assert_array_equal(table["q_replayed"], path.q)
        self.assertLess(float(np.max(np.abs(table["w_replayed"] - path.w))), 1e-9)


if __name__ == '__main__':
    unittest.main()
