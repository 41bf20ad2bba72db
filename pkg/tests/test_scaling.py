import math
import os
import sys
import unittest

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from backend.utils.seeding import replication_seed
from models.dist import ProcTimeDist
from models.paths import DisciplineKind
from models.system import HeavyTrafficParams, SystemConfig, Thresholds
from services import htseq_service, scaling_service, srpt_engine
from services.dist_service import SFunction
from services.srpt_engine import JobSet


def _jobs(*sizes):
    jobs = JobSet()
    for s in sizes:
        jobs.add(s)
    return jobs


class TestScaleArithmetic(unittest.TestCase):
    """Hand-built system: r = 10, c^r = 2, l = 1, u = 4."""

    def setUp(self):
        self.dist = ProcTimeDist.exponential()
        self.cfg = SystemConfig(r=10.0, kappa=0.0, mean_size=1.0, lambda_r=1.0, rho_r=1.0,
                                excess_load=0.0, c_r=2.0, sigma_a_r=1.0)
        self.th = Thresholds(epsilon=1.0, l=1.0, u=4.0)

    def _scaled(self, jobs):
        raw = srpt_engine.inject_trace([], DisciplineKind.SRPT, [0.0], [1.0, 4.0], jobs=jobs)
        return scaling_service.scale_path(raw, self.cfg, self.th, self.dist, np.array([0.0]))

    def test_queue_scalings(self):
        sp = self._scaled(_jobs(3.0, 3.0, 3.0, 3.0, 3.0))
        self.assertEqual(sp.qhat[0], 0.5)
        self.assertEqual(sp.qtilde[0], 1.0)
        self.assertEqual(sp.what[0], 1.5)
        self.assertEqual(scaling_service.gap_statistic(sp), 0.5)

    def test_empty_path(self):
        sp = self._scaled(JobSet())
        for col in (sp.qhat, sp.what, sp.qtilde, sp.qweibull):
            np.testing.assert_array_equal(col, [0.0])
        m = scaling_service.region_masses(sp, 0.0)
        self.assertEqual(list(vars(m).values()), [0.0] * 7)
        self.assertEqual(scaling_service.squeeze_check(sp, 0.0), (0.0, 0.0, 0.0))
        self.assertEqual(scaling_service.gap_statistic(sp), 0.0)

    def test_single_atom_at_correction_factor(self):
        sp = self._scaled(_jobs(2.0))
        lhs, mid, rhs = scaling_service.squeeze_check(sp, 0.0)
        self.assertAlmostEqual(lhs, 0.1, places=12)
        self.assertAlmostEqual(mid, 0.2, places=12)
        self.assertAlmostEqual(rhs, 0.4, places=12)
        self.assertLess(lhs, mid)
        self.assertLess(mid, rhs)

    def test_giant_job_above_u(self):
        sp = self._scaled(_jobs(8.0, 0.5, 2.0))
        m = scaling_service.region_masses(sp, 0.0)
        self.assertAlmostEqual(m.work_hi_hat, 0.8, places=12)
        self.assertAlmostEqual(m.count_hi_tilde, 0.2, places=12)
        self.assertAlmostEqual(m.count_lo_tilde, 0.2, places=12)
        self.assertAlmostEqual(m.weighted_lo_tilde, 0.2, places=12)  # max(1, 0.5) = 1
        self.assertAlmostEqual(m.work_lo_tilde, 0.1, places=12)
        total_work = m.work_lo_tilde / sp.c_r + m.work_mid_hat + m.work_hi_hat
        self.assertAlmostEqual(total_work, sp.what[0], places=12)
        total_count = m.count_lo_tilde + m.count_mid_tilde + m.count_hi_tilde
        self.assertAlmostEqual(total_count, sp.qtilde[0], places=12)

    def test_all_jobs_in_middle_region(self):
        sp = self._scaled(_jobs(1.5, 2.5, 4.0))
        m = scaling_service.region_masses(sp, 0.0)
        self.assertEqual((m.count_lo_tilde, m.work_lo_tilde, m.count_hi_tilde, m.work_hi_hat), (0.0, 0.0, 0.0, 0.0))

    def test_unavailable_squeeze(self):
        raw = srpt_engine.inject_trace([], DisciplineKind.SRPT, [0.0], [0.0, 4.0], jobs=_jobs(2.0))
        sp = scaling_service.scale_path(raw, self.cfg, Thresholds(epsilon=1.0, l=0.0, u=4.0), self.dist)
        with self.assertRaises(ValueError):
            scaling_service.squeeze_check(sp, 0.0)

    def test_grid_mismatch(self):
        raw = srpt_engine.inject_trace([], DisciplineKind.SRPT, [0.0, 50.0], [1.0, 4.0])
        with self.assertRaises(ValueError):
            scaling_service.scale_path(raw, self.cfg, self.th, self.dist, np.array([0.0, 0.6]))
        sp = scaling_service.scale_path(raw, self.cfg, self.th, self.dist, np.array([0.0, 0.5]))
        self.assertEqual(sp.grid_index(0.5), 1)

    def test_untracked_threshold(self):
        raw = srpt_engine.inject_trace([], DisciplineKind.SRPT, [0.0], [1.0])
        with self.assertRaises(ValueError):
            scaling_service.scale_path(raw, self.cfg, self.th, self.dist)


class TestInitialCondition(unittest.TestCase):
    def test_qtilde_equals_what_at_zero(self):
        dist = ProcTimeDist.exponential()
        sf = SFunction(dist)
        p = HeavyTrafficParams(dist=dist, w0=1.0)
        cfg = htseq_service.make_system(p, 30.0, sf)
        th = htseq_service.thresholds(cfg, sf, 1.0)
        grid = np.arange(11) * 0.01
        raw = srpt_engine.run(cfg, p, DisciplineKind.SRPT, cfg.physical_scale * grid[-1], cfg.physical_scale * grid,
                              [th.l, th.u, cfg.c_r], 5)
        sp = scaling_service.scale_path(raw, cfg, th, dist, grid)
        self.assertEqual(sp.qtilde[0], sp.what[0])
        m = scaling_service.region_masses(sp, 0.0)
        self.assertEqual(m.weighted_lo_tilde, 0.0)
        self.assertEqual(m.work_hi_hat, 0.0)


class TestSeededProperties(unittest.TestCase):
    """Weibull(2, 1) at r = 30 keeps l > 0, so the squeeze is available."""

    def setUp(self):
        self.dist = ProcTimeDist(alpha=2.0, beta=1.0)
        self.sf = SFunction(self.dist)
        self.p = HeavyTrafficParams(dist=self.dist, w0=0.5)
        self.cfg = htseq_service.make_system(self.p, 30.0, self.sf)
        self.th = htseq_service.thresholds(self.cfg, self.sf, 1.0)
        self.grid = np.arange(51) * 0.02

    def _scaled(self, i):
        xs = [self.th.l, self.th.u, self.cfg.c_r, 1.0]
        phys = self.cfg.physical_scale * self.grid
        raw = srpt_engine.run(self.cfg, self.p, DisciplineKind.SRPT, self.cfg.physical_scale, phys, xs,
                              replication_seed(1, 30.0, i))
        return raw, scaling_service.scale_path(raw, self.cfg, self.th, self.dist, self.grid)

    def test_thresholds_available(self):
        self.assertTrue(self.th.available)
        self.assertLess(self.th.l, self.cfg.c_r)

    def test_squeeze_and_scaled_bounds(self):
        for i in range(50):
            _, sp = self._scaled(i)
            for t in sp.times:
                lhs, mid, rhs = scaling_service.squeeze_check(sp, t)
                self.assertLessEqual(lhs - mid, 1e-12)
                self.assertLessEqual(mid - rhs, 1e-12)
                for x in (self.th.l, 1.0):
                    self.assertGreaterEqual(scaling_service.rep_work_below_x2_check(sp, t, x), -1e-9)
                    self.assertGreaterEqual(scaling_service.queue_rep_check(sp, t, x), -1e-9)

    def test_partition_and_recentering(self):
        raw, sp = self._scaled(3)
        for j, t in enumerate(sp.times):
            m = scaling_service.region_masses(sp, t)
            self.assertAlmostEqual(m.work_lo_tilde / sp.c_r + m.work_mid_hat + m.work_hi_hat, sp.what[j], delta=1e-9)
            self.assertAlmostEqual(m.count_lo_tilde + m.count_mid_tilde + m.count_hi_tilde, sp.qtilde[j], delta=1e-9)
            for v in vars(m).values():
                self.assertGreaterEqual(v, 0.0)
        np.testing.assert_allclose(sp.ehat + self.cfg.lambda_r * sp.r * sp.times, raw.e / sp.r, atol=1e-9)
        np.testing.assert_array_equal(sp.qtilde, (sp.c_r * raw.q) / sp.r)

    def test_gap_and_table(self):
        _, sp = self._scaled(0)
        gap = scaling_service.gap_statistic(sp)
        self.assertTrue(math.isfinite(gap))
        self.assertGreaterEqual(gap, 0.0)
        table = scaling_service.path_table(sp, 1.0)
        for name in ("qhat", "what", "qtilde", "ehat", "vhat_l", "work_lo_tilde", "count_lo_tilde",
                     "work_hi_hat", "theta_l", "theta_x"):
            self.assertEqual(len(table[name]), len(sp.times))
        with self.assertRaises(ValueError):
            scaling_service.gap_statistic(sp, which="qhat")


if __name__ == '__main__':
    unittest.main()
