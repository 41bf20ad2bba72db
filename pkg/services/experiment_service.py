"""
Pipelines behind the CLI: simulate -> scale -> summarize -> report.

Replications fan out over a local process pool; results are gathered in
replication order so every output is independent of the worker count.
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from backend.utils.seeding import RBM_STREAM, config_hash, derive_seed, replication_seed
from models.dist import ProcTimeDist
from models.experiment import ExperimentConfig
from models.paths import DisciplineKind
from models.rbm import RbmParams
from models.stats import ReplicationEnsemble, ReplicationSummary, TrendReport
from models.system import SystemConfig, Thresholds
from services import file_service, htseq_service, rbm_service, scaling_service, srpt_engine, stats_service
from services.dist_service import SFunction

logger = logging.getLogger(__name__)

SEED_RULE = "sha256(json([base_seed, r, replication_index, stream_tag]))[:8] big-endian; streams 'arrivals' and 'sizes' under each replication seed; W* reference draws from sha256(json([base_seed, 'rbm', 'path' or 'terminal']))"
PATHWISE_TOLERANCE = 1e-9
SQUEEZE_TOLERANCE = 1e-12


def _map_ordered(fn: Callable, tasks: Sequence, workers: int) -> List:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _tracked(cfg: SystemConfig, ths: Dict[float, Thresholds], fixed_x: Iterable[float]) -> List[float]:
    xs = {cfg.c_r, *fixed_x}
    for th in ths.values():
        xs.update((th.l, th.u))
    return sorted(xs)


class _RSetup:
    """Everything a replication at one r needs; picklable."""

    def __init__(self, exp: ExperimentConfig, r: float, sf: SFunction):
        self.exp = exp
        self.p = exp.params
        self.cfg = htseq_service.make_system(self.p, r, sf)
        self.ths = {eps: htseq_service.thresholds(self.cfg, sf, eps) for eps in exp.epsilon}
        self.tracked = _tracked(self.cfg, self.ths, exp.fixed_x)
        self.grid = exp.scaled_grid()
        self.physical_grid = self.cfg.physical_scale * self.grid
        self.horizon = self.cfg.physical_scale * exp.horizon

    @property
    def primary(self) -> Thresholds:
        return self.ths[self.exp.epsilon[0]]


def _simulate(setup: _RSetup, i: int, discipline: DisciplineKind, record_events: bool = False):
    seed = replication_seed(setup.exp.base_seed, setup.cfg.r, i)
    return srpt_engine.run(setup.cfg, setup.p, discipline, setup.horizon, setup.physical_grid,
                           setup.tracked, seed, record_events=record_events)


def _theorem_replication(task: Tuple[_RSetup, int]) -> ReplicationSummary:
    setup, i = task
    raw = _simulate(setup, i, DisciplineKind.SRPT)
    sp = scaling_service.scale_path(raw, setup.cfg, setup.primary, setup.p.dist, setup.grid)
    summary = stats_service.summarize(sp, i, setup.ths, setup.exp.fixed_x)
    logger.debug(f"[Experiment] r={setup.cfg.r:g} replication {i}: gap {summary.gap:.6g}")
    return summary


def _slug(statistic: str) -> str:
    return statistic.replace("=", "_").replace(".", "p").replace("-", "m")


def _r_tag(r: float) -> str:
    return f"r{r:g}".replace(".", "p").replace("+", "")


def _summary_table(summaries: Sequence[ReplicationSummary], eps: Sequence[float],
                   fixed_x: Sequence[float]) -> Dict[str, list]:
    table: Dict[str, list] = {
        "replication": [s.replication for s in summaries],
        "gap": [s.gap for s in summaries],
        "gap_weibull": [s.gap_weibull for s in summaries],
        "terminal_qtilde": [s.terminal_qtilde for s in summaries],
        "terminal_what": [s.terminal_what for s in summaries],
        "terminal_qweibull": [s.terminal_qweibull for s in summaries],
    }
    for e in eps:
        table[f"sup_below_l_eps{e:g}"] = [s.sup_below_l[e] for s in summaries]
        table[f"sup_above_u_eps{e:g}"] = [s.sup_above_u[e] for s in summaries]
        table[f"sup_theta_eps{e:g}"] = [s.sup_theta_eps[e] for s in summaries]
    for x in fixed_x:
        table[f"sup_theta_x{x:g}"] = [s.sup_theta_x[x] for s in summaries]
        table[f"sup_near_origin_x{x:g}"] = [s.sup_near_origin[x] for s in summaries]
    return table


def _write_report(out_dir: str, report: TrendReport, files: List[str]) -> None:
    path = os.path.join(out_dir, f"trend_{_slug(report.statistic)}.json")
    files.append(file_service.write_json(path, report.model_dump(mode="json")))
    logger.info(f"[Experiment] {report.statistic}: medians {report.median} "
                f"(monotone_decreasing={report.monotone_decreasing}, margin={report.margin})")


def _theorem_pipeline(exp: ExperimentConfig, out_dir: str, workers: int, sf: SFunction) -> List[str]:
    files: List[str] = []
    p = exp.params
    variance, _ = rbm_service.system_variance(p)
    signature = (p.kappa, p.dist.label(), p.interarrival.kind, p.interarrival.k, p.interarrival.cv, exp.horizon)
    ensembles: List[ReplicationEnsemble] = []
    threshold_rows = []

    for r in exp.heavy_traffic.r_values:
        setup = _RSetup(exp, r, sf)
        logger.info(f"[Experiment] r={r:g}: c^r={setup.cfg.c_r:.6g}, {exp.replications} replications, "
                    f"{len(setup.tracked)} tracked thresholds")
        for eps, th in setup.ths.items():
            ratio = htseq_service.ratio_diagnostic(setup.cfg, sf, eps)
            threshold_rows.append((r, eps, setup.cfg.c_r, th.l, th.u,
                                   ratio[0] if ratio else None, ratio[1] if ratio else None))

        summaries = _map_ordered(_theorem_replication, [(setup, i) for i in range(exp.replications)], workers)
        ensembles.append(ReplicationEnsemble(
            r=r, signature=signature, summaries=summaries, c_r=setup.cfg.c_r,
            rbm_variance=variance, w0=p.w0, kappa=p.kappa, horizon=exp.horizon,
        ))
        files.append(file_service.write_columns_csv(
            os.path.join(out_dir, f"ensemble_{_r_tag(r)}.csv"),
            _summary_table(summaries, exp.epsilon, exp.fixed_x),
        ))

        # first replication in full: scaled path, and the event log when requested
        raw = _simulate(setup, 0, DisciplineKind.SRPT, record_events=exp.event_log)
        sp = scaling_service.scale_path(raw, setup.cfg, setup.primary, p.dist, setup.grid)
        fixed = exp.fixed_x[0] if exp.fixed_x else None
        files.append(file_service.write_columns_csv(
            os.path.join(out_dir, f"path_{_r_tag(r)}_rep0.csv"), scaling_service.path_table(sp, fixed)))
        if exp.event_log:
            files.append(file_service.write_event_log(
                os.path.join(out_dir, f"events_{_r_tag(r)}_rep0.csv"), raw.events))

    files.append(file_service.write_rows_csv(
        os.path.join(out_dir, "thresholds.csv"), ["r", "epsilon", "c_r", "l", "u", "c_over_l", "c_over_u"],
        threshold_rows))

    rbm = rbm_service.rbm_params(p, step=exp.rbm_step, scheme="bridge")
    files.append(file_service.write_columns_csv(
        os.path.join(out_dir, "rbm_path.csv"),
        rbm_path_table(rbm, exp.horizon, derive_seed(exp.base_seed, RBM_STREAM, "path"))))
    rbm_terminal = rbm_service.simulate_rbm_terminal(rbm, exp.horizon, exp.rbm_paths,
                                                     derive_seed(exp.base_seed, RBM_STREAM, "terminal"))
    logger.info(f"[Experiment] W* reference: {exp.rbm_paths} bridge paths, step {exp.rbm_step:g}")

    m = exp.trend_margin
    reports = [
        stats_service.theorem_trend(ensembles, m, rbm_terminal=rbm_terminal),
        stats_service.theorem_trend(ensembles, m, which="qweibull", rbm_terminal=rbm_terminal),
    ]
    for x in exp.fixed_x:
        reports.append(stats_service.lemma_theta_trend(ensembles, "fixed_x", x))
        reports.append(stats_service.region_mass_trend(ensembles, "near_origin", x))
    for eps in exp.epsilon:
        reports.append(stats_service.lemma_theta_trend(ensembles, "eps", eps))
        reports.append(stats_service.region_mass_trend(ensembles, "below_l", eps))
        reports.append(stats_service.region_mass_trend(ensembles, "above_u", eps))
    for report in reports:
        _write_report(out_dir, report, files)
    return files


def check_replication(setup: _RSetup, i: int) -> Dict[str, float]:
    """Pathwise exactness and discipline comparisons for one replication (SRPT and FIFO on shared primitives)."""
    srpt = _simulate(setup, i, DisciplineKind.SRPT)
    fifo = _simulate(setup, i, DisciplineKind.FIFO)
    sp = scaling_service.scale_path(srpt, setup.cfg, setup.primary, setup.p.dist, setup.grid)
    xs = [x for x in setup.tracked if x > 0]

    balance = 0.0
    timetau = rep_x1 = rep_x2 = queue_rep = math.inf
    for x in xs:
        for t_phys, t in zip(srpt.times, sp.times):
            balance = max(balance, abs(srpt_engine.balance_residual(srpt, None, t_phys, x)))
            timetau = min(timetau, srpt_engine.timetau_residual(srpt, t_phys, x))
            rep_x1 = min(rep_x1, srpt_engine.rep_work_below_x_residual(srpt, t_phys, x))
            queue_rep = min(queue_rep, srpt_engine.queue_rep_residual(srpt, t_phys, x))
            rep_x2 = min(rep_x2, scaling_service.rep_work_below_x2_check(sp, t, x))

    squeeze_violation = 0.0
    if setup.primary.available:
        for t in sp.times:
            lhs, mid, rhs = scaling_service.squeeze_check(sp, t)
            squeeze_violation = max(squeeze_violation, lhs - mid, mid - rhs)
    workload = max((abs(srpt_engine.workload_balance_residual(srpt, j - 1, j))
                    for j in range(1, len(srpt.times))), default=0.0)
    return {
        "replication": i,
        "max_balance_residual": balance,
        "min_timetau_slack": timetau,
        "min_rep_work_x1_slack": rep_x1,
        "min_rep_work_x2_slack": rep_x2,
        "min_queue_rep_slack": queue_rep,
        "max_squeeze_violation": squeeze_violation,
        "max_workload_balance": workload,
        "max_w_srpt_minus_fifo": float(np.max(np.abs(srpt.w - fifo.w))),
        "q_srpt_above_fifo": int(np.sum(srpt.q > fifo.q)),
    }


def _pathwise_task(task: Tuple[_RSetup, int]) -> Dict[str, float]:
    return check_replication(*task)


def _violations(row: Dict[str, float]) -> Dict[str, bool]:
    return {
        "balance": row["max_balance_residual"] > PATHWISE_TOLERANCE,
        "timetau": row["min_timetau_slack"] < -PATHWISE_TOLERANCE,
        "rep_work_x1": row["min_rep_work_x1_slack"] < -PATHWISE_TOLERANCE,
        "rep_work_x2": row["min_rep_work_x2_slack"] < -PATHWISE_TOLERANCE,
        "queue_rep": row["min_queue_rep_slack"] < -PATHWISE_TOLERANCE,
        "squeeze": row["max_squeeze_violation"] > SQUEEZE_TOLERANCE,
        "workload_balance": row["max_workload_balance"] > PATHWISE_TOLERANCE,
        "workload_invariance": row["max_w_srpt_minus_fifo"] > PATHWISE_TOLERANCE,
        "srpt_optimality": row["q_srpt_above_fifo"] > 0,
    }


def _pathwise_pipeline(exp: ExperimentConfig, out_dir: str, workers: int, sf: SFunction) -> List[str]:
    files: List[str] = []
    report = {"tolerance": PATHWISE_TOLERANCE, "squeeze_tolerance": SQUEEZE_TOLERANCE, "per_r": []}
    for r in exp.heavy_traffic.r_values:
        setup = _RSetup(exp, r, sf)
        rows = _map_ordered(_pathwise_task, [(setup, i) for i in range(exp.replications)], workers)
        header = list(rows[0])
        files.append(file_service.write_rows_csv(
            os.path.join(out_dir, f"pathwise_{_r_tag(r)}.csv"), header, ([row[k] for k in header] for row in rows)))
        counts = {k: 0 for k in _violations(rows[0])}
        for row in rows:
            for k, bad in _violations(row).items():
                counts[k] += int(bad)
        total = sum(counts.values())
        if total:
            logger.error(f"[Experiment] r={r:g}: pathwise violations {counts}")
        else:
            logger.info(f"[Experiment] r={r:g}: {len(rows)} traces, no pathwise violations")
        report["per_r"].append({
            "r": r,
            "replications": len(rows),
            "violations": counts,
            "max_balance_residual": max(row["max_balance_residual"] for row in rows),
            "max_w_srpt_minus_fifo": max(row["max_w_srpt_minus_fifo"] for row in rows),
        })
    files.append(file_service.write_json(os.path.join(out_dir, "pathwise_report.json"), report))
    return files


def _fclt_pipeline(exp: ExperimentConfig, out_dir: str, sf: SFunction) -> List[str]:
    p = exp.params
    rows = []
    for r in exp.heavy_traffic.r_values:
        cfg = htseq_service.make_system(p, r, sf)
        seed = replication_seed(exp.base_seed, r, 0, "fclt")
        var_v, pred_v = stats_service.fclt_variance_check(p, cfg, exp.fclt_x, exp.horizon, exp.replications, seed)
        var_e, pred_e = stats_service.arrival_fclt_check(p, cfg, exp.horizon, exp.replications, seed)
        rows.append({
            "r": r, "x": exp.fclt_x, "t": exp.horizon, "n": exp.replications,
            "vhat_sample_variance": var_v, "vhat_predicted": pred_v,
            "vhat_relative_error": abs(var_v - pred_v) / pred_v if pred_v > 0 else None,
            "ehat_sample_variance": var_e, "ehat_predicted": pred_e,
        })
    return [file_service.write_json(os.path.join(out_dir, "fclt_report.json"), {"rows": rows})]


def run_experiment(exp: ExperimentConfig, out_dir: Optional[str] = None, workers: int = 1) -> List[str]:
    """Run the configured pipeline and write its artifacts plus manifest.json. Returns the files written."""
    out_dir = out_dir or exp.output_dir
    os.makedirs(out_dir, exist_ok=True)
    sf = SFunction(exp.dist)
    logger.info(f"[Experiment] pipeline={exp.pipeline} dist={exp.dist.label()} r={exp.heavy_traffic.r_values} "
                f"n={exp.replications} workers={workers} -> {out_dir}")

    if exp.pipeline == "theorem":
        files = _theorem_pipeline(exp, out_dir, workers, sf)
    elif exp.pipeline == "pathwise":
        files = _pathwise_pipeline(exp, out_dir, workers, sf)
    else:
        files = _fclt_pipeline(exp, out_dir, sf)

    files.append(file_service.write_json(os.path.join(out_dir, "config.json"), exp.model_dump(mode="json")))
    manifest = file_service.write_manifest(
        out_dir, config_hash(exp.model_dump(mode="json")), SEED_RULE, files,
        extra={"base_seed": exp.base_seed, "pipeline": exp.pipeline},
    )
    logger.info(f"[Experiment] wrote {len(files)} files and {manifest}")
    return files + [manifest]


def invert_s(dist: ProcTimeDist, ys: Sequence[float], tolerance: float = 1e-10) -> List[Dict[str, Optional[float]]]:
    """Rows of y, S^-1(y), S(S^-1(y)) and beta S^-1(y) / (ln y)^(1/alpha)."""
    sf = SFunction(dist, inversion_tolerance=tolerance)
    rows = []
    for y in ys:
        x = sf.inverse(y)
        ratio = None
        if y > 1.0:
            ratio = dist.beta * x / math.log(y) ** (1.0 / dist.alpha)
        rows.append({"y": y, "s_inverse": x, "s_of_s_inverse": sf.value(x), "weibull_ratio": ratio})
    return rows


def compare_rbm(params: RbmParams, n: int, seed: int, horizon: float = 1.0) -> Dict:
    """KS distance between simulated W*(horizon) and the closed-form marginal (w0 = 0 only)."""
    if params.w0 != 0:
        raise ValueError("compare_rbm: only w0 = 0 has a closed-form marginal")
    terminal = rbm_service.simulate_rbm_terminal(params, horizon, n, seed)
    statistic = stats_service.ks_vs_cdf(terminal, lambda w: rbm_service.marginal_cdf(params, horizon, w))
    report = {
        "statistic": statistic,
        "n": n,
        "seed": seed,
        "horizon": horizon,
        "drift": params.drift,
        "variance": params.variance,
        "step": params.step,
        "scheme": params.scheme,
    }
    logger.info(f"[Experiment] compare-rbm: KS={statistic:.6g} over n={n} ({params.scheme}, step {params.step:g})")
    return report


def rbm_path_table(params: RbmParams, horizon: float, seed: int) -> Dict[str, np.ndarray]:
    path = rbm_service.simulate_rbm(params, horizon, seed)
    return {"t": path.times, "wstar": path.values}


def replay(events: Sequence) -> Dict[str, np.ndarray]:
    """
    Re-derive Q and W at every grid record from the arrival/completion stream
    of an event log, next to the values the engine recorded.
    """
    if not events:
        raise ValueError("replay: empty event log")
    rows: Dict[str, list] = {k: [] for k in ("t", "q", "w", "q_replayed", "w_replayed", "w_error")}

    def emit(ev, q, w):
        rows["t"].append(ev.time)
        rows["q"].append(ev.q)
        rows["w"].append(ev.w)
        rows["q_replayed"].append(q)
        rows["w_replayed"].append(w)
        rows["w_error"].append(w - ev.w)

    # the first record carries the state just after it
    first = events[0]
    q, w, now = first.q, first.w, first.time
    if first.kind == "grid":
        emit(first, q, w)
    for ev in events[1:]:
        dt = ev.time - now
        if dt < 0:
            raise ValueError(f"replay: event times decrease at t={ev.time}")
        if q > 0:
            w -= dt
        now = ev.time
        if ev.kind == "arrival":
            q += 1
            w += ev.residual_after
        elif ev.kind == "completion":
            q -= 1
            if q == 0:
                w = 0.0
        elif ev.kind == "grid":
            emit(ev, q, w)
    return {k: np.asarray(v) for k, v in rows.items()}
