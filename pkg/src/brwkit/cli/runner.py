"""Parallel replica orchestration and the experiment pipelines.

Work is a list of replica indices; each index derives its own random stream
from the master seed, and results come back ordered by index, so output does
not depend on the number of workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .. import laws, stats, streams
from ..engine import R0Pool, run_trajectory, sample_r0, two_stage_rn
from ..errors import BRWError
from .report import ReplicaCSV, fmt_float

_STATE = {}


class ReplicaFailed(BRWError):
    def __init__(self, index, message):
        super().__init__(index, message)
        self.index = index

    def __str__(self):
        return f"replica {self.args[0]}: {self.args[1]}"


def _init(state):
    _STATE.clear()
    _STATE.update(state)


def _guard(fn, index):
    try:
        return fn(index)
    except ReplicaFailed:
        raise
    except BRWError as exc:
        raise ReplicaFailed(index, f"{type(exc).__name__}: {exc}") from None


def _trajectory_task(index):
    law, cfg = _STATE["law"], _STATE["cfg"]
    seed = streams.derive_seed(cfg.seed, index, streams.TRAJECTORY)
    out = run_trajectory(law, cfg, streams.make_rng(seed), keep_stats=_STATE["keep_stats"])
    return index, seed, out


def _r0_task(index):
    law, cfg = _STATE["law"], _STATE["cfg"]
    seed = streams.derive_seed(cfg.seed, index, streams.R0_POOL)
    return index, seed, sample_r0(law, cfg, streams.make_rng(seed))


def _two_stage_task(index):
    law, cfg, pool = _STATE["law"], _STATE["cfg"], _STATE["pool"]
    seed = streams.derive_seed(cfg.seed, index, streams.TWO_STAGE)
    return index, seed, two_stage_rn(law, cfg, streams.make_rng(seed), pool)


class _Bound:
    def __init__(self, task):
        self.task = task

    def __call__(self, index):
        return _guard(self.task, index)


def parallel_map(task, indices, workers, state):
    """Ordered ``task(i)`` over ``indices`` with ``workers`` processes."""
    indices = list(indices)
    if workers <= 1 or len(indices) <= 1:
        _init(state)
        for i in indices:
            yield _guard(task, i)
        return
    chunk = max(1, len(indices) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init, initargs=(state,)) as ex:
        yield from ex.map(_Bound(task), indices, chunksize=chunk)


def run_replicas(law, cfg, count, workers=1, keep_stats=False, start=0):
    """Yield ``(index, seed, ReplicaOutcome)`` in index order."""
    state = {"law": law, "cfg": cfg, "keep_stats": keep_stats}
    return parallel_map(_trajectory_task, range(start, start + count), workers, state)


def build_r0_pool(law, cfg, size, workers=1):
    """Draw ``size`` samples of the all-time minimum; returns ``(pool, rows)``."""
    rows = list(parallel_map(_r0_task, range(size), workers, {"law": law, "cfg": cfg}))
    return R0Pool.from_samples([r[2] for r in rows]), rows


def two_stage_samples(law, cfg, pool, count, workers=1):
    state = {"law": law, "cfg": cfg, "pool": pool}
    return np.array([r[2] for r in parallel_map(_two_stage_task, range(count), workers, state)])


# ---------------------------------------------------------------------------
# pipelines; each returns (report dict, gate passed)


def _open(out, name):
    os.makedirs(out, exist_ok=True)
    return open(os.path.join(out, name), "w", newline="")


def run_validate(cfg):
    mom = laws.law_moments(cfg.law)
    report = {"law": laws.law_to_dict(cfg.law), "moments": mom}
    return report, bool(mom.boundary_ok and mom.integrability_ok)


def run_reduce(cfg, tol=1e-12):
    red = laws.boundary_reduce(cfg.law, tol)
    mom = laws.law_moments(red.transformed)
    report = {
        "theta_star": red.theta_star,
        "shift": red.shift,
        "transformed": laws.law_to_dict(red.transformed),
        "moments": mom,
    }
    return report, bool(mom.boundary_ok)


def _collect(cfg, keep_stats=False, name="replicas.csv"):
    outcomes = []
    with _open(cfg.out, name) as fh:
        table = ReplicaCSV(fh)
        for index, seed, out in run_replicas(cfg.law, cfg.sim, cfg.replicas, cfg.workers,
                                             keep_stats):
            table.write(index, seed, out)
            outcomes.append(out)
    return outcomes


def survival_summary(outcomes):
    n = len(outcomes)
    alive = [o for o in outcomes if o.survived]
    p = len(alive) / n if n else math.nan
    return {
        "replicas": n,
        "survived": len(alive),
        "survival_fraction": p,
        "survival_stderr": math.sqrt(p * (1 - p) / n) if n else math.nan,
        "unsettled": sum(1 for o in alive if not o.r_settled),
        "max_truncated_mass": max((o.truncated_mass for o in outcomes), default=0.0),
    }


def run_simulate(cfg):
    outcomes = _collect(cfg)
    summary = survival_summary(outcomes)
    return {"summary": summary}, summary["unsettled"] == 0


def run_estimate_cm(cfg):
    pool, rows = build_r0_pool(cfg.law, cfg.sim, cfg.replicas, cfg.workers)
    with _open(cfg.out, "pool.csv") as fh:
        fh.write("sample_id,seed,r0,certificate,settled,generations\n")
        for index, seed, s in rows:
            fh.write(f"{index},{seed},{fmt_float(s.value)},{fmt_float(s.certificate)},"
                     f"{'true' if s.settled else 'false'},{s.generations}\n")
    st = cfg.stats
    fit = stats.estimate_cM(pool, st.window, n_boot=st.bootstrap, min_tail=st.min_tail,
                            seed=cfg.seed)
    sigma2 = laws.law_moments(cfg.law).sigma2
    report = {
        "c_M": fit,
        "c_prime_formula": stats.derive_cprime(fit.c_hat, sigma2),
        "sigma2": sigma2,
        "pool_size": len(pool),
        "unsettled": int(np.sum(~pool.settled)),
    }
    return report, -1.1 <= fit.slope <= -0.9


def theorem_fit(outcomes, alpha=0.01):
    """Fit constants on even-indexed replicas and test the PIT on odd ones."""
    fit_half, test_half = outcomes[0::2], outcomes[1::2]
    c_star, c_prime = stats.fit_constants(fit_half)
    gof = stats.pit_independence_test(test_half, c_star[0], c_prime[0])
    report = stats.FitReport(c_star=c_star, c_prime_mle=c_prime, gof=gof)
    ok = min(gof.ks_W.pvalue, gof.ks_L.pvalue, gof.indep.pvalue) > alpha
    return report, ok


def run_test_theorem(cfg):
    outcomes = _collect(cfg)
    report, ok = theorem_fit(outcomes, cfg.stats.alpha)
    if cfg.stats.pool_size > 0:
        pool, _ = build_r0_pool(cfg.law, cfg.sim, cfg.stats.pool_size, cfg.workers)
        report.c_M = stats.estimate_cM(pool, cfg.stats.window, n_boot=cfg.stats.bootstrap,
                                       min_tail=cfg.stats.min_tail, seed=cfg.seed)
        sigma2 = laws.law_moments(cfg.law).sigma2
        report.c_prime_formula = stats.derive_cprime(report.c_M.c_hat, sigma2)
        rel = abs(report.c_prime_mle[0] - report.c_prime_formula) / report.c_prime_formula
        ok = ok and rel <= 0.25
    return {"fit": report, "summary": survival_summary(outcomes)}, ok


def diagnostic_summary(outcomes, points, sigma2):
    ais, as_ = stats.diagnostics(outcomes, points)
    target = stats.ais_target(sigma2)
    ais_rows = [{"n": s.n, "median_ratio": float(np.median(s.values)) if s.values.size else math.nan,
                 "target": target, "used": int(s.values.size), "dropped": s.dropped} for s in ais]
    as_rows = [{"n": s.n, "median_ratio": float(np.median(s.values)) if s.values.size else math.nan,
                "within_quarter": float(np.mean(np.abs(s.values - 0.5) <= 0.25))
                if s.values.size else math.nan,
                "used": int(s.values.size)} for s in as_]
    return ais_rows, as_rows


def run_diagnose(cfg):
    points = sorted(set(cfg.stats.points))
    sim = cfg.sim
    if sim.measure_n < points[-1]:
        sim = replace(sim, measure_n=points[-1], max_generation=0)
    cfg = replace(cfg, sim=sim)
    outcomes = _collect(cfg, keep_stats=True)
    sigma2 = laws.law_moments(cfg.law).sigma2
    ais_rows, as_rows = diagnostic_summary(outcomes, points, sigma2)
    with _open(cfg.out, "diagnostics.csv") as fh:
        fh.write("n,ais_median,ais_target,ais_used,ais_dropped,as_median,as_within_quarter\n")
        by_n = {r["n"]: r for r in as_rows}
        for r in ais_rows:
            a = by_n.get(r["n"], {})
            fh.write(",".join([str(r["n"]), fmt_float(r["median_ratio"]), fmt_float(r["target"]),
                               str(r["used"]), str(r["dropped"]),
                               fmt_float(a.get("median_ratio", math.nan)),
                               fmt_float(a.get("within_quarter", math.nan))]) + "\n")
    report = stats.FitReport(ais_ratio_summary=ais_rows, as_ratio_series=as_rows)
    last = ais_rows[-1]
    ok = abs(last["median_ratio"] - last["target"]) <= 0.2 * last["target"]
    return {"fit": report, "summary": survival_summary(outcomes)}, ok


PIPELINES = {
    "validate": run_validate,
    "reduce": run_reduce,
    "simulate": run_simulate,
    "estimate-cm": run_estimate_cm,
    "test-theorem": run_test_theorem,
    "diagnose": run_diagnose,
}


def run_experiment(cfg):
    return PIPELINES[cfg.kind](cfg)
