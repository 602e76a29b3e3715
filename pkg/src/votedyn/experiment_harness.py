"""Multi-trial Monte Carlo experiments over the voting processes.

Every experiment derives one independent seed per trial from the master seed,
the experiment id, and the trial index, so results are byte-identical for a
given config regardless of worker count or execution order. Graphs are
regenerated per trial by default; shared_graph reuses one graph across trials
(the quenched setting the theory quantifies over).

Timeouts are results, not errors. Step-budget constants are pilot-calibrated
and live with the callers; nothing here inherits asymptotic constants.
"""

from __future__ import annotations

from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import csv
import hashlib
import math

import numpy as np

from . import fixed_point_analysis as fpa
from . import induced_dynamics as idyn
from . import sbm_graph
from . import voting_core as vc

__all__ = [
    "ExperimentConfig",
    "TrialRecord",
    "rule_from_name",
    "derive_seed",
    "step_budget",
    "run_trials",
    "phase_sweep",
    "sink_persistence",
    "trajectory_deviation",
    "escape_time",
    "worst_case_scan",
    "consensus_time_scaling",
    "adversarial_families",
    "write_results_csv",
    "RESULTS_HEADER",
]

RESULTS_HEADER = "model,n,p,q,r,init,trial,seed,t_cons,timeout,final_opinion,peak_abs_delta2"


def rule_from_name(name: str) -> vc.VotingRule:
    if name == "bo3":
        return vc.make_rule_bo3()
    if name == "bo2":
        return vc.make_rule_bo2()
    if name.startswith("best_of_"):
        m = int(name.rsplit("_", 1)[1])
        if m < 3 or m % 2 == 0:
            raise ValueError(f"best_of_<m> needs odd m >= 3, got {m}")
        return vc.make_rule_best_of((m - 1) // 2)
    raise ValueError(f"unknown rule name: {name!r}")


def derive_seed(master_seed: int, *parts) -> int:
    text = ":".join([str(int(master_seed))] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def step_budget(n: int, p: float, c: float) -> int:
    """Suggested step budget C(log log n + log n / log(np)) for fast-consensus runs."""
    if n < 3 or n * p <= 1.0:
        raise ValueError("need n >= 3 and np > 1")
    return math.ceil(c * (math.log(math.log(n)) + math.log(n) / math.log(n * p)))


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    n: int
    p: float
    r: float
    init: vc.InitFamily | None = None
    trials: int = 10
    max_steps: int = 1000
    master_seed: int = 0xC0FFEE
    shared_graph: bool = False
    workers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError("r must lie in [0,1]")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must lie in (0,1]")
        if self.n < 1 or self.trials < 1 or self.max_steps < 0 or self.workers < 1:
            raise ValueError("n, trials >= 1; max_steps >= 0; workers >= 1")
        rule_from_name(self.model)  # validates the name

    @property
    def q(self) -> float:
        return self.r * self.p

    @property
    def u(self) -> float:
        return idyn.u_of_r(self.r)


@dataclass
class TrialRecord:
    trial: int
    seed: int
    t_cons: int | None
    timeout: bool
    final_opinion: int | None
    peak_abs_delta2: float
    tau_kappa: int | None = None
    escaped_at: int | None = None
    alphas: list | None = field(default=None, repr=False)


_GRAPH_CACHE: OrderedDict = OrderedDict()
_GRAPH_CACHE_LIMIT = 8


def _cached_graph(n: int, p: float, q: float, seed: int) -> sbm_graph.Graph:
    key = (n, p, q, seed)
    if key in _GRAPH_CACHE:
        _GRAPH_CACHE.move_to_end(key)
        return _GRAPH_CACHE[key]
    g = sbm_graph.generate_sbm(n, p, q, seed)
    _GRAPH_CACHE[key] = g
    if len(_GRAPH_CACHE) > _GRAPH_CACHE_LIMIT:
        _GRAPH_CACHE.popitem(last=False)
    return g


def _run_one(task: dict) -> TrialRecord:
    g = _cached_graph(task["n"], task["p"], task["q"], task["graph_seed"])
    rule = rule_from_name(task["model"])
    rng = np.random.Generator(np.random.Philox(task["seed"]))
    s = vc.make_initial(g, task["init"], rng)
    mode = task["mode"]
    max_steps = task["max_steps"]
    nv = g.num_vertices

    t_cons = None
    final_opinion = None
    tau_kappa = None
    escaped_at = None
    alphas = []
    peak = 0.0
    t = 0
    while True:
        a1, a2 = vc.fractions(s)
        d1, d2 = vc.to_delta(a1, a2)
        peak = max(peak, abs(d2))
        if mode == "deviation":
            alphas.append((a1, a2))
        if mode == "escape" and tau_kappa is None and abs(d2) > task["kappa"]:
            tau_kappa = t
            break
        if mode == "sink":
            c1, c2 = task["center"]
            if math.hypot(d1 - c1, d2 - c2) > task["epsilon"]:
                escaped_at = t
                break
        total = s.count1 + s.count2
        if total == 0 or total == nv:
            t_cons = t
            final_opinion = 1 if total == nv else 2
            break
        if t == max_steps:
            break
        s = vc.step(g, s, rule, rng)
        t += 1

    return TrialRecord(
        trial=task["trial"],
        seed=task["seed"],
        t_cons=t_cons,
        timeout=t_cons is None,
        final_opinion=final_opinion,
        peak_abs_delta2=peak,
        tau_kappa=tau_kappa,
        escaped_at=escaped_at,
        alphas=alphas if mode == "deviation" else None,
    )


def run_trials(
    cfg: ExperimentConfig,
    exp_id: str,
    mode: str = "consensus",
    init: vc.InitFamily | None = None,
    mode_params: dict | None = None,
    max_steps: int | None = None,
) -> list[TrialRecord]:
    """Execute cfg.trials independent trials of one experiment, sorted by
    trial index. Worker count never changes the records."""
    family = init if init is not None else cfg.init
    if family is None:
        raise ValueError("no init family configured")
    if isinstance(family, str):
        family = vc.parse_init_family(family)
    tasks = []
    for trial in range(cfg.trials):
        graph_tag = 0 if cfg.shared_graph else trial
        task = {
            "model": cfg.model,
            "n": cfg.n,
            "p": cfg.p,
            "q": cfg.q,
            "graph_seed": derive_seed(cfg.master_seed, exp_id, "graph", graph_tag),
            "seed": derive_seed(cfg.master_seed, exp_id, trial),
            "init": family,
            "trial": trial,
            "mode": mode,
            "max_steps": cfg.max_steps if max_steps is None else max_steps,
        }
        task.update(mode_params or {})
        tasks.append(task)
    if cfg.shared_graph:
        _cached_graph(cfg.n, cfg.p, cfg.q, tasks[0]["graph_seed"])  # warm before fork
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_run_one, tasks))
    else:
        records = [_run_one(t) for t in tasks]
    records.sort(key=lambda rec: rec.trial)
    return records


def _consensus_stats(records: list[TrialRecord]) -> dict:
    times = [rec.t_cons for rec in records if rec.t_cons is not None]
    return {
        "trials": len(records),
        "consensus_fraction": len(times) / len(records),
        "median_t_cons": float(np.median(times)) if times else None,
        "max_t_cons": max(times) if times else None,
        "timeouts": len(records) - len(times),
    }


def phase_sweep(cfg: ExperimentConfig, r_grid) -> list[dict]:
    """Consensus statistics per r, at fixed n, p, init, and step budget."""
    out = []
    for r in r_grid:
        sub = replace(cfg, r=float(r))
        exp_id = f"phase:r={float(r):.9g}"
        records = run_trials(sub, exp_id)
        stats = _consensus_stats(records)
        stats["r"] = float(r)
        stats["records"] = records
        out.append(stats)
    return out


def sink_persistence(cfg: ExperimentConfig, epsilon: float = 0.1) -> dict:
    """Escape/consensus fractions for trials started at the axis sink.

    Only meaningful below the model's threshold (the axis point must be a
    sink); refuses to run otherwise. Trials stop at their first exit from
    the epsilon-ball (Euclidean, delta coordinates) around the closed-form
    point, so consensus is only observed if it happens while inside.
    """
    r_star = fpa.threshold_r(cfg.model).analytic_r
    if cfg.r >= r_star:
        raise ValueError(
            f"r={cfg.r:.6g} is not below the {cfg.model} threshold "
            f"{r_star:.6g}; the axis point is not a sink there"
        )
    center = fpa.fixed_point_locations(cfg.model, cfg.u)["d2*"]
    init = vc.clustered(center[0], center[1])
    exp_id = f"sink:r={cfg.r:.9g}:eps={epsilon:.9g}"
    records = run_trials(
        cfg, exp_id, mode="sink", init=init,
        mode_params={"center": center, "epsilon": epsilon},
    )
    escapes = sum(1 for rec in records if rec.escaped_at is not None)
    consensus = sum(1 for rec in records if rec.t_cons is not None)
    return {
        "model": cfg.model,
        "r": cfg.r,
        "epsilon": epsilon,
        "horizon": cfg.max_steps,
        "center": center,
        "trials": len(records),
        "escape_fraction": escapes / len(records),
        "consensus_fraction": consensus / len(records),
        "records": records,
    }


def trajectory_deviation(cfg: ExperimentConfig, t_max: int) -> dict:
    """Sup-norm gap per step between the stochastic community fractions and
    the induced-map orbit started from the same realized initial fractions."""
    if not 0 <= t_max <= 50:
        raise ValueError("t_max must lie in [0, 50]")
    exp_id = f"deviation:t={t_max}"
    records = run_trials(cfg, exp_id, mode="deviation", max_steps=t_max)
    m = idyn.induced_map(rule_from_name(cfg.model), cfg.r, space="alpha")
    per_step = np.zeros((len(records), t_max + 1))
    for k, rec in enumerate(records):
        orbit = idyn.iterate(m, rec.alphas[0], t_max).points
        for t, (a1, a2) in enumerate(rec.alphas):
            per_step[k, t] = max(abs(a1 - orbit[t, 0]), abs(a2 - orbit[t, 1]))
    bound = 1.0 / math.sqrt(cfg.n * cfg.p) + math.sqrt(math.log(cfg.n) / cfg.n)
    per_trial_max = per_step.max(axis=1)
    return {
        "model": cfg.model,
        "n": cfg.n,
        "t_max": t_max,
        "trials": len(records),
        "bound": bound,
        "per_step_max": per_step.max(axis=0).tolist(),
        "per_step_median": np.median(per_step, axis=0).tolist(),
        "per_trial_max": per_trial_max.tolist(),
        "median_trial_max": float(np.median(per_trial_max)),
        "max_deviation": float(per_step.max()),
        "max_ratio": float(per_step.max() / bound),
    }


def escape_time(cfg: ExperimentConfig, kappa: float, budget: int) -> dict:
    """First step at which |delta2| exceeds kappa, per trial, capped at budget."""
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0,1)")
    exp_id = f"escape:kappa={kappa:.9g}"
    records = run_trials(
        cfg, exp_id, mode="escape", mode_params={"kappa": kappa}, max_steps=budget
    )
    taus = [rec.tau_kappa for rec in records]
    reached = [t for t in taus if t is not None]
    return {
        "model": cfg.model,
        "kappa": kappa,
        "budget": budget,
        "trials": len(records),
        "all_within_budget": len(reached) == len(records),
        "median_tau": float(np.median(reached)) if reached else None,
        "max_tau": max(reached) if reached else None,
        "taus": taus,
        "records": records,
    }


def adversarial_families(model: str, u: float, n: int) -> list[vc.InitFamily]:
    """Initial-condition families probing every fixed point plus random and
    extreme starts; the worst-case scan runs all of them."""
    families = [
        vc.half_half(),
        vc.biased_global(0.1),
        vc.biased_global(-0.1),
        vc.clustered(0.0, 0.0),
        vc.clustered(0.0, 0.05),
        vc.clustered(0.0, 0.9),
        vc.exact_counts(n, n),
        vc.exact_counts(0, 0),
    ]
    locs = fpa.fixed_point_locations(model, u)
    if "d2*" in locs:
        d = locs["d2*"][0]
        families += [vc.clustered(d, 0.0), vc.clustered(-d, 0.0)]
    if "d3*" in locs:
        d1, d2 = locs["d3*"]
        families += [vc.clustered(d1, d2), vc.clustered(-d1, d2)]
    for rho in np.arange(0.1, 0.95, 0.1):
        families.append(vc.random_density(round(float(rho), 2)))
    return families


def worst_case_scan(cfg: ExperimentConfig, families=None) -> dict:
    """Consensus statistics across the adversarial family list."""
    if families is None:
        families = adversarial_families(cfg.model, cfg.u, cfg.n)
    per_family = {}
    all_records = []
    for family in families:
        records = run_trials(cfg, f"worst:{family}", init=family)
        per_family[str(family)] = _consensus_stats(records)
        all_records.extend(records)
    times = [rec.t_cons for rec in all_records if rec.t_cons is not None]
    return {
        "model": cfg.model,
        "n": cfg.n,
        "families": per_family,
        "family_count": len(families),
        "total_trials": len(all_records),
        "all_consensus": len(times) == len(all_records),
        "max_t_cons": max(times) if times else None,
        "records": all_records,
    }


def consensus_time_scaling(cfg: ExperimentConfig, n_grid) -> dict:
    """Median consensus time per n and the least-squares slope against ln n."""
    n_grid = [int(v) for v in n_grid]
    if sorted(n_grid) != n_grid:
        raise ValueError("n_grid must be ascending")
    medians = {}
    for n in n_grid:
        sub = replace(cfg, n=n)
        stats = _consensus_stats(run_trials(sub, f"scaling:n={n}"))
        medians[n] = stats["median_t_cons"]
    if any(v is None for v in medians.values()):
        return {"medians": medians, "slope": None, "status": "timeout_dominated"}
    if len(n_grid) < 2:
        return {"medians": medians, "slope": None, "status": "single_point"}
    xs = np.log(np.array(n_grid, dtype=np.float64))
    ys = np.array([medians[n] for n in n_grid], dtype=np.float64)
    slope, intercept = np.polyfit(xs, ys, 1)
    return {
        "medians": medians,
        "slope": float(slope),
        "intercept": float(intercept),
        "status": "ok",
    }


def write_results_csv(
    cfg: ExperimentConfig,
    records,
    fh,
    init: vc.InitFamily | None = None,
    header: bool = True,
) -> None:
    """One row per trial in the stable column order; blank fields where a
    value does not apply (t_cons on timeout, final_opinion without consensus).
    Set header=False to append another block to an open file."""
    if header:
        fh.write(RESULTS_HEADER + "\n")
    family = init if init is not None else cfg.init
    writer = csv.writer(fh, lineterminator="\n")
    for rec in records:
        t_cons = "" if rec.t_cons is None else str(rec.t_cons)
        opinion = "" if rec.final_opinion is None else str(rec.final_opinion)
        writer.writerow(
            [
                cfg.model,
                str(cfg.n),
                f"{cfg.p:.9g}",
                f"{cfg.q:.9g}",
                f"{cfg.r:.9g}",
                str(family),
                str(rec.trial),
                str(rec.seed),
                t_cons,
                str(int(rec.timeout)),
                opinion,
                f"{rec.peak_abs_delta2:.9g}",
            ]
        )
