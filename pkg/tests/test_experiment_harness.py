"""Seed derivation, trial running, and the phenomenon-level experiment drivers."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import replace

import numpy as np
import pytest

import votedyn as vd
from votedyn import (
    ExperimentConfig,
    adversarial_families,
    consensus_time_scaling,
    derive_seed,
    escape_time,
    fixed_point_locations,
    phase_sweep,
    rule_from_name,
    run_trials,
    sink_persistence,
    step_budget,
    trajectory_deviation,
    u_of_r,
    worst_case_scan,
    write_results_csv,
)
from votedyn.experiment_harness import RESULTS_HEADER


def small_cfg(**overrides) -> ExperimentConfig:
    base = dict(
        model="bo3",
        n=100,
        p=0.3,
        r=0.3,
        init="biased_global(0.2)",
        trials=4,
        max_steps=100,
        master_seed=7,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# --- seeds and budgets ---


def test_derive_seed_recipe():
    got = derive_seed(0xC0FFEE, "alpha", 3)
    text = ":".join([str(0xC0FFEE), "alpha", "3"])
    want = int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")
    assert got == want
    assert 0 <= got < 2**64


def test_derive_seed_sensitivity():
    base = derive_seed(1, "x", 0)
    assert derive_seed(1, "x", 0) == base
    assert derive_seed(2, "x", 0) != base
    assert derive_seed(1, "y", 0) != base
    assert derive_seed(1, "x", 1) != base
    assert derive_seed(1, "x") != base


def test_step_budget():
    n, p, c = 1000, 0.3, 15.0
    want = math.ceil(c * (math.log(math.log(n)) + math.log(n) / math.log(n * p)))
    assert step_budget(n, p, c) == want
    assert step_budget(n, p, 30.0) >= step_budget(n, p, 15.0)
    with pytest.raises(ValueError):
        step_budget(2, 0.5, 10.0)
    with pytest.raises(ValueError):
        step_budget(100, 0.005, 10.0)


def test_rule_from_name():
    assert rule_from_name("bo3").name == "bo3"
    assert rule_from_name("bo2").name == "bo2"
    assert rule_from_name("best_of_5").name == "best_of_5"
    assert rule_from_name("best_of_25").name == "best_of_25"
    for bad in ("bo7", "best_of_4", "best_of_1", "poly"):
        with pytest.raises(ValueError):
            rule_from_name(bad)


# --- config validation ---


def test_config_validation():
    with pytest.raises(ValueError):
        small_cfg(model="bo7")
    with pytest.raises(ValueError):
        small_cfg(n=0)
    with pytest.raises(ValueError):
        small_cfg(p=1.5)
    with pytest.raises(ValueError):
        small_cfg(r=1.5)
    with pytest.raises(ValueError):
        small_cfg(trials=0)
    with pytest.raises(ValueError):
        small_cfg(max_steps=-1)
    with pytest.raises(ValueError):
        small_cfg(workers=0)


# --- run_trials ---


def test_run_trials_deterministic_and_exp_id_scoped():
    cfg = small_cfg()
    a = run_trials(cfg, "exp1")
    b = run_trials(cfg, "exp1")
    c = run_trials(cfg, "exp2")
    assert a == b
    assert [r.seed for r in a] != [r.seed for r in c]
    assert len(a) == cfg.trials
    assert all(rec.trial == i for i, rec in enumerate(a))


def test_run_trials_workers_byte_identical():
    cfg = small_cfg()
    assert run_trials(replace(cfg, workers=2), "exp1") == run_trials(cfg, "exp1")


def test_run_trials_shared_graph():
    recs = run_trials(small_cfg(shared_graph=True), "exp1")
    assert len(recs) == 4 and all(not r.timeout for r in recs)


def test_run_trials_accepts_parsed_and_string_inits():
    cfg = small_cfg()
    via_string = run_trials(cfg, "exp1")
    via_family = run_trials(
        replace(cfg, init=None), "exp1", init=vd.biased_global(0.2)
    )
    assert via_string == via_family


def test_run_trials_without_init_raises():
    with pytest.raises(ValueError):
        run_trials(small_cfg(init=None), "exp1")


# --- sweeps and phenomenon drivers ---


def test_phase_sweep_rows():
    rows = phase_sweep(small_cfg(n=80, trials=3, max_steps=60), [0.05, 0.25])
    assert [row["r"] for row in rows] == [0.05, 0.25]
    for row in rows:
        assert row["trials"] == 3
        assert 0.0 <= row["consensus_fraction"] <= 1.0
        assert row["timeouts"] == sum(rec.timeout for rec in row["records"])
        assert len(row["records"]) == 3


def test_sink_persistence_below_threshold():
    cfg = small_cfg(n=150, r=0.05, init=None, trials=3, max_steps=300, master_seed=5)
    rep = sink_persistence(cfg, epsilon=0.1)
    assert rep["escape_fraction"] == 0.0
    assert rep["consensus_fraction"] == 0.0
    want_center = fixed_point_locations("bo3", u_of_r(0.05))["d2*"]
    assert rep["center"] == pytest.approx(want_center, abs=1e-12)
    assert rep["horizon"] == 300 and rep["trials"] == 3


def test_sink_persistence_refuses_above_threshold():
    with pytest.raises(ValueError, match="threshold"):
        sink_persistence(small_cfg(r=0.3, init=None))


def test_escape_time_from_sink_stays_put():
    cfg = small_cfg(
        n=150, r=0.05, init="clustered(0.98,0)", trials=3, max_steps=300, master_seed=5
    )
    rep = escape_time(cfg, kappa=0.5, budget=120)
    assert rep["taus"] == [None, None, None]
    assert rep["all_within_budget"] is False
    assert rep["median_tau"] is None and rep["max_tau"] is None


def test_escape_time_trivial_start_outside_ball():
    cfg = small_cfg(
        n=150, r=0.05, init="clustered(0,0.5)", trials=2, max_steps=100, master_seed=5
    )
    rep = escape_time(cfg, kappa=0.3, budget=50)
    assert rep["taus"] == [0, 0]
    assert rep["median_tau"] == 0.0 and rep["max_tau"] == 0
    assert rep["all_within_budget"] is True


def test_escape_time_kappa_validation():
    cfg = small_cfg(n=150, r=0.05, init="clustered(0,0.5)")
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            escape_time(cfg, kappa=bad, budget=10)


def test_trajectory_deviation_fields():
    cfg = small_cfg(n=200, init="biased_global(0.1)", trials=4, max_steps=50, master_seed=5)
    rep = trajectory_deviation(cfg, t_max=5)
    assert rep["n"] == 200 and rep["trials"] == 4 and rep["t_max"] == 5
    assert len(rep["per_step_max"]) == 6 and rep["per_step_max"][0] == 0.0
    assert len(rep["per_trial_max"]) == 4
    want_bound = 1.0 / math.sqrt(200 * 0.3) + math.sqrt(math.log(200) / 200)
    assert rep["bound"] == pytest.approx(want_bound, abs=1e-12)
    assert rep["max_deviation"] == max(rep["per_trial_max"])
    assert rep["max_ratio"] == pytest.approx(rep["max_deviation"] / rep["bound"])


def test_adversarial_families_cover_fixed_points():
    fams = adversarial_families("bo3", 0.8, 1000)
    names = [str(f) for f in fams]
    assert len(fams) >= 12
    d2 = fixed_point_locations("bo3", 0.8)["d2*"][0]
    assert any(f"clustered({d2:.9g},0)" in s or "clustered(0.883" in s for s in names)
    assert "exact_counts(1000,1000)" in names
    # below the lower threshold only the consensus points remain
    assert len(adversarial_families("bo3", 0.5, 1000)) >= 12


def test_worst_case_scan():
    cfg = small_cfg(n=120, r=0.25, init=None, trials=2, max_steps=200, master_seed=5)
    rep = worst_case_scan(cfg)
    assert rep["family_count"] >= 12
    assert rep["total_trials"] == rep["family_count"] * 2
    assert rep["all_consensus"] is True
    stats = rep["families"]["exact_counts(120,120)"]
    assert stats["max_t_cons"] == 0 and stats["consensus_fraction"] == 1.0
    assert rep["max_t_cons"] == max(s["max_t_cons"] for s in rep["families"].values())


def test_consensus_time_scaling():
    cfg = small_cfg(r=0.25, trials=2, master_seed=5)
    rep = consensus_time_scaling(cfg, [60, 120])
    assert rep["status"] == "ok"
    assert set(rep["medians"]) == {60, 120}
    assert np.isfinite(rep["slope"]) and np.isfinite(rep["intercept"])


# --- results CSV ---


def test_write_results_csv_schema():
    cfg = small_cfg(n=80, trials=3, max_steps=60)
    recs = run_trials(cfg, "exp1")
    buf = io.StringIO()
    write_results_csv(cfg, recs, buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == RESULTS_HEADER
    assert len(lines) == 1 + 3
    row = lines[1].split(",")
    cols = RESULTS_HEADER.split(",")
    assert len(row) == len(cols)
    as_dict = dict(zip(cols, row))
    assert as_dict["model"] == "bo3" and int(as_dict["n"]) == 80
    assert float(as_dict["p"]) == 0.3
    assert float(as_dict["q"]) == pytest.approx(0.3 * 0.3)
    assert as_dict["init"] == "biased_global(0.2)"
    assert as_dict["timeout"] in ("0", "1")


def test_write_results_csv_blank_fields_on_timeout():
    cfg = small_cfg(n=80, trials=2, max_steps=1, init="clustered(0,0)")
    recs = run_trials(cfg, "exp1")
    assert any(r.timeout for r in recs)
    buf = io.StringIO()
    write_results_csv(cfg, recs, buf)
    buf.seek(0)
    rows = list(csv.DictReader(buf))
    assert len(rows) == len(recs)
    for as_dict, rec in zip(rows, recs):
        assert as_dict["init"] == "clustered(0,0)"
        if rec.timeout:
            assert as_dict["t_cons"] == "" and as_dict["final_opinion"] == ""
            assert as_dict["timeout"] == "1"


def test_write_results_csv_no_header_append():
    cfg = small_cfg(n=80, trials=1, max_steps=60)
    recs = run_trials(cfg, "exp1")
    buf = io.StringIO()
    write_results_csv(cfg, recs, buf, header=False)
    assert not buf.getvalue().startswith("model")
