"""Empirical concentration diagnostics on generated graphs.

Two families of probes:

* W-statistics: W(S0; S1..Sl) = sum over s in S0 of the product of deg_Si(s),
  compared against the independent-edges ideal W-hat, normalized by
  N(Np)^(l-1/2) with N = 2n and p the larger edge probability.

* Goodness probes: normalized discrepancies between per-vertex sums of
  f(deg_A(v)/deg(v)) and their community-level ideals |S∩V_i| f(z_i) with
  z_i = (|A_i| p + |A_{3-i}| q)/(n(p+q)), at the two scales sqrt(n/p) and
  |A| sqrt(ln n/(np)), plus the one-step variance of |A'_i| against its
  two-term polynomial ideal.

These quantify over all subsets in principle; the scans sample random and
structured families and report empirical constants. Logs are natural.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .sbm_graph import Graph
from .voting_core import OpinionState, VotingRule, step_probabilities

__all__ = [
    "WStatReport",
    "w_stat",
    "w_hat",
    "w_concentration_scan",
    "p2_scan",
    "p3_scan",
    "variance_profile",
    "goodness_report",
]


def _as_mask(nv: int, s) -> np.ndarray:
    s = np.asarray(s)
    if s.dtype == bool:
        if s.size != nv:
            raise ValueError("mask length does not match vertex count")
        return s
    mask = np.zeros(nv, dtype=bool)
    mask[s.astype(np.int64)] = True
    return mask


def _deg_in(g: Graph, mask: np.ndarray) -> np.ndarray:
    csum = np.concatenate(([0], np.cumsum(mask[g.neighbors], dtype=np.int64)))
    return csum[g.offsets[1:]] - csum[g.offsets[:-1]]


def w_stat(g: Graph, s0, sets) -> float:
    """Exact crossing-star count: sum over s0 of the product of per-set degrees."""
    if len(sets) < 1:
        raise ValueError("need at least one set")
    nv = g.num_vertices
    prod = np.ones(nv, dtype=np.int64)
    for s in sets:
        prod *= _deg_in(g, _as_mask(nv, s))
    return float(prod[_as_mask(nv, s0)].sum())


def w_hat(n: int, p: float, q: float, s0, sets) -> float:
    """Ideal W under independent edges: expected degrees use the per-community
    membership counts of each set, excluding the vertex itself."""
    if len(sets) < 1:
        raise ValueError("need at least one set")
    nv = 2 * n
    own = np.empty(nv, dtype=np.float64)
    other = np.empty(nv, dtype=np.float64)
    prod = np.ones(nv, dtype=np.float64)
    for s in sets:
        mask = _as_mask(nv, s)
        c1 = int(np.count_nonzero(mask[:n]))
        c2 = int(np.count_nonzero(mask[n:]))
        own[:n], own[n:] = c1, c2
        other[:n], other[n:] = c2, c1
        prod = prod * ((own - mask) * p + other * q)
    return float(prod[_as_mask(nv, s0)].sum())


@dataclass
class WStatReport:
    l: int
    samples: int
    max_normalized_dev: float


def _mask_pool(g: Graph, rng: np.random.Generator) -> list[np.ndarray]:
    nv = g.num_vertices
    small = max(1, math.isqrt(nv))
    front = np.zeros(nv, dtype=bool)
    front[:small] = True
    rand_small = np.zeros(nv, dtype=bool)
    rand_small[rng.permutation(nv)[:small]] = True
    v1 = np.zeros(nv, dtype=bool)
    v1[: g.n] = True
    return [np.ones(nv, dtype=bool), v1, ~v1, front, rand_small]


def w_concentration_scan(g: Graph, l: int, samples: int, rng: np.random.Generator) -> WStatReport:
    """Max normalized |W - W_hat| over sampled tuples. The first two samples
    are the fully structured tuples (V; V,..) and (V1; V2,..); later slots mix
    pool picks (whole graph, communities, small sets) with uniform subsets."""
    if l not in (1, 2, 3):
        raise ValueError("l must be 1, 2, or 3")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    nv = g.num_vertices
    pool = _mask_pool(g, rng)
    norm = nv * (nv * g.p) ** (l - 0.5)
    worst = 0.0
    for k in range(samples):
        if k == 0:
            s0, sets = pool[0], [pool[0]] * l
        elif k == 1:
            s0, sets = pool[1], [pool[2]] * l
        else:
            def draw():
                if rng.random() < 0.5:
                    return pool[rng.integers(len(pool))]
                return rng.random(nv) < 0.5

            s0, sets = draw(), [draw() for _ in range(l)]
        dev = abs(w_stat(g, s0, sets) - w_hat(g.n, g.p, g.q, s0, sets)) / norm
        worst = max(worst, dev)
    return WStatReport(l=l, samples=samples, max_normalized_dev=worst)


def _ratio_profile(g: Graph, a_mask: np.ndarray):
    deg = g.degrees
    x = _deg_in(g, a_mask) / np.maximum(deg, 1)
    c1 = int(np.count_nonzero(a_mask[: g.n]))
    c2 = int(np.count_nonzero(a_mask[g.n :]))
    denom = g.n * (g.p + g.q)
    z1 = (c1 * g.p + c2 * g.q) / denom
    z2 = (c2 * g.p + c1 * g.q) / denom
    return x, (c1, c2), (z1, z2)


def _community_sums(g: Graph, s_mask: np.ndarray, values: np.ndarray):
    n = g.n
    in1 = s_mask[:n]
    in2 = s_mask[n:]
    return (
        (float(values[:n][in1].sum()), int(np.count_nonzero(in1))),
        (float(values[n:][in2].sum()), int(np.count_nonzero(in2))),
    )


def p2_scan(g: Graph, rule: VotingRule, samples: int, rng: np.random.Generator) -> float:
    """Max over sampled (A, S, community, f in {f1,f2}) of
    |sum_{v in S∩V_i} f(x_v) - |S∩V_i| f(z_i)| / sqrt(n/p)."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    nv = g.num_vertices
    norm = math.sqrt(g.n / g.p)
    pool = _mask_pool(g, rng)
    worst = 0.0
    for _ in range(samples):
        a_mask = rng.random(nv) < rng.uniform(0.05, 0.95)
        x, _, (z1, z2) = _ratio_profile(g, a_mask)
        s_choices = [pool[0], pool[1], pool[2], a_mask, ~a_mask, rng.random(nv) < 0.5]
        s_mask = s_choices[rng.integers(len(s_choices))]
        for f in (rule.f1, rule.f2):
            fx = f(x)
            (sum1, cnt1), (sum2, cnt2) = _community_sums(g, s_mask, fx)
            worst = max(
                worst,
                abs(sum1 - cnt1 * f(z1)) / norm,
                abs(sum2 - cnt2 * f(z2)) / norm,
            )
    return float(worst)


def p3_scan(
    g: Graph,
    rule: VotingRule,
    samples: int,
    rng: np.random.Generator,
    sizes=None,
) -> float:
    """One-sided small-set probe: max over samples of
    (sum_{v in S∩V_i} f(x_v) - |S∩V_i| f(z_i)) / (|A| sqrt(ln n/(np))),
    with |A| cycling {sqrt(n), n/ln n, 0.01*2n} (or the given sizes) and
    S in {A, V\\A, V}."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    nv = g.num_vertices
    n = g.n
    if sizes is None:
        sizes = [
            max(1, round(math.sqrt(n))),
            max(1, round(n / math.log(n))),
            max(1, round(0.01 * nv)),
        ]
    sizes = [int(s) for s in sizes]
    if any(s < 1 or s > nv for s in sizes):
        raise ValueError("sizes must lie in [1, 2n]")
    scale = math.sqrt(math.log(n) / (n * g.p))
    full = np.ones(nv, dtype=bool)
    worst = 0.0
    for k in range(samples):
        size = sizes[k % len(sizes)]
        a_mask = np.zeros(nv, dtype=bool)
        a_mask[rng.permutation(nv)[:size]] = True
        x, _, (z1, z2) = _ratio_profile(g, a_mask)
        for s_mask in (a_mask, ~a_mask, full):
            for f in (rule.f1, rule.f2):
                fx = f(x)
                (sum1, cnt1), (sum2, cnt2) = _community_sums(g, s_mask, fx)
                worst = max(
                    worst,
                    (sum1 - cnt1 * f(z1)) / (size * scale),
                    (sum2 - cnt2 * f(z2)) / (size * scale),
                )
    return float(max(worst, 0.0))


def variance_profile(g: Graph, rule: VotingRule, states) -> float:
    """Max over states and communities of the normalized gap between the exact
    one-step variance of |A'_i| and its ideal |A_i| g1(z_i) + (n-|A_i|) g2(z_i),
    where g_k(x) = f_k(x)(1 - f_k(x)); normalization sqrt(n/p)."""
    n = g.n
    norm = math.sqrt(n / g.p)
    worst = 0.0
    for s in states:
        prob = step_probabilities(g, s, rule)
        var_terms = prob * (1.0 - prob)
        x, (c1, c2), (z1, z2) = _ratio_profile(g, s.member)
        for lo, hi, cnt, z in ((0, n, c1, z1), (n, 2 * n, c2, z2)):
            exact = float(var_terms[lo:hi].sum())
            g1 = rule.f1(z) * (1.0 - rule.f1(z))
            g2 = rule.f2(z) * (1.0 - rule.f2(z))
            ideal = cnt * g1 + (n - cnt) * g2
            worst = max(worst, abs(exact - ideal) / norm)
    return float(worst)


def goodness_report(
    g: Graph,
    rule: VotingRule,
    samples: int,
    rng: np.random.Generator,
    w_orders=(1, 2, 3),
    n_states: int = 20,
    p3_sizes=None,
) -> dict:
    """Run every probe on one graph and collect the empirical constants."""
    from .voting_core import state_from_member

    states = [
        state_from_member(rng.random(g.num_vertices) < rng.uniform(0.05, 0.95))
        for _ in range(n_states)
    ]
    report = {
        "rule": rule.name,
        "n": g.n,
        "p": g.p,
        "q": g.q,
        "samples": samples,
        "p2_max": p2_scan(g, rule, samples, rng),
        "p3_max": p3_scan(g, rule, samples, rng, sizes=p3_sizes),
        "variance_max_dev": variance_profile(g, rule, states),
        "w_max_normalized_dev": {
            str(l): w_concentration_scan(g, l, samples, rng).max_normalized_dev
            for l in w_orders
        },
    }
    return report
