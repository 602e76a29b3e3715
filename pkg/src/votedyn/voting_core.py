"""Polynomial voting rules and synchronous update steps.

A rule is a pair of polynomials (f1, f2) mapping [0,1] to [0,1]. At each
synchronous step, a vertex v currently holding opinion 1 keeps it with
probability f1(x) and a vertex holding opinion 2 switches with probability
f2(x), where x = deg_A(v)/deg(v) is the fraction of v's neighbors holding
opinion 1. Built-in rules also carry a sampling procedure (draw a few random
neighbors with replacement and apply a majority criterion) whose outcome
distribution equals the polynomial description exactly.

Isolated vertices keep their opinion forever; they still consume their random
draws so the stream layout of a step never depends on the state.

All randomness is consumed in fixed vertex order (one vectorized draw per
step), so a run is bit-reproducible given its generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from numpy.polynomial import polynomial as npoly

from .sbm_graph import Graph

__all__ = [
    "VotingRule",
    "OpinionState",
    "Trajectory",
    "InitFamily",
    "make_rule_bo3",
    "make_rule_bo2",
    "make_rule_best_of",
    "make_rule_polynomial",
    "state_from_member",
    "state_from_sets",
    "fractions",
    "to_delta",
    "from_delta",
    "step_probabilities",
    "step_probability",
    "step_sampling",
    "step",
    "run_until_consensus",
    "biased_global",
    "half_half",
    "clustered",
    "exact_counts",
    "random_density",
    "parse_init_family",
    "make_initial",
    "write_trajectory_csv",
]

RANGE_GRID = 1000  # rule range check resolution at construction
STATUS_CONSENSUS = "consensus"
STATUS_TIMEOUT = "timeout"


@dataclass
class VotingRule:
    """Polynomial voting rule; coefficient lists are ascending in degree.

    sampler is None for arbitrary polynomial rules, or one of "bo2", "bo3",
    "best_of_<m>" (m odd) to enable the neighbor-sampling step path.
    """

    name: str
    f1_coeffs: np.ndarray
    f2_coeffs: np.ndarray
    sampler: str | None = None

    def __post_init__(self):
        self.f1_coeffs = np.asarray(self.f1_coeffs, dtype=np.float64)
        self.f2_coeffs = np.asarray(self.f2_coeffs, dtype=np.float64)
        grid = np.linspace(0.0, 1.0, RANGE_GRID + 1)
        for tag, coeffs in (("f1", self.f1_coeffs), ("f2", self.f2_coeffs)):
            vals = npoly.polyval(grid, coeffs)
            # slack grows with the Horner forward-error bound so that exact
            # high-degree rules with huge alternating coefficients still pass
            slack = max(1e-9, 2 * len(coeffs) * np.finfo(np.float64).eps * np.abs(coeffs).sum())
            if vals.min() < -slack or vals.max() > 1 + slack:
                raise ValueError(f"{tag} leaves [0,1] on the probability grid")

    def f1(self, x):
        return npoly.polyval(x, self.f1_coeffs)

    def f2(self, x):
        return npoly.polyval(x, self.f2_coeffs)

    @property
    def symmetric(self) -> bool:
        a, b = self.f1_coeffs, self.f2_coeffs
        return a.shape == b.shape and bool(np.all(a == b))


def make_rule_bo3() -> VotingRule:
    """Majority of three neighbor samples (with replacement): f(x)=3x^2-2x^3."""
    c = np.array([0.0, 0.0, 3.0, -2.0])
    return VotingRule(name="bo3", f1_coeffs=c, f2_coeffs=c.copy(), sampler="bo3")


def make_rule_bo2() -> VotingRule:
    """Sample two neighbors with replacement; adopt their opinion iff they
    agree, else keep your own. Retention gives f1(x)=1-(1-x)^2=2x-x^2 and
    adoption gives f2(x)=x^2."""
    return VotingRule(
        name="bo2",
        f1_coeffs=np.array([0.0, 2.0, -1.0]),
        f2_coeffs=np.array([0.0, 0.0, 1.0]),
        sampler="bo2",
    )


def make_rule_best_of(k: int) -> VotingRule:
    """Majority among 2k+1 neighbor samples: f(x) = Pr[Bin(2k+1, x) >= k+1],
    expanded to monomial coefficients with exact integer arithmetic."""
    if k < 1 or 2 * k + 1 > 25:
        raise ValueError("k must satisfy 1 <= k and 2k+1 <= 25")
    m = 2 * k + 1
    coeffs = [0] * (m + 1)
    for i in range(k + 1, m + 1):
        c = math.comb(m, i)
        for j in range(m - i + 1):
            coeffs[i + j] += c * math.comb(m - i, j) * (-1) ** j
    arr = np.array(coeffs, dtype=np.float64)
    return VotingRule(name=f"best_of_{m}", f1_coeffs=arr, f2_coeffs=arr.copy(), sampler=f"best_of_{m}")


def make_rule_polynomial(name: str, f1_coeffs, f2_coeffs) -> VotingRule:
    """Arbitrary polynomial rule; steps use the probability path only."""
    return VotingRule(name=name, f1_coeffs=f1_coeffs, f2_coeffs=f2_coeffs, sampler=None)


@dataclass
class OpinionState:
    """Vertices holding opinion 1 as a boolean mask, with per-community counts."""

    member: np.ndarray
    count1: int
    count2: int

    @property
    def n(self) -> int:
        return self.member.size // 2


def state_from_member(member: np.ndarray) -> OpinionState:
    member = np.asarray(member, dtype=bool)
    n = member.size // 2
    return OpinionState(
        member=member,
        count1=int(np.count_nonzero(member[:n])),
        count2=int(np.count_nonzero(member[n:])),
    )


def state_from_sets(n: int, opinion_one) -> OpinionState:
    member = np.zeros(2 * n, dtype=bool)
    member[np.asarray(list(opinion_one), dtype=np.int64)] = True
    return state_from_member(member)


def fractions(s: OpinionState) -> tuple[float, float]:
    return s.count1 / s.n, s.count2 / s.n


def to_delta(a1: float, a2: float) -> tuple[float, float]:
    return a1 - a2, a1 + a2 - 1.0


def from_delta(d1: float, d2: float) -> tuple[float, float]:
    if abs(d1) + abs(d2) > 1.0 + 1e-12:
        raise ValueError("point outside |d1|+|d2| <= 1")
    return (1.0 + d2 + d1) / 2.0, (1.0 + d2 - d1) / 2.0


def _deg_in_a(g: Graph, member: np.ndarray) -> np.ndarray:
    # per-vertex count of neighbors holding opinion 1, safe for degree 0
    csum = np.concatenate(([0], np.cumsum(member[g.neighbors], dtype=np.int64)))
    return csum[g.offsets[1:]] - csum[g.offsets[:-1]]


def step_probabilities(g: Graph, s: OpinionState, rule: VotingRule) -> np.ndarray:
    """Exact per-vertex probability of holding opinion 1 after one step."""
    deg = g.degrees
    deg_a = _deg_in_a(g, s.member)
    safe = np.maximum(deg, 1)
    x = deg_a / safe
    prob = np.where(s.member, rule.f1(x), rule.f2(x))
    isolated = deg == 0
    if np.any(isolated):
        prob = np.where(isolated, s.member.astype(np.float64), prob)
    return np.clip(prob, 0.0, 1.0)


def step_probability(g: Graph, s: OpinionState, rule: VotingRule, rng: np.random.Generator) -> OpinionState:
    """One synchronous step drawing each vertex against its exact probability."""
    prob = step_probabilities(g, s, rule)
    u = rng.random(g.num_vertices)
    return state_from_member(u < prob)


def _sampler_draws(sampler: str) -> int:
    if sampler == "bo2":
        return 2
    if sampler == "bo3":
        return 3
    if sampler.startswith("best_of_"):
        m = int(sampler.rsplit("_", 1)[1])
        if m % 2 == 1:
            return m
    raise ValueError(f"unknown sampler tag: {sampler!r}")


def step_sampling(g: Graph, s: OpinionState, rule: VotingRule, rng: np.random.Generator) -> OpinionState:
    """One synchronous step by sampling neighbors with replacement."""
    if rule.sampler is None:
        raise ValueError("rule has no sampler tag; use step_probability")
    m = _sampler_draws(rule.sampler)
    nv = g.num_vertices
    deg = g.degrees
    safe = np.maximum(deg, 1)
    u = rng.random((nv, m))
    if g.neighbors.size == 0:
        return state_from_member(s.member.copy())
    idx = (u * safe[:, None]).astype(np.int64)
    np.minimum(idx, (safe - 1)[:, None], out=idx)
    # isolated vertices produce an out-of-segment index; clamp, the override
    # below discards whatever they read
    flat = np.minimum(g.offsets[:-1][:, None] + idx, g.neighbors.size - 1)
    votes = s.member[g.neighbors[flat]]
    ones = votes.sum(axis=1)
    if rule.sampler == "bo2":
        new = np.where(ones == 2, True, np.where(ones == 0, False, s.member))
    else:
        new = ones > m // 2
    isolated = deg == 0
    if np.any(isolated):
        new = np.where(isolated, s.member, new)
    return state_from_member(new)


def step(g: Graph, s: OpinionState, rule: VotingRule, rng: np.random.Generator) -> OpinionState:
    """Default step path: sampling when the rule has one, else probabilities."""
    if rule.sampler is not None:
        return step_sampling(g, s, rule, rng)
    return step_probability(g, s, rule, rng)


@dataclass
class Trajectory:
    """Per-step opinion fractions and the terminal status of a run.

    records holds (t, alpha1, alpha2) for every visited state when recording
    was requested (always at least the initial and final states otherwise).
    """

    records: list
    status: str
    final_opinion: int | None
    t_cons: int | None
    steps_run: int
    final_state: OpinionState = field(repr=False, default=None)


def run_until_consensus(
    g: Graph,
    s0: OpinionState,
    rule: VotingRule,
    max_steps: int,
    rng: np.random.Generator,
    record: bool = False,
) -> Trajectory:
    """Iterate steps until the opinion-1 set is empty or everything.

    Returns consensus time (the first such step index) or a timeout after
    max_steps steps. Timeouts are results, not errors.
    """
    if max_steps < 0:
        raise ValueError("max_steps must be >= 0")
    nv = g.num_vertices
    records = []
    s = s0
    t = 0
    while True:
        a1, a2 = fractions(s)
        if record or t == 0:
            records.append((t, a1, a2))
        total = s.count1 + s.count2
        if total == 0 or total == nv:
            if not record and t > 0:
                records.append((t, a1, a2))
            opinion = 1 if total == nv else 2
            return Trajectory(records, STATUS_CONSENSUS, opinion, t, t, s)
        if t == max_steps:
            if not record and t > 0:
                records.append((t, a1, a2))
            return Trajectory(records, STATUS_TIMEOUT, None, None, t, s)
        s = step(g, s, rule, rng)
        t += 1


@dataclass(frozen=True)
class InitFamily:
    """Named initial-condition family with numeric parameters."""

    kind: str
    params: tuple = ()

    def __str__(self):
        if not self.params:
            return self.kind
        inner = ",".join(format(p, "g") for p in self.params)
        return f"{self.kind}({inner})"


def biased_global(b: float) -> InitFamily:
    """|A| = (1+b)n, split evenly across the two communities."""
    return InitFamily("biased_global", (float(b),))


def half_half() -> InitFamily:
    return InitFamily("half_half")


def clustered(d1: float, d2: float) -> InitFamily:
    """Counts matching delta coordinates: |A_i| = round(n(1+d2±d1)/2)."""
    return InitFamily("clustered", (float(d1), float(d2)))


def exact_counts(c1: int, c2: int) -> InitFamily:
    return InitFamily("exact_counts", (int(c1), int(c2)))


def random_density(rho: float) -> InitFamily:
    """Each vertex independently holds opinion 1 with probability rho."""
    return InitFamily("random_density", (float(rho),))


def parse_init_family(text: str) -> InitFamily:
    """Parse the compact form used on the command line, e.g. clustered(0.3,0.1)."""
    text = text.strip()
    if "(" not in text:
        kind, params = text, ()
    else:
        if not text.endswith(")"):
            raise ValueError(f"malformed init family: {text!r}")
        kind, inner = text[:-1].split("(", 1)
        params = tuple(float(tok) for tok in inner.split(",") if tok.strip())
    known = {"biased_global": 1, "half_half": 0, "clustered": 2, "exact_counts": 2, "random_density": 1}
    if kind not in known:
        raise ValueError(f"unknown init family: {kind!r}")
    if len(params) != known[kind]:
        raise ValueError(f"{kind} expects {known[kind]} parameter(s)")
    if kind == "exact_counts":
        params = tuple(int(p) for p in params)
    return InitFamily(kind, params)


def _pick(rng: np.random.Generator, n: int, count: int, base: int, member: np.ndarray) -> None:
    member[base + rng.permutation(n)[:count]] = True


def make_initial(g: Graph, family: InitFamily, rng: np.random.Generator) -> OpinionState:
    """Deterministic given (family, generator state). Count-based families
    choose members uniformly at random within each community."""
    n = g.n
    if family.kind == "random_density":
        rho = family.params[0]
        if not 0.0 <= rho <= 1.0:
            raise ValueError("density must lie in [0,1]")
        return state_from_member(rng.random(2 * n) < rho)

    if family.kind == "biased_global":
        b = family.params[0]
        c1 = c2 = round(n * (1 + b) / 2)
    elif family.kind == "half_half":
        c1 = c2 = round(n / 2)
    elif family.kind == "clustered":
        d1, d2 = family.params
        c1 = round(n * (1 + d2 + d1) / 2)
        c2 = round(n * (1 + d2 - d1) / 2)
    elif family.kind == "exact_counts":
        c1, c2 = family.params
    else:
        raise ValueError(f"unknown init family: {family.kind!r}")

    if not (0 <= c1 <= n and 0 <= c2 <= n):
        raise ValueError(f"init family {family} needs counts in [0, {n}], got ({c1}, {c2})")
    member = np.zeros(2 * n, dtype=bool)
    _pick(rng, n, int(c1), 0, member)
    _pick(rng, n, int(c2), n, member)
    return state_from_member(member)


def write_trajectory_csv(traj: Trajectory, fh) -> None:
    """Header t,alpha1,alpha2,delta1,delta2; floats with 9 significant digits;
    a final comment line carries the terminal status."""
    fh.write("t,alpha1,alpha2,delta1,delta2\n")
    for t, a1, a2 in traj.records:
        d1, d2 = to_delta(a1, a2)
        fh.write(f"{t},{a1:.9g},{a2:.9g},{d1:.9g},{d2:.9g}\n")
    if traj.status == STATUS_CONSENSUS:
        fh.write(f"# status=consensus opinion={traj.final_opinion} t_cons={traj.t_cons}\n")
    else:
        fh.write(f"# status=timeout steps={traj.steps_run}\n")
