"""Optimal occupancy-aware node specializations.

Node *types* are occupancies ``1..n``.  A plan picks ``k`` specializations
(capacities) ``x_1 < ... < x_{k-1} < n`` and maps every type to the smallest
chosen capacity that covers it.  Sequences passed in here are 0-based
containers of 1-based types: ``s[i - 1]`` is the byte size of specialization
``i`` and ``f[i - 1]`` the number of nodes holding exactly ``i`` entries.

Costs are exact integers throughout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import Infeasible, InvalidArgument

PLAN_MAGIC = "verkledb-plan 1"

# saturating "infeasible" sentinel for the int64 fast path
INFEASIBLE = 1 << 62
_INT64_SAFE = 1 << 61


@dataclass(frozen=True)
class SpecializationPlan:
    n: int
    k: int
    splits: tuple[int, ...]
    mapping: tuple[int, ...]
    remapped: tuple[int, ...]
    total_cost: int

    @property
    def capacities(self) -> tuple[int, ...]:
        """Specializations actually instantiated (after remapping)."""
        return tuple(sorted(set(self.remapped)))

    def phi(self, i: int) -> int:
        return self.remapped[i - 1]


def cumulative(f: Sequence[int]) -> list[int]:
    out = [0]
    for count in f:
        if count < 0:
            raise InvalidArgument("frequencies must be non-negative")
        out.append(out[-1] + int(count))
    return out


def interval_cost(i: int, j: int, s: Sequence[int], F: Sequence[int]) -> int:
    """Bytes spent when types ``i..j`` all use specialization ``j``."""
    if not 1 <= i <= j < len(F):
        raise InvalidArgument(f"invalid interval [{i}, {j}]")
    return int(s[j - 1]) * (F[j] - F[i - 1])


def monotone_envelope(s: Sequence[int]) -> list[int]:
    """Suffix minimum: the cheapest specialization that can hold type ``i``."""
    out = [0] * len(s)
    best = None
    for idx in range(len(s) - 1, -1, -1):
        v = int(s[idx])
        best = v if best is None or v < best else best
        out[idx] = best
    return out


def is_monotone(s: Sequence[int]) -> bool:
    return all(a <= b for a, b in zip(s, s[1:]))


def normalized_mapping(n: int, splits: Sequence[int]) -> tuple[int, ...]:
    bounds = list(splits) + [n]
    mapping = []
    pos = 0
    for i in range(1, n + 1):
        while bounds[pos] < i:
            pos += 1
        mapping.append(bounds[pos])
    return tuple(mapping)


def plan_cost(mapping: Sequence[int], s: Sequence[int], f: Sequence[int]) -> int:
    """Element-wise cost ``sum(s(phi(i)) * f(i))``."""
    return sum(int(s[m - 1]) * int(c) for m, c in zip(mapping, f))


def _check(n: int, k: int, s: Sequence[int], f: Sequence[int]) -> None:
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if len(s) != n or len(f) != n:
        raise InvalidArgument(f"expected {n} space and frequency entries")
    if k == 0 or k < 0:
        raise InvalidArgument("k must be >= 1")
    if k > n:
        raise Infeasible(f"cannot choose {k} specializations from {n} node types")
    if any(v < 0 for v in s):
        raise InvalidArgument("space costs must be non-negative")


def dp_tables(n: int, k: int, s: Sequence[int], f: Sequence[int]):
    """Cost matrix ``y[l][j]`` and witnesses ``w[l][j]`` (both 1-based, row 0 / col 0 unused)."""
    F = cumulative(f)
    big = int(s[-1]) * F[-1] >= _INT64_SAFE if n else False
    dtype = object if big else np.int64
    inf = INFEASIBLE if not big else None
    Fv = np.array(F, dtype=dtype)
    sv = np.array([0] + [int(v) for v in s], dtype=dtype)
    y = np.zeros((k + 1, n + 1), dtype=dtype)
    w = np.zeros((k + 1, n + 1), dtype=np.int64)
    y[1, 1:] = sv[1:] * Fv[1:]
    if big:
        inf = int(y[1, n]) * (n + 1) + 1
    y[2:, 1] = inf
    # cand[i, j] = s(j) * (F[j] - F[i]) for i < j: cost of interval [i+1, j]
    jj = np.arange(n + 1)
    tail = sv[None, :] * (Fv[None, :] - Fv[:, None])
    lower = jj[:, None] >= jj[None, :]  # i >= j is not a valid split
    lower[0, :] = True
    fill = inf * 2 + 1 if big else np.iinfo(np.int64).max
    for l in range(2, k + 1):
        prev = y[l - 1]
        cand = prev[:, None] + tail
        if big:
            cand = np.where(prev[:, None] >= inf, inf, cand)
        else:
            cand = np.minimum(cand, inf)
        cand = np.where(lower, fill, cand)
        arg = np.argmin(cand[:, 2:], axis=0)
        y[l, 2:] = cand[arg, np.arange(2, n + 1)]
        w[l, 2:] = arg
        y[l, 2:] = np.minimum(y[l, 2:], inf) if not big else np.where(y[l, 2:] >= inf, inf, y[l, 2:])
    return y, w, inf


def solve(n: int, k: int, s: Sequence[int], f: Sequence[int]) -> SpecializationPlan:
    """Optimal normalized k-specialization for a monotone space function."""
    _check(n, k, s, f)
    if not is_monotone(s):
        raise InvalidArgument("space function must be monotone; apply monotone_envelope first")
    y, w, inf = dp_tables(n, k, s, f)
    cost = int(y[k, n])
    if cost >= inf:
        raise Infeasible(f"no {k}-partition of {n} node types")
    splits = []
    j = n
    for l in range(k, 1, -1):
        j = int(w[l, j])
        splits.append(j)
    splits.reverse()
    mapping = normalized_mapping(n, splits)
    return SpecializationPlan(n, k, tuple(splits), mapping, mapping, cost)


def brute_force(n: int, k: int, s: Sequence[int], f: Sequence[int]) -> tuple[int, tuple[int, ...]]:
    """Exhaustive optimum over all ``C(n-1, k-1)`` split sets.

    Among equal-cost split sets the one that is smallest when compared from
    the last split backwards is returned, which is the set witness
    backtracking produces.
    """
    _check(n, k, s, f)
    best = None
    for splits in itertools.combinations(range(1, n), k - 1):
        cost = plan_cost(normalized_mapping(n, splits), s, f)
        key = (cost, tuple(reversed(splits)))
        if best is None or key < best[0]:
            best = (key, splits)
    return best[0][0], tuple(best[1])


def remap(plan: SpecializationPlan, original_s: Sequence[int]) -> SpecializationPlan:
    """Re-target each type to the cheapest original specialization at or above ``phi(i)``."""
    n = plan.n
    if len(original_s) != n:
        raise InvalidArgument(f"expected {n} space entries")
    best_from = [0] * (n + 2)
    best = None
    for l in range(n, 0, -1):
        if best is None or original_s[l - 1] <= original_s[best - 1]:
            best = l
        best_from[l] = best
    remapped = tuple(best_from[m] for m in plan.mapping)
    return SpecializationPlan(plan.n, plan.k, plan.splits, plan.mapping, remapped, plan.total_cost)


def optimize(n: int, k: int, s: Sequence[int], f: Sequence[int]) -> SpecializationPlan:
    """Envelope, solve and remap in one step; accepts non-monotone ``s``."""
    env = monotone_envelope(s)
    return remap(solve(n, k, env, f), s)


def pareto_sweep(n: int, k_range: Iterable[int], s: Sequence[int], f: Sequence[int]):
    """One optimal plan per k.  Returns a list of ``(k, cost, plan)``."""
    rows = []
    for k in k_range:
        plan = optimize(n, k, s, f)
        rows.append((k, plan.total_cost, plan))
    return rows


def split_budget(total_k: int, s_a, f_a, s_b, f_b) -> tuple[SpecializationPlan, SpecializationPlan]:
    """Best division of ``total_k`` specializations between two node kinds."""
    n_a, n_b = len(s_a), len(s_b)
    if total_k < 2:
        raise Infeasible("each node kind needs at least one specialization")
    sweep_a = {k: p for k, _, p in pareto_sweep(n_a, range(1, min(total_k - 1, n_a) + 1), s_a, f_a)}
    sweep_b = {k: p for k, _, p in pareto_sweep(n_b, range(1, min(total_k - 1, n_b) + 1), s_b, f_b)}
    best = None
    for ka, pa in sweep_a.items():
        kb = total_k - ka
        if kb not in sweep_b:
            continue
        pb = sweep_b[kb]
        cost = pa.total_cost + pb.total_cost
        if best is None or cost < best[0]:
            best = (cost, pa, pb)
    if best is None:
        raise Infeasible(f"cannot split {total_k} specializations across {n_a} and {n_b} types")
    return best[1], best[2]


def plan_from_capacities(n: int, capacities: Iterable[int]) -> SpecializationPlan:
    """Plan that maps each type to the smallest listed capacity (cost left at 0)."""
    caps = sorted(set(int(c) for c in capacities))
    if not caps or caps[-1] != n or caps[0] < 1:
        raise InvalidArgument(f"capacities must lie in [1, {n}] and include {n}")
    mapping = normalized_mapping(n, caps[:-1])
    return SpecializationPlan(n, len(caps), tuple(caps[:-1]), mapping, mapping, 0)


# -- plan files -----------------------------------------------------------------

def format_plans(plans: dict[str, SpecializationPlan]) -> str:
    lines = [PLAN_MAGIC]
    for kind, plan in plans.items():
        lines += [
            f"kind {kind}",
            f"n {plan.n}",
            f"k {plan.k}",
            "splits " + " ".join(map(str, plan.splits)),
            f"cost {plan.total_cost}",
            "mapping " + " ".join(map(str, plan.mapping)),
            "remapped " + " ".join(map(str, plan.remapped)),
            "end",
        ]
    return "\n".join(lines) + "\n"


def parse_plans(text: str) -> dict[str, SpecializationPlan]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != PLAN_MAGIC:
        raise InvalidArgument("not a plan file (bad header)")
    plans: dict[str, SpecializationPlan] = {}
    fields: dict[str, str] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        key, _, rest = line.partition(" ")
        if key == "end":
            try:
                ints = lambda name: tuple(int(v) for v in fields[name].split())  # noqa: E731
                plan = SpecializationPlan(
                    int(fields["n"]), int(fields["k"]), ints("splits"),
                    ints("mapping"), ints("remapped"), int(fields["cost"]),
                )
            except (KeyError, ValueError) as exc:
                raise InvalidArgument(f"plan file line {lineno}: incomplete section ({exc})") from None
            if len(plan.mapping) != plan.n or any(m < i + 1 for i, m in enumerate(plan.remapped)):
                raise InvalidArgument(f"plan file line {lineno}: mapping violates coverage")
            plans[fields["kind"]] = plan
            fields = {}
        else:
            fields[key] = rest
    if fields:
        raise InvalidArgument("plan file ends inside a section")
    return plans


def write_plans(path: str | Path, plans: dict[str, SpecializationPlan]) -> None:
    Path(path).write_text(format_plans(plans))


def read_plans(path: str | Path) -> dict[str, SpecializationPlan]:
    return parse_plans(Path(path).read_text())
