"""Exact inference: enumeration oracle, elimination orders, bucket elimination.

Factors are stored in log space with exact ``-inf`` markers for zero
probability, so determinism-induced zeros never degrade into tiny floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterator, Protocol

import numpy as np
from scipy.special import logsumexp

from .model import BayesianNetwork, evidence_indices, joint_log_prob_batch

DEFAULT_ENUMERATION_CAP = 1 << 24
DEFAULT_TABLE_CELL_CAP = 1 << 22
_CHUNK = 1 << 16


class EnumerationCapError(RuntimeError):
    """Joint state space exceeds the configured enumeration cap."""


class TableCapError(RuntimeError):
    """An intermediate elimination table exceeds the memory cap."""


class DominationError(RuntimeError):
    """A proposal assigns zero probability to a positive-probability instance."""


class LogDensity(Protocol):
    def log_prob(self, assignment: dict[str, int]) -> float: ...


@dataclass(frozen=True)
class Factor:
    """Nonnegative table over a variable scope, stored as log values."""

    scope: tuple[str, ...]
    logs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.logs, dtype=np.float64)
        object.__setattr__(self, "logs", arr)

    @property
    def size(self) -> int:
        return self.logs.size

    def multiply(self, other: "Factor") -> "Factor":
        scope = self.scope + tuple(v for v in other.scope if v not in self.scope)
        return Factor(scope, _aligned(self, scope) + _aligned(other, scope))

    def marginalize(self, var: str) -> "Factor":
        ax = self.scope.index(var)
        with np.errstate(invalid="ignore"):
            vals = logsumexp(self.logs, axis=ax)
        vals = np.where(np.isnan(vals), -np.inf, vals)
        return Factor(self.scope[:ax] + self.scope[ax + 1:], vals)

    def clamp(self, var: str, state: int) -> "Factor":
        """Zero out every entry where ``var`` differs from ``state``."""
        ax = self.scope.index(var)
        logs = self.logs.copy()
        idx = [slice(None)] * logs.ndim
        keep = logs[tuple(idx[:ax] + [state] + idx[ax + 1:])].copy()
        logs[...] = -np.inf
        logs[tuple(idx[:ax] + [state] + idx[ax + 1:])] = keep
        return Factor(self.scope, logs)

    def transpose(self, scope: tuple[str, ...]) -> "Factor":
        if set(scope) != set(self.scope):
            raise ValueError("transpose scope must be a permutation")
        perm = [self.scope.index(v) for v in scope]
        return Factor(tuple(scope), np.transpose(self.logs, perm))


def _aligned(factor: Factor, target: tuple[str, ...]) -> np.ndarray:
    present = [v for v in target if v in factor.scope]
    perm = [factor.scope.index(v) for v in present]
    arr = np.transpose(factor.logs, perm)
    sizes = iter(arr.shape)
    shape = [next(sizes) if v in factor.scope else 1 for v in target]
    return arr.reshape(shape)


def cpt_factor(net: BayesianNetwork, name: str) -> Factor:
    """CPT of ``name`` as a log factor with scope ``parents + (child,)``."""
    c = net.cpt(name)
    shape = tuple(net.card(p) for p in c.parents) + (net.card(name),)
    with np.errstate(divide="ignore"):
        logs = np.log(c.table).reshape(shape)
    return Factor(c.parents + (name,), logs)


# ---------------------------------------------------------------------------
# Enumeration oracle
# ---------------------------------------------------------------------------

def iter_full_matrices(net: BayesianNetwork, evidence: dict[str, str] | None,
                       cap: int = DEFAULT_ENUMERATION_CAP,
                       chunk: int = _CHUNK) -> Iterator[np.ndarray]:
    """Yield batches of full assignments covering the unobserved state space.

    Matrix columns follow the declaration order; observed columns are fixed.
    """
    ev = evidence_indices(net, evidence or {})
    hidden = [n for n in net.names if n not in ev]
    total = 1
    for h in hidden:
        total *= net.card(h)
    if total > cap:
        raise EnumerationCapError(
            f"joint space of {total} states exceeds cap {cap}")
    dims = tuple(net.card(h) for h in hidden)
    hcols = [net.index(h) for h in hidden]
    base = np.zeros(len(net.names), dtype=np.int64)
    for name, idx in ev.items():
        base[net.index(name)] = idx
    for lo in range(0, total, chunk):
        hi = min(lo + chunk, total)
        matrix = np.tile(base, (hi - lo, 1))
        if hidden:
            coords = np.unravel_index(np.arange(lo, hi), dims)
            for col, coord in zip(hcols, coords):
                matrix[:, col] = coord
        yield matrix


def enumerate_likelihood(net: BayesianNetwork, evidence: dict[str, str] | None,
                         cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Exact log P(e) by brute-force summation over all unobserved states."""
    parts = []
    for matrix in iter_full_matrices(net, evidence, cap):
        parts.append(logsumexp(joint_log_prob_batch(net, matrix)))
    return float(logsumexp(parts))


# ---------------------------------------------------------------------------
# Elimination orders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EliminationOrder:
    order: tuple[str, ...]
    cluster_sizes: tuple[int, ...]

    @property
    def width(self) -> int:
        return max(self.cluster_sizes) - 1 if self.cluster_sizes else 0


def min_fill_order(net: BayesianNetwork) -> EliminationOrder:
    """Greedy min-fill order on the moral graph.

    Ties break on (fill count, degree, declaration index) so repeated runs are
    identical.
    """
    adj: dict[str, set[str]] = {n: set() for n in net.names}
    for c in net.cpts:
        family = list(c.parents) + [c.child]
        for i, a in enumerate(family):
            for b in family[i + 1:]:
                if a != b:
                    adj[a].add(b)
                    adj[b].add(a)

    order: list[str] = []
    sizes: list[int] = []
    remaining = set(net.names)
    while remaining:
        best = None
        for name in net.names:
            if name not in remaining:
                continue
            nbrs = [m for m in adj[name] if m in remaining]
            fill = 0
            for i, a in enumerate(nbrs):
                for b in nbrs[i + 1:]:
                    if b not in adj[a]:
                        fill += 1
            key = (fill, len(nbrs), net.index(name))
            if best is None or key < best[0]:
                best = (key, name, nbrs)
        _, name, nbrs = best
        order.append(name)
        sizes.append(len(nbrs) + 1)
        for i, a in enumerate(nbrs):
            for b in nbrs[i + 1:]:
                adj[a].add(b)
                adj[b].add(a)
        remaining.remove(name)
    return EliminationOrder(tuple(order), tuple(sizes))


# ---------------------------------------------------------------------------
# Bucket elimination
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bucket:
    variable: str
    joint_table: Factor      # over the bucket scope including its variable
    marginal_table: Factor   # after summing the variable out


@dataclass(frozen=True)
class BucketScheme:
    sampling_order: tuple[str, ...]      # reverse elimination order
    d_index: dict[str, int]              # position of each variable in the order
    buckets: dict[str, Bucket]
    cpt_buckets: dict[str, str]          # input CPT child -> bucket variable


def bucket_eliminate(net: BayesianNetwork, evidence: dict[str, str] | None,
                     order: EliminationOrder | None = None,
                     cell_cap: int = DEFAULT_TABLE_CELL_CAP,
                     ) -> tuple[float, BucketScheme]:
    """Bucket elimination for log P(e), retaining all intermediate tables.

    Every input CPT lands in the bucket of its scope variable that is
    eliminated first.  Buckets of observed variables are clamped to the
    observed state before summing the variable out.  The retained joint and
    marginal tables per bucket are what proposal construction consumes.
    """
    ev = evidence_indices(net, evidence or {})
    if order is None:
        order = min_fill_order(net)
    if set(order.order) != set(net.names):
        raise ValueError("elimination order must cover every variable exactly once")
    sampling_order = tuple(reversed(order.order))
    d_index = {name: i for i, name in enumerate(sampling_order)}

    pending: dict[str, list[Factor]] = {n: [] for n in net.names}
    cpt_buckets: dict[str, str] = {}
    for name in net.names:
        f = cpt_factor(net, name)
        target = max(f.scope, key=d_index.__getitem__)
        pending[target].append(f)
        cpt_buckets[name] = target

    buckets: dict[str, Bucket] = {}
    constants: list[float] = []
    for name in order.order:
        tables = pending.pop(name)
        if not tables:
            # Unreachable for well-formed networks: each variable's own CPT
            # keeps it referenced until its bucket is processed.
            joint = Factor((name,), np.zeros(net.card(name)))
            if name in ev:
                joint = joint.clamp(name, ev[name])
            buckets[name] = Bucket(name, joint, joint.marginalize(name))
            continue
        size = 1
        scope_vars: set[str] = set()
        for t in tables:
            scope_vars.update(t.scope)
        for v in scope_vars:
            size *= net.card(v)
        if size > cell_cap:
            raise TableCapError(
                f"bucket for {name!r} needs {size} cells, cap is {cell_cap}")
        joint = reduce(Factor.multiply, tables)
        if name in ev:
            joint = joint.clamp(name, ev[name])
        marginal = joint.marginalize(name)
        buckets[name] = Bucket(name, joint, marginal)
        if marginal.scope:
            target = max(marginal.scope, key=d_index.__getitem__)
            pending[target].append(marginal)
        else:
            constants.append(float(marginal.logs))
    log_p = float(sum(constants))
    return log_p, BucketScheme(sampling_order, d_index, buckets, cpt_buckets)


def prior_marginal(net: BayesianNetwork, keep: tuple[str, ...],
                   order: EliminationOrder | None = None,
                   cell_cap: int = DEFAULT_TABLE_CELL_CAP) -> Factor:
    """Joint marginal over ``keep`` (no evidence) via variable elimination.

    ``order`` only depends on the network structure, so callers doing many
    marginals on networks that share a structure should pass it in.
    """
    if order is None:
        order = min_fill_order(net)
    elim = [v for v in order.order if v not in keep]
    factors = [cpt_factor(net, name) for name in net.names]
    for name in elim:
        touching = [f for f in factors if name in f.scope]
        rest = [f for f in factors if name not in f.scope]
        if not touching:
            continue
        scope_vars: set[str] = set()
        for t in touching:
            scope_vars.update(t.scope)
        size = 1
        for v in scope_vars:
            size *= net.card(v)
        if size > cell_cap:
            raise TableCapError(
                f"eliminating {name!r} needs {size} cells, cap is {cell_cap}")
        factors = rest + [reduce(Factor.multiply, touching).marginalize(name)]
    result = reduce(Factor.multiply, factors)
    return result.transpose(tuple(keep))


# ---------------------------------------------------------------------------
# Exact proposal diagnostics
# ---------------------------------------------------------------------------

def _proposal_log_probs(q, net: BayesianNetwork, matrix: np.ndarray) -> np.ndarray:
    batch = getattr(q, "log_prob_batch", None)
    if batch is not None:
        return batch(matrix)
    out = np.empty(matrix.shape[0])
    for i, row in enumerate(matrix):
        out[i] = q.log_prob({n: int(row[net.index(n)]) for n in net.names})
    return out


def exact_kl_to_posterior(q, net: BayesianNetwork, evidence: dict[str, str] | None,
                          cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Exact D(Q || P(H | e)) by enumeration; +inf on any support violation.

    Uses the convention 0 * log 0 = 0.
    """
    ln_pe = enumerate_likelihood(net, evidence, cap)
    total = 0.0
    for matrix in iter_full_matrices(net, evidence, cap):
        ln_p = joint_log_prob_batch(net, matrix)
        ln_q = _proposal_log_probs(q, net, matrix)
        support = ln_q > -np.inf
        if np.any(support & np.isneginf(ln_p)):
            return math.inf
        s = support
        total += float(np.sum(np.exp(ln_q[s]) * (ln_q[s] - (ln_p[s] - ln_pe))))
    return max(total, 0.0)


def exact_power_moment(q, net: BayesianNetwork, evidence: dict[str, str] | None,
                       r: float, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Exact weighted power mean of P(h, e)/Q(h) with weights Q(h).

    ``r = 1`` recovers P(e); ``r = 0`` is the geometric mean, which reaches
    P(e) exactly when Q is the posterior.
    """
    geo = 0.0
    terms = []
    for matrix in iter_full_matrices(net, evidence, cap):
        ln_p = joint_log_prob_batch(net, matrix)
        ln_q = _proposal_log_probs(q, net, matrix)
        if np.any((ln_p > -np.inf) & np.isneginf(ln_q)):
            raise DominationError("proposal does not dominate P(., e)")
        support = ln_q > -np.inf
        lq, lp = ln_q[support], ln_p[support]
        if r == 0.0:
            zero_hit = np.isneginf(lp)
            if np.any(zero_hit):
                return 0.0
            geo += float(np.sum(np.exp(lq) * (lp - lq)))
        else:
            terms.append(logsumexp(lq + r * (lp - lq)))
    if r == 0.0:
        return float(np.exp(geo))
    return float(np.exp(logsumexp(terms) / r))
