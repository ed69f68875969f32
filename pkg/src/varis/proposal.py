"""Importance functions compiled from bucket-elimination tables.

A proposal is an ordered family of conditional tables over the unobserved
variables.  Each table comes from normalizing a bucket's retained joint table
along its own variable; sampling walks the reverse elimination order.  Deleted
edges whose source precedes the target in that order contribute a reinstated
coupling factor from the original network's CPT.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import BayesianNetwork, Cpt, evidence_indices
from .exact import Factor, bucket_eliminate, min_fill_order
from .simplify import EPS_Q, SimplifiedNetwork

SHARPEN = "sharpen"
FLATTEN = "flatten"


@dataclass(frozen=True)
class QTable:
    """Conditional table for one variable: ``probs[context..., state]``."""

    variable: str
    scope: tuple[str, ...]
    probs: np.ndarray

    @property
    def card(self) -> int:
        return self.probs.shape[-1]

    def rows(self) -> np.ndarray:
        return self.probs.reshape(-1, self.card)


@dataclass(frozen=True)
class ReinstatedFactor:
    """Coupling f(v, u) = sum over retained parents of P(v | pa(v))."""

    source: str
    target: str
    table: np.ndarray  # (card_v, card_u)


@dataclass(frozen=True)
class ProposalDistribution:
    variables: tuple[str, ...]           # declaration order (matrix layout)
    cards: tuple[int, ...]
    order: tuple[str, ...]               # full sampling order incl. observed
    sampled: tuple[str, ...]             # sampling order minus observed
    tables: dict[str, QTable]
    evidence: dict[str, int]
    reinstated: tuple[ReinstatedFactor, ...] = ()

    def column(self, name: str) -> int:
        return self.variables.index(name)

    def _context_columns(self, table: QTable) -> tuple[np.ndarray, np.ndarray]:
        cols = np.array([self.column(v) for v in table.scope], dtype=np.int64)
        cards = [self.cards[c] for c in cols]
        strides = np.ones(len(cards), dtype=np.int64)
        for j in range(len(cards) - 2, -1, -1):
            strides[j] = strides[j + 1] * cards[j + 1]
        return cols, strides

    def log_prob(self, assignment: dict[str, int]) -> float:
        """Log proposal probability of a full assignment over the unobserved."""
        values = dict(self.evidence)
        values.update(assignment)
        total = 0.0
        for name in self.sampled:
            t = self.tables[name]
            idx = tuple(values[v] for v in t.scope) + (values[name],)
            p = t.probs[idx]
            if p <= 0.0:
                return -np.inf
            total += np.log(p)
        return float(total)

    def log_prob_batch(self, matrix: np.ndarray) -> np.ndarray:
        total = np.zeros(matrix.shape[0])
        for name in self.sampled:
            t = self.tables[name]
            cols, strides = self._context_columns(t)
            ctx = matrix[:, cols] @ strides if len(cols) else \
                np.zeros(matrix.shape[0], dtype=np.int64)
            picked = t.rows()[ctx, matrix[:, self.column(name)]]
            with np.errstate(divide="ignore"):
                total += np.log(picked)
        return total

    def sample_batch(self, rng: np.random.Generator,
                     size: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``size`` assignments by inverse CDF along the sampling order.

        One uniform vector is consumed per sampled variable, in order, so a
        given generator state yields a fixed batch.
        """
        matrix = np.zeros((size, len(self.variables)), dtype=np.int64)
        for name, idx in self.evidence.items():
            matrix[:, self.column(name)] = idx
        log_q = np.zeros(size)
        for name in self.sampled:
            t = self.tables[name]
            cols, strides = self._context_columns(t)
            ctx = matrix[:, cols] @ strides if len(cols) else \
                np.zeros(size, dtype=np.int64)
            rows = t.rows()[ctx]
            cdf = np.cumsum(rows, axis=1)
            u = rng.random(size)
            picked = np.minimum((cdf <= u[:, None]).sum(axis=1), t.card - 1)
            probs = rows[np.arange(size), picked]
            bad = probs <= 0.0
            if np.any(bad):
                # Float round-off at the top of the CDF; take the first
                # positive-mass state instead.
                repick = (rows[bad] > 0.0).argmax(axis=1)
                picked[bad] = repick
                probs = rows[np.arange(size), picked]
            matrix[:, self.column(name)] = picked
            log_q += np.log(probs)
        return matrix, log_q


@dataclass(frozen=True)
class SampleRecord:
    assignment: dict[str, int]
    log_q: float
    log_p: float

    @property
    def log_ratio(self) -> float:
        return self.log_p - self.log_q


def _fallback_row(card: int, observed: int | None) -> np.ndarray:
    if observed is None:
        return np.full(card, 1.0 / card)
    row = np.zeros(card)
    row[observed] = 1.0
    return row


def _normalize_conditional(joint: Factor, variable: str,
                           observed: int | None) -> QTable:
    """Turn a bucket joint table into per-context rows over ``variable``.

    Contexts whose marginal is zero get a uniform row over states not
    excluded by evidence; they are unreachable until adaptation perturbs the
    tables, and uniform is the safe default then.
    """
    scope = tuple(v for v in joint.scope if v != variable)
    ordered = joint.transpose(scope + (variable,))
    card = ordered.logs.shape[-1]
    rows = ordered.logs.reshape(-1, card)
    with np.errstate(invalid="ignore"):
        top = rows.max(axis=1, keepdims=True)
        linear = np.where(np.isneginf(rows), 0.0,
                          np.exp(rows - np.where(np.isneginf(top), 0.0, top)))
    sums = linear.sum(axis=1, keepdims=True)
    dead = sums[:, 0] <= 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = np.where(dead[:, None], _fallback_row(card, observed),
                         linear / np.where(dead[:, None], 1.0, sums))
    return QTable(variable, scope, probs.reshape(ordered.logs.shape))


def reinstated_factor(net: BayesianNetwork, source: str, target: str) -> ReinstatedFactor:
    """Sum the original CPT of ``target`` over every parent except ``source``."""
    c = net.cpt(target)
    shape = tuple(net.card(p) for p in c.parents) + (net.card(target),)
    table = c.table.reshape(shape)
    ax = c.parents.index(source)
    other = tuple(i for i in range(len(c.parents)) if i != ax)
    summed = table.sum(axis=other) if other else table
    return ReinstatedFactor(source, target, summed.T.copy())  # (v, u)


def build_proposal(net: BayesianNetwork, simp: SimplifiedNetwork,
                   evidence: dict[str, str] | None) -> ProposalDistribution:
    """Compile an importance function from the simplified network.

    Runs bucket elimination on the simplified network with evidence clamped,
    normalizes each bucket's joint table into a conditional for its variable,
    then reinstates deleted edges whose source is sampled before the target by
    multiplying the target's table with the coupling factor and renormalizing
    per context.
    """
    ev = evidence_indices(net, evidence or {})
    order = min_fill_order(simp.base)
    _, scheme = bucket_eliminate(simp.base, evidence, order)

    tables: dict[str, QTable] = {}
    for name in scheme.sampling_order:
        bucket = scheme.buckets[name]
        tables[name] = _normalize_conditional(
            bucket.joint_table, name, ev.get(name))

    applied: list[ReinstatedFactor] = []
    d = scheme.d_index
    for source, target in simp.deleted_edges:
        if d[source] >= d[target]:
            continue  # the algorithm corrects only source-before-target edges
        if target in ev:
            continue  # observed targets are never sampled; a no-op
        f = reinstated_factor(net, source, target)
        applied.append(f)
        t = tables[target]
        with np.errstate(divide="ignore"):
            q_log = Factor(t.scope + (target,), np.log(t.probs))
            f_log = Factor((target, source), np.log(f.table))
        joint = q_log.multiply(f_log)
        tables[target] = _normalize_conditional(joint, target, None)

    return ProposalDistribution(
        variables=net.names,
        cards=tuple(v.card for v in net.variables),
        order=scheme.sampling_order,
        sampled=tuple(n for n in scheme.sampling_order if n not in ev),
        tables=tables,
        evidence=ev,
        reinstated=tuple(applied),
    )


def draw_sample(q: ProposalDistribution, net: BayesianNetwork,
                evidence: dict[str, str] | None,
                rng: np.random.Generator) -> SampleRecord:
    """Draw one assignment and record both log probabilities."""
    from .model import joint_log_prob_batch

    matrix, log_q = q.sample_batch(rng, 1)
    log_p = float(joint_log_prob_batch(net, matrix)[0])
    assignment = {name: int(matrix[0, q.column(name)]) for name in q.sampled}
    return SampleRecord(assignment, float(log_q[0]), log_p)


def anneal_update(q: ProposalDistribution, batch, k: int, cfg) -> ProposalDistribution:
    """Blend visited contexts with batch frequencies at the scheduled rate."""
    from .engine import mixing_rate

    eta = mixing_rate(k, cfg)
    matrix = np.zeros((len(batch), len(q.variables)), dtype=np.int64)
    for name, idx in q.evidence.items():
        matrix[:, q.column(name)] = idx
    for i, rec in enumerate(batch):
        for name, val in rec.assignment.items():
            matrix[i, q.column(name)] = val
    log_ratios = np.array([rec.log_ratio for rec in batch])
    return anneal_update_from_matrix(q, matrix, eta, log_ratios)


def anneal_update_from_matrix(q: ProposalDistribution, matrix: np.ndarray,
                              eta: float,
                              log_ratios: np.ndarray | None = None,
                              ) -> ProposalDistribution:
    """Matrix form of ``anneal_update``; contexts never visited stay unchanged.

    Samples are counted with their importance ratios so the empirical
    frequencies track the target's conditionals rather than the proposal's
    own; an unweighted count would make the blend a zero-mean perturbation.
    Updated rows are floored at EPS_Q and renormalized, so previously positive
    entries stay positive and adaptation cannot starve any feasible state.
    """
    if eta == 0.0:
        return q
    if log_ratios is None:
        weights = np.ones(matrix.shape[0])
    else:
        top = log_ratios.max()
        if np.isneginf(top):
            return q  # every sample fell outside the target's support
        weights = np.exp(log_ratios - top)
    new_tables = dict(q.tables)
    for name in q.sampled:
        t = q.tables[name]
        cols, strides = q._context_columns(t)
        ctx = matrix[:, cols] @ strides if len(cols) else \
            np.zeros(matrix.shape[0], dtype=np.int64)
        rows = t.rows()
        counts = np.zeros_like(rows)
        np.add.at(counts, (ctx, matrix[:, q.column(name)]), weights)
        visits = counts.sum(axis=1)
        visited = visits > 0.0
        if not np.any(visited):
            continue
        freq = counts[visited] / visits[visited, None]
        blended = (1.0 - eta) * rows[visited] + eta * freq
        blended = np.maximum(blended, EPS_Q)
        blended /= blended.sum(axis=1, keepdims=True)
        out = rows.copy()
        out[visited] = blended
        new_tables[name] = QTable(name, t.scope, out.reshape(t.probs.shape))
    return replace(q, tables=new_tables)


def direct_transform(simp: SimplifiedNetwork, direction: str,
                     alpha: float, beta: float) -> SimplifiedNetwork:
    """Exponent transform on the simplified network's probabilities.

    Sharpening maps entries below ``alpha`` to ``q**(1 + beta)`` and entries
    above ``1 - alpha`` to ``q**(1 - beta)``; flattening applies the inverse
    exponents.  Entries inside the band are untouched before the row
    renormalization.  Callers rebuild the proposal afterwards.
    """
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must be in (0, 0.5)")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must be in (0, 1)")
    if direction not in (SHARPEN, FLATTEN):
        raise ValueError(f"unknown direction {direction!r}")
    lo_exp = 1.0 + beta if direction == SHARPEN else 1.0 - beta
    hi_exp = 1.0 - beta if direction == SHARPEN else 1.0 + beta

    net = simp.base
    cpts = []
    for c in net.cpts:
        t = c.table.copy()
        lo = t < alpha
        hi = t > 1.0 - alpha
        t[lo] = t[lo] ** lo_exp
        t[hi] = t[hi] ** hi_exp
        t /= t.sum(axis=1, keepdims=True)
        cpts.append(Cpt(c.child, c.parents, t))
    return SimplifiedNetwork(BayesianNetwork(net.variables, cpts),
                             simp.deleted_edges, simp.fitted)


def dump_tables(q: ProposalDistribution) -> dict:
    """JSON-ready snapshot of the proposal tables, one row per context."""
    return {
        "order": list(q.sampled),
        "evidence": {k: int(v) for k, v in sorted(q.evidence.items())},
        "tables": [
            {
                "variable": name,
                "scope": list(q.tables[name].scope),
                "rows": [[float(x) for x in row] for row in q.tables[name].rows()],
            }
            for name in q.sampled
        ],
    }
