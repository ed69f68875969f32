"""Network simplification: width-driven edge deletion and variational fitting.

``del_edges`` deletes edges until the min-fill induced width meets a bound.
``var_tech_fit`` then adjusts the simplified network's CPTs by coordinate
ascent so its prior joint tracks the original prior as closely as the reduced
structure allows (reverse-KL objective).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import BayesianNetwork, Cpt, evidence_indices, joint_log_prob_batch
from .exact import (DEFAULT_ENUMERATION_CAP, Factor, iter_full_matrices,
                    min_fill_order, prior_marginal)

EPS_Q = 1e-6

# Penalized stand-in for log 0 inside the sweep objective: keeps the guard
# finite while leaked mass still dominates any finite term.
_LOG_FLOOR = -700.0


@dataclass(frozen=True)
class SimplifiedNetwork:
    base: BayesianNetwork
    deleted_edges: tuple[tuple[str, str], ...]
    fitted: bool = False

    @property
    def names(self):
        return self.base.names


def _delete_edge(net: BayesianNetwork, u: str, v: str) -> BayesianNetwork:
    """Drop parent ``u`` from ``v``, averaging v's rows uniformly over u."""
    c = net.cpt(v)
    ax = c.parents.index(u)
    shape = tuple(net.card(p) for p in c.parents) + (net.card(v),)
    table = c.table.reshape(shape).mean(axis=ax)
    new_parents = c.parents[:ax] + c.parents[ax + 1:]
    table = table.reshape(-1, net.card(v))
    cpts = [Cpt(v, new_parents, table) if x.child == v else x for x in net.cpts]
    return BayesianNetwork(net.variables, cpts)


def edge_mutual_information(net: BayesianNetwork, u: str, v: str) -> float:
    """Mutual information between u and v under v's CPT, parents weighted uniformly."""
    c = net.cpt(v)
    ax = c.parents.index(u)
    shape = tuple(net.card(p) for p in c.parents) + (net.card(v),)
    table = c.table.reshape(shape)
    other_axes = tuple(i for i in range(len(c.parents)) if i != ax)
    p_v_given_u = table.mean(axis=other_axes) if other_axes else table
    card_u = net.card(u)
    p_u = 1.0 / card_u
    p_v = p_v_given_u.mean(axis=0)
    mi = 0.0
    for ui in range(card_u):
        for vi in range(net.card(v)):
            joint = p_u * p_v_given_u[ui, vi]
            if joint > 0.0 and p_v[vi] > 0.0:
                mi += joint * math.log(p_v_given_u[ui, vi] / p_v[vi])
    return mi


def del_edges(net: BayesianNetwork, width_bound: int) -> SimplifiedNetwork:
    """Greedily delete edges until min-fill induced width is within the bound.

    Each step removes the edge whose deletion yields the smallest resulting
    width; ties go to the weakest edge (lowest mutual information), then to
    declaration order.  A bound of 0 disconnects the network entirely.
    """
    if width_bound < 0:
        raise ValueError("width bound must be >= 0")
    current = net
    deleted: list[tuple[str, str]] = []
    while min_fill_order(current).width > width_bound:
        best = None
        for v in current.names:
            for pos, u in enumerate(current.parents(v)):
                trial = _delete_edge(current, u, v)
                width = min_fill_order(trial).width
                key = (width, edge_mutual_information(current, u, v),
                       current.index(v), pos)
                if best is None or key < best[0]:
                    best = (key, u, v, trial)
        _, u, v, current = best
        deleted.append((u, v))
    return SimplifiedNetwork(current, tuple(deleted), fitted=False)


def remove_evidence_nodes(net: BayesianNetwork,
                          evidence: dict[str, str]) -> BayesianNetwork:
    """Drop observed variables, averaging them uniformly out of child CPTs.

    Exact marginalization when evidence sits on leaves (the usual case); a
    uniform-weight surrogate when an observed variable has children.
    """
    current = net
    observed = [n for n in net.names if n in evidence]
    for name in reversed([n for n in current.names if n in observed]):
        for child in current.children(name):
            current = _delete_edge(current, name, child)
        variables = [v for v in current.variables if v.name != name]
        cpts = [c for c in current.cpts if c.child != name]
        current = BayesianNetwork(variables, cpts)
    return current


def _family_scope(net: BayesianNetwork, name: str) -> tuple[str, ...]:
    return net.parents(name) + (name,)


def _expected_log(weights: Factor, log_table: Factor,
                  keep: tuple[str, ...]) -> np.ndarray:
    """Reduce E_w[log_table] onto ``keep`` with the 0 * (-inf) = 0 convention.

    Cells of ``keep`` that put positive weight on a -inf log entry come out
    as -inf.
    """
    scope = tuple(keep) + tuple(v for v in weights.scope if v not in keep)
    w = np.exp(weights.transpose(scope).logs)
    aligned = Factor(scope, np.zeros(w.shape)).multiply(log_table)
    logs = aligned.transpose(scope).logs
    axes = tuple(range(len(keep), len(scope)))
    pos = w > 0.0
    bad = pos & np.isneginf(logs)
    term = np.where(pos, w * np.where(np.isneginf(logs), 0.0, logs), 0.0)
    out = term.sum(axis=axes) if axes else term
    hit = bad.any(axis=axes) if axes else bad
    return np.where(hit, -np.inf, out)


def _conditional_expected_log(weights: Factor, log_table: Factor,
                              keep: tuple[str, ...]) -> np.ndarray:
    """Per-cell conditional expectation of ``log_table`` over its own support.

    Weight falling on zero-probability table entries is renormalized away, so
    a cell only comes out -inf when no supported configuration reaches it at
    all.  Collapsing a cell whenever *any* leaked weight touched a zero entry
    starves states the posterior still needs, so only genuinely unsupported
    cells may go to zero here.
    """
    scope = tuple(keep) + tuple(v for v in weights.scope if v not in keep)
    w = np.exp(weights.transpose(scope).logs)
    aligned = Factor(scope, np.zeros(w.shape)).multiply(log_table)
    logs = aligned.transpose(scope).logs
    axes = tuple(range(len(keep), len(scope)))
    good = ~np.isneginf(logs)
    numer = np.where(good, w * np.where(good, logs, 0.0), 0.0)
    wsum = np.where(good, w, 0.0)
    num = numer.sum(axis=axes) if axes else numer
    den = wsum.sum(axis=axes) if axes else wsum
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0.0, num / np.maximum(den, 1e-300), -np.inf)


def _log_cpt_factor(net: BayesianNetwork, name: str, floor: float | None) -> Factor:
    c = net.cpt(name)
    shape = tuple(net.card(p) for p in c.parents) + (net.card(name),)
    with np.errstate(divide="ignore"):
        logs = np.log(c.table).reshape(shape)
    if floor is not None:
        logs = np.maximum(logs, floor)
    return Factor(_family_scope(net, name), logs)


def _fit_objective(target: BayesianNetwork, approx: BayesianNetwork, order) -> float:
    """Reverse KL of the approximation against the target with floored logs."""
    total = 0.0
    for name in approx.names:
        fam = _family_scope(approx, name)
        marg = prior_marginal(approx, fam, order)
        contrib = _expected_log(marg, _log_cpt_factor(approx, name, None), fam)
        total += float(contrib.sum())
    for name in target.names:
        fam = _family_scope(target, name)
        marg = prior_marginal(approx, fam, order)
        contrib = _expected_log(marg, _log_cpt_factor(target, name, _LOG_FLOOR), fam)
        total -= float(contrib.sum())
    return total


def _replace_cpt(net: BayesianNetwork, cpt: Cpt) -> BayesianNetwork:
    cpts = [cpt if c.child == cpt.child else c for c in net.cpts]
    return BayesianNetwork(net.variables, cpts)


def _update_table(target: BayesianNetwork, approx: BayesianNetwork,
                  name: str, support: np.ndarray, order) -> Cpt:
    """One coordinate update of the approximation's CPT for ``name``.

    Sets each row proportional to exp(E[sum of target log-CPTs | child state,
    reduced parents]), keeps entries outside the initial support at zero, and
    floors surviving entries at EPS_Q before renormalizing.
    """
    fam = _family_scope(approx, name)
    fam_cards = tuple(approx.card(v) for v in fam)
    expectation = np.zeros(fam_cards)
    for j in target.names:
        union = fam + tuple(v for v in _family_scope(target, j) if v not in fam)
        weights = prior_marginal(approx, union, order)
        expectation = expectation + _conditional_expected_log(
            weights, _log_cpt_factor(target, j, None), fam)
    ctx_mass = np.exp(prior_marginal(approx, fam, order).logs).sum(axis=-1)

    old = approx.cpt(name).table.reshape(fam_cards)
    rows = expectation.reshape(-1, fam_cards[-1])
    old_rows = old.reshape(-1, fam_cards[-1])
    mask = support.reshape(-1, fam_cards[-1])
    reachable = ctx_mass.reshape(-1) > 0.0
    out = np.empty_like(old_rows)
    for r in range(rows.shape[0]):
        if not reachable[r]:
            out[r] = old_rows[r]
            continue
        row = rows[r]
        top = row.max()
        if np.isneginf(top):
            out[r] = old_rows[r]
            continue
        vals = np.where(np.isneginf(row), 0.0, np.exp(row - top))
        vals = np.where(mask[r], np.maximum(vals, EPS_Q), 0.0)
        out[r] = vals / vals.sum()
    return Cpt(name, approx.parents(name), out)


def _broadcast_over_evidence(full: BayesianNetwork, fitted: Cpt,
                             evidence_names: set[str],
                             original_parents: tuple[str, ...]) -> Cpt:
    """Re-express a fitted CPT on the full parent list, constant over observed parents."""
    if tuple(p for p in original_parents if p not in evidence_names) == original_parents:
        return Cpt(fitted.child, original_parents, fitted.table)
    reduced = fitted.parents
    cards = tuple(full.card(p) for p in original_parents) + (full.card(fitted.child),)
    src = fitted.table.reshape(tuple(full.card(p) for p in reduced)
                               + (full.card(fitted.child),))
    src_f = Factor(reduced + (fitted.child,), np.log(np.maximum(src, 0.0),
                   out=np.full(src.shape, -np.inf), where=src > 0))
    target_scope = original_parents + (fitted.child,)
    arr = _aligned_linear(src_f, target_scope, cards)
    return Cpt(fitted.child, original_parents, arr.reshape(-1, cards[-1]))


def _aligned_linear(f: Factor, scope: tuple[str, ...], cards: tuple[int, ...]) -> np.ndarray:
    base = Factor(scope, np.zeros(cards)).multiply(f).transpose(scope)
    return np.exp(base.logs)


def var_tech_fit(net: BayesianNetwork, simp: SimplifiedNetwork,
                 evidence: dict[str, str] | None = None,
                 sweeps: int = 20, tol: float = 1e-6) -> SimplifiedNetwork:
    """Fit the simplified network's CPTs to the original prior.

    Observed variables are removed from both networks before fitting (their
    simplified CPTs are left untouched).  Sweeps run coordinate updates over
    all unobserved CPTs in declaration order; a sweep that fails to lower the
    objective is reverted, and fitting stops once the per-sweep improvement
    drops below ``tol``.
    """
    if not simp.deleted_edges:
        return replace(simp, fitted=True)
    ev = evidence or {}
    ev_names = set(ev)
    target = remove_evidence_nodes(net, ev) if ev else net
    approx = remove_evidence_nodes(simp.base, ev) if ev else simp.base
    supports = {name: approx.cpt(name).table > 0.0 for name in approx.names}
    reduced_parents = {name: approx.parents(name) for name in approx.names}
    order = min_fill_order(approx)  # structure is fixed across sweeps

    prev = _fit_objective(target, approx, order)
    for _ in range(max(sweeps, 0)):
        candidate = approx
        for name in approx.names:
            cpt = _update_table(target, candidate, name, supports[name], order)
            candidate = _replace_cpt(candidate, cpt)
        obj = _fit_objective(target, candidate, order)
        if obj > prev + 1e-9:
            break
        approx = candidate
        improvement = prev - obj
        prev = obj
        if improvement < tol:
            break

    base = simp.base
    for name in approx.names:
        fitted = Cpt(name, reduced_parents[name], approx.cpt(name).table)
        base = _replace_cpt(base, _broadcast_over_evidence(
            base, fitted, ev_names, base.parents(name)))
    return SimplifiedNetwork(base, simp.deleted_edges, fitted=True)


def prior_kl(net: BayesianNetwork, simp: SimplifiedNetwork,
             evidence: dict[str, str] | None = None,
             cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Exact KL(P' || P) over the unobserved prior by enumeration."""
    ev = evidence or {}
    target = remove_evidence_nodes(net, ev) if ev else net
    approx = remove_evidence_nodes(simp.base, ev) if ev else simp.base
    total = 0.0
    for matrix in iter_full_matrices(approx, None, cap):
        ln_q = joint_log_prob_batch(approx, matrix)
        cols = [approx.index(n) for n in target.names]
        ln_p = joint_log_prob_batch(target, matrix[:, cols])
        support = ln_q > -np.inf
        if np.any(support & np.isneginf(ln_p)):
            return math.inf
        s = support
        total += float(np.sum(np.exp(ln_q[s]) * (ln_q[s] - ln_p[s])))
    return max(total, 0.0)
