"""Estimators, the adaptive batch loop, directing logic, and baselines.

Batch ratios routinely live at scales like exp(-110), so every accumulation
runs in log-sum-exp form.  Randomness is derived per (seed, batch, lane) so a
run is reproducible for any fixed worker count and the adaptive and static
paths consume identical sample streams.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import t as t_dist

from .model import (BayesianNetwork, evidence_indices, joint_log_prob_batch,
                    topological_order)
from .exact import DominationError
from .simplify import SimplifiedNetwork, del_edges, var_tech_fit
from .proposal import (FLATTEN, SHARPEN, ProposalDistribution, SampleRecord,
                       anneal_update_from_matrix, build_proposal,
                       direct_transform)

NO_EVENT = "none"
_ACCEPT_LANE = 1_000_000


@dataclass(frozen=True)
class SamplerConfig:
    """Run parameters; defaults follow the published tuning."""

    m: int = 1000
    M: int = 100_000
    k_max: int | None = None          # defaults to the number of batches
    eta0: float = 0.12
    etaf: float = 0.03
    alpha: float = 0.1
    beta: float = 0.2
    window: int = 10
    w0: float = 0.001
    significance: float = 0.05
    cooldown: int | None = None       # defaults to the window length
    width_bound: int = 2
    sweeps: int = 20
    fit_tol: float = 1e-6
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.m < 1 or self.M < 1:
            raise ValueError("batch size and total samples must be >= 1")
        if not 0.0 < self.etaf <= self.eta0 < 1.0:
            raise ValueError("mixing rates must satisfy 0 < etaf <= eta0 < 1")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must be in (0, 0.5)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must be in (0, 1)")
        if self.window < 3:
            raise ValueError("correlation window must be >= 3")
        if self.w0 <= 0.0:
            raise ValueError("initial batch weight must be positive")
        if not 0.0 < self.significance < 1.0:
            raise ValueError("significance level must be in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def resolved_k_max(self) -> int:
        if self.k_max is not None:
            return self.k_max
        return max(1, -(-self.M // self.m))

    @property
    def resolved_cooldown(self) -> int:
        return self.window if self.cooldown is None else self.cooldown

    def echo(self) -> dict:
        return {
            "m": self.m, "M": self.M, "k_max": self.resolved_k_max,
            "eta0": self.eta0, "etaf": self.etaf, "alpha": self.alpha,
            "beta": self.beta, "window": self.window, "w0": self.w0,
            "significance": self.significance,
            "cooldown": self.resolved_cooldown,
            "width_bound": self.width_bound, "sweeps": self.sweeps,
            "fit_tol": self.fit_tol, "workers": self.workers,
        }


@dataclass(frozen=True)
class BatchStats:
    k: int
    ln_ptilde: float
    ln_ptilde_cum: float
    d_hat: float
    sigma_hat: float
    w: float
    eta: float
    accepted: bool
    directing_event: str


class EstimatorState:
    """Log-stabilized accumulators for the weighted batch estimator."""

    def __init__(self):
        self.counts: list[int] = []
        self.log_weights: list[float] = []
        self.log_sums: list[float] = []

    def add_batch(self, count: int, weight: float, log_sum_ratios: float) -> None:
        if weight <= 0.0:
            raise ValueError("batch weight must be positive")
        self.counts.append(count)
        self.log_weights.append(math.log(weight))
        self.log_sums.append(log_sum_ratios)


def combine_batches(state: EstimatorState) -> float:
    """Weighted log estimate; invariant under rescaling all batch weights."""
    if not state.counts:
        raise ValueError("no batches recorded")
    lw = np.asarray(state.log_weights)
    numerator = logsumexp(lw + np.asarray(state.log_sums))
    denominator = logsumexp(lw + np.log(np.asarray(state.counts, dtype=np.float64)))
    return float(numerator - denominator)


# ---------------------------------------------------------------------------
# Scalar operations
# ---------------------------------------------------------------------------

def mixing_rate(k: int, cfg: SamplerConfig) -> float:
    """Geometric schedule from eta0 to etaf, clamped past the horizon."""
    if k < 0:
        raise ValueError("batch index must be >= 0")
    k_max = cfg.resolved_k_max
    x = min(k, k_max) / k_max
    return cfg.eta0 * (cfg.etaf / cfg.eta0) ** x


def acceptance_probability(k: int, delta: float) -> float:
    """Always accept improvements; otherwise accept with exp(-k * delta)."""
    if delta <= 0.0:
        return 1.0
    return min(1.0, math.exp(-k * delta))


def kl_estimate(batch) -> float:
    """Negated batch mean of log importance ratios.

    Equals the divergence from the posterior up to the constant log P(e).  A
    zero ratio makes the mean undefined and is treated as fatal here; the run
    loop screens ratios before calling.
    """
    if not len(batch):
        raise ValueError("batch must be nonempty")
    ratios = np.array([rec.log_ratio for rec in batch])
    if np.any(np.isneginf(ratios)):
        raise DominationError("zero importance ratio in batch")
    return float(-ratios.mean())


def batch_weight(sigma_hat: float, cfg: SamplerConfig) -> float:
    """Inverse coefficient of variation, floored at the initial weight."""
    if sigma_hat < 0.0:
        raise ValueError("coefficient of variation must be >= 0")
    return max(cfg.w0, 1.0 / (sigma_hat + 1e-12))


def power_mean(z, w, r: float) -> float:
    """Weighted power mean; the r = 0 case is the weighted geometric mean."""
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if z.shape != w.shape or z.ndim != 1 or not z.size:
        raise ValueError("values and weights must be matching nonempty vectors")
    if np.any(z <= 0.0) or np.any(w <= 0.0):
        raise ValueError("values and weights must be positive")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    logz = np.log(z)
    if r == 0.0:
        return float(np.exp(np.sum(w * logz)))
    return float(np.exp(logsumexp(np.log(w) + r * logz) / r))


def pearson(x, y) -> float:
    """Sample correlation; nan for degenerate (constant) series."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ValueError("series must have equal length >= 3")
    xd = x - x.mean()
    yd = y - y.mean()
    denom = math.sqrt(float((xd * xd).sum()) * float((yd * yd).sum()))
    if denom == 0.0:
        return math.nan
    return float(np.clip((xd * yd).sum() / denom, -1.0, 1.0))


def correlation_threshold(window: int, significance: float) -> float:
    """Two-sided t-test threshold on |r| with window - 2 degrees of freedom."""
    df = window - 2
    t_crit = float(t_dist.ppf(1.0 - significance / 2.0, df))
    return t_crit / math.sqrt(t_crit * t_crit + df)


def correlation_trigger(window_values, cfg: SamplerConfig) -> str:
    """Directing decision from the last window of (d_hat, ln_ptilde) pairs.

    A batch that luckily lands high-ratio samples shows a higher batch
    estimate together with a lower d_hat, and the same co-movement appears
    when the importance function is too uniform and the simulation settles
    below the true likelihood.  A significant negative correlation therefore
    asks for sharpening; a significant positive one for flattening.
    """
    if len(window_values) != cfg.window:
        raise ValueError("window must contain exactly cfg.window entries")
    d = np.array([v[0] for v in window_values])
    p = np.array([v[1] for v in window_values])
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(p))):
        return NO_EVENT
    r = pearson(d, p)
    if math.isnan(r):
        return NO_EVENT
    threshold = correlation_threshold(cfg.window, cfg.significance)
    if r <= -threshold:
        return SHARPEN
    if r >= threshold:
        return FLATTEN
    return NO_EVENT


# ---------------------------------------------------------------------------
# Sampling infrastructure
# ---------------------------------------------------------------------------

def _stream(seed: int, k: int, lane: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(k, lane)))


def _split_sizes(total: int, workers: int) -> list[int]:
    base, rem = divmod(total, workers)
    return [base + (1 if w < rem else 0) for w in range(workers)]


def _batch_sizes(total: int, m: int) -> list[int]:
    n_batches = -(-total // m)
    return [m] * (n_batches - 1) + [total - (n_batches - 1) * m]


def _draw_batch(q: ProposalDistribution, net: BayesianNetwork, seed: int,
                k: int, size: int, workers: int):
    mats, lqs = [], []
    for w, sz in enumerate(_split_sizes(size, workers)):
        if sz == 0:
            continue
        mat, lq = q.sample_batch(_stream(seed, k, w), sz)
        mats.append(mat)
        lqs.append(lq)
    matrix = np.vstack(mats)
    log_q = np.concatenate(lqs)
    log_p = joint_log_prob_batch(net, matrix)
    return matrix, log_q, log_p


def _ratio_cv(log_ratios: np.ndarray) -> float:
    """Population coefficient of variation, computed scale-free in log space."""
    top = log_ratios.max()
    if np.isneginf(top):
        return math.inf
    scaled = np.exp(log_ratios - top)
    mean = scaled.mean()
    return float(scaled.std() / mean)


def _d_hat(log_ratios: np.ndarray) -> float:
    """Strict batch divergence estimate: +inf as soon as any ratio is zero."""
    value = float(log_ratios.mean())
    return math.inf if value == -math.inf else -value


def _d_hat_feasible(log_ratios: np.ndarray) -> float:
    """Divergence signal over positive-ratio samples only; +inf if none.

    Used to drive the annealed acceptance on networks where zero-ratio draws
    are routine and the strict estimate would stay pinned at +inf.
    """
    finite = log_ratios[log_ratios > -np.inf]
    if not finite.size:
        return math.inf
    return float(-finite.mean())


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

TRACE_HEADER = ("k,ln_Ptilde_k,ln_Ptilde_cum,D_hat_k,sigma_hat_k,"
                "w_k,eta_k,accepted,directing_event")


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class RunReport:
    algorithm: str
    ln_estimate: float
    total_samples: int
    seed: int
    adaptive: bool
    directing: bool
    config: SamplerConfig
    batches: list[BatchStats] = field(default_factory=list)
    wall_seconds: float = 0.0

    def trace_csv(self) -> str:
        lines = [TRACE_HEADER]
        for b in self.batches:
            lines.append(",".join([
                str(b.k), _fmt(b.ln_ptilde), _fmt(b.ln_ptilde_cum),
                _fmt(b.d_hat), _fmt(b.sigma_hat), _fmt(b.w), _fmt(b.eta),
                "true" if b.accepted else "false", b.directing_event,
            ]))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        cfg = self.config.echo()
        cfg["algorithm"] = self.algorithm
        cfg["adaptive"] = self.adaptive
        cfg["directing"] = self.directing
        return {
            "estimate_ln": self.ln_estimate,
            "M": self.total_samples,
            "batches": len(self.batches),
            "wall_seconds": self.wall_seconds,
            "config": cfg,
            "seed": self.seed,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2) + "\n"


# ---------------------------------------------------------------------------
# Static estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StaticEstimate:
    ln_estimate: float
    n_samples: int
    cv: float
    d_hat: float
    zero_ratios: int


def estimate_static(net: BayesianNetwork, evidence: dict[str, str] | None,
                    q: ProposalDistribution, M: int, seed: int,
                    batch_size: int = 1000, workers: int = 1) -> StaticEstimate:
    """Plain importance sampling with a fixed proposal.

    Draws in batches so the sample stream matches an adaptive run with the
    same seed and batch size.
    """
    state = EstimatorState()
    all_ratios = []
    for k, size in enumerate(_batch_sizes(M, batch_size), start=1):
        _, log_q, log_p = _draw_batch(q, net, seed, k, size, workers)
        log_ratios = log_p - log_q
        state.add_batch(size, 1.0, float(logsumexp(log_ratios)))
        all_ratios.append(log_ratios)
    pooled = np.concatenate(all_ratios)
    return StaticEstimate(
        ln_estimate=combine_batches(state),
        n_samples=M,
        cv=_ratio_cv(pooled),
        d_hat=_d_hat(pooled),
        zero_ratios=int(np.isneginf(pooled).sum()),
    )


# ---------------------------------------------------------------------------
# The adaptive run
# ---------------------------------------------------------------------------

def run_varis(net: BayesianNetwork, evidence: dict[str, str] | None,
              cfg: SamplerConfig, adaptive: bool = True, directing: bool = True,
              simplified: SimplifiedNetwork | None = None) -> RunReport:
    """Full pipeline: simplify, fit, compile the proposal, then sample in batches.

    Every batch records its own estimate, divergence estimate, dispersion and
    weight.  With ``adaptive`` the proposal is re-blended with batch
    frequencies and the blend is kept or dropped by the annealed acceptance
    rule; with ``directing`` the correlation trigger can sharpen or flatten
    the simplified network and rebuild the proposal.  With both disabled the
    run is bit-identical to ``estimate_static``.
    """
    started = time.perf_counter()
    ev = evidence or {}
    simp = simplified if simplified is not None else del_edges(net, cfg.width_bound)
    if not simp.fitted:
        simp = var_tech_fit(net, simp, ev, sweeps=cfg.sweeps, tol=cfg.fit_tol)
    q = build_proposal(net, simp, ev)

    state = EstimatorState()
    stats: list[BatchStats] = []
    window: list[tuple[float, float]] = []
    cooldown = 0
    prev_signal = math.nan

    for k, size in enumerate(_batch_sizes(cfg.M, cfg.m), start=1):
        matrix, log_q, log_p = _draw_batch(q, net, cfg.seed, k, size, cfg.workers)
        log_ratios = log_p - log_q
        ln_sum = float(logsumexp(log_ratios))
        ln_ptilde = ln_sum - math.log(size)
        d_hat = _d_hat(log_ratios)
        signal = _d_hat_feasible(log_ratios)
        sigma_hat = _ratio_cv(log_ratios)

        if adaptive:
            w = cfg.w0 if k == 1 else batch_weight(sigma_hat, cfg)
        else:
            w = 1.0
        state.add_batch(size, w, ln_sum)
        eta = mixing_rate(k, cfg)

        accepted = False
        if adaptive:
            if k == 1:
                accepted = True
            else:
                delta = signal - prev_signal
                coin = _stream(cfg.seed, k, _ACCEPT_LANE).random()
                if math.isnan(delta):  # both divergence signals are infinite
                    p_accept = 0.0
                else:
                    p_accept = acceptance_probability(k, delta)
                accepted = coin < p_accept
            if accepted:
                q = anneal_update_from_matrix(q, matrix, eta, log_ratios)

        event = NO_EVENT
        if directing:
            if cooldown > 0:
                cooldown -= 1
            window.append((d_hat, ln_ptilde))
            if cooldown == 0 and len(window) >= cfg.window:
                event = correlation_trigger(window[-cfg.window:], cfg)
                if event != NO_EVENT:
                    simp = direct_transform(simp, event, cfg.alpha, cfg.beta)
                    q = build_proposal(net, simp, ev)
                    window.clear()
                    cooldown = cfg.resolved_cooldown

        stats.append(BatchStats(k, ln_ptilde, combine_batches(state), d_hat,
                                sigma_hat, w, eta, accepted, event))
        prev_signal = signal

    return RunReport(
        algorithm="varis" if (adaptive or directing) else "varis-static",
        ln_estimate=combine_batches(state),
        total_samples=cfg.M,
        seed=cfg.seed,
        adaptive=adaptive,
        directing=directing,
        config=cfg,
        batches=stats,
        wall_seconds=time.perf_counter() - started,
    )


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

class PriorProposal:
    """The likelihood-weighting proposal: prior conditionals, evidence fixed."""

    def __init__(self, net: BayesianNetwork, evidence: dict[str, str] | None):
        self.net = net
        self.evidence = evidence_indices(net, evidence or {})
        self.hidden = tuple(n for n in net.names if n not in self.evidence)

    def log_prob(self, assignment: dict[str, int]) -> float:
        values = dict(self.evidence)
        values.update(assignment)
        matrix = np.array([[values[n] for n in self.net.names]], dtype=np.int64)
        return float(self.log_prob_batch(matrix)[0])

    def log_prob_batch(self, matrix: np.ndarray) -> np.ndarray:
        total = np.zeros(matrix.shape[0])
        for name in self.hidden:
            c = self.net.cpt(name)
            if c.parents:
                cfg = matrix[:, [self.net.index(p) for p in c.parents]] \
                    @ self.net.parent_strides(name)
            else:
                cfg = np.zeros(matrix.shape[0], dtype=np.int64)
            with np.errstate(divide="ignore"):
                total += np.log(c.table[cfg, matrix[:, self.net.index(name)]])
        return total


def _inverse_cdf(rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(rows, axis=1)
    picked = np.minimum((cdf <= u[:, None]).sum(axis=1), rows.shape[1] - 1)
    probs = rows[np.arange(rows.shape[0]), picked]
    bad = probs <= 0.0
    if np.any(bad):
        picked[bad] = (rows[bad] > 0.0).argmax(axis=1)
    return picked


def _forward_batch(net: BayesianNetwork, ev_idx: dict[str, int],
                   tables: dict[str, np.ndarray], topo: list[str],
                   rng: np.random.Generator, size: int,
                   restrictors=None) -> tuple[np.ndarray, np.ndarray]:
    """Topological forward sampling; returns assignments and used log-probs."""
    matrix = np.zeros((size, len(net.names)), dtype=np.int64)
    for name, idx in ev_idx.items():
        matrix[:, net.index(name)] = idx
    log_q = np.zeros(size)
    for name in topo:
        if name in ev_idx:
            continue
        c = net.cpt(name)
        if c.parents:
            cfg = matrix[:, [net.index(p) for p in c.parents]] \
                @ net.parent_strides(name)
        else:
            cfg = np.zeros(size, dtype=np.int64)
        rows = tables[name][cfg]
        if restrictors and name in restrictors:
            mask = restrictors[name](matrix)
            restricted = rows * mask
            sums = restricted.sum(axis=1, keepdims=True)
            usable = sums[:, 0] > 0.0
            rows = np.where(usable[:, None], restricted / np.where(
                usable[:, None], sums, 1.0), rows)
        u = rng.random(size)
        picked = _inverse_cdf(rows, u)
        matrix[:, net.index(name)] = picked
        log_q += np.log(rows[np.arange(size), picked])
    return matrix, log_q


def likelihood_weighting(net: BayesianNetwork, evidence: dict[str, str] | None,
                         M: int, seed: int, batch_size: int = 1000,
                         workers: int = 1) -> RunReport:
    """Forward sampling from the prior; weights multiply evidence entries."""
    started = time.perf_counter()
    ev_idx = evidence_indices(net, evidence or {})
    topo = topological_order(net)
    tables = {n: net.cpt(n).table for n in net.names}
    cfg = SamplerConfig(m=batch_size, M=M, seed=seed, workers=workers)

    state = EstimatorState()
    stats: list[BatchStats] = []
    for k, size in enumerate(_batch_sizes(M, batch_size), start=1):
        mats = []
        for w, sz in enumerate(_split_sizes(size, workers)):
            if sz == 0:
                continue
            mat, _ = _forward_batch(net, ev_idx, tables, topo,
                                    _stream(seed, k, w), sz)
            mats.append(mat)
        matrix = np.vstack(mats)
        log_w = np.zeros(size)
        for name, idx in ev_idx.items():
            c = net.cpt(name)
            if c.parents:
                cfg_rows = matrix[:, [net.index(p) for p in c.parents]] \
                    @ net.parent_strides(name)
            else:
                cfg_rows = np.zeros(size, dtype=np.int64)
            with np.errstate(divide="ignore"):
                log_w += np.log(c.table[cfg_rows, idx])
        ln_sum = float(logsumexp(log_w))
        state.add_batch(size, 1.0, ln_sum)
        stats.append(BatchStats(
            k, ln_sum - math.log(size), combine_batches(state), _d_hat(log_w),
            _ratio_cv(log_w), 1.0, math.nan, False, NO_EVENT))

    return RunReport("lw", combine_batches(state), M, seed, False, False, cfg,
                     stats, time.perf_counter() - started)


def _evidence_restrictors(net: BayesianNetwork, ev_idx: dict[str, int],
                          topo: list[str]):
    """One-step feasibility masks: when sampling the last unassigned parent of
    an observed child, zero out states that make the observed value impossible."""
    position = {name: i for i, name in enumerate(topo)}
    restrictors = {}
    for name in topo:
        if name in ev_idx:
            continue
        checks = []
        for child in net.children(name):
            if child not in ev_idx:
                continue
            others = [p for p in net.parents(child) if p != name]
            if all(p in ev_idx or position[p] < position[name] for p in others):
                checks.append(child)
        if not checks:
            continue

        def make(name=name, checks=checks):
            card = net.card(name)

            def mask(matrix: np.ndarray) -> np.ndarray:
                out = np.ones((matrix.shape[0], card), dtype=bool)
                for child in checks:
                    c = net.cpt(child)
                    strides = net.parent_strides(child)
                    ax = c.parents.index(name)
                    base = np.zeros(matrix.shape[0], dtype=np.int64)
                    for j, p in enumerate(c.parents):
                        if p != name:
                            base += matrix[:, net.index(p)] * strides[j]
                    idx = base[:, None] + strides[ax] * np.arange(card)
                    out &= c.table[idx, ev_idx[child]] > 0.0
                return out
            return mask

        restrictors[name] = make()
    return restrictors


def sis_star(net: BayesianNetwork, evidence: dict[str, str] | None,
             cfg: SamplerConfig) -> RunReport:
    """Self-importance sampling restricted to one-step-feasible instances.

    Samples forward from working CPT copies, pruning child states that would
    contradict an already-determined observed variable, and blends the working
    tables with batch frequencies at the scheduled mixing rate.  Infeasible
    samples keep weight zero and still count toward the total.  Without
    evidence the update is skipped, making the run identical to likelihood
    weighting of the prior.
    """
    started = time.perf_counter()
    ev = evidence or {}
    ev_idx = evidence_indices(net, ev)
    topo = topological_order(net)
    work = {n: net.cpt(n).table.copy() for n in net.names}
    restrictors = _evidence_restrictors(net, ev_idx, topo)
    update = bool(ev_idx)

    state = EstimatorState()
    stats: list[BatchStats] = []
    for k, size in enumerate(_batch_sizes(cfg.M, cfg.m), start=1):
        mats, lqs = [], []
        for w, sz in enumerate(_split_sizes(size, cfg.workers)):
            if sz == 0:
                continue
            mat, lq = _forward_batch(net, ev_idx, work, topo,
                                     _stream(cfg.seed, k, w), sz, restrictors)
            mats.append(mat)
            lqs.append(lq)
        matrix = np.vstack(mats)
        log_q = np.concatenate(lqs)
        log_ratios = joint_log_prob_batch(net, matrix) - log_q
        ln_sum = float(logsumexp(log_ratios))
        state.add_batch(size, 1.0, ln_sum)
        eta = mixing_rate(k, cfg)
        if update:
            for name in topo:
                if name in ev_idx:
                    continue
                c = net.cpt(name)
                if c.parents:
                    cfg_rows = matrix[:, [net.index(p) for p in c.parents]] \
                        @ net.parent_strides(name)
                else:
                    cfg_rows = np.zeros(size, dtype=np.int64)
                counts = np.zeros_like(work[name])
                np.add.at(counts, (cfg_rows, matrix[:, net.index(name)]), 1.0)
                visits = counts.sum(axis=1)
                visited = visits > 0.0
                if not np.any(visited):
                    continue
                freq = counts[visited] / visits[visited, None]
                work[name][visited] = (1.0 - eta) * work[name][visited] + eta * freq
        stats.append(BatchStats(
            k, ln_sum - math.log(size), combine_batches(state),
            _d_hat(log_ratios), _ratio_cv(log_ratios), 1.0, eta, update,
            NO_EVENT))

    return RunReport("sis", combine_batches(state), cfg.M, cfg.seed, update,
                     False, cfg, stats, time.perf_counter() - started)
