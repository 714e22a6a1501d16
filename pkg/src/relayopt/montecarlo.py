"""Random instance generation, SNR sweeps and trial aggregation.

Seeds are derived with a splittable counter construction
(numpy SeedSequence keyed by (master_seed, snr index, trial index, ...)),
so the sweep output is a pure function of its configuration regardless of
execution order or parallelism.  Channels are generated once per
(snr, trial) and shared across all compared algorithm kinds and stream
schemes, so comparisons are paired.
"""

from __future__ import annotations

import concurrent.futures
import time
from dataclasses import dataclass, field

import numpy as np

from .algorithms import AlgorithmKind, ConvergenceCriteria, run
from .network import (ChannelSet, NetworkDims, PowerBudget, Transceivers,
                      check_feasibility, tx_powers)
from .solvers import DEFAULT_TOL, SolverTolerances


@dataclass(frozen=True)
class ExperimentConfig:
    dims: NetworkDims
    kinds: tuple
    snr_db: tuple
    trials: int = 100
    master_seed: int = 1
    criteria: ConvergenceCriteria = field(default_factory=ConvergenceCriteria)
    tolerances: SolverTolerances = field(default_factory=lambda: DEFAULT_TOL)
    schemes: tuple | None = None  # stream vectors; None = dims.d only
    mode: str = "total"
    timing: bool = False
    collect_traces: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if self.schemes is not None:
            object.__setattr__(
                self, "schemes", tuple(tuple(int(x) for x in s) for s in self.schemes)
            )
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_db:
            raise ValueError("snr list must be non-empty")
        for scheme in self.schemes or ():
            for k, dk in enumerate(scheme):
                if not 1 <= dk <= min(self.dims.M[k], self.dims.N[k]):
                    raise ValueError(
                        f"scheme {scheme}: d[{k}] must satisfy 1 <= d <= min(M, N)"
                    )

    def effective_schemes(self):
        return self.schemes if self.schemes is not None else (self.dims.d,)


@dataclass(frozen=True)
class TrialRecord:
    snr_db: float
    kind: AlgorithmKind
    scheme: tuple
    trial: int
    seed: int
    sum_rate: float
    tstinr: float
    iterations: int
    converged: bool
    max_sigma_ratio: float
    wall_ms: float
    error: str | None = None
    trace: tuple | None = None  # (iteration, f, C, tstinr, sum_rate) rows

    @property
    def ok(self):
        return self.error is None

    def sort_key(self):
        return (self.snr_db, self.kind.value, self.scheme, self.trial)


def _seed_seq(master_seed, *key):
    return np.random.SeedSequence(entropy=int(master_seed),
                                  spawn_key=tuple(int(x) for x in key))


def gen_channels(dims: NetworkDims, seed) -> ChannelSet:
    """i.i.d. unit-variance complex Gaussian channels, deterministic in seed."""
    rng = np.random.default_rng(seed)

    def cg(shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
            / np.sqrt(2.0)

    G = [[cg((dims.L[r], dims.M[k])) for k in range(dims.K)]
         for r in range(dims.R)]
    H = [[cg((dims.N[k], dims.L[r])) for r in range(dims.R)]
         for k in range(dims.K)]
    return ChannelSet(G, H)


def snr_to_budget(snr_db: float, dims: NetworkDims) -> PowerBudget:
    """SNR convention p0_T = p0_R = 10^(snr/10), p_max_R = R p0_R, sigma^2 = 1."""
    p0 = 10.0 ** (snr_db / 10.0)
    return PowerBudget(p0_T=p0, p0_R=p0, p_max_R=dims.R * p0,
                       sigma1_sq=1.0, sigma2_sq=1.0)


def init_transceivers(dims: NetworkDims, budget: PowerBudget,
                      channels: ChannelSet, seed, mode: str = "total",
                      multi_stream: bool = False) -> Transceivers:
    """Random precoders and relay matrices scaled onto the power constraints.

    Decoders are left unset; the first decoder update of any algorithm
    provides them.
    """
    base = seed if isinstance(seed, np.random.SeedSequence) \
        else np.random.SeedSequence(int(seed))
    for attempt in range(16):
        rng = np.random.default_rng(base if attempt == 0
                                    else base.spawn(attempt)[0])

        def cg(shape):
            return (rng.standard_normal(shape)
                    + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

        U = []
        for k in range(dims.K):
            Uk = cg((dims.M[k], dims.d[k]))
            if multi_stream:
                Q, _ = np.linalg.qr(Uk)
                Uk = Q[:, :dims.d[k]] * np.sqrt(budget.p0_T / dims.d[k])
            else:
                Uk = Uk * np.sqrt(budget.p0_T) / np.linalg.norm(Uk)
            U.append(Uk)
        W = [cg((dims.L[r], dims.L[r])) for r in range(dims.R)]
        tx = Transceivers(U=tuple(U), W=tuple(W))
        _, P_R, P_R_tot = tx_powers(channels, tx, budget)
        if np.min(P_R) <= 0 or P_R_tot <= 0:
            continue
        if mode == "total":
            scale = np.sqrt(budget.p_max_R / P_R_tot)
            W = [w * scale for w in W]
        else:
            W = [W[r] * np.sqrt(budget.p0_R / P_R[r]) for r in range(dims.R)]
        return Transceivers(U=tuple(U), W=tuple(W))
    raise RuntimeError("failed to draw a non-degenerate initialization")


def _run_trial(config: ExperimentConfig, snr_idx: int, trial: int):
    """All (kind, scheme) runs for one paired channel realization."""
    snr = config.snr_db[snr_idx]
    chan_seq = _seed_seq(config.master_seed, snr_idx, trial)
    chan_seed_label = int(chan_seq.generate_state(1)[0])
    records = []
    for kind in config.kinds:
        for sidx, scheme in enumerate(config.effective_schemes()):
            dims = config.dims.with_streams(scheme)
            budget = snr_to_budget(snr, dims)
            channels = gen_channels(dims, chan_seq)
            multi = kind is AlgorithmKind.TSTINR_MULTI
            init_seq = _seed_seq(config.master_seed, snr_idx, trial, sidx, 7)
            t0 = time.perf_counter()
            try:
                init = init_transceivers(dims, budget, channels, init_seq,
                                         mode=kind.constraint_mode,
                                         multi_stream=multi)
                tx, trace = run(kind, channels, dims, budget, config.criteria,
                                init, tol=config.tolerances)
                wall = (time.perf_counter() - t0) * 1e3
                ratios = []
                for k in range(dims.K):
                    if dims.d[k] >= 2:
                        sv = np.linalg.svd(tx.U[k], compute_uv=False)
                        ratios.append(sv[1] / sv[0])
                trace_rows = None
                if config.collect_traces:
                    trace_rows = tuple(
                        (i, trace.f[i], trace.C[i], trace.tstinr[i],
                         trace.sum_rate[i])
                        for i in range(trace.iterations)
                    )
                records.append(TrialRecord(
                    snr_db=snr, kind=kind, scheme=scheme, trial=trial,
                    seed=chan_seed_label,
                    sum_rate=trace.sum_rate[-1],
                    tstinr=trace.tstinr[-1],
                    iterations=trace.iterations,
                    converged=trace.converged,
                    max_sigma_ratio=float(max(ratios)) if ratios else 0.0,
                    wall_ms=wall if config.timing else 0.0,
                    trace=trace_rows,
                ))
            except Exception as exc:  # recorded, not fatal to the sweep
                records.append(TrialRecord(
                    snr_db=snr, kind=kind, scheme=scheme, trial=trial,
                    seed=chan_seed_label, sum_rate=float("nan"),
                    tstinr=float("nan"), iterations=0, converged=False,
                    max_sigma_ratio=float("nan"), wall_ms=0.0,
                    error=f"{type(exc).__name__}: {exc}",
                ))
    return records


def run_sweep(config: ExperimentConfig, jobs: int = 1):
    """Run every (snr, trial, kind, scheme) cell; deterministic in config."""
    tasks = [(i, t) for i in range(len(config.snr_db))
             for t in range(config.trials)]
    records = []
    if jobs <= 1:
        for snr_idx, trial in tasks:
            records.extend(_run_trial(config, snr_idx, trial))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_trial, config, i, t) for i, t in tasks]
            for fut in futures:
                records.extend(fut.result())
    records.sort(key=TrialRecord.sort_key)
    return records


@dataclass(frozen=True)
class SummaryRow:
    snr_db: float
    kind: AlgorithmKind
    scheme: tuple
    trials_ok: int
    mean_sum_rate: float
    std_sum_rate: float
    mean_iterations: float
    fail_frac: float
    mean_wall_ms: float


def aggregate(records):
    """Per (snr, kind, scheme) means over successful trials."""
    if not records:
        raise ValueError("no records to aggregate")
    groups = {}
    for rec in records:
        groups.setdefault((rec.snr_db, rec.kind, rec.scheme), []).append(rec)
    rows = []
    for (snr, kind, scheme), recs in sorted(
            groups.items(), key=lambda kv: (kv[0][0], kv[0][1].value, kv[0][2])):
        ok = [r for r in recs if r.ok]
        rates = np.array([r.sum_rate for r in ok])
        n = len(ok)
        rows.append(SummaryRow(
            snr_db=snr, kind=kind, scheme=scheme, trials_ok=n,
            mean_sum_rate=float(np.mean(rates)) if n else float("nan"),
            std_sum_rate=float(np.std(rates, ddof=1)) if n > 1 else 0.0,
            mean_iterations=float(np.mean([r.iterations for r in ok])) if n
            else float("nan"),
            fail_frac=1.0 - n / len(recs),
            mean_wall_ms=float(np.mean([r.wall_ms for r in ok])) if n
            else float("nan"),
        ))
    return rows
