"""Alternating transceiver optimization loops.

Six algorithm kinds share one driver: the TSTINR surrogate (single-stream
with total or individual relay power, and the multi-stream variant with
orthogonal precoder columns), its TLIN twin (interference-plus-noise
minimization, obtained by deleting the desired-signal terms and freezing
the weight C at 1), and the WMMSE model with individual fixed relay power.

Per iteration the block order is decoders (plus S for WMMSE), relay
matrices in index order, precoders in index order, then the C update for
the TSTINR family.  Caches are refreshed after every block (Gauss-Seidel).
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .network import (ChannelSet, EffectiveChannels, NetworkDims, PowerBudget,
                      Transceivers, build_effective, check_feasibility,
                      link_powers, sum_rate, tstinr, wmmse_objective)
from .solvers import (EqQcqp, SolverError, SolverTolerances, TrsProblem,
                      DEFAULT_TOL, nu_min, solve_eq_qcqp, solve_orth_precoder,
                      solve_trs)


class AlgorithmKind(enum.Enum):
    TSTINR_SINGLE_TOTAL = "tstinr-total"
    TLIN_SINGLE_TOTAL = "tlin-total"
    TSTINR_SINGLE_INDIVIDUAL = "tstinr-individual"
    TLIN_SINGLE_INDIVIDUAL = "tlin-individual"
    WMMSE_INDIVIDUAL = "wmmse-individual"
    TSTINR_MULTI = "tstinr-multi"

    @property
    def is_tstinr_family(self):
        return self in (AlgorithmKind.TSTINR_SINGLE_TOTAL,
                        AlgorithmKind.TSTINR_SINGLE_INDIVIDUAL,
                        AlgorithmKind.TSTINR_MULTI)

    @property
    def is_tlin(self):
        return self in (AlgorithmKind.TLIN_SINGLE_TOTAL,
                        AlgorithmKind.TLIN_SINGLE_INDIVIDUAL)

    @property
    def is_wmmse(self):
        return self is AlgorithmKind.WMMSE_INDIVIDUAL

    @property
    def constraint_mode(self):
        if self in (AlgorithmKind.TSTINR_SINGLE_TOTAL,
                    AlgorithmKind.TLIN_SINGLE_TOTAL,
                    AlgorithmKind.TSTINR_MULTI):
            return "total"
        return "individual"

    @property
    def relay_inequality(self):
        return self is AlgorithmKind.TSTINR_MULTI


class InfeasibleSubproblem(RuntimeError):
    """An eta budget went non-positive; the iterate left the feasible set."""


@dataclass(frozen=True)
class ConvergenceCriteria:
    rel_obj_tol: float = 1e-6
    max_outer_iter: int = 500
    stall_window: int = 3

    def __post_init__(self):
        if self.rel_obj_tol <= 0 or self.max_outer_iter < 1 or self.stall_window < 1:
            raise ValueError("criteria must be positive")


@dataclass
class IterationTrace:
    """Per-iteration history of one run."""

    f: list = field(default_factory=list)
    C: list = field(default_factory=list)
    tstinr: list = field(default_factory=list)
    sum_rate: list = field(default_factory=list)
    max_residual: list = field(default_factory=list)
    block_seconds: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return len(self.sum_rate)


@dataclass(frozen=True)
class RelayQcqpAssembly:
    B1: np.ndarray
    B2: np.ndarray
    b: np.ndarray
    eta1: float


@dataclass(frozen=True)
class PrecoderQcqpAssembly:
    Qk: np.ndarray
    Lk: np.ndarray
    eta2: float | None
    eta3: tuple | None       # per-relay budgets, individual mode
    linear: np.ndarray | None  # WMMSE linear coefficient, vec form


def update_C(powers) -> float:
    """Dinkelbach-style weight update: C = P^S / (P^I + P^N)."""
    return tstinr(powers)


def _relay_power_terms(eff, tx, budget, l):
    """Power transmitted by relay l at the current variables."""
    K = len(tx.U)
    return sum(np.linalg.norm(tx.W[l] @ eff.Gbar[l][k]) ** 2 for k in range(K)) \
        + budget.sigma1_sq * np.linalg.norm(tx.W[l]) ** 2


def assemble_relay_qcqp(kind: AlgorithmKind, eff: EffectiveChannels,
                        channels: ChannelSet, tx: Transceivers,
                        budget: PowerBudget, r: int,
                        C: float = 1.0) -> RelayQcqpAssembly:
    """Quadratic coefficients of the model objective restricted to W_r.

    The restriction is exact up to an additive constant: the vectorized
    objective is x^H B1 x + 2 Re(b^H x) with x = vec(W_r).
    """
    K = len(tx.U)
    R = len(tx.W)
    Lr = tx.W[r].shape[0]
    s1 = budget.sigma1_sq
    sig = 0.0 if kind.is_tlin else 1.0
    Cw = 1.0 if kind.is_tlin else C

    def off_relay_part(k, q):
        """Part of V_k^H T_kq routed through relays other than r."""
        part = np.zeros((tx.V[k].shape[1], tx.U[q].shape[1]), dtype=complex)
        for l in range(R):
            if l != r:
                part += eff.Vbar[k][l] @ tx.W[l] @ eff.Gbar[l][q]
        return part

    B1 = np.zeros((Lr * Lr, Lr * Lr), dtype=complex)
    b_mat = np.zeros((Lr, Lr), dtype=complex)
    if kind.is_wmmse:
        Gsum = sum(eff.Gbar[r][q] @ eff.Gbar[r][q].conj().T for q in range(K)) \
            + s1 * np.eye(Lr)
        Vw = sum(eff.Vbar[k][r].conj().T @ tx.S[k] @ eff.Vbar[k][r]
                 for k in range(K))
        B1 = np.kron(Gsum.T, Vw)
        for k in range(K):
            VkrH_S = eff.Vbar[k][r].conj().T @ tx.S[k]
            for q in range(K):
                b_mat += VkrH_S @ off_relay_part(k, q) @ eff.Gbar[r][q].conj().T
            # Linear desired-signal term -2 Re tr(S_k V^H T_kk).
            b_mat -= VkrH_S @ eff.Gbar[r][k].conj().T
    else:
        for k in range(K):
            Vkr = eff.Vbar[k][r]
            VV = Vkr.conj().T @ Vkr
            P_rr = Cw * s1 * np.eye(Lr, dtype=complex)
            P_rr -= sig * eff.Gbar[r][k] @ eff.Gbar[r][k].conj().T
            for q in range(K):
                if q != k:
                    P_rr += Cw * eff.Gbar[r][q] @ eff.Gbar[r][q].conj().T
            B1 += np.kron(P_rr.T, VV)
            for q in range(K):
                weight = Cw if q != k else -sig
                if weight != 0.0:
                    b_mat += weight * Vkr.conj().T @ off_relay_part(k, q) \
                        @ eff.Gbar[r][q].conj().T

    B2 = np.kron(
        (sum(eff.Gbar[r][k] @ eff.Gbar[r][k].conj().T for k in range(K))
         + s1 * np.eye(Lr)).T,
        np.eye(Lr),
    )
    if kind.constraint_mode == "individual":
        eta1 = budget.p0_R
    else:
        eta1 = budget.p_max_R - sum(
            _relay_power_terms(eff, tx, budget, l) for l in range(R) if l != r
        )
        if eta1 <= 0:
            raise InfeasibleSubproblem(
                f"relay {r}: other relays exhaust the power budget (eta1 = {eta1:.3e})"
            )
    B1 = 0.5 * (B1 + B1.conj().T)
    return RelayQcqpAssembly(B1, B2, b_mat.reshape(-1, order="F"), float(eta1))


def assemble_precoder_qcqp(kind: AlgorithmKind, eff: EffectiveChannels,
                           channels: ChannelSet, tx: Transceivers,
                           budget: PowerBudget, k: int,
                           C: float = 1.0) -> PrecoderQcqpAssembly:
    """Quadratic coefficients of the model objective restricted to U_k."""
    K = len(tx.U)
    R = len(tx.W)
    Mk = tx.U[k].shape[0]
    dk = tx.U[k].shape[1]
    s1 = budget.sigma1_sq
    sig = 0.0 if kind.is_tlin else 1.0
    Cw = 1.0 if kind.is_tlin else C

    # D[q] = sum_r Vbar_qr Wbar_rk: decoded effective channel Tx k -> Rx q.
    D = [sum(eff.Vbar[q][r] @ eff.Wbar[r][k] for r in range(R))
         for q in range(K)]
    linear = None
    if kind.is_wmmse:
        Qk = sum(D[q].conj().T @ tx.S[q] @ D[q] for q in range(K))
        linear = (-(D[k].conj().T @ tx.S[k])).reshape(-1, order="F")
    else:
        Qk = -sig * D[k].conj().T @ D[k]
        for q in range(K):
            if q != k:
                Qk = Qk + Cw * D[q].conj().T @ D[q]
    Qk = 0.5 * (Qk + Qk.conj().T)
    Lk = sum(eff.Wbar[r][k].conj().T @ eff.Wbar[r][k] for r in range(R))
    Lk = 0.5 * (Lk + Lk.conj().T)

    others_r = [
        sum(np.linalg.norm(eff.Wbar[r][q] @ tx.U[q]) ** 2
            for q in range(K) if q != k) + s1 * np.linalg.norm(tx.W[r]) ** 2
        for r in range(R)
    ]
    if kind.constraint_mode == "individual":
        if 2 * Mk * dk < R + 1:
            raise InfeasibleSubproblem(
                f"user {k}: individual mode needs 2*M*d >= R+1 "
                f"(2*{Mk}*{dk} < {R + 1})"
            )
        eta3 = tuple(budget.p0_R - o for o in others_r)
        if min(eta3) <= 0:
            raise InfeasibleSubproblem(
                f"user {k}: a per-relay budget went non-positive ({min(eta3):.3e})"
            )
        return PrecoderQcqpAssembly(Qk, Lk, None, eta3, linear)
    eta2 = budget.p_max_R - sum(others_r)
    if eta2 <= 0:
        raise InfeasibleSubproblem(
            f"user {k}: relay budget left for this precoder is {eta2:.3e}"
        )
    return PrecoderQcqpAssembly(Qk, Lk, float(eta2), None, linear)


def wmmse_update_VS(eff: EffectiveChannels):
    """MMSE decoders and optimal weights: V = Fbar^-1 T_kk, S = I + T^H F^-1 T."""
    V, S = [], []
    for k in range(len(eff.F)):
        Tkk = eff.T[k][k]
        Vk = np.linalg.solve(eff.Fbar[k], Tkk)
        Sk = np.eye(Tkk.shape[1]) + Tkk.conj().T @ np.linalg.solve(eff.F[k], Tkk)
        S.append(0.5 * (Sk + Sk.conj().T))
        V.append(Vk)
    return tuple(V), tuple(S)


def _block_objective(kind, eff, tx, budget, C):
    """The objective each block update must not increase (fixed C)."""
    if kind.is_wmmse:
        return wmmse_objective(eff, tx)
    powers = link_powers(eff, tx, budget)
    if kind.is_tlin:
        return powers.total_I + powers.total_N
    return C * (powers.total_I + powers.total_N) - powers.total_S


def run(kind: AlgorithmKind, channels: ChannelSet, dims: NetworkDims,
        budget: PowerBudget, criteria: ConvergenceCriteria | None = None,
        init: Transceivers | None = None,
        tol: SolverTolerances = DEFAULT_TOL):
    """Run the alternating loop for one algorithm kind.

    Returns (transceivers, trace).  The output is feasible to 1e-8; for
    TSTINR kinds the TSTINR trace is non-decreasing, for WMMSE the weighted
    MSE objective trace is non-increasing.
    """
    if criteria is None:
        criteria = ConvergenceCriteria()
    if init is None:
        raise ValueError("an initial feasible transceiver set is required")
    report = check_feasibility(channels, init, budget, kind.constraint_mode,
                               tol=1e-6, relay_inequality=kind.relay_inequality)
    if not report.passed:
        raise ValueError(
            f"infeasible init: max power residual {report.max_residual:.3e}"
        )
    if kind.constraint_mode == "individual" and not kind.is_wmmse:
        for k in range(dims.K):
            if 2 * dims.M[k] * dims.d[k] < dims.R + 1:
                raise ValueError(
                    f"user {k}: individual mode needs 2*M*d >= R+1"
                )

    tx = init
    C = 1.0
    trace = IterationTrace()
    eff = build_effective(channels, tx, dims, budget)
    prev_rate = None
    below_tol = 0

    for _it in range(criteria.max_outer_iter):
        t0 = time.perf_counter()

        # Decoder block (and weights for WMMSE).
        if kind.is_wmmse:
            V, S = wmmse_update_VS(eff)
            tx = tx.replace(V=V, S=S)
        else:
            V = []
            for k in range(dims.K):
                Tkk = eff.T[k][k]
                if kind.is_tlin:
                    A = eff.F[k]
                else:
                    A = C * eff.F[k] - Tkk @ Tkk.conj().T
                V.append(nu_min(A, dims.d[k], tol.eig_tol))
            tx = tx.replace(V=tuple(V))
        eff = build_effective(channels, tx, dims, budget)
        t_dec = time.perf_counter()

        # Relay block, ascending index, immediate cache refresh.
        for r in range(dims.R):
            f_before = _block_objective(kind, eff, tx, budget, C)
            asm = assemble_relay_qcqp(kind, eff, channels, tx, budget, r, C)
            mode = "inequality" if kind.relay_inequality else "equality"
            prob = TrsProblem(asm.B1, asm.B2, asm.b, asm.eta1, mode)
            x, _lam, _cert = solve_trs(prob, tol)
            Lr = tx.W[r].shape[0]
            W_new = list(tx.W)
            W_new[r] = x.reshape((Lr, Lr), order="F")
            tx_new = tx.replace(W=tuple(W_new))
            eff_new = build_effective(channels, tx_new, dims, budget)
            # Numerical guard: the subproblem optimum can only improve the
            # restriction; keep the old block if roundoff says otherwise.
            if _block_objective(kind, eff_new, tx_new, budget, C) \
                    <= f_before + 1e-12 * max(1.0, abs(f_before)):
                tx, eff = tx_new, eff_new
        t_rel = time.perf_counter()

        # Precoder block.
        for k in range(dims.K):
            f_before = _block_objective(kind, eff, tx, budget, C)
            asm = assemble_precoder_qcqp(kind, eff, channels, tx, budget, k, C)
            dk = dims.d[k]
            if kind is AlgorithmKind.TSTINR_MULTI:
                X, _mu = solve_orth_precoder(asm.Qk, asm.Lk, budget.p0_T, dk,
                                             asm.eta2, tol)
            else:
                n = dims.M[k] * dk
                cons = [(np.eye(n, dtype=complex), budget.p0_T)]
                if kind.constraint_mode == "total":
                    cons.append((np.kron(np.eye(dk), asm.Lk), asm.eta2))
                else:
                    for r in range(dims.R):
                        C3 = np.kron(
                            np.eye(dk),
                            eff.Wbar[r][k].conj().T @ eff.Wbar[r][k],
                        )
                        cons.append((0.5 * (C3 + C3.conj().T), asm.eta3[r]))
                c_lin = asm.linear if asm.linear is not None \
                    else np.zeros(n, dtype=complex)
                prob = EqQcqp(np.kron(np.eye(dk), asm.Qk), c_lin, cons)
                x0 = tx.U[k].reshape(-1, order="F")
                # Re-project the sphere coordinate of the warm start; the
                # remaining residual is roundoff-level by construction.
                x0 = x0 * np.sqrt(budget.p0_T) / np.linalg.norm(x0)
                x, _res, _stall = solve_eq_qcqp(prob, x0, tol)
                X = x.reshape((dims.M[k], dk), order="F")
            U_new = list(tx.U)
            U_new[k] = X
            tx_new = tx.replace(U=tuple(U_new))
            eff_new = build_effective(channels, tx_new, dims, budget)
            if _block_objective(kind, eff_new, tx_new, budget, C) \
                    <= f_before + 1e-12 * max(1.0, abs(f_before)):
                tx, eff = tx_new, eff_new
        t_pre = time.perf_counter()

        powers = link_powers(eff, tx, budget)
        rate = sum_rate(eff, budget)
        if kind.is_wmmse:
            f_now = wmmse_objective(eff, tx)
            ratio = None
        else:
            f_now = C * (powers.total_I + powers.total_N) - powers.total_S
            ratio = tstinr(powers)
        report = check_feasibility(channels, tx, budget, kind.constraint_mode,
                                   relay_inequality=kind.relay_inequality)
        trace.f.append(float(f_now))
        trace.C.append(float(C))
        trace.tstinr.append(float(ratio) if ratio is not None else float("nan"))
        trace.sum_rate.append(float(rate))
        trace.max_residual.append(report.max_residual)
        trace.block_seconds.append((t_dec - t0, t_rel - t_dec, t_pre - t_rel))

        if kind.is_tstinr_family:
            C = update_C(powers)

        if prev_rate is not None:
            denom = max(abs(prev_rate), 1e-12)
            if abs(rate - prev_rate) / denom < criteria.rel_obj_tol:
                below_tol += 1
            else:
                below_tol = 0
            # One sub-tolerance step can be a transient plateau; require a
            # short streak before declaring convergence.
            if below_tol >= criteria.stall_window:
                trace.converged = True
                break
        prev_rate = rate

    return tx, trace
