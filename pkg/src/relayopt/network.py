"""Two-hop K x R x K AF relay network: data model and physical quantities.

All powers and rates are linear scale; dB conversions live at the CLI
boundary.  Every container is treated as immutable after construction and
all operations are pure functions, so they are safe to evaluate
concurrently on shared inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """A matrix does not have the shape required by the network dimensions."""


@dataclass(frozen=True)
class NetworkDims:
    """Static network description: K user pairs, R relays, antenna counts.

    M[k], N[k] are transmit/receive antennas of user pair k, L[r] the
    antennas of relay r and d[k] the parallel data streams of user k.
    The transmit signal covariance is assumed to be the identity.
    """

    K: int
    R: int
    M: tuple[int, ...]
    N: tuple[int, ...]
    L: tuple[int, ...]
    d: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "M", tuple(int(m) for m in self.M))
        object.__setattr__(self, "N", tuple(int(n) for n in self.N))
        object.__setattr__(self, "L", tuple(int(l) for l in self.L))
        object.__setattr__(self, "d", tuple(int(x) for x in self.d))
        if self.K < 1 or self.R < 1:
            raise DimensionError("need K >= 1 and R >= 1")
        if len(self.M) != self.K or len(self.N) != self.K or len(self.d) != self.K:
            raise DimensionError("M, N, d must have length K")
        if len(self.L) != self.R:
            raise DimensionError("L must have length R")
        if any(m < 1 for m in self.M + self.N + self.L):
            raise DimensionError("all antenna counts must be >= 1")
        for k in range(self.K):
            if not 1 <= self.d[k] <= min(self.M[k], self.N[k]):
                raise DimensionError(
                    f"d[{k}]={self.d[k]} must satisfy 1 <= d <= min(M, N)"
                )

    @classmethod
    def uniform(cls, K, R, M, N, L, d=1):
        """All users and relays share the same antenna/stream counts."""
        return cls(K, R, (M,) * K, (N,) * K, (L,) * R, (d,) * K)

    def with_streams(self, d):
        return NetworkDims(self.K, self.R, self.M, self.N, self.L, tuple(d))


@dataclass(frozen=True)
class PowerBudget:
    """Transmit power budgets and noise variances, linear scale.

    p_max_R is the total relay budget used by the total-power constraint;
    the simulation convention ties it to R * p0_R.
    """

    p0_T: float
    p0_R: float
    p_max_R: float
    sigma1_sq: float = 1.0
    sigma2_sq: float = 1.0

    def __post_init__(self):
        for name in ("p0_T", "p0_R", "p_max_R", "sigma1_sq", "sigma2_sq"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class ChannelSet:
    """One channel realization: G[r][k] is L_r x M_k, H[k][r] is N_k x L_r."""

    G: tuple
    H: tuple

    def __post_init__(self):
        object.__setattr__(self, "G", tuple(tuple(row) for row in self.G))
        object.__setattr__(self, "H", tuple(tuple(row) for row in self.H))
        for row in self.G + self.H:
            for mat in row:
                if not np.all(np.isfinite(mat)):
                    raise ValueError("channel entries must be finite")

    def validate(self, dims: NetworkDims):
        for r in range(dims.R):
            for k in range(dims.K):
                if self.G[r][k].shape != (dims.L[r], dims.M[k]):
                    raise DimensionError(
                        f"G[{r}][{k}] has shape {self.G[r][k].shape}, "
                        f"expected {(dims.L[r], dims.M[k])}"
                    )
        for k in range(dims.K):
            for r in range(dims.R):
                if self.H[k][r].shape != (dims.N[k], dims.L[r]):
                    raise DimensionError(
                        f"H[{k}][{r}] has shape {self.H[k][r].shape}, "
                        f"expected {(dims.N[k], dims.L[r])}"
                    )


@dataclass(frozen=True)
class Transceivers:
    """Optimization variables: precoders U, decoders V, relay matrices W.

    V is None before the first decoder update.  S holds the per-user
    Hermitian weight matrices and is present only for WMMSE runs.
    """

    U: tuple
    W: tuple
    V: tuple | None = None
    S: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "U", tuple(self.U))
        object.__setattr__(self, "W", tuple(self.W))
        if self.V is not None:
            object.__setattr__(self, "V", tuple(self.V))
        if self.S is not None:
            object.__setattr__(self, "S", tuple(self.S))

    def validate(self, dims: NetworkDims):
        for k in range(dims.K):
            if self.U[k].shape != (dims.M[k], dims.d[k]):
                raise DimensionError(f"U[{k}] has shape {self.U[k].shape}")
            if self.V is not None and self.V[k].shape != (dims.N[k], dims.d[k]):
                raise DimensionError(f"V[{k}] has shape {self.V[k].shape}")
        for r in range(dims.R):
            if self.W[r].shape != (dims.L[r], dims.L[r]):
                raise DimensionError(f"W[{r}] has shape {self.W[r].shape}")

    def replace(self, **kwargs):
        fields = {"U": self.U, "W": self.W, "V": self.V, "S": self.S}
        fields.update(kwargs)
        return Transceivers(**fields)


@dataclass(frozen=True)
class EffectiveChannels:
    """Cached channel products for one (channels, transceivers) pair.

    T[k][q] = sum_r H[k][r] W[r] G[r][q] U[q] is the end-to-end channel,
    F[k] the interference-plus-noise covariance at receiver k and
    Fbar[k] = T[k][k] T[k][k]^H + F[k].  Vbar is None while V is unset.
    """

    T: tuple
    Gbar: tuple
    Hbar: tuple
    Wbar: tuple
    Vbar: tuple | None
    F: tuple
    Fbar: tuple


@dataclass(frozen=True)
class LinkPowers:
    """Per-user desired-signal, interference and noise powers."""

    P_S: np.ndarray
    P_I: np.ndarray
    P_N: np.ndarray

    @property
    def total_S(self):
        return float(np.sum(self.P_S))

    @property
    def total_I(self):
        return float(np.sum(self.P_I))

    @property
    def total_N(self):
        return float(np.sum(self.P_N))


def _herm(a):
    """Symmetrize to guard eigensolvers against 1-ulp asymmetry."""
    return 0.5 * (a + a.conj().T)


def build_effective(channels: ChannelSet, tx: Transceivers, dims: NetworkDims,
                    budget: PowerBudget) -> EffectiveChannels:
    """Compute all cached channel products for the current variables."""
    channels.validate(dims)
    tx.validate(dims)
    K, R = dims.K, dims.R
    Gbar = tuple(
        tuple(channels.G[r][k] @ tx.U[k] for k in range(K)) for r in range(R)
    )
    Wbar = tuple(
        tuple(tx.W[r] @ channels.G[r][k] for k in range(K)) for r in range(R)
    )
    Hbar = tuple(
        tuple(channels.H[k][r] @ tx.W[r] for r in range(R)) for k in range(K)
    )
    Vbar = None
    if tx.V is not None:
        Vbar = tuple(
            tuple(tx.V[k].conj().T @ channels.H[k][r] for r in range(R))
            for k in range(K)
        )
    T = tuple(
        tuple(
            sum(Hbar[k][r] @ Gbar[r][q] for r in range(R))
            for q in range(K)
        )
        for k in range(K)
    )
    F = []
    Fbar = []
    for k in range(K):
        Fk = budget.sigma2_sq * np.eye(dims.N[k], dtype=complex)
        for q in range(K):
            if q != k:
                Fk = Fk + T[k][q] @ T[k][q].conj().T
        for r in range(R):
            Fk = Fk + budget.sigma1_sq * (Hbar[k][r] @ Hbar[k][r].conj().T)
        Fk = _herm(Fk)
        F.append(Fk)
        Fbar.append(_herm(Fk + T[k][k] @ T[k][k].conj().T))
    return EffectiveChannels(T, Gbar, Hbar, Wbar, Vbar, tuple(F), tuple(Fbar))


def link_powers(eff: EffectiveChannels, tx: Transceivers,
                budget: PowerBudget) -> LinkPowers:
    """Desired-signal, interference and noise power at every receiver."""
    if tx.V is None:
        raise ValueError("link powers require decoders V")
    K = len(tx.U)
    R = len(tx.W)
    P_S = np.zeros(K)
    P_I = np.zeros(K)
    P_N = np.zeros(K)
    for k in range(K):
        Vh = tx.V[k].conj().T
        P_S[k] = np.linalg.norm(Vh @ eff.T[k][k]) ** 2
        P_I[k] = sum(
            np.linalg.norm(Vh @ eff.T[k][q]) ** 2 for q in range(K) if q != k
        )
        P_N[k] = budget.sigma1_sq * sum(
            np.linalg.norm(eff.Vbar[k][r] @ tx.W[r]) ** 2 for r in range(R)
        ) + budget.sigma2_sq * np.linalg.norm(tx.V[k]) ** 2
    return LinkPowers(P_S, P_I, P_N)


def tx_powers(channels: ChannelSet, tx: Transceivers, budget: PowerBudget):
    """Per-user transmit power, per-relay power and the relay total."""
    K = len(tx.U)
    R = len(tx.W)
    P_T = np.array([np.linalg.norm(tx.U[k]) ** 2 for k in range(K)])
    P_R = np.zeros(R)
    for r in range(R):
        P_R[r] = sum(
            np.linalg.norm(tx.W[r] @ channels.G[r][k] @ tx.U[k]) ** 2
            for k in range(K)
        ) + budget.sigma1_sq * np.linalg.norm(tx.W[r]) ** 2
    return P_T, P_R, float(np.sum(P_R))


def tstinr(powers: LinkPowers) -> float:
    """Total signal to total interference-plus-noise ratio."""
    denom = powers.total_I + powers.total_N
    if denom <= 0:
        raise ValueError("TSTINR undefined: interference-plus-noise power is zero")
    return powers.total_S / denom


def sum_rate(eff: EffectiveChannels, budget: PowerBudget) -> float:
    """Half-duplex sum rate (1/2) sum_k log2 det(I + F_k^-1 T_kk T_kk^H)."""
    total = 0.0
    for k in range(len(eff.F)):
        sign_f, logdet_f = np.linalg.slogdet(eff.F[k])
        sign_b, logdet_b = np.linalg.slogdet(eff.Fbar[k])
        if sign_f.real <= 0:
            raise ValueError(f"F[{k}] is not positive definite")
        total += (logdet_b - logdet_f) / np.log(2.0)
    return 0.5 * total


def wmmse_objective(eff: EffectiveChannels, tx: Transceivers) -> float:
    """Weighted-MSE objective sum_k { tr[S_k E_k] - log2 det S_k }."""
    if tx.S is None:
        raise ValueError("WMMSE objective requires weight matrices S")
    if tx.V is None:
        raise ValueError("WMMSE objective requires decoders V")
    total = 0.0
    for k in range(len(tx.U)):
        Vk, Sk, Tkk = tx.V[k], tx.S[k], eff.T[k][k]
        d = Vk.shape[1]
        E = (Vk.conj().T @ eff.Fbar[k] @ Vk - Vk.conj().T @ Tkk
             - Tkk.conj().T @ Vk + np.eye(d))
        sign, logdet = np.linalg.slogdet(Sk)
        if sign.real <= 0:
            raise ValueError(f"S[{k}] must be positive definite")
        total += np.trace(Sk @ E).real - logdet / np.log(2.0)
    return float(total)


@dataclass(frozen=True)
class FeasibilityReport:
    user_residuals: np.ndarray
    relay_residuals: np.ndarray
    max_residual: float
    passed: bool


def check_feasibility(channels: ChannelSet, tx: Transceivers,
                      budget: PowerBudget, mode: str = "total",
                      tol: float = 1e-8,
                      relay_inequality: bool = False) -> FeasibilityReport:
    """Power-constraint residuals.

    mode is "total" (one sum-power constraint over all relays) or
    "individual" (one constraint per relay).  With relay_inequality the
    relay residual is max(0, P - budget) instead of |P - budget|.
    Residuals are relative to the budget level, so the tolerance is
    scale-free across SNR points.
    """
    P_T, P_R, P_R_tot = tx_powers(channels, tx, budget)
    user_res = np.abs(P_T - budget.p0_T) / max(1.0, budget.p0_T)
    if mode == "total":
        gap = (P_R_tot - budget.p_max_R) / max(1.0, budget.p_max_R)
        relay_res = np.array([max(0.0, gap) if relay_inequality else abs(gap)])
    elif mode == "individual":
        gaps = (P_R - budget.p0_R) / max(1.0, budget.p0_R)
        relay_res = np.maximum(0.0, gaps) if relay_inequality else np.abs(gaps)
    else:
        raise ValueError(f"unknown constraint mode {mode!r}")
    max_res = float(max(user_res.max(), relay_res.max()))
    return FeasibilityReport(user_res, relay_res, max_res, max_res < tol)
