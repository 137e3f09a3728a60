"""Weighted-sum-rate precoder optimization under per-fixture L1 budgets.

Alternating optimization in the WMMSE form: with the precoder fixed,
per-stream MMSE equalizers and inverse-MSE weights have closed forms;
with those fixed, the weighted-sum-MSE surrogate is concave quadratic
in the precoder and is maximized by accelerated projected gradient over
the per-row L1 balls. The surrogate is a tight lower bound of the true
weighted sum rate at freshly updated equalizers/weights, which makes
the outer loop monotonically nondecreasing.

The common-rate shares never enter the subproblem explicitly: for fixed
priorities the optimal split is greedy (everything to the highest
priority taker, or to the weak user under NOMA), so the common stream
contributes through the minimum of the decoders' surrogate rates. The
exact shares are re-materialized from the true rates on exit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelMatrix, Fixture
from .signal_model import (
    Precoder,
    RateReport,
    StreamLayout,
    assemble_report,
    build_layout,
    default_shares,
)

__all__ = [
    "AoConfig",
    "WmmseState",
    "Solution",
    "NumericalFailure",
    "epsilon_from_snr",
    "mmse_equalizer",
    "mse_and_weight",
    "snapshot_state",
    "project_rows_l1",
    "solve_subproblem",
    "ao_solve",
    "embed_sdma_matrix",
    "embed_noma_matrix",
    "grid_oracle",
    "zf_precoder",
]

LN2 = math.log(2.0)
_DEN_FLOOR = 1e-300


class NumericalFailure(RuntimeError):
    """Raised when the subproblem solver meets non-finite numbers."""


@dataclass(frozen=True)
class AoConfig:
    """Knobs of the alternating-optimization solver.

    `epsilon` overrides the SNR-derived amplitude budget when set;
    otherwise epsilon = sigma * 10^(snr_db/20) / reference_gain with
    sigma the RMS noise level of the channel. `restarts` counts all
    initializations including the mandatory ones (ZF, and for RSMA the
    embedded converged SDMA/NOMA solutions).
    """

    tolerance: float = 1e-4  # bits/s/Hz WSR change
    max_iterations: int = 500
    restarts: int = 4
    seed: int = 0
    snr_db: float = 40.0
    epsilon: float | None = None
    reference_gain: float = 1.0
    subproblem: str = "projected_gradient"
    pg_max_iter: int = 150
    pg_tol: float = 1e-8
    # also start from single-user corners (degenerate service); off by
    # default so scheme comparisons rank non-degenerate solutions
    corner_starts: bool = False

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("max_iterations and restarts must be >= 1")
        if self.subproblem != "projected_gradient":
            raise ValueError(f"unknown subproblem solver {self.subproblem!r}")


@dataclass
class WmmseState:
    """Snapshot of one AO iterate: precoder, shares, per-stage scalars."""

    precoder: np.ndarray
    shares: np.ndarray
    equalizers: dict  # {"private": per private column, "common": per decoder}
    mse_weights: dict  # matching inverse-MSE weights
    receiver_weights: dict  # alias of the equalizer gains in this realization
    wsr_history: list = field(default_factory=list)


@dataclass(frozen=True)
class Solution:
    precoder: Precoder
    shares: np.ndarray
    report: RateReport
    iterations: int
    converged: bool
    restart_index: int
    wsr_history: tuple

    @property
    def wsr(self) -> float:
        return self.report.wsr


def epsilon_from_snr(
    snr_db: float,
    sigma: float,
    fixture: Fixture | None = None,
    reference_gain: float = 1.0,
) -> float:
    """Per-fixture amplitude budget for a target transmit SNR.

    epsilon = sigma * 10^(snr_db/20) / reference_gain, so the received
    electrical SNR (h p)^2 / sigma^2 of a reference-gain link scales as
    10^(snr_db/10). Passing a fixture enables the physical drive cap
    min(dc_bias, max_drive - dc_bias).
    """
    if sigma <= 0:
        raise ValueError("noise standard deviation must be positive")
    if reference_gain <= 0:
        raise ValueError("reference gain must be positive")
    eps = sigma * 10.0 ** (snr_db / 20.0) / reference_gain
    if fixture is not None:
        eps = min(eps, fixture.drive_headroom)
    return eps


# --------------------------------------------------------------------------
# layout compilation and stage statistics
# --------------------------------------------------------------------------


class _Stats:
    """Per-precoder received statistics shared by the solver pieces."""

    __slots__ = ("A", "priv_pow", "priv_sum", "a_p", "T_p", "intf_p", "a_c", "T_c", "intf_c")


class _Compiled:
    """Channel/layout constants reused across solver iterations."""

    def __init__(self, channel: ChannelMatrix, layout: StreamLayout, priorities: np.ndarray):
        self.H = channel.gains
        self.sig2 = channel.noise
        K = channel.num_users
        w = np.asarray(priorities, dtype=float)
        if w.shape != (K,) or np.any(w <= 0):
            raise ValueError("priorities must be positive, one per user")
        self.w = w
        self.layout = layout
        self.priv_cols = np.array(layout.private_columns, dtype=np.intp)
        self.owners = np.array(
            [layout.streams[j].owner for j in layout.private_columns], dtype=np.intp
        )
        self.n_priv = len(self.priv_cols)
        self.common_col = layout.common_column
        stream = layout.common_stream
        if stream is None:
            self.decoders = np.empty(0, dtype=np.intp)
            self.w_common = 0.0
        else:
            self.decoders = np.array(stream.decoders, dtype=np.intp)
            if len(stream.carries) == 1:
                self.w_common = float(w[stream.carries[0]])
            else:
                self.w_common = float(w[int(np.argmax(w))])
        self.num_streams = layout.num_streams
        self.num_fixtures = channel.num_fixtures
        self.hnorm2 = np.sum(self.H**2, axis=1)
        # zero-diagonal mask: cross interference among private columns
        self.cross = 1.0 - np.eye(self.n_priv)

    def stats(self, P: np.ndarray) -> _Stats:
        s = _Stats()
        s.A = self.H @ P
        s.priv_pow = s.A[:, self.priv_cols] ** 2
        s.priv_sum = s.priv_pow.sum(axis=1)
        s.a_p = s.A[self.owners, self.priv_cols]
        s.intf_p = (s.priv_pow[self.owners] * self.cross[np.arange(self.n_priv)]).sum(axis=1)
        s.T_p = self.sig2[self.owners] + s.priv_sum[self.owners]
        if self.common_col is None:
            s.a_c = s.T_c = s.intf_c = np.empty(0)
        else:
            s.a_c = s.A[self.decoders, self.common_col]
            s.intf_c = s.priv_sum[self.decoders]
            s.T_c = self.sig2[self.decoders] + s.intf_c + s.a_c**2
        return s

    def true_rates(self, P: np.ndarray):
        """(wsr, cap, private_rates) under the greedy common-rate split."""
        s = self.stats(P)
        priv_rates = np.zeros(len(self.w))
        if self.n_priv:
            sinr_p = s.a_p**2 / np.maximum(s.intf_p + self.sig2[self.owners], _DEN_FLOOR)
            priv_rates[self.owners] = np.log2(1.0 + sinr_p)
        cap = 0.0
        if self.common_col is not None:
            sinr_c = s.a_c**2 / np.maximum(s.intf_c + self.sig2[self.decoders], _DEN_FLOOR)
            cap = float(np.min(np.log2(1.0 + sinr_c)))
        wsr = float(self.w @ priv_rates) + self.w_common * cap
        return wsr, cap, priv_rates


def _mmse_gu(a: np.ndarray, T: np.ndarray):
    """MMSE equalizer gains and inverse-MSE weights for one stage batch."""
    g = a / np.maximum(T, _DEN_FLOOR)
    mse = 1.0 - g * a  # equals 1/(1+SINR) at the MMSE gain
    u = 1.0 / np.maximum(mse, 1e-15)
    return g, u


def _stage_quantities(channel, precoder, layout, user, stream):
    """(a, T) of one user/stream pair at its SIC stage."""
    desc = layout.streams[stream]
    amps = channel.gains[user] @ precoder.matrix
    priv = list(layout.private_columns)
    if desc.kind == "common":
        if user not in desc.decoders:
            raise ValueError(f"user {user} does not decode stream {stream}")
        total = channel.noise[user] + amps[stream] ** 2 + sum(amps[j] ** 2 for j in priv)
    else:
        if desc.owner != user:
            raise ValueError(f"stream {stream} is not user {user}'s private stream")
        total = channel.noise[user] + sum(amps[j] ** 2 for j in priv)
    return float(amps[stream]), float(total)


def mmse_equalizer(channel: ChannelMatrix, precoder: Precoder, layout: StreamLayout, user: int, stream: int) -> float:
    """Stage-MSE-minimizing scalar equalizer g = a / (a^2 + interference + noise)."""
    a, T = _stage_quantities(channel, precoder, layout, user, stream)
    return a / max(T, _DEN_FLOOR)


def mse_and_weight(
    channel: ChannelMatrix,
    precoder: Precoder,
    layout: StreamLayout,
    equalizer: float,
    user: int,
    stream: int,
) -> tuple[float, float]:
    """Stage MSE at a given equalizer and the inverse-MSE weight.

    At the MMSE equalizer the MSE equals 1/(1+SINR), so -log2(mse) is
    the stream rate.
    """
    a, T = _stage_quantities(channel, precoder, layout, user, stream)
    mse = equalizer**2 * T - 2.0 * equalizer * a + 1.0
    if not 0.0 < mse <= 1.0 + 1e-12:
        raise ValueError(f"stage MSE {mse} outside (0, 1]; equalizer not at its MMSE value")
    mse = min(mse, 1.0)
    return mse, 1.0 / max(mse, 1e-15)


def snapshot_state(channel: ChannelMatrix, layout: StreamLayout, priorities, P: np.ndarray) -> WmmseState:
    """WmmseState with freshly updated equalizers/weights at precoder P."""
    comp = _Compiled(channel, layout, np.asarray(priorities, dtype=float))
    s = comp.stats(np.asarray(P, dtype=float))
    g_p, u_p = _mmse_gu(s.a_p, s.T_p)
    g_c, u_c = _mmse_gu(s.a_c, s.T_c)
    _, cap, _ = comp.true_rates(np.asarray(P, dtype=float))
    eq = {"private": g_p, "common": g_c}
    return WmmseState(
        precoder=np.array(P, dtype=float),
        shares=default_shares(layout, cap, comp.w),
        equalizers=eq,
        mse_weights={"private": u_p, "common": u_c},
        receiver_weights=eq,
    )


# --------------------------------------------------------------------------
# projection and the surrogate subproblem
# --------------------------------------------------------------------------


def project_rows_l1(matrix: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of every row onto the L1 ball of `radius`.

    Sort-based exact projection; rows already inside the ball are
    returned unchanged (bitwise).
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    P = np.array(matrix, dtype=float)
    if radius == 0.0:
        P[:] = 0.0
        return P
    absP = np.abs(P)
    over = absP.sum(axis=1) > radius
    if not np.any(over):
        return P
    V = absP[over]
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1)
    ranks = np.arange(1, V.shape[1] + 1)
    cond = U - (css - radius) / ranks > 0
    rho = cond.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = (css[np.arange(V.shape[0]), rho] - radius) / (rho + 1)
    P[over] = np.sign(P[over]) * np.maximum(V - theta[:, None], 0.0)
    return P


class _Surrogate:
    """Weighted-sum surrogate of the WSR for fixed equalizers/weights.

    value(P) = sum_k w_k * r_p_k(P) + w_common * min_j r_c_j(P) with
    r = log2(u) + (1 - u * mse(P)) / ln 2 per stream stage; concave in P
    (quadratic per smooth piece). The gradient uses the binding decoder
    of the min term. The fixed step is 1 / (Hessian norm bound), which
    satisfies the descent lemma on every smooth piece.
    """

    def __init__(self, comp: _Compiled, g_p, u_p, g_c, u_c):
        self.c = comp
        self.g_p, self.u_p, self.g_c, self.u_c = g_p, u_p, g_c, u_c
        self.coef_p = comp.w[comp.owners] * u_p / LN2
        self.rate_coef_c = u_c / LN2  # unweighted; the min picks the binding decoder
        self.coef_c = comp.w_common * self.rate_coef_c
        self.base_p = float(comp.w[comp.owners] @ (np.log2(u_p) + 1.0 / LN2)) if len(u_p) else 0.0
        self.base_c = np.log2(u_c) + 1.0 / LN2 if len(u_c) else np.empty(0)
        lip = float(np.sum(2.0 * self.coef_p * g_p**2 * comp.hnorm2[comp.owners]))
        if comp.common_col is not None and len(g_c):
            lip += float(np.max(2.0 * self.coef_c * g_c**2 * comp.hnorm2[comp.decoders]))
        self.step = 1.0 / max(lip, 1e-12)

    def _pieces(self, P: np.ndarray):
        c = self.c
        s = c.stats(P)
        value = self.base_p
        if c.n_priv:
            mse_p = self.g_p**2 * s.T_p - 2.0 * self.g_p * s.a_p + 1.0
            value -= float(np.dot(self.coef_p, mse_p))
        r_c = None
        if c.common_col is not None:
            mse_c = self.g_c**2 * s.T_c - 2.0 * self.g_c * s.a_c + 1.0
            r_c = self.base_c - self.rate_coef_c * mse_c
            value += c.w_common * float(np.min(r_c))
        return s, value, r_c

    def value(self, P: np.ndarray) -> float:
        return self._pieces(P)[1]

    def value_and_grad(self, P: np.ndarray):
        c = self.c
        s, value, r_c = self._pieces(P)
        G = np.zeros_like(s.A)
        if c.n_priv:
            alpha = np.zeros(len(c.w))
            alpha[c.owners] = 2.0 * self.coef_p * self.g_p**2
            G[:, c.priv_cols] -= alpha[:, None] * s.A[:, c.priv_cols]
            G[c.owners, c.priv_cols] += 2.0 * self.coef_p * self.g_p
        if r_c is not None:
            jb = int(np.argmin(r_c))
            k = c.decoders[jb]
            cc2 = 2.0 * self.coef_c[jb] * self.g_c[jb] ** 2
            G[k, c.priv_cols] -= cc2 * s.A[k, c.priv_cols]
            G[k, c.common_col] += -cc2 * s.A[k, c.common_col] + 2.0 * self.coef_c[jb] * self.g_c[jb]
        return value, c.H.T @ G

    def common_bound(self, P: np.ndarray) -> float:
        r_c = self._pieces(P)[2]
        return float(np.min(r_c)) if r_c is not None else 0.0


def _maximize_surrogate(sur: _Surrogate, epsilon: float, P0: np.ndarray, max_iter: int, tol: float):
    """Monotone accelerated projected gradient on the concave surrogate.

    FISTA-style momentum with a monotone safeguard: the kept iterate
    never decreases the surrogate, and momentum restarts whenever the
    accelerated candidate fails to improve.
    """
    x = project_rows_l1(P0, epsilon)
    fx = sur.value(x)
    if not np.isfinite(fx):
        raise NumericalFailure(f"non-finite surrogate value {fx} at the subproblem start")
    y, x_prev = x, x
    t = 1.0
    small_steps = 0
    for _ in range(max_iter):
        fy, grad = sur.value_and_grad(y)
        if not np.all(np.isfinite(grad)):
            raise NumericalFailure("non-finite surrogate gradient (check channel and noise scaling)")
        z = project_rows_l1(y + sur.step * grad, epsilon)
        fz = sur.value(z)
        if fz >= fx:
            gain = fz - fx
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = z + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev)
            x_prev, x, fx, t = x, z, fz, t_next
        elif y is not x:
            # momentum overshoot: restart from the best point
            y, x_prev, t = x, x, 1.0
            continue
        else:
            break  # no improving step from the best point itself
        if gain <= tol * max(1.0, abs(fx)):
            small_steps += 1
            if small_steps >= 2:
                break
        else:
            small_steps = 0
    return x, fx


def solve_subproblem(
    channel: ChannelMatrix,
    layout: StreamLayout,
    equalizers: dict,
    mse_weights: dict,
    priorities,
    epsilon: float,
    start: np.ndarray | None = None,
    max_iter: int = 150,
    tol: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray]:
    """One WMMSE subproblem: precoder update for fixed equalizers/weights.

    `equalizers`/`mse_weights` hold "private" (per private column) and
    "common" (per common decoder) arrays as in WmmseState. Returns the
    precoder matrix and the greedy common-rate shares measured against
    the surrogate common bound (clamped at zero).
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    comp = _Compiled(channel, layout, np.asarray(priorities, dtype=float))
    sur = _Surrogate(
        comp,
        np.asarray(equalizers.get("private", ()), dtype=float),
        np.asarray(mse_weights.get("private", ()), dtype=float),
        np.asarray(equalizers.get("common", ()), dtype=float),
        np.asarray(mse_weights.get("common", ()), dtype=float),
    )
    if start is None:
        start = np.zeros((channel.num_fixtures, layout.num_streams))
    P, _ = _maximize_surrogate(sur, epsilon, start, max_iter, tol)
    cap = max(0.0, sur.common_bound(P))
    shares = default_shares(layout, cap, comp.w)
    return P, shares


# --------------------------------------------------------------------------
# initial precoders
# --------------------------------------------------------------------------


def zf_precoder(channel: ChannelMatrix, epsilon: float) -> Precoder:
    """Zero-forcing directions scaled into the per-row L1 budget.

    Pseudo-inverse columns are normalized to equal power and scaled by a
    common factor so the binding fixture row exactly meets the budget.
    A rank-deficient channel falls back to a ridge-regularized inverse
    (ridge 1e-6).
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    H = channel.gains
    K = channel.num_users
    if np.linalg.matrix_rank(H) < K:
        W = H.T @ np.linalg.inv(H @ H.T + 1e-6 * np.eye(K))
    else:
        W = np.linalg.pinv(H)
    norms = np.linalg.norm(W, axis=0)
    W = W / np.maximum(norms, 1e-30)
    row_l1 = np.abs(W).sum(axis=1).max()
    return Precoder(matrix=W * (epsilon / max(row_l1, 1e-30)))


def _zf_start(channel: ChannelMatrix, comp: _Compiled, epsilon: float) -> np.ndarray:
    """ZF private columns; any common column takes the leftover row budget."""
    P = np.zeros((channel.num_fixtures, comp.num_streams))
    zf = zf_precoder(channel, epsilon).matrix
    frac = 1.0 if comp.common_col is None else 1.0 - 1e-3
    for col, owner in zip(comp.priv_cols, comp.owners):
        P[:, col] = zf[:, owner] * frac
    if comp.common_col is not None:
        residual = np.maximum(epsilon - np.abs(P).sum(axis=1), 0.0)
        broadside = np.sign(channel.gains.sum(axis=0))
        broadside[broadside == 0] = 1.0
        P[:, comp.common_col] = residual * broadside
    return P


def _beam_start(channel: ChannelMatrix, comp: _Compiled, epsilon: float, user: int) -> np.ndarray:
    """Full budget to one user's stream: covers single-user corner optima.

    Users without a private stream (NOMA weak user) get the common
    column instead, matched in sign to their channel row.
    """
    P = np.zeros((channel.num_fixtures, comp.num_streams))
    own = np.nonzero(comp.owners == user)[0]
    col = comp.priv_cols[own[0]] if len(own) else comp.common_col
    signs = np.sign(channel.gains[user])
    signs[signs == 0] = 1.0
    P[:, col] = epsilon * signs
    return P


def _random_start(channel: ChannelMatrix, comp: _Compiled, epsilon: float, rng) -> np.ndarray:
    P = rng.uniform(-1.0, 1.0, size=(channel.num_fixtures, comp.num_streams))
    row_l1 = np.abs(P).sum(axis=1, keepdims=True)
    return P / np.maximum(row_l1, 1e-30) * (epsilon * rng.uniform(0.3, 1.0))


def embed_sdma_matrix(rsma_layout: StreamLayout, sdma_layout: StreamLayout, matrix: np.ndarray) -> np.ndarray:
    """SDMA precoder mapped onto RSMA streams (zero common column)."""
    P = np.zeros((matrix.shape[0], rsma_layout.num_streams))
    for col in sdma_layout.private_columns:
        owner = sdma_layout.streams[col].owner
        P[:, rsma_layout.private_column_of(owner)] = matrix[:, col]
    return P


def embed_noma_matrix(rsma_layout: StreamLayout, noma_layout: StreamLayout, matrix: np.ndarray) -> np.ndarray:
    """NOMA precoder mapped onto RSMA streams (weak private column zero)."""
    P = np.zeros((matrix.shape[0], rsma_layout.num_streams))
    strong = noma_layout.streams[0].owner
    P[:, rsma_layout.private_column_of(strong)] = matrix[:, 0]
    P[:, rsma_layout.common_column] = matrix[:, noma_layout.common_column]
    return P


# --------------------------------------------------------------------------
# the alternating-optimization driver
# --------------------------------------------------------------------------


def _ao_single(comp: _Compiled, epsilon: float, P0: np.ndarray, config: AoConfig):
    """One AO run from one start; returns (P, history, iterations, converged)."""
    P = project_rows_l1(P0, epsilon)
    wsr, _, _ = comp.true_rates(P)
    history = [wsr]
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        s = comp.stats(P)
        g_p, u_p = _mmse_gu(s.a_p, s.T_p)
        g_c, u_c = _mmse_gu(s.a_c, s.T_c)
        sur = _Surrogate(comp, g_p, u_p, g_c, u_c)
        P, _ = _maximize_surrogate(sur, epsilon, P, config.pg_max_iter, config.pg_tol)
        new_wsr, _, _ = comp.true_rates(P)
        history.append(new_wsr)
        if abs(new_wsr - wsr) <= config.tolerance:
            converged = True
            break
        wsr = new_wsr
    return P, history, iterations, converged


def _resolve_epsilon(channel: ChannelMatrix, config: AoConfig) -> float:
    if config.epsilon is not None:
        if config.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        return float(config.epsilon)
    sigma = float(np.sqrt(np.mean(channel.noise)))
    return epsilon_from_snr(config.snr_db, sigma, reference_gain=config.reference_gain)


def ao_solve(
    channel: ChannelMatrix,
    layout: StreamLayout,
    priorities,
    config: AoConfig = AoConfig(),
    dc_bias: np.ndarray | None = None,
    warm_starts: tuple = (),
    embed_special_cases: bool = True,
) -> Solution:
    """Maximize the weighted sum rate with the multi-start AO solver.

    The restart set always contains the ZF start; for RSMA it also
    contains the converged SDMA solution padded with a zero common
    column and (two users) the converged NOMA solution mapped onto the
    RSMA streams, so WSR(RSMA) >= max(WSR(SDMA), WSR(NOMA)) holds by
    monotone ascent. The special-case solves run under the same config
    so they reproduce standalone results; callers that already hold
    those solutions can pass the embedded matrices through
    `warm_starts` and set `embed_special_cases=False` to skip the
    nested solves. `config.corner_starts` adds per-user full-budget
    starts that reach degenerate single-user optima. Seeded random
    feasible starts fill up to `config.restarts` (at least one always).
    """
    w = np.asarray(priorities, dtype=float)
    comp = _Compiled(channel, layout, w)
    epsilon = _resolve_epsilon(channel, config)

    starts: list[np.ndarray] = [_zf_start(channel, comp, epsilon)]
    if config.corner_starts:
        starts += [_beam_start(channel, comp, epsilon, k) for k in range(channel.num_users)]
    if layout.scheme == "rsma" and embed_special_cases:
        sdma_layout = build_layout("sdma", channel.num_users, channel)
        sdma = ao_solve(channel, sdma_layout, w, config)
        starts.append(embed_sdma_matrix(layout, sdma_layout, sdma.precoder.matrix))
        if channel.num_users == 2:
            noma_layout = build_layout("noma", channel.num_users, channel)
            noma = ao_solve(channel, noma_layout, w, config)
            starts.append(embed_noma_matrix(layout, noma_layout, noma.precoder.matrix))
    for extra in warm_starts:
        starts.append(np.asarray(extra, dtype=float))
    rng = np.random.default_rng(config.seed)
    n_random = max(1, config.restarts - len(starts))  # always explore at random too
    for _ in range(n_random):
        starts.append(_random_start(channel, comp, epsilon, rng))

    best = None
    for idx, P0 in enumerate(starts):
        P, history, iterations, converged = _ao_single(comp, epsilon, P0, config)
        if best is None or history[-1] > best[1]:
            best = (P, history[-1], history, iterations, converged, idx)

    P, _, history, iterations, converged, idx = best
    _, cap, _ = comp.true_rates(P)
    shares = default_shares(layout, cap, w)
    precoder = Precoder(matrix=P, dc_bias=dc_bias)
    report = assemble_report(channel, precoder, layout, shares=shares, weights=w)
    return Solution(
        precoder=precoder,
        shares=shares,
        report=report,
        iterations=iterations,
        converged=converged,
        restart_index=idx,
        wsr_history=tuple(history),
    )


# --------------------------------------------------------------------------
# brute-force oracle for desk-scale instances
# --------------------------------------------------------------------------


def _oracle_wsr_block(comp: _Compiled, A: np.ndarray) -> np.ndarray:
    """WSR of candidate precoders given their (N, K, S) amplitude tensors.

    Same closed-form SINR/rate arithmetic as signal_model, vectorized,
    with the greedy common-rate split.
    """
    priv = A[:, :, comp.priv_cols] ** 2
    priv_sum = priv.sum(axis=2)
    wsr = np.zeros(A.shape[0])
    for si, owner in enumerate(comp.owners):
        signal = priv[:, owner, si]
        interf = priv_sum[:, owner] - signal
        wsr += comp.w[owner] * np.log2(1.0 + signal / (interf + comp.sig2[owner]))
    if comp.common_col is not None:
        caps = None
        for k in comp.decoders:
            sig = A[:, k, comp.common_col] ** 2
            r = np.log2(1.0 + sig / (priv_sum[:, k] + comp.sig2[k]))
            caps = r if caps is None else np.minimum(caps, r)
        wsr += comp.w_common * caps
    return wsr


def grid_oracle(
    channel: ChannelMatrix,
    layout: StreamLayout,
    priorities,
    epsilon: float,
    resolution: int = 21,
) -> float:
    """Exhaustive WSR maximum over a per-row L1-feasible precoder grid.

    Desk-scale verification only: refuses more than 2 fixtures, 3
    streams or 21 grid points per dimension (combinatorial blow-up).
    """
    comp = _Compiled(channel, layout, np.asarray(priorities, dtype=float))
    L, S = channel.num_fixtures, layout.num_streams
    if L > 2 or S > 3 or resolution > 21 or resolution < 2:
        raise ValueError("grid oracle limited to <= 2 fixtures, <= 3 streams, resolution in [2, 21]")
    if epsilon == 0.0:
        return 0.0
    axis = np.linspace(-epsilon, epsilon, resolution)
    mesh = np.stack(np.meshgrid(*([axis] * S), indexing="ij"), axis=-1).reshape(-1, S)
    rows = mesh[np.abs(mesh).sum(axis=1) <= epsilon + 1e-12]
    H = channel.gains
    if L == 1:
        A = rows[:, None, :] * H[None, :, 0:1]
        return float(np.max(_oracle_wsr_block(comp, A)))
    best = -np.inf
    chunk = max(1, int(2e6 / (rows.shape[0] * S)))
    for lo in range(0, rows.shape[0], chunk):
        r1 = rows[lo : lo + chunk]
        # amplitudes for every (row1, row2) pair: A[k] = h_k0 r1 + h_k1 r2
        A = (
            H[None, None, :, 0:1] * r1[:, None, None, :]
            + H[None, None, :, 1:2] * rows[None, :, None, :]
        ).reshape(-1, channel.num_users, S)
        best = max(best, float(np.max(_oracle_wsr_block(comp, A))))
    return best
