"""Stream layouts, SINRs and rates for multi-stream VLC downlinks.

Three multiplexing schemes over the same linear-precoding transmit
model x = P s + d_dc:

* "sdma": one private stream per user, decoded treating the other
  users' streams as noise.
* "rsma": the private streams plus one common stream decoded first by
  every user (then cancelled before private decoding).
* "noma": two users; the stronger user gets a private stream and the
  weaker user's message rides the common stream, which both users
  decode first.

All evaluation functions are pure; the Monte-Carlo estimator owns its
seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix

__all__ = [
    "SCHEMES",
    "StreamDesc",
    "StreamLayout",
    "Precoder",
    "RateReport",
    "build_layout",
    "sinr_common",
    "sinr_private",
    "rate",
    "common_cap",
    "default_shares",
    "assemble_report",
    "monte_carlo_sinr",
]

SCHEMES = ("rsma", "sdma", "noma")

# guards divisions in deliberately noiseless validation runs
_DEN_FLOOR = 1e-300


@dataclass(frozen=True)
class StreamDesc:
    """One transmit stream: who owns it, who decodes it, SIC position."""

    kind: str  # "private" | "common"
    owner: int | None  # private stream owner, None for common
    carries: tuple[int, ...]  # users whose messages ride this stream
    decoders: tuple[int, ...]  # users that decode this stream
    decode_order: int  # 0 = decoded first (common), 1 = after SIC


@dataclass(frozen=True)
class StreamLayout:
    scheme: str
    num_users: int
    streams: tuple[StreamDesc, ...]

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        commons = [s for s in self.streams if s.kind == "common"]
        if self.scheme == "sdma" and commons:
            raise ValueError("sdma layouts carry private streams only")
        if self.scheme != "sdma" and len(commons) != 1:
            raise ValueError(f"{self.scheme} layouts need exactly one common stream")

    @property
    def num_streams(self) -> int:
        return len(self.streams)

    @property
    def private_columns(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.streams) if s.kind == "private")

    @property
    def common_column(self) -> int | None:
        for i, s in enumerate(self.streams):
            if s.kind == "common":
                return i
        return None

    def private_column_of(self, user: int) -> int | None:
        for i, s in enumerate(self.streams):
            if s.kind == "private" and s.owner == user:
                return i
        return None

    @property
    def common_stream(self) -> StreamDesc | None:
        c = self.common_column
        return self.streams[c] if c is not None else None


@dataclass(frozen=True)
class Precoder:
    """Fixture-by-stream precoding matrix plus per-fixture DC bias.

    Row l holds the amplitudes driving fixture l; its L1 norm is the
    drive headroom that row consumes and must stay within the active
    amplitude budget.
    """

    matrix: np.ndarray
    dc_bias: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("precoder matrix must be 2-D (fixtures x streams)")
        if not np.all(np.isfinite(m)):
            raise ValueError("precoder entries must be finite")
        object.__setattr__(self, "matrix", m)
        if self.dc_bias is None:
            object.__setattr__(self, "dc_bias", np.zeros(m.shape[0]))
        else:
            b = np.asarray(self.dc_bias, dtype=float)
            if b.shape != (m.shape[0],):
                raise ValueError("dc_bias needs one entry per fixture row")
            object.__setattr__(self, "dc_bias", b)

    @property
    def num_streams(self) -> int:
        return self.matrix.shape[1]

    def max_row_l1(self) -> float:
        return float(np.abs(self.matrix).sum(axis=1).max()) if self.matrix.size else 0.0

    def is_feasible(self, amplitude_budget: float, tol: float = 1e-9) -> bool:
        return self.max_row_l1() <= amplitude_budget + tol


@dataclass(frozen=True)
class RateReport:
    """Per-user SINRs, rates, common-rate split and the weighted sum rate."""

    sinr_common: np.ndarray
    sinr_private: np.ndarray
    common_cap: float
    common_shares: np.ndarray
    private_rates: np.ndarray
    overall: np.ndarray
    wsr: float

    def __post_init__(self):
        for name in ("sinr_common", "sinr_private", "common_shares", "private_rates", "overall"):
            v = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, v)
            if np.any(v < 0):
                raise ValueError(f"{name} must be nonnegative")
        if self.common_shares.sum() > self.common_cap + 1e-9:
            raise ValueError("common shares exceed the common-rate cap")


def build_layout(scheme: str, num_users: int, channel: ChannelMatrix) -> StreamLayout:
    """Stream layout for a scheme; NOMA picks the strong user by row norm."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if num_users < 1:
        raise ValueError("need at least one user")
    every = tuple(range(num_users))
    if scheme == "sdma":
        streams = tuple(StreamDesc("private", k, (k,), (k,), 1) for k in every)
        return StreamLayout(scheme, num_users, streams)
    if scheme == "rsma":
        streams = tuple(StreamDesc("private", k, (k,), (k,), 1) for k in every)
        streams += (StreamDesc("common", None, every, every, 0),)
        return StreamLayout(scheme, num_users, streams)
    # noma: two-user formulation only
    if num_users != 2:
        raise ValueError("noma layout supports exactly two users")
    norms = np.linalg.norm(channel.gains, axis=1)
    strong = 0 if norms[0] >= norms[1] else 1  # ties break to the lower index
    weak = 1 - strong
    streams = (
        StreamDesc("private", strong, (strong,), (strong,), 1),
        StreamDesc("common", None, (weak,), (0, 1), 0),
    )
    return StreamLayout(scheme, num_users, streams)


def _row_inner(channel: ChannelMatrix, precoder: Precoder, user: int) -> np.ndarray:
    return channel.gains[user] @ precoder.matrix


def sinr_common(channel: ChannelMatrix, precoder: Precoder, layout: StreamLayout, user: int) -> float:
    """SINR of the common stream at `user`: every private stream interferes."""
    c = layout.common_column
    if c is None:
        raise ValueError("layout has no common stream")
    a = _row_inner(channel, precoder, user)
    interference = 0.0
    for j in layout.private_columns:
        interference += a[j] ** 2
    return a[c] ** 2 / max(interference + channel.noise[user], _DEN_FLOOR)


def sinr_private(channel: ChannelMatrix, precoder: Precoder, layout: StreamLayout, user: int) -> float:
    """SINR of `user`'s private stream after the common stream is cancelled."""
    col = layout.private_column_of(user)
    if col is None:
        raise ValueError(f"user {user} has no private stream in this layout")
    a = _row_inner(channel, precoder, user)
    interference = 0.0
    for j in layout.private_columns:
        if j != col:
            interference += a[j] ** 2
    return a[col] ** 2 / max(interference + channel.noise[user], _DEN_FLOOR)


def rate(sinr: float) -> float:
    """Achievable rate log2(1 + SINR) in bits/s/Hz."""
    if sinr < 0:
        raise ValueError("SINR must be nonnegative")
    return float(np.log2(1.0 + sinr))


def common_cap(channel: ChannelMatrix, precoder: Precoder, layout: StreamLayout) -> float:
    """Decodable common rate: the minimum common-stream rate over its decoders."""
    stream = layout.common_stream
    if stream is None:
        raise ValueError("layout has no common stream")
    return min(rate(sinr_common(channel, precoder, layout, k)) for k in stream.decoders)


def default_shares(layout: StreamLayout, cap: float, weights: np.ndarray) -> np.ndarray:
    """Greedy common-rate split: all of it to the highest-priority taker.

    For NOMA the common stream carries only the weak user's message, so
    that user takes the whole cap. Ties in priority go to the lower
    user index.
    """
    shares = np.zeros(layout.num_users)
    stream = layout.common_stream
    if stream is None or cap <= 0.0:
        return shares
    if len(stream.carries) == 1:
        shares[stream.carries[0]] = cap
    else:
        shares[int(np.argmax(weights))] = cap
    return shares


def assemble_report(
    channel: ChannelMatrix,
    precoder: Precoder,
    layout: StreamLayout,
    shares: np.ndarray | None = None,
    weights: np.ndarray | None = None,
) -> RateReport:
    """Full rate report for a precoder under a layout.

    `shares` splits the common-rate cap between users (validated); by
    default the greedy split of `default_shares` is used. `weights` are
    the user priorities of the weighted sum rate (uniform by default).
    """
    K = channel.num_users
    w = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (K,) or np.any(w <= 0):
        raise ValueError("weights must be positive, one per user")

    s_common = np.zeros(K)
    s_private = np.zeros(K)
    p_rates = np.zeros(K)
    for k in range(K):
        if layout.private_column_of(k) is not None:
            s_private[k] = sinr_private(channel, precoder, layout, k)
            p_rates[k] = rate(s_private[k])
    cap = 0.0
    stream = layout.common_stream
    if stream is not None:
        for k in stream.decoders:
            s_common[k] = sinr_common(channel, precoder, layout, k)
        cap = common_cap(channel, precoder, layout)

    if shares is None:
        shares = default_shares(layout, cap, w)
    else:
        shares = np.asarray(shares, dtype=float)
        if shares.shape != (K,):
            raise ValueError("shares must have one entry per user")
        if np.any(shares < 0) or shares.sum() > cap + 1e-9:
            raise ValueError("infeasible common-rate shares")
    overall = shares + p_rates
    return RateReport(
        sinr_common=s_common,
        sinr_private=s_private,
        common_cap=cap,
        common_shares=shares,
        private_rates=p_rates,
        overall=overall,
        wsr=float(w @ overall),
    )


# 4-PAM, zero mean, unit variance: levels {-3,-1,1,3}/sqrt(5)
_PAM4 = np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(5.0)


def monte_carlo_sinr(
    channel: ChannelMatrix,
    precoder: Precoder,
    layout: StreamLayout,
    user: int,
    stream: int,
    num_symbols: int = 1_000_000,
    seed: int = 0,
) -> float:
    """Empirical SINR of one stream at one receiver by symbol simulation.

    Draws i.i.d. unit-variance 4-PAM symbols per stream plus Gaussian
    receiver noise and measures signal power over interference-plus-
    noise power at the stream's SIC stage (common stage sees all
    private streams; private stage has the common stream cancelled).
    Converges to the analytic SINR; the estimate is deterministic for a
    fixed seed.
    """
    if num_symbols < 10_000:
        raise ValueError("need at least 1e4 symbols for a stable estimate")
    desc = layout.streams[stream]
    if desc.kind == "common":
        if user not in desc.decoders:
            raise ValueError(f"user {user} does not decode stream {stream}")
        interferers = list(layout.private_columns)
    else:
        if desc.owner != user:
            raise ValueError(f"stream {stream} is not user {user}'s private stream")
        interferers = [j for j in layout.private_columns if j != stream]

    rng = np.random.default_rng(seed)
    amps = channel.gains[user] @ precoder.matrix
    symbols = _PAM4[rng.integers(0, 4, size=(num_symbols, precoder.num_streams))]
    noise = rng.normal(0.0, np.sqrt(channel.noise[user]), size=num_symbols)
    signal = amps[stream] * symbols[:, stream]
    disturbance = symbols[:, interferers] @ amps[interferers] + noise
    return float(np.mean(signal**2) / max(np.mean(disturbance**2), _DEN_FLOOR))
