"""Velocity fields of the construction and the piecewise-in-time schedule."""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from .spectral import Grid3, PhysicalField

CLOSED_FORM_POLARIZATION = (-1j, 1.0, 0.0)


@dataclass(frozen=True)
class Zero:
    kind = "zero"

    @property
    def frequencies(self):
        return (0, 0, 0)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class ABC:
    """delta * (cos y, sin x, sin y + cos x)."""

    delta: float
    kind = "abc"

    def __post_init__(self):
        _check_delta(self.delta)

    @property
    def frequencies(self):
        return (1, 1, 0)

    def to_dict(self):
        return {"kind": self.kind, "delta": self.delta}


@dataclass(frozen=True)
class RescaledABC:
    """The ABC flow at frequency n*N0 with amplitude delta/(N0*n)."""

    n: int
    n0: int
    delta: float
    kind = "rescaled_abc"

    def __post_init__(self):
        _check_delta(self.delta)
        if self.n < 1 or self.n0 < 1:
            raise ValueError("n and N0 must be >= 1")

    @property
    def frequency(self) -> int:
        return self.n * self.n0

    @property
    def amplitude(self) -> float:
        return self.delta / (self.n0 * self.n)

    @property
    def frequencies(self):
        return (self.frequency, self.frequency, 0)

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "n0": self.n0, "delta": self.delta}


@dataclass(frozen=True)
class Generator:
    """e^{inz}/(in) * polarization; the polarization has no z component."""

    n: int
    polarization: tuple = CLOSED_FORM_POLARIZATION
    kind = "generator"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        pol = tuple(complex(c) for c in self.polarization)
        if len(pol) != 3 or pol[2] != 0:
            raise ValueError("generator polarization must be (p1, p2, 0) to stay divergence free")
        object.__setattr__(self, "polarization", pol)

    @property
    def frequencies(self):
        return (0, 0, self.n)

    def to_dict(self):
        return {"kind": self.kind, "n": self.n,
                "polarization": [[c.real, c.imag] for c in self.polarization]}


VelocityTag = Union[Zero, ABC, RescaledABC, Generator]


def _check_delta(delta):
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def tag_from_dict(d: dict) -> VelocityTag:
    kind = d["kind"]
    if kind == "zero":
        return Zero()
    if kind == "abc":
        return ABC(d["delta"])
    if kind == "rescaled_abc":
        return RescaledABC(d["n"], d["n0"], d["delta"])
    if kind == "generator":
        pol = d.get("polarization")
        pol = CLOSED_FORM_POLARIZATION if pol is None else tuple(complex(re, im) for re, im in pol)
        return Generator(d["n"], pol)
    raise ValueError(f"unknown velocity kind {kind!r}")


def check_resolution(tag: VelocityTag, grid: Grid3) -> None:
    for f, n, fmax in zip(tag.frequencies, grid.shape, grid.default_dealias()):
        if f > fmax:
            raise ValueError(
                f"{tag} has frequency {f} but a {n}-point axis only resolves {fmax} alias free"
            )


def sample_velocity(tag: VelocityTag, grid: Grid3) -> PhysicalField:
    check_resolution(tag, grid)
    x, y, z = grid.points
    u = np.zeros((3,) + grid.shape, dtype=complex)
    if isinstance(tag, (ABC, RescaledABC)):
        if isinstance(tag, ABC):
            a, f = tag.delta, 1
        else:
            a, f = tag.amplitude, tag.frequency
        u[0] = a * np.cos(f * y)
        u[1] = a * np.sin(f * x)
        u[2] = a * (np.sin(f * y) + np.cos(f * x))
    elif isinstance(tag, Generator):
        phase = np.exp(1j * tag.n * z) / (1j * tag.n)
        for c in range(2):
            u[c] = phase * tag.polarization[c]
    return PhysicalField(grid, u)


def max_gradient_norm(tag: VelocityTag) -> float:
    """sup_x of the spectral norm of the velocity gradient, from the closed forms."""
    if isinstance(tag, Zero):
        return 0.0
    if isinstance(tag, Generator):
        # du/dz = e^{inz} * polarization, the only nonzero column
        return float(np.linalg.norm(tag.polarization))
    # amplitude times frequency is delta for both ABC variants
    s = np.linspace(0, 2 * np.pi, 257)
    x, y = np.meshgrid(s, s, indexing="ij")
    G = np.zeros(x.shape + (3, 2))
    G[..., 0, 1] = -np.sin(y)
    G[..., 1, 0] = np.cos(x)
    G[..., 2, 0] = -np.sin(x)
    G[..., 2, 1] = np.cos(y)
    return tag.delta * float(np.linalg.norm(G, 2, axis=(-2, -1)).max())


# -- parameters and schedule -------------------------------------------------

def diagonal_index(k: int) -> int:
    """k-th term of 1; 1,2; 1,2,3; ...  (k >= 1)."""
    if k < 1:
        raise ValueError("diagonal sequence is indexed from k = 1")
    m = (math.isqrt(8 * k + 1) - 1) // 2
    if m * (m + 1) // 2 == k:
        return m
    return k - m * (m + 1) // 2


def eps_n(n: int, n0: int) -> float:
    return 1.0 / (n0 ** 2 * n ** 2)


@dataclass(frozen=True)
class ScheduleParams:
    n0: int
    delta: float
    lambda_hat: float
    eta: float = 0.1
    C: float = 1.0
    K: int = 1
    sequence: Union[str, int] = "diagonal"
    polarization: tuple = CLOSED_FORM_POLARIZATION

    def __post_init__(self):
        if not self.lambda_hat > 0:
            raise ValueError("lambda_hat must be positive")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.sequence != "diagonal" and not (isinstance(self.sequence, int) and self.sequence >= 1):
            raise ValueError("sequence must be 'diagonal' or a positive integer n")

    def a(self, k: int) -> int:
        return diagonal_index(k) if self.sequence == "diagonal" else int(self.sequence)

    @property
    def growth_min(self) -> float:
        return 4.0 / self.lambda_hat * math.log(10 * self.C / self.eta)

    def to_dict(self):
        d = asdict(self)
        d["polarization"] = [[complex(c).real, complex(c).imag] for c in self.polarization]
        return d


def delta_t(n: int, params: ScheduleParams, t_prev: float) -> float:
    if t_prev < 0:
        raise ValueError("t_prev must be nonnegative")
    if not params.lambda_hat > 0:
        raise ValueError("lambda_hat must be positive")
    c = 4 * n ** 2 * params.n0 ** 2
    return c * t_prev + c * math.log(10 / params.eta) + 4 / params.lambda_hat * math.log(params.C)


def tk_lower_bound(n: int, params: ScheduleParams, t_prev: float) -> float:
    return (t_prev + 2 * n ** 2 * t_prev + 2 * n ** 2 * math.log(10 / params.eta)
            + 10 / params.lambda_hat * math.log(params.C))


@dataclass(frozen=True)
class Segment:
    t0: float
    t1: float
    tag: VelocityTag

    def to_dict(self):
        return {"t0": self.t0, "t1": self.t1, "tag": self.tag.to_dict()}


@dataclass
class Schedule:
    segments: list
    times: list = field(default_factory=list)
    delta_ts: list = field(default_factory=list)
    ns: list = field(default_factory=list)
    params: ScheduleParams | None = None
    period: float | None = None

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            if a.t1 != b.t0:
                raise ValueError("schedule segments must be contiguous")
        if self.segments and self.segments[0].t0 != 0:
            raise ValueError("schedule must start at t = 0")

    @property
    def horizon(self) -> float:
        return math.inf if self.period is not None else self.segments[-1].t1

    @classmethod
    def from_durations(cls, pieces, periodic: bool = False) -> "Schedule":
        """Build from ``[(duration, tag), ...]``; ``periodic`` repeats it forever."""
        segs, t = [], 0.0
        for dur, tag in pieces:
            segs.append(Segment(t, t + dur, tag))
            t += dur
        return cls(segs, times=[t], period=t if periodic else None)

    def to_dict(self):
        return {
            "params": None if self.params is None else self.params.to_dict(),
            "period": self.period,
            "times": list(self.times),
            "delta_t": list(self.delta_ts),
            "n": list(self.ns),
            "segments": [s.to_dict() for s in self.segments],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        params = None
        if d.get("params") is not None:
            p = dict(d["params"])
            p["polarization"] = tuple(complex(re, im) for re, im in p["polarization"])
            params = ScheduleParams(**p)
        segs = [Segment(s["t0"], s["t1"], tag_from_dict(s["tag"])) for s in d["segments"]]
        return cls(segs, list(d.get("times", [])), list(d.get("delta_t", [])),
                   list(d.get("n", [])), params, d.get("period"))


def build_schedule(params: ScheduleParams, K: int | None = None) -> Schedule:
    """Intervals of the form: rest for dt/2, generate for 1, then the rescaled ABC flow."""
    K = params.K if K is None else K
    if K < 1:
        raise ValueError("K must be >= 1")
    segs, times, dts, ns = [], [0.0], [], []
    for k in range(1, K + 1):
        n = params.a(k)
        t_prev = times[-1]
        dt = delta_t(n, params, t_prev)
        t_k = t_prev + dt + max(dt, params.growth_min)
        t_k = max(t_k, tk_lower_bound(n, params, t_prev))
        g0 = t_prev + dt / 2
        segs += [
            Segment(t_prev, g0, Zero()),
            Segment(g0, g0 + 1.0, Generator(n, params.polarization)),
            Segment(g0 + 1.0, t_k, RescaledABC(n, params.n0, params.delta)),
        ]
        times.append(t_k)
        dts.append(dt)
        ns.append(n)
    return Schedule(segs, times, dts, ns, params)


def segment_index(schedule: Schedule, t: float) -> int:
    if schedule.period is not None:
        if t < 0:
            raise ValueError(f"time {t} is before the schedule start")
        t = math.fmod(t, schedule.period)
    elif not 0 <= t < schedule.horizon:
        raise ValueError(f"time {t} is outside the schedule [0, {schedule.horizon})")
    starts = [s.t0 for s in schedule.segments]
    return bisect.bisect_right(starts, t) - 1


def velocity_at(schedule: Schedule, t: float) -> VelocityTag:
    return schedule.segments[segment_index(schedule, t)].tag
