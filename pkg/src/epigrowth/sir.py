"""Discrete SIR variants: original, time-delayed, reinfection, and tourism inflow.

All variants advance with the same forward-Euler expression at a fixed step of
one day; a variant only changes which values feed the shared arithmetic.  That
keeps the degenerate cases (tau=0, mu=0, epsilon=0) bit-for-bit equal to the
simpler models.  Negative intermediate values are clamped to zero and counted.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Sequence

from .errors import ConfigError, ParseError, StateError, ValidationError
from .segment import PeriodSet
from .timeseries import DateInterval

VARIANTS = ("original", "delayed", "reinfect", "tourism")
DEFAULT_TAU1 = 5
DEFAULT_TAU2 = 14

INFLOW_HEADER = ("day", "o")
TRAJECTORY_HEADER = ("day", "s", "i", "r")


def _check_nonneg(name: str, value: float) -> float:
    v = float(value)
    if not math.isfinite(v) or v < 0:
        raise ValidationError(f"{name} must be finite and >= 0, got {value!r}")
    return v


@dataclass(frozen=True)
class SirParams:
    """Rate parameters for one period; delays are whole days."""

    beta: float
    gamma: float
    tau1: int = 0
    tau2: int = 0
    mu: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        for name in ("beta", "gamma", "mu", "epsilon"):
            object.__setattr__(self, name, _check_nonneg(name, getattr(self, name)))
        for name in ("tau1", "tau2"):
            tau = getattr(self, name)
            if not isinstance(tau, int) or isinstance(tau, bool) or tau < 0:
                raise ValidationError(f"{name} must be a non-negative integer, got {tau!r}")


@dataclass(frozen=True)
class SirState:
    s: float
    i: float
    r: float

    def __post_init__(self) -> None:
        for name in ("s", "i", "r"):
            object.__setattr__(self, name, _check_nonneg(name, getattr(self, name)))

    @property
    def total(self) -> float:
        return self.s + self.i + self.r


@dataclass(frozen=True)
class Trajectory:
    """Daily states; day j corresponds to day-index t0 + j."""

    states: tuple[SirState, ...]
    t0: int = 0
    clamp_events: int = 0

    def __post_init__(self) -> None:
        if not self.states:
            raise ValidationError("trajectory must hold at least one state")
        object.__setattr__(self, "states", tuple(self.states))

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class PiecewiseParams:
    """Per-period beta/gamma with shared delays, reinfection, and inflow rates."""

    per_period: tuple[SirParams, ...]

    def __post_init__(self) -> None:
        pp = tuple(self.per_period)
        if len(pp) != 5:
            raise ValidationError(f"need 5 per-period parameter sets, got {len(pp)}")
        first = pp[0]
        for p in pp[1:]:
            if (p.tau1, p.tau2, p.mu, p.epsilon) != (first.tau1, first.tau2, first.mu, first.epsilon):
                raise ValidationError("tau1, tau2, mu, and epsilon must be identical across periods")
        object.__setattr__(self, "per_period", pp)

    @classmethod
    def from_rates(
        cls,
        betas: Sequence[float],
        gammas: Sequence[float],
        *,
        tau1: int = 0,
        tau2: int = 0,
        mu: float = 0.0,
        epsilon: float = 0.0,
    ) -> "PiecewiseParams":
        if len(betas) != 5 or len(gammas) != 5:
            raise ValidationError("need 5 betas and 5 gammas")
        return cls(
            tuple(
                SirParams(b, g, tau1=tau1, tau2=tau2, mu=mu, epsilon=epsilon)
                for b, g in zip(betas, gammas)
            )
        )

    @property
    def tau1(self) -> int:
        return self.per_period[0].tau1

    @property
    def tau2(self) -> int:
        return self.per_period[0].tau2

    @property
    def mu(self) -> float:
        return self.per_period[0].mu

    @property
    def epsilon(self) -> float:
        return self.per_period[0].epsilon


@dataclass(frozen=True)
class InflowSeries:
    """Daily outside-visitor counts O(t), day 0 aligned with the simulation window."""

    o: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.o)
        for v in vals:
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"inflow values must be finite and >= 0, got {v}")
        object.__setattr__(self, "o", vals)

    @classmethod
    def constant(cls, value: float, days: int) -> "InflowSeries":
        return cls((float(value),) * days)

    @classmethod
    def from_period_means(cls, values: Sequence[float], periods: "PeriodSet") -> "InflowSeries":
        """Expand one average daily inflow per period into a daily series."""
        vals = tuple(float(v) for v in values)
        if len(vals) != len(periods.periods):
            raise ValidationError(
                f"need one inflow value per period ({len(periods.periods)}), got {len(vals)}"
            )
        daily: list[float] = []
        for v, p in zip(vals, periods.periods):
            daily.extend([v] * p.length)
        return cls(tuple(daily))

    def __len__(self) -> int:
        return len(self.o)


def _euler_step(s, i, r, i_tau1, i_tau2, beta, gamma, mu, epsilon, o):
    # the one shared arithmetic path; every variant feeds values into this
    new_infections = beta * i_tau1 * s
    removals = gamma * i_tau2
    reentries = mu * r
    arrivals = epsilon * o
    return (
        s - new_infections + reentries + arrivals,
        i + new_infections - removals,
        r + removals - reentries,
    )


def _advance(model, s_hist, i_hist, r_hist, beta, gamma, tau1, tau2, mu, epsilon, o_t):
    """Raw next-day (s, i, r) from day-indexed value lists; no clamping."""
    t = len(i_hist) - 1
    if model == "original":
        i1 = i2 = i_hist[t]
    else:
        i1 = i_hist[t - tau1] if t - tau1 >= 0 else i_hist[0]
        i2 = i_hist[t - tau2] if t - tau2 >= 0 else i_hist[0]
    mu_use = mu if model == "reinfect" else 0.0
    if model == "tourism":
        eps_use, o_use = epsilon, o_t
    else:
        eps_use, o_use = 0.0, 0.0
    return _euler_step(s_hist[t], i_hist[t], r_hist[t], i1, i2, beta, gamma, mu_use, eps_use, o_use)


def _clamp3(s: float, i: float, r: float) -> tuple[float, float, float, int]:
    clamps = (s < 0.0) + (i < 0.0) + (r < 0.0)
    return (
        s if s >= 0.0 else 0.0,
        i if i >= 0.0 else 0.0,
        r if r >= 0.0 else 0.0,
        clamps,
    )


def _history_lists(history) -> tuple[list[float], list[float], list[float]]:
    states = history.states if isinstance(history, Trajectory) else tuple(history)
    if not states:
        raise StateError("history must hold at least one state")
    return ([st.s for st in states], [st.i for st in states], [st.r for st in states])


def _stepped(model, history, p: SirParams, o_t: float = 0.0) -> SirState:
    s_h, i_h, r_h = _history_lists(history)
    s, i, r, _ = _clamp3(*_advance(model, s_h, i_h, r_h, p.beta, p.gamma, p.tau1, p.tau2, p.mu, p.epsilon, o_t))
    return SirState(s, i, r)


def step_original(state: SirState, p: SirParams) -> SirState:
    """One Euler day of the plain SIR equations; delays in ``p`` are ignored."""
    return _stepped("original", (state,), p)


def step_delayed(history, p: SirParams) -> SirState:
    """One Euler day with infection read at t-tau1 and removal at t-tau2.

    ``history`` is a Trajectory or state sequence whose last entry is today;
    reads before the first stored day return the first stored I (constant
    pre-history).
    """
    return _stepped("delayed", history, p)


def step_reinfect(history, p: SirParams) -> SirState:
    """Delayed step plus mu*R moving from the removed back to the susceptible pool."""
    return _stepped("reinfect", history, p)


def step_tourism(history, p: SirParams, inflow: float) -> SirState:
    """Delayed step plus epsilon*inflow added to the susceptible pool."""
    return _stepped("tourism", history, p, _check_nonneg("inflow", inflow))


def simulate(
    model: str,
    params: PiecewiseParams,
    init: SirState,
    periods: PeriodSet,
    inflow: InflowSeries | None = None,
) -> Trajectory:
    """Run ``model`` across the full period window, switching beta/gamma per period.

    Day 0 of the trajectory is the window start; the step leaving day t uses
    the parameters of the period containing day t.
    """
    if model not in VARIANTS:
        raise ConfigError(f"unknown model variant {model!r}; choose from {', '.join(VARIANTS)}")
    window = periods.window
    horizon = window.days
    if model == "tourism":
        if inflow is None:
            raise ConfigError("tourism variant requires an inflow series")
        if len(inflow) < horizon - 1:
            raise ConfigError(
                f"inflow series covers {len(inflow)} days, need {horizon - 1} steps"
            )
    period_of_day: list[int] = []
    for idx, p in enumerate(periods.periods):
        period_of_day.extend([idx] * p.length)

    s_h = [init.s]
    i_h = [init.i]
    r_h = [init.r]
    clamp_events = 0
    for t in range(horizon - 1):
        p = params.per_period[period_of_day[t]]
        o_t = inflow.o[t] if model == "tourism" else 0.0
        s, i, r, clamps = _clamp3(
            *_advance(model, s_h, i_h, r_h, p.beta, p.gamma, p.tau1, p.tau2, p.mu, p.epsilon, o_t)
        )
        clamp_events += clamps
        s_h.append(s)
        i_h.append(i)
        r_h.append(r)
    states = tuple(SirState(s, i, r) for s, i, r in zip(s_h, i_h, r_h))
    return Trajectory(states, t0=0, clamp_events=clamp_events)


def simulated_growth_rates(traj: Trajectory, periods: PeriodSet) -> tuple[float | None, ...]:
    """Fitted log-I slope per period; None when a period has under 2 positive days."""
    from .regress import fit_simple

    window = periods.window
    if len(traj) < window.days:
        raise ValidationError(
            f"trajectory holds {len(traj)} days but the period window spans {window.days}"
        )
    slopes: list[float | None] = []
    for p in periods.periods:
        off = (p.start - window.start).days
        pts = []
        for d in range(p.length):
            i_val = traj.states[off + d].i
            if i_val > 0:
                pts.append((traj.t0 + off + d, math.log(i_val)))
        slopes.append(fit_simple(pts).slope if len(pts) >= 2 else None)
    return tuple(slopes)


def write_trajectory_csv(traj: Trajectory, out: IO[str]) -> None:
    out.write(",".join(TRAJECTORY_HEADER) + "\n")
    for j, st in enumerate(traj.states):
        out.write(f"{traj.t0 + j},{st.s!r},{st.i!r},{st.r!r}\n")


def load_inflow(source: IO) -> InflowSeries:
    from .timeseries import _as_text

    reader = csv.reader(_as_text(source))
    header = next(reader, None)
    got = [c.strip().lower() for c in header] if header else None
    if got != list(INFLOW_HEADER):
        raise ParseError(f"inflow CSV must start with header '{','.join(INFLOW_HEADER)}'")
    values = []
    for row in reader:
        if not row:
            continue
        line = reader.line_num
        if len(row) != 2:
            raise ParseError(f"inflow CSV line {line}: expected 2 fields")
        try:
            day = int(row[0])
            val = float(row[1])
        except ValueError:
            raise ParseError(f"inflow CSV line {line}: malformed row") from None
        if day != len(values):
            raise ValidationError(f"inflow CSV line {line}: days must run 0,1,2,... got {day}")
        values.append(val)
    return InflowSeries(tuple(values))


def write_inflow_csv(inflow: InflowSeries, out: IO[str]) -> None:
    out.write(",".join(INFLOW_HEADER) + "\n")
    for day, val in enumerate(inflow.o):
        out.write(f"{day},{val!r}\n")
