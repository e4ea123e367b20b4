"""Classical heavy-charge motion and its distribution onto lattice sites.

The trajectory accelerates smoothly to a plateau velocity and decelerates
back to rest,

    x(t) = v_max^2/(4 a_max) * log[cosh(beta(t-t0)) / cosh(beta(t-t0-T))]
           + (xf + x0)/2,

with beta = 2 a_max / v_max, T = (xf - x0)/v_max, and t0 fixed by the
initial acceleration a(0) (rounded to the nearest integer, half to even).
A continuous position is split over the two neighbouring odd (positron)
staggered sites so that the charge sums to Q exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy.optimize import brentq

from .model import BackgroundCharges

__all__ = [
    "TrajectoryError",
    "TrajectoryParams",
    "ChargePartition",
    "StaticCharge",
    "MovingCharge",
    "ChargeSchedule",
    "eval_trajectory",
    "partition_charge",
    "time_for_position",
    "step_schedule",
]


class TrajectoryError(ValueError):
    """Trajectory parameters or queries outside their domain."""


def _log_cosh(z: float) -> float:
    az = abs(z)
    return az + math.log1p(math.exp(-2.0 * az)) - math.log(2.0)


def _sech2(z: float) -> float:
    e = math.exp(-2.0 * abs(z))
    return 4.0 * e / (1.0 + e) ** 2


@dataclass(frozen=True)
class TrajectoryParams:
    """Plateau velocity/acceleration and endpoints, with derived constants."""

    v_max: float
    a_max: float
    x0: float
    xf: float
    a0: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.v_max < 1.0:
            raise TrajectoryError(f"need 0 < v_max < 1, got {self.v_max}")
        if self.a_max <= 0.0:
            raise TrajectoryError(f"need a_max > 0, got {self.a_max}")
        if self.xf <= self.x0:
            raise TrajectoryError("final position must exceed the initial one")
        if not 0.0 < self.a0 < self.a_max:
            raise TrajectoryError(
                f"initial acceleration {self.a0} must lie in (0, a_max={self.a_max})"
            )

    @classmethod
    def with_default_ramp(cls, v_max, x0, xf, a0=1e-4) -> "TrajectoryParams":
        """a_max = v_max/5 throughout this line of work."""
        return cls(v_max=v_max, a_max=v_max / 5.0, x0=x0, xf=xf, a0=a0)

    @property
    def beta(self) -> float:
        return 2.0 * self.a_max / self.v_max

    @property
    def t0(self) -> int:
        # round half to even, as in the trajectory definition
        return round(math.acosh(math.sqrt(self.a_max / self.a0)) / self.beta)

    @property
    def T(self) -> float:
        return (self.xf - self.x0) / self.v_max

    @property
    def t_total(self) -> float:
        """Mirror-symmetric end of the motion: ramp up, plateau, ramp down."""
        return 2.0 * self.t0 + self.T


def eval_trajectory(p: TrajectoryParams, t: float):
    """Position, velocity and acceleration at time t >= 0."""
    if t < 0:
        raise TrajectoryError(f"time must be non-negative, got {t}")
    b = p.beta
    u = b * (t - p.t0)
    w = b * (t - p.t0 - p.T)
    x = p.v_max**2 / (4.0 * p.a_max) * (_log_cosh(u) - _log_cosh(w)) + 0.5 * (p.xf + p.x0)
    v = 0.5 * p.v_max * (math.tanh(u) - math.tanh(w))
    a = p.a_max * (_sech2(u) - _sech2(w))
    return x, v, a


@dataclass(frozen=True)
class ChargePartition:
    """A heavy charge split over the two nearest odd staggered sites."""

    site_lo: int
    q_lo: float
    q_hi: float

    @property
    def site_hi(self) -> int:
        return self.site_lo + 2

    def pairs(self):
        return ((self.site_lo, self.q_lo), (self.site_hi, self.q_hi))


def partition_charge(x: float, Q: float, n_sites: int | None = None) -> ChargePartition:
    """Split Q linearly between the odd sites bracketing x; exact on sites."""
    if x < 1.0 or (n_sites is not None and x > n_sites - 3):
        hi = "inf" if n_sites is None else str(n_sites - 3)
        raise TrajectoryError(f"position {x} outside the odd-site range [1, {hi}]")
    site_lo = 2 * int(math.floor((x - 1.0) / 2.0)) + 1
    if n_sites is not None and site_lo + 2 > n_sites - 1:
        site_lo -= 2
    q_lo = 0.5 * Q * (site_lo + 2 - x)
    q_hi = 0.5 * Q * (x - site_lo)
    return ChargePartition(site_lo, q_lo, q_hi)


def time_for_position(p: TrajectoryParams, x: float, tol: float = 1e-12) -> float:
    """Invert x(t) on its monotone range by bracketed root solving."""
    t_cap = p.t_total + 20.0 / p.beta
    x_lo, _, _ = eval_trajectory(p, 0.0)
    x_hi, _, _ = eval_trajectory(p, t_cap)
    if not x_lo < x < x_hi:
        raise TrajectoryError(f"position {x} not reached on (0, {t_cap:g}]")
    t = brentq(lambda tt: eval_trajectory(p, tt)[0] - x, 0.0, t_cap, xtol=tol)
    return float(t)


_DT_TABLE = ((0.05, 2.0), (0.1, 1.5), (0.2, 1.0), (0.4, 0.5), (0.99, 0.25))


def step_schedule(v_max: float) -> float:
    """Velocity-dependent evolution time step; 0.25 is the smallest used."""
    if not 0.0 < v_max <= 0.99:
        raise TrajectoryError(f"no step size tabulated for v_max={v_max}")
    for bound, dt in _DT_TABLE:
        if v_max <= bound:
            return dt
    raise AssertionError("unreachable")


# ------------------------------------------------------- charge schedules


@dataclass(frozen=True)
class StaticCharge:
    site: int
    Q: float


@dataclass(frozen=True)
class MovingCharge:
    params: TrajectoryParams
    Q: float = 1.0


@dataclass(frozen=True)
class ChargeSchedule:
    """Static charges plus at most one moving charge, resolvable at any time."""

    n_sites: int
    statics: tuple[StaticCharge, ...] = ()
    moving: MovingCharge | None = None

    def charges_at(self, t: float) -> BackgroundCharges:
        pairs = [(s.site, s.Q) for s in self.statics]
        if self.moving is not None:
            x, _, _ = eval_trajectory(self.moving.params, t)
            pairs.extend(partition_charge(x, self.moving.Q, self.n_sites).pairs())
        return BackgroundCharges.from_pairs(pairs)

    def x_at(self, t: float) -> float:
        if self.moving is None:
            return math.nan
        return eval_trajectory(self.moving.params, t)[0]

    def v_at(self, t: float) -> float:
        if self.moving is None:
            return 0.0
        return eval_trajectory(self.moving.params, t)[1]

    def default_dt(self) -> float:
        if self.moving is None:
            raise TrajectoryError("no moving charge: an explicit dt is required")
        return step_schedule(self.moving.params.v_max)

    def default_t_end(self) -> float:
        if self.moving is None:
            raise TrajectoryError("no moving charge: an explicit t_end is required")
        return self.moving.params.t_total
