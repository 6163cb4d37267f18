"""Mean-field branch solutions of the continuum TASEP-LK profile equation.

The stationary density obeys

    (2 rho - 1) rho' = (Omega_a + Omega_d) rho - Omega_a,      0 < x < 1,

whose two boundary-anchored solutions are known implicitly as x(rho).  The
left branch starts at rho(0) = alpha, the right branch ends at rho(1) = 1 - beta.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

K_ONE_TOL = 1e-12
ENDPOINT_SHRINK = 1e-14
MAX_BISECT_ITER = 200


class ParameterError(ValueError):
    """Raised for parameter tuples outside the model's domain."""


class BranchError(ValueError):
    """A density or position the requested branch cannot reach."""


class BranchExhausted(BranchError):
    """The branch hits a singularity or the density edge before the target x."""


class Side(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    beta: float
    omega_a: float
    omega_d: float
    K: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "K", self.omega_a / self.omega_d)

    @property
    def fixed_point(self) -> float:
        """Langmuir isotherm density K/(K+1)."""
        return self.K / (self.K + 1.0)

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta,
                "omega_a": self.omega_a, "omega_d": self.omega_d, "K": self.K}

    def replace(self, **changes) -> "ModelParams":
        raw = {"alpha": self.alpha, "beta": self.beta,
               "omega_a": self.omega_a, "omega_d": self.omega_d}
        raw.update(changes)
        return validate_params(raw)


@dataclass(frozen=True)
class BranchPoint:
    x: float
    rho: float
    side: Side


def validate_params(raw) -> ModelParams:
    """Build a :class:`ModelParams` from a mapping or a 4-sequence.

    Sequences are read as ``(alpha, beta, omega_a, omega_d)``.
    """
    if isinstance(raw, ModelParams):
        raw = (raw.alpha, raw.beta, raw.omega_a, raw.omega_d)
    if isinstance(raw, Mapping):
        try:
            vals = [raw[k] for k in ("alpha", "beta", "omega_a", "omega_d")]
        except KeyError as exc:
            raise ParameterError(f"missing parameter {exc.args[0]!r}") from None
    else:
        vals = list(raw)
        if len(vals) != 4:
            raise ParameterError("expected (alpha, beta, omega_a, omega_d)")
    try:
        alpha, beta, omega_a, omega_d = (float(v) for v in vals)
    except (TypeError, ValueError):
        raise ParameterError(f"non-numeric parameter in {vals!r}") from None
    for name, v in zip(("alpha", "beta", "omega_a", "omega_d"),
                       (alpha, beta, omega_a, omega_d)):
        if not math.isfinite(v):
            raise ParameterError(f"{name} must be finite, got {v}")
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"beta must lie in [0, 1], got {beta}")
    if omega_d <= 0.0:
        raise ParameterError(f"omega_d must be > 0, got {omega_d}")
    if omega_a < omega_d:
        raise ParameterError(
            f"K = omega_a/omega_d = {omega_a / omega_d:.6g} < 1; by particle-hole "
            "symmetry only omega_a >= omega_d is treated (swap alpha<->beta and "
            "omega_a<->omega_d to map your system onto this case)")
    return ModelParams(alpha, beta, omega_a, omega_d)


def ode_rhs(params: ModelParams, rho: float) -> float:
    """Slope d(rho)/dx of the stationary mean-field profile."""
    if rho == 0.5:
        raise BranchError("rho = 1/2 is the characteristic singularity of the profile ODE")
    return ((params.omega_a + params.omega_d) * rho - params.omega_a) / (2.0 * rho - 1.0)


@dataclass(frozen=True)
class Branch:
    """One implicit solution branch, parameterised by raw (anchor, K, Omega_d).

    No parameter-domain checks are made here, so K < 1 systems (for example
    particle-hole images) can be evaluated too.
    """

    side: Side
    anchor: float
    k: float
    omega_d: float

    @property
    def linear(self) -> bool:
        return abs(self.k - 1.0) < K_ONE_TOL

    @property
    def fixed_point(self) -> float:
        return self.k / (self.k + 1.0)

    @property
    def x_anchor(self) -> float:
        return 0.0 if self.side is Side.LEFT else 1.0

    def position(self, rho):
        """Raw evaluation of x(rho); array-friendly, no admissibility checks."""
        rho = np.asarray(rho, dtype=float)
        k, od, a = self.k, self.omega_d, self.anchor
        if self.linear:
            if self.side is Side.LEFT:
                out = (rho - a) / od
            else:
                out = 1.0 - (a - rho) / od
            return out[()] if out.ndim == 0 else out
        kp1 = k + 1.0
        c_log = (k - 1.0) / (kp1 * kp1 * od)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.side is Side.LEFT:
                out = (2.0 * (rho - a) / (kp1 * od)
                       + c_log * np.log(np.abs((k - kp1 * rho) / (k - kp1 * a))))
            else:
                out = 1.0 - (2.0 * (a - rho) / (kp1 * od)
                             + c_log * np.log(np.abs((k - kp1 * a) / (k - kp1 * rho))))
        return out[()] if out.ndim == 0 else out

    def direction(self) -> int:
        """Sign of the density change when moving from the anchor into (0, 1)."""
        a, k = self.anchor, self.k
        if self.linear:
            # K = 1: slope Omega_d everywhere; rho = 1/2 is fixed point and singularity
            if a == 0.5:
                return 0
            return 1 if self.side is Side.LEFT else -1
        fp = self.fixed_point
        if abs(a - fp) <= K_ONE_TOL:
            return 0
        if a == 0.5:
            # limit of anchors approaching 1/2 from the physical side
            if self.side is Side.LEFT:
                return 0
            return 1 if fp > 0.5 else -1
        slope = (k + 1.0) * a - k
        slope = math.copysign(1.0, slope) * math.copysign(1.0, 2.0 * a - 1.0)
        s = int(slope)
        return s if self.side is Side.LEFT else -s

    def span(self) -> tuple[float, str]:
        """Far end of the admissible density interval and its kind.

        Kinds: ``"singular"`` (rho = 1/2, reached at finite x), ``"fixed"``
        (rho = K/(K+1), reached only asymptotically), ``"edge"`` (rho = 0 or 1,
        finite x) and ``"constant"`` (anchor sits on the fixed point).
        """
        a = self.anchor
        d = self.direction()
        if d == 0:
            return a, "constant"
        barriers = [(0.5, "singular")]
        if not self.linear:
            barriers.append((self.fixed_point, "fixed"))
        if d > 0:
            ahead = [(b, kind) for b, kind in barriers if b > a]
            return min(ahead, default=(1.0, "edge"))
        ahead = [(b, kind) for b, kind in barriers if b < a]
        return max(ahead, default=(0.0, "edge"))

    def interval(self) -> tuple[float, float]:
        """Closed bracket in rho used for bisection (anchor to shrunk far end)."""
        far, kind = self.span()
        if kind in ("singular", "fixed"):
            far = far - ENDPOINT_SHRINK if far > self.anchor else far + ENDPOINT_SHRINK
        return (self.anchor, far) if far >= self.anchor else (far, self.anchor)

    def x_far(self) -> float:
        far, kind = self.span()
        if kind == "constant":
            return -math.inf if self.side is Side.LEFT else math.inf
        if kind == "fixed":
            return math.inf if self.side is Side.LEFT else -math.inf
        return float(self.position(far))

    def covers_unit_interval(self) -> bool:
        xf = self.x_far()
        if self.span()[1] == "constant":
            return True
        return xf >= 1.0 if self.side is Side.LEFT else xf <= 0.0

    def checked_position(self, rho: float) -> float:
        if not math.isfinite(rho) or not 0.0 <= rho <= 1.0:
            raise BranchError(f"density {rho} outside [0, 1]")
        if self.linear:
            return float(self.position(rho))
        fp = self.fixed_point
        if self.k - (self.k + 1.0) * rho == 0.0:
            raise BranchError(
                f"rho = K/(K+1) = {fp:.12g} is a logarithmic singularity of the branch")
        if (rho - fp) * (self.anchor - fp) < 0.0 or self.anchor == fp:
            raise BranchError(
                f"rho = {rho} lies across the fixed point {fp:.12g} from the "
                f"{self.side.value} anchor {self.anchor}")
        return float(self.position(rho))

    def extended_position(self, rho: float, approach: str | None = None) -> float:
        """Position with unreachable densities mapped to +/-inf.

        Densities across the fixed point are never attained: the right branch
        tends to K/(K+1) as x -> -inf, so they map to -inf there; for the left
        branch they map to +inf.  ``approach`` ("below"/"above") resolves an
        anchor sitting exactly on the fixed point as a one-sided limit.
        """
        fp = self.fixed_point
        if self.linear and self.anchor != fp:
            return float(self.position(rho))
        anchor_side = self.anchor - fp
        if abs(anchor_side) <= K_ONE_TOL:
            if approach is None:
                raise BranchError("constant branch: one-sided approach required")
            anchor_side = -1.0 if approach == "below" else 1.0
            if rho == fp:
                return -math.inf if self.side is Side.RIGHT else math.inf
            same = (rho - fp) * anchor_side > 0.0
            if self.side is Side.RIGHT:
                return math.inf if same else -math.inf
            return -math.inf if same else math.inf
        if (rho - fp) * anchor_side <= 0.0:
            return -math.inf if self.side is Side.RIGHT else math.inf
        return float(self.position(rho))

    def density(self, x):
        """Invert :meth:`position` by bisection; accepts scalars or arrays."""
        xs = np.asarray(x, dtype=float)
        scalar = xs.ndim == 0
        xs = np.atleast_1d(xs)
        a = self.anchor
        far, kind = self.span()
        if kind == "constant":
            out = np.full_like(xs, a)
            return float(out[0]) if scalar else out
        x0 = self.x_anchor
        xf = self.x_far()
        lo_x, hi_x = (x0, xf) if self.side is Side.LEFT else (xf, x0)
        bad = (xs < lo_x) | (xs > hi_x)
        if np.any(bad):
            raise BranchExhausted(
                f"{self.side.value} branch reaches rho = {far:.12g} ({kind}) at "
                f"x = {xf:.12g}; no admissible density maps to x = {xs[bad][0]:.12g}")
        if self.linear:
            if self.side is Side.LEFT:
                out = a + self.omega_d * xs
            else:
                out = a - self.omega_d * (1.0 - xs)
            return float(out[0]) if scalar else out
        r_lo, r_hi = self.interval()
        lo = np.full_like(xs, r_lo)
        hi = np.full_like(xs, r_hi)
        # g(rho) = position(rho) - x: its sign at the anchor end is fixed
        s_lo = np.sign(self.position(r_lo) - xs)
        for _ in range(MAX_BISECT_ITER):
            mid = 0.5 * (lo + hi)
            done = (mid <= lo) | (mid >= hi)
            if np.all(done):
                break
            g = self.position(mid) - xs
            same = np.sign(g) == s_lo
            lo = np.where(same & ~done, mid, lo)
            hi = np.where(~same & ~done, mid, hi)
        out = 0.5 * (lo + hi)
        # snap exact anchors
        out = np.where(xs == x0, a, out)
        return float(out[0]) if scalar else out


def make_branch(params: ModelParams, side: Side | str, beta: float | None = None) -> Branch:
    """Branch of ``params``; ``beta`` overrides the exit rate of the right branch."""
    side = Side(side)
    if side is Side.LEFT:
        anchor = params.alpha
    else:
        anchor = 1.0 - (params.beta if beta is None else beta)
    return Branch(side, anchor, params.K, params.omega_d)


def branch_position(params: ModelParams, side: Side | str, rho: float) -> float:
    """x at which the branch takes density ``rho``; may fall outside [0, 1]."""
    return make_branch(params, side).checked_position(rho)


def branch_density(params: ModelParams, side: Side | str, x):
    """Density of the branch at position(s) ``x``."""
    return make_branch(params, side).density(x)


def branch_point(params: ModelParams, side: Side | str, x: float) -> BranchPoint:
    side = Side(side)
    return BranchPoint(float(x), float(branch_density(params, side, x)), side)


def _rk4_path(f, rho0: float, x0: float, targets: Sequence[float], step: float,
              guard: float) -> list[float]:
    direction = 1.0 if all(t >= x0 for t in targets) else -1.0
    order = sorted(range(len(targets)), key=lambda i: direction * targets[i])
    out = [math.nan] * len(targets)
    x, rho = x0, rho0
    h = direction * step
    for i in order:
        target = targets[i]
        while direction * (target - x) > 1e-15:
            if abs(rho - 0.5) <= guard:
                raise BranchExhausted(
                    f"integration entered the rho = 1/2 guard band at x = {x:.6g}")
            hh = h if direction * (target - (x + h)) >= 0.0 else target - x
            k1 = f(rho)
            k2 = f(rho + 0.5 * hh * k1)
            k3 = f(rho + 0.5 * hh * k2)
            k4 = f(rho + hh * k3)
            rho += hh * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            x += hh
        out[i] = rho
    return out


def integrate_branch_oracle(params, side: Side | str, x_target, step: float = 1e-5,
                            beta: float | None = None):
    """Fixed-step RK4 integration of the profile ODE from the branch anchor.

    Independent of the implicit formulas; used as a test oracle.  ``x_target``
    may be a scalar or a sequence (one sweep serves all targets).
    ``params`` may be a :class:`ModelParams` or a :class:`Branch`.
    """
    if step > 1e-4:
        raise ValueError("oracle step must be <= 1e-4")
    if isinstance(params, Branch):
        br = params
    else:
        br = make_branch(params, side, beta=beta)
    od, k = br.omega_d, br.k
    oa = k * od
    if br.linear:
        def f(r):
            return od
    else:
        def f(r):
            return ((oa + od) * r - oa) / (2.0 * r - 1.0)
    scalar = np.ndim(x_target) == 0
    targets = [float(x_target)] if scalar else [float(t) for t in x_target]
    guard = 10.0 * step
    if br.linear:
        guard = -1.0
    vals = _rk4_path(f, br.anchor, br.x_anchor, targets, step, guard)
    return vals[0] if scalar else np.array(vals)


def particle_hole_branch(branch: Branch) -> Branch:
    """Image of a branch under (alpha, beta, Omega_a, Omega_d) -> (beta, alpha, Omega_d, Omega_a).

    The left branch anchored at alpha maps to the right branch anchored at
    1 - alpha of the transformed system, and vice versa.
    """
    k_new = 1.0 / branch.k
    od_new = branch.k * branch.omega_d
    other = Side.RIGHT if branch.side is Side.LEFT else Side.LEFT
    return Branch(other, 1.0 - branch.anchor, k_new, od_new)
