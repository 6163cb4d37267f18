"""Domain-wall existence, location and the composite stationary profile."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .meanfield import (
    ENDPOINT_SHRINK,
    MAX_BISECT_ITER,
    Branch,
    BranchError,
    ModelParams,
    Side,
    make_branch,
)

INTERIOR_TOL = 1e-12
BOUNDARY_TOL = 1e-12
RHO_TOL = 1e-13


class NoWallError(ValueError):
    """No interior domain wall exists for the requested parameters."""


class WallSolveError(RuntimeError):
    """The matching function has no sign change where existence was predicted."""


class Regime(str, enum.Enum):
    CASE_I = "CaseI"
    CASE_II = "CaseII"
    CASE_III = "CaseIII"


@dataclass(frozen=True)
class ExistenceVerdict:
    exists: bool
    regime: Regime
    gamma: float
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"exists": self.exists, "regime": self.regime.value,
                "gamma": self.gamma, "diagnostics": dict(self.diagnostics)}


@dataclass(frozen=True)
class WallSolution:
    x_s: float
    rho_minus: float
    rho_plus: float
    height: float
    residual: float

    @property
    def eps(self) -> float:
        """Half-height of the jump."""
        return 0.5 * self.height

    def as_dict(self) -> dict:
        return {"x_s": self.x_s, "rho_minus": self.rho_minus, "rho_plus": self.rho_plus,
                "height": self.height, "residual": self.residual}


@dataclass
class CompositeProfile:
    params: ModelParams
    grid: np.ndarray
    densities: np.ndarray
    branches: list
    wall: WallSolution | None
    regime: Regime
    unresolved: bool = False
    note: str = ""

    def rows(self):
        for x, rho, br in zip(self.grid, self.densities, self.branches):
            yield float(x), float(rho), br


def effective_beta(params: ModelParams) -> float:
    """Exit rate seen by the right branch; beta > 1/2 acts like beta = 1/2."""
    return min(0.5, params.beta)


def _regimes(params: ModelParams) -> list[Regime]:
    if params.alpha >= 0.5:
        return [Regime.CASE_III]
    fp = params.fixed_point
    b = 1.0 - params.beta
    if abs(b - fp) <= BOUNDARY_TOL:
        return [Regime.CASE_I, Regime.CASE_II]
    return [Regime.CASE_I] if b < fp else [Regime.CASE_II]


def _case_verdict(params: ModelParams, regime: Regime) -> ExistenceVerdict:
    alpha = params.alpha
    left = make_branch(params, Side.LEFT)
    if regime is Regime.CASE_I:
        gamma = min(0.5, params.beta)
        right = make_branch(params, Side.RIGHT, beta=gamma)
        x_left = left.extended_position(gamma)
        x_right = right.extended_position(1.0 - alpha, approach="below")
        cond_left = x_left <= 1.0
        cond_right = x_right <= 0.0
    else:
        gamma = params.beta
        right = make_branch(params, Side.RIGHT)
        x_left = left.extended_position(gamma)
        x_right = right.extended_position(1.0 - alpha, approach="above")
        cond_left = x_left <= 1.0
        cond_right = x_right >= 0.0
    touching = abs(x_left - 1.0) <= INTERIOR_TOL or abs(x_right) <= INTERIOR_TOL
    exists = cond_left and cond_right and not touching
    diag = {"left_inverse": x_left, "right_inverse": x_right,
            "left_condition": bool(cond_left), "right_condition": bool(cond_right),
            "boundary_touching": bool(cond_left and cond_right and touching)}
    if left.linear:
        # K = 1: both straight branches reach rho = 1/2 at finite x, so the two
        # conditions alone also accept crossings above 1/2; require rho_- < 1/2
        rho_m = 0.5 * (alpha + gamma + params.omega_d)
        diag["linear_rho_minus"] = rho_m
        if exists and not rho_m < 0.5:
            exists = False
            diag["crossing_above_half"] = True
    return ExistenceVerdict(bool(exists), regime, gamma, diag)


def check_existence(params: ModelParams) -> ExistenceVerdict:
    """Classify the boundary regime and test the wall existence conditions.

    Case I  (alpha <= 1/2, 1-beta <= K/(K+1)): x_l(gamma) <= 1 and x_r,gamma(1-alpha) <= 0
    Case II (alpha <= 1/2, 1-beta >= K/(K+1)): x_l(beta) <= 1 and x_r(1-alpha) >= 0
    Case III (alpha >= 1/2): never.

    Densities a branch cannot reach (across the fixed point) count as
    infinitely far away, which is the limit of the implicit formulas.
    """
    regimes = _regimes(params)
    if regimes == [Regime.CASE_III]:
        return ExistenceVerdict(False, Regime.CASE_III, min(0.5, params.beta),
                                {"reason": "alpha >= 1/2"})
    try:
        verdicts = [_case_verdict(params, r) for r in regimes]
    except (BranchError, FloatingPointError) as exc:
        return ExistenceVerdict(False, regimes[0], min(0.5, params.beta),
                                {"untestable": str(exc)})
    if len(verdicts) == 2:
        v1, v2 = verdicts
        if v1.exists != v2.exists:
            raise AssertionError(
                f"Case I and Case II verdicts disagree on the shared boundary: {v1} vs {v2}")
        return ExistenceVerdict(v1.exists, v1.regime, v1.gamma,
                                {**v1.diagnostics, "on_case_boundary": True})
    return verdicts[0]


def matching_function(params: ModelParams, rho, beta: float | None = None):
    """h(rho) = x_l(rho) - x_r(1 - rho); zero at the wall's low-side density."""
    left = make_branch(params, Side.LEFT)
    right = make_branch(params, Side.RIGHT, beta=effective_beta(params) if beta is None else beta)
    rho = np.asarray(rho, dtype=float)
    return left.position(rho) - right.position(1.0 - rho)


def matching_bracket(params: ModelParams) -> tuple[float, float]:
    """Interval of rho_minus on which both branches are evaluable."""
    right = make_branch(params, Side.RIGHT, beta=effective_beta(params))
    lo, hi = params.alpha, 0.5
    if not right.linear:
        cut = 1.0 - right.fixed_point
        if right.anchor < right.fixed_point:
            lo = max(lo, cut + ENDPOINT_SHRINK)
        else:
            hi = min(hi, cut - ENDPOINT_SHRINK)
    return lo, hi


def _bisect(fun, lo: float, hi: float, tol: float = RHO_TOL) -> float:
    f_lo = fun(lo)
    if f_lo == 0.0:
        return lo
    for _ in range(MAX_BISECT_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = fun(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo <= tol * 1e-3:
            break
    return 0.5 * (lo + hi)


def solve_wall(params: ModelParams, verdict: ExistenceVerdict | None = None) -> WallSolution:
    """Locate the wall from the Rankine-Hugoniot matching rho_- + rho_+ = 1."""
    verdict = verdict or check_existence(params)
    if not verdict.exists:
        raise NoWallError(f"no interior domain wall for {params} ({verdict.regime.value})")
    beta_eff = effective_beta(params)
    left = make_branch(params, Side.LEFT)
    right = make_branch(params, Side.RIGHT, beta=beta_eff)
    if left.linear:
        # K = 1: both branches are straight lines of slope Omega_d
        od = params.omega_d
        rho_m = 0.5 * (params.alpha + beta_eff + od)
        x_s = (beta_eff - params.alpha + od) / (2.0 * od)
        residual = abs(float(left.position(rho_m)) - float(right.position(1.0 - rho_m)))
        if not rho_m < 0.5:
            raise WallSolveError(
                f"straight branches cross at rho = {rho_m:.6g} >= 1/2, outside the "
                "admissible range, although existence was reported")
        if not 0.0 < x_s < 1.0:
            raise WallSolveError(f"solved wall position {x_s} is not interior")
        return WallSolution(x_s, rho_m, 1.0 - rho_m, 1.0 - 2.0 * rho_m, residual)
    if right.span()[1] == "constant":
        # right branch sits on the isotherm: rho_+ = K/(K+1)
        rho_m = 1.0 - right.fixed_point
    else:
        lo, hi = matching_bracket(params)

        def h(r):
            return float(left.position(r) - right.position(1.0 - r))

        h_lo, h_hi = h(lo), h(hi)
        if lo > hi or (h_lo > 0.0 and h_hi > 0.0) or (h_lo < 0.0 and h_hi < 0.0):
            cut = (lo, hi) != (params.alpha, 0.5)
            raise WallSolveError(
                f"no sign change of the matching function on [{lo}, {hi}] "
                f"(h = {h_lo:.6g}, {h_hi:.6g}) although existence was reported"
                + ("; the root may sit closer than float resolution to the isotherm "
                   "density" if cut else ""))
        rho_m = _bisect(h, lo, hi)
    rho_p = 1.0 - rho_m
    x_s = float(left.position(rho_m))
    x_r = float(right.position(rho_p)) if right.span()[1] != "constant" else x_s
    residual = abs(x_s - x_r)
    if not 0.0 < x_s < 1.0:
        raise WallSolveError(f"solved wall position {x_s} is not interior")
    return WallSolution(x_s, rho_m, rho_p, 1.0 - 2.0 * rho_m, residual)


def _fill(branch: Branch, xs: np.ndarray) -> np.ndarray:
    """Branch densities on xs, NaN where the branch is exhausted."""
    out = np.full(xs.shape, np.nan)
    if xs.size == 0:
        return out
    xf = branch.x_far()
    if branch.side is Side.LEFT:
        ok = xs <= xf
    else:
        ok = xs >= xf
    if np.any(ok):
        out[ok] = branch.density(xs[ok])
    return out


def composite_profile(params: ModelParams, n_points: int) -> CompositeProfile:
    """Mean-field profile on a uniform grid of ``n_points`` positions in [0, 1].

    With a wall the left branch applies below x_s and the right branch above;
    a grid point sitting on x_s appears twice, once per side.
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    grid = np.linspace(0.0, 1.0, n_points)
    verdict = check_existence(params)
    left = make_branch(params, Side.LEFT)
    right = make_branch(params, Side.RIGHT, beta=effective_beta(params))

    wall = None
    if verdict.exists:
        try:
            wall = solve_wall(params, verdict)
        except WallSolveError as exc:
            # existence conditions hold but the branches do not match in range
            mismatch = str(exc)
        else:
            mismatch = ""
    if wall is not None:
        on = np.abs(grid - wall.x_s) <= INTERIOR_TOL
        below = (grid < wall.x_s) & ~on
        above = (grid > wall.x_s) & ~on
        xs, rhos, labels = [], [], []
        lv = left.density(grid[below | on]) if np.any(below | on) else np.array([])
        rv = right.density(grid[above | on]) if np.any(above | on) else np.array([])
        li = ri = 0
        for x, b, o in zip(grid, below, on):
            if b or o:
                xs.append(x), rhos.append(lv[li]), labels.append("left")
                li += 1
            if o or not b:
                xs.append(x), rhos.append(rv[ri]), labels.append("right")
                ri += 1
        return CompositeProfile(params, np.array(xs), np.array(rhos), labels, wall, verdict.regime)

    d = verdict.diagnostics
    order: list[Branch] = []
    if verdict.regime is Regime.CASE_III:
        order = [right, left]
        note = "no wall (alpha >= 1/2)"
    else:
        if not d.get("left_condition", True):
            order.append(left)
        if not d.get("right_condition", True):
            order.append(right)
        for br in (left, right):
            if br not in order:
                order.append(br)
        note = "no interior wall"
        if verdict.exists:
            note = f"wall not resolvable: {mismatch}"
    for br in order if not verdict.exists else ():
        if br.covers_unit_interval():
            rho = br.density(grid)
            return CompositeProfile(params, grid, rho, [br.side.value] * n_points, None,
                                    verdict.regime, note=f"{note}; {br.side.value} branch")
    lv = _fill(left, grid)
    rv = _fill(right, grid)
    rho = np.where(np.isnan(lv), rv, lv)
    labels = ["left" if not math.isnan(a) else ("right" if not math.isnan(b) else "unresolved")
              for a, b in zip(lv, rv)]
    return CompositeProfile(params, grid, rho, labels, None, verdict.regime, unresolved=True,
                            note=f"{note}; neither branch spans [0, 1] "
                                 "(unresolved by this theory)")


def meanfield_density(composite: CompositeProfile, x) -> np.ndarray:
    """Mean-field density of ``composite``'s phase at arbitrary positions.

    Uses the same branch selection as the profile; positions the theory
    leaves unresolved come back as NaN.
    """
    params = composite.params
    x = np.asarray(x, dtype=float)
    left = make_branch(params, Side.LEFT)
    right = make_branch(params, Side.RIGHT, beta=effective_beta(params))
    if composite.wall is not None:
        xs = composite.wall.x_s
        out = np.empty_like(x)
        lo = x < xs
        if np.any(lo):
            out[lo] = left.density(x[lo])
        if np.any(~lo):
            out[~lo] = right.density(x[~lo])
        return out
    if composite.unresolved:
        lv, rv = _fill(left, x), _fill(right, x)
        return np.where(np.isnan(lv), rv, lv)
    br = left if composite.branches[0] == "left" else right
    return br.density(x)


def crossing_scan_oracle(params: ModelParams, n_grid: int = 10_000,
                         n_rho: int = 20_000) -> bool:
    """Brute-force existence test: does rho_l(x) + rho_r(x) - 1 change sign in (0, 1)?

    Each branch is traced parametrically in rho (dense sampling clustered at
    the ends), interpolated onto ``n_grid`` positions, and the sum compared
    wherever both branches are defined.  Shares only the raw position
    formulas with the main path, not the existence logic.
    """
    # endpoints included: walls within one cell of x=0 or x=1 still show a sign change
    grid = np.linspace(0.0, 1.0, n_grid)
    beta_eff = effective_beta(params)
    curves = []
    for br in (make_branch(params, Side.LEFT), make_branch(params, Side.RIGHT, beta=beta_eff)):
        far, kind = br.span()
        if kind == "constant":
            curves.append(np.full_like(grid, br.anchor))
            continue
        # cosine clustering puts samples near both ends of the density interval
        t = 0.5 - 0.5 * np.cos(np.linspace(0.0, np.pi, n_rho))
        if kind == "fixed":
            t = 1.0 - np.geomspace(1.0, 1e-15, n_rho)
        rho = br.anchor + (far - br.anchor) * t
        x = br.position(rho)
        good = np.isfinite(x)
        x, rho = x[good], rho[good]
        idx = np.argsort(x)
        x, rho = x[idx], rho[idx]
        vals = np.interp(grid, x, rho, left=np.nan, right=np.nan)
        curves.append(vals)
    s = curves[0] + curves[1] - 1.0
    s = s[np.isfinite(s)]
    if s.size < 2:
        return False
    return bool(np.any(np.sign(s[:-1]) * np.sign(s[1:]) < 0))
