"""Parameter sensitivities of the wall location x_S and half-height eps.

Analytic partial derivatives are written in terms of the helper values
A..F.  K is always varied at fixed Omega_d (Omega_a = K * Omega_d moves with it).
Two of the original closed forms disagree with finite differences; both are
kept, selected by ``variant="original"`` or ``variant="corrected"``:

* d eps / d alpha carries (K+1)**2 in the original; the implicit-function
  derivation gives (K+1).
* d x_S / d K contains 2(K+1)(1-2 beta) in the original where
  (K**2-1)(1-2 beta) belongs; the two agree only at K = 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .domain_wall import (
    NoWallError,
    Regime,
    WallSolution,
    check_existence,
    solve_wall,
)
from .meanfield import ModelParams, ParameterError, validate_params

PARAMETERS = ("omega_d", "K", "alpha", "beta")
DEFAULT_STEPS = {"omega_d": 1e-5, "K": 1e-4, "alpha": 1e-5, "beta": 1e-5}
K_MIN_FOR_DK = 1.0 + 1e-9
CLASSIFY_TOL = 1e-9


class SensitivityError(ValueError):
    """Derivative requested at a regime boundary where a formula is singular."""


class RegimeCrossed(SensitivityError):
    """Finite-difference stencil straddles a change of regime or wall existence."""


@dataclass(frozen=True)
class HelperValues:
    A: float
    B: float
    C: float
    D: float
    E: float
    F: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in "ABCDEF"}


def helpers(params: ModelParams, eps: float) -> HelperValues:
    if eps < 0.0:
        raise ValueError("eps must be >= 0")
    K, a, b = params.K, params.alpha, params.beta
    return HelperValues(
        A=2 * eps + 2 * K * eps - K + 1,
        B=2 * eps + 2 * K * eps + K - 1,
        C=K * b + b - 1,
        D=K * a + a - K,
        E=1 - 2 * a - 2 * eps,
        F=1 - 2 * b - 2 * eps,
    )


def _setup(params: ModelParams, wall: WallSolution):
    eps = wall.eps
    if eps <= 0.0:
        raise SensitivityError("wall height is zero; derivatives are singular")
    return eps, params.K, params.omega_d, helpers(params, eps)


def _need_nonzero(value: float, name: str, scale: float):
    # C and D are differences of O(K) terms; a few ulp of that is zero
    if abs(value) <= 16 * np.finfo(float).eps * scale:
        raise SensitivityError(f"{name} = 0: regime boundary, formula singular")


def dxs_domega(params: ModelParams, wall: WallSolution) -> float:
    eps, K, od, h = _setup(params, wall)
    return (h.A - 4 * eps * wall.x_s * (K + 1)) / (4 * eps * od * (K + 1))


def dxs_domega_sign_prediction(params: ModelParams, wall: WallSolution) -> int:
    """-1 when 2 eps (K+1)(1 - 2 x_S) <= K - 1 (x_S falls with Omega_d), else +1."""
    K = params.K
    return -1 if 2 * wall.eps * (K + 1) * (1 - 2 * wall.x_s) <= K - 1 else 1


def dxs_dk(params: ModelParams, wall: WallSolution, variant: str = "original") -> float:
    """d x_S / d K at fixed Omega_d.

    ``variant="original"`` evaluates the original expression; ``"corrected"`` uses
    (K**2 - 1)(1 - 2 beta) in the second bracket.
    """
    eps, K, od, h = _setup(params, wall)
    if K <= K_MIN_FOR_DK:
        raise SensitivityError("d x_S / d K needs K > 1")
    _need_nonzero(h.C, "C", K + 1)
    _need_nonzero(h.D, "D", K + 1)
    a, b, x = params.alpha, params.beta, wall.x_s
    first = (K - 3) / (K * K - 1) * ((h.A + h.B) * x - h.A)
    left_br = (K * K - 1) * (2 * a - 1) + 4 * eps * (K + 1) * h.D
    if variant == "original":
        right_br = 4 * eps * (K + 1) * h.C + 2 * (K + 1) * (1 - 2 * b)
    elif variant == "corrected":
        right_br = 4 * eps * (K + 1) * h.C + (K * K - 1) * (1 - 2 * b)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    second = ((left_br * h.C * h.E - right_br * h.D * h.F)
              / (od * (K + 1) ** 2 * (K - 1) * h.C * h.D))
    return -(first + second) / (4 * (K + 1) * eps)


def dxs_dk_condition(params: ModelParams, wall: WallSolution) -> bool:
    """Sufficient condition for d x_S / d K <= 0 when beta < 1/(K+1) and K >= 3.

    Multiplied through by (K - 3) so that K = 3 is admissible.
    """
    eps, K, _, h = _setup(params, wall)
    a, b, x = params.alpha, params.beta, wall.x_s
    rest = (8 * eps * (b - a) + (K * K - 1) * (2 * a - 1) * h.C * h.E
            + (K - 1) * (2 * b - 1) * h.D * h.F)
    return (K - 3) * (2 * eps * (K + 1) * (1 - 2 * x) - (K - 1)) <= rest


def dxs_dalpha(params: ModelParams, wall: WallSolution) -> float:
    eps, K, od, h = _setup(params, wall)
    _need_nonzero(h.D, "D", K + 1)
    return (1 - 2 * params.alpha) * h.B / (4 * eps * od * (K + 1) * h.D)


def dxs_dbeta(params: ModelParams, wall: WallSolution) -> float:
    eps, K, od, h = _setup(params, wall)
    _need_nonzero(h.C, "C", K + 1)
    return (2 * params.beta - 1) * h.A / (4 * eps * od * (K + 1) * h.C)


def deps_domega(params: ModelParams, wall: WallSolution) -> float:
    eps, K, _, h = _setup(params, wall)
    return -h.A * h.B / (16 * (K + 1) * eps ** 2)


def deps_dk(params: ModelParams, wall: WallSolution) -> float:
    eps, K, od, h = _setup(params, wall)
    if K <= K_MIN_FOR_DK:
        raise SensitivityError("d eps / d K needs K > 1")
    _need_nonzero(h.C, "C", K + 1)
    _need_nonzero(h.D, "D", K + 1)
    bd = (K - 1) ** 2 + 2 * h.B * h.D
    ac = (K - 1) ** 2 + 2 * h.A * h.C
    inner = ((bd * h.A * h.C * h.E + ac * h.B * h.D * h.F)
             / ((K + 1) ** 2 * (K - 1) * h.C * h.D)
             + (K - 3) * h.A * h.B * od / (K * K - 1))
    return -inner / (16 * (K + 1) * eps ** 2)


def deps_dalpha(params: ModelParams, wall: WallSolution, variant: str = "original") -> float:
    """d eps / d alpha; the original form has (K+1)**2 where (K+1) is correct."""
    eps, K, _, h = _setup(params, wall)
    _need_nonzero(h.D, "D", K + 1)
    power = {"original": 2, "corrected": 1}.get(variant)
    if power is None:
        raise ValueError(f"unknown variant {variant!r}")
    return (1 - 2 * params.alpha) * h.A * h.B / (16 * (K + 1) ** power * eps ** 2 * h.D)


def deps_dbeta(params: ModelParams, wall: WallSolution) -> float:
    eps, K, _, h = _setup(params, wall)
    _need_nonzero(h.C, "C", K + 1)
    return (1 - 2 * params.beta) * h.A * h.B / (16 * (K + 1) * eps ** 2 * h.C)


def identity_bd(params: ModelParams, eps: float) -> tuple[float, float]:
    """Both sides of (K-1)^2 + 2BD = (K^2-1)(2 alpha-1) + 4 eps (K+1) D."""
    h = helpers(params, eps)
    K = params.K
    return ((K - 1) ** 2 + 2 * h.B * h.D,
            (K * K - 1) * (2 * params.alpha - 1) + 4 * eps * (K + 1) * h.D)


def identity_ac(params: ModelParams, eps: float) -> tuple[float, float, float]:
    """(K-1)^2 + 2AC against the original right side and the (K^2-1) form."""
    h = helpers(params, eps)
    K, b = params.K, params.beta
    lhs = (K - 1) ** 2 + 2 * h.A * h.C
    original = 4 * eps * (K + 1) * h.C + (K - 1) * (1 - 2 * b)
    derived = 4 * eps * (K + 1) * h.C + (K * K - 1) * (1 - 2 * b)
    return lhs, original, derived


# (original formula, corrected formula or None)
XS_FORMULAS: dict[str, tuple[Callable, Callable | None]] = {
    "omega_d": (dxs_domega, None),
    "K": (dxs_dk, lambda p, w: dxs_dk(p, w, "corrected")),
    "alpha": (dxs_dalpha, None),
    "beta": (dxs_dbeta, None),
}
EPS_FORMULAS: dict[str, tuple[Callable, Callable | None]] = {
    "omega_d": (deps_domega, None),
    "K": (deps_dk, None),
    "alpha": (deps_dalpha, lambda p, w: deps_dalpha(p, w, "corrected")),
    "beta": (deps_dbeta, None),
}
FORMULA_NOTES = {
    ("xs", "K"): "original bracket term 2(K+1)(1-2beta) disagrees with finite differences "
                 "unless K = 3; corrected form uses (K^2-1)(1-2beta)",
    ("eps", "alpha"): "original (K+1)^2 factor; corrected form has (K+1), "
                      "matching finite differences and the K = 1 closed form",
}


def perturb(params: ModelParams, parameter: str, value: float) -> ModelParams:
    """Copy of ``params`` with one coordinate set; K moves at fixed Omega_d."""
    if parameter == "alpha":
        return params.replace(alpha=value)
    if parameter == "beta":
        return params.replace(beta=value)
    if parameter == "omega_d":
        return params.replace(omega_d=value, omega_a=params.K * value)
    if parameter == "K":
        return params.replace(omega_a=value * params.omega_d)
    raise ValueError(f"unknown parameter {parameter!r}; choose from {PARAMETERS}")


def parameter_value(params: ModelParams, parameter: str) -> float:
    return {"alpha": params.alpha, "beta": params.beta,
            "omega_d": params.omega_d, "K": params.K}[parameter]


def beta_regime(params: ModelParams) -> str:
    """'upper' for 1/(K+1) <= beta <= 1/2, 'lower' for beta < 1/(K+1)."""
    return "lower" if params.beta < 1.0 / (params.K + 1.0) else "upper"


def _rel_gap(a: float, ref: float) -> float:
    if a == ref:
        return 0.0
    return abs(a - ref) / max(abs(ref), 1e-12)


@dataclass
class DerivativeReport:
    parameter: str
    analytic_xs: float
    analytic_eps: float
    fd_xs: float
    fd_eps: float
    fd_step: float
    rel_gap_xs: float
    rel_gap_eps: float
    corrected_xs: float | None = None
    corrected_eps: float | None = None
    rel_gap_corrected_xs: float | None = None
    rel_gap_corrected_eps: float | None = None
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def finite_difference(params: ModelParams, parameter: str,
                      step: float | None = None) -> DerivativeReport:
    """Central differences of x_S and eps from two full wall re-solves."""
    if parameter not in PARAMETERS:
        raise ValueError(f"unknown parameter {parameter!r}; choose from {PARAMETERS}")
    step = DEFAULT_STEPS[parameter] if step is None else step
    wall = solve_wall(params)
    p0 = parameter_value(params, parameter)
    try:
        lo = perturb(params, parameter, p0 - step)
        hi = perturb(params, parameter, p0 + step)
    except ParameterError as exc:
        raise RegimeCrossed(f"stencil leaves the parameter domain: {exc}") from None
    v0, vl, vh = check_existence(params), check_existence(lo), check_existence(hi)
    if not (vl.exists and vh.exists):
        raise RegimeCrossed(f"wall disappears within +/-{step} of {parameter}={p0}")
    if len({v0.regime, vl.regime, vh.regime}) > 1 or \
            len({beta_regime(params), beta_regime(lo), beta_regime(hi)}) > 1:
        raise RegimeCrossed(f"regime changes within +/-{step} of {parameter}={p0}")
    wl, wh = solve_wall(lo, vl), solve_wall(hi, vh)
    fd_xs = (wh.x_s - wl.x_s) / (2 * step)
    fd_eps = (wh.eps - wl.eps) / (2 * step)

    xs_f, xs_fix = XS_FORMULAS[parameter]
    eps_f, eps_fix = EPS_FORMULAS[parameter]
    a_xs, a_eps = xs_f(params, wall), eps_f(params, wall)
    rep = DerivativeReport(parameter, a_xs, a_eps, fd_xs, fd_eps, step,
                           _rel_gap(a_xs, fd_xs), _rel_gap(a_eps, fd_eps))
    if xs_fix is not None:
        rep.corrected_xs = xs_fix(params, wall)
        rep.rel_gap_corrected_xs = _rel_gap(rep.corrected_xs, fd_xs)
        rep.flags.append(FORMULA_NOTES[("xs", parameter)])
    if eps_fix is not None:
        rep.corrected_eps = eps_fix(params, wall)
        rep.rel_gap_corrected_eps = _rel_gap(rep.corrected_eps, fd_eps)
        rep.flags.append(FORMULA_NOTES[("eps", parameter)])
    return rep


@dataclass(frozen=True)
class ScanPoint:
    value: float
    x_s: float
    height: float
    exists: bool


def monotonicity_scan(base: ModelParams, parameter: str,
                      value_range: Sequence[float], n_steps: int) -> list[ScanPoint]:
    """Sample (x_S, 2 eps) along one parameter; points without a wall get NaNs."""
    lo, hi = value_range
    out = []
    for v in np.linspace(lo, hi, n_steps):
        try:
            p = perturb(base, parameter, float(v))
            verdict = check_existence(p)
            if not verdict.exists:
                raise NoWallError
            w = solve_wall(p, verdict)
        except (NoWallError, ParameterError):
            out.append(ScanPoint(float(v), math.nan, math.nan, False))
            continue
        out.append(ScanPoint(float(v), w.x_s, w.height, True))
    return out


def classify(values: Iterable[float], tol: float = CLASSIFY_TOL) -> str:
    """Label a sampled curve increasing / decreasing / peak / valley / none.

    NaN samples (missing walls) are dropped first.  Differences within ``tol``
    count as flat, and a flat step disqualifies every label.
    """
    y = np.array([v for v in values if not math.isnan(v)], dtype=float)
    if y.size < 3:
        return "none"
    d = np.diff(y)
    if np.any(np.abs(d) <= tol):
        return "none"
    s = np.sign(d)
    changes = np.flatnonzero(s[1:] != s[:-1])
    if changes.size == 0:
        return "increasing" if s[0] > 0 else "decreasing"
    if changes.size == 1:
        return "peak" if s[0] > 0 else "valley"
    return "none"


def classify_scan(points: Sequence[ScanPoint]) -> dict:
    return {"x_s": classify(p.x_s for p in points),
            "height": classify(p.height for p in points)}


def sensitivity_reports(params: ModelParams,
                        parameters: Sequence[str] = PARAMETERS) -> list[DerivativeReport]:
    """One :class:`DerivativeReport` per parameter (K skipped when K == 1)."""
    reports = []
    for name in parameters:
        if name == "K" and params.K <= K_MIN_FOR_DK:
            continue
        reports.append(finite_difference(params, name))
    return reports


def regime_of(params: ModelParams) -> Regime:
    return check_existence(params).regime


__all__ = [
    "HelperValues", "DerivativeReport", "ScanPoint", "SensitivityError", "RegimeCrossed",
    "helpers", "dxs_domega", "dxs_domega_sign_prediction", "dxs_dk", "dxs_dk_condition",
    "dxs_dalpha", "dxs_dbeta", "deps_domega", "deps_dk", "deps_dalpha", "deps_dbeta",
    "finite_difference", "monotonicity_scan", "classify", "classify_scan", "perturb",
    "sensitivity_reports", "identity_bd", "identity_ac", "validate_params",
]
