import math

import numpy as np
import pytest

from grids import sensitivity_points
from tasep_lk.domain_wall import check_existence, solve_wall
from tasep_lk.meanfield import validate_params
from tasep_lk.sensitivity import (
    RegimeCrossed,
    SensitivityError,
    ScanPoint,
    beta_regime,
    classify,
    classify_scan,
    deps_dalpha,
    deps_dbeta,
    deps_dk,
    deps_domega,
    dxs_dalpha,
    dxs_dbeta,
    dxs_dk,
    dxs_dk_condition,
    dxs_domega,
    dxs_domega_sign_prediction,
    finite_difference,
    helpers,
    identity_ac,
    identity_bd,
    monotonicity_scan,
    perturb,
    sensitivity_reports,
)


def P(*raw):
    return validate_params(raw)


def wall(*raw):
    p = P(*raw)
    return p, solve_wall(p)


@pytest.fixture(scope="module")
def upper_points():
    return sensitivity_points("upper", 12, seed=1)


@pytest.fixture(scope="module")
def lower_points():
    return sensitivity_points("lower", 12, seed=2)


# --- helpers -----------------------------------------------------------------

def test_helpers_k_one():
    h = helpers(P(0.2, 0.2, 0.3, 0.3), 0.15)
    np.testing.assert_allclose([h.A, h.B, h.C, h.D, h.E, h.F],
                               [0.6, 0.6, -0.6, -0.6, 0.3, 0.3], atol=1e-15)


def test_helpers_k_three():
    h = helpers(P(0.1, 0.3, 0.3, 0.1), 0.2)
    np.testing.assert_allclose([h.A, h.B, h.C, h.D, h.E, h.F],
                               [-0.4, 3.6, 0.2, -2.6, 0.4, 0.0], atol=1e-12)


def test_helper_c_vanishes_on_regime_boundary():
    assert helpers(P(0.17, 0.25, 0.3, 0.1), 0.1).C == pytest.approx(0.0, abs=1e-15)


def test_helpers_reject_negative_eps():
    with pytest.raises(ValueError):
        helpers(P(0.2, 0.2, 0.3, 0.3), -0.1)


def test_helper_sign_tables(upper_points, lower_points):
    for p, w, _ in upper_points:
        h = helpers(p, w.eps)
        assert h.A <= 0 and h.A + h.B > 0 and h.C >= 0 and h.D <= 0 and h.E >= 0 and h.F <= 0
        assert h.B >= 0
    for p, w, _ in lower_points:
        h = helpers(p, w.eps)
        assert h.C <= 0 and h.D <= 0 and h.E >= 0 and h.F >= 0


# --- closed-form K = 1 checks ------------------------------------------------

def test_k_one_symmetric_omega():
    p, w = wall(0.2, 0.2, 0.3, 0.3)
    assert dxs_domega(p, w) == pytest.approx(0.0, abs=1e-14)
    assert deps_domega(p, w) == pytest.approx(-0.5, abs=1e-14)


def test_k_one_asymmetric():
    p, w = wall(0.1, 0.3, 0.4, 0.4)
    assert dxs_domega(p, w) == pytest.approx(-(0.3 - 0.1) / (2 * 0.4 ** 2), rel=1e-12)
    assert dxs_dalpha(p, w) == pytest.approx(-1.25, rel=1e-12)
    assert dxs_dbeta(p, w) == pytest.approx(1.25, rel=1e-12)
    assert deps_dbeta(p, w) == pytest.approx(-0.5, rel=1e-12)
    # the original d eps/d alpha gives -1/4; the closed form 2 eps = 1-a-b-Od gives -1/2
    assert deps_dalpha(p, w) == pytest.approx(-0.25, rel=1e-12)
    assert deps_dalpha(p, w, "corrected") == pytest.approx(-0.5, rel=1e-12)


def test_finite_difference_k_one_omega():
    r = finite_difference(P(0.2, 0.2, 0.3, 0.3), "omega_d", 1e-5)
    assert r.fd_xs == pytest.approx(0.0, abs=1e-9)
    assert r.fd_eps == pytest.approx(-0.5, abs=1e-9)


# --- K = 3 example point -----------------------------------------------------

def test_k_three_point_matches_fd():
    p = P(0.1, 0.3, 0.3, 0.1)
    for name in ("omega_d", "alpha", "beta"):
        r = finite_difference(p, name, 1e-5)
        assert r.rel_gap_xs <= 1e-4, name
    r = finite_difference(p, "K", 1e-4)
    # at K = 3 the original and corrected forms coincide
    assert r.rel_gap_xs <= 1e-3
    assert r.analytic_xs == pytest.approx(r.corrected_xs, rel=1e-12)


def test_dxs_dk_negative_for_k_three():
    p, w = wall(0.2, 0.3, 0.6, 0.2)
    assert dxs_dk(p, w) < 0
    assert finite_difference(p, "K").rel_gap_xs <= 1e-3


def test_dxs_dk_sign_for_large_k():
    p, w = wall(0.1, 0.25, 0.5, 0.1)
    assert beta_regime(p) == "upper"
    assert dxs_dk(p, w, "corrected") <= 0
    assert finite_difference(p, "K").fd_xs <= 0


def test_dxs_dk_lower_regime_condition():
    p, w = wall(0.1, 0.1, 0.3, 0.1)
    assert beta_regime(p) == "lower"
    assert dxs_dk_condition(p, w)
    assert dxs_dk(p, w, "corrected") <= 0
    assert finite_difference(p, "K").fd_xs <= 0


def test_dk_rejects_k_one():
    p, w = wall(0.2, 0.2, 0.3, 0.3)
    with pytest.raises(SensitivityError):
        dxs_dk(p, w)
    with pytest.raises(SensitivityError):
        deps_dk(p, w)


def test_rejects_c_zero():
    # beta = 1/(K+1) makes C = 0
    p, w = wall(0.1, 0.25, 0.3, 0.1)
    with pytest.raises(SensitivityError, match="C = 0"):
        dxs_dbeta(p, w)


# --- FD agreement over both regimes -------------------------------------------

@pytest.mark.parametrize("regime", ["upper", "lower"])
def test_fd_agreement(regime, upper_points, lower_points):
    pts = upper_points if regime == "upper" else lower_points
    assert len(pts) >= 10
    for p, w, reports in pts:
        for name, r in reports.items():
            assert r.rel_gap_xs <= 1e-3 or name == "K", (p, name, r)
            assert r.rel_gap_eps <= 1e-3 or name == "alpha", (p, name, r)
        # repaired forms match everywhere
        assert reports["K"].rel_gap_corrected_xs <= 1e-3
        assert reports["alpha"].rel_gap_corrected_eps <= 1e-3


def test_original_dxs_dk_only_matches_at_k_three(upper_points):
    gaps = [(p.K, r["K"].rel_gap_xs) for p, _, r in upper_points]
    far = [g for k, g in gaps if abs(k - 3) > 0.5]
    assert far and min(far) > 1e-2
    p, w = wall(0.2, 0.3, 0.6, 0.2)
    assert dxs_dk(p, w) == pytest.approx(dxs_dk(p, w, "corrected"), rel=1e-12)


def test_deps_dalpha_sign_and_ratio(upper_points, lower_points):
    for p, w, r in upper_points + lower_points:
        rep = r["alpha"]
        assert math.copysign(1, rep.analytic_eps) == math.copysign(1, rep.fd_eps)
        # off by exactly one factor of (K+1)
        assert rep.fd_eps / rep.analytic_eps == pytest.approx(p.K + 1, rel=1e-6)
        assert rep.flags


# --- identities and sign claims ----------------------------------------------

def test_identity_bd(upper_points, lower_points):
    for p, w, _ in upper_points + lower_points:
        lhs, rhs = identity_bd(p, w.eps)
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_identity_ac_needs_k_squared_factor(upper_points):
    for p, w, _ in upper_points:
        lhs, original, derived = identity_ac(p, w.eps)
        assert lhs == pytest.approx(derived, abs=1e-12)
    # K = 1 is the only place the (K - 1) form agrees, since both factors vanish
    p, w = wall(0.2, 0.2, 0.3, 0.3)
    lhs, original, derived = identity_ac(p, w.eps)
    assert lhs == pytest.approx(original, abs=1e-12)


def test_sign_claims(upper_points, lower_points):
    for p, w, _ in upper_points + lower_points:
        assert dxs_dalpha(p, w) <= 0
        assert dxs_dbeta(p, w) >= 0
        assert deps_dbeta(p, w) <= 0
    for p, w, _ in upper_points:
        assert deps_domega(p, w) >= 0
        if p.K >= 3:
            assert deps_dk(p, w) >= 0
    for p, w, _ in lower_points:
        assert deps_domega(p, w) <= 0


def test_dxs_domega_sign_prediction(upper_points, lower_points):
    for p, w, r in upper_points + lower_points:
        s = dxs_domega_sign_prediction(p, w)
        assert s == (1 if r["omega_d"].fd_xs > 0 else -1)


# --- finite_difference plumbing ----------------------------------------------

def test_fd_rejects_regime_crossing():
    # beta one FD step above 1/(K+1)
    p = P(0.1, 0.25 + 5e-6, 0.3, 0.1)
    with pytest.raises(RegimeCrossed):
        finite_difference(p, "beta", 1e-5)


def test_fd_rejects_unknown_parameter():
    with pytest.raises(ValueError):
        finite_difference(P(0.1, 0.3, 0.3, 0.1), "gamma")


def test_perturb_k_keeps_omega_d():
    p = P(0.1, 0.3, 0.3, 0.1)
    q = perturb(p, "K", 5.0)
    assert q.omega_d == p.omega_d and q.K == pytest.approx(5.0)
    r = perturb(p, "omega_d", 0.2)
    assert r.K == pytest.approx(p.K) and r.omega_d == 0.2


def test_sensitivity_reports_skip_k_at_one():
    names = [r.parameter for r in sensitivity_reports(P(0.2, 0.2, 0.3, 0.3))]
    assert names == ["omega_d", "alpha", "beta"]


# --- classification and scans ------------------------------------------------

@pytest.mark.parametrize("values,label", [
    ([1, 2, 3], "increasing"), ([3, 2, 1], "decreasing"), ([1, 3, 2], "peak"),
    ([3, 1, 2], "valley"), ([1, 2, 1, 2], "none"), ([1, 1, 2], "none"), ([1, 2], "none"),
    ([1, math.nan, 2, 3], "increasing"),
])
def test_classify(values, label):
    assert classify(values) == label


def test_classify_tolerance():
    assert classify([0, 1e-10, 1]) == "none"
    assert classify([0, 2e-9, 1]) == "increasing"


def test_scan_marks_missing_walls():
    # alpha past about 0.2 pushes the wall out through x = 0
    pts = monotonicity_scan(P(0.1, 0.1, 0.3, 0.1), "alpha", (0.0, 0.6), 30)
    assert any(not q.exists for q in pts) and any(q.exists for q in pts)
    assert all(math.isnan(q.x_s) for q in pts if not q.exists)


ROW_ONE = (0.2, 0.3, 0.25, 0.05)
ROW_TWO = (0.1, 0.1, 0.3, 0.1)


@pytest.mark.parametrize("base,name,span,x_s,height", [
    (ROW_ONE, "omega_d", (0.02, 0.11), "decreasing", "increasing"),
    (ROW_ONE, "K", (3.0, 10.0), "decreasing", "increasing"),
    (ROW_ONE, "alpha", (0.02, 0.29), "decreasing", "increasing"),
    (ROW_ONE, "beta", (1 / 6 + 1e-3, 0.5), "increasing", "decreasing"),
    (ROW_TWO, "omega_d", (0.02, 0.5), "decreasing", "decreasing"),
    (ROW_TWO, "K", (3.0, 8.0), "decreasing", "increasing"),
    (ROW_TWO, "alpha", (0.0, 0.2), "decreasing", "decreasing"),
    (ROW_TWO, "beta", (0.0, 0.245), "increasing", "decreasing"),
])
def test_witness_scans(base, name, span, x_s, height):
    pts = [q for q in monotonicity_scan(P(*base), name, span, 30) if q.exists]
    assert len(pts) >= 15
    assert classify_scan(pts) == {"x_s": x_s, "height": height}


def test_height_valley_in_k():
    pts = monotonicity_scan(P(0.1, 0.1, 0.2, 0.1), "K", (1.01, 3.0), 30)
    assert all(q.exists for q in pts)
    assert classify_scan(pts)["height"] == "valley"


def test_position_peak_in_omega_d():
    pts = [q for q in monotonicity_scan(P(0.02, 0.01, 0.15, 0.1), "omega_d", (0.005, 1.0), 60)
           if q.exists]
    assert classify_scan(pts)["x_s"] == "peak"


def test_scan_point_is_plain_record():
    q = ScanPoint(0.1, 0.5, 0.3, True)
    assert (q.value, q.x_s, q.height, q.exists) == (0.1, 0.5, 0.3, True)
