"""Tests for cost evaluation and small-period cost asymptotics."""

import json
from importlib import resources

import numpy as np
import pytest

from bbpc.cost_analysis import (
    CostReport,
    _simpson_uniform,
    cbar_grid,
    cbar_polynomial,
    cost_exact,
    cost_report_from_json,
    cost_report_to_json,
    estimate_J2,
    estimate_J4,
    leading_coefficient_cstar,
)
from bbpc.fliess import average_four_level
from bbpc.periodic_solver import (
    StepStats,
    Trajectory,
    TwoLevelFamily,
    initial_state_expansion,
    integrate,
    predict_x0,
    shoot,
)
from bbpc.reactor_model import HYDROLYSIS_BOUNDS
from bbpc.schedule import corollary_schedule_N2, corollary_schedule_N4

from bbpc.lie_calculus import constant_field

from conftest import linear_system, random_quadratic_field, vertex_levels


def _reference():
    text = resources.files("bbpc").joinpath("data/reference_values.json").read_text()
    return json.loads(text)


def _fake_trajectory(schedule, times, first_coord):
    times = np.asarray(times, dtype=float)
    states = np.column_stack([first_coord(times), np.zeros_like(times)])
    return Trajectory(times=times, states=states, schedule=schedule,
                      step_stats=StepStats(n_steps=len(times) - 1, max_local_error=0.0))


class TestCostExact:
    def test_exact_on_cubic_integrand(self):
        # Simpson and the 3/8 tail are both exact through cubics, so the
        # window quadrature reproduces the polynomial average to rounding
        s = corollary_schedule_N2((1.0, 0.0), 1.0)
        t1 = np.linspace(0.0, 0.5, 5)       # 4 intervals: plain Simpson
        t2 = np.linspace(0.5, 1.0, 6)       # 5 intervals: Simpson + 3/8 tail
        times = np.concatenate([t1, t2[1:]])
        poly = lambda t: 2.0 - 3.0 * t + 4.0 * t**2 - 5.0 * t**3
        traj = _fake_trajectory(s, times, poly)
        exact_avg = 2.0 - 3.0 / 2.0 + 4.0 / 3.0 - 5.0 / 4.0
        assert cost_exact(traj) == pytest.approx(exact_avg, abs=1e-14)

    def test_second_coordinate_selectable(self):
        s = corollary_schedule_N2((1.0, 0.0), 1.0)
        times = np.linspace(0.0, 1.0, 9)
        states = np.column_stack([np.zeros_like(times), np.full_like(times, 0.25)])
        traj = Trajectory(times=times, states=states, schedule=s,
                          step_stats=StepStats(n_steps=8, max_local_error=0.0))
        assert cost_exact(traj, coordinate=1) == pytest.approx(0.25, abs=1e-15)

    def test_rejects_grid_misaligned_with_switches(self):
        s = corollary_schedule_N2((1.0, 0.0), 1.0)
        traj = _fake_trajectory(s, [0.0, 0.3, 0.7, 1.0], lambda t: t)
        with pytest.raises(ValueError, match="not aligned"):
            cost_exact(traj)

    def test_rejects_underresolved_window(self):
        s = corollary_schedule_N2((1.0, 0.0), 1.0)
        traj = _fake_trajectory(s, [0.0, 0.5, 0.75, 1.0], lambda t: t)
        with pytest.raises(ValueError, match="at least 3"):
            cost_exact(traj)

    def test_simpson_rejects_single_interval(self):
        with pytest.raises(ValueError, match="two intervals"):
            _simpson_uniform(np.array([1.0, 2.0]), 0.5)

    def test_cost_converges_under_step_refinement(self, cstr, bounds):
        s = corollary_schedule_N2((bounds.u1_max, bounds.u2_max), 1.0, box=bounds.as_box())
        x0 = np.array([-0.4, -0.015])
        coarse = cost_exact(integrate(cstr, s, x0, h_target=1e-3))
        fine = cost_exact(integrate(cstr, s, x0, h_target=5e-4))
        assert abs(coarse - fine) <= 1e-8


@pytest.fixture(scope="module")
def two_window_ladder(cstr, bounds):
    """Solved two-window orbits with exact and estimated costs, tau 0.1 to 1."""
    level = (bounds.u1_max, bounds.u2_max)
    family = TwoLevelFamily(cstr, level)
    exp = initial_state_expansion(cstr, family)
    rows = []
    for tau in (0.1, 0.2, 0.3, 0.4, 0.5, 1.0):
        s = corollary_schedule_N2(level, tau, box=bounds.as_box())
        x0 = shoot(cstr, s, predict_x0(exp, tau)).x0
        J = cost_exact(integrate(cstr, s, x0))
        est = estimate_J2(cstr, x0, tau, level)
        rows.append((tau, J, est))
    return rows


class TestTwoWindowEstimate:
    def test_matches_independent_assembly(self, cstr, bounds):
        # rebuild the truncated formula from finite differences only
        level = (bounds.u1_max, bounds.u2_max)
        x0 = np.array([-0.31, -0.012])
        tau = 0.7
        f0 = cstr.drift.func
        g = level[0] * np.asarray(cstr.control_fields[0].func(x0)) + level[1] * np.asarray(
            cstr.control_fields[1].func(x0)
        )
        eps = 1e-6
        jac = np.column_stack([
            (np.asarray(f0(x0 + eps * e)) - np.asarray(f0(x0 - eps * e))) / (2 * eps)
            for e in np.eye(2)
        ])
        expected = (x0 + tau / 4.0 * g + tau**2 / 24.0 * jac @ np.asarray(f0(x0)))[0]
        assert estimate_J2(cstr, x0, tau, level) == pytest.approx(expected, abs=1e-7)

    def test_frozen_values_at_fixed_state(self, cstr, bounds):
        level = (bounds.u1_max, bounds.u2_max)
        x0 = np.array([-0.2, -0.01])
        assert estimate_J2(cstr, x0, 0.5, level) == pytest.approx(
            0.01268000200894958, rel=1e-13
        )
        assert estimate_J2(cstr, x0, 1.0, level) == pytest.approx(
            0.20122000803579834, rel=1e-13
        )

    def test_cost_negative_on_small_periods(self, two_window_ladder):
        for tau, J, _ in two_window_ladder:
            assert J < 0.0, f"tau={tau}"

    def test_defect_scales_as_period_cubed(self, two_window_ladder):
        # regression band for the measured truncation defect of the estimate
        for tau, J, est in two_window_ladder:
            ratio = abs(J - est) / tau**3
            assert 0.02 <= ratio <= 0.06, f"tau={tau}: {ratio}"

    @pytest.mark.xfail(
        strict=True,
        reason="published accuracy claim not reproduced: the defect reaches "
        "3e-3 by tau=0.4 and exceeds 5e-5 already at tau=0.1",
    )
    def test_published_accuracy_ladder(self, two_window_ladder):
        for tau, J, est in two_window_ladder:
            assert abs(J - est) <= 2e-3, f"tau={tau}"
            if tau <= 0.3:
                assert abs(J - est) <= 5e-5, f"tau={tau}"

    @pytest.mark.xfail(
        strict=True,
        reason="published estimate column is not reproduced by the stated "
        "formula at the published initial states; see the reference-data notes",
    )
    def test_published_estimate_column(self, cstr, bounds):
        level = (bounds.u1_max, bounds.u2_max)
        rows = _reference()["two_window_table"]["rows"]
        for key in ("0.5", "1.0"):
            row = rows[key]
            est = estimate_J2(cstr, np.array(row["x0"]), float(key), level)
            assert est == pytest.approx(row["J_est"], abs=1e-3), f"tau={key}"


class TestFourWindowEstimate:
    def test_matches_four_window_series_average(self):
        # the paired-window estimate is the printed series average in closed
        # form; under the constant-actuator model the derivation assumes,
        # they must agree to rounding on random drifts
        from bbpc.system import ControlAffineSystem

        rng = np.random.default_rng(20260819)
        for _ in range(25):
            sys_ = ControlAffineSystem(
                drift=random_quadratic_field(rng),
                control_fields=(constant_field((1.0, 0.0)), constant_field((0.0, 1.0))),
            )
            a, b, c = rng.uniform(0.3, 1.2, size=3)
            levels = ((a, b), (-a, c), (-a, -b), (a, -c))
            alpha2, alpha4 = rng.uniform(0.05, 0.45, size=2)
            tau = rng.uniform(0.2, 1.5)
            x0 = rng.normal(scale=0.3, size=2)
            s = corollary_schedule_N4(levels, alpha2, alpha4, tau)
            avg = average_four_level(sys_, s, x0)[0]
            est = estimate_J4(sys_, x0, tau, alpha2, alpha4, levels)
            assert abs(est - avg) <= 1e-10 * max(1.0, abs(est))

    def test_defect_against_generic_average_is_first_order(self, cstr, bounds):
        # the paired-window shortcut deviates from the generic second-order
        # average by a term linear in tau, so the scaled defect stabilizes
        from bbpc.fliess import average_state_expansion

        levels = vertex_levels(4)
        x0 = np.array([0.05, -0.02])
        ratios = []
        for tau in (1e-4, 1e-5, 1e-6):
            s = corollary_schedule_N4(levels, 0.3, 0.2, tau)
            gen = average_state_expansion(cstr, s, x0, order=2).value[0]
            est = estimate_J4(cstr, x0, tau, 0.3, 0.2, levels)
            ratios.append(abs(est - gen) / tau)
        assert ratios[0] > 0.01  # genuinely nonzero linear defect
        assert abs(ratios[-1] - ratios[-2]) <= 0.01 * ratios[-2]

    def test_rejects_bad_alphas_and_unpaired_levels(self, cstr):
        levels = vertex_levels(4)
        with pytest.raises(ValueError):
            estimate_J4(cstr, np.zeros(2), 1.0, 0.0, 0.25, levels)
        with pytest.raises(ValueError):
            estimate_J4(cstr, np.zeros(2), 1.0, 0.25, 0.5, levels)
        broken = (levels[0], levels[1], (levels[2][0], levels[2][1] + 0.1), levels[3])
        with pytest.raises(ValueError):
            estimate_J4(cstr, np.zeros(2), 1.0, 0.25, 0.25, broken)

    @pytest.mark.xfail(
        strict=True,
        reason="published balanced-pair cost at tau=1 is not reproduced by "
        "the truncated estimate on the predicted branch state",
    )
    def test_published_balanced_pair_example(self, cstr, bounds):
        from bbpc.periodic_solver import FourLevelFamily

        levels = vertex_levels(4)
        family = FourLevelFamily(cstr, levels, 0.25, 0.25)
        exp = initial_state_expansion(cstr, family)
        x0 = predict_x0(exp, 1.0)
        est = estimate_J4(cstr, x0, 1.0, 0.25, 0.25, levels)
        ref = _reference()["figure_costs"]["four_window"]["0.25,0.25"]
        assert est == pytest.approx(ref["J"], abs=3e-3)


class TestLeadingCoefficient:
    def test_frozen_growth_rates(self, cstr, bounds):
        family = TwoLevelFamily(cstr, (bounds.u1_max, bounds.u2_max))
        printed = leading_coefficient_cstar(cstr, family, variant="printed")
        taylor = leading_coefficient_cstar(cstr, family, variant="taylor")
        assert printed == pytest.approx(-0.14133397769001316, abs=1e-12)
        assert taylor == pytest.approx(-0.035333494422503289, abs=1e-12)
        # default variant is the printed branch prediction
        assert leading_coefficient_cstar(cstr, family) == printed

    def test_zero_for_linear_flows(self):
        # a linear flow has no quadratic response along the two-window branch,
        # so the extraction must return exactly zero (exercises the absolute
        # floor in the dual-vs-fit consistency check)
        A = np.array([[-0.7, 0.2], [0.1, -0.5]])
        sys_ = linear_system(A)
        family = TwoLevelFamily(sys_, (1.0, 0.5))
        for variant in ("printed", "taylor"):
            assert abs(leading_coefficient_cstar(sys_, family, variant=variant)) <= 1e-12

    def test_unknown_variant_rejected(self, cstr, bounds):
        family = TwoLevelFamily(cstr, (bounds.u1_max, bounds.u2_max))
        with pytest.raises(ValueError):
            leading_coefficient_cstar(cstr, family, variant="other")


class TestAlphaPolynomial:
    def test_frozen_diagonal_samples(self, cstr):
        levels = vertex_levels(4)
        assert cbar_polynomial(cstr, 0.2, 0.2, levels) == pytest.approx(
            0.056189750621679829, abs=1e-12
        )
        assert cbar_polynomial(cstr, 0.05, 0.05, levels) == pytest.approx(
            -0.10980112137030716, abs=1e-12
        )
        assert cbar_polynomial(cstr, 0.01, 0.01, levels) == pytest.approx(
            -0.13591690696943673, abs=1e-12
        )

    def test_diagonal_approaches_two_window_rate(self, cstr, bounds):
        # shrinking the paired windows recovers the two-window growth rate
        levels = vertex_levels(4)
        family = TwoLevelFamily(cstr, (bounds.u1_max, bounds.u2_max))
        cstar = leading_coefficient_cstar(cstr, family)
        vals = [cbar_polynomial(cstr, a, a, levels)
                for a in (0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002)]
        assert all(v1 > v2 for v1, v2 in zip(vals, vals[1:]))
        assert all(v > cstar for v in vals)
        assert abs(vals[-1] - cstar) < 2e-3

    def test_deterministic(self, cstr):
        levels = vertex_levels(4)
        assert cbar_polynomial(cstr, 0.17, 0.29, levels) == cbar_polynomial(
            cstr, 0.17, 0.29, levels
        )

    def test_grid_preserves_order_and_threading_is_exact(self, cstr):
        levels = vertex_levels(4)
        points = [(0.125, 0.125), (0.125, 0.375), (0.375, 0.125), (0.375, 0.375)]
        seq = cbar_grid(cstr, points, levels)
        thr = cbar_grid(cstr, points, levels, threads=2)
        assert seq == thr
        assert seq == [cbar_polynomial(cstr, a2, a4, levels) for a2, a4 in points]
        expected = [
            -0.040769015500604806,
            0.32690833234035827,
            0.052947370903465241,
            0.40270429944353342,
        ]
        for got, want in zip(seq, expected):
            assert got == pytest.approx(want, abs=1e-12)


class TestCostReport:
    def test_roundtrip_bit_exact(self):
        r = CostReport(kind="two-window", tau=0.1 + 0.2, alphas=(1.0 / 3.0,),
                       x0=(-0.2264946824043178, -0.0082407139104837736),
                       J=-0.032951814350048243, J_est=-0.066232688387825978)
        back = cost_report_from_json(cost_report_to_json(r))
        assert back == r

    def test_missing_estimate_serializes_as_null(self):
        r = CostReport(kind="three-window", tau=1.0, alphas=(0.4,),
                       x0=(0.0, 0.0), J=-0.5, J_est=None)
        text = cost_report_to_json(r)
        assert '"J_est": null' in text
        assert cost_report_from_json(text).J_est is None
