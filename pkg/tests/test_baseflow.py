import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import pathline_average, rotation_velocity

from pathacoustics.baseflow import (
    BaseFlow,
    accumulate_forward,
    check_base_flow_properties,
    compute_base_flow,
    integrate_pathlines,
    read_base_flow,
    time_grid,
    transport_backward,
    write_base_flow,
)
from pathacoustics.errors import CFLError, ContractError, WindowError
from pathacoustics.fields import Grid, ScalarField
from pathacoustics.scenarios import OscillatingUniform, SolidRotation, TaylorGreen, UniformPlusPlaneWave

UNIT16 = Grid((16, 16), (1.0, 1.0))


def periodic_distance(a, b, length):
    d = np.asarray(a) - np.asarray(b)
    L = np.asarray(length)
    return np.abs((d + 0.5 * L) % L - 0.5 * L)


class TestTimeGrid:
    def test_includes_extra_times(self):
        nodes = time_grid(0.0, 1.0, 0.3, extra=[0.55])
        assert nodes[0] == 0.0 and nodes[-1] == 1.0
        assert np.any(np.isclose(nodes, 0.55, atol=0, rtol=0))
        assert np.all(np.diff(nodes) <= 0.3 + 1e-15)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ContractError):
            time_grid(0.0, 1.0, 0.0)

    def test_rejects_extra_outside(self):
        with pytest.raises(WindowError):
            time_grid(0.0, 1.0, 0.1, extra=[1.5])


class TestPathlines:
    def test_uniform_flow_endpoint(self, grid32):
        p = UniformPlusPlaneWave(u0=(1.0, 0.0))
        lines = integrate_pathlines(p, grid32, [[0.0, 0.0]], 0.0, 1.0, 0.1)
        assert np.max(periodic_distance(lines[0].positions[-1], [1.0, 0.0], grid32.length)) < 1e-12

    def test_solid_rotation_returns_after_one_period(self):
        grid = Grid((64, 64), (1.0, 1.0))
        p = SolidRotation(t_end=1.0)
        lines = integrate_pathlines(p, grid, [[0.7, 0.5], [0.5, 0.62]], 0.0, 1.0, 0.01)
        assert np.max(periodic_distance(lines.positions[-1], lines.positions[0], grid.length)) < 1e-6

    def test_stagnation_point_stays(self, grid32):
        lines = integrate_pathlines(TaylorGreen(), grid32, [[0.0, 0.0]], 0.0, 3.0, 0.05)
        assert np.max(periodic_distance(lines.positions[:, 0], [0.0, 0.0], grid32.length)) < 1e-10

    def test_positions_stay_in_box(self, grid32):
        p = UniformPlusPlaneWave(u0=(2.0, -1.0))
        lines = integrate_pathlines(p, grid32, [[6.0, 0.1], [-1.0, 7.0]], 0.0, 2.0, 0.1)
        assert np.all(lines.positions >= 0) and np.all(lines.positions < 2 * np.pi)

    def test_rejects_bad_step_and_window(self, grid32):
        with pytest.raises(ContractError):
            integrate_pathlines(TaylorGreen(), grid32, [[1.0, 1.0]], 0.0, 1.0, -0.1)
        with pytest.raises(WindowError):
            integrate_pathlines(SolidRotation(t_end=1.0), grid32, [[1.0, 1.0]], 0.0, 2.0, 0.1)

    def test_step_above_cfl_cap(self, grid32):
        p = UniformPlusPlaneWave(u0=(10.0, 0.0))
        with pytest.raises(CFLError):
            integrate_pathlines(p, grid32, [[1.0, 1.0]], 0.0, 1.0, 0.5)


class TestAccumulateForward:
    def test_constant_source_gives_constant(self, grid32):
        g = accumulate_forward(TaylorGreen(), lambda t: np.full(grid32.shape, 2.5), 1.0, 0.1, grid32)
        assert np.max(np.abs(g.values - 2.5)) < 1e-10

    def test_resting_fluid_returns_source(self, grid32, rng):
        f = rng.standard_normal(grid32.shape)
        g = accumulate_forward(UniformPlusPlaneWave(), lambda t: f, 1.0, 0.1, grid32)
        assert np.max(np.abs(g.values - f)) < 1e-10

    def test_time_dependent_source_at_rest(self, grid32):
        # average of sin(x) (1 + t) over [0, 2] is 2 sin(x)
        x = grid32.mesh[0]
        g = accumulate_forward(UniformPlusPlaneWave(), lambda t: np.sin(x) * (1 + t), 2.0, 0.25, grid32)
        assert np.max(np.abs(g.values - 2 * np.sin(x))) < 1e-12

    def test_symbol_source(self, grid32):
        g = accumulate_forward(UniformPlusPlaneWave(u0=(0.3, 0.0), p0=2.0), "p", 1.0, 0.1, grid32)
        assert np.max(np.abs(g.values - 2.0)) < 1e-12

    @settings(max_examples=15, deadline=None)
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**16))
    def test_linear_in_source(self, a, b, seed):
        rng = np.random.default_rng(seed)
        f1, f2 = rng.standard_normal((2, *UNIT16.shape))
        prov = SolidRotation(t_end=1.0)
        run = lambda f: accumulate_forward(prov, lambda t: f, 0.5, 0.05, UNIT16).values
        combined = run(a * f1 + b * f2)
        assert np.max(np.abs(combined - (a * run(f1) + b * run(f2)))) < 1e-11 * (1 + abs(a) + abs(b))

    def test_window_required_for_unbounded_provider(self, grid32):
        with pytest.raises(ContractError):
            accumulate_forward(TaylorGreen(), "p", None, 0.1, grid32)
        with pytest.raises(ContractError):
            accumulate_forward(TaylorGreen(), "p", -1.0, 0.1, grid32)

    def test_unknown_symbol(self, grid32):
        with pytest.raises(ContractError):
            accumulate_forward(TaylorGreen(), "u3", 1.0, 0.1, grid32)


class TestTransportBackward:
    def test_resting_fluid_keeps_values(self, grid32, rng):
        f = ScalarField(grid32, rng.standard_normal(grid32.shape))
        out = transport_backward(f, UniformPlusPlaneWave(), 1.0, 0.2, [0.0, 0.5])
        for g in out:
            assert np.max(np.abs(g.values - f.values)) < 1e-13

    def test_grid_aligned_translation_exact(self, grid64):
        # u0 dt = h, so each step is an exact shift by one cell
        h = grid64.spacing[0]
        p = UniformPlusPlaneWave(u0=(1.0, 0.0))
        f = ScalarField(grid64, np.sin(grid64.mesh[0]))
        out = transport_backward(f, p, 16 * h, h, [0.0])
        assert np.max(np.abs(out[0].values - np.sin(grid64.mesh[0] + 16 * h))) < 1e-12

    def test_unlimited_translation(self):
        grid = Grid.square(256)
        p = UniformPlusPlaneWave(u0=(1.0, 0.0))
        f = ScalarField(grid, np.sin(grid.mesh[0]))
        out = transport_backward(f, p, 1.0, 1.0 / 80, [0.0], monotone=False)
        assert np.max(np.abs(out[0].values - np.sin(grid.mesh[0] + 1.0))) < 1e-6

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**16))
    def test_limiter_preserves_bounds(self, seed):
        rng = np.random.default_rng(seed)
        f = ScalarField(UNIT16, rng.standard_normal(UNIT16.shape))
        out = transport_backward(f, SolidRotation(t_end=1.0), 1.0, 0.05, [0.0, 0.5])
        for g in out:
            assert g.values.max() <= f.values.max() + 1e-12
            assert g.values.min() >= f.values.min() - 1e-12

    def test_composition_is_pathline_average(self):
        # uniform stream: the pathline through (t, x) is x + u0 (s - t)
        grid = Grid.square(64)
        u0, w = 0.5, 1.5
        prov = UniformPlusPlaneWave(u0=(u0, 0.0), t_end=2.0)
        f = lambda t: np.cos(grid.mesh[0] - w * t)
        g = accumulate_forward(prov, f, 1.0, 0.02, grid)
        samples = [0.0, 0.5, 1.0]
        out = transport_backward(g, prov, 1.0, 0.02, samples, monotone=False)
        x = grid.mesh[0][:, 0]
        for t, field in zip(samples, out):
            # closed form of the average over s in [0, 1]
            a = x - u0 * t
            rate = u0 - w
            exact = (np.sin(a + rate) - np.sin(a)) / rate
            assert np.max(np.abs(field.values[:, 0] - exact)) < 2e-4
            assert np.max(np.ptp(field.values, axis=1)) < 1e-12


class TestComputeBaseFlow:
    def test_uniform_flow_exact(self, grid32):
        bf = compute_base_flow(UniformPlusPlaneWave(u0=(0.4, -0.2)), grid32, tau=2.0)
        # exact up to rounding in the quadrature weights
        assert np.max(np.abs(bf.u_bar[:, 0] - 0.4)) < 1e-14
        assert np.max(np.abs(bf.u_bar[:, 1] + 0.2)) < 1e-14
        assert bf.p_bar == pytest.approx(1.0, abs=1e-14)

    def test_oscillating_uniform_averages_out(self, grid32):
        prov = OscillatingUniform(u0=(0.3, 0.1), osc_amplitude=0.2, osc_period=0.5, t_end=2.0)
        bf = compute_base_flow(prov, grid32, tau=1.0)
        target = np.array([0.3, 0.1]).reshape(1, 2, 1, 1)
        assert np.max(np.abs(bf.u_bar - target)) < 1e-8

    def test_sample_times_and_constants(self, grid32):
        prov = UniformPlusPlaneWave(u0=(0.1, 0.0), c=2.0, rho0=1.5)
        bf = compute_base_flow(prov, grid32, tau=1.0, sample_times=[0.0, 0.3, 1.0])
        assert list(bf.times) == [0.0, 0.3, 1.0]
        assert bf.p_bar == pytest.approx(6.0, rel=1e-14)
        assert bf.rho_bar == pytest.approx(1.5, rel=1e-14)

    def test_rotation_interior_matches_pathline_oracle(self):
        grid = Grid((64, 64), (1.0, 1.0))
        prov = SolidRotation(t_end=1.0)
        bf = compute_base_flow(prov, grid, tau=0.5, sample_times=[0.0, 0.25])
        velocity = rotation_velocity(prov, grid)
        for k, t in enumerate(bf.times):
            for i, j in [(40, 32), (32, 16), (44, 44)]:
                exact = pathline_average(velocity, grid.mesh[:, i, j], t, 0.0, 0.5)
                assert np.max(np.abs(bf.u_bar[k][:, i, j] - exact)) < 2e-2

    def test_idempotent_on_its_own_output(self):
        grid = Grid((64, 64), (1.0, 1.0))
        prov = SolidRotation(t_end=1.0)
        bf = compute_base_flow(prov, grid, tau=0.5, sample_times=np.linspace(0.0, 0.5, 65), monotone=False)
        dt = 0.5 / 64
        again = []
        for i in range(2):
            g = accumulate_forward(prov, lambda t, i=i: bf.u_bar_at(t)[i], 0.5, dt, grid)
            again.append([s.values for s in transport_backward(g, prov, 0.5, dt, list(bf.times), monotone=False)])
        again = np.stack(again, axis=1)
        core = np.hypot(*(grid.mesh - 0.5)) < 0.15
        assert np.max(np.abs(again - bf.u_bar)[..., core]) < 1e-3

    def test_refinement_reduces_interior_error(self):
        prov = SolidRotation(t_end=1.0)
        errs = []
        for n in (16, 32, 64):
            grid = Grid((n, n), (1.0, 1.0))
            bf = compute_base_flow(prov, grid, tau=1.0, sample_times=[0.0])
            interior = np.hypot(*(grid.mesh - 0.5)) < 0.25
            errs.append(np.max(np.abs(bf.u_bar[0][:, interior])))
        assert errs[1] < errs[0] and errs[2] < 0.5 * errs[1]

    def test_step_above_cfl_cap(self, grid32):
        with pytest.raises(CFLError):
            compute_base_flow(UniformPlusPlaneWave(u0=(5.0, 0.0)), grid32, tau=1.0, dt=0.5, sample_times=[0.0, 1.0])


class TestBaseFlowObject:
    def test_linear_interpolation_in_time(self, grid32):
        u = np.stack([np.zeros((2, 32, 32)), np.ones((2, 32, 32))])
        bf = BaseFlow(grid32, 1.0, np.array([0.0, 1.0]), u, 1.0, 1.0, 1.0)
        assert np.allclose(bf.u_bar_at(0.25), 0.25)
        assert not bf.is_steady
        assert bf.max_speed() == pytest.approx(math.sqrt(2))

    def test_uniform_constructor(self, grid32):
        bf = BaseFlow.uniform(grid32, (0.3, 0.0), c=1.0)
        assert bf.is_steady
        assert np.all(bf.u_bar_at(17.0)[0] == 0.3)

    def test_round_trip(self, tmp_path):
        grid = Grid((16, 16), (1.0, 1.0))
        bf = compute_base_flow(SolidRotation(t_end=1.0), grid, tau=0.5, sample_times=[0.0, 0.5])
        write_base_flow(bf, tmp_path)
        back = read_base_flow(tmp_path)
        assert np.array_equal(back.times, bf.times)
        assert np.array_equal(back.u_bar, bf.u_bar)
        assert (back.p_bar, back.rho_bar, back.c, back.tau) == (bf.p_bar, bf.rho_bar, bf.c, bf.tau)


class TestDiagnostics:
    def test_uniform_residuals_vanish(self, grid32):
        prov = UniformPlusPlaneWave(u0=(0.4, 0.1))
        bf = compute_base_flow(prov, grid32, tau=1.0)
        rep = check_base_flow_properties(bf, prov)
        for key in ("max_div", "max_material", "max_transport", "max_grad_contraction", "rho_consistency"):
            assert rep.as_dict()[key] < 1e-12

    def test_rotation_reports_finite_values(self):
        grid = Grid((16, 16), (1.0, 1.0))
        prov = SolidRotation(t_end=1.0)
        rep = check_base_flow_properties(compute_base_flow(prov, grid, tau=0.5), prov)
        assert all(np.isfinite(v) for v in rep.as_dict().values())

    def test_never_raises_outside_window(self, grid32):
        bf = BaseFlow(grid32, 5.0, np.array([0.0, 5.0]), np.zeros((2, 2, 32, 32)), 1.0, 1.0, 1.0)
        rep = check_base_flow_properties(bf, SolidRotation(t_end=1.0))
        assert math.isnan(rep.max_transport)

    def test_transport_residual_shrinks_with_refinement(self):
        prov = TaylorGreen(t_end=1.0)
        res = []
        for n in (16, 32):
            grid = Grid.square(n)
            bf = compute_base_flow(prov, grid, tau=1.0, sample_times=np.linspace(0, 1, 17))
            res.append(check_base_flow_properties(bf, prov).max_transport)
        assert res[1] < res[0]
