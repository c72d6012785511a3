import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathacoustics.baseflow import BaseFlow
from pathacoustics.diagnostics import energy_density, total
from pathacoustics.errors import CFLError, ContractError
from pathacoustics.fields import Grid, l2_norm, random_bandlimited
from pathacoustics.perturbation import (
    CoefficientSet,
    PerturbationState,
    coefficient_matrix,
    eigendecompose,
    evolve,
    fluctuations_from_flow,
    flux,
    max_stable_dt,
    read_state,
    residual_ma_re,
    step,
    write_state,
)
from pathacoustics.scenarios import OscillatingUniform, TaylorGreen, UniformPlusPlaneWave


def unit_vectors(dim):
    return st.lists(st.floats(-1, 1), min_size=dim, max_size=dim).filter(lambda v: np.linalg.norm(v) > 0.1).map(
        lambda v: np.asarray(v) / np.linalg.norm(v)
    )


def plane_wave_state(grid, mode, P=1e-3, rho_bar=1.0, c=1.0):
    k = 2 * np.pi * np.asarray(mode, dtype=float) / np.asarray(grid.length)
    theta = np.tensordot(k, grid.mesh, axes=1)
    khat = (k / np.linalg.norm(k)).reshape(-1, *([1] * grid.dim))
    p = P * np.cos(theta)
    return PerturbationState.from_primitive(grid, p, p[None] * khat / (rho_bar * c), rho_bar, c), k, theta


def run_to(state, bf, T, mode):
    dt = max_stable_dt(bf, mode)
    n = int(np.ceil(T / dt))
    return evolve(state, bf, T / n, n, mode=mode, store_every=n)


class TestState:
    def test_primitive_round_trip(self, grid32, rng):
        p = rng.standard_normal(grid32.shape)
        u = rng.standard_normal((2, *grid32.shape))
        s = PerturbationState.from_primitive(grid32, p, u, 1.3, 0.7)
        assert np.allclose(s.p_prime, p, rtol=1e-14, atol=1e-15)
        assert np.allclose(s.u_prime, u, rtol=1e-14, atol=1e-15)
        assert np.allclose(s.rho_prime, p / 0.7**2, rtol=1e-14)
        assert np.allclose(s.U1.values, p / (1.3 * 0.49), rtol=1e-14)

    def test_rejects_non_finite(self, grid32):
        U = np.zeros((3, 32, 32))
        U[0, 0, 0] = np.nan
        with pytest.raises(ContractError):
            PerturbationState(grid32, U, 1.0, 1.0)

    def test_arithmetic(self, grid32, rng):
        a = PerturbationState(grid32, rng.standard_normal((3, 32, 32)), 1.0, 1.0)
        b = PerturbationState(grid32, rng.standard_normal((3, 32, 32)), 1.0, 1.0)
        assert np.allclose((a + 2.0 * b).U, a.U + 2 * b.U)

    def test_checkpoint_round_trip(self, tmp_path, grid32, rng):
        s = PerturbationState(grid32, rng.standard_normal((3, 32, 32)), 1.2, 0.9)
        write_state(s, tmp_path, t=0.25, mode="central")
        back, t, mode = read_state(tmp_path)
        assert np.array_equal(back.U, s.U)
        assert (back.rho_bar, back.c, t, mode) == (1.2, 0.9, 0.25, "central")


class TestCoefficientMatrix:
    def test_reference_example(self):
        A = coefficient_matrix((0.3, 0.0), 1.0, 1.0, (1.0, 0.0))
        assert np.array_equal(A, [[0.3, 1, 0], [1, 0.3, 0], [0, 0, 0.3]])
        assert np.allclose(np.sort(np.linalg.eigvals(A).real), [-0.7, 0.3, 1.3], atol=1e-14)

    @given(nu=unit_vectors(2))
    def test_symmetric_at_rest_with_unit_constants(self, nu):
        A = coefficient_matrix((0.0, 0.0), 1.0, 1.0, nu)
        assert np.array_equal(A, A.T)

    def test_asymmetric_when_impedance_differs(self):
        A = coefficient_matrix((0.0, 0.0), 2.0, 1.0, (1.0, 0.0))
        assert not np.allclose(A, A.T)

    def test_rejects_non_unit_direction(self):
        with pytest.raises(ContractError):
            coefficient_matrix((0.0, 0.0), 1.0, 1.0, (1.0, 1.0))

    @settings(max_examples=30)
    @given(seed=st.integers(0, 2**16), axis=st.integers(0, 1))
    def test_flux_is_matrix_product(self, seed, axis):
        rng = np.random.default_rng(seed)
        U = rng.standard_normal((3, 8, 8))
        u_bar = rng.standard_normal((2, 8, 8))
        rho_bar, c = rng.uniform(0.5, 2.0, size=2)
        coeffs = CoefficientSet.build(u_bar, rho_bar, c)
        assert np.allclose(flux(U.copy(), u_bar, rho_bar, c, axis), coeffs.apply(U, axis), rtol=1e-13, atol=1e-13)


class TestEigendecompose:
    def test_reference_example(self):
        A = coefficient_matrix((0.3, 0.0), 1.0, 1.0, (1.0, 0.0))
        R, Lam, Rinv = eigendecompose(A)
        assert np.allclose(np.diag(Lam), [-0.7, 0.3, 1.3], atol=1e-15)
        assert np.max(np.abs(R @ Lam @ Rinv - A)) < 1e-14

    def test_medium_at_rest(self):
        A = coefficient_matrix((0.0, 0.0), 1.0, 1.0, (0.6, 0.8))
        _, Lam, _ = eigendecompose(A)
        assert np.allclose(np.diag(Lam), [-1.0, 0.0, 1.0], atol=1e-15)

    @settings(max_examples=200)
    @given(
        dim=st.sampled_from([2, 3]),
        seed=st.integers(0, 2**32 - 1),
        rho_bar=st.floats(0.1, 10.0),
        c=st.floats(0.1, 10.0),
    )
    def test_reconstruction(self, dim, seed, rho_bar, c):
        rng = np.random.default_rng(seed)
        nu = rng.standard_normal(dim)
        nu /= np.linalg.norm(nu)
        u_bar = rng.uniform(-1, 1, dim)
        A = coefficient_matrix(u_bar, rho_bar, c, nu)
        R, Lam, Rinv = eigendecompose(A)
        lam = np.diag(Lam)
        un = u_bar @ nu
        assert np.all(np.diff(lam) >= 0)
        assert np.allclose(lam, [un - c, *([un] * (dim - 1)), un + c], rtol=0, atol=1e-12 * max(1.0, c))
        scale = max(1.0, np.max(np.abs(A)))
        assert np.max(np.abs(R @ Lam @ Rinv - A)) < 1e-12 * scale
        assert np.max(np.abs(R @ Rinv - np.eye(dim + 1))) < 1e-12

    def test_acoustic_pair_first_ordering(self):
        A = coefficient_matrix((0.3, 0.0), 1.0, 1.0, (1.0, 0.0))
        R, Lam, Rinv = eigendecompose(A, acoustic_first=True)
        assert np.allclose(np.diag(Lam), [-0.7, 1.3, 0.3])
        assert np.max(np.abs(R @ Lam @ Rinv - A)) < 1e-14

    def test_rejects_zero_direction(self):
        with pytest.raises(ContractError):
            eigendecompose(0.3 * np.eye(3))


class TestStep:
    def test_zero_stays_zero(self, grid32):
        bf = BaseFlow.uniform(grid32, (0.3, 0.1), 1.0)
        s = PerturbationState.zeros(grid32, 1.0, 1.0)
        for mode in ("upwind", "central"):
            out = step(s, bf, 0.0, max_stable_dt(bf, mode), mode)
            assert np.all(out.U == 0)

    @settings(max_examples=10, deadline=None)
    @given(a=st.floats(-2, 2), b=st.floats(-2, 2), seed=st.integers(0, 2**16), mode=st.sampled_from(["upwind", "central"]))
    def test_linearity(self, a, b, seed, mode):
        grid = Grid.square(16)
        rng = np.random.default_rng(seed)
        u_bar = 0.3 * TaylorGreen().velocity(grid, 0.0)
        bf = BaseFlow(grid, 1.0, np.array([0.0]), u_bar[None], 1.0, 1.0, 1.0)
        s1 = PerturbationState(grid, rng.standard_normal((3, 16, 16)), 1.0, 1.0)
        s2 = PerturbationState(grid, rng.standard_normal((3, 16, 16)), 1.0, 1.0)
        dt = max_stable_dt(bf, mode)
        lhs = step(a * s1 + b * s2, bf, 0.0, dt, mode).U
        rhs = a * step(s1, bf, 0.0, dt, mode).U + b * step(s2, bf, 0.0, dt, mode).U
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * (1 + abs(a) + abs(b))

    def test_plane_wave_dispersion(self):
        grid = Grid.square(128)
        u0 = np.array([0.3, 0.1])
        bf = BaseFlow.uniform(grid, u0, 1.0)
        s, k, theta = plane_wave_state(grid, (1, 1))
        T = 1.0
        out = run_to(s, bf, T, "central").states[-1]
        omega = u0 @ k + np.linalg.norm(k)
        assert l2_norm(out.p_prime - 1e-3 * np.cos(theta - omega * T), grid) < 1e-3 * 1e-3

    def test_phase_error_converges(self):
        errs = []
        for n in (16, 32):
            grid = Grid.square(n)
            u0 = np.array([0.3, 0.1])
            bf = BaseFlow.uniform(grid, u0, 1.0)
            s, k, theta = plane_wave_state(grid, (1, 1))
            out = run_to(s, bf, 2 * np.pi, "central").states[-1]
            omega = u0 @ k + np.linalg.norm(k)
            errs.append(l2_norm(out.p_prime - 1e-3 * np.cos(theta - omega * 2 * np.pi), grid))
        assert errs[1] < errs[0] / 8

    def test_solenoidal_data_is_convected(self):
        grid = Grid.square(128)
        u0 = np.array([0.3, 0.2])
        bf = BaseFlow.uniform(grid, u0, 1.0)
        tg = TaylorGreen(velocity_scale=1e-3)
        s = PerturbationState.from_primitive(grid, np.zeros(grid.shape), tg.velocity(grid, 0.0), 1.0, 1.0)
        T = 0.5
        out = run_to(s, bf, T, "central").states[-1]
        x, y = grid.mesh[0] - u0[0] * T, grid.mesh[1] - u0[1] * T
        exact = 1e-3 * np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)])
        assert np.max(np.abs(out.p_prime)) < 1e-10
        assert l2_norm(out.u_prime - exact, grid) < 1e-3 * 1e-3

    def test_upwind_converges_to_exact_wave(self):
        errs = []
        for n in (32, 64):
            grid = Grid.square(n)
            bf = BaseFlow.uniform(grid, (0.2, 0.0), 1.0)
            s, k, theta = plane_wave_state(grid, (1, 0))
            out = run_to(s, bf, 0.5, "upwind").states[-1]
            omega = 0.2 * k[0] + np.linalg.norm(k)
            errs.append(l2_norm(out.p_prime - 1e-3 * np.cos(theta - omega * 0.5), grid))
        assert errs[1] < 0.6 * errs[0]

    def test_cfl_violation(self, grid32):
        bf = BaseFlow.uniform(grid32, (0.3, 0.0), 1.0)
        s = PerturbationState.zeros(grid32, 1.0, 1.0)
        with pytest.raises(CFLError):
            step(s, bf, 0.0, 1.01 * max_stable_dt(bf, "central"), "central")
        step(s, bf, 0.0, 1.01 * max_stable_dt(bf, "central"), "upwind")
        with pytest.raises(CFLError):
            step(s, bf, 0.0, 1.01 * max_stable_dt(bf, "upwind"), "upwind")

    def test_rejects_unknown_mode_and_bad_dt(self, grid32):
        bf = BaseFlow.uniform(grid32, (0.0, 0.0), 1.0)
        s = PerturbationState.zeros(grid32, 1.0, 1.0)
        with pytest.raises(ContractError):
            step(s, bf, 0.0, 0.01, "lax")
        with pytest.raises(ContractError):
            step(s, bf, 0.0, 0.0, "upwind")

    def test_store_every(self, grid32):
        bf = BaseFlow.uniform(grid32, (0.0, 0.0), 1.0)
        s = PerturbationState.zeros(grid32, 1.0, 1.0)
        traj = evolve(s, bf, 0.01, 7, store_every=3)
        assert np.allclose(traj.times, [0.0, 0.03, 0.06, 0.07])
        assert traj.p_prime.shape == (4, 32, 32)


class TestFluctuations:
    def test_ma_over_re(self):
        assert residual_ma_re(TaylorGreen(mach=0.1, reynolds=1000.0)) == pytest.approx(1e-4, rel=1e-15)
        assert residual_ma_re(TaylorGreen(mach=0.0, reynolds=1000.0)) == 0.0
        assert residual_ma_re(TaylorGreen(mach=0.1)) == 0.0

    def test_plane_wave_fluctuations(self, grid32):
        prov = UniformPlusPlaneWave(u0=(0.3, 0.0), amplitude=1e-3, c=1.0)
        bf = BaseFlow.uniform(grid32, (0.3, 0.0), 1.0)
        s = fluctuations_from_flow(prov.sample(grid32, 0.0), bf)
        theta = grid32.mesh[0]
        assert np.allclose(s.p_prime, 1e-3 * np.cos(theta), atol=1e-15)
        assert np.allclose(s.u_prime[0], 1e-3 * np.cos(theta), atol=1e-15)

    def test_oscillating_flow_fluctuation_is_uniform(self, grid32):
        prov = OscillatingUniform(osc_amplitude=0.1, osc_period=1.0)
        bf = BaseFlow.uniform(grid32, (0.0, 0.0), 1.0)
        s = fluctuations_from_flow(prov.sample(grid32, 0.25), bf)
        assert np.allclose(s.u_prime[0], 0.1) and np.allclose(s.u_prime[1], 0.0)


class TestEnergyBehaviour:
    def test_upwind_never_increases_energy(self, rng):
        grid = Grid.square(32)
        u_bar = 0.3 * TaylorGreen().velocity(grid, 0.0)
        bf = BaseFlow(grid, 1.0, np.array([0.0]), u_bar[None], 1.0, 1.0, 1.0)
        U = random_bandlimited(grid, rng, kmax=6, components=3)
        traj = evolve(PerturbationState(grid, U, 1.0, 1.0), bf, max_stable_dt(bf, "upwind"), 60, mode="upwind")
        energies = np.array([total(energy_density(s).values, grid) for s in traj.states])
        assert np.all(np.diff(energies) <= 1e-14 * energies[0])
