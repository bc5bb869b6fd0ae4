"""Tests for the decomposition, weights, and Lyapunov diagnostics."""

import numpy as np
import pytest

from gkdvlab.errors import (
    BadHint,
    GridMismatch,
    J1TooLarge,
    OutsideTube,
    RangeError,
    TooFewStates,
    ZeroField,
)
from gkdvlab.evolve import EvolveConfig, Snapshot, evolve_adaptive, make_initial_data
from gkdvlab.grid import Field, Grid
from gkdvlab.modulation import (
    DEFAULT_B,
    ModulationState,
    build_weights,
    compose,
    decompose,
    decompose_sequence,
    functional_record,
    lyapunov,
    modulation_residuals,
    monotonicity_check,
    norms,
    rho_functionals,
    rho_values,
    tube_distance,
)
from gkdvlab.profiles import (
    EquationParams,
    LocalizedProfile,
    ProfileFamily,
    closed_form_ground_state,
)

Q7 = 7.0


@pytest.fixture(scope="module")
def fam():
    return ProfileFamily(Q7)


@pytest.fixture(scope="module")
def weights():
    return build_weights(DEFAULT_B)


def _state(grid, eps, lam=1.0, x=0.0, b=0.0, omega=0.0):
    return ModulationState(
        t=0.0, s=0.0, lam=lam, x_center=x, b=b, omega=omega,
        epsilon=Field(grid, eps), newton_residual=0.0,
    )


# -- weights -----------------------------------------------------------------


class TestWeights:
    def test_piece_values(self, weights):
        B = weights.B
        assert weights.phi(1, 0.0) == pytest.approx(1.0, abs=1e-14)
        assert weights.dphi(1, 0.0) == pytest.approx(1.0 / B, abs=1e-14)
        assert weights.phi(2, 3.0 * B) == pytest.approx(9.0, abs=1e-12)
        assert weights.phi(1, -3.0 * B) == pytest.approx(np.exp(-3.0), rel=1e-12)
        assert weights.psi(-3.0 * B) == pytest.approx(np.exp(-6.0), rel=1e-12)
        # psi is identically 1 from -B/2 on
        y = np.linspace(-0.5 * B, 5.0 * B, 64)
        assert np.all(weights.psi(y) == 1.0)

    def test_monotone(self, weights):
        B = weights.B
        y = np.linspace(-4.0 * B, 5.0 * B, 100001)
        assert np.min(weights.dphi(1, y)) > 0.0
        assert np.min(weights.dphi(2, y)) > 0.0
        assert np.min(weights.dpsi(y)) >= -1e-15
        for i in (1, 2):
            v = weights.phi(i, y)
            assert np.all(np.diff(v) > 0.0)

    def test_seam_continuity(self, weights):
        B = weights.B
        for seam in (-B, -B / 2, B / 2, 2 * B):
            lo, hi = seam - 1e-9, seam + 1e-9
            for f in (lambda z: weights.phi(1, z),
                      lambda z: weights.phi(2, z),
                      weights.psi):
                assert abs(float(f(hi)) - float(f(lo))) < 1e-7

    def test_scale_lower_bound(self):
        with pytest.raises(RangeError):
            build_weights(50.0)


# -- rho functionals ---------------------------------------------------------


class TestRho:
    def test_limits_match_frozen(self, frozen):
        r1, r2, _ = rho_values(np.array([40.0]))
        assert r1[0] == pytest.approx(frozen["rho1_at_inf"], rel=1e-6)
        assert r2[0] == pytest.approx(frozen["rho2_at_inf"], rel=1e-6)

    def test_left_tail_vanishes(self):
        r1, r2, r = rho_values(np.array([-40.0]))
        assert abs(r1[0]) < 1e-12
        assert abs(r2[0]) < 1e-12
        assert abs(r[0]) < 1e-12

    def test_combination_identity(self):
        y = np.linspace(-20.0, 20.0, 401)
        r1, r2, r = rho_values(y)
        np.testing.assert_allclose(r, 4.0 * r1 + r2, atol=1e-14)

    def test_functionals_linear_combination(self):
        g = Grid(60.0, 512)
        rng = np.random.default_rng(7)
        e = rng.standard_normal(g.n) * np.exp(-(g.x / 6.0) ** 2)
        j1, j2, j = rho_functionals(_state(g, e))
        assert j == pytest.approx(4.0 * j1 + j2, abs=1e-12)

    def test_zero_eps(self):
        g = Grid(60.0, 256)
        assert rho_functionals(_state(g, np.zeros(g.n))) == (0.0, 0.0, 0.0)


# -- norms and Lyapunov functionals ------------------------------------------


class TestNorms:
    def test_matches_flat_weights_on_support(self, weights):
        # inside |y| < B/2 the weights are psi = 1, phi_1 = 1 + y/B exactly
        g = Grid(80.0, 1024)
        e = 1e-3 * np.exp(-((g.x) / 8.0) ** 2)
        rec = norms(_state(g, e), weights)
        ey = g.deriv(e)
        ref = g.integrate(ey ** 2 + e ** 2 * (1.0 + g.x / weights.B))
        assert rec.N1 == pytest.approx(ref, rel=1e-12)
        assert rec.N1_loc == pytest.approx(g.integrate(e ** 2) / weights.B, rel=1e-12)
        assert rec.N2 >= rec.N1 > 0.0

    def test_lyapunov_near_norm_for_far_bump(self, fam, weights):
        # perturbation far from the core: the nonlinear terms are negligible
        g = Grid(60.0, 1024)
        e = 1e-3 * np.exp(-(((g.x) - 20.0) / 4.0) ** 2)
        ms = _state(g, e)
        qb = fam.qb_at(0.0, 0.0, g.x)
        lp = LocalizedProfile(omega=0.0, q=Q7, b=0.0, grid=g, values=qb)
        rec = norms(ms, weights)
        f11, jc = lyapunov(ms, fam.ground_states[0], lp, weights, 1, 1)
        assert f11 == pytest.approx(rec.N1, rel=0.05)
        j1 = rho_functionals(ms)[0]
        assert jc == pytest.approx((1.0 - j1) ** -2 - 1.0, abs=1e-14)

    def test_lyapunov_index_validation(self, fam, weights):
        g = Grid(60.0, 256)
        ms = _state(g, np.zeros(g.n))
        qb = fam.qb_at(0.0, 0.0, g.x)
        lp = LocalizedProfile(omega=0.0, q=Q7, b=0.0, grid=g, values=qb)
        with pytest.raises(RangeError):
            lyapunov(ms, fam.ground_states[0], lp, weights, 3, 1)

    def test_lyapunov_grid_mismatch(self, fam, weights):
        g = Grid(60.0, 256)
        other = Grid(60.0, 512)
        ms = _state(g, np.zeros(g.n))
        qb = fam.qb_at(0.0, 0.0, other.x)
        lp = LocalizedProfile(omega=0.0, q=Q7, b=0.0, grid=other, values=qb)
        with pytest.raises(GridMismatch):
            lyapunov(ms, fam.ground_states[0], lp, weights, 1, 1)

    def test_j1_too_large(self, fam, weights):
        g = Grid(60.0, 512)
        r1 = rho_values(g.x)[0]
        # align eps with rho_1 and scale until J1 passes 1/2
        e = r1 * np.exp(-np.abs(g.x) / 20.0)
        e *= 0.6 / g.inner(e, r1)
        ms = _state(g, e)
        qb = fam.qb_at(0.0, 0.0, g.x)
        lp = LocalizedProfile(omega=0.0, q=Q7, b=0.0, grid=g, values=qb)
        with pytest.raises(J1TooLarge):
            lyapunov(ms, fam.ground_states[0], lp, weights, 1, 1)

    def test_record_fields(self, fam, weights):
        g = Grid(60.0, 512)
        e = 1e-4 * np.exp(-(((g.x) - 15.0) / 3.0) ** 2)
        rec = functional_record(_state(g, e), EquationParams(0.0, Q7), weights)
        for name in ("N1", "N2", "N1_loc", "N2_loc", "J1", "J2", "J",
                     "F_11", "F_12", "F_21", "F_22"):
            assert np.isfinite(getattr(rec, name))
        assert set(rec.Jcal) == {(1, 1), (1, 2), (2, 1), (2, 2)}


# -- tube distance -----------------------------------------------------------


class TestTubeDistance:
    def test_on_family(self):
        g = Grid(60.0, 512)
        u = Field(g, closed_form_ground_state(g.x))
        rep = tube_distance(u, EquationParams(0.0, Q7))
        assert rep.distance < 1e-6
        assert rep.lambda0 == pytest.approx(1.0, abs=1e-3)
        assert rep.x0 == pytest.approx(0.0, abs=1e-3)

    def test_rescaled_member(self):
        g = Grid(60.0, 512)
        u = Field(g, closed_form_ground_state(g.x / 2.0) / np.sqrt(2.0))
        rep = tube_distance(u, EquationParams(0.0, Q7))
        assert rep.distance < 1e-6
        assert rep.lambda0 == pytest.approx(2.0, abs=1e-2)

    def test_amplitude_offset(self, frozen):
        # distance of a*Q is |a-1| ||Q|| (the optimum stays at lambda = 1)
        g = Grid(60.0, 512)
        u = Field(g, 1.2 * closed_form_ground_state(g.x))
        rep = tube_distance(u, EquationParams(0.0, Q7))
        assert rep.distance == pytest.approx(
            0.2 * np.sqrt(frozen["mass_q"]), rel=0.05)

    def test_zero_field(self):
        g = Grid(60.0, 256)
        with pytest.raises(ZeroField):
            tube_distance(Field(g, np.zeros(g.n)), EquationParams(0.0, Q7))


# -- decomposition -----------------------------------------------------------


def _profile_snapshot(fam, g, lam, x0, b, gamma):
    m = (Q7 - 5.0) / 2.0
    om = gamma * lam ** (-m)
    z = (g.x - x0) / lam
    u = fam.qb_at(om, b, z) / np.sqrt(lam)
    return Snapshot(t=0.0, lambda_frame=1.0, x_frame=0.0,
                    gamma_effective=gamma, u=Field(g, u)), om


class TestDecompose:
    def test_exact_profile_recovery(self, fam):
        g = Grid(60.0, 1024)
        snap, om = _profile_snapshot(fam, g, 0.5, 3.0, 0.02, 1e-3)
        ms = decompose(snap, EquationParams(1e-3, Q7))
        assert ms.converged
        assert ms.lam == pytest.approx(0.5, abs=1e-8)
        assert ms.x_center == pytest.approx(3.0, abs=1e-8)
        assert ms.b == pytest.approx(0.02, abs=1e-8)
        assert ms.omega == pytest.approx(om, rel=1e-8)
        assert ms.epsilon.norm2() < 1e-8

    def test_orthogonalized_bump_recovery(self, fam):
        # add a perturbation lying in the orthogonal complement of the
        # fitted directions; the parameters must not move
        g = Grid(60.0, 1024)
        lam, x0, b = 0.8, -2.0, 0.05
        z = (g.x - x0) / lam
        gz = Grid(60.0 / lam, 1024)
        raw = 1e-3 * np.exp(-((gz.x - 4.0) / 2.0) ** 2)
        T = [fam.q_at(0.0, gz.x),
             fam.lam_q_at(0.0, gz.x),
             gz.x * fam.lam_q_at(0.0, gz.x)]
        G = np.array([[gz.inner(a, c) for c in T] for a in T])
        rhs = np.array([gz.inner(raw, c) for c in T])
        coef = np.linalg.solve(G, rhs)
        eps_t = raw - sum(c * t for c, t in zip(coef, T))
        u = (fam.qb_at(0.0, b, z) + gz.resample(eps_t, z)) / np.sqrt(lam)
        snap = Snapshot(t=0.0, lambda_frame=1.0, x_frame=0.0,
                        gamma_effective=0.0, u=Field(g, u))
        ms = decompose(snap, EquationParams(0.0, Q7))
        assert ms.converged
        assert ms.lam == pytest.approx(lam, abs=1e-8)
        assert ms.x_center == pytest.approx(x0, abs=1e-8)
        assert ms.b == pytest.approx(b, abs=1e-8)
        # compare eps inside the region actually covered by the window
        inner = np.abs(ms.epsilon.grid.x) <= 30.0
        assert np.max(np.abs(ms.epsilon.values[inner] - eps_t[inner])) < 1e-6

    def test_outside_tube(self):
        g = Grid(60.0, 512)
        u = Field(g, 0.5 * closed_form_ground_state(g.x))
        snap = Snapshot(t=0.0, lambda_frame=1.0, x_frame=0.0,
                        gamma_effective=0.0, u=u)
        with pytest.raises(OutsideTube):
            decompose(snap, EquationParams(0.0, Q7))

    def test_zero_field(self):
        g = Grid(60.0, 256)
        snap = Snapshot(t=0.0, lambda_frame=1.0, x_frame=0.0,
                        gamma_effective=0.0, u=Field(g, np.zeros(g.n)))
        with pytest.raises(ZeroField):
            decompose(snap, EquationParams(0.0, Q7))

    def test_bad_hint(self, fam):
        g = Grid(60.0, 512)
        snap, _ = _profile_snapshot(fam, g, 1.0, 0.0, 0.0, 0.0)
        hint = _state(g, np.zeros(g.n), lam=-1.0)
        with pytest.raises(BadHint):
            decompose(snap, EquationParams(0.0, Q7), hint=hint)

    def test_hint_matches_cold_start(self, fam):
        g = Grid(60.0, 512)
        snap, _ = _profile_snapshot(fam, g, 0.7, 1.5, -0.02, 0.0)
        cold = decompose(snap, EquationParams(0.0, Q7))
        warm = decompose(snap, EquationParams(0.0, Q7), hint=cold)
        assert warm.lam == pytest.approx(cold.lam, abs=1e-10)
        assert warm.b == pytest.approx(cold.b, abs=1e-10)

    def test_window_frame_maps_to_lab(self, fam):
        # same window field under a contracted frame: lab parameters scale
        g = Grid(60.0, 512)
        snap, _ = _profile_snapshot(fam, g, 0.9, 1.0, 0.01, 0.0)
        framed = Snapshot(t=0.0, lambda_frame=0.25, x_frame=5.0,
                          gamma_effective=0.0, u=snap.u)
        base = decompose(snap, EquationParams(0.0, Q7))
        mapped = decompose(framed, EquationParams(0.0, Q7))
        assert mapped.lam == pytest.approx(0.25 * base.lam, rel=1e-9)
        assert mapped.x_center == pytest.approx(5.0 + 0.25 * base.x_center,
                                                rel=1e-9)

    def test_compose_inverts(self, fam):
        g = Grid(60.0, 1024)
        snap, _ = _profile_snapshot(fam, g, 0.6, -4.0, 0.03, 1e-3)
        ms = decompose(snap, EquationParams(1e-3, Q7))
        back = compose(ms, EquationParams(1e-3, Q7), g)
        assert np.max(np.abs(back.u.values - snap.u.values)) < 1e-8
        assert back.gamma_effective == pytest.approx(1e-3, rel=1e-12)

    def test_roundtrip_randomized(self, fam):
        # acceptance-style batch: parameters recovered to 1e-6 relative
        g = Grid(60.0, 512)
        rng = np.random.default_rng(20240817)
        gammas = (0.0, 1e-4, 5e-4, 1e-3)
        for case in range(50):
            lam = float(np.exp(rng.uniform(np.log(0.4), np.log(2.2))))
            x0 = float(rng.uniform(-8.0, 8.0))
            b = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.005, 0.05))
            gamma = gammas[case % 4]
            snap, om = _profile_snapshot(fam, g, lam, x0, b, gamma)
            ms = decompose(snap, EquationParams(gamma, Q7))
            assert ms.converged, case
            assert abs(ms.lam - lam) / lam < 1e-6, case
            assert abs(ms.x_center - x0) / max(1.0, abs(x0)) < 1e-6, case
            assert abs(ms.b - b) / abs(b) < 1e-6, case


# -- sequences ---------------------------------------------------------------


@pytest.fixture(scope="module")
def short_run(fam):
    params = EquationParams(1e-4, Q7)
    g = Grid(60.0, 512)
    u0 = make_initial_data("scaled", 0.05, g).field
    cfg = EvolveConfig(grid=g, dt_initial=2e-3, t_end=0.3, grad_threshold=8.0,
                       snapshot_interval=0.025, sponge_frac=0.1,
                       max_steps=100000)
    traj = evolve_adaptive(u0, params, cfg)
    states = decompose_sequence(traj, params)
    return params, traj, states


class TestSequences:
    def test_all_converged_s_increasing(self, short_run):
        _, _, states = short_run
        assert len(states) >= 10
        assert all(st.converged for st in states)
        s = np.array([st.s for st in states])
        assert np.all(np.diff(s) > 0.0)
        # focusing data: the fitted scale contracts
        assert states[-1].lam < states[0].lam

    def test_modulation_laws_hold(self, short_run, weights):
        _, _, states = short_run
        rep = modulation_residuals(states, W=weights)
        assert rep.median_scale_ratio < 5.0
        assert rep.median_param_ratio < 5.0
        assert np.mean(rep.flagged) < 0.2
        assert np.all(np.isfinite(rep.refined_lhs))
        assert np.all(rep.refined_rhs > 0.0)

    def test_too_few_states(self, short_run):
        _, _, states = short_run
        with pytest.raises(TooFewStates):
            modulation_residuals(states[:2])

    def test_monotonicity_report(self, short_run, weights):
        params, _, states = short_run
        recs = [functional_record(st, params, weights) for st in states]
        mon = monotonicity_check(states, recs)
        assert set(mon.c_fit) == {"F_11", "F_21", "F_12/lam^2", "F_22/lam^2"}
        # transient focusing stretch: only a plumbing-level bar here; the
        # strict thresholds apply to the relaxed soliton-regime run
        for v in mon.violation_fraction.values():
            assert v < 0.25
        assert 0.0 < mon.coercivity_fraction <= 1.0
        assert np.isfinite(mon.ratio_min) and np.isfinite(mon.ratio_max)

    def test_pure_profile_sequence_is_flat(self, fam):
        # states with eps = 0 have F = 0 and produce no violations
        g = Grid(60.0, 256)
        ge = Grid(60.0, 256)
        params = EquationParams(0.0, Q7)
        W = build_weights(DEFAULT_B)
        states = []
        for k in range(8):
            st = _state(ge, np.zeros(ge.n), lam=1.0 - 0.02 * k, b=0.01)
            st.s = float(k)
            states.append(st)
        recs = [functional_record(st, params, W) for st in states]
        mon = monotonicity_check(states, recs)
        assert all(v == 0.0 for v in mon.violation_fraction.values())
        assert all(c == 0.0 for c in mon.c_fit.values())
