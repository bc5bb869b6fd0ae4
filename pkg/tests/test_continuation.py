"""Fast paths of the experiment layer.

The long blow-up / sweep campaigns run in the acceptance suite; here we
exercise the pure functions (test bumps, local distances, embedding,
classification on synthesized traces, weak-form plumbing) and the
validation errors.
"""

import numpy as np
import pytest

import gkdvlab.continuation as C
from gkdvlab.errors import (
    GridMismatch,
    RangeError,
    SupportOverrun,
    WindowTooSmall,
)
from gkdvlab.evolve import Snapshot
from gkdvlab.grid import Field, Grid
from gkdvlab.profiles import MASS_Q, EquationParams, closed_form_ground_state


class TestTestFunction:
    def test_time_derivative_matches_fd(self):
        z = C.TestFunction(t0=1.0, x0=2.0, tau=0.4, rho=3.0)
        x = np.linspace(-0.8, 4.8, 29)
        h = 1e-5
        zt = z.parts(1.13, x)[1]
        fd = (z.parts(1.13 + h, x)[0] - z.parts(1.13 - h, x)[0]) / (2 * h)
        assert np.max(np.abs(zt - fd)) < 1e-7

    def test_space_derivatives_match_fd(self):
        z = C.TestFunction(t0=0.0, x0=-1.0, tau=1.0, rho=2.5)
        x = np.linspace(-3.4, 1.4, 57)
        h = 1e-3
        zx = z.parts(0.2, x)[2]
        fd = (z.parts(0.2, x + h)[0] - z.parts(0.2, x - h)[0]) / (2 * h)
        assert np.max(np.abs(zx - fd)) < 1e-5
        zxxx = z.parts(0.2, x)[3]
        fd3 = (z.parts(0.2, x + 2 * h)[0] - 2 * z.parts(0.2, x + h)[0]
               + 2 * z.parts(0.2, x - h)[0] - z.parts(0.2, x - 2 * h)[0]) / (
                   2 * h ** 3)
        assert np.max(np.abs(zxxx - fd3)) < 1e-2

    def test_compact_support(self):
        z = C.TestFunction(t0=0.5, x0=0.0, tau=0.25, rho=1.0)
        vals = z.parts(0.76, np.array([0.0]))  # outside in time
        assert all(np.all(v == 0.0) for v in vals)
        vals = z.parts(0.5, np.array([-1.0, 1.0, 2.0]))
        assert all(np.all(v == 0.0) for v in vals)

    def test_rejects_bad_widths(self):
        with pytest.raises(RangeError):
            C.TestFunction(t0=0.0, x0=0.0, tau=-1.0, rho=1.0)
        with pytest.raises(RangeError):
            C.TestFunction(t0=0.0, x0=0.0, tau=1.0, rho=0.0)


class TestLocalDistance:
    def test_zero_for_identical(self):
        g = Grid(80.0, 1024)
        u = Field(g, closed_form_ground_state(g.x))
        assert C.local_l2_distance(u, u, 20.0) == 0.0

    def test_far_soliton_counts_fully(self):
        # Q(x-30) lives outside |x|<20, so the distance is just ||Q||
        g = Grid(100.0, 2048)
        a = Field(g, closed_form_ground_state(g.x))
        bq = Field(g, closed_form_ground_state(g.x - 30.0))
        d = C.local_l2_distance(a, bq, 20.0)
        assert abs(d - np.sqrt(MASS_Q)) < 1e-6

    def test_restriction_excludes_outside(self):
        g = Grid(100.0, 2048)
        a = Field(g, np.zeros(g.n))
        vals = np.where(np.abs(g.x) >= 25.0, 1.0, 0.0)
        assert C.local_l2_distance(a, Field(g, vals), 20.0) == 0.0

    def test_validation(self):
        g = Grid(100.0, 2048)
        u = Field(g, np.zeros(g.n))
        with pytest.raises(GridMismatch):
            C.local_l2_distance(u, Field(Grid(100.0, 1024), np.zeros(1024)),
                                10.0)
        with pytest.raises(WindowTooSmall):
            C.local_l2_distance(u, u, 60.0)
        with pytest.raises(RangeError):
            C.local_l2_distance(u, u, -1.0)


class TestEmbed:
    def test_values_and_mass_preserved(self):
        gw = Grid(60.0, 512)
        gl = Grid(100.0, 4096)
        u = Field(gw, closed_form_ground_state(gw.x))
        emb = C.embed_field(u, gl)
        assert abs(emb.values[gl.n // 2] - 3.0 ** 0.25) < 1e-12
        assert abs(gl.integrate(emb.values ** 2) - MASS_Q) < 1e-8

    def test_outside_source_box_is_zero(self):
        gw = Grid(60.0, 512)
        gl = Grid(200.0, 2048)
        u = Field(gw, np.ones(gw.n))
        emb = C.embed_field(u, gl)
        assert np.all(emb.values[np.abs(gl.x) > 30.0] == 0.0)


class TestUExt:
    def _linear_uext(self):
        g = Grid(20.0, 64)
        ts = np.array([0.0, 1.0, 2.0])
        fields = [Field(g, np.full(g.n, t)) for t in ts]
        return C.UExt(ts=ts, fields=fields, grid=g, T_fit=1.5, t_cut=1.0)

    def test_interpolates_linearly(self):
        ue = self._linear_uext()
        got = ue.at(0.25)
        assert np.allclose(got.values, 0.25)
        assert np.allclose(ue.at(2.0).values, 2.0)

    def test_none_outside_range(self):
        ue = self._linear_uext()
        assert ue.at(-0.5) is None
        assert ue.at(2.5) is None


class TestWeakResidual:
    def test_zero_field_gives_zero(self):
        g = Grid(40.0, 256)
        ts = np.linspace(0.0, 2.0, 21)
        ue = C.UExt(ts=ts, fields=[Field(g, np.zeros(g.n)) for _ in ts],
                    grid=g, T_fit=1.0, t_cut=0.5)
        z = C.TestFunction(t0=1.0, x0=0.0, tau=0.5, rho=5.0)
        assert C.weak_solution_residual(ue, z) == 0.0

    def test_soliton_transport_is_weak_solution(self):
        # Q(x - t) solves the flow exactly, so the residual is pure
        # quadrature error: strictly decreasing under cadence refinement
        # with a least-squares order of about 2 across the ladder
        g = Grid(60.0, 512)
        ts = np.linspace(0.0, 1.0, 161)
        fields = [Field(g, closed_form_ground_state(g.x - t)) for t in ts]
        ue = C.UExt(ts=ts, fields=fields, grid=g, T_fit=0.9, t_cut=0.5)
        z = C.TestFunction(t0=0.5, x0=0.5, tau=0.35, rho=4.0)
        strides = np.array([16, 8, 4, 2, 1])
        rs = np.array([C.weak_solution_residual(ue, z, stride=s)
                       for s in strides])
        assert np.all(rs[:-1] > rs[1:])
        assert rs[-1] < 2e-4
        order = np.polyfit(np.log(strides), np.log(rs), 1)[0]
        assert 1.6 <= order <= 2.5

    def test_support_overrun(self):
        g = Grid(40.0, 256)
        ts = np.linspace(0.0, 1.0, 11)
        ue = C.UExt(ts=ts, fields=[Field(g, np.zeros(g.n)) for _ in ts],
                    grid=g, T_fit=0.8, t_cut=0.4)
        with pytest.raises(SupportOverrun):
            C.weak_solution_residual(
                ue, C.TestFunction(t0=0.9, x0=0.0, tau=0.3, rho=5.0))
        with pytest.raises(SupportOverrun):
            C.weak_solution_residual(
                ue, C.TestFunction(t0=0.5, x0=18.0, tau=0.2, rho=5.0))


def _mock_traj(snaps):
    class T:
        snapshots = snaps

    return T


def _q_snapshot(g, t, lam, x0=0.0, gamma=0.0):
    vals = closed_form_ground_state((g.x - x0) / lam) / np.sqrt(lam)
    return Snapshot(t, 1.0, 0.0, gamma, Field(g, vals))


class TestClassify:
    def setup_method(self):
        self.g = Grid(60.0, 512)

    def test_exit_on_far_field(self):
        snaps = [Snapshot(float(t), 1.0, 0.0, 0.0,
                          Field(self.g,
                                0.6 * closed_form_ground_state(self.g.x)))
                 for t in range(3)]
        got = C.classify_regime(_mock_traj(snaps), EquationParams(0.0, 7.0))
        assert got == "Exit"

    def test_blowup_on_contracting_trace(self):
        lams = np.linspace(1.0, 0.1, 24)
        snaps = [_q_snapshot(self.g, 0.2 * i, la)
                 for i, la in enumerate(lams)]
        got = C.classify_regime(_mock_traj(snaps), EquationParams(0.0, 7.0))
        assert got == "Blowup"

    def test_soliton_on_flat_trace(self):
        snaps = [_q_snapshot(self.g, 0.3 * i, 0.8, gamma=1e-5)
                 for i in range(10)]
        got = C.classify_regime(_mock_traj(snaps), EquationParams(1e-5, 7.0))
        assert got == "Soliton"

    def test_blowdown_on_quarter_power_growth(self):
        tvals = np.linspace(1.0, 16.0, 25)
        snaps = [_q_snapshot(self.g, t, t ** 0.25, gamma=1e-5)
                 for t in tvals]
        got = C.classify_regime(_mock_traj(snaps), EquationParams(1e-5, 7.0))
        assert got == "BlowDown"

    def test_undecided_on_wrong_growth(self):
        tvals = np.linspace(1.0, 9.0, 21)
        snaps = [_q_snapshot(self.g, t, t ** 0.6, gamma=1e-5)
                 for t in tvals]
        got = C.classify_regime(_mock_traj(snaps), EquationParams(1e-5, 7.0))
        assert got == "Undecided"


class TestSweepValidation:
    def test_saturated_needs_positive_gamma(self):
        g = Grid(60.0, 512)
        u0 = Field(g, 1.05 * closed_form_ground_state(g.x))
        with pytest.raises(RangeError):
            C.run_saturated_case(u0, 0.0, C.CaseConfig(window_grid=g))

    def test_sweep_needs_a_ladder(self):
        g = Grid(60.0, 512)
        u0 = Field(g, 1.05 * closed_form_ground_state(g.x))
        with pytest.raises(RangeError):
            C.gamma_sweep(u0, [1e-4], C.CaseConfig(window_grid=g))
