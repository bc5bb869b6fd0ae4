"""Pseudo-spectral time evolution of critical gKdV and its saturation.

Integrates u_t + (u_xx + u^5 - gamma*u|u|^(q-1))_x = 0 on a periodic
window with a 4th-order exponential integrator: the dispersive part
u_xxx is exact in Fourier space (multiplier exp(i k^3 dt)), the
nonlinear flux is evaluated pseudo-spectrally with the 2/3 dealiasing
rule, and the ETDRK4 weights are computed by contour averaging so the
small-|k| cancellations cost no accuracy.

Blow-up cannot be followed in a fixed frame, so the driver tracks it by
rescale-and-restart: whenever the window gradient norm crosses a
threshold the exact (pseudo-)scaling symmetry

    u(t, x) = lambda^(-1/2) v(s, (x - x0)/lambda),   ds/dt = lambda^(-3)

is applied with lambda chosen to renormalize ||v_y||, the window is
re-centered on the solution peak, and integration continues.  Each
restart is an exact symmetry plus one trigonometric resampling, so the
frame can contract by many decades; the accumulated (lambda_frame,
x_frame) pair maps window samples back to the lab, and the effective
saturation gamma_eff = gamma * lambda_frame^(-m) grows as the frame
contracts, which is precisely how the saturated equation eventually
arrests the focusing.

Radiation in gKdV travels left while the soliton travels right, so an
optional absorbing sponge occupies the left fraction of the window;
everything it removes is tallied so lab-frame mass stays accountable.
"""

from dataclasses import dataclass, field as dataclass_field
from functools import lru_cache

import numpy as np

from .errors import (
    DecayViolation,
    GridMismatch,
    RangeError,
    StepUnstable,
    WindowOverrun,
)
from .grid import Field, Grid
from .profiles import EquationParams, closed_form_ground_state

__all__ = [
    "EvolveConfig",
    "Snapshot",
    "Trajectory",
    "InitialData",
    "GradientBoundReport",
    "mass",
    "grad_norm",
    "energy",
    "step",
    "evolve_adaptive",
    "make_initial_data",
    "saturated_gradient_bound",
]

_BLOWUP_GUARD = 1e8  # sup |u| beyond which a step is declared unstable
_ETD_CONTOUR_POINTS = 32


# -- conserved quantities --------------------------------------------------


def mass(f):
    """M(u) = int u^2; invariant under the scaling map."""
    return f.grid.integrate(f.values * f.values)


def grad_norm(f):
    """||u_x||_L2 by spectral differentiation."""
    return f.grid.norm2(f.grid.deriv(f.values))


def energy(f, params):
    """E^gamma(u) = 1/2 int u_x^2 - 1/6 int u^6 + gamma/(q+1) int |u|^(q+1)."""
    g = f.grid
    v = f.values
    du = g.deriv(v)
    e = 0.5 * g.integrate(du * du) - g.integrate(v ** 6) / 6.0
    if params.gamma != 0.0:
        e += params.gamma / (params.q + 1.0) * g.integrate(
            np.abs(v) ** (params.q + 1.0)
        )
    return e


# -- ETDRK4 tables ----------------------------------------------------------


@lru_cache(maxsize=64)
def _etd_tables(grid, dt, dealias):
    """Exponential-integrator weights for L = i k^3 at one step size.

    The phi-function combinations are averaged over a unit circle around
    each z = dt*L_k (Kassam-Trefethen), which evaluates the removable
    singularities at small |z| without cancellation error.
    """
    k = grid.k
    L = 1j * k ** 3
    z = dt * L
    M = _ETD_CONTOUR_POINTS
    r = np.exp(2j * np.pi * (np.arange(M) + 0.5) / M)
    zr = z[:, None] + r[None, :]
    ez = np.exp(zr)
    Q = dt * np.mean((np.exp(0.5 * zr) - 1.0) / zr, axis=1)
    f1 = dt * np.mean((-4.0 - zr + ez * (4.0 - 3.0 * zr + zr ** 2)) / zr ** 3, axis=1)
    f2 = dt * np.mean((2.0 + zr + ez * (-2.0 + zr)) / zr ** 3, axis=1)
    f3 = dt * np.mean((-4.0 - 3.0 * zr - zr ** 2 + ez * (4.0 - zr)) / zr ** 3, axis=1)
    ik = 1j * k
    if dealias:
        keep = k <= (2.0 / 3.0) * k[-1]
        ik = np.where(keep, ik, 0.0)
    tables = {
        "E": np.exp(dt * L),
        "E2": np.exp(0.5 * dt * L),
        "Q": Q,
        "f1": f1,
        "f2": f2,
        "f3": f3,
        "ik": ik,
    }
    for a in tables.values():
        a.flags.writeable = False
    return tables


def _flux_hat(vhat, n, ik, gamma, q):
    """-(d/dy) of the nonlinear flux u^5 - gamma u|u|^(q-1), dealiased."""
    u = np.fft.irfft(vhat, n=n)
    w = u ** 5
    if gamma != 0.0:
        w -= gamma * u * np.abs(u) ** (q - 1.0)
    return -ik * np.fft.rfft(w)


def _step_hat(vhat, tables, n, gamma, q):
    ik = tables["ik"]
    Nv = _flux_hat(vhat, n, ik, gamma, q)
    a = tables["E2"] * vhat + tables["Q"] * Nv
    Na = _flux_hat(a, n, ik, gamma, q)
    b = tables["E2"] * vhat + tables["Q"] * Na
    Nb = _flux_hat(b, n, ik, gamma, q)
    c = tables["E2"] * a + tables["Q"] * (2.0 * Nb - Nv)
    Nc = _flux_hat(c, n, ik, gamma, q)
    return (
        tables["E"] * vhat
        + tables["f1"] * Nv
        + 2.0 * tables["f2"] * (Na + Nb)
        + tables["f3"] * Nc
    )


def _check_stable(u):
    if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > _BLOWUP_GUARD:
        raise StepUnstable("solution left the representable range")


# -- frame bookkeeping -------------------------------------------------------


@dataclass
class Snapshot:
    """Window samples plus the frame that maps them to the lab.

    u_lab(t, x) = lambda_frame^(-1/2) * u((x - x_frame)/lambda_frame) and
    gamma_effective = gamma_lab * lambda_frame^(-m).
    """

    t: float
    lambda_frame: float
    x_frame: float
    gamma_effective: float
    u: Field

    def __post_init__(self):
        if not (np.isfinite(self.lambda_frame) and self.lambda_frame > 0.0):
            raise RangeError(
                "frame scale must be positive", lambda_frame=self.lambda_frame
            )

    def lab_mass(self):
        return mass(self.u)  # int u^2 is scaling-invariant

    def lab_energy(self, params):
        eff = EquationParams(self.gamma_effective, params.q)
        return energy(self.u, eff) / self.lambda_frame ** 2


@dataclass
class Trajectory:
    """Time-ordered snapshots plus per-step diagnostics of one run."""

    params: EquationParams
    snapshots: list
    diagnostics: dict
    restarts: list
    sponge_loss: float
    excised_mass: float
    stop_reason: str

    def final(self):
        return self.snapshots[-1]


def step(snap, params, dt, dealias=True):
    """One ETDRK4 step of the current frame's equation.

    dt is window time; the lab clock advances by lambda_frame^3 * dt.
    """
    g = snap.u.grid
    tables = _etd_tables(g, float(dt), bool(dealias))
    vhat = np.fft.rfft(snap.u.values)
    vhat = _step_hat(vhat, tables, g.n, snap.gamma_effective, params.q)
    u = np.fft.irfft(vhat, n=g.n)
    _check_stable(u)
    return Snapshot(
        t=snap.t + snap.lambda_frame ** 3 * dt,
        lambda_frame=snap.lambda_frame,
        x_frame=snap.x_frame,
        gamma_effective=snap.gamma_effective,
        u=Field(g, u),
    )


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class EvolveConfig:
    """Driver knobs for evolve_adaptive.

    grad_threshold is the window-units ||u_x|| trigger for a restart;
    rescale_fraction sets the renormalized level as a fraction of the
    threshold.  sponge_frac > 0 turns on the absorbing layer on that
    left fraction of the window.  dt adaptation walks dt_initial down
    powers of two to satisfy dt <= cfl_safety * dx / max|flux'(u)|.
    """

    grid: Grid
    dt_initial: float
    t_end: float
    cfl_safety: float = 0.8
    dealias: bool = True
    grad_threshold: float = np.inf
    rescale_fraction: float = 0.5
    recenter_drift: float = 0.125  # fraction of window length
    lambda_floor: float = 1e-6
    sponge_frac: float = 0.0
    sponge_strength: float = 20.0
    window_loss_tol: float = np.inf
    snapshot_interval: float = np.inf
    adaptive_dt: bool = True
    max_retries: int = 4
    max_steps: int = 5_000_000
    diag_stride: int = 1
    snapshot_stride: int = 0  # 0 = off; else a snapshot every this many steps

    def __post_init__(self):
        if not (self.dt_initial > 0.0 and np.isfinite(self.dt_initial)):
            raise RangeError("dt_initial must be positive", dt=self.dt_initial)
        if not (0.0 < self.cfl_safety < 1.0):
            raise RangeError("cfl_safety must lie in (0,1)", cfl=self.cfl_safety)
        if self.t_end <= 0.0:
            raise RangeError("t_end must be positive", t_end=self.t_end)
        if not (0.0 <= self.sponge_frac < 0.5):
            raise RangeError("sponge_frac must lie in [0, 0.5)")
        if not (0.0 < self.rescale_fraction < 1.0):
            raise RangeError("rescale_fraction must lie in (0,1)")
        if self.diag_stride < 1:
            raise RangeError("diag_stride must be >= 1")
        if self.snapshot_stride < 0:
            raise RangeError("snapshot_stride must be >= 0")


def _sponge_profile(grid, frac, strength):
    if frac == 0.0:
        return None
    s = (grid.x - grid.x[0]) / (frac * grid.length)
    ramp = np.clip(1.0 - s, 0.0, 1.0)
    return strength * ramp * ramp


def _peak_position(grid, v):
    """Parabolic refinement of argmax |v| (periodic neighbors)."""
    a = np.abs(v)
    j = int(np.argmax(a))
    ym, y0, yp = a[j - 1], a[j], a[(j + 1) % grid.n]
    den = ym - 2.0 * y0 + yp
    off = 0.0 if den == 0.0 else 0.5 * (ym - yp) / den
    return grid.x[j] + np.clip(off, -0.5, 0.5) * grid.dx


def _cfl_dt(cfg, grid, v, gamma, q):
    speed = np.max(np.abs(5.0 * v ** 4 - q * gamma * np.abs(v) ** (q - 1.0)))
    target = cfg.cfl_safety * grid.dx / max(float(speed), 1e-12)
    dt = cfg.dt_initial
    while dt > target:
        dt *= 0.5
    return dt


def _spectral_weights(grid):
    """Parseval weights: integrals of v^2 and v_y^2 straight from rfft(v)."""
    w = np.full(grid.n // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    w *= grid.dx / grid.n
    wk = w * grid.k ** 2
    wk[-1] = 0.0  # Nyquist zeroed for odd-order derivatives
    return w, wk


def evolve_adaptive(u0, params, cfg, start=None):
    """Integrate to t_end (lab time) with rescale-and-restart tracking.

    Returns the Trajectory; stops early when lambda_frame under-runs
    cfg.lambda_floor (stop_reason "lambda_floor").  Raises StepUnstable
    when halving dt max_retries times does not stabilize a step, and
    WindowOverrun when accounted window losses exceed window_loss_tol.

    Pass a Snapshot as start to resume a run: its frame (t, lambda,
    x_frame) seeds the state and u0 is ignored in favor of start.u.
    """
    g = cfg.grid
    m = params.m
    if start is not None:
        if start.u.grid != g:
            raise GridMismatch("resume snapshot grid differs from config grid")
        v = start.u.values.copy()
        lam = start.lambda_frame
        x_frame = start.x_frame
        t = start.t
        u0 = start.u
    else:
        if u0.grid != g:
            raise GridMismatch("initial data grid differs from config grid")
        v = u0.values.copy()
        lam = 1.0
        x_frame = 0.0
        t = 0.0
    gamma_eff = params.gamma * lam ** (-m) if params.gamma != 0.0 else 0.0

    if np.isfinite(cfg.grad_threshold):
        g0 = grad_norm(u0)
        if cfg.grad_threshold <= g0:
            raise RangeError(
                "grad_threshold must exceed the initial gradient norm",
                threshold=cfg.grad_threshold,
                initial=g0,
            )

    sponge = _sponge_profile(g, cfg.sponge_frac, cfg.sponge_strength)
    dampers = {}
    loss = 0.0
    excised = 0.0
    diag = {
        key: []
        for key in (
            "t",
            "mass",
            "energy",
            "grad_norm",
            "lambda_frame",
            "x_frame",
            "gamma_eff",
            "sponge_loss",
        )
    }
    restarts = []
    snaps = [
        Snapshot(t, lam, x_frame, gamma_eff, Field(g, v.copy()))
    ]
    next_snap = t + cfg.snapshot_interval
    stop_reason = "t_end"
    wm, wg = _spectral_weights(g)

    def record(vals, mass_w, grad_sq_w):
        e = 0.5 * grad_sq_w - g.integrate(vals ** 6) / 6.0
        if gamma_eff != 0.0:
            e += gamma_eff / (params.q + 1.0) * g.integrate(
                np.abs(vals) ** (params.q + 1.0)
            )
        diag["t"].append(t)
        diag["mass"].append(mass_w)
        diag["energy"].append(e / lam ** 2)
        diag["grad_norm"].append(np.sqrt(grad_sq_w) / lam)
        diag["lambda_frame"].append(lam)
        diag["x_frame"].append(x_frame)
        diag["gamma_eff"].append(gamma_eff)
        diag["sponge_loss"].append(loss)

    vhat = np.fft.rfft(v)
    record(v, wm @ (vhat.real ** 2 + vhat.imag ** 2),
           wg @ (vhat.real ** 2 + vhat.imag ** 2))
    steps = 0
    dt = _cfl_dt(cfg, g, v, gamma_eff, params.q) if cfg.adaptive_dt else cfg.dt_initial
    while t < cfg.t_end * (1.0 - 1e-12) and steps < cfg.max_steps:
        if cfg.adaptive_dt and steps % 16 == 0:
            dt = _cfl_dt(cfg, g, v, gamma_eff, params.q)
        # never step past t_end in lab time
        dt_w = min(dt, (cfg.t_end - t) / lam ** 3)
        tables = _etd_tables(g, float(dt_w), cfg.dealias)
        for attempt in range(cfg.max_retries + 1):
            try:
                out = _step_hat(vhat, tables, g.n, gamma_eff, params.q)
                vn = np.fft.irfft(out, n=g.n)
                _check_stable(vn)
                break
            except StepUnstable:
                if attempt == cfg.max_retries:
                    raise
                dt_w *= 0.5
                dt *= 0.5
                tables = _etd_tables(g, float(dt_w), cfg.dealias)
        v = vn
        vhat = out
        t += lam ** 3 * dt_w
        steps += 1
        if sponge is not None:
            damp = dampers.get(dt_w)
            if damp is None:
                damp = dampers[dt_w] = np.exp(-dt_w * sponge)
            power = vhat.real ** 2 + vhat.imag ** 2
            before = wm @ power
            v = v * damp
            vhat = np.fft.rfft(v)
            power = vhat.real ** 2 + vhat.imag ** 2
            loss += before - wm @ power
            if loss + excised > cfg.window_loss_tol:
                raise WindowOverrun(
                    "window losses exceed tolerance",
                    sponge=loss, excised=excised, t=t,
                )
        else:
            power = vhat.real ** 2 + vhat.imag ** 2
        grad_sq = wg @ power
        if steps % cfg.diag_stride == 0:
            record(v, wm @ power, grad_sq)
        if t >= next_snap or (
            cfg.snapshot_stride and steps % cfg.snapshot_stride == 0
        ):
            snaps.append(Snapshot(t, lam, x_frame, gamma_eff, Field(g, v.copy())))
            if t >= next_snap:
                next_snap += cfg.snapshot_interval

        recenter_only = False
        if np.sqrt(grad_sq) >= cfg.grad_threshold:
            lam0 = cfg.rescale_fraction * cfg.grad_threshold / np.sqrt(grad_sq)
        elif steps % 16 == 0:
            peak = _peak_position(g, v)
            if abs(peak) > cfg.recenter_drift * g.length:
                lam0 = 1.0
                recenter_only = True
            else:
                continue
        else:
            continue
        if not recenter_only:
            peak = _peak_position(g, v)
        m_before = wm @ (vhat.real ** 2 + vhat.imag ** 2)
        src = lam0 * g.x + peak
        v = np.sqrt(lam0) * g.resample(v, src)
        # samples whose source lies outside the old box would wrap around
        # (trig interpolation is periodic) and re-inject exited radiation;
        # drop them, with a smooth shoulder so no new seam is created
        half = 0.5 * g.length
        over = np.maximum(src - half, -half - src)
        sh = np.clip(-over / 1.5, 0.0, 1.0)
        v *= sh * sh * (3.0 - 2.0 * sh)
        vhat = np.fft.rfft(v)
        # the zoom keeps a subwindow; radiation outside it is dropped
        cut = m_before - wm @ (vhat.real ** 2 + vhat.imag ** 2)
        excised += cut
        if loss + excised > cfg.window_loss_tol:
            raise WindowOverrun(
                "window losses exceed tolerance",
                sponge=loss, excised=excised, t=t,
            )
        x_frame += lam * peak
        lam *= lam0
        gamma_eff = params.gamma * lam ** (-m)
        restarts.append({"t": t, "lambda0": lam0, "peak": peak, "excised": cut})
        if lam < cfg.lambda_floor:
            stop_reason = "lambda_floor"
            break
    if steps >= cfg.max_steps:
        stop_reason = "max_steps"
    if not snaps or snaps[-1].t < t:
        snaps.append(Snapshot(t, lam, x_frame, gamma_eff, Field(g, v.copy())))
    return Trajectory(
        params=params,
        snapshots=snaps,
        diagnostics={k: np.asarray(a) for k, a in diag.items()},
        restarts=restarts,
        sponge_loss=loss,
        excised_mass=excised,
        stop_reason=stop_reason,
    )


# -- initial data ------------------------------------------------------------


@dataclass
class InitialData:
    """Q + eps0 with the decay report of the perturbation."""

    field: Field
    eps_norm: float
    tail_moment10: float


def make_initial_data(kind, amplitude, grid, center=0.0, width=1.0,
                      moment_limit=None):
    """Ground state plus a perturbation of the requested kind.

    kind "scaled": eps0 = amplitude * Q, i.e. u0 = (1 + amplitude) Q.
    kind "gaussian": eps0 = amplitude * exp(-((y - center)/width)^2).

    Reports ||eps0|| and the right-tail moment int_{y>0} y^10 eps0^2;
    raises DecayViolation only when an explicit moment_limit is given
    and exceeded.
    """
    if not np.isfinite(amplitude):
        raise RangeError("amplitude must be finite", amplitude=amplitude)
    q = closed_form_ground_state(grid.x)
    if kind == "scaled":
        eps = amplitude * q
    elif kind == "gaussian":
        if width <= 0.0:
            raise RangeError("width must be positive", width=width)
        eps = amplitude * np.exp(-(((grid.x - center) / width) ** 2))
    else:
        raise RangeError("unknown initial-data kind", kind=kind)
    right = grid.x > 0.0
    moment = grid.integrate(np.where(right, grid.x ** 10 * eps * eps, 0.0))
    if moment_limit is not None and moment >= moment_limit:
        raise DecayViolation(
            "right-tail moment exceeds limit", moment=moment, limit=moment_limit
        )
    return InitialData(
        field=Field(grid, q + eps),
        eps_norm=grid.norm2(eps),
        tail_moment10=float(moment),
    )


# -- saturated gradient bound ------------------------------------------------


@dataclass
class GradientBoundReport:
    """sup_t ||u_x||^2 against C * (|E0^gamma| + gamma^(-4/(q-5)) M0)."""

    applicable: bool
    constant: float = np.nan
    bound_scale: float = np.nan
    sup_grad_sq: float = np.nan


def saturated_gradient_bound(traj):
    """Fit the constant in the a-priori H1 bound of the saturated flow."""
    params = traj.params
    if params.gamma == 0.0:
        return GradientBoundReport(applicable=False)
    d = traj.diagnostics
    m0 = d["mass"][0]
    e0 = abs(d["energy"][0])
    scale = e0 + params.gamma ** (-4.0 / (params.q - 5.0)) * m0
    sup_sq = float(np.max(d["grad_norm"] ** 2))
    return GradientBoundReport(
        applicable=True,
        constant=sup_sq / scale,
        bound_scale=scale,
        sup_grad_sq=sup_sq,
    )
