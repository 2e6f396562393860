"""Explicit time stepping of X_t = -Psi(F) nu and the monitors evaluated along it.

Curves (n = 1) move their vertices along the discrete outward normal with
F = f(1) kappa.  Convex surfaces evolve their support function,
sigma_t = -Psi(f(kappa)) with kappa the reciprocal eigenvalues of the radii
matrix.
"""

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import kernels
from .geometry import (
    ConvexityError,
    DiscreteCurve,
    SelfIntersectionError,
    SupportSurface,
    ball_curvature,
    ball_curvature_field,
    is_surface_seed,
    make_seed,
)
from .modulators import (
    BOTH_REGIMES,
    CONVEX_REGIME,
    INVERSE_CONCAVE_REGIME,
    NO_REGIME,
    DomainError,
    check_conditions,
    classify_regime,
    make_modulator,
    regime_tracks,
)
from .speed import make_speed

MIN_CURVE_N = 64
MIN_SURFACE = (32, 64)
BETA_MARGIN = 1e-6
BETA_FLOOR = 1e-12
ORACLE_DT = 1e-5
RESID_DT = 1e-3  # times the shortest edge


class FlowError(RuntimeError):
    """Base class; ``partial`` carries the FlowResult recorded before the failure."""

    partial = None


class StabilityError(FlowError):
    pass


class ConeExitError(FlowError):
    pass


class EmbeddingError(FlowError):
    pass


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class FlowConfig:
    geometry: str = "ellipse:a=2,b=1"
    speed: str = "power_mean:r=1"
    psi: str = "neg_power:alpha=1"
    regime: str = "auto"
    t_max: float = 1.0
    c_cfl: float = 0.4
    max_dt: float = math.inf
    dt: float = 0.0  # > 0 forces a fixed step (checked against the stability bound)
    n: int = 256
    n_lat: int = 64
    n_lon: int = 128
    remesh_interval: int = 25
    record_dt: float = 0.01
    integrator: str = "euler"
    tol_flow: float = 1e-3
    seed: int = 0
    snapshot_every: int = 0  # records between state snapshots; 0 disables

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type in ("float", float) and not isinstance(v, float):
                setattr(self, f.name, float(v))
            if f.type in ("int", int) and not isinstance(v, int):
                setattr(self, f.name, int(v))
        self.validate()

    @property
    def is_surface(self):
        return is_surface_seed(self.geometry)

    def validate(self):
        if not 0.0 < self.c_cfl <= 1.0:
            raise ConfigError("c_cfl must lie in (0, 1]")
        if not self.t_max > 0 or not self.record_dt > 0:
            raise ConfigError("t_max and record_dt must be positive")
        if self.integrator not in ("euler", "rk2"):
            raise ConfigError("integrator must be 'euler' or 'rk2'")
        if self.remesh_interval < 1:
            raise ConfigError("remesh_interval must be >= 1")
        if self.dt < 0 or not self.max_dt > 0:
            raise ConfigError("dt must be >= 0 and max_dt > 0")
        if self.is_surface:
            if self.n_lat < MIN_SURFACE[0] or self.n_lon < MIN_SURFACE[1] or self.n_lon % 2:
                raise ConfigError("surface grids need n_lat >= 32 and even n_lon >= 64")
        elif self.n < MIN_CURVE_N:
            raise ConfigError("curves need n >= 64")

    @property
    def resolution(self):
        return (self.n_lat, self.n_lon) if self.is_surface else self.n

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# records


@dataclass
class DiagnosticsRecord:
    t: float
    step: int
    F_min: float
    F_max: float
    kappa_min: float
    kappa_max: float
    klow_min: float
    khigh_max: float
    Z_min: float
    u: float
    pinching: float
    resid_F: float
    bridge: float
    ordering_ok: bool
    Z_ok: bool
    u_ok: bool

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        out = []
        for name in self.columns():
            v = getattr(self, name)
            if isinstance(v, (bool, np.bool_)):
                out.append("1" if v else "0")
            elif isinstance(v, (int, np.integer)):
                out.append(str(int(v)))
            else:
                out.append(f"{float(v):.17g}")
        return out


@dataclass
class FlowResult:
    config: FlowConfig
    regime: str
    beta: float
    records: list = field(default_factory=list)
    state: object = None
    error: str = None
    error_type: str = None
    steps: int = 0
    remeshes: int = 0

    @property
    def ok(self):
        return self.error is None

    def verdicts(self):
        """Monitored claims; a claim that was not tracked reports None."""
        track_z, track_u = regime_tracks(self.regime)
        recs = self.records
        out = {
            "completed": self.ok,
            "ordering": bool(recs) and all(r.ordering_ok for r in recs),
            "Z_nonnegative": (bool(recs) and all(r.Z_ok for r in recs)) if track_z else None,
            "u_monotone": (bool(recs) and all(r.u_ok for r in recs)) if track_u else None,
        }
        return out

    def passed(self):
        return all(v is not False for v in self.verdicts().values())

    def u_drift_rate(self):
        """Largest decrease of u per unit time between consecutive records (>= 0)."""
        rates = [0.0]
        for a, b in zip(self.records, self.records[1:]):
            if b.t > a.t:
                rates.append((a.u - b.u) / (b.t - a.t))
        return max(rates)


# ---------------------------------------------------------------------------
# curves


def _speed_slope(f):
    """f(1) for a one-variable speed, or the value itself if a number is passed."""
    if isinstance(f, (int, float)):
        return float(f)
    if f.n != 1:
        raise ConfigError("curves need a speed function of one variable (n = 1)")
    return f.unit_value()


def curve_stability_bound(curve, f1, m):
    """Largest stable explicit step, dt <= ds_min^2 / (2 max Psi'(F) f(1))."""
    F = f1 * curve.kappa
    if not np.all(F > 0):
        raise ConeExitError("F <= 0 at some vertex")
    return float(curve.edges.min() ** 2 / (2.0 * np.max(m.dpsi(F) * f1)))


def curve_dt(curve, f1, m, c_cfl, max_dt=math.inf):
    return min(c_cfl * curve_stability_bound(curve, f1, m), max_dt)


def _advance(points, nsteps, dt, f1, m, rk2):
    p, status, done, bound = kernels.curve_advance(
        np.ascontiguousarray(points), int(nsteps), float(dt), m.code, m.alpha, float(f1), bool(rk2)
    )
    if status == kernels.STATUS_CONE_EXIT:
        raise ConeExitError(f"F <= 0 at some vertex after {done} steps")
    if status == kernels.STATUS_UNSTABLE:
        raise StabilityError(f"dt = {dt:.6g} exceeds the stability bound {bound:.6g}")
    return p


def step_curve(state, f, m, dt, integrator="euler"):
    """One explicit step of a closed curve; raises on cone exit, instability or self-intersection."""
    f1 = _speed_slope(f)
    p = _advance(state.points, 1, dt, f1, m, integrator == "rk2")
    out = DiscreteCurve(p, check=False)
    if out.self_intersects():
        raise EmbeddingError("curve self-intersects after the step")
    return out


# ---------------------------------------------------------------------------
# support surfaces


def polar_filter(values, theta):
    """Drop longitudinal Fourier modes m > max(1, floor(sin(theta) n_lon / 2)) per row."""
    n_lon = values.shape[1]
    keep = np.maximum(1, np.floor(np.sin(theta) * n_lon / 2)).astype(int)
    if np.all(keep >= n_lon // 2):
        return values
    spec = np.fft.rfft(values, axis=1)
    m = np.arange(spec.shape[1])
    spec[m[None, :] > keep[:, None]] = 0.0
    return np.fft.irfft(spec, n=n_lon, axis=1)


def _surface_speed(surface, f, m):
    if not surface.is_convex():
        raise ConeExitError("support surface lost convexity (a radius of curvature <= 0)")
    kappa = surface.kappa
    F = f.value(kappa)
    return F, kappa


def surface_stability_bound(surface, f, m):
    """Explicit-Euler limit 2 / (D (4/dtheta^2 + pi^2/dphi^2)), D = max Psi' f^i kappa_i^2.

    The pi^2/dphi^2 term bounds the filtered longitudinal second difference
    at every colatitude.
    """
    F, kappa = _surface_speed(surface, f, m)
    D = np.max(m.dpsi(F)[..., None] * f.grad(kappa) * kappa**2)
    ht, hp = surface.spacing
    return float(2.0 / (D * (4.0 / ht**2 + np.pi**2 / hp**2)))


def step_support(state, f, m, dt, bound=None):
    """Forward-Euler step of sigma_t = -Psi(f(1/tau)) with a polar-filtered increment.

    ``bound`` may carry a stability bound already computed for ``state``.
    """
    if bound is None:
        bound = surface_stability_bound(state, f, m)
    if dt > bound:
        raise StabilityError(f"dt = {dt:.6g} exceeds the stability bound {bound:.6g}")
    F, _ = _surface_speed(state, f, m)
    inc = polar_filter(-dt * m.psi(F), state.grid[0])
    out = SupportSurface(state.sigma + inc)
    if not out.is_convex():
        raise ConeExitError("support surface lost convexity after the step")
    return out


# ---------------------------------------------------------------------------
# monitors


def _regime_for(cfg, f, m):
    if f.n == 1:
        convex = inv = True  # linear in one variable
    else:
        from .structure import check_convexity, check_inverse_concave_general

        convex = check_convexity(f, trials=2_000, seed=cfg.seed).passed
        inv = check_inverse_concave_general(f, trials=2_000, seed=cfg.seed).passed
    regime = classify_regime(m, convex, inv, check_conditions(m))
    if cfg.regime not in ("auto", regime):
        allowed = {BOTH_REGIMES: (CONVEX_REGIME, INVERSE_CONCAVE_REGIME)}.get(regime, ())
        if cfg.regime not in allowed:
            raise ConfigError(f"regime {cfg.regime!r} is inconsistent with (f, Psi): {regime!r}")
        regime = cfg.regime
    return regime


def _measure(state, f, f1):
    """(F, kappa_1, kappa_n, field) at the current state."""
    field_ = ball_curvature_field(state, check=not isinstance(state, SupportSurface))
    if isinstance(state, SupportSurface):
        k = state.kappa.reshape(-1, 2)
        F = f.value(k)
        return F, k[:, 0], k[:, 1], field_
    return f1 * state.kappa, state.kappa, state.kappa, field_


def fix_beta(klow, F):
    """Smallest beta with klow >= -beta F at t = 0, plus a relative and absolute margin."""
    return max(-float(np.min(klow / F)), 0.0) * (1.0 + BETA_MARGIN) + BETA_FLOOR


def _record(t, step, state, f, f1, m, beta, tol, prev, track, bridge, resid):
    F, k1, kn, fld = _measure(state, f, f1)
    Z = float(np.min(fld.k_low + beta * F))
    u = float(np.min(fld.k_low / F))
    track_z, track_u = track
    z_ok = Z >= -tol * (1.0 + t) if track_z else True
    if track_u and prev is not None:
        u_ok = u >= prev.u - tol * (t - prev.t) - bridge
    else:
        u_ok = True
    return DiagnosticsRecord(
        t=float(t),
        step=int(step),
        F_min=float(F.min()),
        F_max=float(F.max()),
        kappa_min=float(k1.min()),
        kappa_max=float(kn.max()),
        klow_min=float(fld.k_low.min()),
        khigh_max=float(fld.k_high.max()),
        Z_min=Z,
        u=u,
        pinching=float(np.max(kn / k1)) if np.all(k1 > 0) else math.inf,
        resid_F=float(resid),
        bridge=float(bridge),
        ordering_ok=fld.ordering_holds(),
        Z_ok=bool(z_ok),
        u_ok=bool(u_ok),
    )


def _remesh_error(old, new, f1):
    """Interpolation error estimate: max |kappa change| / F over the new vertices.

    Old curvature is interpolated linearly in arclength to the new vertex
    positions' arclength.
    """
    s_old = old.arclength()
    L_old = old.length
    s_new = new.arclength() * (L_old / new.length)
    k_old = np.interp(s_new, np.append(s_old, L_old), np.append(old.kappa, old.kappa[0]))
    F = f1 * new.kappa
    return float(np.max(np.abs(new.kappa - k_old) * f1 / F))


def _curve_resid(curve, f1, m):
    try:
        hist = curve_history(curve, f1, m, RESID_DT * curve.edges.min())
        return float(residual_evo_F(hist, f1, m))
    except FlowError:
        return math.nan


def run_flow(cfg, observer=None, strict=False):
    """Integrate to ``cfg.t_max`` or the first error.

    ``observer(record, state)`` is called after each record.  On failure the
    result keeps every record made so far and names the error; with
    ``strict=True`` the error is raised with the result attached as
    ``partial``.
    """
    f_n = 2 if cfg.is_surface else 1
    f = make_speed(cfg.speed, f_n)
    m = make_modulator(cfg.psi)
    regime = _regime_for(cfg, f, m)
    track = regime_tracks(regime)
    state = make_seed(cfg.geometry, cfg.resolution)
    f1 = None if cfg.is_surface else _speed_slope(f)
    result = FlowResult(cfg, regime, math.nan)

    t = 0.0
    step = 0
    since_remesh = 0
    bridge = 0.0
    prev = None
    n_records = int(round(cfg.t_max / cfg.record_dt))
    try:
        F0, _, _, fld0 = _measure(state, f, f1)
        result.beta = fix_beta(fld0.k_low, F0) if np.all(F0 > 0) else math.nan
        beta = result.beta if np.isfinite(result.beta) else max(-float(np.min(fld0.k_low / F0)), 0.0)
        resid = math.nan if cfg.is_surface else _curve_resid(state, f1, m)
        rec = _record(0.0, 0, state, f, f1, m, beta, cfg.tol_flow, None, track, 0.0, resid)
        result.records.append(rec)
        if observer:
            observer(rec, state)
        if not rec.F_min > 0:
            raise ConeExitError("F <= 0 at some node of the initial data")
        prev = rec
        for j in range(1, n_records + 1):
            t_next = min(j * cfg.record_dt, cfg.t_max)
            while t < t_next:
                if cfg.is_surface:
                    bound = surface_stability_bound(state, f, m)
                    dt = cfg.dt if cfg.dt > 0 else min(cfg.c_cfl * bound, cfg.max_dt)
                    rem = t_next - t
                    n = max(1, math.ceil(rem / dt - 1e-9))
                    h = rem / n if cfg.dt == 0 else min(dt, rem)
                    state = step_support(state, f, m, h, bound)
                    t = t_next if h >= rem * (1 - 1e-12) else t + h
                    step += 1
                    continue
                bound = curve_stability_bound(state, f1, m)
                dt = cfg.dt if cfg.dt > 0 else min(cfg.c_cfl * bound, cfg.max_dt)
                left = cfg.remesh_interval - since_remesh
                rem = t_next - t
                if rem <= left * dt * (1 + 1e-12):
                    n = max(1, math.ceil(rem / dt - 1e-9))
                    h = rem / n
                else:
                    n, h = left, dt
                pts = _advance(state.points, n, h, f1, m, cfg.integrator == "rk2")
                state = DiscreteCurve(pts, check=False)
                step += n
                since_remesh += n
                t = t_next if h * n >= rem * (1 - 1e-12) else t + n * h
                if since_remesh >= cfg.remesh_interval:
                    new = state.remesh()
                    bridge += _remesh_error(state, new, f1) * abs(prev.u)
                    state = new
                    since_remesh = 0
                    result.remeshes += 1
                    if state.self_intersects():
                        raise EmbeddingError(f"curve self-intersects at t = {t:.6g}")
            resid = math.nan if cfg.is_surface else _curve_resid(state, f1, m)
            rec = _record(t, step, state, f, f1, m, beta, cfg.tol_flow, prev, track, bridge, resid)
            result.records.append(rec)
            bridge = 0.0
            prev = rec
            if observer:
                observer(rec, state)
            if not rec.F_min > 0:
                raise ConeExitError(f"F <= 0 at t = {t:.6g}")
    except (FlowError, SelfIntersectionError, ConvexityError, DomainError) as exc:
        result.error = str(exc)
        result.error_type = type(exc).__name__
        if strict:
            err = exc if isinstance(exc, FlowError) else FlowError(str(exc))
            err.partial = result
            result.state = state
            result.steps = step
            raise err from (None if err is exc else exc)
    result.state = state
    result.steps = step
    return result


# ---------------------------------------------------------------------------
# evolution-equation residuals (curves)


def _rk2_step(points, h, f1, m):
    def velocity(p):
        _, normal, kappa, _ = kernels.curve_frame_numpy(p)
        F = f1 * kappa
        if not np.all(F > 0):
            raise ConeExitError("F <= 0 at some vertex")
        return -m.psi(F)[:, None] * normal

    return points + h * velocity(points + 0.5 * h * velocity(points))


def curve_history(curve, f, m, dt):
    """(previous, middle, next, dt): RK2 steps of -dt and +dt from the middle state.

    These single steps are not gated by the explicit stability bound; they
    only sample the trajectory through the middle state.
    """
    f1 = _speed_slope(f)
    back = _rk2_step(curve.points, -dt, f1, m)
    fwd = _rk2_step(curve.points, dt, f1, m)
    return DiscreteCurve(back, check=False), curve, DiscreteCurve(fwd, check=False), float(dt)


def _ds(curve, values):
    """First and second arclength derivatives on a nonuniform closed polygon."""
    a = np.roll(curve.edges, 1)  # edge i-1 -> i
    b = curve.edges  # edge i -> i+1
    vm, v0, vp = np.roll(values, 1), values, np.roll(values, -1)
    d1 = (-b / (a * (a + b))) * vm + ((b - a) / (a * b)) * v0 + (a / (b * (a + b))) * vp
    d2 = 2.0 * (vm / (a * (a + b)) - v0 / (a * b) + vp / (b * (a + b)))
    return d1, d2


def _check_history(history):
    if len(history) != 4:
        raise ValueError("history must be (previous, middle, next, dt)")
    prev, mid, nxt, dt = history
    if not (len(prev) == len(mid) == len(nxt)) or not dt > 0:
        raise ValueError("history states must share a vertex count and dt > 0")
    return prev, mid, nxt, dt


def evo_F_terms(curve, f, m):
    """Right-hand side Psi' f1 F_ss + Psi'' f1 F_s^2 + f1 kappa^2 Psi at each vertex."""
    f1 = _speed_slope(f)
    F = f1 * curve.kappa
    Fs, Fss = _ds(curve, F)
    return m.dpsi(F) * f1 * Fss + m.ddpsi(F) * f1 * Fs**2 + f1 * curve.kappa**2 * m.psi(F)


def residual_evo_F(history, f, m):
    """Max-norm residual of the F-evolution equation at the middle state."""
    prev, mid, nxt, dt = _check_history(history)
    f1 = _speed_slope(f)
    dF = f1 * (nxt.kappa - prev.kappa) / (2.0 * dt)
    return float(np.max(np.abs(dF - evo_F_terms(mid, f1, m))))


def _pair_k(curve, i, j):
    return ball_curvature(curve.points[i], curve.normal[i], curve.points[j])


def evo_k_terms(curve, i, j, f, m, simplified=False):
    """Terms of d k(x_i, y_j)/dt under the flow; returns (rhs, sum of |terms|)."""
    f1 = _speed_slope(f)
    P, N, T = curve.points, curve.normal, curve.tangent
    x, y = P[i], P[j]
    d = float(np.linalg.norm(x - y))
    w = (x - y) / d
    k = _pair_k(curve, i, j)
    F = f1 * curve.kappa
    psi = m.psi(F)
    Fs, _ = _ds(curve, F)
    grad_psi_x = m.dpsi(F[i]) * Fs[i] * T[i]
    factor = 1.0 if simplified else float(np.dot(N[i] - k * d * w, N[j]))
    terms = np.array(
        [
            psi[i] * k * k,
            -2.0 / d**2 * psi[i],
            2.0 / d**2 * psi[j] * factor,
            2.0 / d * float(np.dot(w, grad_psi_x)),
        ]
    )
    return float(terms.sum()), float(np.abs(terms).sum())


def residual_evo_k(history, i, j, f, m, simplified=False):
    """(absolute, relative) residual of the k(x, y)-evolution for material vertices i, j.

    The relative residual divides by the sum of magnitudes of the terms.
    """
    prev, mid, nxt, dt = _check_history(history)
    if i == j:
        raise ValueError("the pair needs two distinct vertices")
    dk = (_pair_k(nxt, i, j) - _pair_k(prev, i, j)) / (2.0 * dt)
    rhs, scale = evo_k_terms(mid, i, j, f, m, simplified)
    r = abs(dk - rhs)
    return r, r / scale


# ---------------------------------------------------------------------------
# round-sphere oracle


class SphereTrajectory:
    """RK4 solution of r' = -Psi(c/r) with Hermite interpolation in t."""

    def __init__(self, t, r, rdot, halted):
        self.t = t
        self.r = r
        self.rdot = rdot
        self.halted = halted
        self._spline = CubicHermiteSpline(t, r, rdot) if len(t) > 1 else None

    @property
    def t_end(self):
        return float(self.t[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_end + 1e-12):
            raise DomainError(f"oracle covers [0, {self.t_end}] only")
        return self._spline(np.minimum(t, self.t_end))


def sphere_oracle(f, m, r0, T, dt=ORACLE_DT):
    """Radius of a round sphere (or circle) under the flow, for t in [0, T].

    c = f(1, ..., 1), so F = c/r on a sphere of radius r.  Integration stops
    early, with ``halted`` set, if c/r leaves (0, inf).
    """
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    c = f.unit_value() if hasattr(f, "unit_value") else float(f)
    nsteps = int(math.ceil(T / dt - 1e-9))
    h = T / nsteps
    r, rdot = kernels.sphere_rk4(m.code, m.alpha, float(c), float(r0), h, nsteps)
    t = h * np.arange(r.size)
    return SphereTrajectory(t, r, rdot, r.size < nsteps + 1)
