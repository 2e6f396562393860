"""Hot numeric kernels, each in a numba and a numpy flavour.

The public names at the bottom (``ball_extrema``, ``curve_frame`` ...) are
bound to one flavour by ``_accel.select``.  Both flavours are importable as
``*_numba`` / ``*_numpy`` so tests and the benchmark can compare them.
"""

import math

import numpy as np

from ._accel import HAVE_NUMBA, njit, select
from .modulators import FAMILY_CODES, Modulator

if HAVE_NUMBA:
    from numba import prange
else:  # pragma: no cover
    prange = range

STATUS_OK = 0
STATUS_CONE_EXIT = 1
STATUS_UNSTABLE = 2

_CODE_TO_FAMILY = {v: k for k, v in FAMILY_CODES.items()}


def modulator_from_code(code, alpha):
    return Modulator(_CODE_TO_FAMILY[int(code)], float(alpha))


# ---------------------------------------------------------------------------
# scalar Psi for compiled loops (mirrors modulators.Modulator)


@njit
def psi_scalar(code, alpha, s):
    if code == 0:
        return s
    if code == 1:
        return math.sqrt(s * s + 1.0)
    if code == 2:
        return s + math.log1p(math.exp(-s)) if s > 0 else math.log1p(math.exp(s))
    if code == 3:
        return s + math.log1p(math.exp(-2.0 * s))
    if code == 4:
        return -(s ** -alpha)
    if code == 5:
        return -math.log1p(1.0 / s)
    if code == 6:
        if s < 1e-2:
            acc = 0.0
            for j in range(10):
                acc += (-1.0) ** j / (j + 1) * s**j
            return -acc
        return -math.log1p(s) / s
    if code == 7:
        return -math.atan(1.0 / s)
    return s - math.exp(-s)


@njit
def dpsi_scalar(code, alpha, s):
    if code == 0:
        return 1.0
    if code == 1:
        return s / math.sqrt(s * s + 1.0)
    if code == 2:
        return 1.0 / (1.0 + math.exp(-s))
    if code == 3:
        return math.tanh(s)
    if code == 4:
        return alpha * s ** (-alpha - 1.0)
    if code == 5:
        return 1.0 / (s * (s + 1.0))
    if code == 6:
        if s < 1e-2:
            acc = 0.0
            for j in range(1, 11):
                acc += (-1.0) ** j / (j + 1) * j * s ** (j - 1)
            return -acc
        return math.log1p(s) / (s * s) - 1.0 / (s * (1.0 + s))
    if code == 7:
        return 1.0 / (s * s + 1.0)
    return 1.0 + math.exp(-s)


# ---------------------------------------------------------------------------
# two-point extrinsic ball curvature extrema


@njit(parallel=True)
def ball_extrema_numba(points, normals):
    """min/max over y != x of k(x, y) = 2<x-y, nu_x>/|x-y|^2, with argmin/argmax."""
    n, dim = points.shape
    kmin = np.empty(n)
    kmax = np.empty(n)
    imin = np.empty(n, dtype=np.int64)
    imax = np.empty(n, dtype=np.int64)
    for i in prange(n):
        lo = np.inf
        hi = -np.inf
        jlo = -1
        jhi = -1
        for j in range(n):
            if j == i:
                continue
            num = 0.0
            d2 = 0.0
            for c in range(dim):
                diff = points[i, c] - points[j, c]
                num += diff * normals[i, c]
                d2 += diff * diff
            if d2 == 0.0:
                continue
            k = 2.0 * num / d2
            if k < lo:
                lo = k
                jlo = j
            if k > hi:
                hi = k
                jhi = j
        kmin[i] = lo
        kmax[i] = hi
        imin[i] = jlo
        imax[i] = jhi
    return kmin, imin, kmax, imax


def ball_extrema_numpy(points, normals, block=256):
    points = np.asarray(points, dtype=float)
    normals = np.asarray(normals, dtype=float)
    n = points.shape[0]
    kmin = np.empty(n)
    kmax = np.empty(n)
    imin = np.empty(n, dtype=np.int64)
    imax = np.empty(n, dtype=np.int64)
    for start in range(0, n, block):
        stop = min(start + block, n)
        diff = points[start:stop, None, :] - points[None, :, :]
        d2 = np.einsum("ijc,ijc->ij", diff, diff)
        num = np.einsum("ijc,ic->ij", diff, normals[start:stop])
        with np.errstate(divide="ignore", invalid="ignore"):
            k = 2.0 * num / d2
        rows = np.arange(stop - start)
        k[rows, rows + start] = np.nan
        k[d2 == 0.0] = np.nan
        lo = np.where(np.isnan(k), np.inf, k)
        hi = np.where(np.isnan(k), -np.inf, k)
        imin[start:stop] = lo.argmin(axis=1)
        imax[start:stop] = hi.argmax(axis=1)
        kmin[start:stop] = lo[rows, imin[start:stop]]
        kmax[start:stop] = hi[rows, imax[start:stop]]
    return kmin, imin, kmax, imax


# ---------------------------------------------------------------------------
# closed polygon frame: tangent, outward normal, Menger curvature


@njit
def curve_frame_numba(points):
    n = points.shape[0]
    tangent = np.empty((n, 2))
    normal = np.empty((n, 2))
    kappa = np.empty(n)
    edge = np.empty(n)
    for i in range(n):
        j = (i + 1) % n
        dx = points[j, 0] - points[i, 0]
        dy = points[j, 1] - points[i, 1]
        edge[i] = math.sqrt(dx * dx + dy * dy)
    for i in range(n):
        im = (i - 1) % n
        ip = (i + 1) % n
        ax = points[i, 0] - points[im, 0]
        ay = points[i, 1] - points[im, 1]
        bx = points[ip, 0] - points[i, 0]
        by = points[ip, 1] - points[i, 1]
        a = edge[im]
        b = edge[i]
        cx = points[ip, 0] - points[im, 0]
        cy = points[ip, 1] - points[im, 1]
        c = math.sqrt(cx * cx + cy * cy)
        kappa[i] = 2.0 * (ax * by - ay * bx) / (a * b * c)
        tx = b * ax / a + a * bx / b
        ty = b * ay / a + a * by / b
        tn = math.sqrt(tx * tx + ty * ty)
        tangent[i, 0] = tx / tn
        tangent[i, 1] = ty / tn
        normal[i, 0] = ty / tn
        normal[i, 1] = -tx / tn
    return tangent, normal, kappa, edge


def curve_frame_numpy(points):
    points = np.asarray(points, dtype=float)
    prev = np.roll(points, 1, axis=0)
    nxt = np.roll(points, -1, axis=0)
    av = points - prev
    bv = nxt - points
    a = np.hypot(av[:, 0], av[:, 1])
    b = np.hypot(bv[:, 0], bv[:, 1])
    cv = nxt - prev
    c = np.hypot(cv[:, 0], cv[:, 1])
    kappa = 2.0 * (av[:, 0] * bv[:, 1] - av[:, 1] * bv[:, 0]) / (a * b * c)
    t = (b / a)[:, None] * av + (a / b)[:, None] * bv
    t /= np.hypot(t[:, 0], t[:, 1])[:, None]
    normal = np.column_stack([t[:, 1], -t[:, 0]])
    return t, normal, kappa, b


# ---------------------------------------------------------------------------
# self-intersection of a closed polygon


@njit
def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit
def curve_self_intersects_numba(points):
    n = points.shape[0]
    for i in range(n):
        i2 = (i + 1) % n
        ax, ay = points[i, 0], points[i, 1]
        bx, by = points[i2, 0], points[i2, 1]
        xlo, xhi = min(ax, bx), max(ax, bx)
        ylo, yhi = min(ay, by), max(ay, by)
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            j2 = (j + 1) % n
            cx, cy = points[j, 0], points[j, 1]
            dx, dy = points[j2, 0], points[j2, 1]
            if max(cx, dx) < xlo or min(cx, dx) > xhi or max(cy, dy) < ylo or min(cy, dy) > yhi:
                continue
            o1 = _orient(ax, ay, bx, by, cx, cy)
            o2 = _orient(ax, ay, bx, by, dx, dy)
            o3 = _orient(cx, cy, dx, dy, ax, ay)
            o4 = _orient(cx, cy, dx, dy, bx, by)
            if o1 * o2 <= 0.0 and o3 * o4 <= 0.0:
                return True
    return False


def curve_self_intersects_numpy(points):
    p = np.asarray(points, dtype=float)
    n = p.shape[0]
    a, b = p, np.roll(p, -1, axis=0)

    def orient(u, v, w):
        return (v[..., 0] - u[..., 0]) * (w[..., 1] - u[..., 1]) - (v[..., 1] - u[..., 1]) * (
            w[..., 0] - u[..., 0]
        )

    for i in range(n - 2):
        j = np.arange(i + 2, n if i > 0 else n - 1)
        if j.size == 0:
            continue
        c, d = a[j], b[j]
        o1 = orient(a[i], b[i], c)
        o2 = orient(a[i], b[i], d)
        o3 = orient(c, d, a[i])
        o4 = orient(c, d, b[i])
        if np.any((o1 * o2 <= 0.0) & (o3 * o4 <= 0.0)):
            return True
    return False


# ---------------------------------------------------------------------------
# explicit normal-speed integrator for closed curves, X_t = -Psi(f1 kappa) nu


@njit
def _curve_velocity(points, code, alpha, f1, dt, vel):
    """Fill ``vel`` with -Psi(F) nu; return (status, dt stability bound)."""
    tangent, normal, kappa, edge = curve_frame_numba(points)
    n = points.shape[0]
    dmax = 0.0
    hmin = np.inf
    for i in range(n):
        F = f1 * kappa[i]
        if not F > 0.0:
            return STATUS_CONE_EXIT, 0.0
        p = psi_scalar(code, alpha, F)
        vel[i, 0] = -p * normal[i, 0]
        vel[i, 1] = -p * normal[i, 1]
        d = dpsi_scalar(code, alpha, F) * f1
        if d > dmax:
            dmax = d
        if edge[i] < hmin:
            hmin = edge[i]
    return STATUS_OK, hmin * hmin / (2.0 * dmax)


@njit
def curve_advance_numba(points, nsteps, dt, code, alpha, f1, rk2):
    """Advance ``nsteps`` explicit steps; returns (points, status, steps_done, min bound)."""
    p = points.copy()
    n = p.shape[0]
    vel = np.empty((n, 2))
    mid = np.empty((n, 2))
    bound_min = np.inf
    for step in range(nsteps):
        status, bound = _curve_velocity(p, code, alpha, f1, dt, vel)
        if status != STATUS_OK:
            return p, status, step, bound_min
        if bound < bound_min:
            bound_min = bound
        if dt > bound:
            return p, STATUS_UNSTABLE, step, bound_min
        if rk2:
            for i in range(n):
                mid[i, 0] = p[i, 0] + 0.5 * dt * vel[i, 0]
                mid[i, 1] = p[i, 1] + 0.5 * dt * vel[i, 1]
            status, bound = _curve_velocity(mid, code, alpha, f1, dt, vel)
            if status != STATUS_OK:
                return p, status, step, bound_min
        for i in range(n):
            p[i, 0] += dt * vel[i, 0]
            p[i, 1] += dt * vel[i, 1]
    return p, STATUS_OK, nsteps, bound_min


def _curve_velocity_numpy(points, m, f1):
    _, normal, kappa, edge = curve_frame_numpy(points)
    F = f1 * kappa
    if not np.all(F > 0.0):
        return None, 0.0
    vel = -m.psi(F)[:, None] * normal
    bound = edge.min() ** 2 / (2.0 * np.max(m.dpsi(F) * f1))
    return vel, bound


def curve_advance_numpy(points, nsteps, dt, code, alpha, f1, rk2):
    m = modulator_from_code(code, alpha)
    p = np.array(points, dtype=float)
    bound_min = np.inf
    for step in range(nsteps):
        vel, bound = _curve_velocity_numpy(p, m, f1)
        if vel is None:
            return p, STATUS_CONE_EXIT, step, bound_min
        bound_min = min(bound_min, bound)
        if dt > bound:
            return p, STATUS_UNSTABLE, step, bound_min
        if rk2:
            vel, _ = _curve_velocity_numpy(p + 0.5 * dt * vel, m, f1)
            if vel is None:
                return p, STATUS_CONE_EXIT, step, bound_min
        p = p + dt * vel
    return p, STATUS_OK, nsteps, bound_min


# ---------------------------------------------------------------------------
# brute-force maximization over a grid of 2x2 multipliers (test oracle)


@njit
def lambda_grid_max_numba(fdot, X, Y, grid):
    """max over Lam in grid^4 of  Fdot : (-X + 2 Lam X - Lam Y Lam^T)."""
    best = -np.inf
    arg = np.zeros((2, 2))
    m = grid.shape[0]
    base = -(fdot[0, 0] * X[0, 0] + 2.0 * fdot[0, 1] * X[0, 1] + fdot[1, 1] * X[1, 1])
    for a in range(m):
        l00 = grid[a]
        for b in range(m):
            l01 = grid[b]
            for c in range(m):
                l10 = grid[c]
                for d in range(m):
                    l11 = grid[d]
                    # M = 2 Lam X - Lam Y Lam^T, contracted with symmetric Fdot
                    lx00 = l00 * X[0, 0] + l01 * X[1, 0]
                    lx01 = l00 * X[0, 1] + l01 * X[1, 1]
                    lx10 = l10 * X[0, 0] + l11 * X[1, 0]
                    lx11 = l10 * X[0, 1] + l11 * X[1, 1]
                    ly00 = l00 * Y[0, 0] + l01 * Y[1, 0]
                    ly01 = l00 * Y[0, 1] + l01 * Y[1, 1]
                    ly10 = l10 * Y[0, 0] + l11 * Y[1, 0]
                    ly11 = l10 * Y[0, 1] + l11 * Y[1, 1]
                    q00 = ly00 * l00 + ly01 * l01
                    q01 = ly00 * l10 + ly01 * l11
                    q10 = ly10 * l00 + ly11 * l01
                    q11 = ly10 * l10 + ly11 * l11
                    val = base + fdot[0, 0] * (2.0 * lx00 - q00)
                    val += fdot[0, 1] * (2.0 * lx01 - q01) + fdot[1, 0] * (2.0 * lx10 - q10)
                    val += fdot[1, 1] * (2.0 * lx11 - q11)
                    if val > best:
                        best = val
                        arg[0, 0] = l00
                        arg[0, 1] = l01
                        arg[1, 0] = l10
                        arg[1, 1] = l11
    return best, arg


def lambda_grid_max_numpy(fdot, X, Y, grid):
    g = np.asarray(grid, dtype=float)
    L = np.stack(np.meshgrid(g, g, g, g, indexing="ij"), axis=-1).reshape(-1, 2, 2)
    M = 2.0 * L @ X - L @ Y @ np.swapaxes(L, -1, -2)
    vals = -np.sum(fdot * X) + np.einsum("ij,kij->k", fdot, M)
    j = int(np.argmax(vals))
    return float(vals[j]), L[j].copy()


# ---------------------------------------------------------------------------
# RK4 for the round-sphere radius ODE  r' = -Psi(c / r)


@njit
def sphere_rk4_numba(code, alpha, c, r0, dt, nsteps):
    r = np.empty(nsteps + 1)
    rdot = np.empty(nsteps + 1)
    r[0] = r0
    done = 0
    for i in range(nsteps):
        x = r[i]
        if not (x > 0.0):
            break
        k1 = -psi_scalar(code, alpha, c / x)
        x2 = x + 0.5 * dt * k1
        if not (x2 > 0.0):
            break
        k2 = -psi_scalar(code, alpha, c / x2)
        x3 = x + 0.5 * dt * k2
        if not (x3 > 0.0):
            break
        k3 = -psi_scalar(code, alpha, c / x3)
        x4 = x + dt * k3
        if not (x4 > 0.0):
            break
        k4 = -psi_scalar(code, alpha, c / x4)
        rdot[i] = k1
        r[i + 1] = x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        done = i + 1
    if done > 0 and r[done] > 0.0:
        rdot[done] = -psi_scalar(code, alpha, c / r[done])
    return r[: done + 1], rdot[: done + 1]


def sphere_rk4_numpy(code, alpha, c, r0, dt, nsteps):
    # pure-python scalar loop; the compiled scalar Psi keeps its python body
    f = getattr(psi_scalar, "py_func", psi_scalar)
    r = [float(r0)]
    rdot = []
    x = float(r0)
    for _ in range(nsteps):
        try:
            k1 = -f(code, alpha, c / x)
            k2 = -f(code, alpha, c / (x + 0.5 * dt * k1))
            k3 = -f(code, alpha, c / (x + 0.5 * dt * k2))
            k4 = -f(code, alpha, c / (x + dt * k3))
        except (ZeroDivisionError, ValueError):
            break
        if not min(x + 0.5 * dt * k1, x + 0.5 * dt * k2, x + dt * k3) > 0.0:
            break
        nxt = x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        rdot.append(k1)
        r.append(nxt)
        x = nxt
        if not x > 0.0:
            break
    if r[-1] > 0.0:
        rdot.append(-f(code, alpha, c / r[-1]))
    else:
        r.pop()
    return np.array(r), np.array(rdot)


ball_extrema = select(ball_extrema_numba, ball_extrema_numpy)
curve_frame = select(curve_frame_numba, curve_frame_numpy)
curve_self_intersects = select(curve_self_intersects_numba, curve_self_intersects_numpy)
curve_advance = select(curve_advance_numba, curve_advance_numpy)
lambda_grid_max = select(lambda_grid_max_numba, lambda_grid_max_numpy)
sphere_rk4 = select(sphere_rk4_numba, sphere_rk4_numpy)
