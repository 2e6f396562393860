"""Discrete curves and support-function surfaces, and two-point ball curvature.

Curves are closed counterclockwise polygons with outward normals.  Convex
surfaces are stored through their support function on a cell-centred
latitude-longitude grid, so the outward normal at a node is the unit
vector z of that node.
"""

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from . import kernels
from .names import UnknownNameError, parse_name

NEIGHBOR_WINDOW = 3
HALFSPACE_EPS = 1e-9  # times 1/diameter
CONTAINMENT_TOL = 1e-8  # times diameter


class GeometryError(ValueError):
    pass


class SelfIntersectionError(GeometryError):
    pass


class ConvexityError(GeometryError):
    """A support surface lost positive radii of curvature."""


def ball_curvature(x_pos, x_normal, y_pos):
    """k(x, y) = 2<x - y, nu(x)>/|x - y|^2.

    >>> ball_curvature([1.0, 0.0], [1.0, 0.0], [-1.0, 0.0])
    1.0
    """
    x = np.asarray(x_pos, dtype=float)
    y = np.asarray(y_pos, dtype=float)
    d = x - y
    d2 = np.sum(d * d, axis=-1)
    if np.any(d2 == 0.0):
        raise GeometryError("k(x, y) needs x != y")
    k = 2.0 * np.sum(d * np.asarray(x_normal, dtype=float), axis=-1) / d2
    return float(k) if np.ndim(k) == 0 else k


# ---------------------------------------------------------------------------
# curves


class DiscreteCurve:
    """Closed counterclockwise polygon; per-vertex frame and Menger curvature."""

    dim = 2

    def __init__(self, points, check=True):
        pts = np.ascontiguousarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
            raise GeometryError("a curve needs at least 4 planar points")
        self.points = pts
        if check:
            if not self.signed_area > 0:
                raise GeometryError("curve must be counterclockwise (positive signed area)")
            if self.self_intersects():
                raise SelfIntersectionError("curve is not embedded")

    @classmethod
    def from_points(cls, points, check=True):
        """Like the constructor, but reverses clockwise input first."""
        pts = np.asarray(points, dtype=float)
        x, y = pts[:, 0], pts[:, 1]
        if np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y) < 0:
            pts = pts[::-1].copy()
        return cls(pts, check)

    def __len__(self):
        return self.points.shape[0]

    @cached_property
    def _frame(self):
        return kernels.curve_frame(self.points)

    @property
    def tangent(self):
        return self._frame[0]

    @property
    def normal(self):
        return self._frame[1]

    @property
    def kappa(self):
        return self._frame[2]

    @property
    def edges(self):
        """Length of the edge from vertex i to vertex i+1."""
        return self._frame[3]

    @property
    def weights(self):
        e = self.edges
        return 0.5 * (e + np.roll(e, 1))

    @property
    def length(self):
        return float(self.edges.sum())

    @property
    def signed_area(self):
        x, y = self.points[:, 0], self.points[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @cached_property
    def diameter(self):
        return _diameter(self.points)

    def kappa_range(self):
        """Per-vertex (kappa_1, kappa_n); equal for curves."""
        return self.kappa, self.kappa

    def self_intersects(self):
        return bool(kernels.curve_self_intersects(self.points))

    def neighbor_distance(self, i, j):
        n = len(self)
        d = np.abs(np.asarray(i) - np.asarray(j)) % n
        return np.minimum(d, n - d)

    def arclength(self):
        """Cumulative arclength at each vertex, starting at 0."""
        return np.concatenate([[0.0], np.cumsum(self.edges)[:-1]])

    def remesh(self, n=None):
        """Resample at equal arclength with a periodic cubic spline."""
        n = len(self) if n is None else int(n)
        p = self.points
        s = np.concatenate([[0.0], np.cumsum(self.edges)])
        closed = np.vstack([p, p[:1]])
        spline = CubicSpline(s, closed, bc_type="periodic")
        t = np.linspace(0.0, s[-1], n, endpoint=False)
        # one refinement pass: re-parametrize by the spline's own arclength
        fine = np.linspace(0.0, s[-1], 8 * n + 1)
        seg = np.linalg.norm(np.diff(spline(fine), axis=0), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        t = np.interp(np.linspace(0.0, arc[-1], n, endpoint=False), arc, fine)
        return DiscreteCurve(spline(t), check=False)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"])
            for x, y in self.points:
                w.writerow([f"{x:.17g}", f"{y:.17g}"])

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().lower() == "x":
                    continue
                rows.append([float(row[0]), float(row[1])])
        return cls.from_points(np.array(rows))


def _diameter(p):
    # exact max pairwise distance, O(N^2) in blocks
    best = 0.0
    for start in range(0, p.shape[0], 512):
        d = p[start : start + 512, None, :] - p[None, :, :]
        best = max(best, float(np.sqrt(np.max(np.einsum("ijc,ijc->ij", d, d)))))
    return best


@dataclass(frozen=True)
class AnalyticCurve:
    """Smooth closed curve t -> X(t), t in [0, 2pi), counterclockwise."""

    kind: str
    a: float = 1.0
    b: float = 1.0

    def position(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "limacon":
            r = 1.0 + self.a * np.cos(t)
            return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)
        return np.stack([self.a * np.cos(t), self.b * np.sin(t)], axis=-1)

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "limacon":
            e = self.a
            return np.stack([-np.sin(t) - e * np.sin(2 * t), np.cos(t) + e * np.cos(2 * t)], axis=-1)
        return np.stack([-self.a * np.sin(t), self.b * np.cos(t)], axis=-1)

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "limacon":
            e = self.a
            return np.stack(
                [-np.cos(t) - 2 * e * np.cos(2 * t), -np.sin(t) - 2 * e * np.sin(2 * t)], axis=-1
            )
        return np.stack([-self.a * np.cos(t), -self.b * np.sin(t)], axis=-1)

    def speed(self, t):
        return np.linalg.norm(self.d1(t), axis=-1)

    def tangent(self, t):
        return self.d1(t) / self.speed(t)[..., None]

    def normal(self, t):
        T = self.tangent(t)
        return np.stack([T[..., 1], -T[..., 0]], axis=-1)

    def curvature(self, t):
        p, q = self.d1(t), self.d2(t)
        return (p[..., 0] * q[..., 1] - p[..., 1] * q[..., 0]) / self.speed(t) ** 3

    def params(self, n):
        return 2.0 * np.pi * np.arange(n) / n

    def sample(self, n):
        return DiscreteCurve(self.position(self.params(n)))

    def k(self, tx, ty):
        return ball_curvature(self.position(tx), self.normal(tx), self.position(ty))


def circle(r=1.0):
    return AnalyticCurve("ellipse", r, r)


def ellipse(a=2.0, b=1.0):
    return AnalyticCurve("ellipse", a, b)


def limacon(eps=0.2):
    """r = 1 + eps cos(t); convex for eps <= 1/2, embedded for eps < 1."""
    if not 0 <= eps < 1:
        raise GeometryError("limacon needs 0 <= eps < 1 to be embedded")
    return AnalyticCurve("limacon", eps, 0.0)


# ---------------------------------------------------------------------------
# support-function surfaces


class SupportSurface:
    """Support function of a convex body on a cell-centred lat-long grid.

    Row i sits at colatitude (i + 1/2) pi / n_lat and column j at longitude
    2 pi j / n_lon.  Derivatives across a pole use the ghost row
    sigma(-theta_0, phi) = sigma(theta_0, phi + pi), so n_lon must be even.
    """

    dim = 3

    def __init__(self, sigma):
        s = np.ascontiguousarray(sigma, dtype=float)
        if s.ndim != 2 or s.shape[0] < 4 or s.shape[1] < 8 or s.shape[1] % 2:
            raise GeometryError("sigma must be (n_lat >= 4, even n_lon >= 8)")
        self.sigma = s

    @property
    def shape(self):
        return self.sigma.shape

    def __len__(self):
        return self.sigma.size

    @cached_property
    def grid(self):
        n_lat, n_lon = self.shape
        theta = (np.arange(n_lat) + 0.5) * np.pi / n_lat
        phi = 2.0 * np.pi * np.arange(n_lon) / n_lon
        return theta, phi

    @cached_property
    def spacing(self):
        n_lat, n_lon = self.shape
        return np.pi / n_lat, 2.0 * np.pi / n_lon

    @cached_property
    def z(self):
        theta, phi = self.grid
        st, ct = np.sin(theta)[:, None], np.cos(theta)[:, None]
        return np.stack(
            np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi), ct), axis=-1
        )

    def _padded(self, s):
        half = s.shape[1] // 2
        top = np.roll(s[:1], half, axis=1)
        bottom = np.roll(s[-1:], half, axis=1)
        return np.vstack([top, s, bottom])

    @cached_property
    def derivatives(self):
        """sigma_t, sigma_p, sigma_tt, sigma_tp, sigma_pp (t = colatitude, p = longitude)."""
        s = self.sigma
        ht, hp = self.spacing
        P = self._padded(s)
        st = (P[2:] - P[:-2]) / (2 * ht)
        stt = (P[2:] - 2 * s + P[:-2]) / ht**2
        sp = (np.roll(s, -1, 1) - np.roll(s, 1, 1)) / (2 * hp)
        spp = (np.roll(s, -1, 1) - 2 * s + np.roll(s, 1, 1)) / hp**2
        Pp = (np.roll(P, -1, 1) - np.roll(P, 1, 1)) / (2 * hp)
        stp = (Pp[2:] - Pp[:-2]) / (2 * ht)
        return st, sp, stt, stp, spp

    @cached_property
    def radii_matrix(self):
        """W = Hess(sigma) + sigma I in the orthonormal frame (e_theta, e_phi)."""
        theta, _ = self.grid
        sin = np.sin(theta)[:, None]
        cot = (np.cos(theta) / np.sin(theta))[:, None]
        st, sp, stt, stp, spp = self.derivatives
        s = self.sigma
        W = np.empty(self.shape + (2, 2))
        W[..., 0, 0] = stt + s
        W[..., 0, 1] = W[..., 1, 0] = (stp - cot * sp) / sin
        W[..., 1, 1] = spp / sin**2 + cot * st + s
        return W

    @cached_property
    def radii(self):
        """Principal radii tau, ascending, shape (n_lat, n_lon, 2).

        Closed-form symmetric 2x2 eigenvalues.
        """
        W = self.radii_matrix
        mean = 0.5 * (W[..., 0, 0] + W[..., 1, 1])
        rad = np.hypot(0.5 * (W[..., 0, 0] - W[..., 1, 1]), W[..., 0, 1])
        return np.stack([mean - rad, mean + rad], axis=-1)

    def is_convex(self):
        return bool(np.all(self.radii > 0))

    @property
    def kappa(self):
        """Principal curvatures 1/tau, ascending."""
        tau = self.radii
        if not np.all(tau > 0):
            raise ConvexityError("radii of curvature must be positive")
        return 1.0 / tau[..., ::-1]

    @cached_property
    def positions(self):
        theta, phi = self.grid
        st, sp, *_ = self.derivatives
        cos_t, sin_t = np.cos(theta)[:, None], np.sin(theta)[:, None]
        zero = np.zeros(self.shape)
        e_t = np.stack(np.broadcast_arrays(cos_t * np.cos(phi), cos_t * np.sin(phi), -sin_t), axis=-1)
        e_p = np.stack(np.broadcast_arrays(-np.sin(phi) + zero, np.cos(phi) + zero, zero), axis=-1)
        return self.sigma[..., None] * self.z + st[..., None] * e_t + (sp / sin_t)[..., None] * e_p

    # flat views used by the pair scans
    @property
    def points(self):
        return self.positions.reshape(-1, 3)

    @property
    def normal(self):
        return self.z.reshape(-1, 3)

    def kappa_range(self):
        k = self.kappa.reshape(-1, 2)
        return k[:, 0], k[:, 1]

    @cached_property
    def diameter(self):
        return _diameter(self.points)

    def self_intersects(self):
        return not self.is_convex()

    def neighbor_distance(self, i, j):
        n_lat, n_lon = self.shape
        i, j = np.asarray(i), np.asarray(j)
        di = np.abs(i // n_lon - j // n_lon)
        dj = np.abs(i % n_lon - j % n_lon)
        return np.maximum(di, np.minimum(dj, n_lon - dj))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lat_index", "lon_index", "sigma"])
            for i in range(self.shape[0]):
                for j in range(self.shape[1]):
                    w.writerow([i, j, f"{self.sigma[i, j]:.17g}"])

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip() == "lat_index":
                    continue
                rows.append((int(row[0]), int(row[1]), float(row[2])))
        n_lat = max(r[0] for r in rows) + 1
        n_lon = max(r[1] for r in rows) + 1
        s = np.full((n_lat, n_lon), np.nan)
        for i, j, v in rows:
            s[i, j] = v
        if np.isnan(s).any():
            raise GeometryError("surface CSV does not cover the full grid")
        return cls(s)


def sphere_surface(r, n_lat, n_lon):
    return SupportSurface(np.full((n_lat, n_lon), float(r)))


def ellipsoid_support(a, b, c, z):
    return np.sqrt(a * a * z[..., 0] ** 2 + b * b * z[..., 1] ** 2 + c * c * z[..., 2] ** 2)


def ellipsoid_surface(a, b, c, n_lat, n_lon):
    surf = sphere_surface(1.0, n_lat, n_lon)
    return SupportSurface(ellipsoid_support(a, b, c, surf.z))


def ellipsoid_radii(a, b, c, z):
    """Exact principal radii of the ellipsoid at normal z, ascending.

    The 1-homogeneous extension of sigma has Hessian D/sigma - (Dz)(Dz)^T/sigma^3
    with D = diag(a^2, b^2, c^2); restricted to the tangent plane of the
    sphere it is the radii matrix.
    """
    D = np.array([a * a, b * b, c * c])
    z = np.asarray(z, dtype=float)
    s = ellipsoid_support(a, b, c, z)[..., None, None]
    Dz = D * z
    H = np.eye(3) * D / s - Dz[..., :, None] * Dz[..., None, :] / s**3
    P = np.eye(3) - z[..., :, None] * z[..., None, :]
    w = np.linalg.eigvalsh(P @ H @ P)
    # the projected matrix has one zero eigenvalue along z
    w = np.sort(np.where(np.abs(w) < 1e-14 * np.abs(w).max(), np.inf, w), axis=-1)[..., :2]
    return w


# ---------------------------------------------------------------------------
# ball-curvature fields


@dataclass
class BallCurvatureField:
    """Per-vertex exscribed (k_low) and inscribed (k_high) curvature.

    ``low_partner`` / ``high_partner`` index the mesh point attaining the
    pairwise extremum; ``low_interior`` / ``high_interior`` are True when that
    pairwise value beat the local curvature and the partner lies more than
    ``NEIGHBOR_WINDOW`` mesh steps away.
    """

    k_low: np.ndarray
    k_high: np.ndarray
    low_partner: np.ndarray
    high_partner: np.ndarray
    low_interior: np.ndarray
    high_interior: np.ndarray
    kappa_min: np.ndarray
    kappa_max: np.ndarray
    pair_min: np.ndarray
    pair_max: np.ndarray

    def ordering_holds(self):
        return bool(
            np.all(self.k_low <= self.kappa_min)
            and np.all(self.kappa_min <= self.kappa_max)
            and np.all(self.kappa_max <= self.k_high)
        )

    def attained_flag(self, i, which="low"):
        inner = self.low_interior if which == "low" else self.high_interior
        return "interior-attained" if inner[i] else "boundary-attained"


def ball_curvature_field(M, check=True):
    if check and M.self_intersects():
        raise SelfIntersectionError("ball curvature needs an embedded hypersurface")
    kmin, imin, kmax, imax = kernels.ball_extrema(
        np.ascontiguousarray(M.points), np.ascontiguousarray(M.normal)
    )
    k1, kn = M.kappa_range()
    idx = np.arange(len(M))
    low = np.minimum(kmin, k1)
    high = np.maximum(kmax, kn)
    low_int = (kmin < k1) & (M.neighbor_distance(idx, imin) > NEIGHBOR_WINDOW)
    high_int = (kmax > kn) & (M.neighbor_distance(idx, imax) > NEIGHBOR_WINDOW)
    return BallCurvatureField(low, high, imin, imax, low_int, high_int, k1, kn, kmin, kmax)


def exscribed(M, check=True):
    """Field whose ``k_low`` is the exscribed curvature min(inf_y k(x, y), kappa_1)."""
    return ball_curvature_field(M, check)


def inscribed(M, check=True):
    """Field whose ``k_high`` is the inscribed curvature max(sup_y k(x, y), kappa_n)."""
    return ball_curvature_field(M, check)


@dataclass(frozen=True)
class TouchingBallReport:
    index: int
    kind: str
    center: tuple
    radius: float
    max_violation: float
    worst_vertex: int
    diameter: float
    tol: float

    @property
    def passed(self):
        return self.max_violation <= self.tol

    def to_dict(self):
        return {
            "index": self.index,
            "kind": self.kind,
            "center": list(self.center),
            "radius": self.radius,
            "max_violation": self.max_violation,
            "worst_vertex": self.worst_vertex,
            "diameter": self.diameter,
            "tol": self.tol,
            "pass": self.passed,
        }


def touching_ball_check(x_index, field, M, rel_tol=CONTAINMENT_TOL):
    """Containment of every vertex in the extrinsic ball of curvature k_low(x).

    k_low > 0 gives a ball, k_low < 0 the complement of a ball, and
    |k_low| <= 1e-9/diameter the half-space <y - X, nu> <= 0.  Depths are
    computed from |y - c|^2 - R^2 = |x - y|^2 - 2<x - y, nu>/k, which avoids
    the cancellation of forming the center for small curvature.
    """
    i = int(x_index)
    P, N = M.points, M.normal
    x, nu = P[i], N[i]
    k = float(field.k_low[i])
    diam = M.diameter
    diff = x - P
    d2 = np.sum(diff * diff, axis=1)
    dn = diff @ nu
    if abs(k) <= HALFSPACE_EPS / diam:
        depth = -dn
        kind, center, radius = "halfspace", tuple(x), np.inf
    else:
        c = x - nu / k
        R = 1.0 / abs(k)
        excess = d2 - 2.0 * dn / k
        dist = np.linalg.norm(P - c, axis=1)
        depth = excess / (dist + R)
        if k < 0:
            depth = -depth
            kind = "complement"
        else:
            kind = "ball"
        center, radius = tuple(c), R
    depth[i] = 0.0
    j = int(np.argmax(depth))
    return TouchingBallReport(
        i, kind, tuple(float(v) for v in center), float(radius), float(max(depth[j], 0.0)), j,
        diam, rel_tol * diam,
    )


# ---------------------------------------------------------------------------
# pointwise identities on analytic curves


def first_variation_formulas(C, tx, ty):
    """Analytic d k/d t_x and d k/d t_y for parameters (tx, ty) of an analytic curve."""
    x, y = C.position(tx), C.position(ty)
    nu = C.normal(tx)
    d = np.linalg.norm(x - y)
    w = (x - y) / d
    k = C.k(tx, ty)
    kappa = C.curvature(tx)
    dkx = -(2.0 / d) * (k - kappa) * np.dot(w, C.tangent(tx)) * C.speed(tx)
    dky = -(2.0 / d**2) * np.dot(C.d1(ty), nu - k * d * w)
    return float(dkx), float(dky)


def verify_first_variation(C, tx, ty, h=1e-5):
    """Relative residuals of the two first-variation formulas against central differences.

    The residual is |formula - difference| / max(1, |difference|).
    """
    ax, ay = first_variation_formulas(C, tx, ty)
    fx = (C.k(tx + h, ty) - C.k(tx - h, ty)) / (2 * h)
    fy = (C.k(tx, ty + h) - C.k(tx, ty - h)) / (2 * h)
    return abs(ax - fx) / max(1.0, abs(fx)), abs(ay - fy) / max(1.0, abs(fy))


def critical_partner(C, tx, n_coarse=2048):
    """Parameter of the y minimizing k(x, .) away from x, by grid search then Brent."""
    t = tx + np.linspace(0.0, 2 * np.pi, n_coarse, endpoint=False)[1:]
    vals = C.k(tx, t)
    j = int(np.argmin(vals))
    h = 2 * np.pi / n_coarse
    res = minimize_scalar(
        lambda s: float(C.k(tx, s)),
        bounds=(t[j] - h, t[j] + h),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x), float(res.fun)


def reflection_residual(M, i, j):
    """|nu_y - (nu_x - k d w)| for vertices i (x) and j (y) of a discrete curve or surface."""
    P, N = M.points, M.normal
    x, y = P[i], P[j]
    d = np.linalg.norm(x - y)
    w = (x - y) / d
    k = ball_curvature(x, N[i], y)
    return float(np.linalg.norm(N[j] - (N[i] - k * d * w)))


def verify_reflection_identity(M, x_index, field=None):
    """Residual at the exscribed-curvature partner, or None if boundary-attained."""
    field = ball_curvature_field(M) if field is None else field
    i = int(x_index)
    if not field.low_interior[i]:
        return None
    return reflection_residual(M, i, int(field.low_partner[i]))


# ---------------------------------------------------------------------------
# seeds

CURVE_SEEDS = ("circle", "ellipse", "limacon")
SURFACE_SEEDS = ("sphere", "ellipsoid")


def analytic_curve(name):
    family, p = parse_name(name)
    if family == "circle":
        return circle(float(p.get("r", 1.0)))
    if family == "ellipse":
        return ellipse(float(p.get("a", 2.0)), float(p.get("b", 1.0)))
    if family == "limacon":
        return limacon(float(p.get("eps", 0.2)))
    raise UnknownNameError(f"unknown curve seed {name!r}")


def make_seed(name, resolution):
    """Geometry from a seed name: curves take N, surfaces take (n_lat, n_lon).

    ``curve_csv:<path>`` and ``surface_csv:<path>`` load stored geometry.
    """
    if name.startswith("curve_csv:"):
        return DiscreteCurve.from_csv(name.split(":", 1)[1])
    if name.startswith("surface_csv:"):
        return SupportSurface.from_csv(name.split(":", 1)[1])
    family, p = parse_name(name)
    if family in CURVE_SEEDS:
        return analytic_curve(name).sample(int(resolution))
    if family not in SURFACE_SEEDS:
        raise UnknownNameError(f"unknown geometry seed {name!r}")
    n_lat, n_lon = resolution
    if family == "sphere":
        return sphere_surface(float(p.get("r", 1.0)), n_lat, n_lon)
    if family == "ellipsoid":
        return ellipsoid_surface(
            float(p.get("a", 1.5)), float(p.get("b", 1.0)), float(p.get("c", 1.0)), n_lat, n_lon
        )
    raise UnknownNameError(f"unknown geometry seed {name!r}")


def is_surface_seed(name):
    if name.startswith("surface_csv:"):
        return True
    return parse_name(name)[0] in SURFACE_SEEDS
