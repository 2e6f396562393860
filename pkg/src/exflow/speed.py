"""Admissible symmetric speed functions of eigenvalues and their matrix lifts.

Every evaluation routine is batched: eigenvalue arguments have shape
``(..., n)`` and matrix arguments ``(..., n, n)``.  Derivatives are closed
forms per family; finite differences are only used by the tests.
"""

from dataclasses import dataclass

import numpy as np

from .names import UnknownNameError, format_name, parse_name

MAX_DIM = 8
EIG_DEGENERACY = 1e-8


class ConeViolation(ValueError):
    """An eigenvalue tuple left the open cone on which a speed is defined."""


def eigen_tuple(values):
    """Return eigenvalues as a float array sorted ascending (kappa_min first)."""
    lam = np.sort(np.asarray(values, dtype=float), axis=-1)
    if lam.shape[-1] < 1:
        raise ValueError("an eigenvalue tuple needs n >= 1 entries")
    return lam


def elementary_symmetric(lam, kmax):
    """sigma_0..sigma_kmax of the last axis via the one-variable-at-a-time recursion."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros(lam.shape[:-1] + (kmax + 1,))
    out[..., 0] = 1.0
    for i in range(lam.shape[-1]):
        x = lam[..., i : i + 1]
        out[..., 1:] = out[..., 1:] + x * out[..., :-1]
    return out


def _esp_drop_one(lam, kmax):
    n = lam.shape[-1]
    out = np.empty(lam.shape[:-1] + (n, kmax + 1))
    for i in range(n):
        out[..., i, :] = elementary_symmetric(np.delete(lam, i, axis=-1), kmax)
    return out


def _esp_drop_two(lam, kmax):
    n = lam.shape[-1]
    out = np.zeros(lam.shape[:-1] + (n, n, kmax + 1))
    for i in range(n):
        for j in range(i + 1, n):
            e = elementary_symmetric(np.delete(lam, [i, j], axis=-1), kmax)
            out[..., i, j, :] = e
            out[..., j, i, :] = e
    return out


@dataclass(frozen=True)
class Cone:
    """Gamma_+ (``kind="positive"``) or Gamma_k (``kind="gamma"``)."""

    kind: str = "positive"
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("positive", "gamma"):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.kind == "gamma" and self.k < 1:
            raise ValueError("Gamma_k needs k >= 1")

    def slack(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.kind == "positive":
            return lam.min(axis=-1)
        return elementary_symmetric(lam, self.k)[..., 1:].min(axis=-1)

    def contains(self, lam):
        return self.slack(lam) > 0.0

    def __str__(self):
        return "Gamma_+" if self.kind == "positive" else f"Gamma_{self.k}"


POSITIVE = Cone("positive")


@dataclass(frozen=True)
class ConeMembership:
    inside: np.ndarray
    slack: np.ndarray


def cone_contains(cone, lam):
    slack = cone.slack(lam)
    return ConeMembership(inside=slack > 0.0, slack=slack)


class SpeedFunction:
    """Base class: symmetric, 1-homogeneous, monotone f on a cone."""

    family = ""
    n = 1
    cone = POSITIVE

    @property
    def params(self):
        return {}

    @property
    def name(self):
        return format_name(self.family, self.params)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, n={self.n})"

    def _check(self, lam):
        lam = np.asarray(lam, dtype=float)
        if lam.shape[-1] != self.n:
            raise ValueError(f"{self.name} expects n={self.n} eigenvalues, got {lam.shape[-1]}")
        inside = self.cone.contains(lam)
        if not np.all(inside):
            bad = lam.reshape(-1, self.n)[~np.ravel(inside)][0]
            raise ConeViolation(f"{self.name}: {bad.tolist()} is outside {self.cone}")
        return lam

    @staticmethod
    def _scale(lam):
        return np.abs(lam).max(axis=-1, keepdims=True)

    def __call__(self, lam):
        return self.value(lam)

    def value(self, lam):
        raise NotImplementedError

    def grad(self, lam):
        raise NotImplementedError

    def hess(self, lam):
        raise NotImplementedError

    def unit_value(self):
        """f(1, ..., 1); for n = 1 this is the slope of the linear speed."""
        return float(self.value(np.ones(self.n)))


class PowerMean(SpeedFunction):
    """(mean lambda_i^r)^(1/r) on Gamma_+, r != 0."""

    family = "power_mean"

    def __init__(self, r, n):
        if r == 0:
            raise ValueError("power mean exponent r must be nonzero")
        _check_dim(n)
        self.r = float(r)
        self.n = int(n)
        self.cone = POSITIVE

    @property
    def params(self):
        return {"r": self.r}

    def value(self, lam):
        lam = self._check(lam)
        m = self._scale(lam)
        s = np.mean((lam / m) ** self.r, axis=-1)
        return m[..., 0] * s ** (1.0 / self.r)

    def grad(self, lam):
        lam = self._check(lam)
        f = self.value(lam)[..., None]
        return (lam / f) ** (self.r - 1.0) / self.n

    def hess(self, lam):
        lam = self._check(lam)
        f = self.value(lam)[..., None, None]
        g = self.grad(lam)
        diag = np.zeros(lam.shape + (self.n,))
        idx = np.arange(self.n)
        diag[..., idx, idx] = g / lam
        return (self.r - 1.0) * (diag - g[..., :, None] * g[..., None, :] / f)


class SigmaRatioRoot(SpeedFunction):
    """(sigma_k / sigma_l)^(1/(k-l)) on Gamma_k; l = 0 is the sigma_k root."""

    def __init__(self, k, n, l=0):
        _check_dim(n)
        if not (0 <= l < k <= n):
            raise ValueError(f"need 0 <= l < k <= n, got k={k}, l={l}, n={n}")
        self.k = int(k)
        self.l = int(l)
        self.n = int(n)
        self.cone = Cone("gamma", self.k) if self.k < self.n else POSITIVE

    @property
    def family(self):
        return "sigma_root" if self.l == 0 else "sigma_ratio_root"

    @property
    def params(self):
        return {"k": self.k} if self.l == 0 else {"k": self.k, "l": self.l}

    def _parts(self, x):
        k, l = self.k, self.l
        p = k - l
        e = elementary_symmetric(x, k)
        drop1 = _esp_drop_one(x, k)
        ek, el = e[..., k], e[..., l]
        a = drop1[..., k - 1] / ek[..., None]
        b = drop1[..., l - 1] / el[..., None] if l > 0 else np.zeros_like(a)
        f = (ek / el) ** (1.0 / p)
        return e, ek, el, a, b, f, p

    def value(self, lam):
        lam = self._check(lam)
        m = self._scale(lam)
        e = elementary_symmetric(lam / m, self.k)
        return m[..., 0] * (e[..., self.k] / e[..., self.l]) ** (1.0 / (self.k - self.l))

    def grad(self, lam):
        lam = self._check(lam)
        x = lam / self._scale(lam)
        _, _, _, a, b, f, p = self._parts(x)
        return f[..., None] * (a - b) / p

    def hess(self, lam):
        lam = self._check(lam)
        m = self._scale(lam)
        x = lam / m
        _, ek, el, a, b, f, p = self._parts(x)
        n = self.n
        hk = np.zeros(x.shape + (n,))
        hl = np.zeros(x.shape + (n,))
        if self.k >= 2 or self.l >= 2:
            drop2 = _esp_drop_two(x, max(self.k, self.l))
            off = ~np.eye(n, dtype=bool)
            if self.k >= 2:
                hk = np.where(off, drop2[..., self.k - 2], 0.0)
            if self.l >= 2:
                hl = np.where(off, drop2[..., self.l - 2], 0.0)
        g = (a - b) / p
        outer = lambda u: u[..., :, None] * u[..., None, :]
        dg = (hk / ek[..., None, None] - outer(a) - hl / el[..., None, None] + outer(b)) / p
        return f[..., None, None] * (outer(g) + dg) / m[..., None]


class DualSpeed(SpeedFunction):
    """f_*(mu) = 1 / f(1/mu) on Gamma_+."""

    def __init__(self, base):
        self.base = base
        self.n = base.n
        self.cone = POSITIVE

    @property
    def name(self):
        return f"dual({self.base.name})"

    def value(self, mu):
        mu = self._check(mu)
        return 1.0 / self.base.value(1.0 / mu)

    def grad(self, mu):
        mu = self._check(mu)
        lam = 1.0 / mu
        f = self.base.value(lam)[..., None]
        return self.base.grad(lam) * lam**2 / f**2

    def hess(self, mu):
        mu = self._check(mu)
        lam = 1.0 / mu
        h = self.base.value(lam)[..., None, None]
        # h(mu) = f(1/mu); derivatives by the chain rule, then of 1/h
        dh = -self.base.grad(lam) * lam**2
        ddh = self.base.hess(lam) * (lam**2)[..., :, None] * (lam**2)[..., None, :]
        idx = np.arange(self.n)
        ddh[..., idx, idx] += 2.0 * self.base.grad(lam) * lam**3
        return -ddh / h**2 + 2.0 * dh[..., :, None] * dh[..., None, :] / h**3


def dual_eval(f, mu):
    return DualSpeed(f).value(mu)


def euler_residual(f, lam):
    """|sum_i f^i lambda_i - f| for a batch of points."""
    lam = np.asarray(lam, dtype=float)
    return np.abs(np.sum(f.grad(lam) * lam, axis=-1) - f.value(lam))


def _sym_eigh(A):
    A = np.asarray(A, dtype=float)
    return np.linalg.eigh(0.5 * (A + np.swapaxes(A, -1, -2)))


def spectrum(A):
    return np.linalg.eigvalsh(0.5 * (np.asarray(A, float) + np.swapaxes(np.asarray(A, float), -1, -2)))


def matrix_eval(f, A):
    """F(A) = f(spectrum(A))."""
    return f.value(spectrum(A))


def matrix_grad(f, A):
    """dF/dA_ij, diagonal in A's eigenbasis with entries f^i."""
    w, V = _sym_eigh(A)
    g = f.grad(w)
    return (V * g[..., None, :]) @ np.swapaxes(V, -1, -2)


def divided_differences(f, w, tol=None):
    """(f^p - f^q)/(w_p - w_q), with the limit f^pp - f^pq where w_p ~ w_q."""
    g = f.grad(w)
    H = f.hess(w)
    if tol is None:
        tol = EIG_DEGENERACY * np.abs(w).max(axis=-1)[..., None, None]
    dw = w[..., :, None] - w[..., None, :]
    dg = g[..., :, None] - g[..., None, :]
    close = np.abs(dw) < tol
    limit = np.diagonal(H, axis1=-2, axis2=-1)[..., :, None] - H
    safe = np.where(close, 1.0, dw)
    return np.where(close, limit, dg / safe)


def matrix_second_form(f, A, B):
    """Second derivative F''(A)[B, B] via the eigenvalue formula."""
    w, V = _sym_eigh(A)
    B = np.asarray(B, dtype=float)
    Bt = np.swapaxes(V, -1, -2) @ B @ V
    H = f.hess(w)
    bd = np.diagonal(Bt, axis1=-2, axis2=-1)
    diag_part = np.einsum("...p,...pq,...q->...", bd, H, bd)
    D = divided_differences(f, w)
    off = Bt**2 * D
    idx = np.arange(w.shape[-1])
    off[..., idx, idx] = 0.0
    return diag_part + off.sum(axis=(-2, -1))


def make_speed(name, n):
    """Build a speed function from a config name such as ``"sigma_root:k=2"``."""
    family, params = parse_name(name)
    try:
        if family == "power_mean":
            return PowerMean(params["r"], n)
        if family in ("sigma_root", "sigma_k_root"):
            return SigmaRatioRoot(params["k"], n)
        if family == "sigma_ratio_root":
            return SigmaRatioRoot(params["k"], n, params.get("l", 0))
    except KeyError as exc:
        raise UnknownNameError(f"{name!r} is missing parameter {exc}") from None
    raise UnknownNameError(f"unknown speed function {name!r}")


def _check_dim(n):
    if not (1 <= int(n) <= MAX_DIM):
        raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {n}")
