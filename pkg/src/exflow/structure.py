"""Randomized verifiers for the structural hypotheses and the matrix inequalities.

Every sampler draws its instances from one Philox stream keyed by ``seed``,
evaluates all of them in a single batched pass, and reduces to the most
negative slack together with the sample that produced it.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .modulators import Modulator
from .rng import log_uniform, make_rng, random_rotations, random_spd, random_symmetric
from .speed import (
    POSITIVE,
    ConeViolation,
    DualSpeed,
    PowerMean,
    SigmaRatioRoot,
    _sym_eigh,
    matrix_grad,
    matrix_second_form,
    spectrum,
)

SLACK_TOL = 1e-10
SCALAR_TOL = 1e-12
DEGENERATE_GAP = 1e-10
EIG_RANGE = (0.1, 10.0)
SCALAR_RANGE = (1e-2, 1e2)
GRID_POINTS = 41


class PreconditionError(ValueError):
    """A lemma verifier was called outside the lemma's hypotheses."""


@dataclass
class InequalityReport:
    name: str
    trials: int
    min_slack: float
    witness: dict
    tol: float
    skipped: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.min_slack >= -self.tol)

    def to_dict(self):
        return {
            "check": self.name,
            "trials": int(self.trials),
            "skipped": int(self.skipped),
            "tol": self.tol,
            "min_slack": float(self.min_slack),
            "pass": self.passed,
            "witness": _jsonable(self.witness),
            **{k: _jsonable(v) for k, v in self.extra.items()},
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _reduce(name, slack, witnesses, tol, skipped=0, extra=None):
    """Build a report from per-trial slacks and a callable giving the j-th witness."""
    slack = np.asarray(slack, dtype=float)
    j = int(np.argmin(slack))
    return InequalityReport(
        name, slack.size, float(slack[j]), witnesses(j), tol, skipped, extra or {}
    )


# ---------------------------------------------------------------------------
# sampling of eigenvalue tuples


def sample_cone(f, rng, count, lo=EIG_RANGE[0], hi=EIG_RANGE[1]):
    """Eigenvalue tuples strictly inside f's cone.

    Gamma_+ points are log-uniform in [lo, hi].  For Gamma_k with k < n half
    of the draws get one negative entry, kept only if they stay in the cone.
    """
    lam = log_uniform(rng, lo, hi, (count, f.n))
    if f.cone is POSITIVE or f.cone.kind == "positive":
        return lam
    flip = rng.random(count) < 0.5
    cand = lam.copy()
    cand[flip, 0] = -rng.uniform(0.0, hi, int(flip.sum()))
    inside = f.cone.contains(cand)
    return np.where(inside[:, None], cand, lam)


def sample_distinct(rng, n, count, lo=EIG_RANGE[0], hi=EIG_RANGE[1]):
    """Gamma_+ samples with pairwise gaps above ``DEGENERATE_GAP`` (re-jittered)."""
    lam = log_uniform(rng, lo, hi, (count, n))
    for _ in range(100):
        gaps = np.abs(lam[:, :, None] - lam[:, None, :])
        bad = np.where(np.eye(n, dtype=bool), np.inf, gaps).min(axis=(1, 2)) < DEGENERATE_GAP
        if not bad.any():
            break
        lam[bad] = log_uniform(rng, lo, hi, (int(bad.sum()), n))
    return lam


# ---------------------------------------------------------------------------
# convexity and inverse-concavity of f


def check_convexity(f, trials=10_000, seed=0, tol=SLACK_TOL):
    """Sampled convexity of F: F''(A)[B,B] >= 0 and F(B) >= Fdot(A):B.

    The second test is the first-order form of convexity combined with the
    Euler relation; both pairs (A, B) are drawn inside the cone.
    """
    rng = make_rng(seed, 1)
    n = f.n
    lamA = sample_cone(f, rng, trials)
    lamB = sample_cone(f, rng, trials)
    RA = random_rotations(rng, n, trials)
    RB = random_rotations(rng, n, trials)
    A = (RA * lamA[:, None, :]) @ np.swapaxes(RA, -1, -2)
    Bp = (RB * lamB[:, None, :]) @ np.swapaxes(RB, -1, -2)
    D = random_symmetric(rng, n, trials)
    D /= np.linalg.norm(D, axis=(1, 2), keepdims=True)

    ok = f.cone.contains(spectrum(A)) & f.cone.contains(spectrum(Bp))
    skipped = int((~ok).sum())
    A, Bp, D = A[ok], Bp[ok], D[ok]

    second = matrix_second_form(f, A, D)
    first = f.value(spectrum(Bp)) - np.einsum("tij,tij->t", matrix_grad(f, A), Bp)
    slack = np.minimum(second, first)

    def witness(j):
        which = "second_form" if second[j] <= first[j] else "first_order"
        return {"test": which, "A": A[j], "B": D[j] if which == "second_form" else Bp[j]}

    extra = {"speed": f.name, "min_second_form": float(second.min()), "min_first_order": float(first.min())}
    return _reduce("convexity", slack, witness, tol, skipped, extra)


def inverse_concavity_matrices(f, lam):
    """(general criterion matrix, 1-homogeneous criterion matrix, pairwise values)."""
    fv = f.value(lam)[..., None, None]
    g = f.grad(lam)
    H = f.hess(lam)
    n = lam.shape[-1]
    idx = np.arange(n)
    homog = H.copy()
    homog[..., idx, idx] += 2.0 * g / lam
    general = homog - 2.0 * g[..., :, None] * g[..., None, :] / fv
    dl = lam[..., :, None] - lam[..., None, :]
    dg = g[..., :, None] - g[..., None, :]
    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        pair = dg / dl + g[..., :, None] / lam[..., None, :] + g[..., None, :] / lam[..., :, None]
    pair = np.where(off, pair, np.inf)
    return general, homog, pair


def _inverse_concave(f, trials, seed, tol, kind):
    rng = make_rng(seed, 2)
    lam = sample_distinct(rng, f.n, trials)
    general, homog, pair = inverse_concavity_matrices(f, lam)
    eg = np.linalg.eigvalsh(general)[:, 0]
    eh = np.linalg.eigvalsh(homog)[:, 0]
    pmin = pair.min(axis=(1, 2)) if f.n > 1 else np.full(trials, np.inf)
    e = eg if kind == "general" else eh
    slack = np.minimum(e, pmin)
    other = np.minimum(eh if kind == "general" else eg, pmin)
    agree = (slack >= -tol) == (other >= -tol)

    def witness(j):
        return {
            "lambda": lam[j],
            "min_eigenvalue": float(e[j]),
            "min_pairwise": float(pmin[j]) if np.isfinite(pmin[j]) else None,
        }

    extra = {
        "speed": f.name,
        "criterion": kind,
        "min_eigenvalue": float(e.min()),
        "min_pairwise": float(pmin.min()) if np.isfinite(pmin.min()) else None,
        "verdict_agreement": int(agree.sum()),
        "verdict_disagreement": int((~agree).sum()),
    }
    return _reduce(f"inverse_concave_{kind}", slack, witness, tol, 0, extra)


def check_inverse_concave_general(f, trials=10_000, seed=0, tol=SLACK_TOL):
    """Matrix f'' - (2/f) f' f'^T + 2 diag(f'/lam) >= 0 plus the pairwise condition."""
    return _inverse_concave(f, trials, seed, tol, "general")


def check_inverse_concave_homog(f, trials=10_000, seed=0, tol=SLACK_TOL):
    """Matrix f'' + 2 diag(f'/lam) >= 0 plus the pairwise condition.

    The report also counts samples on which the verdict of the general
    criterion agrees with this one (they are equivalent for 1-homogeneous f).
    """
    return _inverse_concave(f, trials, seed, tol, "homog")


def check_dual_concavity(f, trials=2_000, seed=0, tol=SLACK_TOL):
    """Independent oracle: Hessian of f_* along random directions is <= 0."""
    rng = make_rng(seed, 3)
    mu = log_uniform(rng, *EIG_RANGE, (trials, f.n))
    H = DualSpeed(f).hess(mu)
    top = np.linalg.eigvalsh(H)[:, -1]
    return _reduce("dual_concavity", -top, lambda j: {"mu": mu[j]}, tol, 0, {"speed": f.name})


# ---------------------------------------------------------------------------
# scalar inequalities in Psi


def _positive(*xs):
    for x in xs:
        if np.any(~(np.asarray(x, dtype=float) > 0)):
            raise PreconditionError("arguments must be positive")


def verify_scalar_psi_convex_regime(m, a, b):
    """Psi(b) - Psi(a) + Psi'(a)(a - b); nonnegative when Psi is convex."""
    _positive(a, b)
    a, b = np.asarray(a, float), np.asarray(b, float)
    return m.psi(b) - m.psi(a) + m.dpsi(a) * (a - b)


def verify_scalar_psi_iv(m, a, b):
    """Psi(b) - Psi(a) - Psi'(a) a^2 (1/a - 1/b); nonnegative when s^2 Psi' is non-decreasing."""
    _positive(a, b)
    a, b = np.asarray(a, float), np.asarray(b, float)
    return m.psi(b) - m.psi(a) - m.dpsi(a) * a * a * (1.0 / a - 1.0 / b)


def sample_scalar(m, which, trials=10_000, seed=0, tol=SCALAR_TOL):
    rng = make_rng(seed, 4)
    a = log_uniform(rng, *SCALAR_RANGE, trials)
    b = log_uniform(rng, *SCALAR_RANGE, trials)
    fn = verify_scalar_psi_iv if which == "iv" else verify_scalar_psi_convex_regime
    slack = fn(m, a, b)
    return _reduce(
        f"scalar_{which}",
        slack,
        lambda j: {"a": float(a[j]), "b": float(b[j])},
        tol,
        0,
        {"psi": m.name},
    )


# ---------------------------------------------------------------------------
# interior lemma


def _interior_parts(f, m, A, B, z):
    """Shared pieces: Psi(F(B)) - Psi(F(A)), Psi'(F(A)) Fdot(A), X, Y."""
    n = A.shape[-1]
    wA, VA = _sym_eigh(A)
    FA = f.value(wA)
    FB = f.value(spectrum(B))
    Fdot = (VA * f.grad(wA)[..., None, :]) @ np.swapaxes(VA, -1, -2)
    I = np.eye(n)
    z = np.asarray(z, dtype=float)[..., None, None]
    X = A - z * I
    Y = B - z * I
    dpsi = m.dpsi(FA)[..., None, None]
    return m.psi(FB) - m.psi(FA), dpsi * Fdot, X, Y


def _bracket(X, Y):
    return X - X @ np.linalg.solve(Y, X)


def interior_slack(f, m, A, B, k):
    """Batched right-hand side with the optimal multiplier (A-kI)(B-kI)^{-1}."""
    dpsi_val, W, X, Y = _interior_parts(f, m, A, B, k)
    return dpsi_val - np.einsum("...ij,...ij->...", W, _bracket(X, Y))


def _check_interior(A, B, k):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.shape[-1] != A.shape[-2]:
        raise PreconditionError("A and B must be square matrices of one shape")
    if not np.allclose(A, np.swapaxes(A, -1, -2)) or not np.allclose(B, np.swapaxes(B, -1, -2)):
        raise PreconditionError("A and B must be symmetric")
    k = np.asarray(k, dtype=float)
    if np.any(~(k > 0)):
        raise PreconditionError("k must be positive")
    if np.any(spectrum(A)[..., 0] <= k) or np.any(spectrum(B)[..., 0] <= k):
        raise PreconditionError("need lambda_min(A) > k and lambda_min(B) > k")
    return A, B, k


def verify_interior_inequality(f, m, A, B, k):
    """Slack of the interior inequality at the closed-form optimal multiplier.

    Raises
    ------
    PreconditionError
        If k <= 0 or either matrix has an eigenvalue <= k.
    """
    A, B, k = _check_interior(A, B, k)
    return float(interior_slack(f, m, A, B, k)) if A.ndim == 2 else interior_slack(f, m, A, B, k)


def q_values(f, m, A, B, z_grid):
    """q(z) on a grid of z in [0, k]."""
    z = np.asarray(z_grid, dtype=float)
    Ab = np.broadcast_to(A, z.shape + A.shape)
    Bb = np.broadcast_to(B, z.shape + B.shape)
    return interior_slack(f, m, Ab, Bb, z)


def verify_q_monotone(f, m, A, B, k, z_grid=None, tol=SLACK_TOL):
    A, B, k = _check_interior(A, B, k)
    z = np.linspace(0.0, float(k), 101) if z_grid is None else np.asarray(z_grid, dtype=float)
    if z.min() < 0 or z.max() > k:
        raise PreconditionError("z_grid must lie in [0, k]")
    q = q_values(f, m, A, B, np.sort(z))
    return bool(np.all(np.diff(q) >= -tol))


def interior_bracket_closed(f, A, B, k):
    """max over Lambda of Fdot(A):(-X + 2 Lambda X - Lambda Y Lambda^T), closed form."""
    _, W, X, Y = _interior_parts(f, _UNIT, A, B, k)
    return -float(np.sum(W * _bracket(X, Y)))


def interior_bracket_grid(f, A, B, k, points=GRID_POINTS):
    """Brute-force maximum of the same quadratic over a points^4 grid (n = 2 only).

    The grid spans [-L, L] per entry with L = |A-kI| |(B-kI)^{-1}| (spectral
    norms), an a priori bound on every entry of the maximizer.  Returns the
    grid maximum, its argument and the worst-case loss tr(Fdot) l_max(Y) h^2
    from snapping the maximizer to the grid.
    """
    A = np.asarray(A, float)
    if A.shape != (2, 2):
        raise ValueError("the grid oracle is only run for n = 2")
    _, W, X, Y = _interior_parts(f, _UNIT, A, np.asarray(B, float), k)
    sY = np.linalg.eigvalsh(Y)
    L = np.abs(np.linalg.eigvalsh(X)).max() / sY[0]
    grid = np.linspace(-L, L, points)
    h = grid[1] - grid[0]
    best, arg = kernels.lambda_grid_max(W, X, Y, grid)
    loss = float(np.trace(W)) * sY[-1] * h * h
    return float(best), arg, loss


_UNIT = Modulator("identity")


def sample_interior(f, m, trials=10_000, seed=0, tol=SLACK_TOL):
    rng = make_rng(seed, 5)
    A, lamA = random_spd(rng, f.n, trials, *EIG_RANGE)
    B, lamB = random_spd(rng, f.n, trials, *EIG_RANGE)
    lmin = np.minimum(lamA.min(axis=1), lamB.min(axis=1))
    k = rng.uniform(0.0, 0.9, trials) * lmin
    k = np.where(k > 0, k, 0.45 * lmin)
    slack = interior_slack(f, m, A, B, k)
    return _reduce(
        "interior",
        slack,
        lambda j: {"A": A[j], "B": B[j], "k": float(k[j])},
        tol,
        0,
        {"speed": f.name, "psi": m.name, "dim": f.n},
    )


def sample_interior_instances(n, count, seed):
    """(A, B, k) triples drawn the same way as in ``sample_interior``."""
    rng = make_rng(seed, 6)
    A, lamA = random_spd(rng, n, count, *EIG_RANGE)
    B, lamB = random_spd(rng, n, count, *EIG_RANGE)
    k = rng.uniform(0.0, 0.9, count) * np.minimum(lamA.min(axis=1), lamB.min(axis=1))
    return A, B, k


def sample_q_monotone(f, m, trials=1_000, seed=0, tol=SLACK_TOL, points=101):
    A, B, k = sample_interior_instances(f.n, trials, seed)
    t = np.linspace(0.0, 1.0, points)
    z = k[:, None] * t[None, :]
    q = interior_slack(f, m, A[:, None], B[:, None], z)
    steps = np.diff(q, axis=1).min(axis=1)
    return _reduce(
        "q_monotone",
        steps,
        lambda j: {"A": A[j], "B": B[j], "k": float(k[j])},
        tol,
        0,
        {"speed": f.name, "psi": m.name, "min_q_k_minus_q_0": float((q[:, -1] - q[:, 0]).min())},
    )


# ---------------------------------------------------------------------------
# boundary lemma


def _check_boundary(f, lam, B):
    lam = np.asarray(lam, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.shape[-2:] != (lam.shape[-1],) * 2:
        raise PreconditionError("B must be n x n")
    if np.any(np.diff(lam, axis=-1) <= 0):
        raise PreconditionError("need lambda_1 < lambda_2 < ... < lambda_n")
    if np.any(np.abs(B[..., 0, 0]) > 0):
        raise PreconditionError("need B_11 = 0")
    if not np.allclose(B, np.swapaxes(B, -1, -2)):
        raise PreconditionError("B must be symmetric")
    if not np.all(f.cone.contains(lam)):
        raise ConeViolation(f"{f.name}: eigenvalues outside {f.cone}")
    return lam, B


def boundary_q(f, m, lam, B):
    g = f.grad(lam)
    H = f.hess(lam)
    F = f.value(lam)
    bd = np.diagonal(B, axis1=-2, axis2=-1)
    q = np.einsum("...p,...pq,...q->...", bd, H, bd)
    dl = lam[..., :, None] - lam[..., None, :]
    dg = g[..., :, None] - g[..., None, :]
    n = lam.shape[-1]
    off = ~np.eye(n, dtype=bool)
    q = q + np.sum(np.where(off, dg / np.where(off, dl, 1.0), 0.0) * B**2, axis=(-2, -1))
    q = q + m.ddpsi(F) / m.dpsi(F) * np.sum(g * bd, axis=-1) ** 2
    gap = lam[..., 1:] - lam[..., :1]
    q = q + 2.0 * np.sum(g[..., :, None] * B[..., :, 1:] ** 2 / gap[..., None, :], axis=(-2, -1))
    return q


def verify_boundary_form(f, m, lam, B):
    """Q at the optimal multiplier for an ordered spectrum and B with B_11 = 0."""
    lam, B = _check_boundary(f, lam, B)
    q = boundary_q(f, m, lam, B)
    return float(q) if np.ndim(q) == 0 else q


def boundary_objective(f, lam, B, Lam):
    """2 sum_i f^i [2 sum_p Lam_ip B_ip - sum_p Lam_ip^2 (lam_p - lam_1)], Lam_i1 = 0."""
    g = f.grad(lam)
    gap = lam - lam[..., :1]
    inner = 2.0 * np.sum(Lam * B, axis=-1) - np.sum(Lam**2 * gap[..., None, :], axis=-1)
    return 2.0 * np.sum(g * inner, axis=-1)


def boundary_multiplier(lam, B):
    gap = lam[..., 1:] - lam[..., :1]
    Lam = np.zeros_like(B)
    Lam[..., :, 1:] = B[..., :, 1:] / gap[..., None, :]
    return Lam


def sample_boundary_instances(n, count, seed):
    rng = make_rng(seed, 7)
    lam = np.sort(sample_distinct(rng, n, count), axis=1)
    B = random_symmetric(rng, n, count)
    B[:, 0, 0] = 0.0
    return lam, B


def sample_boundary(f, m, trials=10_000, seed=0, tol=SLACK_TOL):
    lam, B = sample_boundary_instances(f.n, trials, seed)
    q = boundary_q(f, m, lam, B)
    return _reduce(
        "boundary",
        q,
        lambda j: {"lambda": lam[j], "B": B[j]},
        tol,
        0,
        {"speed": f.name, "psi": m.name, "dim": f.n},
    )


def sample_boundary_multiplier(f, instances=100, per_instance=1_000, seed=0, tol=SLACK_TOL):
    """Closed-form multiplier versus random multipliers with Lam_i1 = 0.

    The slack per instance is objective(closed form) - max over random Lam.
    """
    lam, B = sample_boundary_instances(f.n, instances, seed)
    rng = make_rng(seed, 8)
    n = f.n
    best = boundary_objective(f, lam, B, boundary_multiplier(lam, B))
    gap = (lam[:, 1:] - lam[:, :1]).min(axis=1)
    scale = np.abs(B).max(axis=(1, 2)) / gap
    R = rng.standard_normal((per_instance, instances, n, n)) * scale[None, :, None, None]
    R[..., 0] = 0.0
    rand = boundary_objective(f, lam[None], B[None], R).max(axis=0)
    return _reduce(
        "boundary_multiplier",
        best - rand,
        lambda j: {"lambda": lam[j], "B": B[j]},
        tol,
        0,
        {"speed": f.name},
    )


# ---------------------------------------------------------------------------
# pinching constant


def estimate_pinching_constant(f, C, samples=1_000_000, seed=0, eps=(1e-6, 1e-12)):
    """Sampled lower bound for sup tau_max/tau_min subject to tau_max <= C f_*(tau).

    tau is normalized to tau_max = 1.  Each coordinate is 1 with probability
    0.3 and log-uniform in [1e-4, 1] otherwise; the center ray (1, ..., 1) is
    always included.  The boundary-decay diagnostic evaluates f_* on coupled
    near-boundary samples whose smallest entry is eps[0] and then eps[1]: the
    hypothesis "f_* -> 0 on the boundary" is reported as holding when every
    ratio f_*(eps[1] sample)/f_*(eps[0] sample) is at most 1/2.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    rng = make_rng(seed, 9)
    n = f.n
    dual = DualSpeed(f)
    best = None
    feasible = 0
    chunk = 100_000
    done = 0
    while done < samples:
        size = min(chunk, samples - done)
        tau = np.where(rng.random((size, n)) < 0.3, 1.0, log_uniform(rng, 1e-4, 1.0, (size, n)))
        tau[np.arange(size), rng.integers(0, n, size)] = 1.0
        if done == 0:
            tau[0] = 1.0
        ok = 1.0 <= C * dual.value(tau)
        feasible += int(ok.sum())
        if ok.any():
            ratio = 1.0 / tau[ok].min(axis=1)
            j = int(np.argmax(ratio))
            if best is None or ratio[j] > best[0]:
                best = (float(ratio[j]), tau[ok][j])
        done += size

    # boundary decay of the dual
    count = 1000
    base = log_uniform(rng, 1e-2, 1.0, (count, n))
    base[:, -1] = 1.0
    near = []
    for e in eps:
        t = base.copy()
        t[:, 0] = e
        near.append(dual.value(t))
    ratio = near[1] / near[0]
    report = {
        "speed": f.name,
        "C": float(C),
        "samples": int(samples),
        "feasible": feasible,
        "status": "ok" if best is not None else "constraint infeasible",
        "estimate": best[0] if best else None,
        "argmax_tau": best[1].tolist() if best else None,
        "boundary_min_dual": float(near[1].min()),
        "boundary_max_dual": float(near[1].max()),
        "boundary_decay_ratio": float(ratio.max()),
        "dual_vanishes_on_boundary": bool(ratio.max() <= 0.5),
    }
    return report


# ---------------------------------------------------------------------------
# dispatcher for the command line

LEMMAS = ("interior", "boundary", "scalar-iv", "scalar-convex", "q-monotone")


def run_lemma(lemma, f=None, m=None, trials=10_000, seed=0, tol=None):
    if lemma not in LEMMAS:
        raise ValueError(f"unknown lemma {lemma!r}")
    if lemma in ("scalar-iv", "scalar-convex"):
        which = "iv" if lemma == "scalar-iv" else "convex"
        return sample_scalar(m, which, trials, seed, SCALAR_TOL if tol is None else tol)
    tol = SLACK_TOL if tol is None else tol
    if lemma == "interior":
        return sample_interior(f, m, trials, seed, tol)
    if lemma == "q-monotone":
        return sample_q_monotone(f, m, trials, seed, tol)
    return sample_boundary(f, m, trials, seed, tol)


def theorem_speeds(n):
    """Inverse-concave speeds used by the lemma sweeps."""
    return [PowerMean(1, n), PowerMean(-1, n), SigmaRatioRoot(n, n)]
