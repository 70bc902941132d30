"""Two-valued fields on balls: analytic model families and sampled data.

Analytic fields expose vectorized evaluation of one branch representative of
the symmetric part together with the matching gradient; all quadrature
integrands used by the lab (|u|^2, |Du|^2, pair metrics) are invariant under
the branch choice, so a per-point representative is exact for integration.
Lift-sensitive operations (profile fits, graphical decomposition) work in
explicit cover coordinates instead.
"""

import itertools
import numpy as np

from .errors import (
    DegenerateRescaleError,
    DimensionMismatchError,
    PairingError,
    SingularEvaluationError,
)
from .pairspace import UnorderedPair, metric_sq_arrays, metric_sq_symmetric
from .quadrature import Ball, QuadratureSpec, unit_ball


def _as_points(X, n):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != n:
        raise DimensionMismatchError(f"points have dimension {X.shape[1]}, field has n={n}")
    return X, single


class Field:
    """Base class; subclasses fill in symmetric/average values and gradients."""

    n = None
    m = None
    domain = None

    def average_values(self, X):
        return np.zeros((X.shape[0], self.m))

    def average_gradient(self, X):
        return np.zeros((X.shape[0], self.m, self.n))

    def symmetric_values(self, X):
        raise NotImplementedError

    def symmetric_gradient(self, X):
        raise NotImplementedError

    def pair_values(self, X):
        h = self.average_values(X)
        s = self.symmetric_values(X)
        return h + s, h - s

    def eval(self, X):
        X, _ = _as_points(X, self.n)
        a1, a2 = self.pair_values(X)
        return UnorderedPair(a1[0], a2[0])

    def eval_gradient(self, X):
        """Pair of m x n matrices, ordered consistently with eval."""
        X, _ = _as_points(X, self.n)
        dh = self.average_gradient(X)
        ds = self.symmetric_gradient(X)
        if not np.all(np.isfinite(ds)):
            raise SingularEvaluationError(f"gradient singular at {X[0].tolist()}")
        return dh[0] + ds[0], dh[0] - ds[0]

    @property
    def is_symmetric(self):
        return True


def _xy_split(X, n):
    x1, x2 = X[:, 0], X[:, 1]
    r = np.hypot(x1, x2)
    theta = np.arctan2(x2, x1)
    y = X[:, 2:] if n > 2 else None
    return r, theta, y


class CylindricalMode:
    """One mode r^beta (a cos(f theta) + b sin(f theta)) (y0 + ylin . y)."""

    __slots__ = ("beta", "freq", "a", "b", "y0", "ylin")

    def __init__(self, beta, freq, a, b, y0=1.0, ylin=None):
        self.beta = float(beta)
        self.freq = float(freq)
        self.a = np.atleast_1d(np.asarray(a, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        self.y0 = float(y0)
        self.ylin = None if ylin is None else np.asarray(ylin, dtype=float)
        if self.a.shape != self.b.shape:
            raise DimensionMismatchError("mode coefficient shapes differ")


class CylindricalModeField(Field):
    """Finite sum of half-integer cylindrical modes, values {+-s(X)}.

    The pair {+-s} is well defined on the base space only when all angular
    frequencies 2*freq share one parity (all odd half-integers or all
    integers); the constructor enforces this.
    """

    def __init__(self, modes, n=2, average=None, domain=None):
        self.modes = list(modes)
        if not self.modes:
            raise ValueError("need at least one mode")
        self.n = int(n)
        self.m = self.modes[0].a.shape[0]
        parities = set()
        for md in self.modes:
            if md.a.shape[0] != self.m:
                raise DimensionMismatchError("modes have inconsistent m")
            two_f = 2.0 * md.freq
            if abs(two_f - round(two_f)) > 1e-12:
                raise ValueError(f"angular frequency {md.freq} is not half-integer")
            parities.add(int(round(two_f)) % 2)
            if md.ylin is not None and md.ylin.shape[0] != self.n - 2:
                raise DimensionMismatchError("ylin length must be n-2")
        if len(parities) > 1:
            raise ValueError("mixed angular parities give an ill-defined unordered pair")
        self.parity = parities.pop()
        self.average = average
        self.domain = domain if domain is not None else unit_ball(self.n)

    @classmethod
    def power_sum(cls, terms, n=2, m=None, average=None, domain=None):
        """Harmonic field {+-Re(sum_j c_j z^(k_j/2))}; terms = [(c, k), ...]."""
        modes = []
        for c, k in terms:
            c = np.atleast_1d(np.asarray(c, dtype=complex))
            modes.append(CylindricalMode(k / 2.0, k / 2.0, c.real, -c.imag))
        f = cls(modes, n=n, average=average, domain=domain)
        if m is not None and f.m != m:
            raise DimensionMismatchError(f"terms have m={f.m}, expected {m}")
        return f

    def power_terms(self):
        """Back out (c, k) pairs for harmonic modes; None if a mode is not one."""
        out = []
        for md in self.modes:
            if md.beta != md.freq or md.ylin is not None or md.y0 != 1.0:
                return None
            out.append((md.a - 1j * md.b, int(round(2 * md.freq))))
        return out

    def _yfactor(self, md, y):
        if y is None or y.shape[1] == 0:
            return md.y0
        if md.ylin is None:
            return md.y0
        return md.y0 + y @ md.ylin

    def symmetric_values(self, X):
        X, _ = _as_points(X, self.n)
        r, theta, y = _xy_split(X, self.n)
        out = np.zeros((X.shape[0], self.m))
        for md in self.modes:
            rad = r ** md.beta
            ang = np.cos(md.freq * theta)[:, None] * md.a + np.sin(md.freq * theta)[:, None] * md.b
            yf = self._yfactor(md, y)
            yf = yf[:, None] if np.ndim(yf) == 1 else yf
            out += rad[:, None] * ang * yf
        return out

    def symmetric_gradient(self, X):
        X, _ = _as_points(X, self.n)
        r, theta, y = _xy_split(X, self.n)
        N = X.shape[0]
        out = np.zeros((N, self.m, self.n))
        ct, st = np.cos(theta), np.sin(theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            for md in self.modes:
                cf = np.cos(md.freq * theta)
                sf = np.sin(md.freq * theta)
                ang = cf[:, None] * md.a + sf[:, None] * md.b
                dang = md.freq * (-sf[:, None] * md.a + cf[:, None] * md.b)
                yf = self._yfactor(md, y)
                yf = yf[:, None] if np.ndim(yf) == 1 else np.full((N, 1), yf)
                ds_dr = md.beta * r[:, None] ** (md.beta - 1.0) * ang * yf
                ds_dt_over_r = r[:, None] ** (md.beta - 1.0) * dang * yf
                out[:, :, 0] += ct[:, None] * ds_dr - st[:, None] * ds_dt_over_r
                out[:, :, 1] += st[:, None] * ds_dr + ct[:, None] * ds_dt_over_r
                if self.n > 2 and md.ylin is not None:
                    rad = (r ** md.beta)[:, None]
                    out[:, :, 2:] += rad[:, :, None] * ang[:, :, None] * md.ylin[None, None, :]
        return out

    def average_values(self, X):
        X, _ = _as_points(X, self.n)
        if self.average is None:
            return np.zeros((X.shape[0], self.m))
        return self.average.value(X)

    def average_gradient(self, X):
        X, _ = _as_points(X, self.n)
        if self.average is None:
            return np.zeros((X.shape[0], self.m, self.n))
        return self.average.gradient(X)

    @property
    def is_symmetric(self):
        return self.average is None

    def lift_values(self, r, theta, y=None):
        """Exact continuous lift of the symmetric part on the 4pi cover."""
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(r.shape + (self.m,))
        for md in self.modes:
            ang = np.cos(md.freq * theta)[..., None] * md.a + np.sin(md.freq * theta)[..., None] * md.b
            yf = md.y0
            if md.ylin is not None and y is not None:
                yf = md.y0 + np.asarray(y, dtype=float) @ md.ylin
                yf = yf[..., None]
            out += (r ** md.beta)[..., None] * ang * yf
        return out

    def min_beta(self):
        return min(md.beta for md in self.modes)

    def rescaled_exact(self, Y, rho, scale):
        """Exact reparameterization s(Y + rho X)/scale for Y on the axis."""
        Y = np.asarray(Y, dtype=float)
        if np.hypot(Y[0], Y[1]) > 0:
            return None
        if self.average is not None:
            return None
        modes = []
        for md in self.modes:
            fac = rho ** md.beta / scale
            if md.ylin is None:
                y0, ylin = md.y0, None
            else:
                y0 = md.y0 + float(md.ylin @ Y[2:])
                ylin = md.ylin * rho
            modes.append(CylindricalMode(md.beta, md.freq, md.a * fac, md.b * fac, y0, ylin))
        return CylindricalModeField(modes, n=self.n, domain=unit_ball(self.n))


class BranchPolynomialField(Field):
    """Values {+- Re(c (P(z) - q(y))^(1/2))}, z = x1 + i x2.

    With the default c the value is the complex square root itself read as a
    vector in R^2, so the symmetric part vanishes exactly on the zero set of
    P - q.  Any fixed branch of the square root is taken per point; only the
    unordered pair is exposed, so branch cuts never leak.
    """

    def __init__(self, coeffs, c=None, n=2, qfun=None, qgrad=None, average=None, domain=None):
        self.coeffs = np.asarray(coeffs, dtype=complex)  # ascending powers of z
        if c is None:
            c = np.array([1.0, -1.0j])
        self.c = np.atleast_1d(np.asarray(c, dtype=complex))
        self.m = self.c.shape[0]
        self.n = int(n)
        self.qfun = qfun
        self.qgrad = qgrad
        if qfun is not None and self.n < 3:
            raise DimensionMismatchError("y-dependent shift needs n >= 3")
        self.average = average
        self.domain = domain if domain is not None else unit_ball(self.n)

    def _P(self, z, y):
        p = np.polynomial.polynomial.polyval(z, self.coeffs)
        if self.qfun is not None:
            p = p - self.qfun(y)
        return p

    def _dP(self, z):
        dcoef = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(z, dcoef)

    def _w(self, X):
        z = X[:, 0] + 1j * X[:, 1]
        y = X[:, 2:] if self.n > 2 else None
        return np.sqrt(self._P(z, y)), z, y

    def symmetric_values(self, X):
        X, _ = _as_points(X, self.n)
        w, _, _ = self._w(X)
        return np.real(w[:, None] * self.c[None, :])

    def symmetric_gradient(self, X):
        X, _ = _as_points(X, self.n)
        w, z, y = self._w(X)
        with np.errstate(divide="ignore", invalid="ignore"):
            dwdz = self._dP(z) / (2.0 * w)
        N = X.shape[0]
        out = np.zeros((N, self.m, self.n))
        out[:, :, 0] = np.real(dwdz[:, None] * self.c[None, :])
        out[:, :, 1] = np.real(1j * dwdz[:, None] * self.c[None, :])
        if self.qfun is not None:
            qg = np.asarray(self.qgrad(y))  # (N, n-2)
            with np.errstate(divide="ignore", invalid="ignore"):
                dwdy = -qg / (2.0 * w[:, None])
            out[:, :, 2:] = np.real(dwdy[:, None, :] * self.c[None, :, None])
        return out

    def average_values(self, X):
        X, _ = _as_points(X, self.n)
        if self.average is None:
            return np.zeros((X.shape[0], self.m))
        return self.average.value(X)

    def average_gradient(self, X):
        X, _ = _as_points(X, self.n)
        if self.average is None:
            return np.zeros((X.shape[0], self.m, self.n))
        return self.average.gradient(X)

    @property
    def is_symmetric(self):
        return self.average is None

    def branch_points(self):
        """Zeros of P inside the domain (constant-coefficient case only)."""
        if self.qfun is not None:
            return None
        roots = np.polynomial.polynomial.polyroots(self.coeffs)
        return [np.array([zr.real, zr.imag]) for zr in roots]

    def rescaled_exact(self, Y, rho, scale):
        if self.qfun is not None or self.average is not None:
            return None
        Y = np.asarray(Y, dtype=float)
        if self.n > 2 and np.any(Y[2:] != 0.0):
            return None
        z0 = Y[0] + 1j * Y[1]
        shifted = _shift_poly(self.coeffs, z0)
        deg = len(shifted) - 1
        scaled = shifted * (rho ** np.arange(deg + 1))
        return BranchPolynomialField(
            scaled / (scale * scale), c=self.c, n=self.n, domain=unit_ball(self.n)
        )


def _shift_poly(coeffs, z0):
    """Coefficients of P(z0 + w) in powers of w."""
    deg = len(coeffs) - 1
    out = np.zeros(deg + 1, dtype=complex)
    for k, a in enumerate(coeffs):
        binom = 1.0
        for j in range(k + 1):
            out[j] += a * binom * z0 ** (k - j)
            binom = binom * (k - j) / (j + 1)
    return out


class Polynomial:
    """Vector-valued polynomial, stored as monomial exponents and coefficients."""

    def __init__(self, exponents, coeffs, n):
        self.exponents = [tuple(int(e) for e in ex) for ex in exponents]
        self.coeffs = [np.atleast_1d(np.asarray(c, dtype=float)) for c in coeffs]
        self.n = int(n)
        self.m = self.coeffs[0].shape[0] if self.coeffs else 1

    def value(self, X):
        X = np.asarray(X, dtype=float)
        out = np.zeros((X.shape[0], self.m))
        for ex, c in zip(self.exponents, self.coeffs):
            mono = np.ones(X.shape[0])
            for axis, e in enumerate(ex):
                if e:
                    mono = mono * X[:, axis] ** e
            out += mono[:, None] * c
        return out

    def gradient(self, X):
        X = np.asarray(X, dtype=float)
        out = np.zeros((X.shape[0], self.m, self.n))
        for ex, c in zip(self.exponents, self.coeffs):
            for axis, e in enumerate(ex):
                if not e:
                    continue
                mono = np.full(X.shape[0], float(e))
                for ax2, e2 in enumerate(ex):
                    p = e2 - 1 if ax2 == axis else e2
                    if p:
                        mono = mono * X[:, ax2] ** p
                out[:, :, axis] += mono[:, None] * c
        return out


def monomial_exponents(n, degree):
    out = []
    for total in range(degree + 1):
        for ex in itertools.combinations_with_replacement(range(n), total):
            e = [0] * n
            for axis in ex:
                e[axis] += 1
            out.append(tuple(e))
    return out


def harmonic_polynomial_basis(n, degree):
    """Basis of harmonic polynomials of degree <= degree on R^n.

    Computed as the nullspace of the Laplacian acting on monomial
    coefficients; returns a list of scalar Polynomial objects.
    """
    exps = monomial_exponents(n, degree)
    index = {e: i for i, e in enumerate(exps)}
    # Laplacian as a matrix on monomial coefficients: L[target_exp, source_exp]
    L = np.zeros((len(exps), len(exps)))
    for e in exps:
        j = index[e]
        for axis in range(n):
            k = e[axis]
            if k >= 2:
                tgt = list(e)
                tgt[axis] -= 2
                L[index[tuple(tgt)], j] += k * (k - 1)
    _, s, vt = np.linalg.svd(L)
    tol = max(L.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)
    null = vt[np.sum(s > tol):].T if s.size else np.eye(len(exps))
    basis = []
    for col in range(null.shape[1]):
        vec = null[:, col]
        keep = np.abs(vec) > 1e-13
        basis.append(
            Polynomial(
                [exps[i] for i in range(len(exps)) if keep[i]],
                [np.array([vec[i]]) for i in range(len(exps)) if keep[i]],
                n,
            )
        )
    return basis


class RescaledField(Field):
    """View u_{Y,rho}(X) = u(Y + rho X) / scale on the unit ball."""

    def __init__(self, base, Y, rho, scale):
        self.base = base
        self.Y = np.asarray(Y, dtype=float)
        self.rho = float(rho)
        self.scale = float(scale)
        self.n = base.n
        self.m = base.m
        self.domain = unit_ball(self.n)

    def _map(self, X):
        return self.Y[None, :] + self.rho * X

    def symmetric_values(self, X):
        X, _ = _as_points(X, self.n)
        return self.base.symmetric_values(self._map(X)) / self.scale

    def symmetric_gradient(self, X):
        X, _ = _as_points(X, self.n)
        return self.base.symmetric_gradient(self._map(X)) * (self.rho / self.scale)

    def average_values(self, X):
        X, _ = _as_points(X, self.n)
        return self.base.average_values(self._map(X)) / self.scale

    def average_gradient(self, X):
        X, _ = _as_points(X, self.n)
        return self.base.average_gradient(self._map(X)) * (self.rho / self.scale)

    @property
    def is_symmetric(self):
        return self.base.is_symmetric


def norm_sq(field, ball, spec=None):
    """integral over the ball of |u|^2 = |u1|^2 + |u2|^2."""
    spec = spec or QuadratureSpec()
    rule = spec.ball(ball)
    if field.is_symmetric:
        s = field.symmetric_values(rule.points)
        vals = 2.0 * np.sum(s * s, axis=-1)
    else:
        a1, a2 = field.pair_values(rule.points)
        vals = np.sum(a1 * a1, axis=-1) + np.sum(a2 * a2, axis=-1)
    return rule.integrate_values(vals)


def rescale(field, Y, rho, spec=None, exact=True):
    """L2-normalized rescaling u(Y + rho X) / (rho^(-n/2) ||u||_{L2(B_rho(Y))}).

    Returns an analytically evaluable field on the unit ball; use
    sample(...) to materialize it on a grid.
    """
    Y = np.asarray(Y, dtype=float)
    ball = Ball(tuple(Y), rho)
    if field.domain is not None and not field.domain.contains_ball(ball):
        raise ValueError("rescale ball leaves the field domain")
    nsq = norm_sq(field, ball, spec)
    if not nsq > 0 or nsq < 1e-28:
        raise DegenerateRescaleError(f"zero L2 norm on ball radius {rho} about {Y.tolist()}")
    scale = rho ** (-field.n / 2.0) * np.sqrt(nsq)
    if exact and hasattr(field, "rescaled_exact"):
        ex = field.rescaled_exact(Y, rho, scale)
        if ex is not None:
            return ex
    return RescaledField(field, Y, rho, scale)


def l2_distance_sq(u, v, ball, spec=None):
    """Quadrature of the squared L2 pair distance between u and v on a ball."""
    if u.m != v.m or u.n != v.n:
        raise DimensionMismatchError("fields have mismatched dimensions")
    spec = spec or QuadratureSpec()
    rule = spec.ball(ball)
    if u.is_symmetric and v.is_symmetric:
        vals = metric_sq_symmetric(u.symmetric_values(rule.points), v.symmetric_values(rule.points))
    else:
        u1, u2 = u.pair_values(rule.points)
        v1, v2 = v.pair_values(rule.points)
        vals = metric_sq_arrays(u1, u2, v1, v2)
    return rule.integrate_values(vals)


# ---------------------------------------------------------------------------
# Sampled fields on structured polar grids


def graded_radii(nr, radius, grading=2.0, inner=0.0):
    s = (np.arange(1, nr + 1)) / float(nr)
    return inner + (radius - inner) * s ** grading


class PolarGrid:
    """Polar grid in the (x1,x2)-plane times an optional axis line (n=3)."""

    def __init__(self, rs, thetas, ys=None):
        self.rs = np.asarray(rs, dtype=float)
        self.thetas = np.asarray(thetas, dtype=float)
        self.ys = None if ys is None else np.asarray(ys, dtype=float)

    @property
    def n(self):
        return 2 if self.ys is None else 3

    @property
    def shape(self):
        base = (self.rs.shape[0], self.thetas.shape[0])
        return base if self.ys is None else base + (self.ys.shape[0],)

    def nodes(self):
        R, T = np.meshgrid(self.rs, self.thetas, indexing="ij")
        x1, x2 = R * np.cos(T), R * np.sin(T)
        if self.ys is None:
            return np.stack([x1, x2], axis=-1).reshape(-1, 2)
        pts = []
        for y in self.ys:
            pts.append(np.stack([x1, x2, np.full_like(x1, y)], axis=-1).reshape(-1, 3))
        return np.concatenate(pts)


class SampledField(Field):
    """Two-valued samples on a polar grid, with a propagated local lift.

    The lift stores one branch s_lift of the symmetric part chosen
    continuously along the grid by breadth-first pairing propagation from the
    outermost annulus; hol records the pairing holonomy of each annular loop
    (-1 on genuinely branched data with odd k).
    """

    def __init__(self, grid, s_lift, average=None, symmetric=True, hol=None, domain=None):
        self.grid = grid
        self.n = grid.n
        self.s_lift = np.asarray(s_lift, dtype=float)  # shape (*grid.shape, m)
        self.m = self.s_lift.shape[-1]
        self.avg = None if average is None else np.asarray(average, dtype=float)
        self.symmetric = bool(symmetric)
        self.hol = hol
        self.domain = domain if domain is not None else unit_ball(self.n)

    @property
    def is_symmetric(self):
        return self.symmetric

    # -- interpolation ------------------------------------------------------

    def _locate(self, vals, grid_vals):
        idx = np.searchsorted(grid_vals, vals) - 1
        idx = np.clip(idx, 0, grid_vals.shape[0] - 2)
        t = (vals - grid_vals[idx]) / (grid_vals[idx + 1] - grid_vals[idx])
        return idx, np.clip(t, 0.0, 1.0)

    def _interp_lift(self, X):
        X, _ = _as_points(X, self.n)
        r = np.hypot(X[:, 0], X[:, 1])
        theta = np.mod(np.arctan2(X[:, 1], X[:, 0]), 2.0 * np.pi)
        ir, tr = self._locate(r, self.grid.rs)
        th = self.grid.thetas
        dth = th[1] - th[0]
        jt = np.floor((theta - th[0]) / dth).astype(int)
        tt = (theta - th[0]) / dth - jt
        jt0 = np.mod(jt, th.shape[0])
        jt1 = np.mod(jt + 1, th.shape[0])
        wrap = (jt + 1) >= th.shape[0]
        sgn = np.where(wrap, (self.hol if self.hol is not None else 1.0), 1.0)

        def gather(arr):
            # arr shape (nr, nt, m) -> bilinear in (r, theta) with seam sign
            v00 = arr[ir, jt0]
            v01 = arr[ir, jt1] * sgn[:, None]
            v10 = arr[ir + 1, jt0]
            v11 = arr[ir + 1, jt1] * sgn[:, None]
            return (
                (1 - tr)[:, None] * ((1 - tt)[:, None] * v00 + tt[:, None] * v01)
                + tr[:, None] * ((1 - tt)[:, None] * v10 + tt[:, None] * v11)
            )

        if self.n == 2:
            return gather(self.s_lift), (gather(self.avg) if self.avg is not None else None)
        ys = self.grid.ys
        iy, ty = self._locate(X[:, 2], ys)
        havg = None
        s0 = self._gather3(self.s_lift, ir, tr, jt0, jt1, tt, sgn, iy)
        s1 = self._gather3(self.s_lift, ir, tr, jt0, jt1, tt, sgn, iy + 1)
        out = (1 - ty)[:, None] * s0 + ty[:, None] * s1
        if self.avg is not None:
            h0 = self._gather3(self.avg, ir, tr, jt0, jt1, tt, sgn, iy)
            h1 = self._gather3(self.avg, ir, tr, jt0, jt1, tt, sgn, iy + 1)
            havg = (1 - ty)[:, None] * h0 + ty[:, None] * h1
        return out, havg

    def _gather3(self, arr, ir, tr, jt0, jt1, tt, sgn, iy):
        v00 = arr[ir, jt0, iy]
        v01 = arr[ir, jt1, iy] * sgn[:, None]
        v10 = arr[ir + 1, jt0, iy]
        v11 = arr[ir + 1, jt1, iy] * sgn[:, None]
        return (
            (1 - tr)[:, None] * ((1 - tt)[:, None] * v00 + tt[:, None] * v01)
            + tr[:, None] * ((1 - tt)[:, None] * v10 + tt[:, None] * v11)
        )

    def symmetric_values(self, X):
        s, _ = self._interp_lift(X)
        return s

    def average_values(self, X):
        X, _ = _as_points(X, self.n)
        if self.avg is None:
            return np.zeros((X.shape[0], self.m))
        _, h = self._interp_lift(X)
        return h

    def symmetric_gradient(self, X):
        X, _ = _as_points(X, self.n)
        eps = 1e-5 * self.domain.radius
        out = np.zeros((X.shape[0], self.m, self.n))
        for axis in range(self.n):
            dX = np.zeros_like(X)
            dX[:, axis] = eps
            sp, _ = self._interp_lift(X + dX)
            sm, _ = self._interp_lift(X - dX)
            out[:, :, axis] = (sp - sm) / (2 * eps)
        return out

    # -- serialization ------------------------------------------------------

    def to_csv(self, path):
        shape = self.grid.shape
        with open(path, "w") as fh:
            fh.write("# branchlab sampled-field v1\n")
            fh.write(
                f"# n={self.n} m={self.m} symmetric={int(self.symmetric)} "
                f"hol={int(self.hol) if self.hol is not None else 0}\n"
            )
            fh.write(f"# shape={','.join(str(s) for s in shape)}\n")
            fh.write("# rs=" + ",".join(repr(float(v)) for v in self.grid.rs) + "\n")
            fh.write("# thetas=" + ",".join(repr(float(v)) for v in self.grid.thetas) + "\n")
            if self.grid.ys is not None:
                fh.write("# ys=" + ",".join(repr(float(v)) for v in self.grid.ys) + "\n")
            cols = [f"x{i+1}" for i in range(self.n)]
            cols += [f"a1_{k+1}" for k in range(self.m)] + [f"a2_{k+1}" for k in range(self.m)]
            fh.write(",".join(cols) + "\n")
            nodes = self.grid.nodes()
            if self.n == 3:
                # nodes() orders y outermost; match with explicit reorder
                s = np.moveaxis(self.s_lift, 2, 0).reshape(-1, self.m)
                h = None if self.avg is None else np.moveaxis(self.avg, 2, 0).reshape(-1, self.m)
            else:
                s = self.s_lift.reshape(-1, self.m)
                h = None if self.avg is None else self.avg.reshape(-1, self.m)
            if h is None:
                h = np.zeros_like(s)
            a1 = h + s
            a2 = h - s
            for i in range(nodes.shape[0]):
                row = [repr(float(v)) for v in nodes[i]]
                row += [repr(float(v)) for v in a1[i]]
                row += [repr(float(v)) for v in a2[i]]
                fh.write(",".join(row) + "\n")

    @classmethod
    def from_csv(cls, path):
        meta = {}
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    body = line[1:].strip()
                    if body.startswith(("rs=", "thetas=", "ys=", "shape=")):
                        k, v = body.split("=", 1)
                        meta[k] = v
                    else:
                        for part in body.split():
                            if "=" in part:
                                k, v = part.split("=", 1)
                                meta[k] = v
                    continue
                if line[0].isalpha() or line.startswith("x1"):
                    continue
                rows.append([float(p) for p in line.split(",")])
        n = int(meta["n"])
        m = int(meta["m"])
        hol = int(meta.get("hol", "0")) or None
        shape = tuple(int(s) for s in meta["shape"].split(","))
        rs = np.array([float(v) for v in meta["rs"].split(",")])
        thetas = np.array([float(v) for v in meta["thetas"].split(",")])
        ys = np.array([float(v) for v in meta["ys"].split(",")]) if "ys" in meta else None
        data = np.asarray(rows, dtype=float)
        a1 = data[:, n:n + m]
        a2 = data[:, n + m:n + 2 * m]
        s = (a1 - a2) / 2.0
        h = (a1 + a2) / 2.0
        symmetric = bool(int(meta.get("symmetric", "1")))
        if ys is None:
            s_lift = s.reshape(shape + (m,))
            avg = None if symmetric else h.reshape(shape + (m,))
        else:
            s_lift = np.moveaxis(s.reshape((shape[2], shape[0], shape[1], m)), 0, 2)
            avg = None if symmetric else np.moveaxis(h.reshape((shape[2], shape[0], shape[1], m)), 0, 2)
        grid = PolarGrid(rs, thetas, ys)
        return cls(grid, s_lift, average=avg, symmetric=symmetric, hol=hol)


def propagate_signs(svals, seed_ring=-1):
    """Breadth-first pairing propagation on a polar value array.

    svals has shape (nr, nt, m); returns (signs (nr, nt), holonomy) where
    signs make sign * svals locally continuous sweeping inward from the
    outermost annulus, and holonomy is the sign picked up around a theta
    loop (consistent across rings or a PairingError is raised).

    Matching uses a first-order continuation predictor rather than the bare
    previous value: value curves that swing quickly through a near-zero dip
    would otherwise be mis-paired at coarse angular sampling.
    """
    nr, nt, m = svals.shape
    signs = np.ones((nr, nt))
    hols = np.zeros(nr)
    order = list(range(nr))[::-1] if seed_ring == -1 else list(range(nr))
    prev_ring = None
    for ri in order:
        if prev_ring is not None:
            d_keep = np.sum((svals[ri, 0] - prev_ring[0]) ** 2)
            d_swap = np.sum((svals[ri, 0] + prev_ring[0]) ** 2)
            signs[ri, 0] = 1.0 if d_keep <= d_swap else -1.0
        lift_prev2 = None
        lift_prev = signs[ri, 0] * svals[ri, 0]
        for j in range(1, nt):
            pred = lift_prev if lift_prev2 is None else 2.0 * lift_prev - lift_prev2
            d_keep = np.sum((svals[ri, j] - pred) ** 2)
            d_swap = np.sum((svals[ri, j] + pred) ** 2)
            signs[ri, j] = 1.0 if d_keep <= d_swap else -1.0
            lift_prev2 = lift_prev
            lift_prev = signs[ri, j] * svals[ri, j]
        # holonomy: continue the predictor across the wraparound
        pred = 2.0 * lift_prev - lift_prev2 if lift_prev2 is not None else lift_prev
        first = signs[ri, 0] * svals[ri, 0]
        d_keep = np.sum((first - pred) ** 2)
        d_swap = np.sum((first + pred) ** 2)
        hols[ri] = 1.0 if d_keep <= d_swap else -1.0
        prev_ring = signs[ri][:, None] * svals[ri]
    if not (np.all(hols == 1.0) or np.all(hols == -1.0)):
        bad = int(np.argmax(hols != hols[-1]))
        raise PairingError(
            f"inconsistent pairing holonomy at annulus {bad}", loop=bad
        )
    return signs, float(hols[-1])


def sample(field, grid):
    """Materialize a field on a polar grid, propagating a continuous lift."""
    nodes = grid.nodes()
    s = field.symmetric_values(nodes)
    m = field.m
    if grid.n == 2:
        svals = s.reshape(grid.shape + (m,))
        signs, hol = propagate_signs(svals)
        lift = signs[:, :, None] * svals
        avg = None
        if not field.is_symmetric:
            avg = field.average_values(nodes).reshape(grid.shape + (m,))
        return SampledField(grid, lift, average=avg, symmetric=field.is_symmetric,
                            hol=hol, domain=field.domain)
    nrt = grid.shape[0] * grid.shape[1]
    ny = grid.shape[2]
    svals = np.moveaxis(s.reshape((ny, grid.shape[0], grid.shape[1], m)), 0, 2)
    lift = np.zeros_like(svals)
    hol = None
    prev_slab = None
    for iy in range(ny):
        signs, h = propagate_signs(svals[:, :, iy])
        slab = signs[:, :, None] * svals[:, :, iy]
        if prev_slab is not None:
            d_keep = np.sum((slab - prev_slab) ** 2)
            d_swap = np.sum((slab + prev_slab) ** 2)
            if d_swap < d_keep:
                slab = -slab
        if hol is None:
            hol = h
        elif h != hol:
            raise PairingError(f"holonomy changes along the axis at slab {iy}", loop=iy)
        lift[:, :, iy] = slab
        prev_slab = slab
    avg = None
    if not field.is_symmetric:
        h = field.average_values(nodes)
        avg = np.moveaxis(h.reshape((ny, grid.shape[0], grid.shape[1], m)), 0, 2)
    return SampledField(grid, lift, average=avg, symmetric=field.is_symmetric,
                        hol=hol, domain=field.domain)


def non_stationary_control(m=1):
    """Homogeneity/frequency-mismatched field whose N(rho) strictly decreases."""
    a1 = np.zeros(m); a1[0] = 1.0
    modes = [
        CylindricalMode(0.5, 2.5, a1, np.zeros(m)),
        CylindricalMode(1.5, 0.5, a1, np.zeros(m)),
    ]
    return CylindricalModeField(modes, n=2)


def random_stationary_power_sum(rng, n=2, m=2, max_terms=3):
    """Random harmonic power sum satisfying the stationarity identities.

    Any term with k = 1 gets a coefficient with c . c = 0 (the residue-free
    condition at the branch point); terms with k >= 2 carry free coefficients.
    Exponent parities are kept consistent so the pair is well defined.
    """
    parity = int(rng.integers(0, 2))
    ks = sorted(rng.choice(np.arange(1 if parity else 2, 10, 2), size=rng.integers(1, max_terms + 1), replace=False).tolist())
    terms = []
    for idx, k in enumerate(ks):
        scale = 0.2 ** idx
        if k == 1:
            if m < 2:
                k = 3
                c = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * scale
            else:
                # c = a + i b with |a| = |b|, a.b = 0  =>  c.c = 0
                a = rng.standard_normal(m)
                b = rng.standard_normal(m)
                b = b - (a @ b) / (a @ a) * a
                b = b * (np.linalg.norm(a) / np.linalg.norm(b))
                c = (a + 1j * b) * (scale / np.linalg.norm(a))
        else:
            c = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * scale
        terms.append((c, int(k)))
    return CylindricalModeField.power_sum(terms, n=n)
