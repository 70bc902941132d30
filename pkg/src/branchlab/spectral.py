"""Linear theory on the branched cover: eigenbasis, projections, decay.

Functions on the graph of a cylindrical profile are parameterized by cover
coordinates (r, theta, y) with theta in [0, 4pi).  The angular eigenbasis is
analytic (cosines and sines of half-integer frequencies), the distinguished
span L collects the degree-alpha kernel modes (the c-modes r^alpha cos/sin
and the axis-tilt modes D_i phi . y_j), and the decay check runs the
contraction of radial-derivative integrals across scales.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError
from .quadrature import gauss_legendre_01

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class BasisElement:
    lam: float
    kind: str   # "cos" | "sin" | "const"
    freq: float

    def values(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "const":
            return np.full_like(theta, 1.0 / np.sqrt(FOUR_PI))
        norm = 1.0 / np.sqrt(2.0 * np.pi)
        if self.kind == "cos":
            return np.cos(self.freq * theta) * norm
        return np.sin(self.freq * theta) * norm

    def second_derivative(self, theta):
        return -self.lam * self.values(theta)


class CoverFourierBasis:
    """Orthonormal 4pi-periodic eigenfunctions cos(j theta/2), sin(j theta/2).

    Eigenvalues lambda = (j/2)^2 appear in nondecreasing order; l0(alpha)
    returns the first index with lambda = (alpha-1)^2.
    """

    def __init__(self, max_half_frequency=16):
        elems = [BasisElement(0.0, "const", 0.0)]
        for j in range(1, max_half_frequency + 1):
            f = j / 2.0
            elems.append(BasisElement(f * f, "cos", f))
            elems.append(BasisElement(f * f, "sin", f))
        self.elements = elems

    def __len__(self):
        return len(self.elements)

    def l0(self, alpha):
        target = (alpha - 1.0) ** 2
        for idx, el in enumerate(self.elements):
            if abs(el.lam - target) < 1e-12:
                return idx
        raise ValueError("basis truncated below the requested frequency")

    def matrix(self, theta):
        return np.stack([el.values(theta) for el in self.elements], axis=0)

    def orthonormality_matrix(self, ntheta=512):
        theta = (np.arange(ntheta) + 0.5) * (FOUR_PI / ntheta)
        Phi = self.matrix(theta)
        return Phi @ Phi.T * (FOUR_PI / ntheta)

    def eigen_residual(self, ntheta=64):
        theta = (np.arange(ntheta) + 0.5) * (FOUR_PI / ntheta)
        worst = 0.0
        for el in self.elements:
            res = el.second_derivative(theta) + el.lam * el.values(theta)
            worst = max(worst, float(np.max(np.abs(res))))
        return worst


class CoverFunction:
    """Vector-valued function of (r, theta, y) on the cover, vectorized."""

    def __init__(self, fn, n=2, m=1):
        self.fn = fn
        self.n = int(n)
        self.m = int(m)

    def __call__(self, r, theta, y=None):
        return self.fn(r, theta, y)

    @classmethod
    def blowup(cls, u, prof, scale):
        """(lift of u against prof - prof lift)/scale as a cover function."""

        def fn(r, theta, y=None):
            r = np.asarray(r, dtype=float)
            theta = np.asarray(theta, dtype=float)
            cols = [r * np.cos(theta), r * np.sin(theta)]
            if prof.n > 2:
                yarr = np.asarray(y, dtype=float).reshape(r.shape + (prof.n - 2,))
                for j in range(prof.n - 2):
                    cols.append(yarr[..., j])
            pts_frame = np.stack(cols, axis=-1)
            pts = prof.from_frame(pts_frame.reshape(-1, prof.n))
            s = u.symmetric_values(pts).reshape(r.shape + (u.m,))
            phi = prof.lift(r, theta)
            d_keep = np.sum((s - phi) ** 2, axis=-1)
            d_swap = np.sum((s + phi) ** 2, axis=-1)
            sel = np.where(d_keep <= d_swap, 1.0, -1.0)
            return (sel[..., None] * s - phi) / scale

        return cls(fn, n=u.n, m=u.m)


def profile_plane_gradient_lift(c0, alpha, r, theta):
    """(D1, D2) of the profile lift Re(c0 r^a e^(i a theta)) on the cover."""
    w = alpha * np.asarray(r, dtype=float) ** (alpha - 1.0) * np.exp(
        1j * (alpha - 1.0) * np.asarray(theta, dtype=float)
    )
    d1 = np.real(w[..., None] * c0)
    d2 = np.real(1j * w[..., None] * c0)
    return d1, d2


def fourier_coefficients(w, r, y, basis, ntheta=256):
    """Angular coefficients of w at fixed (r, y) and the Parseval residual."""
    theta = (np.arange(ntheta) + 0.5) * (FOUR_PI / ntheta)
    dth = FOUR_PI / ntheta
    vals = w(np.full(ntheta, float(r)), theta,
             None if y is None else np.broadcast_to(np.asarray(y, float), (ntheta, len(np.atleast_1d(y)))))
    vals = np.asarray(vals, dtype=float)
    Phi = basis.matrix(theta)
    coeffs = Phi @ vals * dth          # (nl, m)
    total = float(np.sum(vals * vals) * dth)
    parseval_residual = abs(total - float(np.sum(coeffs * coeffs)))
    return coeffs, parseval_residual


# ---------------------------------------------------------------------------
# The span L and its projection


def l_span_elements(c0, alpha, n, m):
    """Basis of L: per-component c-modes plus the 2(n-2) axis-tilt modes."""
    c0 = np.atleast_1d(np.asarray(c0, dtype=complex))
    elems = []
    for k in range(m):
        ek = np.zeros(m)
        ek[k] = 1.0

        def cosmode(r, theta, y=None, ek=ek):
            return (np.asarray(r, float) ** alpha * np.cos(alpha * np.asarray(theta, float)))[..., None] * ek

        def sinmode(r, theta, y=None, ek=ek):
            return (np.asarray(r, float) ** alpha * np.sin(alpha * np.asarray(theta, float)))[..., None] * ek

        elems.append(CoverFunction(cosmode, n, m))
        elems.append(CoverFunction(sinmode, n, m))
    for i in (0, 1):
        for j in range(n - 2):

            def tilt(r, theta, y, i=i, j=j):
                d1, d2 = profile_plane_gradient_lift(c0, alpha, r, theta)
                yj = np.asarray(y, float)[..., j]
                return (d1 if i == 0 else d2) * yj[..., None]

            elems.append(CoverFunction(tilt, n, m))
    return elems


def cover_ball_rule(rho, n, nr=32, ntheta=128, ny=16, grading=2.0):
    """Quadrature nodes (r, theta, y) and weights for B_rho x [0, 4pi) cover."""
    s, ws = gauss_legendre_01(nr)
    theta = (np.arange(ntheta) + 0.5) * (FOUR_PI / ntheta)
    dth = FOUR_PI / ntheta
    if n == 2:
        r = rho * s ** grading
        wr = rho * grading * s ** (grading - 1.0) * ws
        R, T = np.meshgrid(r, theta, indexing="ij")
        W = (wr * r)[:, None] * dth * np.ones_like(T)
        return R.ravel(), T.ravel(), None, W.ravel()
    psi, wpsi = np.polynomial.legendre.leggauss(int(ny))
    psi = psi * (np.pi / 2.0)
    wpsi = wpsi * (np.pi / 2.0)
    ys = rho * np.sin(psi)
    wys = rho * np.cos(psi) * wpsi
    rs_list, th_list, y_list, w_list = [], [], [], []
    for yl, wl in zip(ys, wys):
        rho_l = np.sqrt(max(rho * rho - yl * yl, 0.0))
        if rho_l <= 0:
            continue
        r = rho_l * s ** grading
        wr = rho_l * grading * s ** (grading - 1.0) * ws
        R, T = np.meshgrid(r, theta, indexing="ij")
        W = (wr * r)[:, None] * dth * wl * np.ones_like(T)
        rs_list.append(R.ravel())
        th_list.append(T.ravel())
        y_list.append(np.full(R.size, yl))
        w_list.append(W.ravel())
    return (np.concatenate(rs_list), np.concatenate(th_list),
            np.concatenate(y_list)[:, None], np.concatenate(w_list))


def _eval_cover(f, r, theta, y):
    out = f(r, theta, y)
    return np.asarray(out, dtype=float).reshape(r.shape[0], -1)


@dataclass
class SpectralProjection:
    rho: float
    coefficients: np.ndarray
    psi: CoverFunction
    remainder: CoverFunction
    norm_sq_w: float
    norm_sq_psi: float
    norm_sq_remainder: float

    @property
    def pythagoras_residual(self):
        return abs(self.norm_sq_w - self.norm_sq_psi - self.norm_sq_remainder) / max(
            self.norm_sq_w, 1e-300
        )


def project_L(w, rho, c0, alpha, nr=32, ntheta=128, ny=16, cond_max=1e12):
    """Least-squares projection of w onto L over graph phi0 restricted to B_rho.

    Returns the projection psi_rho and remainder w_rho = w - psi_rho; the
    remainder is L2-orthogonal to every element of L on B_rho.
    """
    elems = l_span_elements(c0, alpha, w.n, w.m)
    r, th, y, wt = cover_ball_rule(rho, w.n, nr=nr, ntheta=ntheta, ny=ny)
    Ev = [_eval_cover(e, r, th, y) for e in elems]
    Wv = _eval_cover(w, r, th, y)
    K = len(elems)
    G = np.zeros((K, K))
    rhs = np.zeros(K)
    for a in range(K):
        for b in range(a, K):
            G[a, b] = G[b, a] = float(np.sum(wt * np.sum(Ev[a] * Ev[b], axis=1)))
        rhs[a] = float(np.sum(wt * np.sum(Ev[a] * Wv, axis=1)))
    condition = np.linalg.cond(G)
    if not np.isfinite(condition) or condition > cond_max:
        raise FitError(f"Gram matrix of L is singular (cond={condition:.2e})")
    coef = np.linalg.solve(G, rhs)

    def psi_fn(r_, th_, y_=None, coef=coef, elems=elems):
        out = None
        for ck, ek in zip(coef, elems):
            term = ck * np.asarray(ek(r_, th_, y_), dtype=float)
            out = term if out is None else out + term
        return out

    psi = CoverFunction(psi_fn, w.n, w.m)

    def rem_fn(r_, th_, y_=None):
        return np.asarray(w(r_, th_, y_), dtype=float) - np.asarray(psi_fn(r_, th_, y_), dtype=float)

    rem = CoverFunction(rem_fn, w.n, w.m)
    nw = float(np.sum(wt * np.sum(Wv * Wv, axis=1)))
    Pv = sum(coef[a] * Ev[a] for a in range(K))
    npsi = float(np.sum(wt * np.sum(Pv * Pv, axis=1)))
    nrem = float(np.sum(wt * np.sum((Wv - Pv) * (Wv - Pv), axis=1)))
    return SpectralProjection(rho, coef, psi, rem, nw, npsi, nrem)


def cover_norm_sq(w, rho, nr=32, ntheta=128, ny=16):
    r, th, y, wt = cover_ball_rule(rho, w.n, nr=nr, ntheta=ntheta, ny=ny)
    Wv = _eval_cover(w, r, th, y)
    return float(np.sum(wt * np.sum(Wv * Wv, axis=1)))


def radial_deviation_integral(w, alpha, rho, inner=0.0, nr=32, ntheta=128, ny=16,
                              fd_eps=1e-4):
    """int over the cover ball (annulus) of R^(2-n) |d/dR (w/R^alpha)|^2.

    The radial derivative acts along rays of (x, y)-space; it is computed by
    central differences of the scaling parameter.
    """
    n = w.n
    r, th, y, wt = cover_ball_rule(rho, n, nr=nr, ntheta=ntheta, ny=ny)
    if inner > 0:
        if n == 2:
            R = r
        else:
            R = np.sqrt(r ** 2 + np.sum(np.asarray(y) ** 2, axis=1))
        keep = R >= inner
        r, th, wt = r[keep], th[keep], wt[keep]
        y = None if y is None else y[keep]
    if n == 2:
        R = r
    else:
        R = np.sqrt(r ** 2 + np.sum(np.asarray(y) ** 2, axis=1))
    lp, lm = 1.0 + fd_eps, 1.0 - fd_eps
    wp = _eval_cover(w, r * lp, th, None if y is None else y * lp) / (lp * R[:, None]) ** alpha
    wm = _eval_cover(w, r * lm, th, None if y is None else y * lm) / (lm * R[:, None]) ** alpha
    dR = (wp - wm) / (2.0 * fd_eps * R[:, None])
    vals = np.sum(dR * dR, axis=1)
    return float(np.sum(wt * R ** (2 - n) * vals))


def half_case_boundary_term(w, p=0, r_sequence=(0.08, 0.04, 0.02, 0.01),
                            ntheta=256, c0=None, alpha=0.5, fd=1e-3):
    """Small-r limit of d^2/dr dy_p of r * int w . D_i phi0 dtheta, i = 1, 2.

    Returns ((limit_1, limit_2), uncertainty, table); the limits vanish for
    blow-ups of minimizers in the half-degree case.
    """
    if w.n < 3:
        raise ValueError("the boundary term involves an axis variable (n >= 3)")
    theta = (np.arange(ntheta) + 0.5) * (FOUR_PI / ntheta)
    dth = FOUR_PI / ntheta

    def F(r, ypt):
        rr = np.full(ntheta, r)
        yy = np.broadcast_to(ypt, (ntheta, w.n - 2))
        vals = np.asarray(w(rr, theta, yy), dtype=float)
        d1, d2 = profile_plane_gradient_lift(c0, alpha, rr, theta)
        f1 = r * float(np.sum(vals * d1) * dth)
        f2 = r * float(np.sum(vals * d2) * dth)
        return np.array([f1, f2])

    rows = []
    for r in r_sequence:
        hr = fd * r
        hy = fd
        ep = np.zeros(w.n - 2)
        ep[p] = hy
        mixed = (F(r + hr, ep) - F(r + hr, -ep) - F(r - hr, ep) + F(r - hr, -ep)) / (4 * hr * hy)
        rows.append((float(r), mixed))
    vals = np.stack([row[1] for row in rows])
    limit = vals[-1]
    unc = float(np.max(np.abs(vals[-1] - vals[-2]))) if len(rows) >= 2 else float("inf")
    low_confidence = len(rows) < 3 or unc > 10 * max(np.max(np.abs(limit)), 1e-14)
    return limit, unc, {"radii": [row[0] for row in rows],
                        "values": vals.tolist(),
                        "low_confidence": low_confidence}


@dataclass
class DecayScaleRow:
    rho: float
    remainder_norm_sq: float
    normalized_remainder: float
    radial_integral_quarter: float
    radial_integral_full: float
    hypothesis_radial_ok: bool
    contraction: float


@dataclass
class DecayReport:
    rows: list
    theta: float
    lhs: float
    rhs_norm: float
    exponent_estimate: float
    hypotheses_ok: bool

    @property
    def contractions(self):
        return [row.contraction for row in self.rows if np.isfinite(row.contraction)]


def remainder_decay_check(w, theta=0.125, scales=(0.25, 0.125, 0.0625), beta1=None,
                    beta2=10.0, c0=None, alpha=0.5, nr=32, ntheta=128, ny=16):
    """Per-scale decay data for the cover function w.

    For each scale rho: the L-remainder norm, the radial-derivative integral
    over B_{rho/4} against the beta2-shaped bound, and the one-step
    contraction of radial-derivative integrals.  The headline comparison is
    theta^(-n-2a) int_{B_theta} |w_theta|^2 against int_{B_1} |w_1|^2, with
    the decay exponent fitted from the per-scale normalized remainders.
    """
    n = w.n
    rows = []
    hyp_ok = True
    for rho in scales:
        proj = project_L(w, rho, c0, alpha, nr=nr, ntheta=ntheta, ny=ny)
        rem_sq = proj.norm_sq_remainder
        i_quarter = radial_deviation_integral(w, alpha, rho / 4.0, nr=nr, ntheta=ntheta, ny=ny)
        i_full = radial_deviation_integral(w, alpha, rho, nr=nr, ntheta=ntheta, ny=ny)
        bound = beta2 * rho ** (-n - 2 * alpha) * rem_sq
        ok = i_quarter <= bound + 1e-14
        hyp_ok = hyp_ok and ok
        contraction = i_quarter / i_full if i_full > 0 else float("nan")
        rows.append(DecayScaleRow(
            rho=float(rho),
            remainder_norm_sq=float(rem_sq),
            normalized_remainder=float(rho ** (-n - 2 * alpha) * rem_sq),
            radial_integral_quarter=float(i_quarter),
            radial_integral_full=float(i_full),
            hypothesis_radial_ok=bool(ok),
            contraction=float(contraction),
        ))
    proj_theta = project_L(w, theta, c0, alpha, nr=nr, ntheta=ntheta, ny=ny)
    lhs = theta ** (-n - 2 * alpha) * proj_theta.norm_sq_remainder
    proj_one = project_L(w, 1.0, c0, alpha, nr=nr, ntheta=ntheta, ny=ny)
    rhs = proj_one.norm_sq_remainder
    xs = np.array([row.rho for row in rows])
    ys = np.array([max(row.normalized_remainder, 1e-300) for row in rows])
    if xs.shape[0] >= 2 and np.all(ys > 1e-250):
        slope = np.polyfit(np.log(xs), np.log(ys), 1)[0]
    else:
        slope = float("inf")
    return DecayReport(rows=rows, theta=float(theta), lhs=float(lhs),
                       rhs_norm=float(rhs), exponent_estimate=float(slope),
                       hypotheses_ok=bool(hyp_ok))


# ---------------------------------------------------------------------------
# Grid container and exports


@dataclass
class SpectralDecomp:
    rs: np.ndarray
    ys: np.ndarray
    coefficients: np.ndarray          # (nl, nr, ny, m)
    basis: CoverFourierBasis = field(repr=False, default=None)
    projections: dict = field(default_factory=dict)  # rho -> coefficient vector

    def to_csv(self, path):
        nl, nr, ny, m = self.coefficients.shape
        with open(path, "w") as fh:
            fh.write("l,r,y," + ",".join(f"w_l_{k+1}" for k in range(m)) + "\n")
            for l in range(nl):
                for ir in range(nr):
                    for iy in range(ny):
                        row = [str(l), repr(float(self.rs[ir])),
                               repr(float(self.ys[iy]) if self.ys.size else 0.0)]
                        row += [repr(float(v)) for v in self.coefficients[l, ir, iy]]
                        fh.write(",".join(row) + "\n")

    def projections_to_json(self, path):
        data = {repr(float(rho)): [float(v) for v in coef]
                for rho, coef in sorted(self.projections.items())}
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")


def spectral_decompose(w, rs, ys=None, basis=None, scales=(), c0=None, alpha=0.5,
                       ntheta=256):
    """Tabulate angular coefficients of w on a grid, with optional projections."""
    basis = basis or CoverFourierBasis()
    rs = np.asarray(rs, dtype=float)
    ys = np.zeros(1) if ys is None or (hasattr(ys, "__len__") and len(ys) == 0) else np.asarray(ys, dtype=float)
    nl = len(basis)
    coeffs = np.zeros((nl, rs.shape[0], ys.shape[0], w.m))
    for ir, r in enumerate(rs):
        for iy, yv in enumerate(ys):
            yarg = None if w.n == 2 else np.array([yv])
            ck, _ = fourier_coefficients(w, r, yarg, basis, ntheta=ntheta)
            coeffs[:, ir, iy] = ck
    decomp = SpectralDecomp(rs, ys if w.n > 2 else np.zeros(0), coeffs, basis)
    for rho in scales:
        proj = project_L(w, rho, c0, alpha)
        decomp.projections[float(rho)] = proj.coefficients
    return decomp
