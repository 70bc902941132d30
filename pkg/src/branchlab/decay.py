"""Excess-decay iteration, branch detection and tangent extraction.

The iteration rescales a field about a candidate branch point by powers of
theta, refits a cylindrical profile at each scale, and either contracts the
normalized excess geometrically (decay) or finds an axis ball free of
high-frequency points (gap).  Pure-decay runs yield the unique tangent
profile together with fitted decay exponents for the error field.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRescaleError, FitError
from .fields import (RescaledField, harmonic_polynomial_basis, Polynomial,
                     propagate_signs)
from .frequency import FrequencyEstimate, frequency_at_point
from .profiles import CylindricalProfile, excess, fit_profile, profile_distance_sq
from .quadrature import Ball, QuadratureSpec, loglog_slope, unit_ball
from .pairspace import metric_sq_symmetric


def rescale_raw(u, Z, rho, homogeneity):
    """View theta^(-alpha) u(Z + rho X) without L2 normalization."""
    Z = np.asarray(Z, dtype=float)
    scale = rho ** homogeneity
    if hasattr(u, "rescaled_exact"):
        ex = u.rescaled_exact(Z, rho, scale)
        if ex is not None:
            return ex
    return RescaledField(u, Z, rho, scale)


# ---------------------------------------------------------------------------
# Branch detection


@dataclass
class SingularCandidate:
    location: np.ndarray
    s_norm: float
    ds_norm: float
    frequency: FrequencyEstimate
    holonomy: float
    in_zero_set: bool
    in_coincidence_set: bool
    branch_evidence: bool
    stratum: int = None
    stratum_label: str = ""
    ambiguous: bool = False


@dataclass
class SingularReport:
    candidates: list
    grid_spacing: float
    thresholds: dict

    def high_frequency(self, alpha, k_sigma=3.0):
        out = []
        for c in self.candidates:
            if c.frequency.value >= alpha - k_sigma * max(c.frequency.uncertainty, 1e-12):
                out.append(c)
        return out


def _lattice(extent, npts, n):
    axes = [np.linspace(-extent, extent, npts) for _ in range(n)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1), axes


def _polish_minimum(u, X0, h):
    """Refine a |s| minimum by shrinking 3^n lattice scans.

    Moves must decrease the value strictly, so flat directions (a branch
    curve along the axis) do not drag the point away from its seed.
    """
    X = X0.copy()
    cur = float(np.linalg.norm(u.symmetric_values(X[None, :])[0]))
    step = h
    for _ in range(8):
        offsets, _ = _lattice(step, 3, X.shape[0])
        pts = X[None, :] + offsets
        vals = np.linalg.norm(u.symmetric_values(pts), axis=1)
        best = int(np.argmin(vals))
        if vals[best] < cur * (1.0 - 1e-12):
            X = pts[best]
            cur = float(vals[best])
        step /= 2.0
    return X


def _loop_holonomy(u, Z, radius, nsamp=64):
    th = (np.arange(nsamp) + 0.5) * (2.0 * np.pi / nsamp)
    pts = np.zeros((nsamp, u.n))
    pts[:, 0] = Z[0] + radius * np.cos(th)
    pts[:, 1] = Z[1] + radius * np.sin(th)
    if u.n > 2:
        pts[:, 2:] = Z[2:]
    svals = u.symmetric_values(pts)[None, :, :]
    _, hol = propagate_signs(svals)
    return hol


def detect_branch_set(u, extent=0.8, npts=81, spec=None, minimizing=True,
                      freq_radius=None):
    """Scan for symmetric-part zeros, refine, and classify candidates.

    Candidates with frequency below 1/2 (minus estimator noise) are dropped
    in the minimizing class.  The branch evidence is the pairing holonomy of
    a small loop around the candidate: -1 means no local two-sheet split.
    """
    spec = spec or QuadratureSpec(nr=24, ntheta=64, naxis=12, nsphere=128)
    n = u.n
    pts, axes = _lattice(extent, npts, n)
    h = axes[0][1] - axes[0][0]
    svals = np.linalg.norm(u.symmetric_values(pts), axis=1).reshape([npts] * n)
    smax = float(np.max(svals))
    if smax <= 1e-14:
        return SingularReport([], h, {"s": 0.0, "note": "symmetric part vanishes identically"})
    tau_s = smax * (4.0 * h / extent) ** 0.5
    # seeds: lattice local minima of |s| below the resolution-scaled gate
    # (a saddle between two nearby zeros is not a local minimum, so close
    # pairs stay separate)
    is_min = np.ones(svals.shape, dtype=bool)
    for axis in range(n):
        up = np.roll(svals, -1, axis=axis)
        dn = np.roll(svals, 1, axis=axis)
        sl_lo = [slice(None)] * n
        sl_hi = [slice(None)] * n
        sl_lo[axis] = 0
        sl_hi[axis] = -1
        up[tuple(sl_hi)] = np.inf
        dn[tuple(sl_lo)] = np.inf
        is_min &= (svals <= up) & (svals <= dn)
    seeds = [tuple(i) for i in np.argwhere(is_min & (svals <= tau_s))]
    polished = []
    for seed in seeds:
        X0 = np.array([axes[axis][seed[axis]] for axis in range(n)])
        Z = _polish_minimum(u, X0, h)
        if float(np.linalg.norm(Z)) <= extent * 1.2:
            polished.append(Z)
    polished.sort(key=lambda z: tuple(z))
    kept = []
    for Z in polished:
        dup = False
        for W in kept:
            close_plane = np.linalg.norm(Z[:2] - W[:2]) < 1.5 * h
            close_axis = n == 2 or abs(Z[2] - W[2]) < 0.5 * h
            if close_plane and close_axis:
                dup = True
                break
        if not dup:
            kept.append(Z)
    candidates = []
    tau_ds = tau_s / max(extent, 1e-30)
    rmax = freq_radius if freq_radius is not None else min(0.25, 4 * h + 0.05)
    # frequency estimation is the expensive part; sample at most a dozen
    # locations and let the rest inherit the nearest estimate
    ref_ids = sorted({int(round(q)) for q in np.linspace(0, len(kept) - 1, min(12, len(kept)))}) if kept else []
    ests = {}
    for gi in ref_ids:
        try:
            ests[gi] = frequency_at_point(u, kept[gi], rho_max=rmax, nradii=5, spec=spec)
        except Exception:
            ests[gi] = FrequencyEstimate(float("nan"), float("inf"),
                                         np.zeros(0), np.zeros(0), True)
    for gi, Z in enumerate(kept):
        est = ests[min(ests, key=lambda rid: abs(rid - gi))]
        s_norm = float(np.linalg.norm(u.symmetric_values(Z[None, :])[0]))
        dg = u.symmetric_gradient(Z[None, :] + 0.0)[0]
        ds_norm = float(np.linalg.norm(dg)) if np.all(np.isfinite(dg)) else float("inf")
        hol = _loop_holonomy(u, Z, max(2 * h, 0.02))
        cand = SingularCandidate(
            location=Z,
            s_norm=s_norm,
            ds_norm=ds_norm,
            frequency=est,
            holonomy=float(hol),
            in_zero_set=s_norm <= tau_s,
            in_coincidence_set=bool(
                s_norm <= tau_s
                and (not np.isfinite(ds_norm) or ds_norm <= tau_ds or hol < 0)
            ),
            branch_evidence=bool(hol < 0),
        )
        if minimizing and np.isfinite(est.value) and est.value < 0.5 - 3 * max(est.uncertainty, 1e-12) - 0.02:
            continue
        candidates.append(cand)
    return SingularReport(candidates, h, {"s": tau_s})


def gap_probe(report, delta0, alpha, n, k_sigma=3.0, ny=21):
    """Witness y0 with B_delta0(0, y0) free of high-frequency candidates."""
    cands = report.high_frequency(alpha, k_sigma)
    if n == 2:
        centers = [np.zeros(2)]
    else:
        centers = [np.array([0.0, 0.0, y]) for y in np.linspace(-0.5, 0.5, ny)]
    for ctr in centers:
        if all(np.linalg.norm(c.location - ctr) > delta0 for c in cands):
            return ctr[2:] if n > 2 else np.zeros(0)
    return None


# ---------------------------------------------------------------------------
# Decay iteration


def decay_step(u, phi_prev, theta, spec=None, tau=0.05):
    """One excess-decay step at scale ratio theta about the origin.

    Returns (phi_tilde, ratio, excess_theta_sq) where ratio is the
    normalized excess theta^(-n-2a) E(theta)^2 / E(1)^2.
    """
    spec = spec or QuadratureSpec()
    n = u.n
    alpha = phi_prev.alpha
    e1 = excess(u, phi_prev, unit_ball(n), spec)
    u_theta = rescale_raw(u, np.zeros(n), theta, alpha)
    phi_tilde = fit_profile(u_theta, phi_prev.k, tau=tau, spec=spec)
    e_theta = excess(u_theta, phi_tilde, unit_ball(n), spec)
    ratio = e_theta / e1 if e1 > 0 else 0.0
    return phi_tilde, float(ratio), float(e_theta)


@dataclass
class DecayStep:
    j: int
    profile: CylindricalProfile
    excess_sq: float
    ratio: float
    outcome: str               # "decay" | "gap" | "truncated" | "fit-failure"
    gap_witness: np.ndarray = None


@dataclass
class DecayRun:
    center: np.ndarray
    theta: float
    k: int
    steps: list
    outcome: str
    limit_profile: CylindricalProfile
    exponent_estimate: float   # fitted 2*mu
    drift: list                # per-step profile drift excesses
    truncated: bool = False

    def excess_table(self):
        return [(self.theta ** s.j, s.excess_sq, s.ratio) for s in self.steps]

    def to_json_dict(self):
        return {
            "center": [float(v) for v in self.center],
            "theta": self.theta,
            "k": self.k,
            "outcome": self.outcome,
            "exponent_estimate": self.exponent_estimate,
            "steps": [
                {
                    "j": s.j,
                    "scale": self.theta ** s.j,
                    "excess_sq": s.excess_sq,
                    "ratio": s.ratio,
                    "outcome": s.outcome,
                    "profile": s.profile.to_json_dict() if s.profile else None,
                }
                for s in self.steps
            ],
            "drift": [float(v) for v in self.drift],
            "limit_profile": self.limit_profile.to_json_dict() if self.limit_profile else None,
        }


def iterate(u, Z, k, theta=0.125, j_max=4, delta0=None, spec=None,
            probe_gaps=True, min_scale=0.0, tau=0.05, eps0=None):
    """Run the per-scale gap-probe / decay-step loop about Z.

    Stops on a gap witness, a fit failure, exhaustion of j_max, or when the
    scale falls below min_scale (truncation).  When eps0 is given, a
    starting excess above eps0^2 aborts immediately (the smallness gate of
    the iteration scheme).  The limit profile and the log-log exponent of
    the per-step excess come from the recorded steps.
    """
    spec = spec or QuadratureSpec()
    n = u.n
    Z = np.asarray(Z, dtype=float)
    alpha = k / 2.0
    delta0 = delta0 if delta0 is not None else theta / 2.0
    u0 = rescale_raw(u, Z, 1.0, alpha) if np.any(Z != 0) else u
    phi = fit_profile(u0, k, tau=tau, spec=spec)
    e0 = excess(u0, phi, unit_ball(n), spec)
    if eps0 is not None and e0 > eps0 ** 2:
        return DecayRun(Z, float(theta), int(k),
                        [DecayStep(0, phi, float(e0), 1.0, "excess-too-large")],
                        "excess-too-large", phi, float("nan"), [])
    steps = [DecayStep(0, phi, float(e0), 1.0, "decay")]
    drift = []
    outcome = "decay"
    truncated = False
    probe_spec = QuadratureSpec(nr=16, ntheta=48, naxis=8, nsphere=96)
    for j in range(1, j_max + 1):
        scale = theta ** j
        if scale < min_scale:
            truncated = True
            outcome = "truncated"
            break
        uj = rescale_raw(u, Z, theta ** (j - 1), alpha)
        if probe_gaps:
            report = detect_branch_set(uj, extent=0.7,
                                       npts=41 if n == 2 else 21,
                                       spec=probe_spec)
            witness = gap_probe(report, delta0, alpha, n)
            if witness is not None:
                steps.append(DecayStep(j, None, float("nan"), float("nan"),
                                       "gap", gap_witness=witness))
                outcome = "gap"
                break
        try:
            phi_new, ratio, e_new = decay_step(uj, phi, theta, spec=spec, tau=tau)
        except (FitError, DegenerateRescaleError):
            steps.append(DecayStep(j, None, float("nan"), float("nan"), "fit-failure"))
            outcome = "fit-failure"
            break
        drift.append(profile_distance_sq(phi_new, phi, unit_ball(n), spec))
        phi = phi_new
        steps.append(DecayStep(j, phi, e_new, ratio, "decay"))
    scales = np.array([theta ** s.j for s in steps if np.isfinite(s.excess_sq)])
    exc_sq = np.array([s.excess_sq for s in steps if np.isfinite(s.excess_sq)])
    # normalized excess E_j^2 = theta^(-(n+2a) j) * int_{B_theta^j} G^2 is
    # what the step records carry; its log-log slope against the scale
    # estimates 2*mu
    if scales.shape[0] >= 3 and np.all(exc_sq > 1e-300):
        lo = max(0, scales.shape[0] // 6)
        hi = scales.shape[0] - max(1, scales.shape[0] // 6)
        hi = max(hi, lo + 2)
        slope = loglog_slope(scales[lo:hi], exc_sq[lo:hi])
    else:
        slope = float("nan")
    return DecayRun(Z, float(theta), int(k), steps, outcome, phi, float(slope),
                    [float(v) for v in drift], truncated)


# ---------------------------------------------------------------------------
# Tangent expansion


def fit_harmonic_average(u, Z, rho=0.9, degree=4, npts=14):
    """Least-squares harmonic polynomial fit of the average part on a ball."""
    if u.is_symmetric:
        return None
    n = u.n
    basis = harmonic_polynomial_basis(n, degree)
    pts, _ = _lattice(rho / np.sqrt(n), npts, n)
    pts = pts + Z[None, :]
    h = u.average_values(pts)
    A = np.stack([b.value(pts - Z[None, :])[:, 0] for b in basis], axis=1)
    coef, *_ = np.linalg.lstsq(A, h, rcond=None)
    exps = []
    coeffs = []
    for i, b in enumerate(basis):
        for ex, cvec in zip(b.exponents, b.coeffs):
            exps.append(ex)
            coeffs.append(np.asarray(coef[i]) * cvec[0])
    return Polynomial(exps, coeffs, n)


@dataclass
class TangentResult:
    k: int
    c: np.ndarray
    rotation: np.ndarray
    gamma_l2: float
    gamma_sup: float
    constant: float
    sigmas: np.ndarray
    l2_table: np.ndarray
    sup_table: np.ndarray
    is_branch_point: bool = True

    @property
    def l2_slope(self):
        return self.k + self.gamma_l2

    @property
    def sup_slope(self):
        return self.k + self.gamma_sup


def tangent_expansion(u, Z, run, sigmas=None, spec=None):
    """Error-field decay tables against the limit profile of a decay run.

    Tabulates sigma^(-n) int_{B_sigma} |eps|^2 and sup_{B_sigma} |eps|^2
    over a geometric sigma grid and fits the decay exponents by log-log
    regression over the middle two-thirds of scales.
    """
    spec = spec or QuadratureSpec()
    Z = np.asarray(Z, dtype=float)
    prof = run.limit_profile
    n = u.n
    if prof is None or float(np.linalg.norm(prof.c)) < 1e-10:
        return TangentResult(run.k, prof.c if prof is not None else np.zeros(u.m),
                             np.eye(n), float("nan"), float("nan"), float("nan"),
                             np.zeros(0), np.zeros(0), np.zeros(0),
                             is_branch_point=False)
    if sigmas is None:
        sigmas = run.theta ** np.arange(0, max(3, len(run.steps)))
    sigmas = np.asarray(sigmas, dtype=float)
    havg = fit_harmonic_average(u, Z)
    shifted = CylindricalProfile(prof.c, prof.k, A=prof.A, center=Z, n=n)
    l2 = np.zeros_like(sigmas)
    sup = np.zeros_like(sigmas)
    for i, s in enumerate(sigmas):
        ball = Ball(tuple(Z), float(s))
        rule = spec.ball(ball)
        X = rule.points
        sv = u.symmetric_values(X)
        if havg is not None:
            res = u.average_values(X) - havg.value(X - Z[None, :])
        else:
            res = 0.0
        pv = shifted.symmetric_values(X)
        g2 = metric_sq_symmetric(sv, pv)
        if havg is not None:
            g2 = g2 + 2.0 * np.sum(np.atleast_2d(res) ** 2, axis=-1)
        # |eps|^2 per selection = G^2 / 2
        l2[i] = s ** (-n) * rule.integrate_values(g2 / 2.0)
        sup[i] = float(np.max(g2 / 2.0))
    lo = max(0, sigmas.shape[0] // 6)
    hi = max(sigmas.shape[0] - max(1, sigmas.shape[0] // 6), lo + 2)
    l2_slope = loglog_slope(sigmas[lo:hi], np.maximum(l2[lo:hi], 1e-300))
    sup_slope = loglog_slope(sigmas[lo:hi], np.maximum(sup[lo:hi], 1e-300))
    gamma_l2 = l2_slope - run.k
    gamma_sup = sup_slope - run.k
    consts = l2 / sigmas ** (run.k + gamma_l2) if np.isfinite(gamma_l2) else l2
    return TangentResult(
        k=run.k, c=prof.c, rotation=prof.Q, gamma_l2=float(gamma_l2),
        gamma_sup=float(gamma_sup), constant=float(np.max(consts)),
        sigmas=sigmas, l2_table=l2, sup_table=sup,
    )


# ---------------------------------------------------------------------------
# Frequency pinching at nearby centers, and stratification


@dataclass
class PinchReport:
    radii: np.ndarray
    N: np.ndarray
    alpha: float
    eps: float
    max_over: float
    min_over: float
    monotone: bool

    @property
    def passes(self):
        return self.max_over < self.eps ** 2 and self.min_over > -1e-8


def frequency_pinch_check(u, X1, alpha, eps, R_domain=2.0, nradii=12, spec=None):
    """N_{u,X1}(rho) - alpha over the admissible radius range."""
    from .frequency import frequency_profile

    spec = spec or QuadratureSpec()
    X1 = np.asarray(X1, dtype=float)
    if u.domain is not None and u.domain.radius < R_domain - 1e-12:
        raise ValueError(
            f"domain radius {u.domain.radius} too small for R = {R_domain}"
        )
    radii = np.geomspace(0.05, R_domain - 1.0 - float(np.linalg.norm(X1)), nradii)
    prof = frequency_profile(u, X1, radii, spec)
    over = prof.N - alpha
    dN = np.diff(prof.N)
    return PinchReport(radii, prof.N, alpha, eps, float(np.max(over)),
                       float(np.min(over)), bool(np.all(dN >= -1e-8)))


def stratify(report, blowups, spec=None, axis_probe=0.35):
    """Label candidates by the translation invariance of their blow-ups.

    blowups maps candidate index -> CylindricalProfile.  At desk scale the
    labels are stratum 0 (isolated, n = 2) and stratum 1 (cylindrical,
    n = 3 axis-invariant); n = 3 candidates without axis neighbors on both
    sides are flagged ambiguous.
    """
    spec = spec or QuadratureSpec(nr=20, ntheta=48, naxis=10, nsphere=96)
    for idx, cand in enumerate(report.candidates):
        prof = blowups.get(idx)
        if prof is None:
            cand.stratum_label = "unclassified"
            continue
        n = prof.n
        if n == 2:
            cand.stratum = 0
            cand.stratum_label = "isolated"
            continue
        axis_pt = prof.from_frame(np.array([[0.0, 0.0, axis_probe]]))[0]
        est_axis = frequency_at_point(prof, axis_pt, rho_max=0.2, spec=spec)
        est_zero = frequency_at_point(prof, prof.center, rho_max=0.2, spec=spec)
        invariant = abs(est_axis.value - est_zero.value) <= 0.05 + 3 * (
            est_axis.uncertainty + est_zero.uncertainty
        )
        cand.stratum = 1 if invariant else 0
        cand.stratum_label = "cylindrical" if invariant else "isolated"
        others = [c.location for j, c in enumerate(report.candidates) if j != idx]
        if others:
            ys = np.array([o[2] - cand.location[2] for o in others
                           if np.linalg.norm(o[:2] - cand.location[:2]) < 0.2])
            has_above = np.any(ys > 0.01)
            has_below = np.any(ys < -0.01)
            cand.ambiguous = not (has_above and has_below)
        else:
            cand.ambiguous = True
    return report
