"""Nonlinear least-squares fitters for the cascade observables.

All fitters run on a shared damped least-squares (Levenberg-Marquardt)
engine with analytic Jacobians: damping starts at 1e-3, grows tenfold on a
rejected step and shrinks tenfold on an accepted one; convergence is a
relative parameter change below 1e-9, with a 200-iteration cap.  Parameter
errors come from the curvature matrix at the optimum, scaled by the reduced
chi-square when no measurement errors are supplied.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import erf

from .cascade import (
    FWHM_TO_SIGMA,
    HBAR_UEV_PS,
    exp_conv_gauss,
    exp_conv_gauss_drate,
    fidelity_vs_splitting,
    rabi_population,
)

_LM_LAMBDA0 = 1e-3
_LM_MAX_ITER = 200
_LM_STEP_TOL = 1e-9


@dataclass(frozen=True)
class FitResult:
    """Named parameter estimates with errors and fit diagnostics."""

    params: dict
    stderrs: dict
    chi2_reduced: float
    converged: bool
    n_iterations: int
    degenerate: bool = field(default=False)

    def __post_init__(self):
        if any(v < 0 for v in self.stderrs.values()):
            raise ValueError("stderrs must be non-negative")
        if self.chi2_reduced < 0:
            raise ValueError("chi2_reduced must be non-negative")


def levenberg_marquardt(model_and_jacobian, p0, y, weights=None, max_iterations=_LM_MAX_ITER):
    """Damped least-squares minimization of ||w * (y - model(p))||^2.

    ``model_and_jacobian(p)`` returns the model values and the (n, k)
    Jacobian of the model with respect to the parameters.  Returns the
    parameter vector, its covariance, chi-square, iteration count and a
    convergence flag.
    """
    p = np.asarray(p0, dtype=float).copy()
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)

    def chi2_of(params):
        # wild trial steps may overflow; they come back as inf and are rejected
        with np.errstate(over="ignore", invalid="ignore"):
            model, jac = model_and_jacobian(params)
            r = (y - model) * w
            return float(r @ r), r, jac * w[:, None]

    chi2, resid, jac = chi2_of(p)
    lam = _LM_LAMBDA0
    converged = False
    iterations = 0
    stagnant = 0
    for iterations in range(1, max_iterations + 1):
        jtj = jac.T @ jac
        grad = jac.T @ resid
        try:
            step = np.linalg.solve(jtj + lam * np.diag(np.clip(np.diag(jtj), 1e-30, None)), grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        trial = p + step
        trial_chi2, trial_resid, trial_jac = chi2_of(trial)
        if trial_chi2 <= chi2 and np.all(np.isfinite(trial)):
            rel_change = float(np.linalg.norm(step) / (np.linalg.norm(p) + 1e-300))
            decrease = chi2 - trial_chi2
            p, chi2, resid, jac = trial, trial_chi2, trial_resid, trial_jac
            lam = max(lam / 10.0, 1e-15)
            if rel_change < _LM_STEP_TOL:
                converged = True
                break
            # chi2 numerically flat while an unidentifiable parameter
            # drifts: treat as converged
            stagnant = stagnant + 1 if decrease <= 1e-12 * (1.0 + chi2) else 0
            if stagnant >= 3:
                converged = True
                break
        else:
            lam *= 10.0
            if lam > 1e15:
                converged = True  # step size exhausted; already at a minimum
                break

    dof = max(y.size - p.size, 1)
    jtj = jac.T @ jac
    # rank-aware inverse: directions the data cannot constrain get an
    # effectively unbounded variance instead of a silently projected zero
    vals, vecs = np.linalg.eigh(jtj)
    cutoff = float(np.max(vals)) * 1e-12 if np.max(vals) > 0 else 1.0
    inv_vals = np.where(vals > cutoff, 1.0 / np.clip(vals, 1e-300, None), 1e30)
    cov = (vecs * inv_vals) @ vecs.T
    chi2_red = chi2 / dof
    if weights is None:
        cov = cov * chi2_red
    return p, cov, chi2_red, iterations, converged


def _result(names, p, cov, chi2_red, iterations, converged, extra=None, extra_err=None, degenerate=False):
    params = dict(zip(names, (float(v) for v in p)))
    stderrs = dict(zip(names, (float(np.sqrt(max(cov[i, i], 0.0))) for i in range(len(names)))))
    if extra:
        params.update(extra)
        stderrs.update(extra_err or {k: 0.0 for k in extra})
    return FitResult(params, stderrs, float(chi2_red), bool(converged), int(iterations), degenerate)


# --- lifetime fits ---------------------------------------------------------


def _decay_model(t, params, sigma, species):
    """Decay-curve model A * shape(t - t0) + floor with its Jacobian."""
    lifetimes = params[2:3] if species == "XX" else params[2:4]
    if np.any(np.asarray(lifetimes) <= 1e-3):
        # unphysical trial step: return an infinite misfit so it is rejected
        bad = np.full_like(t, np.inf)
        return bad, np.zeros((t.size, len(params)))
    if species == "XX":
        amp, t0, t1_xx, floor = params
        tt = t - t0
        lam = 1.0 / t1_xx
        h = exp_conv_gauss(tt, lam, sigma)
        dh = exp_conv_gauss_drate(tt, lam, sigma)
        model = amp * lam * h + floor
        d_t0 = -amp * lam * _d_dt_exp_conv(tt, lam, sigma)
        d_t1 = amp * (h + lam * dh) * (-(lam**2))
        jac = np.stack([lam * h, d_t0, d_t1, np.ones_like(tt)], axis=1)
        return model, jac

    amp, t0, t1_xx, t1_x, floor = params
    tt = t - t0
    lam_xx, lam_x = 1.0 / t1_xx, 1.0 / t1_x
    pref = lam_x * lam_xx / (lam_x - lam_xx)
    h_xx = exp_conv_gauss(tt, lam_xx, sigma)
    h_x = exp_conv_gauss(tt, lam_x, sigma)
    shape = pref * (h_xx - h_x)
    model = amp * shape + floor

    dpref_dlxx = lam_x**2 / (lam_x - lam_xx) ** 2
    dpref_dlx = -(lam_xx**2) / (lam_x - lam_xx) ** 2
    dshape_dlxx = dpref_dlxx * (h_xx - h_x) + pref * exp_conv_gauss_drate(tt, lam_xx, sigma)
    dshape_dlx = dpref_dlx * (h_xx - h_x) - pref * exp_conv_gauss_drate(tt, lam_x, sigma)
    d_t0 = -amp * pref * (_d_dt_exp_conv(tt, lam_xx, sigma) - _d_dt_exp_conv(tt, lam_x, sigma))
    jac = np.stack(
        [
            shape,
            d_t0,
            amp * dshape_dlxx * (-(lam_xx**2)),
            amp * dshape_dlx * (-(lam_x**2)),
            np.ones_like(tt),
        ],
        axis=1,
    )
    return model, jac


def _d_dt_exp_conv(t, rate, sigma):
    """Time derivative of the Gaussian-convolved exponential kernel."""
    if sigma == 0.0:
        return np.where(t >= 0.0, -rate * np.exp(-rate * np.clip(t, 0.0, None)), 0.0)
    gauss = np.exp(-(t * t) / (2.0 * sigma * sigma)) / (np.sqrt(2.0 * np.pi) * sigma)
    return gauss - rate * exp_conv_gauss(t, rate, sigma)


def fit_decay(hist, irf_fwhm_ps, species="XX"):
    """Fit a cascade decay histogram and return lifetimes with errors.

    The XX model has parameters (amplitude, t0_ps, t1_xx_ps, floor); the X
    model additionally fits t1_x_ps.  Because the rise-and-fall shape is
    symmetric under exchange of its two rates, the X fit reports the faster
    lifetime as t1_xx_ps.  Counts are weighted as Poisson.
    """
    t = hist.delay_centers()
    y = hist.counts.astype(float)
    sigma = irf_fwhm_ps * FWHM_TO_SIGMA
    n_params = 4 if species == "XX" else 5
    if species not in ("XX", "X"):
        raise ValueError(f"species must be 'XX' or 'X', got {species!r}")
    if y.size < n_params + 3:
        raise ValueError(f"need at least {n_params + 3} histogram bins, got {y.size}")

    floor0 = float(np.percentile(y, 10))
    peak_idx = int(np.argmax(y))
    t_peak = t[peak_idx]
    amp_excess = y - floor0
    total = float(np.clip(amp_excess, 0.0, None).sum()) * hist.bin_width_ps

    # crude lifetime from the 1/e point of the decaying tail
    peak_height = max(y[peak_idx] - floor0, 1.0)
    tail = np.where((t > t_peak) & (amp_excess < peak_height / np.e))[0]
    tail_scale = (t[tail[0]] - t_peak) if tail.size else (t[-1] - t_peak) / 3.0
    tail_scale = max(float(tail_scale), hist.bin_width_ps)

    if species == "XX":
        # the (possibly smoothed) edge sits essentially at the peak
        p0 = np.array([total, t_peak - sigma, tail_scale, floor0])
        names = ("amplitude", "t0_ps", "t1_xx_ps", "floor")
    else:
        # the pulse arrival sits near the half-rise point of the leading edge
        before = np.where((t < t_peak) & (amp_excess < peak_height / 2.0))[0]
        t_half_rise = t[before[-1]] if before.size else t_peak - tail_scale
        p0 = np.array([total, t_half_rise - 0.5 * tail_scale, 0.7 * tail_scale, tail_scale, floor0])
        names = ("amplitude", "t0_ps", "t1_xx_ps", "t1_x_ps", "floor")

    weights = 1.0 / np.sqrt(np.clip(y, 1.0, None))

    def model_jac(p):
        return _decay_model(t, p, sigma, species)

    p, cov, chi2_red, iters, ok = levenberg_marquardt(model_jac, p0, y, weights=weights)
    if not ok:
        raise RuntimeError("decay fit did not converge")
    if species == "X" and p[2] > p[3]:
        p[[2, 3]] = p[[3, 2]]
        cov[[2, 3]] = cov[[3, 2]]
        cov[:, [2, 3]] = cov[:, [3, 2]]
    return _result(names, p, cov, chi2_red, iters, ok)


# --- Rabi oscillation fit --------------------------------------------------


def _first_interior_maximum(y):
    for i in range(1, y.size - 1):
        if y[i] >= y[i - 1] and y[i] > y[i + 1]:
            return i
    return None


def fit_rabi(pulse_areas, intensities, yerr=None):
    """Fit damped Rabi oscillations and calibrate the pulse-area axis.

    The model is A * P(s*x, gamma) with P the population curve; ``s`` maps
    the measured abscissa (any units proportional to the square root of the
    excitation power) onto pulse area in radians, placing the first maximum
    at pi.  The fitted maxima positions up to 7 pi are reported (in units of
    pi) as theta_max_1 ... theta_max_7.
    """
    x = np.asarray(pulse_areas, dtype=float)
    y = np.asarray(intensities, dtype=float)
    if x.size < 10:
        raise ValueError(f"need at least 10 points to fit Rabi oscillations, got {x.size}")
    order = np.argsort(x)
    x, y = x[order], y[order]
    if yerr is not None:
        yerr = np.asarray(yerr, dtype=float)[order]

    peak = _first_interior_maximum(y)
    if peak is None:
        raise ValueError("no interior intensity maximum found; data do not oscillate")
    s0 = np.pi / x[peak]
    if s0 * (x[-1] - x[0]) < 2.0 * np.pi:
        raise ValueError("data span less than 2 pi of pulse area after calibration")
    p0 = np.array([float(np.max(y)), s0, 0.05])

    def model_jac(p):
        amp, s, gamma = p
        theta = s * x
        c = gamma / np.pi
        damp = np.exp(np.clip(-c * theta, -700.0, 700.0))
        pop = 0.5 * (1.0 - np.cos(theta) * damp)
        dpop_dtheta = 0.5 * damp * (np.sin(theta) + c * np.cos(theta))
        model = amp * pop
        jac = np.stack(
            [
                pop,
                amp * dpop_dtheta * x,
                amp * 0.5 * np.cos(theta) * (theta / np.pi) * damp,
            ],
            axis=1,
        )
        return model, jac

    weights = None if yerr is None else 1.0 / yerr
    p, cov, chi2_red, iters, ok = levenberg_marquardt(model_jac, p0, y, weights=weights)
    amp, s, gamma = p
    if not ok:
        raise RuntimeError("Rabi fit did not converge")

    # maxima of P at theta = m*pi - arctan(gamma/pi) for odd m
    shift = np.arctan(gamma / np.pi) / np.pi
    dshift = (1.0 / np.pi**2) / (1.0 + (gamma / np.pi) ** 2)
    gamma_err = float(np.sqrt(max(cov[2, 2], 0.0)))
    extra = {f"theta_max_{m}": float(m - shift) for m in (1, 3, 5, 7)}
    extra_err = {f"theta_max_{m}": dshift * gamma_err for m in (1, 3, 5, 7)}
    return _result(
        ("amplitude", "area_scale", "gamma"), p, cov, chi2_red, iters, ok, extra, extra_err
    )


# --- fine-structure splitting from wave-plate rotation ---------------------


@dataclass(frozen=True)
class SpectrumSeries:
    """Spectral line centers of the X and XX emission versus HWP angle."""

    hwp_angles_rad: np.ndarray
    x_centers_uev: np.ndarray
    xx_centers_uev: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.hwp_angles_rad, dtype=float)
        x = np.asarray(self.x_centers_uev, dtype=float)
        xx = np.asarray(self.xx_centers_uev, dtype=float)
        if not (a.size == x.size == xx.size):
            raise ValueError("angle and center arrays must have equal length")
        if a.size < 8:
            raise ValueError(f"need at least 8 angle samples, got {a.size}")
        if np.ptp(a) < np.pi / 2:
            raise ValueError("angle samples must span at least pi/2")
        for name, arr in (("hwp_angles_rad", a), ("x_centers_uev", x), ("xx_centers_uev", xx)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def fit_fss(series, convention="peak-to-peak"):
    """Extract the fine-structure splitting from counter-rotating lines.

    Fits the X-XX center difference to E0 + (S/2) cos(4 alpha + phi), which
    cancels common drifts.  ``convention`` selects whether the reported S is
    the peak-to-peak swing of the difference (default) or the sinusoid
    semi-amplitude.  A splitting consistent with zero at one sigma is
    flagged ``degenerate``.
    """
    if convention not in ("peak-to-peak", "semi-amplitude"):
        raise ValueError(f"unknown convention {convention!r}")
    alpha = series.hwp_angles_rad
    diff = series.x_centers_uev - series.xx_centers_uev

    design = np.stack([np.ones_like(alpha), np.cos(4 * alpha), np.sin(4 * alpha)], axis=1)
    theta, *_ = np.linalg.lstsq(design, diff, rcond=None)
    resid = diff - design @ theta
    dof = max(alpha.size - 3, 1)
    variance = float(resid @ resid) / dof
    cov = np.linalg.inv(design.T @ design) * variance

    e0, a, b = theta
    r = float(np.hypot(a, b))
    scale = 2.0 if convention == "peak-to-peak" else 1.0
    s_value = scale * r
    if r > 0:
        grad = np.array([0.0, scale * a / r, scale * b / r])
        s_err = float(np.sqrt(grad @ cov @ grad))
    else:
        s_err = float(scale * np.sqrt(max(cov[1, 1], cov[2, 2])))
    phase = float(np.arctan2(-b, a))
    phase_err = float(np.sqrt(max(cov[1, 1] + cov[2, 2], 0.0)) / max(r, 1e-30))

    chi2_red = variance
    degenerate = s_value <= s_err
    params = {"fss_uev": float(s_value), "phase_rad": phase, "offset_uev": float(e0)}
    stderrs = {"fss_uev": s_err, "phase_rad": phase_err, "offset_uev": float(np.sqrt(cov[0, 0]))}
    return FitResult(params, stderrs, float(chi2_red), True, 1, degenerate)


# --- Lorentzian fidelity-versus-splitting fit -------------------------------


def fit_lorentzian(s_values, f_values, yerr=None):
    """Fit F(S) = floor + amplitude / (1 + (S/width)^2)."""
    s = np.asarray(s_values, dtype=float)
    f = np.asarray(f_values, dtype=float)
    if s.size < 5:
        raise ValueError(f"need at least 5 points for a Lorentzian fit, got {s.size}")

    floor0 = float(np.min(f))
    amp0 = float(np.max(f) - floor0)
    half = floor0 + amp0 / 2.0
    above = np.abs(s[f > half])
    width0 = float(np.max(above)) if above.size and np.max(above) > 0 else float(np.ptp(s)) / 4.0
    p0 = np.array([amp0 if amp0 > 0 else 1e-3, width0, floor0])

    def model_jac(p):
        amp, width, floor = p
        u = s / width
        denom = 1.0 + u * u
        model = floor + amp / denom
        jac = np.stack(
            [1.0 / denom, amp * (2.0 * u * u / width) / denom**2, np.ones_like(s)], axis=1
        )
        return model, jac

    weights = None if yerr is None else 1.0 / np.asarray(yerr, dtype=float)
    p, cov, chi2_red, iters, ok = levenberg_marquardt(model_jac, p0, f, weights=weights)
    if not ok:
        raise RuntimeError("Lorentzian fit did not converge")
    p[1] = abs(p[1])
    amp_err = float(np.sqrt(max(cov[0, 0], 0.0)))
    return _result(
        ("amplitude", "width_uev", "floor"),
        p,
        cov,
        chi2_red,
        iters,
        ok,
        degenerate=abs(p[0]) <= amp_err,
    )


# --- ensemble statistics ----------------------------------------------------


def _folded_normal_mean(mu, sigma):
    return sigma * np.sqrt(2.0 / np.pi) * np.exp(-(mu**2) / (2.0 * sigma**2)) + mu * erf(
        mu / (np.sqrt(2.0) * sigma)
    )


def folded_normal_parameters(mean, sd):
    """Underlying (mu, sigma) of a folded normal with the given moments.

    Uses E[X^2] = mu^2 + sigma^2 (folding preserves the second moment) to
    reduce the problem to a one-dimensional root find in mu.
    """
    if mean < 0 or sd < 0:
        raise ValueError("folded-normal moments must be non-negative")
    if sd == 0:
        return float(mean), 0.0
    q = mean**2 + sd**2
    limit = np.sqrt(2.0 / np.pi) * np.sqrt(q)
    if mean < limit - 1e-12 * np.sqrt(q):
        raise ValueError(
            f"no folded normal has mean {mean} and sd {sd} (sd/mean too large)"
        )

    def objective(mu):
        sigma = np.sqrt(max(q - mu * mu, 1e-300))
        return _folded_normal_mean(mu, sigma) - mean

    hi = np.sqrt(q) * (1.0 - 1e-12)
    if objective(hi) < 0:
        return float(np.sqrt(q)), 0.0
    mu = brentq(objective, 0.0, hi, xtol=1e-12)
    return float(mu), float(np.sqrt(q - mu * mu))


def ensemble_yield(
    mean_uev=4.8,
    sd_uev=2.4,
    t1_range_ps=(120.0, 220.0),
    k=0.97,
    g1_hv=1.0,
    g1p_hv=1.0,
    n_samples=100_000,
    seed=0,
):
    """Fraction of dots with entanglement fidelity above 0.5.

    Splittings are drawn from the folded normal matching the given mean and
    standard deviation; lifetimes uniformly from ``t1_range_ps``.
    Deterministic given the seed.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 10000")
    rng = np.random.default_rng(seed)
    mu, sigma = folded_normal_parameters(mean_uev, sd_uev)
    s = np.abs(rng.normal(mu, sigma, n_samples)) if sigma > 0 else np.full(n_samples, mu)
    t1 = rng.uniform(t1_range_ps[0], t1_range_ps[1], n_samples)
    f = fidelity_vs_splitting(s, t1, k=k, g1_hv=g1_hv, g1p_hv=g1p_hv)
    return float(np.mean(f > 0.5))


def sample_stats(values):
    """Arithmetic mean and unbiased standard deviation."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("need at least 2 values")
    return float(np.mean(values)), float(np.std(values, ddof=1))


def lorentzian_halfwidth_uev(t1_x_ps, g1_hv=1.0):
    """Half width of the fidelity-versus-splitting Lorentzian, hbar/(g T1)."""
    return HBAR_UEV_PS / (g1_hv * t1_x_ps)
