"""Analytic physics of the biexciton -> exciton -> ground emission cascade.

The finite fine-structure splitting S makes the emitted pair precess between
(|HH> + |VV>)/sqrt(2) and (|HH> - |VV>)/sqrt(2) while the exciton is alive:
the pair state after an exciton dwell time tau is
(|HH> + exp(i S tau / hbar)|VV>)/sqrt(2).  Averaging the projector over the
exponential dwell-time distribution suppresses the HH-VV coherence by
1/(1 + x^2) with x = g S T1 / hbar, which is what makes the
fidelity-versus-splitting trend Lorentzian.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx

from .states import HBAR_UEV_PS, DensityMatrix, TwoPhotonKet, bell_psi_plus

#: Conversion between Gaussian FWHM and standard deviation used everywhere
#: timing jitter appears (simulator, decay curves, fits).
FWHM_TO_SIGMA = 1.0 / 2.355


@dataclass(frozen=True)
class EmitterParams:
    """Physical parameters of one quantum dot.

    fss_uev      fine-structure splitting S of the bright exciton doublet
    t1_xx_ps     radiative lifetime of the biexciton
    t1_x_ps      radiative lifetime of the exciton
    k            fraction of detected pairs that originate from the dot
    g1_hv        fraction unaffected by cross-dephasing and spin scattering
    g1p_hv       fraction unaffected by spin scattering alone
    t_ss_ps      spin-scattering time of the exciton
    wavelength_nm  emission wavelength (bookkeeping only)

    A pair unaffected by both processes is in particular unaffected by spin
    scattering, so g1_hv <= g1p_hv; that ordering is also what keeps the
    ensemble state positive semidefinite.
    """

    fss_uev: float
    t1_xx_ps: float
    t1_x_ps: float
    k: float
    g1_hv: float = 1.0
    g1p_hv: float = 1.0
    t_ss_ps: float = 15000.0
    wavelength_nm: float = 780.2

    def __post_init__(self):
        if self.fss_uev < 0:
            raise ValueError("fss_uev must be >= 0")
        if self.t1_xx_ps <= 0 or self.t1_x_ps <= 0:
            raise ValueError("lifetimes must be > 0")
        if self.t_ss_ps <= 0:
            raise ValueError("t_ss_ps must be > 0")
        for name in ("k", "g1_hv", "g1p_hv"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.g1_hv > self.g1p_hv:
            raise ValueError("g1_hv must not exceed g1p_hv")


@dataclass(frozen=True)
class ExcitationParams:
    """Pulsed two-photon excitation of the biexciton state.

    pulse_area_pi  pulse area Theta in units of pi
    rep_period_ps  laser repetition period (76 MHz -> 13157.9 ps)
    damping_gamma  Rabi damping per pi of pulse area (chirp/scattering losses)
    """

    pulse_area_pi: float
    rep_period_ps: float = 13157.9
    damping_gamma: float = 0.0

    def __post_init__(self):
        if self.rep_period_ps <= 0:
            raise ValueError("rep_period_ps must be > 0")
        if self.pulse_area_pi < 0:
            raise ValueError("pulse_area_pi must be >= 0")
        if self.damping_gamma < 0:
            raise ValueError("damping_gamma must be >= 0")


def _channel_pair(value, name):
    pair = np.broadcast_to(np.asarray(value, dtype=float), (2,)).copy()
    if np.any(pair < 0):
        raise ValueError(f"{name} must be >= 0")
    return (float(pair[0]), float(pair[1]))


@dataclass(frozen=True)
class DetectorParams:
    """Detection chain: timing jitter, per-channel efficiency and dark rate.

    efficiency and dark_rate_hz accept a scalar (both channels) or a pair.
    The defaults are working placeholders, not measured values.
    """

    irf_fwhm_ps: float = 100.0
    efficiency: tuple[float, float] = (0.05, 0.05)
    dark_rate_hz: tuple[float, float] = (100.0, 100.0)
    bin_width_ps: float = 100.0

    def __post_init__(self):
        if self.irf_fwhm_ps < 0:
            raise ValueError("irf_fwhm_ps must be >= 0")
        if self.bin_width_ps <= 0:
            raise ValueError("bin_width_ps must be > 0")
        eff = _channel_pair(self.efficiency, "efficiency")
        if max(eff) > 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        object.__setattr__(self, "efficiency", eff)
        object.__setattr__(self, "dark_rate_hz", _channel_pair(self.dark_rate_hz, "dark_rate_hz"))


def state_at_delay(fss_uev, tau_ps):
    """Two-photon state for an exciton dwell time ``tau_ps``.

    Returns (|HH> + e^{i phi}|VV>)/sqrt(2) with phi = S tau / hbar.
    """
    if tau_ps < 0:
        raise ValueError("tau_ps must be >= 0")
    phi = fss_uev * tau_ps / HBAR_UEV_PS
    return TwoPhotonKet(np.array([1.0, 0.0, 0.0, np.exp(1j * phi)]) / np.sqrt(2.0))


def ensemble_density_matrix(params):
    """Dwell-time-averaged pair state including background admixture.

    The dot contribution has diagonal ((1+g')/4, (1-g')/4, (1-g')/4, (1+g')/4)
    and a VV-HH coherence g (1 + i x) / (2 (1 + x^2)) with
    x = g S T1,X / hbar; a (1-k) isotropic background is mixed in.  Its
    fidelity to the target state reproduces ``predicted_fidelity`` exactly.
    """
    g = params.g1_hv
    gp = params.g1p_hv
    x = g * params.fss_uev * params.t1_x_ps / HBAR_UEV_PS
    coherence = g * (1.0 + 1j * x) / (2.0 * (1.0 + x * x))
    dot = np.diag([(1 + gp) / 4.0, (1 - gp) / 4.0, (1 - gp) / 4.0, (1 + gp) / 4.0]).astype(complex)
    dot[3, 0] = coherence
    dot[0, 3] = np.conj(coherence)
    rho = params.k * dot + (1.0 - params.k) * np.eye(4) / 4.0
    return DensityMatrix(rho)


def predicted_fidelity(params):
    """Fidelity of the ensemble state to the target pair state.

    Evaluates F = (1 + k g' + 2 k g / (1 + x^2)) / 4 with
    x = g S T1,X / hbar.
    """
    g = params.g1_hv
    x = g * params.fss_uev * params.t1_x_ps / HBAR_UEV_PS
    return 0.25 * (1.0 + params.k * params.g1p_hv + 2.0 * params.k * g / (1.0 + x * x))


def fidelity_vs_splitting(fss_uev, t1_x_ps, k=0.97, g1_hv=1.0, g1p_hv=1.0):
    """Vectorized fidelity model, convenient for plotting and sampling."""
    fss = np.asarray(fss_uev, dtype=float)
    x = g1_hv * fss * t1_x_ps / HBAR_UEV_PS
    return 0.25 * (1.0 + k * g1p_hv + 2.0 * k * g1_hv / (1.0 + x * x))


def rabi_population(theta_rad, damping_gamma=0.0):
    """Biexciton population after a pulse of area ``theta_rad``.

    P(Theta) = (1 - cos(Theta) exp(-gamma Theta / pi)) / 2.  Maxima sit at
    odd multiples of pi when gamma = 0 and shift by -arctan(gamma/pi)
    otherwise.
    """
    theta = np.asarray(theta_rad, dtype=float)
    return 0.5 * (1.0 - np.cos(theta) * np.exp(-damping_gamma * theta / np.pi))


def xx_population(excitation):
    """Biexciton population for the configured pulse area."""
    return float(rabi_population(excitation.pulse_area_pi * np.pi, excitation.damping_gamma))


def exp_conv_gauss(t, rate, sigma):
    """One-sided exponential ``exp(-rate*t), t >= 0`` convolved with a Gaussian.

    Closed form (1/2) exp(rate^2 sigma^2/2 - rate t) erfc(z) with
    z = (rate sigma^2 - t) / (sqrt(2) sigma).  Evaluated through erfcx on
    the z >= 0 side and directly on the other, so neither factor overflows
    anywhere on the real line.
    """
    t = np.asarray(t, dtype=float)
    if sigma == 0.0:
        return np.where(t >= 0.0, np.exp(-rate * np.clip(t, 0.0, None)), 0.0)
    z = (rate * sigma * sigma - t) / (np.sqrt(2.0) * sigma)
    out = np.empty_like(t)
    pos = z >= 0.0
    out[pos] = 0.5 * erfcx(z[pos]) * np.exp(-(t[pos] ** 2) / (2.0 * sigma * sigma))
    out[~pos] = 0.5 * erfc(z[~pos]) * np.exp(
        0.5 * (rate * sigma) ** 2 - rate * t[~pos]
    )
    return out


def exp_conv_gauss_drate(t, rate, sigma):
    """Derivative of :func:`exp_conv_gauss` with respect to ``rate``."""
    t = np.asarray(t, dtype=float)
    if sigma == 0.0:
        return np.where(t >= 0.0, -np.clip(t, 0.0, None) * np.exp(-rate * np.clip(t, 0.0, None)), 0.0)
    base = exp_conv_gauss(t, rate, sigma)
    gauss = np.exp(-(t * t) / (2.0 * sigma * sigma)) / (np.sqrt(2.0 * np.pi) * sigma)
    return (rate * sigma * sigma - t) * base - sigma * sigma * gauss


_DEGENERATE_REL_TOL = 1e-9


def cascade_decay_curve(t_ps, emitter, detectors, species="XX"):
    """Normalized emission intensity of one cascade transition versus time.

    The XX branch is a one-sided exponential, the X branch the usual
    rise-and-fall difference of exponentials; both are convolved analytically
    with the Gaussian detector response of ``detectors.irf_fwhm_ps``.  The
    curves integrate to one, so they are probability densities of the photon
    arrival time relative to the excitation pulse.
    """
    t = np.asarray(t_ps, dtype=float)
    sigma = detectors.irf_fwhm_ps * FWHM_TO_SIGMA
    lam_xx = 1.0 / emitter.t1_xx_ps
    lam_x = 1.0 / emitter.t1_x_ps
    if species == "XX":
        return lam_xx * exp_conv_gauss(t, lam_xx, sigma)
    if species != "X":
        raise ValueError(f"species must be 'XX' or 'X', got {species!r}")
    if abs(lam_x - lam_xx) <= _DEGENERATE_REL_TOL * max(lam_x, lam_xx):
        # limit form lam^2 t exp(-lam t); its Gaussian convolution follows
        # from -d/d(rate) of the exponential kernel
        lam = 0.5 * (lam_x + lam_xx)
        return -lam * lam * exp_conv_gauss_drate(t, lam, sigma)
    pref = lam_x * lam_xx / (lam_x - lam_xx)
    return pref * (exp_conv_gauss(t, lam_xx, sigma) - exp_conv_gauss(t, lam_x, sigma))


def simulator_equivalent_params(params):
    """Analytic-model parameters matching the event simulator exactly.

    The simulator realizes spin scattering as a Poisson collapse with rate
    1/T_SS instead of using the g factors.  Averaged over the exponential
    dwell time, that collapse leaves the diagonal of the pair state intact
    (g' = 1) and scales the coherence and the phase parameter by
    T_SS / (T_SS + T1,X), i.e. it acts exactly like
    g = T_SS / (T_SS + T1,X) in :func:`ensemble_density_matrix`.
    """
    g_eff = params.t_ss_ps / (params.t_ss_ps + params.t1_x_ps)
    return EmitterParams(
        fss_uev=params.fss_uev,
        t1_xx_ps=params.t1_xx_ps,
        t1_x_ps=params.t1_x_ps,
        k=params.k,
        g1_hv=g_eff,
        g1p_hv=1.0,
        t_ss_ps=params.t_ss_ps,
        wavelength_nm=params.wavelength_nm,
    )


def reference_emitter(fss_uev=2.3, k=0.97):
    """A typical GaAs dot: S = 2.3 ueV, lifetimes 112/134 ps, k = 0.97."""
    return EmitterParams(fss_uev=fss_uev, t1_xx_ps=112.0, t1_x_ps=134.0, k=k)
