"""Monte Carlo generator of time-tagged photon detection events.

For every laser pulse the biexciton is prepared with the Rabi population for
the configured pulse area.  The pair polarization is the dwell-time state
(|HH> + e^{i S tau/hbar}|VV>)/sqrt(2); with probability 1 - exp(-tau/T_SS)
spin scattering collapses it to an even mixture of |HH> and |VV>, and a
(1-k) fraction of pairs is replaced by uniformly random product states to
model background.  Analyzer outcomes are drawn sequentially (first photon
from the marginal, second from the conditional state), which reproduces the
joint projection statistics exactly.

Pulses are processed in fixed blocks of ``BLOCK_PULSES``; each block draws
from an independent generator seeded by :func:`derive_block_seed`, so the
output stream is bit-identical no matter how many workers run the blocks.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cascade import (
    FWHM_TO_SIGMA,
    HBAR_UEV_PS,
    DetectorParams,
    EmitterParams,
    ExcitationParams,
    xx_population,
)
from .states import AnalyzerSetting, analyzer_ket, orthogonal_ket

#: Pulses per simulation block.  Changing this changes the streams a given
#: seed produces, so it is a fixed constant rather than a knob.
BLOCK_PULSES = 1 << 22

_MAX_EVENTS = 1 << 32

TOPOLOGIES = ("cross", "hbt_xx", "hbt_x")


class PhotonEvent(NamedTuple):
    channel: int
    timestamp_ps: int


@dataclass(frozen=True)
class SimConfig:
    """Full simulation setup: emitter + excitation + detectors + wiring.

    topology
        "cross": XX arm (channel 0) versus X arm (channel 1), each behind
        its analyzer.  "hbt_xx"/"hbt_x": the chosen transition is split
        50:50 onto channels 0 and 1 with no analyzers.
    """

    emitter: EmitterParams
    excitation: ExcitationParams
    detectors: DetectorParams
    topology: str = "cross"
    analyzer_a: AnalyzerSetting = AnalyzerSetting(0.0, 0.0)
    analyzer_b: AnalyzerSetting = AnalyzerSetting(0.0, 0.0)
    duration_s: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if not 0 <= int(self.seed) < (1 << 64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class TimeTagStream:
    """Detector events as parallel channel/timestamp arrays, time-ordered."""

    channels: np.ndarray
    timestamps_ps: np.ndarray
    duration_s: float | None = None

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.uint8)
        ts = np.asarray(self.timestamps_ps, dtype=np.uint64)
        if ch.shape != ts.shape:
            raise ValueError("channels and timestamps must have the same length")
        if ts.size > 1 and np.any(np.diff(ts.astype(np.int64)) < 0):
            raise ValueError("timestamps must be non-decreasing")
        ch.setflags(write=False)
        ts.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "timestamps_ps", ts)

    def __len__(self):
        return int(self.channels.size)

    def __getitem__(self, i):
        return PhotonEvent(int(self.channels[i]), int(self.timestamps_ps[i]))

    def channel_timestamps(self, channel):
        return self.timestamps_ps[self.channels == channel]

    def counts_per_channel(self):
        n = int(self.channels.max()) + 1 if len(self) else 0
        return {c: int(np.count_nonzero(self.channels == c)) for c in range(n)}


# SplitMix64 finalizer constants.
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def derive_block_seed(seed, block_index):
    """Stateless per-block seed: SplitMix64 finalizer of seed + index*gamma.

    z  = seed + block_index * 0x9E3779B97F4A7C15   (mod 2^64)
    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

    Accepts scalars or integer arrays; the result only depends on the two
    inputs, so any block can be (re)generated in isolation.
    """
    scalar = np.isscalar(seed) and np.isscalar(block_index)
    with np.errstate(over="ignore"):  # wraparound modulo 2^64 is intended
        z = np.asarray(seed, dtype=np.uint64) + np.asarray(block_index, dtype=np.uint64) * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
    return int(z) if scalar else z


# Dark-count generators live in a reserved block-index namespace so they can
# never collide with pulse blocks.
_DARK_BLOCK_BASE = 1 << 63


def _sample_hit_indices(rng, n_pulses, p_hit):
    """Indices of pulses producing at least one detectable photon.

    Equivalent to Bernoulli(p_hit) per pulse, generated through geometric
    gaps so the cost scales with the number of hits, not pulses.
    """
    if p_hit <= 0.0 or n_pulses == 0:
        return np.empty(0, dtype=np.int64)
    if p_hit >= 1.0:
        return np.arange(n_pulses, dtype=np.int64)
    chunks = []
    position = -1
    expected = n_pulses * p_hit
    chunk = int(expected + 6.0 * np.sqrt(expected) + 16.0)
    while position < n_pulses:
        gaps = rng.geometric(p_hit, size=chunk)
        idx = position + np.cumsum(gaps)
        chunks.append(idx)
        position = int(idx[-1])
    all_idx = np.concatenate(chunks)
    return all_idx[all_idx < n_pulses]


def _haar_kets(rng, n):
    z = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _pair_coefficients(rng, emitter, tau_x):
    """Per-pulse pair polarization as 2x2 coefficient matrices c[i, j].

    Index i is the XX photon (H=0, V=1), j the X photon.  The dwell times
    ``tau_x`` set both the coherent phase and the spin-scattering odds.
    """
    n = tau_x.size
    c = np.zeros((n, 2, 2), dtype=complex)
    background = rng.random(n) < (1.0 - emitter.k)
    scatter = (~background) & (rng.random(n) < -np.expm1(-tau_x / emitter.t_ss_ps))
    to_vv = rng.random(n) < 0.5
    coherent = ~(background | scatter)

    phi = emitter.fss_uev * tau_x[coherent] / HBAR_UEV_PS
    c[coherent, 0, 0] = 1.0 / np.sqrt(2.0)
    c[coherent, 1, 1] = np.exp(1j * phi) / np.sqrt(2.0)

    c[scatter & to_vv, 1, 1] = 1.0
    c[scatter & ~to_vv, 0, 0] = 1.0

    n_bg = int(np.count_nonzero(background))
    if n_bg:
        c[background] = _haar_kets(rng, n_bg)[:, :, None] * _haar_kets(rng, n_bg)[:, None, :]
    return c


def _sample_analyzer_outcomes(rng, coeffs, ket_a, ket_b, need_a, need_b):
    """Sequential conditional sampling of the two analyzer outcomes.

    Photon A is drawn from its marginal, photon B from the state conditioned
    on A's result when A is observed and from the marginal otherwise; the
    joint pass probability equals |<a x b|pair>|^2 by construction.
    """
    a = ket_a.amplitudes
    a_perp = orthogonal_ket(ket_a).amplitudes
    b = ket_b.amplitudes

    # B amplitudes conditioned on A passing / being blocked (unnormalized)
    v_pass = np.einsum("i,nij->nj", a.conj(), coeffs)
    v_block = np.einsum("i,nij->nj", a_perp.conj(), coeffs)
    p_a = np.einsum("nj,nj->n", v_pass, v_pass.conj()).real

    pass_a = np.zeros(coeffs.shape[0], dtype=bool)
    pass_a[need_a] = rng.random(int(np.count_nonzero(need_a))) < p_a[need_a]

    amp_b = np.where(pass_a[:, None], v_pass, v_block)
    norm_b = np.where(pass_a, p_a, 1.0 - p_a)
    p_b_cond = np.abs(np.einsum("j,nj->n", b.conj(), amp_b)) ** 2 / np.clip(norm_b, 1e-300, None)

    # unconditional marginal for pulses where A is not observed
    p_b_marg = np.einsum("nij,j,nik,k->n", coeffs, b.conj(), coeffs.conj(), b).real
    p_b = np.where(need_a, p_b_cond, p_b_marg)

    pass_b = np.zeros_like(pass_a)
    pass_b[need_b] = rng.random(int(np.count_nonzero(need_b))) < np.clip(p_b[need_b], 0.0, 1.0)
    return pass_a, pass_b


def _simulate_block(config, block_index, first_pulse, n_pulses):
    rng = np.random.default_rng(derive_block_seed(int(config.seed), block_index))
    emitter = config.emitter
    det = config.detectors
    rep = config.excitation.rep_period_ps
    sigma = det.irf_fwhm_ps * FWHM_TO_SIGMA
    p_pair = xx_population(config.excitation)
    eff0, eff1 = det.efficiency

    if config.topology == "cross":
        p_any = 1.0 - (1.0 - eff0) * (1.0 - eff1)
        hits = _sample_hit_indices(rng, n_pulses, p_pair * p_any)
        n = hits.size
        if n == 0:
            return np.empty(0, dtype=np.uint8), np.empty(0, dtype=float)

        # which photons survived efficiency, conditioned on at least one
        u = rng.random(n) * p_any
        both = u < eff0 * eff1
        a_only = (~both) & (u < eff0 * eff1 + eff0 * (1.0 - eff1))
        det_a = both | a_only
        det_b = ~a_only

        delay_xx = rng.exponential(emitter.t1_xx_ps, n)
        tau_x = rng.exponential(emitter.t1_x_ps, n)
        coeffs = _pair_coefficients(rng, emitter, tau_x)
        pass_a, pass_b = _sample_analyzer_outcomes(
            rng, coeffs, analyzer_ket(config.analyzer_a), analyzer_ket(config.analyzer_b),
            det_a, det_b,
        )

        pulse_t = (first_pulse + hits) * rep
        keep_a = det_a & pass_a
        keep_b = det_b & pass_b
        t_a = pulse_t[keep_a] + delay_xx[keep_a]
        t_b = pulse_t[keep_b] + delay_xx[keep_b] + tau_x[keep_b]
        if sigma > 0.0:
            t_a = t_a + rng.normal(0.0, sigma, t_a.size)
            t_b = t_b + rng.normal(0.0, sigma, t_b.size)
        channels = np.concatenate([np.zeros(t_a.size, dtype=np.uint8), np.ones(t_b.size, dtype=np.uint8)])
        return channels, np.concatenate([t_a, t_b])

    # HBT: one transition split 50:50 onto the two channels, no analyzers
    p_det = p_pair * 0.5 * (eff0 + eff1)
    hits = _sample_hit_indices(rng, n_pulses, p_det)
    n = hits.size
    if n == 0:
        return np.empty(0, dtype=np.uint8), np.empty(0, dtype=float)
    channels = np.where(rng.random(n) * (eff0 + eff1) < eff1, 1, 0).astype(np.uint8)
    times = (first_pulse + hits) * rep + rng.exponential(emitter.t1_xx_ps, n)
    if config.topology == "hbt_x":
        times = times + rng.exponential(emitter.t1_x_ps, n)
    if sigma > 0.0:
        times = times + rng.normal(0.0, sigma, n)
    return channels, times


def _dark_counts(config, duration_ps):
    channels = []
    times = []
    for ch, rate in enumerate(config.detectors.dark_rate_hz):
        rng = np.random.default_rng(derive_block_seed(int(config.seed), _DARK_BLOCK_BASE + ch))
        n = int(rng.poisson(rate * config.duration_s))
        channels.append(np.full(n, ch, dtype=np.uint8))
        times.append(rng.random(n) * duration_ps)
    return np.concatenate(channels), np.concatenate(times)


def expected_event_count(config):
    """Rough upper estimate of the number of records ``simulate`` produces."""
    rep = config.excitation.rep_period_ps
    n_pulses = int(config.duration_s * 1e12 // rep) + 1
    p_pair = xx_population(config.excitation)
    eff0, eff1 = config.detectors.efficiency
    per_pulse = p_pair * (eff0 + eff1)
    darks = sum(config.detectors.dark_rate_hz) * config.duration_s
    return n_pulses * per_pulse + darks


def simulate(config, threads=1):
    """Run the event simulation and return the merged, sorted stream.

    Identical configs (seed included) give bit-identical streams for any
    ``threads`` value: blocks are generated from independently derived seeds
    and merged in block order with a stable sort.
    """
    if expected_event_count(config) > _MAX_EVENTS:
        raise ValueError(
            "configuration would produce more than 2^32 events; "
            "reduce duration, efficiency or dark rates"
        )
    rep = config.excitation.rep_period_ps
    duration_ps = config.duration_s * 1e12
    n_pulses = int(duration_ps // rep) + 1
    n_blocks = (n_pulses + BLOCK_PULSES - 1) // BLOCK_PULSES

    def run_block(b):
        first = b * BLOCK_PULSES
        return _simulate_block(config, b, first, min(BLOCK_PULSES, n_pulses - first))

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_block, range(n_blocks)))
    else:
        results = [run_block(b) for b in range(n_blocks)]

    dark_ch, dark_t = _dark_counts(config, duration_ps)
    channels = np.concatenate([r[0] for r in results] + [dark_ch])
    times = np.concatenate([r[1] for r in results] + [dark_t])

    keep = (times >= 0.0) & (times <= duration_ps + 10.0 * rep)
    channels, times = channels[keep], times[keep]
    stamps = np.rint(times).astype(np.uint64)
    order = np.argsort(stamps, kind="stable")
    return TimeTagStream(channels[order], stamps[order], duration_s=config.duration_s)
