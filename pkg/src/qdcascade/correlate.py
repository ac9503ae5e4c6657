"""Delay histograms, pulsed g2(0) extraction and polarization contrasts.

Delay bins are centered on integer multiples of the bin width and events are
assigned by round-half-even of delay/width, so the histogram of (A, B) at
delay +t is exactly the histogram of (B, A) at -t.  Peak integration for
pulsed g2 uses a window around each expected peak position and subtracts the
flat accidental floor estimated from the inter-peak region; normalization is
to the mean side-peak area.
"""

import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class Measurement(NamedTuple):
    """A value with a one-sigma uncertainty."""

    value: float
    stderr: float


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Binned delay-time coincidences.

    origin_ps is the delay of the leading edge of the first bin; bin centers
    sit at origin_ps + (i + 1/2) * bin_width_ps.
    """

    bin_width_ps: float
    origin_ps: float
    counts: np.ndarray
    n_start_events: int = 0
    n_stop_events: int = 0
    acquisition_time_s: float = 0.0

    def __post_init__(self):
        if self.bin_width_ps <= 0:
            raise ValueError("bin_width_ps must be > 0")
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("counts must be a non-empty 1-D array")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "bin_width_ps", float(self.bin_width_ps))
        object.__setattr__(self, "origin_ps", float(self.origin_ps))
        object.__setattr__(self, "n_start_events", int(self.n_start_events))
        object.__setattr__(self, "n_stop_events", int(self.n_stop_events))
        object.__setattr__(self, "acquisition_time_s", float(self.acquisition_time_s))

    def delay_centers(self):
        n = self.counts.size
        return self.origin_ps + (np.arange(n) + 0.5) * self.bin_width_ps

    def __add__(self, other):
        if (
            other.bin_width_ps != self.bin_width_ps
            or other.origin_ps != self.origin_ps
            or other.counts.size != self.counts.size
        ):
            raise ValueError("histograms must share binning to be merged")
        return CoincidenceHistogram(
            self.bin_width_ps,
            self.origin_ps,
            self.counts + other.counts,
            self.n_start_events + other.n_start_events,
            self.n_stop_events + other.n_stop_events,
            self.acquisition_time_s + other.acquisition_time_s,
        )


class PeakSummary(NamedTuple):
    """Integrated pulse-peak areas keyed by pulse index (0 = zero delay)."""

    peak_areas: dict
    window_width_ps: float
    floor_per_bin: float
    floor_var: float


def _require_sorted(ts, name):
    ts = np.asarray(ts)
    if ts.size > 1 and np.any(np.diff(ts.astype(np.int64)) < 0):
        raise ValueError(f"{name} timestamps must be sorted non-decreasing")
    return ts.astype(np.int64)


def cross_correlate(start, stop, bin_width_ps, max_delay_ps, acquisition_time_s=0.0):
    """Histogram of stop-minus-start delays within +-max_delay_ps.

    ``start`` and ``stop`` are sorted timestamp arrays (one detector channel
    each).  A sorted-window sweep enumerates only the pairs inside the delay
    window, so the cost is O(N * m) with m the mean number of partner events
    per window.
    """
    start = _require_sorted(start, "start")
    stop = _require_sorted(stop, "stop")
    n_half = max(int(np.ceil(max_delay_ps / bin_width_ps)), 1)
    n_bins = 2 * n_half + 1
    counts = np.zeros(n_bins, dtype=np.int64)
    origin = -(n_half + 0.5) * bin_width_ps

    if start.size and stop.size:
        window = (n_half + 0.5) * bin_width_ps
        lo = np.searchsorted(stop, start - window, side="left")
        hi = np.searchsorted(stop, start + window, side="right")
        per_start = hi - lo
        # enumerate pairs in chunks of start events to bound memory
        chunk_pairs = 4_000_000
        cum = np.cumsum(per_start)
        b0 = 0
        while b0 < start.size:
            done = cum[b0 - 1] if b0 else 0
            b1 = int(np.searchsorted(cum, done + chunk_pairs, side="right"))
            b1 = min(max(b1, b0 + 1), start.size)
            reps = per_start[b0:b1]
            total = int(reps.sum())
            if total:
                offsets = np.repeat(lo[b0:b1], reps)
                ladder = np.arange(total) - np.repeat(np.cumsum(reps) - reps, reps)
                delays = stop[offsets + ladder] - np.repeat(start[b0:b1], reps)
                idx = np.rint(delays / bin_width_ps).astype(np.int64)
                good = np.abs(idx) <= n_half
                counts += np.bincount(idx[good] + n_half, minlength=n_bins)
            b0 = b1

    return CoincidenceHistogram(
        bin_width_ps=float(bin_width_ps),
        origin_ps=float(origin),
        counts=counts,
        n_start_events=int(start.size),
        n_stop_events=int(stop.size),
        acquisition_time_s=float(acquisition_time_s),
    )


def correlate_channels(stream, start_channel, stop_channel, bin_width_ps, max_delay_ps):
    """Cross-correlate two channels of one time-tag stream."""
    return cross_correlate(
        stream.channel_timestamps(start_channel),
        stream.channel_timestamps(stop_channel),
        bin_width_ps,
        max_delay_ps,
        acquisition_time_s=stream.duration_s or 0.0,
    )


def fold_histogram(stream, channel, rep_period_ps, bin_width_ps, phase_origin_ps=None):
    """Histogram of arrival times relative to the excitation pulse.

    Folds timestamps modulo the repetition period into one window starting
    at ``phase_origin_ps`` (default -period/8, so jittered events from the
    pulse at phase zero stay contiguous).  The result is the decay curve of
    the selected transition, usable directly by the decay fitters.
    """
    if phase_origin_ps is None:
        phase_origin_ps = -rep_period_ps / 8.0
    ts = stream.channel_timestamps(channel).astype(np.float64)
    phase = (ts - phase_origin_ps) % rep_period_ps + phase_origin_ps
    n_bins = int(round(rep_period_ps / bin_width_ps))
    idx = np.floor((phase - phase_origin_ps) / bin_width_ps).astype(np.int64)
    idx = idx[(idx >= 0) & (idx < n_bins)]
    counts = np.bincount(idx, minlength=n_bins)
    return CoincidenceHistogram(
        bin_width_ps=float(bin_width_ps),
        origin_ps=float(phase_origin_ps),
        counts=counts,
        n_start_events=int(ts.size),
        n_stop_events=int(ts.size),
        acquisition_time_s=stream.duration_s or 0.0,
    )


def integrate_peaks(hist, rep_period_ps, window_ps=None):
    """Integrate pulse peaks and subtract the flat inter-peak floor.

    Peaks are expected at integer multiples of the repetition period; only
    peaks whose window lies fully inside the histogram are integrated.
    Returns raw and floor-subtracted areas per pulse index.
    """
    if window_ps is None:
        window_ps = rep_period_ps / 2.0
    if window_ps > rep_period_ps:
        raise ValueError("window_ps must not exceed the pulse period")
    centers = hist.delay_centers()
    lo, hi = centers[0], centers[-1]
    m_min = int(np.ceil((lo + window_ps / 2.0) / rep_period_ps))
    m_max = int(np.floor((hi - window_ps / 2.0) / rep_period_ps))
    if m_max < m_min:
        raise ValueError("histogram does not span a full pulse period")

    # the floor region must keep clear of every peak the histogram touches,
    # including partially covered ones at the edges that are not integrated
    in_any_window = np.zeros(centers.size, dtype=bool)
    for m in range(int(np.floor(lo / rep_period_ps)) - 1, int(np.ceil(hi / rep_period_ps)) + 2):
        in_any_window |= np.abs(centers - m * rep_period_ps) <= window_ps / 2.0

    windows = {}
    for m in range(m_min, m_max + 1):
        windows[m] = np.abs(centers - m * rep_period_ps) <= window_ps / 2.0

    floor_bins = ~in_any_window
    n_floor = int(np.count_nonzero(floor_bins))
    if n_floor > 0:
        floor_total = float(hist.counts[floor_bins].sum())
        floor_per_bin = floor_total / n_floor
        floor_var = floor_total / n_floor**2  # Poisson variance of the floor estimate
    else:
        floor_per_bin = 0.0
        floor_var = 0.0

    areas = {}
    for m, mask in windows.items():
        raw = float(hist.counts[mask].sum())
        n_bins = int(np.count_nonzero(mask))
        areas[m] = (raw, raw - n_bins * floor_per_bin)
    return PeakSummary(areas, float(window_ps), floor_per_bin, floor_var)


def g2_zero(hist, rep_period_ps, window_ps=None):
    """Pulsed g2(0): center-peak area over mean side-peak area.

    Requires at least ten side peaks (the histogram must span eleven or more
    pulse periods).  Both areas are corrected for the flat accidental floor;
    errors are Poissonian, propagated to first order.
    """
    summary = integrate_peaks(hist, rep_period_ps, window_ps)
    areas = summary.peak_areas
    if 0 not in areas:
        raise ValueError("histogram does not cover the zero-delay peak")
    side_keys = [m for m in areas if m != 0]
    if len(side_keys) < 10:
        raise ValueError(
            f"need at least 10 side peaks for normalization, found {len(side_keys)}; "
            "increase the histogram delay range"
        )
    n_win_bins = int(round(summary.window_width_ps / hist.bin_width_ps))
    floor_term = (n_win_bins**2) * summary.floor_var

    raw0, corr0 = areas[0]
    var0 = raw0 + floor_term
    side_corr = np.array([areas[m][1] for m in side_keys])
    side_raw = np.array([areas[m][0] for m in side_keys])
    mean_side = float(side_corr.mean())
    var_side = float((side_raw.sum() + len(side_keys) * floor_term) / len(side_keys) ** 2)
    if mean_side <= 0:
        raise ValueError("side peaks are empty; g2 normalization undefined")

    value = corr0 / mean_side
    stderr = abs(value) * np.sqrt(
        (var0 / corr0**2 if corr0 != 0.0 else 0.0) + var_side / mean_side**2
    )
    if corr0 == 0.0:
        stderr = np.sqrt(var0) / mean_side
    return Measurement(float(value), float(stderr))


def true_coincidences(summary):
    """Zero-delay pairs in excess of the uncorrelated pulse background.

    Center-peak area minus the mean side-peak area (floor-subtracted both),
    i.e. the number of coincidences caused by genuine cascade pairs.
    """
    sides = [v[1] for m, v in summary.peak_areas.items() if m != 0]
    if not sides:
        raise ValueError("no side peaks available")
    return summary.peak_areas[0][1] - float(np.mean(sides))


def contrast(g2_co, g2_cross):
    """Correlation contrast (co - cross) / (co + cross) for one basis."""
    co, co_err = g2_co
    cross, cross_err = g2_cross
    total = co + cross
    if total == 0:
        raise ValueError("contrast undefined: co + cross correlation is zero")
    value = (co - cross) / total
    stderr = 2.0 * np.hypot(cross * co_err, co * cross_err) / total**2
    return Measurement(float(value), float(stderr))


def fidelity_from_contrasts(c_linear, c_diagonal, c_circular):
    """F = (1 + C_linear + C_diagonal - C_circular) / 4 with propagated error."""
    value = (1.0 + c_linear[0] + c_diagonal[0] - c_circular[0]) / 4.0
    stderr = np.sqrt(c_linear[1] ** 2 + c_diagonal[1] ** 2 + c_circular[1] ** 2) / 4.0
    return Measurement(float(value), float(stderr))


# ---------------------------------------------------------------------------
# CSV export: '#'-prefixed metadata header, then one "delay_ps,counts" row
# per bin.
# ---------------------------------------------------------------------------


def histogram_to_csv(hist, normalization="side-peak-mean", extra_metadata=None):
    buf = io.StringIO()
    buf.write(f"# bin_width_ps={hist.bin_width_ps!r}\n")
    buf.write(f"# origin_ps={hist.origin_ps!r}\n")
    buf.write(f"# n_start_events={hist.n_start_events}\n")
    buf.write(f"# n_stop_events={hist.n_stop_events}\n")
    buf.write(f"# acquisition_time_s={hist.acquisition_time_s!r}\n")
    buf.write(f"# normalization={normalization}\n")
    for key, value in (extra_metadata or {}).items():
        buf.write(f"# {key}={value}\n")
    buf.write("delay_ps,counts\n")
    for center, count in zip(hist.delay_centers(), hist.counts):
        buf.write(f"{float(center)!r},{int(count)}\n")
    return buf.getvalue()


def histogram_from_csv(text):
    meta = {}
    counts = []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
            continue
        if not header_seen:
            if line != "delay_ps,counts":
                raise ValueError(f"line {lineno}: expected 'delay_ps,counts' header")
            header_seen = True
            continue
        fields = line.split(",")
        if len(fields) != 2:
            raise ValueError(f"line {lineno}: expected 2 fields, found {len(fields)}")
        counts.append(int(fields[1]))
    if not counts:
        raise ValueError("histogram CSV contains no data rows")
    try:
        return CoincidenceHistogram(
            bin_width_ps=float(meta["bin_width_ps"]),
            origin_ps=float(meta["origin_ps"]),
            counts=np.array(counts, dtype=np.int64),
            n_start_events=int(meta.get("n_start_events", 0)),
            n_stop_events=int(meta.get("n_stop_events", 0)),
            acquisition_time_s=float(meta.get("acquisition_time_s", 0.0)),
        )
    except KeyError as exc:
        raise ValueError(f"histogram CSV is missing metadata key {exc}") from None


def save_histogram(hist, path, extra_metadata=None):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(histogram_to_csv(hist, extra_metadata=extra_metadata))


def load_histogram(path):
    with open(path, "r", encoding="ascii") as fh:
        return histogram_from_csv(fh.read())
