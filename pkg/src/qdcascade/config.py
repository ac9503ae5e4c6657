"""Structured-text run configuration.

A run file has four sections mapping onto the parameter types::

    [emitter]
    fss_uev = 2.3          ; required
    t1_xx_ps = 112         ; required
    t1_x_ps = 134          ; required
    k = 0.97               ; required
    g1_hv = 1.0
    g1p_hv = 1.0
    t_ss_ps = 15000
    wavelength_nm = 780.2

    [excitation]
    pulse_area_pi = 1.0    ; required
    rep_period_ps = 13157.9
    damping_gamma = 0.0

    [detectors]
    irf_fwhm_ps = 100
    efficiency_ch0 = 0.05
    efficiency_ch1 = 0.05
    dark_rate_hz_ch0 = 100
    dark_rate_hz_ch1 = 100
    bin_width_ps = 100

    [run]
    topology = cross       ; required: cross | hbt_xx | hbt_x
    analyzer_a = H         ; name H/V/D/A/R/L or "qwp_rad,hwp_rad"
    analyzer_b = H
    duration_s = 1.0       ; required
    seed = 42              ; required

Every key carries its unit in its name.  Unknown sections or keys are
rejected, as are missing keys that have no default.
"""

import configparser
import io

from .cascade import DetectorParams, EmitterParams, ExcitationParams
from .simulate import SimConfig
from .states import ANALYZER_SETTINGS, AnalyzerSetting

_SCHEMA = {
    "emitter": {
        "fss_uev": None,
        "t1_xx_ps": None,
        "t1_x_ps": None,
        "k": None,
        "g1_hv": 1.0,
        "g1p_hv": 1.0,
        "t_ss_ps": 15000.0,
        "wavelength_nm": 780.2,
    },
    "excitation": {
        "pulse_area_pi": None,
        "rep_period_ps": 13157.9,
        "damping_gamma": 0.0,
    },
    "detectors": {
        "irf_fwhm_ps": 100.0,
        "efficiency_ch0": 0.05,
        "efficiency_ch1": 0.05,
        "dark_rate_hz_ch0": 100.0,
        "dark_rate_hz_ch1": 100.0,
        "bin_width_ps": 100.0,
    },
    "run": {
        "topology": None,
        "analyzer_a": "H",
        "analyzer_b": "H",
        "duration_s": None,
        "seed": None,
    },
}


def _parse_analyzer(text):
    token = text.strip()
    if token.upper() in ANALYZER_SETTINGS:
        return ANALYZER_SETTINGS[token.upper()]
    parts = token.split(",")
    if len(parts) == 2:
        try:
            return AnalyzerSetting(float(parts[0]), float(parts[1]))
        except ValueError:
            pass
    raise ValueError(
        f"analyzer {text!r} is neither a named state (H/V/D/A/R/L) nor 'qwp_rad,hwp_rad'"
    )


def _format_analyzer(setting):
    for name, named in ANALYZER_SETTINGS.items():
        if named == setting:
            return name
    return f"{setting.qwp_angle!r},{setting.hwp_angle!r}"


def _collect(parser):
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            values[(section, key)] = parser.get(section, key)
    for section, keys in _SCHEMA.items():
        for key, default in keys.items():
            if (section, key) not in values:
                if default is None:
                    raise ValueError(f"missing required key {key!r} in section [{section}]")
                values[(section, key)] = default
    return values


def parse_config(text):
    """Parse configuration text into a SimConfig."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValueError(f"config parse error: {exc}") from None
    raw = _collect(parser)

    def num(section, key):
        v = raw[(section, key)]
        try:
            return float(v)
        except (TypeError, ValueError):
            raise ValueError(f"key {key!r} in [{section}] is not a number: {v!r}") from None

    emitter = EmitterParams(
        fss_uev=num("emitter", "fss_uev"),
        t1_xx_ps=num("emitter", "t1_xx_ps"),
        t1_x_ps=num("emitter", "t1_x_ps"),
        k=num("emitter", "k"),
        g1_hv=num("emitter", "g1_hv"),
        g1p_hv=num("emitter", "g1p_hv"),
        t_ss_ps=num("emitter", "t_ss_ps"),
        wavelength_nm=num("emitter", "wavelength_nm"),
    )
    excitation = ExcitationParams(
        pulse_area_pi=num("excitation", "pulse_area_pi"),
        rep_period_ps=num("excitation", "rep_period_ps"),
        damping_gamma=num("excitation", "damping_gamma"),
    )
    detectors = DetectorParams(
        irf_fwhm_ps=num("detectors", "irf_fwhm_ps"),
        efficiency=(num("detectors", "efficiency_ch0"), num("detectors", "efficiency_ch1")),
        dark_rate_hz=(num("detectors", "dark_rate_hz_ch0"), num("detectors", "dark_rate_hz_ch1")),
        bin_width_ps=num("detectors", "bin_width_ps"),
    )
    topology = str(raw[("run", "topology")]).strip().lower()
    seed_text = str(raw[("run", "seed")]).strip()
    try:
        seed = int(seed_text)
    except ValueError:
        raise ValueError(f"seed must be an integer, got {seed_text!r}") from None
    return SimConfig(
        emitter=emitter,
        excitation=excitation,
        detectors=detectors,
        topology=topology,
        analyzer_a=_parse_analyzer(str(raw[("run", "analyzer_a")])),
        analyzer_b=_parse_analyzer(str(raw[("run", "analyzer_b")])),
        duration_s=num("run", "duration_s"),
        seed=seed,
    )


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(config):
    """Render a SimConfig back to configuration text (round-trip stable)."""
    e, x, d = config.emitter, config.excitation, config.detectors
    buf = io.StringIO()

    def section(name, pairs):
        buf.write(f"[{name}]\n")
        for key, value in pairs:
            buf.write(f"{key} = {value}\n")
        buf.write("\n")

    section(
        "emitter",
        [
            ("fss_uev", repr(e.fss_uev)),
            ("t1_xx_ps", repr(e.t1_xx_ps)),
            ("t1_x_ps", repr(e.t1_x_ps)),
            ("k", repr(e.k)),
            ("g1_hv", repr(e.g1_hv)),
            ("g1p_hv", repr(e.g1p_hv)),
            ("t_ss_ps", repr(e.t_ss_ps)),
            ("wavelength_nm", repr(e.wavelength_nm)),
        ],
    )
    section(
        "excitation",
        [
            ("pulse_area_pi", repr(x.pulse_area_pi)),
            ("rep_period_ps", repr(x.rep_period_ps)),
            ("damping_gamma", repr(x.damping_gamma)),
        ],
    )
    section(
        "detectors",
        [
            ("irf_fwhm_ps", repr(d.irf_fwhm_ps)),
            ("efficiency_ch0", repr(d.efficiency[0])),
            ("efficiency_ch1", repr(d.efficiency[1])),
            ("dark_rate_hz_ch0", repr(d.dark_rate_hz[0])),
            ("dark_rate_hz_ch1", repr(d.dark_rate_hz[1])),
            ("bin_width_ps", repr(d.bin_width_ps)),
        ],
    )
    section(
        "run",
        [
            ("topology", config.topology),
            ("analyzer_a", _format_analyzer(config.analyzer_a)),
            ("analyzer_b", _format_analyzer(config.analyzer_b)),
            ("duration_s", repr(config.duration_s)),
            ("seed", str(int(config.seed))),
        ],
    )
    return buf.getvalue()


def save_config(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_config(config))
