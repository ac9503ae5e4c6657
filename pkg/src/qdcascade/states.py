"""Two-photon polarization algebra: kets, density matrices, analyzers, metrics.

Conventions used throughout the package
---------------------------------------
* Single-photon basis: ``|H> = (1, 0)``, ``|V> = (0, 1)``.
* Circular states: ``|R> = (|H> + i|V>)/sqrt(2)``, ``|L> = (|H> - i|V>)/sqrt(2)``.
* Two-photon amplitudes are ordered ``(HH, HV, VH, VV)``; the first letter is
  the biexciton (first) photon, the second the exciton photon.
* Wave plates are ideal linear retarders with fast axis at angle ``theta``
  from horizontal::

      J(theta, delta) = R(-theta) @ diag(1, exp(i*delta)) @ R(theta)

  with retardance ``delta = pi/2`` for a quarter-wave plate and ``pi`` for a
  half-wave plate, and ``R(theta)`` the usual 2x2 rotation.
* An analyzer is the stack quarter-wave plate -> half-wave plate ->
  horizontal polarizer.  Its transmission ket (the polarization passed with
  unit probability) is the polarizer axis carried through the stack in the
  listed order, ``|a> = HWP(h) @ QWP(q) @ |H>``.  With this composition the
  identity configuration (0, 0) analyzes H, (0, pi/8) analyzes D and
  (pi/4, 0) analyzes a circular state.
"""

from dataclasses import dataclass, field

import numpy as np

# Reduced Planck constant in micro-eV * picoseconds (CODATA hbar converted).
HBAR_UEV_PS = 658.2119

#: Two-photon basis labels in storage order.
BASIS_LABELS = ("HH", "HV", "VH", "VV")

_NORM_TOL = 1e-12
_HERMITICITY_TOL = 1e-10
_TRACE_TOL = 1e-10
#: Most negative eigenvalue tolerated for a matrix to count as physical.
PSD_TOL = -1e-8


def rotation_matrix(theta):
    """2x2 rotation of the transverse polarization frame by ``theta``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def wave_plate(theta, retardance):
    """Jones matrix of a linear retarder with fast axis at ``theta``."""
    ret = np.array([[1.0, 0.0], [0.0, np.exp(1j * retardance)]])
    return rotation_matrix(-theta) @ ret @ rotation_matrix(theta)


def quarter_wave_plate(theta):
    return wave_plate(theta, np.pi / 2)


def half_wave_plate(theta):
    return wave_plate(theta, np.pi)


@dataclass(frozen=True)
class PolarizationKet:
    """Pure single-photon polarization state (a_H, a_V), unit norm."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(2)
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > _NORM_TOL:
            raise ValueError(f"polarization ket is not normalized: |amp|^2 = {norm2!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def a_h(self):
        return complex(self.amplitudes[0])

    @property
    def a_v(self):
        return complex(self.amplitudes[1])

    def overlap_probability(self, other):
        """|<self|other>|^2."""
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2)


def _normalized_ket(vec):
    vec = np.asarray(vec, dtype=complex)
    return PolarizationKet(vec / np.linalg.norm(vec))


#: Named single-photon states (H, V, D, A, R, L).
NAMED_KETS = {
    "H": _normalized_ket([1, 0]),
    "V": _normalized_ket([0, 1]),
    "D": _normalized_ket([1, 1]),
    "A": _normalized_ket([1, -1]),
    "R": _normalized_ket([1, 1j]),
    "L": _normalized_ket([1, -1j]),
}


@dataclass(frozen=True)
class AnalyzerSetting:
    """Fast-axis angles (radians from horizontal) of the QWP and HWP.

    The polarizer behind them is fixed at horizontal transmission.  Angles
    are stored modulo pi since a half turn of either plate repeats the
    optics.
    """

    qwp_angle: float
    hwp_angle: float

    def __post_init__(self):
        object.__setattr__(self, "qwp_angle", float(self.qwp_angle) % np.pi)
        object.__setattr__(self, "hwp_angle", float(self.hwp_angle) % np.pi)


#: QWP/HWP angles that analyze each named polarization.
ANALYZER_SETTINGS = {
    "H": AnalyzerSetting(0.0, 0.0),
    "V": AnalyzerSetting(0.0, np.pi / 4),
    "D": AnalyzerSetting(0.0, np.pi / 8),
    "A": AnalyzerSetting(0.0, -np.pi / 8),
    "R": AnalyzerSetting(np.pi / 4, 0.0),
    "L": AnalyzerSetting(-np.pi / 4, 0.0),
}


def analyzer_ket(setting):
    """Polarization transmitted with unit probability by an analyzer stack.

    Returns the horizontal polarizer axis propagated through the wave-plate
    sequence QWP(q) then HWP(h); a photon in this state always reaches the
    detector, the orthogonal state never does.
    """
    stack = half_wave_plate(setting.hwp_angle) @ quarter_wave_plate(setting.qwp_angle)
    return PolarizationKet(stack @ np.array([1.0, 0.0], dtype=complex))


def orthogonal_ket(ket):
    """The unique (up to phase) state orthogonal to ``ket``."""
    a, b = ket.amplitudes
    return PolarizationKet(np.array([-np.conj(b), np.conj(a)]))


@dataclass(frozen=True)
class TwoPhotonKet:
    """Pure two-photon polarization state with amplitudes (HH, HV, VH, VV)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(4)
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > _NORM_TOL:
            raise ValueError(f"two-photon ket is not normalized: |amp|^2 = {norm2!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def density_matrix(self):
        return DensityMatrix(np.outer(self.amplitudes, np.conj(self.amplitudes)))

    def projection_probability(self, other):
        """|<other|self>|^2."""
        return float(abs(np.vdot(other.amplitudes, self.amplitudes)) ** 2)


def bell_psi_plus():
    """The cascade target state; its linear-basis form is (|HH> + |VV>)/sqrt(2).

    In the circular basis this is (|L R> + |R L>)/sqrt(2), the state emitted
    by an ideal zero-splitting biexciton-exciton cascade.
    """
    return TwoPhotonKet(np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2.0))


def product_ket(ket_a, ket_b):
    """Tensor product of two single-photon kets as a TwoPhotonKet."""
    return TwoPhotonKet(np.kron(ket_a.amplitudes, ket_b.amplitudes))


@dataclass(frozen=True)
class DensityMatrix:
    """4x4 two-photon density matrix in the (HH, HV, VH, VV) basis.

    Always Hermitian with unit trace.  Physical matrices are additionally
    positive semidefinite within ``PSD_TOL``; linear-inversion estimates may
    carry negative eigenvalues and are marked ``unconstrained``.
    """

    matrix: np.ndarray
    unconstrained: bool = field(default=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex).reshape(4, 4)
        herm_err = float(np.max(np.abs(m - m.conj().T)))
        if herm_err > _HERMITICITY_TOL:
            raise ValueError(f"density matrix is not Hermitian (max deviation {herm_err:.3e})")
        tr = complex(np.trace(m))
        if abs(tr - 1.0) > _TRACE_TOL:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        m = (m + m.conj().T) / 2.0
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def eigenvalues(self):
        """Real eigenvalues in descending order."""
        return np.sort(np.linalg.eigvalsh(self.matrix))[::-1]

    @property
    def is_physical(self):
        return bool(self.eigenvalues()[-1] >= PSD_TOL)

    def purity(self):
        return float(np.trace(self.matrix @ self.matrix).real)


def maximally_mixed():
    return DensityMatrix(np.eye(4) / 4.0)


def _require_physical(rho):
    if not rho.is_physical:
        raise ValueError(
            f"density matrix is not physical (min eigenvalue {rho.eigenvalues()[-1]:.3e})"
        )


def fidelity(rho, target):
    """Overlap <target| rho |target> of a physical state with a pure target."""
    _require_physical(rho)
    v = target.amplitudes
    value = complex(np.vdot(v, rho.matrix @ v))
    if abs(value.imag) > 1e-10:
        raise ValueError(f"fidelity came out complex ({value!r}); matrix not Hermitian?")
    return float(min(max(value.real, 0.0), 1.0))


_SIGMA_Y = np.array([[0.0, -1j], [1j, 0.0]])
_SPIN_FLIP = np.kron(_SIGMA_Y, _SIGMA_Y)


def concurrence(rho):
    """Wootters concurrence C = max(0, l1 - l2 - l3 - l4).

    The l_i are the decreasing square roots of the eigenvalues of
    rho (sy x sy) rho* (sy x sy), computed here as the singular values of
    sqrt(rho)^T (sy x sy) sqrt(rho), which is the same spectrum but without
    the precision loss of a non-Hermitian eigenproblem.
    """
    _require_physical(rho)
    vals, vecs = np.linalg.eigh(rho.matrix)
    sqrt_rho = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    lam = np.linalg.svd(sqrt_rho.T @ _SPIN_FLIP @ sqrt_rho, compute_uv=False)
    return float(min(max(lam[0] - lam[1] - lam[2] - lam[3], 0.0), 1.0))


def pure_state_concurrence(ket):
    """Closed form 2 |a_HH a_VV - a_HV a_VH| for a pure two-photon state."""
    a = ket.amplitudes
    return float(2.0 * abs(a[0] * a[3] - a[1] * a[2]))


def purity(rho):
    return rho.purity()


def pair_projection_probability(rho, setting_a, setting_b):
    """Probability that both photons pass their analyzers simultaneously."""
    _require_physical(rho)
    v = np.kron(analyzer_ket(setting_a).amplitudes, analyzer_ket(setting_b).amplitudes)
    p = float(np.vdot(v, rho.matrix @ v).real)
    return min(max(p, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Plain-text serialization
#
# A density matrix is stored as 4 lines of 4 whitespace-separated entries,
# each entry formatted "<re><+im>i" with 12 significant digits, e.g.
# "0.5+0i  0-0.25i ...".  The storage order is the (HH, HV, VH, VV) basis.
# ---------------------------------------------------------------------------


def _format_entry(z):
    return f"{z.real:.12g}{z.imag:+.12g}i"


def density_matrix_to_text(rho):
    lines = []
    for row in rho.matrix:
        lines.append(" ".join(_format_entry(z) for z in row))
    return "\n".join(lines) + "\n"


def density_matrix_from_text(text, unconstrained=False):
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 4:
            raise ValueError(f"line {lineno}: expected 4 entries, found {len(tokens)}")
        try:
            rows.append([complex(tok.replace("i", "j")) for tok in tokens])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: cannot parse entry: {exc}") from None
    if len(rows) != 4:
        raise ValueError(f"expected 4 matrix rows, found {len(rows)}")
    return DensityMatrix(np.array(rows), unconstrained=unconstrained)


def save_density_matrix(rho, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(density_matrix_to_text(rho))


def load_density_matrix(path, unconstrained=False):
    with open(path, "r", encoding="ascii") as fh:
        return density_matrix_from_text(fh.read(), unconstrained=unconstrained)
