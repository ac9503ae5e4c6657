"""Two-photon density-matrix reconstruction from 16 projection counts.

Linear inversion solves the projection equations over a Hermitian basis and
is fast but can return matrices with negative eigenvalues; those are marked
``unconstrained``.  The maximum-likelihood step reparameterizes the state as
rho = T^dag T / tr(T^dag T) with a lower-triangular T (16 real parameters),
which is positive semidefinite by construction, and minimizes the Poisson
negative log-likelihood with a damped Gauss-Newton (Fisher scoring) loop.
The per-setting exposure N_i is the acquisition time multiplied by an
overall pair rate profiled out of the likelihood analytically; that rate is
the main accuracy lever when acquisition times differ between settings.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .states import (
    ANALYZER_SETTINGS,
    DensityMatrix,
    analyzer_ket,
    concurrence,
    fidelity,
)

#: Basis order of the canonical 16-setting tomography set.
TOMO_BASIS = ("H", "V", "D", "R")

_STEP_TOL = 1e-9
_NLL_TOL = 1e-10


def standard_settings():
    """The {H, V, D, R} x {H, V, D, R} analyzer pairs, row-major order."""
    return tuple(
        (ANALYZER_SETTINGS[a], ANALYZER_SETTINGS[b]) for a in TOMO_BASIS for b in TOMO_BASIS
    )


@lru_cache(maxsize=64)
def _pair_kets_cached(settings):
    kets = np.array(
        [np.kron(analyzer_ket(a).amplitudes, analyzer_ket(b).amplitudes) for a, b in settings]
    )
    kets.setflags(write=False)
    return kets


def _pair_kets(settings):
    return _pair_kets_cached(tuple(settings))


@lru_cache(maxsize=64)
def _gram_rank_cached(settings):
    kets = _pair_kets(settings)
    projectors = np.einsum("ni,nj->nij", kets, kets.conj()).reshape(len(kets), 16)
    return int(np.linalg.matrix_rank(projectors, tol=1e-10))


def _gram_rank(pair_kets_or_settings):
    if isinstance(pair_kets_or_settings, np.ndarray):
        projectors = np.einsum(
            "ni,nj->nij", pair_kets_or_settings, pair_kets_or_settings.conj()
        ).reshape(len(pair_kets_or_settings), 16)
        return int(np.linalg.matrix_rank(projectors, tol=1e-10))
    return _gram_rank_cached(tuple(pair_kets_or_settings))


@dataclass(frozen=True)
class TomoRecord:
    """16 analyzer-pair settings with coincidence counts and exposures."""

    settings: tuple
    counts: np.ndarray
    times_s: np.ndarray

    def __post_init__(self):
        settings = tuple(self.settings)
        if len(settings) != 16:
            raise ValueError(f"expected 16 settings, found {len(settings)}")
        counts = np.asarray(self.counts, dtype=float).reshape(16)
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        times = np.broadcast_to(np.asarray(self.times_s, dtype=float), (16,)).copy()
        if np.any(times <= 0):
            raise ValueError("acquisition times must be > 0")
        if _gram_rank(settings) < 16:
            raise ValueError("analyzer settings are not informationally complete")
        counts.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "settings", settings)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "times_s", times)


class MLEResult(NamedTuple):
    rho: DensityMatrix
    neg_log_likelihood: float
    iterations: int
    converged: bool


def projection_probabilities(rho, settings=None):
    """<P_a x P_b| rho |P_a x P_b> for every analyzer pair."""
    if settings is None:
        settings = standard_settings()
    kets = _pair_kets(settings)
    return np.einsum("ni,ij,nj->n", kets.conj(), rho.matrix, kets).real


def ideal_counts(rho, total_per_setting, settings=None):
    """Noise-free expected counts for a state, as real numbers."""
    return projection_probabilities(rho, settings) * float(total_per_setting)


# Hermitian basis used for linear inversion: 4 diagonal elements, then for
# each pair (r, c) the symmetric and antisymmetric combinations.
def _hermitian_basis():
    basis = []
    for d in range(4):
        m = np.zeros((4, 4), dtype=complex)
        m[d, d] = 1.0
        basis.append(m)
    for r in range(4):
        for c in range(r + 1, 4):
            m = np.zeros((4, 4), dtype=complex)
            m[r, c] = m[c, r] = 1.0
            basis.append(m)
            m = np.zeros((4, 4), dtype=complex)
            m[r, c] = -1j
            m[c, r] = 1j
            basis.append(m)
    return np.array(basis)


_HERM_BASIS = _hermitian_basis()


def linear_reconstruct(record):
    """Least-squares inversion of the projection equations.

    Solves <P_i| X |P_i> = n_i / t_i for a Hermitian X and normalizes its
    trace; the overall rate is absorbed by the normalization.  The result is
    Hermitian with unit trace but may have negative eigenvalues and is
    returned with the ``unconstrained`` flag set.
    """
    if float(np.sum(record.counts)) <= 0:
        raise ValueError("linear inversion needs at least one nonzero count")
    kets = _pair_kets(record.settings)
    design = np.einsum("ni,mij,nj->nm", kets.conj(), _HERM_BASIS, kets).real
    rates = record.counts / record.times_s
    theta, *_ = np.linalg.lstsq(design, rates, rcond=None)
    matrix = np.einsum("m,mij->ij", theta, _HERM_BASIS)
    trace = float(np.trace(matrix).real)
    if trace <= 0:
        raise ValueError("linear inversion produced a non-positive trace")
    return DensityMatrix(matrix / trace, unconstrained=True)


# --- Cholesky parameterization -------------------------------------------

_TRIL_ROWS, _TRIL_COLS = np.tril_indices(4, k=-1)


def _t_matrix(params):
    t = np.zeros((4, 4), dtype=complex)
    t[np.arange(4), np.arange(4)] = params[:4]
    t[_TRIL_ROWS, _TRIL_COLS] = params[4:10] + 1j * params[10:16]
    return t


def _t_params(t):
    return np.concatenate(
        [t.diagonal().real, t[_TRIL_ROWS, _TRIL_COLS].real, t[_TRIL_ROWS, _TRIL_COLS].imag]
    )


def _rho_from_params(params):
    t = _t_matrix(params)
    m = t.conj().T @ t
    return m / np.trace(m).real


def _params_from_rho(rho_matrix, floor=1e-6):
    vals, vecs = np.linalg.eigh(rho_matrix)
    vals = np.clip(vals, floor, None)
    m = (vecs * vals) @ vecs.conj().T
    m = (m + m.conj().T) / 2.0
    m /= np.trace(m).real
    # factor m = T^dag T with T lower triangular: flip, Cholesky, flip back
    flip = np.eye(4)[::-1]
    upper = flip @ np.linalg.cholesky(flip @ m @ flip) @ flip
    return _t_params(upper.conj().T)


class _Likelihood:
    """Poisson likelihood with the overall rate profiled out analytically.

    Internally the optimizer works on half the Poisson deviance,
    sum(n ln(n / lambda)), which differs from the negative log-likelihood by
    a data constant but stays O(dof) near the optimum, so the convergence
    thresholds are meaningful in double precision.  With the profiled rate
    the lambdas always sum to the observed total, which is what cancels the
    linear terms.
    """

    def __init__(self, record):
        self.kets = _pair_kets(record.settings)
        self.counts = record.counts
        self.times = record.times_s
        self.total = float(np.sum(record.counts))
        pos = record.counts > 0
        self.pos = pos
        self.n_pos = record.counts[pos]
        # NLL = deviance/2 + total - sum(n ln n)
        self.nll_offset = self.total - float(np.sum(self.n_pos * np.log(self.n_pos)))

    def probabilities(self, params):
        t = _t_matrix(params)
        c = self.kets @ t.T  # rows are T |P_i>
        u = np.einsum("ni,ni->n", c, c.conj()).real
        tau = float(np.sum(np.abs(t) ** 2))
        return u / tau, c, tau, t

    def _lambdas(self, p):
        exposure = float(np.sum(self.times * p))
        rate = self.total / exposure if exposure > 0 else 0.0
        return rate, np.clip(rate * self.times * p, 1e-300, None)

    def objective(self, params):
        p, *_ = self.probabilities(params)
        _, lam = self._lambdas(p)
        return float(np.sum(self.n_pos * np.log(self.n_pos / lam[self.pos])))

    def grad_fisher(self, params):
        p, c, tau, t = self.probabilities(params)
        rate, lam = self._lambdas(p)

        # dp_i/dtheta for the 16 Cholesky parameters
        z = np.einsum("ni,nj->nij", c.conj(), self.kets)  # conj(c_i[r]) P_i[c]
        du = np.empty((16, 16))
        dtau = np.empty(16)
        diag = np.arange(4)
        du[:, :4] = 2.0 * z[:, diag, diag].real
        du[:, 4:10] = 2.0 * z[:, _TRIL_ROWS, _TRIL_COLS].real
        du[:, 10:16] = -2.0 * z[:, _TRIL_ROWS, _TRIL_COLS].imag
        dtau[:4] = 2.0 * t[diag, diag].real
        dtau[4:10] = 2.0 * t[_TRIL_ROWS, _TRIL_COLS].real
        dtau[10:16] = 2.0 * t[_TRIL_ROWS, _TRIL_COLS].imag
        dp = (du - np.outer(p, dtau)) / tau

        # the profiled rate is stationary, so its derivative drops out
        resid = rate * self.times - np.where(
            self.counts > 0, self.counts / np.clip(p, 1e-300, None), 0.0
        )
        grad = resid @ dp
        dlam = (rate * self.times)[:, None] * dp
        fisher = (dlam / lam[:, None]).T @ dlam
        return grad, fisher


def mle_reconstruct(record, init=None, max_iterations=500):
    """Maximum-likelihood density matrix for a tomography record.

    Deterministic given the record and the (optional) initial state; the
    default initialization is the linear inversion with its eigenvalues
    floored at 1e-6 and renormalized.  Damped Gauss-Newton (Fisher scoring)
    steps are accepted only when the likelihood does not worsen, with the
    damping grown tenfold on rejection and shrunk tenfold on acceptance;
    when no damping yields a step, a normalized gradient-descent step is
    tried before giving up.  Converged means the last full iteration moved
    the parameters by less than 1e-9 and the likelihood by less than 1e-10,
    or no further decrease was possible; otherwise the best state found
    within ``max_iterations`` is returned with ``converged=False``.
    """
    like = _Likelihood(record)
    if init is None:
        try:
            init = linear_reconstruct(record)
        except ValueError:
            init = DensityMatrix(np.eye(4) / 4.0)
    params = _params_from_rho(init.matrix)
    params /= np.linalg.norm(params)
    objective = like.objective(params)

    damping = 1e-3
    identity = np.eye(16)
    iterations = 0
    converged = False
    stagnant = 0
    for iterations in range(1, max_iterations + 1):
        grad, fisher = like.grad_fisher(params)
        # damping scaled to the Fisher magnitude keeps the gauge-null
        # directions of rank-deficient states from drifting
        scale = max(float(np.mean(np.diag(fisher))), 1e-12)
        accepted = False
        for _ in range(40):
            try:
                step = np.linalg.solve(fisher + damping * scale * identity, -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is None or not np.all(np.isfinite(step)):
                gnorm = float(np.linalg.norm(grad))
                step = -grad / gnorm if gnorm > 0 else None
            if step is not None:
                trial = params + step
                trial /= np.linalg.norm(trial)
                trial_objective = like.objective(trial)
                if trial_objective <= objective:
                    step_size = float(np.linalg.norm(trial - params))
                    decrease = objective - trial_objective
                    params, objective = trial, trial_objective
                    damping = max(damping / 10.0, 1e-12)
                    accepted = True
                    break
            damping *= 10.0
            if damping > 1e14:
                break
        if not accepted:
            converged = True  # no damping produces any further decrease
            break
        if step_size < _STEP_TOL and decrease < _NLL_TOL:
            converged = True
            break
        # likelihood numerically stationary while parameters slide along a
        # gauge direction: call that converged as well
        stagnant = stagnant + 1 if decrease < _NLL_TOL else 0
        if stagnant >= 3:
            converged = True
            break

    rho = DensityMatrix(_rho_from_params(params))
    return MLEResult(rho, float(objective + like.nll_offset), iterations, converged)


def background_correct(rho, k):
    """Remove the isotropic background admixture and reproject to physical.

    Computes (rho - (1-k) I/4) / k, floors negative eigenvalues at zero and
    renormalizes the trace.  k = 1 returns the input unchanged.
    """
    if not 0.0 < k <= 1.0:
        raise ValueError(f"k must lie in (0, 1], got {k}")
    m = (rho.matrix - (1.0 - k) * np.eye(4) / 4.0) / k
    vals, vecs = np.linalg.eigh(m)
    vals = np.clip(vals, 0.0, None)
    total = float(np.sum(vals))
    if total <= 0:
        raise ValueError("background correction left no physical state")
    m = (vecs * (vals / total)) @ vecs.conj().T
    return DensityMatrix((m + m.conj().T) / 2.0)


class BootstrapErrors(NamedTuple):
    fidelity_stderr: float
    concurrence_stderr: float
    fidelity_values: np.ndarray
    concurrence_values: np.ndarray


def bootstrap_errors(record, n_resamples, seed, target=None, correct_k=None):
    """Poisson-resample the counts and re-run the MLE to get spread estimates.

    Returns the sample standard deviations of the fidelity (to ``target``,
    default the cascade pair state) and of the concurrence over the
    resampled reconstructions.  With ``correct_k`` the metrics are evaluated
    on the background-corrected state instead.  Deterministic given ``seed``.
    """
    if n_resamples < 100:
        raise ValueError("n_resamples must be >= 100 for stable error estimates")
    if target is None:
        from .states import bell_psi_plus

        target = bell_psi_plus()
    rng = np.random.default_rng(seed)
    fids = np.empty(n_resamples)
    concs = np.empty(n_resamples)
    for i in range(n_resamples):
        counts = rng.poisson(record.counts).astype(float)
        if counts.sum() == 0:
            counts = np.ones(16)
        resampled = TomoRecord(record.settings, counts, record.times_s)
        rho = mle_reconstruct(resampled).rho
        if correct_k is not None:
            rho = background_correct(rho, correct_k)
        fids[i] = fidelity(rho, target)
        concs[i] = concurrence(rho)
    return BootstrapErrors(
        float(np.std(fids, ddof=1)), float(np.std(concs, ddof=1)), fids, concs
    )


# ---------------------------------------------------------------------------
# CSV: one row per setting, "setting_a,setting_b,counts,seconds" with
# settings named from {H, V, D, A, R, L}.
# ---------------------------------------------------------------------------


def record_to_csv(record, names=None):
    if names is None:
        names = [(a, b) for a in TOMO_BASIS for b in TOMO_BASIS]
        if tuple(record.settings) != standard_settings():
            raise ValueError("only standard-setting records serialize without explicit names")
    lines = ["setting_a,setting_b,counts,seconds"]
    for (na, nb), count, time in zip(names, record.counts, record.times_s):
        lines.append(f"{na},{nb},{float(count):.10g},{float(time)!r}")
    return "\n".join(lines) + "\n"


def record_from_csv(text):
    settings = []
    counts = []
    times = []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line != "setting_a,setting_b,counts,seconds":
                raise ValueError(
                    f"line {lineno}: expected header 'setting_a,setting_b,counts,seconds'"
                )
            header_seen = True
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 4:
            raise ValueError(f"line {lineno}: expected 4 fields, found {len(fields)}")
        name_a, name_b = fields[0].upper(), fields[1].upper()
        for name in (name_a, name_b):
            if name not in ANALYZER_SETTINGS:
                raise ValueError(f"line {lineno}: unknown analyzer name {name!r}")
        settings.append((ANALYZER_SETTINGS[name_a], ANALYZER_SETTINGS[name_b]))
        counts.append(float(fields[2]))
        times.append(float(fields[3]))
    if len(settings) != 16:
        raise ValueError(f"expected 16 data rows, found {len(settings)}")
    return TomoRecord(tuple(settings), np.array(counts), np.array(times))


def load_record(path):
    with open(path, "r", encoding="ascii") as fh:
        return record_from_csv(fh.read())


def save_record(record, path, names=None):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(record_to_csv(record, names=names))
