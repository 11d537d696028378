"""Independent reference implementations used as test oracles.

Everything here is deliberately brute-force and shares no code path with the
package: direct O(m^2) transforms, exhaustive subset fits, and a numeric
Gaussian-state pipeline (build the full covariance matrix, apply symplectic
beamsplitters and measurement updates, read eigenvalues of |i Omega gamma|).
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from csqkd.channel import ProtocolParams
from csqkd.security import ChannelSummary


# ---------------------------------------------------------------------------
# discrete Fourier transforms by direct summation
# ---------------------------------------------------------------------------

def dft_direct(v: np.ndarray) -> np.ndarray:
    """Unitary analysis DFT as an explicit double sum."""
    v = np.asarray(v, dtype=np.complex128)
    m = v.size
    out = np.zeros(m, dtype=np.complex128)
    for k in range(m):
        acc = 0.0 + 0.0j
        for j in range(m):
            acc += v[j] * np.exp(-2j * np.pi * j * k / m)
        out[k] = acc / math.sqrt(m)
    return out


def idft_direct(s: np.ndarray) -> np.ndarray:
    """Unitary synthesis DFT as an explicit double sum."""
    s = np.asarray(s, dtype=np.complex128)
    m = s.size
    out = np.zeros(m, dtype=np.complex128)
    for j in range(m):
        acc = 0.0 + 0.0j
        for k in range(m):
            acc += s[k] * np.exp(2j * np.pi * j * k / m)
        out[j] = acc / math.sqrt(m)
    return out


# ---------------------------------------------------------------------------
# exhaustive sparse fits
# ---------------------------------------------------------------------------

def best_subset_fit(matrix: np.ndarray, y: np.ndarray, k: int):
    """Exhaustive best k-column least-squares fit.

    Returns (support tuple, coefficients, residual norm) of the subset with
    the smallest residual; ties resolve to the lexicographically smallest
    support.
    """
    m = matrix.shape[1]
    best: tuple[tuple[int, ...], np.ndarray, float] | None = None
    for support in itertools.combinations(range(m), k):
        cols = matrix[:, support]
        coef, _, rank, _ = np.linalg.lstsq(cols, y, rcond=None)
        if rank < len(support):
            continue
        res = float(np.linalg.norm(y - cols @ coef))
        if best is None or res < best[2] - 1e-15:
            best = (support, coef, res)
    assert best is not None
    return best


def ls_transmittance(x_s: np.ndarray, y_s: np.ndarray, eta: float) -> float:
    """Closed-form least-squares baseline: sqrt(eta T) = sum(x y) / sum(x^2)."""
    gain = float(x_s @ y_s) / float(x_s @ x_s)
    return gain**2 / eta


# ---------------------------------------------------------------------------
# numeric Gaussian-state pipeline
# ---------------------------------------------------------------------------

def omega(n_modes: int) -> np.ndarray:
    block = np.array([[0.0, 1.0], [-1.0, 0.0]])
    out = np.zeros((2 * n_modes, 2 * n_modes))
    for i in range(n_modes):
        out[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = block
    return out


def symplectic_eigenvalues(gamma: np.ndarray) -> np.ndarray:
    """All symplectic eigenvalues of a covariance matrix, descending."""
    n = gamma.shape[0] // 2
    ev = np.linalg.eigvals(1j * omega(n) @ gamma)
    mags = np.sort(np.abs(ev))
    return mags[::2][::-1].copy()


def epr_cov(variance: float) -> np.ndarray:
    c = math.sqrt(variance**2 - 1.0)
    sz = np.diag([1.0, -1.0])
    top = np.hstack([variance * np.eye(2), c * sz])
    bottom = np.hstack([c * sz, variance * np.eye(2)])
    return np.vstack([top, bottom])


def fading_cov(summary: ChannelSummary, params: ProtocolParams) -> np.ndarray:
    """Two-mode Alice-Bob covariance matrix of the fading channel."""
    v = params.epr_variance
    c = summary.sqrt_t_mean * math.sqrt(v**2 - 1.0)
    b = summary.t_mean * (v - 1.0 + summary.eps_mean) + 1.0
    sz = np.diag([1.0, -1.0])
    top = np.hstack([v * np.eye(2), c * sz])
    bottom = np.hstack([c * sz, b * np.eye(2)])
    return np.vstack([top, bottom])


def beamsplitter(gamma: np.ndarray, mode_a: int, mode_b: int, transmission: float) -> np.ndarray:
    """Mix two modes: out_a = sqrt(t) a + sqrt(1-t) b (orthogonal completion)."""
    n = gamma.shape[0] // 2
    s = np.eye(2 * n)
    t = math.sqrt(transmission)
    r = math.sqrt(1.0 - transmission)
    ia, ib = 2 * mode_a, 2 * mode_b
    for off in range(2):
        s[ia + off, ia + off] = t
        s[ia + off, ib + off] = r
        s[ib + off, ia + off] = -r
        s[ib + off, ib + off] = t
    return s @ gamma @ s.T


def _partition(gamma: np.ndarray, measured_mode: int):
    n = gamma.shape[0] // 2
    keep = [i for i in range(2 * n) if i // 2 != measured_mode]
    drop = [2 * measured_mode, 2 * measured_mode + 1]
    g_rr = gamma[np.ix_(keep, keep)]
    g_rb = gamma[np.ix_(keep, drop)]
    g_bb = gamma[np.ix_(drop, drop)]
    return g_rr, g_rb, g_bb


def condition_homodyne(gamma: np.ndarray, measured_mode: int) -> np.ndarray:
    """Conditional covariance after an x-quadrature homodyne on one mode."""
    g_rr, g_rb, g_bb = _partition(gamma, measured_mode)
    pinv = np.zeros((2, 2))
    pinv[0, 0] = 1.0 / g_bb[0, 0]
    return g_rr - g_rb @ pinv @ g_rb.T


def condition_heterodyne(gamma: np.ndarray, measured_mode: int) -> np.ndarray:
    """Conditional covariance after a heterodyne on one mode."""
    g_rr, g_rb, g_bb = _partition(gamma, measured_mode)
    return g_rr - g_rb @ np.linalg.inv(g_bb + np.eye(2)) @ g_rb.T


def holevo_numeric(summary: ChannelSummary, params: ProtocolParams) -> tuple[float, np.ndarray, np.ndarray]:
    """Numeric (chi_BE, [lambda_1, lambda_2], conditional spectrum).

    Builds Alice-Bob plus the detector EPR pair, mixes the received mode with
    one EPR arm on a beamsplitter of transmission eta, measures the mixed
    mode, and reads all eigenvalues numerically.  For the ideal detector
    (eta = 1, nu_el = 0) the auxiliary modes decouple and are skipped.
    """
    eta = params.detector_efficiency
    nu = params.electronic_noise
    gamma_ab = fading_cov(summary, params)
    lam12 = symplectic_eigenvalues(gamma_ab)

    if eta == 1.0 and nu == 0.0:
        if params.detection == "homodyne":
            cond = condition_homodyne(gamma_ab, measured_mode=1)
        else:
            cond = condition_heterodyne(gamma_ab, measured_mode=1)
        cond_spectrum = symplectic_eigenvalues(cond)
    else:
        if eta == 1.0:
            raise ValueError("numeric oracle needs eta < 1 to host electronic noise")
        if params.detection == "homodyne":
            v_d = 1.0 + nu / (1.0 - eta)
        else:
            v_d = 1.0 + 2.0 * nu / (1.0 - eta)
        # modes: 0 = Alice, 1 = received, 2/3 = detector EPR pair
        gamma = np.zeros((8, 8))
        gamma[:4, :4] = gamma_ab
        gamma[4:, 4:] = epr_cov(v_d)
        gamma = beamsplitter(gamma, mode_a=1, mode_b=2, transmission=eta)
        if params.detection == "homodyne":
            cond = condition_homodyne(gamma, measured_mode=1)
        else:
            cond = condition_heterodyne(gamma, measured_mode=1)
        cond_spectrum = symplectic_eigenvalues(cond)

    def g(x: float) -> float:
        if x <= 1.0:
            return 0.0
        up = (x + 1.0) / 2.0
        down = (x - 1.0) / 2.0
        return up * math.log2(up) - down * math.log2(down)

    chi = sum(g(v) for v in lam12) - sum(g(v) for v in cond_spectrum)
    return chi, lam12, cond_spectrum
