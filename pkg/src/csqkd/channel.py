"""Fluctuating free-space link modeled as an ensemble of stable sub-channels.

The atmospheric channel fluctuates slowly compared to the symbol rate, so a
transmission window splits into M sub-channels over which the transmittance
T_i and excess noise eps_i are constant.  Within sub-channel i, Alice's
quadrature symbols x and Bob's measurements y obey the linear Gaussian
relation

    y = sqrt(eta * T_i) * x + z,    z ~ N(0, sigma_i^2),
    sigma_i^2 = 1 + eta * T_i * eps_i + nu_el,

in shot-noise units (vacuum variance = 1 throughout this package).  This
module holds the protocol/channel containers, synthetic data generation,
and the probability-weighted ensemble means fed to the security analysis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

DETECTIONS = ("homodyne", "heterodyne")

DEFAULT_MODULATION_VARIANCE = 4.0
DEFAULT_DETECTOR_EFFICIENCY = 0.6
DEFAULT_ELECTRONIC_NOISE = 0.05
DEFAULT_RECONCILIATION_EFFICIENCY = 0.95


@dataclass(frozen=True)
class ProtocolParams:
    """Protocol-level constants, all variances in shot-noise units.

    Attributes:
        modulation_variance: variance V_A of Alice's Gaussian modulation.
        detector_efficiency: eta in (0, 1].
        electronic_noise: nu_el >= 0.
        reconciliation_efficiency: beta in (0, 1].
        detection: "homodyne" or "heterodyne".
    """

    modulation_variance: float = DEFAULT_MODULATION_VARIANCE
    detector_efficiency: float = DEFAULT_DETECTOR_EFFICIENCY
    electronic_noise: float = DEFAULT_ELECTRONIC_NOISE
    reconciliation_efficiency: float = DEFAULT_RECONCILIATION_EFFICIENCY
    detection: str = "homodyne"

    def __post_init__(self) -> None:
        if not self.modulation_variance > 0:
            raise ValueError(f"modulation_variance must be > 0, got {self.modulation_variance}")
        if not 0 < self.detector_efficiency <= 1:
            raise ValueError(f"detector_efficiency must be in (0, 1], got {self.detector_efficiency}")
        if self.electronic_noise < 0:
            raise ValueError(f"electronic_noise must be >= 0, got {self.electronic_noise}")
        if not 0 < self.reconciliation_efficiency <= 1:
            raise ValueError(
                f"reconciliation_efficiency must be in (0, 1], got {self.reconciliation_efficiency}"
            )
        if self.detection not in DETECTIONS:
            raise ValueError(f"detection must be one of {DETECTIONS}, got {self.detection!r}")

    @property
    def epr_variance(self) -> float:
        """Equivalent EPR variance V = V_A + 1."""
        return self.modulation_variance + 1.0


@dataclass(frozen=True)
class SubChannel:
    """One stable slice of the fluctuating link."""

    index: int
    transmittance: float
    excess_noise: float
    probability: float
    block_length: int

    def __post_init__(self) -> None:
        if not 0 < self.transmittance <= 1:
            raise ValueError(
                f"sub-channel {self.index}: transmittance must be in (0, 1], got {self.transmittance}"
            )
        if self.excess_noise < 0:
            raise ValueError(
                f"sub-channel {self.index}: excess_noise must be >= 0, got {self.excess_noise}"
            )
        if not 0 <= self.probability <= 1:
            raise ValueError(
                f"sub-channel {self.index}: probability must be in [0, 1], got {self.probability}"
            )
        if self.block_length < 1:
            raise ValueError(
                f"sub-channel {self.index}: block_length must be >= 1, got {self.block_length}"
            )


def noise_variance(sub: SubChannel, params: ProtocolParams) -> float:
    """Variance of the additive noise z: 1 + eta*T*eps + nu_el."""
    return (
        1.0
        + params.detector_efficiency * sub.transmittance * sub.excess_noise
        + params.electronic_noise
    )


@dataclass(frozen=True)
class SubChannelEnsemble:
    """Ordered collection of sub-channels with occupation probabilities."""

    channels: tuple[SubChannel, ...]

    def __post_init__(self) -> None:
        if not self.channels:
            raise ValueError("ensemble must contain at least one sub-channel")
        total = sum(c.probability for c in self.channels)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"sub-channel probabilities must sum to 1 (got {total!r})")

    @property
    def count(self) -> int:
        return len(self.channels)

    @property
    def transmittances(self) -> np.ndarray:
        return np.array([c.transmittance for c in self.channels])

    @property
    def excess_noises(self) -> np.ndarray:
        return np.array([c.excess_noise for c in self.channels])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([c.probability for c in self.channels])

    @property
    def block_lengths(self) -> np.ndarray:
        return np.array([c.block_length for c in self.channels], dtype=np.int64)


def build_ensemble(
    transmittances: Sequence[float],
    excess_noise: float | Sequence[float] = 0.01,
    block_length: int | Sequence[int] = 10_000,
    probabilities: Sequence[float] | None = None,
) -> SubChannelEnsemble:
    """Assemble a sub-channel ensemble from transmittance values.

    Args:
        transmittances: one value in (0, 1] per sub-channel.
        excess_noise: shared value, or one per sub-channel.
        block_length: shared symbol count per sub-channel, or one each.
        probabilities: occupation probabilities; default p_i = m_i / sum(m_j).

    Raises:
        ValueError: empty input, or an out-of-range entry (the message names
            its index).
    """
    t = np.asarray(transmittances, dtype=float)
    if t.size == 0:
        raise ValueError("ensemble must contain at least one sub-channel")
    bad = np.flatnonzero((t <= 0) | (t > 1))
    if bad.size:
        raise ValueError(
            f"transmittance out of (0, 1] at index {int(bad[0])}: {t[bad[0]]!r}"
        )
    count = t.size
    eps = np.broadcast_to(np.asarray(excess_noise, dtype=float), (count,))
    lengths = np.broadcast_to(np.asarray(block_length, dtype=np.int64), (count,))
    if probabilities is None:
        p = lengths / float(lengths.sum())
    else:
        p = np.asarray(probabilities, dtype=float)
        if p.shape != (count,):
            raise ValueError(f"expected {count} probabilities, got shape {p.shape}")
    channels = tuple(
        SubChannel(
            index=i,
            transmittance=float(t[i]),
            excess_noise=float(eps[i]),
            probability=float(p[i]),
            block_length=int(lengths[i]),
        )
        for i in range(count)
    )
    return SubChannelEnsemble(channels)


def read_transmittance_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Read an ensemble table with header ``index,T,epsilon,p``.

    The epsilon and p columns are optional.  Returns (T, epsilon-or-None,
    p-or-None) ordered by row.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "T" not in reader.fieldnames:
            raise ValueError(f"{path}: expected a header containing a 'T' column")
        has_eps = "epsilon" in reader.fieldnames
        has_p = "p" in reader.fieldnames
        t_vals: list[float] = []
        eps_vals: list[float] = []
        p_vals: list[float] = []
        for row in reader:
            t_vals.append(float(row["T"]))
            if has_eps and row["epsilon"] not in (None, ""):
                eps_vals.append(float(row["epsilon"]))
            if has_p and row["p"] not in (None, ""):
                p_vals.append(float(row["p"]))
    eps = np.array(eps_vals) if len(eps_vals) == len(t_vals) and t_vals else None
    p = np.array(p_vals) if len(p_vals) == len(t_vals) and t_vals else None
    return np.array(t_vals), eps, p


def ensemble_from_csv(
    path: str | Path,
    excess_noise: float = 0.01,
    block_length: int = 10_000,
) -> SubChannelEnsemble:
    """Build an ensemble from a CSV file; file columns override the defaults."""
    t, eps, p = read_transmittance_csv(path)
    return build_ensemble(
        t,
        excess_noise=eps if eps is not None else excess_noise,
        block_length=block_length,
        probabilities=p,
    )


def sample_lognormal_transmittances(
    count: int,
    distance_km: float,
    seed: int,
    attenuation_per_km: float = 0.15,
    sigma_log: float = 0.3,
    max_transmittance: float = 1.0,
) -> np.ndarray:
    """Draw a bounded log-normal transmittance ensemble.

    The log-normal mean decays exponentially with the nominal distance label:
    E[T] = exp(-attenuation_per_km * distance_km).  Samples falling outside
    (0, max_transmittance] are redrawn, so the result is bounded and
    deterministic for a fixed seed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    mean_t = math.exp(-attenuation_per_km * distance_km)
    mu = math.log(mean_t) - 0.5 * sigma_log**2
    rng = np.random.default_rng(seed)
    out = np.empty(count)
    filled = 0
    for _ in range(1000):
        draw = rng.lognormal(mu, sigma_log, size=count - filled)
        good = draw[(draw > 0) & (draw <= max_transmittance)]
        out[filled : filled + good.size] = good
        filled += good.size
        if filled == count:
            return out
    raise ValueError(
        f"could not draw {count} bounded samples (mean_t={mean_t:.3g}); "
        "lower sigma_log or increase distance"
    )


@dataclass(frozen=True)
class QuadratureDataset:
    """Per-sub-channel Alice/Bob variable blocks with seed provenance."""

    alice: tuple[np.ndarray, ...]
    bob: tuple[np.ndarray, ...]
    seed: int
    params: ProtocolParams
    zero_noise: bool = False

    @property
    def count(self) -> int:
        return len(self.alice)

    @property
    def block_lengths(self) -> np.ndarray:
        return np.array([len(x) for x in self.alice], dtype=np.int64)


def attenuate(x: np.ndarray, transmittance: float, detector_efficiency: float) -> np.ndarray:
    """Apply the noiseless channel map sqrt(eta*T) * x."""
    return math.sqrt(detector_efficiency * transmittance) * np.asarray(x, dtype=float)


def simulate_block(
    ensemble: SubChannelEnsemble,
    params: ProtocolParams,
    seed: int,
    zero_noise: bool = False,
) -> QuadratureDataset:
    """Generate one quadrature dataset for every sub-channel.

    Each sub-channel draws from an independent child seed of ``seed``, so
    generation may run in any order (or in parallel) with identical output.
    ``zero_noise`` forces z = 0; it exists for exact-recovery testing and has
    no physical counterpart (real data always carries the vacuum unit).
    """
    children = np.random.SeedSequence(seed).spawn(ensemble.count)
    std_x = math.sqrt(params.modulation_variance)
    alice: list[np.ndarray] = []
    bob: list[np.ndarray] = []
    for sub, child in zip(ensemble.channels, children):
        rng = np.random.default_rng(child)
        x = rng.normal(0.0, std_x, sub.block_length)
        if zero_noise:
            z = np.zeros(sub.block_length)
        else:
            z = rng.normal(0.0, math.sqrt(noise_variance(sub, params)), sub.block_length)
        y = attenuate(x, sub.transmittance, params.detector_efficiency) + z
        alice.append(x)
        bob.append(y)
    return QuadratureDataset(
        alice=tuple(alice), bob=tuple(bob), seed=seed, params=params, zero_noise=zero_noise
    )


def ensemble_means(ensemble: SubChannelEnsemble) -> tuple[float, float, float]:
    """Probability-weighted (<T>, <sqrt(T)>, <eps>) of the ensemble."""
    p = ensemble.probabilities
    t = ensemble.transmittances
    eps = ensemble.excess_noises
    return float(p @ t), float(p @ np.sqrt(t)), float(p @ eps)


def dataset_to_csv(dataset: QuadratureDataset, path: str | Path) -> None:
    """Dump a dataset as ``i,j,x,y`` rows for audit."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["i", "j", "x", "y"])
        for i, (x, y) in enumerate(zip(dataset.alice, dataset.bob)):
            for j in range(len(x)):
                writer.writerow([i, j, format(x[j], ".12g"), format(y[j], ".12g")])
