"""Pulse-level stochastic emulation of both transmitter protocols.

Serves as an independent check on the closed-form gain/error model: each
pulse draws a photon number, photons are thinned binomially through
collection and channel, Bob's two threshold detectors click on photons or
dark counts, and tallies accumulate per intensity.  Reports carry raw
integer tallies only; rates and binomial errors are derived on demand.

Error bookkeeping is matched-basis: every pulse is scored as if the bases
agreed (each arriving photon lands on the wrong detector with probability
e_d, double clicks resolve to a random bit), while basis sifting is
tracked separately as an independent halving.  This matches the analytic
model, whose error rates are defined on the matched-basis subsample.

Pulses are processed in fixed-size shards, one spawned child generator
per shard, and tallies merged by summation, so a report depends only on
(seed, n_pulses), never on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel_model import ChannelParams, transmittance
from .errors import ConfigError
from .photon_source import PhotonDistribution

# Pulses per RNG shard; fixed so reports are independent of worker layout.
SHARD_SIZE = 1_000_000

_PROTOCOLS = ("dtb", "hp")


@dataclass(frozen=True, slots=True)
class SimConfig:
    """Configuration of one simulation run.

    For the decoy protocol, ``intensities`` maps labels to photon
    distributions and ``intensity_weights`` gives the per-pulse selection
    probabilities.  For heralded purification, ``source`` is the single
    emission distribution and the beam-splitter parameters apply.
    """

    protocol: str
    n_pulses: int
    seed: int
    channel: ChannelParams
    eta_c: float = 1.0
    intensities: dict[str, PhotonDistribution] = field(default_factory=dict)
    intensity_weights: dict[str, float] = field(default_factory=dict)
    source: PhotonDistribution | None = None
    t: float = 0.5
    eta_d: float = 0.9
    p_dc_alice: float | None = None

    def __post_init__(self) -> None:
        if self.protocol not in _PROTOCOLS:
            raise ConfigError(f"protocol must be one of {_PROTOCOLS}")
        if self.n_pulses < 1:
            raise ConfigError("n_pulses must be at least 1")
        if not 0.0 <= self.eta_c <= 1.0:
            raise ConfigError("eta_c must lie in [0, 1]")
        if self.protocol == "dtb":
            if not self.intensities:
                raise ConfigError("dtb runs need at least one intensity")
            if set(self.intensities) != set(self.intensity_weights):
                raise ConfigError("intensity labels and weights must match")
            total = sum(self.intensity_weights.values())
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"intensity weights sum to {total}, not 1")
        else:
            if self.source is None:
                raise ConfigError("hp runs need a source distribution")
            if not 0.0 < self.t < 1.0:
                raise ConfigError("t must lie in (0, 1)")
            if not 0.0 < self.eta_d <= 1.0:
                raise ConfigError("eta_d must lie in (0, 1]")

    def to_dict(self) -> dict:
        out = {"protocol": self.protocol, "n_pulses": self.n_pulses,
               "seed": self.seed, "channel": self.channel.to_dict(),
               "eta_c": self.eta_c}
        if self.protocol == "dtb":
            out["intensities"] = {k: list(v.as_tuple())
                                  for k, v in self.intensities.items()}
            out["intensity_weights"] = dict(self.intensity_weights)
        else:
            out["source"] = list(self.source.as_tuple())
            out["t"] = self.t
            out["eta_d"] = self.eta_d
            out["p_dc_alice"] = self.p_dc_alice
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        kwargs = dict(protocol=data["protocol"], n_pulses=int(data["n_pulses"]),
                      seed=int(data["seed"]),
                      channel=ChannelParams.from_dict(data["channel"]),
                      eta_c=float(data.get("eta_c", 1.0)))
        if data["protocol"] == "dtb":
            kwargs["intensities"] = {
                k: PhotonDistribution(*v) for k, v in data["intensities"].items()}
            kwargs["intensity_weights"] = {
                k: float(v) for k, v in data["intensity_weights"].items()}
        else:
            kwargs["source"] = PhotonDistribution(*data["source"])
            kwargs["t"] = float(data.get("t", 0.5))
            kwargs["eta_d"] = float(data.get("eta_d", 0.9))
            pda = data.get("p_dc_alice")
            kwargs["p_dc_alice"] = None if pda is None else float(pda)
        return cls(**kwargs)


@dataclass(slots=True)
class IntensityTally:
    sent: int = 0
    detected: int = 0
    errors: int = 0
    sifted: int = 0

    def add(self, other: "IntensityTally") -> None:
        self.sent += other.sent
        self.detected += other.detected
        self.errors += other.errors
        self.sifted += other.sifted


@dataclass(slots=True)
class SimReport:
    """Integer tallies of one run plus derived empirical rates."""

    protocol: str
    seed: int
    n_pulses: int
    tallies: dict[str, IntensityTally]
    heralds: int = 0
    herald_and_one: int = 0
    herald_and_two: int = 0

    def q(self, label: str) -> float:
        """Empirical gain: detections per sent pulse of this intensity."""
        t = self.tallies[label]
        return t.detected / t.sent if t.sent else 0.0

    def q_sigma(self, label: str) -> float:
        t = self.tallies[label]
        if not t.sent:
            return 0.0
        p = t.detected / t.sent
        return math.sqrt(max(p * (1.0 - p), 0.0) / t.sent)

    def e(self, label: str) -> float:
        """Empirical matched-basis error fraction among detections."""
        t = self.tallies[label]
        return t.errors / t.detected if t.detected else 0.0

    def e_sigma(self, label: str) -> float:
        t = self.tallies[label]
        if not t.detected:
            return 0.0
        p = t.errors / t.detected
        return math.sqrt(max(p * (1.0 - p), 0.0) / t.detected)

    def to_dict(self) -> dict:
        out = {
            "protocol": self.protocol,
            "seed": self.seed,
            "n_pulses": self.n_pulses,
            "tallies": {k: {"sent": v.sent, "detected": v.detected,
                            "errors": v.errors, "sifted": v.sifted}
                        for k, v in sorted(self.tallies.items())},
        }
        if self.protocol == "hp":
            out.update(heralds=self.heralds,
                       herald_and_one=self.herald_and_one,
                       herald_and_two=self.herald_and_two)
        return out


def _shards(n_pulses: int, seed: int):
    children = np.random.SeedSequence(seed).spawn(
        (n_pulses + SHARD_SIZE - 1) // SHARD_SIZE)
    done = 0
    for child in children:
        m = min(SHARD_SIZE, n_pulses - done)
        done += m
        yield m, np.random.default_rng(child)


def _sample_counts(rng: np.random.Generator, dist: PhotonDistribution,
                   m: int) -> np.ndarray:
    probs = np.asarray(dist.as_tuple(), dtype=float)
    probs = probs / probs.sum()
    return rng.choice(len(probs), size=m, p=probs)


def _bob_clicks(rng: np.random.Generator, arrived: np.ndarray,
                channel: ChannelParams):
    """Threshold-detector pair: (detected, error) boolean arrays.

    Each arriving photon lands on the wrong-bit detector with probability
    e_d.  Per-detector dark probability d solves 1-(1-d)^2 = p_dc so the
    empirical vacuum yield matches the analytic Y_0 = p_dc exactly.
    Double clicks resolve to a random bit.
    """
    m = arrived.shape[0]
    wrong = rng.binomial(arrived, channel.e_d)
    right = arrived - wrong
    d_each = 1.0 - math.sqrt(1.0 - channel.p_dc)
    click_r = (right > 0) | (rng.random(m) < d_each)
    click_w = (wrong > 0) | (rng.random(m) < d_each)
    detected = click_r | click_w
    double = click_r & click_w
    error = np.where(double, rng.random(m) < 0.5, click_w & ~click_r)
    return detected, error & detected


def run_dtb(config: SimConfig) -> SimReport:
    """Simulate the decoy-state transmitter pulse by pulse."""
    if config.protocol != "dtb":
        raise ConfigError("run_dtb needs a dtb config")
    labels = sorted(config.intensities)
    dists = [config.intensities[k] for k in labels]
    weights = np.asarray([config.intensity_weights[k] for k in labels])
    weights = weights / weights.sum()
    eta = transmittance(config.channel)
    tallies = {k: IntensityTally() for k in labels}

    for m, rng in _shards(config.n_pulses, config.seed):
        chosen = rng.choice(len(labels), size=m, p=weights)
        n = np.zeros(m, dtype=np.int64)
        for k, dist in enumerate(dists):
            mask = chosen == k
            if mask.any():
                n[mask] = _sample_counts(rng, dist, int(mask.sum()))
        if config.eta_c < 1.0:
            n = rng.binomial(n, config.eta_c)
        arrived = rng.binomial(n, eta)
        detected, error = _bob_clicks(rng, arrived, config.channel)
        basis_match = rng.random(m) < 0.5
        sifted = detected & basis_match
        for k, label in enumerate(labels):
            mask = chosen == k
            t = tallies[label]
            t.sent += int(mask.sum())
            t.detected += int((detected & mask).sum())
            t.errors += int((error & mask).sum())
            t.sifted += int((sifted & mask).sum())
    return SimReport(protocol="dtb", seed=config.seed,
                     n_pulses=config.n_pulses, tallies=tallies)


def run_hp(config: SimConfig) -> SimReport:
    """Simulate the heralded-purification transmitter pulse by pulse.

    A pulse enters the key only when the herald detector clicked, so the
    per-intensity tally counts herald-gated detections: Bob's clicks on
    un-heralded pulses are discarded, mirroring the sifting rule, and
    ``q``/``e`` are the heralded gain and its matched-basis error.
    """
    if config.protocol != "hp":
        raise ConfigError("run_hp needs an hp config")
    pda = config.p_dc_alice
    if pda is None:
        pda = config.channel.p_dc
    eta = transmittance(config.channel)
    tally = IntensityTally()
    heralds = herald_and_one = herald_and_two = 0

    for m, rng in _shards(config.n_pulses, config.seed):
        n = _sample_counts(rng, config.source, m)
        if config.eta_c < 1.0:
            n = rng.binomial(n, config.eta_c)
        reflected = rng.binomial(n, 1.0 - config.t)
        toward_bob = n - reflected
        herald_click = rng.binomial(reflected, config.eta_d) > 0
        herald = herald_click | (rng.random(m) < pda)
        arrived = rng.binomial(toward_bob, eta)
        detected, error = _bob_clicks(rng, arrived, config.channel)
        basis_match = rng.random(m) < 0.5
        kept = herald & detected
        tally.sent += m
        tally.detected += int(kept.sum())
        tally.errors += int((error & kept).sum())
        tally.sifted += int((kept & basis_match).sum())
        heralds += int(herald.sum())
        herald_and_one += int((herald & (toward_bob == 1)).sum())
        herald_and_two += int((herald & (toward_bob == 2)).sum())
    return SimReport(protocol="hp", seed=config.seed,
                     n_pulses=config.n_pulses, tallies={"s3": tally},
                     heralds=heralds, herald_and_one=herald_and_one,
                     herald_and_two=herald_and_two)


def run(config: SimConfig) -> SimReport:
    return run_dtb(config) if config.protocol == "dtb" else run_hp(config)


def poisson_stream(rng: np.random.Generator, mu: float, m: int) -> np.ndarray:
    """Per-pulse photon numbers of a coherent benchmark source."""
    return rng.poisson(mu, size=m)


def empirical_g2(photon_numbers: np.ndarray,
                 rng: np.random.Generator | None = None,
                 eta: float | None = None) -> float:
    """Second-order correlation at zero delay from a pulse stream.

    With ``eta`` unset, returns the photon-number-resolved moment ratio
    <n(n-1)> / <n>^2, which a split-detector measurement approaches in
    the low-efficiency limit.  With ``eta`` set, emulates the hardware
    estimator: photons are thinned by ``eta``, split 50:50 onto two
    threshold detectors, and the per-pulse coincidence rate is normalized
    by the product of singles rates (biased upward at finite efficiency
    because threshold detectors saturate).
    """
    n = np.asarray(photon_numbers)
    if n.size == 0:
        raise ValueError("empty stream")
    if eta is None:
        mean = n.mean()
        if mean == 0.0:
            raise ValueError("stream has no photons; g2 undefined")
        return float((n * (n - 1)).mean() / mean ** 2)
    if rng is None:
        raise ValueError("the threshold-detector estimator needs an rng")
    seen = rng.binomial(n, eta)
    a = rng.binomial(seen, 0.5)
    b = seen - a
    singles_a = (a > 0).mean()
    singles_b = (b > 0).mean()
    if singles_a == 0.0 or singles_b == 0.0:
        raise ValueError("no clicks on one arm; g2 undefined")
    coincidences = ((a > 0) & (b > 0)).mean()
    return float(coincidences / (singles_a * singles_b))
