"""Tomography count matrices to gains, error rates, and key-rate points.

The lab measures a 4x4 count matrix per excitation intensity and ND
setting: rows are Alice's prepared states (H, V, D, A), columns Bob's
detectors.  Dividing by the number of sent qubits -- repetition rate
times the transmitter's optical budget times exposure -- gives the gain;
wrong-detector counts over the matched-basis cells give the error rate.
Per-intensity rates then feed the exact decoy solve and the key-rate
bound, with counting uncertainties propagated by finite differences.

Input format: counts as CSV rows ``alice_state,bob_detector,counts``
with a JSON sidecar holding exposure and labels.  No dark-count
subtraction is applied to the raw matrices.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel_model import ChannelParams, ObservedRates
from .errors import ConfigError, InconsistentDataError, QkdError
from .photon_source import PhotonDistribution
from .protocols import skr_dtb_from_rates, solve_dtb

STATES = ("H", "V", "D", "A")

# Wrong-detector partner within each basis.
_CONJUGATE = {"H": "V", "V": "H", "D": "A", "A": "D"}

# Vacuum-intensity constants used when no S0 map was recorded: the
# receiver's measured dark yield and the random error of dark clicks.
FALLBACK_Y0 = 1.7e-6
FALLBACK_E0 = 0.5


@dataclass(frozen=True, slots=True)
class TomographyMap:
    """One intensity's 4x4 tomography counts at one ND setting."""

    counts: np.ndarray
    exposure_s: float
    intensity_label: str
    nd_filter_db: float

    def __post_init__(self) -> None:
        arr = np.asarray(self.counts, dtype=np.int64)
        if arr.shape != (4, 4):
            raise ConfigError("counts must be a 4x4 matrix")
        if (arr < 0).any():
            raise ConfigError("counts must be non-negative")
        if not self.exposure_s > 0:
            raise ConfigError("exposure_s must be positive")
        object.__setattr__(self, "counts", arr)

    def cell(self, alice: str, bob: str) -> int:
        return int(self.counts[STATES.index(alice), STATES.index(bob)])


@dataclass(frozen=True, slots=True)
class AliceBudget:
    """Transmitter bookkeeping converting exposure into sent qubits."""

    rep_rate_n: float
    eta_a: float
    eta_c_na: float

    def __post_init__(self) -> None:
        if not self.rep_rate_n > 0:
            raise ConfigError("rep_rate_n must be positive")
        for name in ("eta_a", "eta_c_na"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1]")

    @property
    def sent_per_second(self) -> float:
        return self.rep_rate_n * self.eta_a * self.eta_c_na

    def sent(self, exposure_s: float) -> float:
        return self.sent_per_second * exposure_s


@dataclass(frozen=True, slots=True)
class RatesWithSigma:
    """Observed gain and error rate with counting uncertainties."""

    q: float
    q_sigma: float
    e: float
    e_sigma: float
    detected: int
    matched: int

    def observed(self) -> ObservedRates:
        e = self.e if math.isfinite(self.e) else 0.5
        return ObservedRates(q=self.q, e=e)


@dataclass(frozen=True, slots=True)
class SkrPoint:
    """One extracted key-rate point at one channel attenuation."""

    protocol: str
    loss_db: float
    skr: float
    skr_sigma: float


def gains_and_errors(tmap: TomographyMap, budget: AliceBudget) -> RatesWithSigma:
    """Gain and matched-basis error rate of one tomography matrix.

    The gain counts every detection over the full matrix; the error rate
    uses only matched-basis cells (H/V rows against H/V columns, D/A
    against D/A), wrong-detector over total.  Uncertainties are Poisson
    per cell, first order: sqrt(detected)/sent for the gain, binomial for
    the error fraction.  With no matched-basis detections the error rate
    is NaN; callers decide how to proceed.
    """
    sent = budget.sent(tmap.exposure_s)
    detected = int(tmap.counts.sum())
    q = detected / sent
    q_sigma = math.sqrt(detected) / sent if detected else 1.0 / sent

    matched = wrong = 0
    for a in STATES:
        partner = _CONJUGATE[a]
        matched += tmap.cell(a, a) + tmap.cell(a, partner)
        wrong += tmap.cell(a, partner)
    if matched == 0:
        e = math.nan
        e_sigma = math.nan
    else:
        e = wrong / matched
        e_sigma = math.sqrt(max(e * (1.0 - e), 0.0) / matched)
        if e_sigma == 0.0:
            e_sigma = 1.0 / matched
    return RatesWithSigma(q=q, q_sigma=q_sigma, e=e, e_sigma=e_sigma,
                          detected=detected, matched=matched)


def _group_by_nd(maps: list[TomographyMap]) -> dict[float, dict[str, TomographyMap]]:
    grouped: dict[float, dict[str, TomographyMap]] = {}
    for tmap in maps:
        group = grouped.setdefault(tmap.nd_filter_db, {})
        if tmap.intensity_label in group:
            raise ConfigError(
                f"duplicate map for intensity {tmap.intensity_label} "
                f"at ND {tmap.nd_filter_db} dB")
        group[tmap.intensity_label] = tmap
    return grouped


def _vacuum_rates(group: dict[str, TomographyMap],
                  budget: AliceBudget) -> ObservedRates:
    if "S0" in group:
        return gains_and_errors(group["S0"], budget).observed()
    warnings.warn(
        "no vacuum (S0) map recorded; falling back to the receiver "
        f"constants Y0={FALLBACK_Y0}, e0={FALLBACK_E0}", stacklevel=3)
    return ObservedRates(q=FALLBACK_Y0, e=FALLBACK_E0)


def _solve_slack(signal: RatesWithSigma, decoy: RatesWithSigma,
                 vacuum: ObservedRates, s_stats: PhotonDistribution,
                 d_stats: PhotonDistribution, n_sigma: float = 5.0) -> float:
    """Feasibility slack for the decoy solve under counting noise.

    The exact inversion amplifies counting noise by the inverse of the
    statistics determinant, so point estimates of the solved yields and
    error rates routinely land slightly outside [0, 1] on honest data.
    This propagates the observed sigmas through the linear solve and
    returns an ``n_sigma`` band; the solve clamps within it and still
    rejects data that is genuinely inconsistent.
    """
    det = abs(s_stats.p1 * d_stats.p2 - s_stats.p2 * d_stats.p1)
    if det == 0.0:
        return 0.0
    eq_s = math.hypot(signal.e * signal.q_sigma, signal.q * signal.e_sigma)
    eq_d = math.hypot(decoy.e * decoy.q_sigma, decoy.q * decoy.e_sigma)
    s_y1 = math.hypot(d_stats.p2 * signal.q_sigma,
                      s_stats.p2 * decoy.q_sigma) / det
    s_y2 = math.hypot(s_stats.p1 * decoy.q_sigma,
                      d_stats.p1 * signal.q_sigma) / det
    s_y1e1 = math.hypot(d_stats.p2 * eq_s, s_stats.p2 * eq_d) / det
    s_y2e2 = math.hypot(s_stats.p1 * eq_d, d_stats.p1 * eq_s) / det
    sol = solve_dtb(signal.observed(), decoy.observed(), vacuum,
                    s_stats, d_stats, tol=math.inf)
    # ratio sigmas, regularized: a yield consistent with zero must not
    # zero the scale of its error-rate uncertainty
    s_e1 = math.hypot(s_y1e1, sol.e1 * s_y1) / max(sol.y1, s_y1, 1e-300)
    s_e2 = math.hypot(s_y2e2, sol.e2 * s_y2) / max(sol.y2, s_y2, 1e-300)
    return n_sigma * max(s_y1, s_y2, s_e1, s_e2)


def _dtb_rate(signal_obs: ObservedRates, decoy_obs: ObservedRates,
              vacuum_obs: ObservedRates, signal_stats: PhotonDistribution,
              decoy_stats: PhotonDistribution, q_sift: float,
              f_ec: float, solve_tol: float) -> float:
    sol = solve_dtb(signal_obs, decoy_obs, vacuum_obs,
                    signal_stats, decoy_stats, tol=solve_tol)
    return skr_dtb_from_rates(signal_obs, y1=sol.y1, e1=sol.e1,
                              p1_signal=signal_stats.p1,
                              q_sift=q_sift, f_ec=f_ec).rate


def skr_from_experiment(maps: list[TomographyMap],
                        stats: dict[str, PhotonDistribution],
                        budget: AliceBudget,
                        q_sift: float = 0.5,
                        f_ec: float = 1.22) -> list[SkrPoint]:
    """Decoy key-rate points, one per ND setting, from tomography maps.

    Each ND group needs S1 (decoy) and S2 (signal) maps; an S0 map
    supplies the vacuum rates, otherwise the receiver fallback constants
    apply with a warning.  ``stats`` maps intensity labels to photon
    statistics as sent into the channel.  The returned sigma propagates
    the six observed quantities' counting errors by central finite
    differences through the solve and the rate bound.
    """
    for label in ("S1", "S2"):
        if label not in stats:
            raise ConfigError(f"missing photon statistics for {label}")
    points: list[SkrPoint] = []
    for nd, group in sorted(_group_by_nd(maps).items()):
        for label in ("S1", "S2"):
            if label not in group:
                raise ConfigError(f"ND {nd} dB group lacks an {label} map")
        signal = gains_and_errors(group["S2"], budget)
        decoy = gains_and_errors(group["S1"], budget)
        if not (math.isfinite(signal.e) and math.isfinite(decoy.e)):
            raise InconsistentDataError(
                f"ND {nd} dB: no matched-basis detections; error rate undefined")
        vacuum = _vacuum_rates(group, budget)
        slack = max(_solve_slack(signal, decoy, vacuum,
                                 stats["S2"], stats["S1"]), 1e-9)

        def rate(qs: float, es: float, qd: float, ed: float) -> float:
            return _dtb_rate(ObservedRates(q=qs, e=es),
                             ObservedRates(q=qd, e=ed), vacuum,
                             stats["S2"], stats["S1"], q_sift, f_ec, slack)

        center = (signal.q, signal.e, decoy.q, decoy.e)
        sigmas = (signal.q_sigma, signal.e_sigma,
                  decoy.q_sigma, decoy.e_sigma)
        r0 = rate(*center)
        var = 0.0
        for i, sig in enumerate(sigmas):
            if sig == 0.0:
                continue
            lo = list(center)
            hi = list(center)
            lo[i] -= sig
            hi[i] += sig
            try:
                dr = 0.5 * (rate(*hi) - rate(*lo))
            except QkdError:
                dr = sig  # perturbation left the physical region; bound it
            var += dr * dr
        points.append(SkrPoint(protocol="dtb", loss_db=nd, skr=r0,
                               skr_sigma=math.sqrt(var)))
    return points


def effective_channel(maps: list[TomographyMap],
                      stats: dict[str, PhotonDistribution],
                      budget: AliceBudget,
                      p_dc: float | None = None) -> ChannelParams:
    """Receiver parameters implied by the solved per-photon yields.

    For each ND group the decoy solve gives (Y1, e1); inverting the
    yield model at the known extra attenuation returns the receiver
    transmission eta_bob and misalignment e_d:

        eta_hat = (Y1 - Y0) / (1 - Y0) / 10**(-nd/10)
        e_d_hat = (e1 Y1 - Y0 / 2) / (Y1 - Y0)

    Estimates are averaged across ND groups.  ``p_dc`` defaults to the
    observed vacuum gain (or the fallback constant).
    """
    etas, eds, y0s = [], [], []
    for nd, group in sorted(_group_by_nd(maps).items()):
        signal = gains_and_errors(group["S2"], budget)
        decoy = gains_and_errors(group["S1"], budget)
        vacuum = _vacuum_rates(group, budget)
        slack = max(_solve_slack(signal, decoy, vacuum,
                                 stats["S2"], stats["S1"]), 1e-9)
        sol = solve_dtb(signal.observed(), decoy.observed(), vacuum,
                        stats["S2"], stats["S1"], tol=slack)
        scale = 10.0 ** (-nd / 10.0)
        y0 = sol.y0
        eta_ch = (sol.y1 - y0) / (1.0 - y0)
        if eta_ch <= 0.0:
            raise InconsistentDataError(
                f"ND {nd} dB: solved Y1 does not exceed the dark yield")
        etas.append(eta_ch / scale)
        eds.append((sol.e1 * sol.y1 - 0.5 * y0) / (sol.y1 - y0))
        y0s.append(y0)
    if p_dc is None:
        p_dc = float(np.mean(y0s))
    return ChannelParams(loss_db=0.0, eta_bob=float(np.mean(etas)),
                         p_dc=p_dc, e_d=float(np.clip(np.mean(eds), 0.0, 0.5)))


def read_tomography_csv(csv_path: str | Path,
                        sidecar_path: str | Path | None = None) -> TomographyMap:
    """Load one tomography matrix from CSV plus its JSON sidecar.

    The CSV has a ``alice_state,bob_detector,counts`` header; missing
    cells default to zero.  The sidecar (``<csv>.json`` by default) must
    define exposure_s, intensity_label, and nd_filter_db.
    """
    csv_path = Path(csv_path)
    if sidecar_path is None:
        sidecar_path = csv_path.with_suffix(csv_path.suffix + ".json")
    meta = json.loads(Path(sidecar_path).read_text())
    counts = np.zeros((4, 4), dtype=np.int64)
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"alice_state", "bob_detector", "counts"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ConfigError(
                f"tomography CSV must have columns {sorted(expected)}")
        for row in reader:
            a, b = row["alice_state"].strip(), row["bob_detector"].strip()
            if a not in STATES or b not in STATES:
                raise ConfigError(f"unknown state/detector pair ({a}, {b})")
            counts[STATES.index(a), STATES.index(b)] += int(row["counts"])
    try:
        return TomographyMap(counts=counts,
                             exposure_s=float(meta["exposure_s"]),
                             intensity_label=str(meta["intensity_label"]),
                             nd_filter_db=float(meta["nd_filter_db"]))
    except KeyError as exc:
        raise ConfigError(f"sidecar lacks required field {exc}") from exc


def write_tomography_csv(tmap: TomographyMap, csv_path: str | Path) -> None:
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["alice_state", "bob_detector", "counts"])
        for a in STATES:
            for b in STATES:
                writer.writerow([a, b, tmap.cell(a, b)])
    sidecar = {"exposure_s": tmap.exposure_s,
               "intensity_label": tmap.intensity_label,
               "nd_filter_db": tmap.nd_filter_db}
    csv_path.with_suffix(csv_path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=1) + "\n")


def synthetic_map(rng: np.random.Generator, q: float, e: float,
                  sent: float, exposure_s: float, intensity_label: str,
                  nd_filter_db: float) -> TomographyMap:
    """Sample one tomography matrix from known gain and error rate.

    Alice cycles the four states evenly; Bob's basis matches half the
    time.  Matched-basis detections land on the wrong detector with
    probability ``e``; cross-basis detections split evenly.
    """
    counts = np.zeros((4, 4), dtype=np.int64)
    per_state = sent / 4.0
    for i, a in enumerate(STATES):
        detected = rng.binomial(int(round(per_state)), min(q, 1.0))
        right, wrong, cross = np.array([0.5 * (1 - e), 0.5 * e, 0.5])
        split = rng.multinomial(detected, [right, wrong, cross])
        counts[i, i] += split[0]
        counts[i, STATES.index(_CONJUGATE[a])] += split[1]
        others = [j for j, s in enumerate(STATES)
                  if s not in (a, _CONJUGATE[a])]
        cross_split = rng.multinomial(split[2], [0.5, 0.5])
        counts[i, others[0]] += cross_split[0]
        counts[i, others[1]] += cross_split[1]
    return TomographyMap(counts=counts, exposure_s=exposure_s,
                         intensity_label=intensity_label,
                         nd_filter_db=nd_filter_db)


def maps_from_report(report, config, budget: AliceBudget,
                     nd_filter_db: float, seed: int) -> list[TomographyMap]:
    """Arrange simulated tallies into tomography matrices.

    Takes a decoy-protocol simulation report and splits each intensity's
    (sent, detected, errors) integers into a 4x4 matrix: states cycle
    evenly, matched-basis cells receive the simulated error fraction,
    cross-basis detections split evenly.  The exposure is back-computed
    so the sent-qubit bookkeeping reproduces the simulated pulse count.
    """
    rng = np.random.default_rng(seed)
    out = []
    for label, tally in sorted(report.tallies.items()):
        if tally.sent == 0:
            continue
        counts = np.zeros((4, 4), dtype=np.int64)
        # round-robin the detections over rows to keep integers exact
        per_row = [tally.detected // 4] * 4
        for i in range(tally.detected % 4):
            per_row[i] += 1
        err_row = [tally.errors // 4] * 4
        for i in range(tally.errors % 4):
            err_row[i] += 1
        for i, a in enumerate(STATES):
            det = per_row[i]
            err = min(err_row[i], det)
            matched = int(rng.binomial(det, 0.5))
            # error flags and basis matching are independent, so the
            # wrong-detector count among matched clicks is hypergeometric
            if matched and err:
                wrong = int(rng.hypergeometric(err, det - err, matched))
            else:
                wrong = 0
            counts[i, STATES.index(_CONJUGATE[a])] += wrong
            counts[i, i] += matched - wrong
            cross_split = rng.multinomial(det - matched, [0.5, 0.5])
            others = [j for j, s in enumerate(STATES)
                      if s not in (a, _CONJUGATE[a])]
            counts[i, others[0]] += cross_split[0]
            counts[i, others[1]] += cross_split[1]
        exposure = tally.sent / budget.sent_per_second
        out.append(TomographyMap(counts=counts, exposure_s=exposure,
                                 intensity_label=label.upper(),
                                 nd_filter_db=nd_filter_db))
    return out
