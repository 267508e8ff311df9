"""Plot-ready quantities built on the key-rate engines.

Everything here reduces to one primitive: the maximal channel loss (MCL),
the largest attenuation at which a protocol's key rate stays positive.
Protocol merit is then expressed as the relative gain

    gamma_dB = MCL_protocol - MCL_baseline

which equals 10 log10 of the transmittance ratio, so a "ratio" phrasing
and a dB difference are the same statement.  On top sit the sweeps:
superiority maps over (p1, p2), heralding thresholds, gamma-versus-
efficiency curves, and the optimal beam-splitter transmission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .channel_model import ChannelParams
from .errors import FitError, NoKeyError
from .photon_source import PhotonDistribution, apply_collection
from .protocols import (DEFAULT_F_EC, DEFAULT_Q_SIFT, skr_dtb, skr_hp,
                        skr_wcs_infinite_decoy, skr_wcs_tagging_bound)

# Bisection width for maximal-loss searches, in dB.
MCL_TOL_DB = 0.01

# Expansion limit: no modeled configuration here survives 200 dB.
_LOSS_CAP_DB = 200.0

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

RateFn = Callable[[float], float]


@dataclass(frozen=True, slots=True)
class SkrCurve:
    """A sampled rate-versus-loss curve plus its maximal channel loss."""

    points: tuple[tuple[float, float], ...]
    mcl_db: float


@dataclass(frozen=True, slots=True)
class GammaMap:
    """Relative-gain samples over the (p1, p2) simplex.

    ``gamma_db[i, j]`` holds gamma at ``p1[i], p2[j]``; entries are NaN
    where the point is unphysical (p1 + p2 > 1) or produces no key.
    """

    p1: np.ndarray
    p2: np.ndarray
    gamma_db: np.ndarray
    wcs_mcl_db: float

    def zero_contour(self) -> tuple[np.ndarray, np.ndarray]:
        """Interpolated p1 of the gamma = 0 level, per p2 column.

        gamma is monotone in p1 at fixed p2, so the level crosses each
        column at most once; linear interpolation between the bracketing
        grid rows gives the crossing.  Columns entirely below or above
        zero are omitted.
        """
        p2_out, p1_out = [], []
        for j, p2v in enumerate(self.p2):
            col = self.gamma_db[:, j]
            ok = np.isfinite(col)
            if ok.sum() < 2:
                continue
            idx = np.flatnonzero(ok)
            vals = col[idx]
            sign_change = np.flatnonzero((vals[:-1] < 0.0) & (vals[1:] >= 0.0))
            if sign_change.size == 0:
                continue
            k = sign_change[0]
            i0, i1 = idx[k], idx[k + 1]
            g0, g1 = col[i0], col[i1]
            frac = -g0 / (g1 - g0)
            p1_out.append(self.p1[i0] + frac * (self.p1[i1] - self.p1[i0]))
            p2_out.append(p2v)
        return np.asarray(p2_out), np.asarray(p1_out)

    def fit_zero_contour(self, p2_max: float = 0.3) -> tuple[float, float]:
        """Least-squares (slope, intercept) of the contour for p2 <= p2_max."""
        p2c, p1c = self.zero_contour()
        keep = p2c <= p2_max
        if keep.sum() < 2:
            raise FitError("zero contour has fewer than two points below p2_max")
        slope, intercept = np.polyfit(p2c[keep], p1c[keep], 1)
        return float(slope), float(intercept)


def mcl(skr_fn: RateFn, tol_db: float = MCL_TOL_DB) -> float:
    """Maximal channel loss of a rate function, by bisection.

    ``skr_fn`` maps loss in dB to a key rate.  The rate must be positive
    at 0 dB (otherwise there is no key to lose) and non-increasing in
    loss; the returned value m satisfies skr_fn(m - tol) > 0 >= skr_fn(m + tol).
    """
    if skr_fn(0.0) <= 0.0:
        raise NoKeyError("key rate is non-positive at zero channel loss")
    lo, hi = 0.0, 25.0
    while skr_fn(hi) > 0.0:
        lo, hi = hi, hi + 25.0
        if hi > _LOSS_CAP_DB:
            raise FitError(f"key rate still positive at {_LOSS_CAP_DB} dB")
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if skr_fn(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gamma(mcl_protocol_db: float, mcl_wcs_db: float) -> float:
    """Relative gain in dB; positive means the protocol tolerates more loss."""
    return mcl_protocol_db - mcl_wcs_db


def skr_curve(skr_fn: RateFn, losses: Iterable[float]) -> SkrCurve:
    """Sample a rate function on a loss grid and attach its MCL."""
    grid = [float(x) for x in losses]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("losses must be strictly increasing")
    points = tuple((loss, skr_fn(loss)) for loss in grid)
    return SkrCurve(points=points, mcl_db=mcl(skr_fn))


def dtb_rate_fn(signal: PhotonDistribution, channel: ChannelParams,
                q_sift: float = DEFAULT_Q_SIFT,
                f_ec: float = DEFAULT_F_EC) -> RateFn:
    """Loss -> decoy-state rate for fixed signal statistics."""
    def fn(loss_db: float) -> float:
        return skr_dtb(signal, channel.with_loss(loss_db),
                       q_sift=q_sift, f_ec=f_ec).rate
    return fn


def hp_rate_fn(source: PhotonDistribution, channel: ChannelParams,
               t: float = 0.5, eta_d: float = 0.9,
               p_dc_alice: float | None = None,
               q_sift: float = DEFAULT_Q_SIFT, f_ec: float = 1.0) -> RateFn:
    """Loss -> heralded-purification rate for fixed source statistics."""
    def fn(loss_db: float) -> float:
        return skr_hp(source, channel.with_loss(loss_db), t=t, eta_d=eta_d,
                      p_dc_alice=p_dc_alice, q_sift=q_sift, f_ec=f_ec).rate
    return fn


def wcs_rate_fn(channel: ChannelParams, q_sift: float = DEFAULT_Q_SIFT,
                f_ec: float = DEFAULT_F_EC) -> RateFn:
    """Loss -> decoy-baseline WCS rate, re-optimizing mu at every loss."""
    def fn(loss_db: float) -> float:
        return skr_wcs_infinite_decoy(channel.with_loss(loss_db),
                                      q_sift=q_sift, f_ec=f_ec).rate
    return fn


def wcs_tagged_rate_fn(channel: ChannelParams, q_sift: float = DEFAULT_Q_SIFT,
                       f_ec: float = 1.0) -> RateFn:
    """Loss -> tagging-bound WCS rate (the heralded-comparison reference)."""
    def fn(loss_db: float) -> float:
        return skr_wcs_tagging_bound(channel.with_loss(loss_db),
                                     q_sift=q_sift, f_ec=f_ec).rate
    return fn


def wcs_mcl(channel: ChannelParams, q_sift: float = DEFAULT_Q_SIFT,
            f_ec: float = DEFAULT_F_EC) -> float:
    """MCL of the optimized weak-coherent decoy baseline."""
    return mcl(wcs_rate_fn(channel, q_sift=q_sift, f_ec=f_ec))


def _mcl_or_nan(skr_fn: RateFn) -> float:
    try:
        return mcl(skr_fn)
    except NoKeyError:
        return math.nan


def gamma_map_dtb(channel: ChannelParams, eta_c: float = 1.0, n: int = 200,
                  q_sift: float = DEFAULT_Q_SIFT,
                  f_ec: float = DEFAULT_F_EC) -> GammaMap:
    """Relative gain of the decoy-state protocol over the (p1, p2) simplex.

    The n x n grid spans [0, 1] on both axes; points with p1 + p2 > 1 and
    points yielding no key at zero loss are NaN.  The baseline MCL is
    computed once for the shared channel.
    """
    baseline = wcs_mcl(channel, q_sift=q_sift)
    p1_axis = np.linspace(0.0, 1.0, n)
    p2_axis = np.linspace(0.0, 1.0, n)
    out = np.full((n, n), np.nan)
    for i, p1 in enumerate(p1_axis):
        for j, p2 in enumerate(p2_axis):
            if p1 + p2 > 1.0 + 1e-12:
                continue
            d = PhotonDistribution(p0=max(1.0 - p1 - p2, 0.0), p1=p1, p2=p2)
            if eta_c < 1.0:
                d = apply_collection(d, eta_c)
            m = _mcl_or_nan(dtb_rate_fn(d, channel, q_sift=q_sift, f_ec=f_ec))
            if not math.isnan(m):
                out[i, j] = m - baseline
    return GammaMap(p1=p1_axis, p2=p2_axis, gamma_db=out, wcs_mcl_db=baseline)


def hp_threshold(eta_d: float, channel: ChannelParams, t: float = 0.5,
                 p_dc_alice: float | None = None, f_ec: float = 1.0,
                 tol: float = 1e-4) -> float:
    """Minimal two-photon probability where purification beats the laser.

    The reference is the weak-coherent source evaluated under the same
    tagging-style bound and the same ``f_ec`` as the purified rate
    (``skr_wcs_tagging_bound``): comparing a purification bound against
    the decoy-state baseline would mix two different security analyses
    and shift the crossing by the gap between the two laser curves.

    One-photon pulses enter the heralded statistics only through
    dark-count coincidences, so the threshold is insensitive to p1 and
    the scan uses a {vacuum, two-photon} source.  Heralded MCL grows with
    p2, hence a single sign change.
    """
    if not 0.0 < eta_d <= 1.0:
        raise ValueError("eta_d must lie in (0, 1]")
    reference = mcl(wcs_tagged_rate_fn(channel, f_ec=f_ec))

    def excess(p2: float) -> float:
        d = PhotonDistribution(p0=1.0 - p2, p1=0.0, p2=p2)
        m = _mcl_or_nan(hp_rate_fn(d, channel, t=t, eta_d=eta_d,
                                   p_dc_alice=p_dc_alice, f_ec=f_ec))
        return (m - reference) if not math.isnan(m) else -math.inf

    lo, hi = None, None
    for p2 in np.linspace(0.02, 1.0, 50):
        if excess(p2) >= 0.0:
            hi = p2
            break
        lo = p2
    if hi is None:
        raise NoKeyError("no two-photon probability reaches the reference loss")
    if lo is None:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def optimal_bs_transmission(p2: float, p_dc: float, eta_d: float,
                            channel: ChannelParams, p1: float = 0.0,
                            tol: float = 1e-4) -> float:
    """Beam-splitter transmission maximizing the heralded MCL.

    ``p_dc`` is the herald detector's dark-count probability.  When it is
    exactly zero the heralded one-photon weight is 2 p2 eta_d t(1-t) for
    any p1, the two-photon weight vanishes, and the rate is a monotone
    function of that single product, so the maximum sits at t = 1/2 by
    symmetry and is returned without searching.  Otherwise the MCL is
    maximized by golden-section over t in (0, 1) to ``tol``.

    With ``p1 > 0`` and a noisy herald detector the optimum moves above
    1/2 at small p2 and relaxes back as p2 grows: false heralds promote
    one-photon pulses into the key through the t p1 p_dc term, which
    rewards transmission until genuine two-photon coincidences dominate.
    """
    if not 0.0 < p2 <= 1.0:
        raise ValueError("p2 must lie in (0, 1]")
    if p1 < 0.0 or p1 + p2 > 1.0:
        raise ValueError("need p1 >= 0 and p1 + p2 <= 1")
    if p_dc == 0.0:
        return 0.5
    d = PhotonDistribution(p0=1.0 - p1 - p2, p1=p1, p2=p2)

    def objective(t: float) -> float:
        # the landscape is shallow near the top, so the inner loss search
        # runs much tighter than the reported MCL resolution
        try:
            m = mcl(hp_rate_fn(d, channel, t=t, eta_d=eta_d, p_dc_alice=p_dc),
                    tol_db=1e-5)
        except NoKeyError:
            return -1.0
        return m

    lo, hi = 1e-3, 1.0 - 1e-3
    c = hi - _GOLDEN * (hi - lo)
    dpt = lo + _GOLDEN * (hi - lo)
    fc, fd = objective(c), objective(dpt)
    while hi - lo > tol:
        if fc > fd:
            hi, dpt, fd = dpt, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = objective(c)
        else:
            lo, c, fc = c, dpt, fd
            dpt = lo + _GOLDEN * (hi - lo)
            fd = objective(dpt)
    return 0.5 * (lo + hi)


def gamma_vs_efficiency(protocol: str, axis: str, values: Sequence[float],
                        source: PhotonDistribution, channel: ChannelParams,
                        eta_c: float = 1.0, eta_d: float = 0.9, t: float = 0.5,
                        p_dc_alice: float | None = None,
                        q_sift: float = DEFAULT_Q_SIFT,
                        f_ec: float | None = None) -> list[tuple[float, float]]:
    """Relative gain along a collection- or detector-efficiency sweep.

    ``protocol`` is "dtb" or "hp"; ``axis`` is "eta_c" (collection, applied
    to the source statistics before the transmitter) or "eta_d" (herald
    detector, purification only).  Points where the protocol yields no key
    are reported as NaN rather than dropped, so curves keep the grid shape.

    For sources with large p2 the gain need not be monotone in eta_c under
    the decoy protocol: losing one photon of a pair converts a two-photon
    pulse into a useful single, so moderate collection loss can raise the
    MCL before brightness loss dominates.
    """
    if protocol not in ("dtb", "hp"):
        raise ValueError("protocol must be 'dtb' or 'hp'")
    if axis not in ("eta_c", "eta_d"):
        raise ValueError("axis must be 'eta_c' or 'eta_d'")
    if protocol == "dtb" and axis == "eta_d":
        raise ValueError("the decoy protocol has no herald detector")
    if f_ec is None:
        f_ec = DEFAULT_F_EC if protocol == "dtb" else 1.0
    baseline = wcs_mcl(channel, q_sift=q_sift)
    out: list[tuple[float, float]] = []
    for v in values:
        v = float(v)
        # float grids routinely overshoot the unit interval by one ulp
        if 1.0 < v < 1.0 + 1e-9:
            v = 1.0
        elif -1e-9 < v < 0.0:
            v = 0.0
        if axis == "eta_c":
            d = apply_collection(source, v)
            ed = eta_d
        else:
            d = apply_collection(source, eta_c) if eta_c < 1.0 else source
            ed = v
        if protocol == "dtb":
            fn = dtb_rate_fn(d, channel, q_sift=q_sift, f_ec=f_ec)
        else:
            fn = hp_rate_fn(d, channel, t=t, eta_d=ed,
                            p_dc_alice=p_dc_alice, q_sift=q_sift, f_ec=f_ec)
        m = _mcl_or_nan(fn)
        out.append((float(v), m - baseline if not math.isnan(m) else math.nan))
    return out
