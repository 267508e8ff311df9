"""Key-rate bounds: entropy, decoy inversion, the three protocol rates."""

import json
import math
from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import entropy as shannon_entropy

from spsqkd.channel_model import ChannelParams, ObservedRates, gain_and_qber, yields
from spsqkd.errors import DegenerateDecoyError, InconsistentDataError
from spsqkd.photon_source import PhotonDistribution
from spsqkd.protocols import (
    DecoySolution,
    SkrResult,
    binary_entropy,
    skr_dtb,
    skr_dtb_from_rates,
    skr_hp,
    skr_wcs_infinite_decoy,
    skr_wcs_tagging_bound,
    solve_dtb,
)


def h2(x: float) -> float:
    """Independent entropy oracle via scipy."""
    return float(shannon_entropy([x, 1.0 - x], base=2))


class TestBinaryEntropy:
    def test_endpoints_and_midpoint(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0
        assert binary_entropy(0.5) == 1.0

    @pytest.mark.parametrize("x", [0.01, 0.033, 0.11, 0.2, 0.48, 0.73])
    def test_matches_the_scipy_oracle(self, x):
        assert binary_entropy(x) == pytest.approx(h2(x), rel=1e-12)

    def test_eleven_percent_reference_value(self):
        # 40-digit decimal evaluation: 0.4999159581645279956...; an 11%
        # error rate costs almost exactly half a bit per sifted bit
        assert binary_entropy(0.11) == pytest.approx(0.499915958164528,
                                                     rel=1e-13)

    def test_symmetry(self):
        for x in (0.1, 0.25, 0.4):
            assert binary_entropy(x) == pytest.approx(binary_entropy(1 - x),
                                                      rel=1e-14)

    def test_domain_enforced(self):
        with pytest.raises(ValueError):
            binary_entropy(-0.01)
        with pytest.raises(ValueError):
            binary_entropy(1.01)


class TestSolveDtb:
    def make_observations(self, channel, signal_stats, decoy_stats):
        signal = gain_and_qber(signal_stats, channel)
        decoy = gain_and_qber(decoy_stats, channel)
        vacuum = ObservedRates(q=channel.p_dc, e=0.5)
        return signal, decoy, vacuum

    def test_round_trip_recovers_the_channel_yields(self, channel,
                                                    bare_signal, bare_decoy):
        ch = channel.with_loss(10.0)
        signal, decoy, vacuum = self.make_observations(ch, bare_signal,
                                                       bare_decoy)
        sol = solve_dtb(signal, decoy, vacuum, bare_signal, bare_decoy)
        ys = yields(ch)
        assert sol.y1 == pytest.approx(ys.y[1], rel=1e-12)
        assert sol.y2 == pytest.approx(ys.y[2], rel=1e-12)
        assert sol.e1 == pytest.approx(ys.e[1], rel=1e-12)
        assert sol.e2 == pytest.approx(ys.e[2], rel=1e-12)

    def test_vacuum_observation_passes_straight_through(self, channel,
                                                        bare_signal,
                                                        bare_decoy):
        vacuum = ObservedRates(q=3.3e-6, e=0.41)
        signal, decoy, _ = self.make_observations(channel.with_loss(5.0),
                                                  bare_signal, bare_decoy)
        sol = solve_dtb(signal, decoy, vacuum, bare_signal, bare_decoy)
        assert sol.y0 == 3.3e-6
        assert sol.e0 == 0.41

    def test_identical_intensities_cannot_be_separated(self, channel, sps1):
        signal, _, vacuum = self.make_observations(channel, sps1, sps1)
        with pytest.raises(DegenerateDecoyError):
            solve_dtb(signal, signal, vacuum, sps1, sps1)

    def test_proportional_statistics_are_degenerate_too(self, channel):
        a = PhotonDistribution(0.7, 0.2, 0.1)
        b = PhotonDistribution(0.1, 0.6, 0.3)
        sa, sb, vacuum = self.make_observations(channel.with_loss(3.0), a, b)
        with pytest.raises(DegenerateDecoyError):
            solve_dtb(sa, sb, vacuum, a, b)

    def test_unphysical_observations_are_flagged(self):
        stats_s = PhotonDistribution(0.5, 0.3, 0.2)
        stats_d = PhotonDistribution(0.8, 0.15, 0.05)
        vacuum = ObservedRates(q=0.0, e=0.5)
        with pytest.raises(InconsistentDataError):
            solve_dtb(ObservedRates(q=1.0, e=0.0), ObservedRates(q=0.0, e=0.0),
                      vacuum, stats_s, stats_d)

    def test_tolerance_widens_the_acceptance_band(self):
        stats_s = PhotonDistribution(0.3, 0.5, 0.2)
        stats_d = PhotonDistribution(0.6, 0.3, 0.1)
        vacuum = ObservedRates(q=0.0, e=0.5)
        # exact data would give y1 = 0.5, y2 = 0; the decoy gain is then
        # nudged so the solved y2 lands slightly negative
        signal = ObservedRates(q=0.25, e=0.0)
        decoy = ObservedRates(q=0.15 + 1e-6, e=0.0)
        with pytest.raises(InconsistentDataError):
            solve_dtb(signal, decoy, vacuum, stats_s, stats_d)
        sol = solve_dtb(signal, decoy, vacuum, stats_s, stats_d, tol=1e-3)
        assert sol.y2 == 0.0
        assert sol.e2 == 0.5
        assert sol.y1 == pytest.approx(0.5, abs=1e-4)

    def test_three_photon_statistics_rejected(self, channel, bare_signal):
        d3 = PhotonDistribution(0.69, 0.2, 0.1, 0.01)
        signal, decoy, vacuum = self.make_observations(channel, bare_signal,
                                                       bare_signal)
        with pytest.raises(ValueError):
            solve_dtb(signal, decoy, vacuum, d3, bare_signal)

    @given(st.floats(min_value=0.0, max_value=45.0),
           st.floats(min_value=0.01, max_value=1.0),
           st.floats(min_value=0.0, max_value=1e-3),
           st.floats(min_value=0.0, max_value=0.2))
    @settings(max_examples=150)
    def test_inversion_of_the_forward_model_is_exact(self, loss, eta_bob,
                                                     p_dc, e_d):
        ch = ChannelParams(loss_db=loss, eta_bob=eta_bob, p_dc=p_dc, e_d=e_d)
        sig_stats = PhotonDistribution(0.675, 0.296, 0.029)
        dec_stats = PhotonDistribution(0.9023, 0.096, 0.0017)
        signal = gain_and_qber(sig_stats, ch) if (p_dc or eta_bob) else None
        decoy = gain_and_qber(dec_stats, ch)
        vacuum = ObservedRates(q=p_dc, e=0.5)
        sol = solve_dtb(signal, decoy, vacuum, sig_stats, dec_stats)
        ys = yields(ch)
        assert sol.y1 == pytest.approx(ys.y[1], rel=1e-9, abs=1e-15)
        assert sol.y2 == pytest.approx(ys.y[2], rel=1e-9, abs=1e-15)
        if ys.y[1] > 1e-12:
            assert sol.e1 == pytest.approx(ys.e[1], rel=1e-6, abs=1e-9)


class TestSkrDtb:
    def test_rate_formula_exposed_term_by_term(self):
        signal = ObservedRates(q=0.1, e=0.01)
        result = skr_dtb_from_rates(signal, y1=0.04, e1=0.02, p1_signal=0.5,
                                    q_sift=0.5, f_ec=1.22)
        expected = 0.5 * (-0.1 * 1.22 * h2(0.01)
                          + 0.04 * 0.5 * (1.0 - h2(0.02)))
        assert expected > 0
        assert result.raw == pytest.approx(expected, rel=1e-12)
        assert result.rate == result.raw

    def test_costlier_error_correction_lowers_the_rate(self):
        signal = ObservedRates(q=0.1, e=0.05)
        loose = skr_dtb_from_rates(signal, 0.04, 0.02, 0.5, f_ec=1.0)
        tight = skr_dtb_from_rates(signal, 0.04, 0.02, 0.5, f_ec=1.22)
        drop = 0.5 * 0.1 * 0.22 * h2(0.05)
        assert loose.raw - tight.raw == pytest.approx(drop, rel=1e-12)

    def test_ideal_source_on_an_ideal_link_keeps_every_sifted_bit(self):
        ch = ChannelParams(loss_db=0.0, eta_bob=1.0, p_dc=0.0, e_d=0.0)
        result = skr_dtb(PhotonDistribution(0.0, 1.0, 0.0), ch)
        assert result.rate == 0.5

    def test_half_error_rate_yields_nothing(self):
        signal = ObservedRates(q=0.1, e=0.05)
        result = skr_dtb_from_rates(signal, y1=0.04, e1=0.5, p1_signal=0.5)
        assert result.rate == 0.0
        assert result.raw < 0.0

    def test_negative_bound_is_clipped_but_reported(self, channel, sps2):
        result = skr_dtb(sps2, channel.with_loss(40.0))
        assert result.rate == 0.0
        assert result.raw < 0.0

    def test_monotone_in_loss(self, channel, sps1):
        rates = [skr_dtb(sps1, channel.with_loss(l)).rate
                 for l in range(0, 42, 2)]
        assert all(b <= a for a, b in zip(rates, rates[1:]))


class TestSkrHp:
    def test_purification_gates_out_all_key_without_two_photon_weight(
            self, channel):
        d = PhotonDistribution(0.5, 0.5, 0.0)
        result = skr_hp(d, channel, t=0.5, eta_d=0.9, p_dc_alice=0.0)
        assert result.rate == 0.0
        assert result.raw <= 0.0

    def test_dark_free_herald_makes_every_kept_pulse_single(self, sps2):
        # p_dc_alice = 0 removes the two-photon leak entirely: omega = 1
        ch = ChannelParams(loss_db=10.0, eta_bob=0.045, p_dc=2e-7, e_d=0.033)
        result = skr_hp(sps2, ch, t=0.5, eta_d=0.9, p_dc_alice=0.0)
        p1t = 2.0 * sps2.p2 * 0.25 * 0.9
        ys = yields(ch, n_max=1)
        q_s = (1.0 - p1t) * ys.y[0] + p1t * ys.y[1]
        e_s = ((1.0 - p1t) * ys.y[0] * 0.5 + p1t * ys.y[1] * ys.e[1]) / q_s
        omega = p1t * ys.y[1] / q_s
        expected = 0.5 * q_s * (-h2(e_s) + omega * (1.0 - h2(e_s / omega)))
        assert result.raw == pytest.approx(expected, rel=1e-10)

    def test_alice_dark_counts_default_to_the_channel_value(self, channel,
                                                            sps2):
        explicit = skr_hp(sps2, channel, p_dc_alice=channel.p_dc)
        defaulted = skr_hp(sps2, channel)
        assert defaulted.raw == explicit.raw

    def test_monotone_in_loss(self, channel, sps2):
        rates = [skr_hp(sps2, channel.with_loss(l)).rate
                 for l in range(0, 42, 2)]
        assert all(b <= a for a, b in zip(rates, rates[1:]))

    def test_error_correction_factor_is_exposed(self, channel, sps2):
        ideal = skr_hp(sps2, channel, f_ec=1.0)
        costly = skr_hp(sps2, channel, f_ec=1.22)
        assert costly.raw < ideal.raw


class TestSkrWcs:
    def test_optimal_intensity_on_a_noiseless_link_is_one(self):
        ch = ChannelParams(loss_db=0.0, eta_bob=1.0, p_dc=0.0, e_d=0.0)
        result = skr_wcs_infinite_decoy(ch)
        assert result.mu == pytest.approx(1.0, abs=1e-4)
        assert result.rate == pytest.approx(0.5 * math.exp(-1.0), rel=1e-8)

    def test_optimizer_dominates_any_fixed_intensity(self, channel):
        ch = channel.with_loss(15.0)
        best = skr_wcs_infinite_decoy(ch)
        for mu in (0.1, 0.3, 0.5, 0.8, 1.2, 2.0):
            assert best.rate >= skr_wcs_infinite_decoy(ch, mu=mu).rate - 1e-15

    def test_intensity_domain_enforced(self, channel):
        for mu in (0.0, -0.5, 2.5):
            with pytest.raises(ValueError):
                skr_wcs_infinite_decoy(channel, mu=mu)

    def test_tagging_bound_never_beats_the_decoy_analysis(self, channel):
        for loss in (0.0, 10.0, 20.0, 30.0):
            ch = channel.with_loss(loss)
            tagged = skr_wcs_tagging_bound(ch, f_ec=1.0).rate
            decoyed = skr_wcs_infinite_decoy(ch, f_ec=1.0).rate
            assert tagged <= decoyed + 1e-15

    def test_monotone_in_loss(self, channel):
        rates = [skr_wcs_infinite_decoy(channel.with_loss(l)).rate
                 for l in range(0, 42, 2)]
        assert all(b <= a for a, b in zip(rates, rates[1:]))

    def test_result_carries_the_intensity_used(self, channel):
        assert skr_wcs_infinite_decoy(channel, mu=0.37).mu == 0.37
        assert skr_wcs_tagging_bound(channel).mu is not None


class TestCrossProtocol:
    def test_an_ideal_source_dominates_both_real_sources(self, channel,
                                                         sps1, sps2):
        perfect = PhotonDistribution(0.0, 1.0, 0.0)
        for loss in (0.0, 10.0, 20.0, 30.0):
            ch = channel.with_loss(loss)
            best = skr_dtb(perfect, ch).rate
            assert best >= skr_dtb(sps1, ch).rate
            assert best >= skr_dtb(sps2, ch).rate

    def test_golden_rate_records(self, channel):
        path = resources.files("spsqkd").joinpath("fixtures/golden/rates.json")
        records = json.loads(path.read_text())["records"]
        src_path = resources.files("spsqkd").joinpath("fixtures/sources.json")
        sources = {name: PhotonDistribution.from_dict(row)
                   for name, row in json.loads(src_path.read_text()).items()}
        assert len(records) == 20
        for rec in records:
            ch = channel.with_loss(rec["loss_db"])
            params = rec["params"]
            proto = rec["protocol"]
            if proto in ("dtb", "perfect-sps"):
                got = skr_dtb(sources[params["source"]], ch,
                              q_sift=params["q_sift"], f_ec=params["f_ec"])
            elif proto == "hp":
                got = skr_hp(sources[params["source"]], ch, t=params["t"],
                             eta_d=params["eta_d"], q_sift=params["q_sift"],
                             f_ec=params["f_ec"])
            elif proto == "wcs":
                got = skr_wcs_infinite_decoy(ch, q_sift=params["q_sift"],
                                             f_ec=params["f_ec"])
            elif proto == "wcs-tagged":
                got = skr_wcs_tagging_bound(ch, q_sift=params["q_sift"],
                                            f_ec=params["f_ec"])
            else:
                pytest.fail(f"unknown protocol {proto}")
            assert got.rate == rec["skr"], f"{proto} at {rec['loss_db']} dB"

    def test_result_objects_are_immutable(self):
        result = SkrResult(rate=0.1, raw=0.1)
        with pytest.raises(AttributeError):
            result.rate = 0.2
        sol = DecoySolution(y0=0.0, e0=0.5, y1=0.1, e1=0.0, y2=0.2, e2=0.0)
        with pytest.raises(AttributeError):
            sol.y1 = 0.3
