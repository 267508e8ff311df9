"""Tomography-count ingestion: rates, decoy extraction, file formats."""

import json
import math
import warnings

import numpy as np
import pytest

from spsqkd.channel_model import ChannelParams
from spsqkd.errors import ConfigError
from spsqkd.ingest import (
    FALLBACK_E0,
    FALLBACK_Y0,
    AliceBudget,
    TomographyMap,
    effective_channel,
    gains_and_errors,
    maps_from_report,
    read_tomography_csv,
    skr_from_experiment,
    synthetic_map,
    write_tomography_csv,
)
from spsqkd.montecarlo import run_dtb
from spsqkd.photon_source import PhotonDistribution
from spsqkd.protocols import skr_dtb

VACUUM = PhotonDistribution(1.0, 0.0, 0.0)


@pytest.fixture(scope="session")
def budget() -> AliceBudget:
    return AliceBudget(rep_rate_n=2e6, eta_a=0.195, eta_c_na=0.1418)


def square_map(counts: np.ndarray, exposure_s: float = 1.0,
               label: str = "S2", nd: float = 0.0) -> TomographyMap:
    return TomographyMap(counts=counts, exposure_s=exposure_s,
                         intensity_label=label, nd_filter_db=nd)


class TestAliceBudget:
    def test_sent_rate_matches_the_transmitter_bookkeeping(self, budget):
        assert budget.sent_per_second == pytest.approx(55302.0, rel=1e-12)
        assert budget.sent(2.0) == pytest.approx(110604.0, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ConfigError):
            AliceBudget(rep_rate_n=0.0, eta_a=0.195, eta_c_na=0.1418)
        with pytest.raises(ConfigError):
            AliceBudget(rep_rate_n=2e6, eta_a=1.5, eta_c_na=0.1418)


class TestTomographyMap:
    def test_cell_lookup(self):
        counts = np.arange(16).reshape(4, 4)
        tmap = square_map(counts)
        assert tmap.cell("H", "H") == 0
        assert tmap.cell("V", "H") == 4
        assert tmap.cell("A", "A") == 15

    def test_validation(self):
        with pytest.raises(ConfigError):
            square_map(np.zeros((3, 4), dtype=int))
        with pytest.raises(ConfigError):
            square_map(np.full((4, 4), -1))
        with pytest.raises(ConfigError):
            square_map(np.zeros((4, 4), dtype=int), exposure_s=0.0)


class TestGainsAndErrors:
    def test_hand_worked_matrix(self, budget):
        counts = np.zeros((4, 4), dtype=np.int64)
        counts[0, 0] = 50   # H right
        counts[0, 1] = 10   # H wrong (conjugate)
        counts[1, 2] = 20   # V cross basis
        counts[2, 2] = 35   # D right
        counts[2, 3] = 5    # D wrong
        rates = gains_and_errors(square_map(counts, exposure_s=2.0), budget)
        sent = 2.0 * 55302.0
        assert rates.detected == 120
        assert rates.q == pytest.approx(120 / sent, rel=1e-12)
        assert rates.q_sigma == pytest.approx(math.sqrt(120) / sent, rel=1e-12)
        assert rates.matched == 100
        assert rates.e == pytest.approx(0.15, rel=1e-12)
        assert rates.e_sigma == pytest.approx(
            math.sqrt(0.15 * 0.85 / 100), rel=1e-12)

    def test_error_free_matrix(self, budget):
        counts = np.diag([100, 100, 100, 100])
        rates = gains_and_errors(square_map(counts), budget)
        assert rates.e == 0.0
        assert rates.e_sigma == pytest.approx(1.0 / 400)

    def test_cross_basis_detections_never_count_as_errors(self, budget):
        counts = np.zeros((4, 4), dtype=np.int64)
        counts[0, 2] = 500  # H -> D
        counts[0, 3] = 500  # H -> A
        counts[2, 0] = 500  # D -> H
        rates = gains_and_errors(square_map(counts), budget)
        assert rates.detected == 1500
        assert rates.matched == 0
        assert math.isnan(rates.e)
        assert rates.observed().e == 0.5

    def test_scaling_counts_and_exposure_together_changes_only_sigmas(
            self, budget):
        rng = np.random.default_rng(0)
        counts = rng.integers(10, 500, size=(4, 4))
        small = gains_and_errors(square_map(counts, exposure_s=1.0), budget)
        big = gains_and_errors(square_map(counts * 4, exposure_s=4.0), budget)
        assert big.q == pytest.approx(small.q, rel=1e-12)
        assert big.e == pytest.approx(small.e, rel=1e-12)
        assert big.q_sigma == pytest.approx(small.q_sigma / 2.0, rel=1e-12)
        assert big.e_sigma == pytest.approx(small.e_sigma / 2.0, rel=1e-9)

    def test_empty_matrix_keeps_a_finite_gain_scale(self, budget):
        rates = gains_and_errors(square_map(np.zeros((4, 4), dtype=int)),
                                 budget)
        assert rates.q == 0.0
        assert rates.q_sigma == pytest.approx(1.0 / 55302.0)
        assert math.isnan(rates.e)

    def test_synthetic_matrix_recovers_its_generator(self, budget):
        rng = np.random.default_rng(1234)
        q_true, e_true, sent = 2e-3, 0.04, 4_000_000
        tmap = synthetic_map(rng, q_true, e_true, sent,
                             exposure_s=sent / 55302.0,
                             intensity_label="S2", nd_filter_db=0.0)
        rates = gains_and_errors(tmap, budget)
        assert abs(rates.q - q_true) < 3.0 * math.sqrt(q_true / sent)
        assert abs(rates.e - e_true) < 3.0 * math.sqrt(
            e_true * (1 - e_true) / rates.matched)


class TestFileFormats:
    def test_round_trip(self, tmp_path, budget):
        rng = np.random.default_rng(7)
        tmap = synthetic_map(rng, 1e-3, 0.03, 1_000_000, 18.08, "S1", 2.0)
        path = tmp_path / "s1.csv"
        write_tomography_csv(tmap, path)
        back = read_tomography_csv(path)
        assert np.array_equal(back.counts, tmap.counts)
        assert back.exposure_s == tmap.exposure_s
        assert back.intensity_label == "S1"
        assert back.nd_filter_db == 2.0

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("alice,bob,n\nH,H,5\n")
        path.with_suffix(".csv.json").write_text(json.dumps(
            {"exposure_s": 1.0, "intensity_label": "S1", "nd_filter_db": 0.0}))
        with pytest.raises(ConfigError):
            read_tomography_csv(path)

    def test_unknown_state_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("alice_state,bob_detector,counts\nH,X,5\n")
        path.with_suffix(".csv.json").write_text(json.dumps(
            {"exposure_s": 1.0, "intensity_label": "S1", "nd_filter_db": 0.0}))
        with pytest.raises(ConfigError):
            read_tomography_csv(path)

    def test_incomplete_sidecar_rejected(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("alice_state,bob_detector,counts\nH,H,5\n")
        path.with_suffix(".csv.json").write_text(json.dumps(
            {"exposure_s": 1.0}))
        with pytest.raises(ConfigError):
            read_tomography_csv(path)

    def test_duplicate_rows_accumulate(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text(
            "alice_state,bob_detector,counts\nH,H,5\nH,H,7\n")
        path.with_suffix(".csv.json").write_text(json.dumps(
            {"exposure_s": 1.0, "intensity_label": "S2", "nd_filter_db": 0.0}))
        assert read_tomography_csv(path).cell("H", "H") == 12


@pytest.fixture(scope="module")
def pipeline(channel, bare_signal, bare_decoy, budget):
    """Simulated 6M-pulse runs at two ND settings, arranged as maps."""
    from spsqkd.montecarlo import SimConfig

    stats = {"S0": VACUUM, "S1": bare_decoy, "S2": bare_signal}
    maps = []
    for nd, seed in ((1.0, 100), (2.0, 101)):
        cfg = SimConfig(
            protocol="dtb", n_pulses=6_000_000, seed=seed,
            channel=channel.with_loss(nd),
            intensities={"s0": VACUUM, "s1": bare_decoy, "s2": bare_signal},
            intensity_weights={"s0": 1 / 3, "s1": 1 / 3, "s2": 1 / 3})
        report = run_dtb(cfg)
        maps.extend(maps_from_report(report, cfg, budget, nd, seed=seed))
    return maps, stats, {"reports_total": 12_000_000}


class TestExperimentExtraction:
    def test_map_totals_reproduce_the_tallies(self, channel, bare_signal,
                                              bare_decoy, budget):
        from spsqkd.montecarlo import SimConfig

        cfg = SimConfig(
            protocol="dtb", n_pulses=500_000, seed=55, channel=channel,
            intensities={"s1": bare_decoy, "s2": bare_signal},
            intensity_weights={"s1": 0.5, "s2": 0.5})
        report = run_dtb(cfg)
        maps = maps_from_report(report, cfg, budget, 0.0, seed=55)
        assert sorted(m.intensity_label for m in maps) == ["S1", "S2"]
        for m in maps:
            tally = report.tallies[m.intensity_label.lower()]
            assert int(m.counts.sum()) == tally.detected
            assert m.exposure_s * budget.sent_per_second == pytest.approx(
                tally.sent, rel=1e-12)
            wrong = sum(m.cell(a, b) for a, b in
                        (("H", "V"), ("V", "H"), ("D", "A"), ("A", "D")))
            assert wrong <= tally.errors

    def test_extracted_rates_sit_on_the_analytic_curve(self, pipeline,
                                                       channel, bare_signal,
                                                       budget):
        maps, stats, _ = pipeline
        points = skr_from_experiment(maps, stats, budget)
        assert [p.loss_db for p in points] == [1.0, 2.0]
        for point in points:
            analytic = skr_dtb(bare_signal,
                               channel.with_loss(point.loss_db)).rate
            assert point.skr_sigma > 0.0
            assert abs(point.skr - analytic) < 3.0 * point.skr_sigma

    def test_effective_channel_recovers_the_receiver(self, pipeline, budget):
        maps, stats, _ = pipeline
        est = effective_channel(maps, stats, budget)
        assert est.eta_bob == pytest.approx(0.045, rel=0.05)
        assert est.e_d == pytest.approx(0.033, abs=0.005)
        assert 0.0 < est.p_dc < 1e-5

    def test_missing_intensity_map_is_rejected(self, pipeline, budget):
        maps, stats, _ = pipeline
        only_signal = [m for m in maps if m.intensity_label != "S1"]
        with pytest.raises(ConfigError):
            skr_from_experiment(only_signal, stats, budget)

    def test_missing_statistics_are_rejected(self, pipeline, budget):
        maps, stats, _ = pipeline
        with pytest.raises(ConfigError):
            skr_from_experiment(maps, {"S2": stats["S2"]}, budget)

    def test_duplicate_maps_are_rejected(self, pipeline, budget):
        maps, stats, _ = pipeline
        with pytest.raises(ConfigError):
            skr_from_experiment(maps + maps[:1], stats, budget)

    def test_vacuum_fallback_warns_and_proceeds(self, pipeline, budget):
        maps, stats, _ = pipeline
        no_vacuum = [m for m in maps if m.intensity_label != "S0"]
        with pytest.warns(UserWarning, match="falling back"):
            points = skr_from_experiment(no_vacuum, stats, budget)
        assert len(points) == 2

    def test_no_warning_with_a_vacuum_map(self, pipeline, budget):
        maps, stats, _ = pipeline
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            skr_from_experiment(maps, stats, budget)

    def test_fallback_constants_are_the_documented_receiver_values(self):
        assert FALLBACK_Y0 == 1.7e-6
        assert FALLBACK_E0 == 0.5
