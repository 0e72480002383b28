#!/usr/bin/env python3
"""
Tests for the scan service with stubbed δP evaluations
"""

from collections import OrderedDict

import numpy as np
import pytest

from ionization_lab.processors import scan as scan_module
from ionization_lab.processors.rates import delta_p
from ionization_lab.processors.scan import ScanService, scan, scan_axes
from ionization_lab.storage import ScanJournal


def fake_baseline(config, e0):
    return 10.0 * e0, True


def fake_cell(config, e0, tau, baseline, baseline_valid=True):
    return e0 + tau + baseline, True


@pytest.fixture
def stubbed(monkeypatch):
    monkeypatch.setattr(scan_module, "compute_baseline", fake_baseline)
    monkeypatch.setattr(scan_module, "compute_cell", fake_cell)


@pytest.fixture
def scan_journal(tiny_config, tmp_path):
    return ScanJournal(tmp_path / "scan.journal.jsonl", tiny_config.fingerprint, *scan_axes(tiny_config))


class TestScanAxes:
    """Tests for axis selection"""

    def test_explicit_tau_values(self, tiny_config):
        e0_values, tau_values = scan_axes(tiny_config)
        np.testing.assert_array_equal(e0_values, [0.08, 0.1])
        period = tiny_config.pulse.period
        np.testing.assert_allclose(tau_values, [0.4 * period, 0.5 * period, 0.6 * period])

    def test_default_window(self, desk_config):
        e0_values, tau_values = scan_axes(desk_config)
        assert e0_values.size == 5
        assert tau_values.size == 9
        period = desk_config.pulse.period
        assert tau_values[-1] - tau_values[0] == pytest.approx(period / 4)


class TestScanService:
    """Tests for job orchestration"""

    @pytest.mark.asyncio
    async def test_fills_table(self, tiny_config, stubbed):
        service = ScanService(tiny_config, workers=1)
        result = await service.run()
        e0_values, tau_values = scan_axes(tiny_config)
        expected = e0_values[:, None] + tau_values[None, :] + 10.0 * e0_values[:, None]
        np.testing.assert_allclose(result.delta_p, expected)
        np.testing.assert_allclose(result.baseline, 10.0 * e0_values)
        assert result.failures == []
        assert result.fingerprint == tiny_config.fingerprint
        stats = service.get_stats()
        assert stats["total_jobs"] == 2 + 6
        assert stats["completed_jobs"] == 8
        assert stats["success_rate"] == 1.0

    @pytest.mark.asyncio
    async def test_cell_failure_is_isolated(self, tiny_config, stubbed, monkeypatch):
        _, tau_values = scan_axes(tiny_config)

        def flaky(config, e0, tau, baseline, baseline_valid):
            if e0 == 0.08 and tau == tau_values[1]:
                raise RuntimeError("propagation unstable")
            return fake_cell(config, e0, tau, baseline)

        monkeypatch.setattr(scan_module, "compute_cell", flaky)
        service = ScanService(tiny_config, workers=1)
        result = await service.run()
        assert np.isnan(result.delta_p[0, 1])
        assert result.succeeded() == 5
        assert len(result.failures) == 1
        failure = result.failures[0]
        assert (failure.e0_index, failure.tau_index) == (0, 1)
        assert "propagation unstable" in failure.message
        assert service.get_stats()["failed_jobs"] == 1

    @pytest.mark.asyncio
    async def test_baseline_failure_fails_row(self, tiny_config, stubbed, monkeypatch):
        def broken(config, e0):
            if e0 == 0.1:
                raise RuntimeError("boom")
            return fake_baseline(config, e0)

        monkeypatch.setattr(scan_module, "compute_baseline", broken)
        result = await ScanService(tiny_config, workers=1).run()
        assert np.all(np.isnan(result.delta_p[1]))
        assert np.all(np.isfinite(result.delta_p[0]))
        assert [(f.e0_index, f.tau_index) for f in result.failures] == [(1, None), (1, 0), (1, 1), (1, 2)]

    @pytest.mark.asyncio
    async def test_resume_skips_journaled_jobs(self, tiny_config, stubbed, scan_journal, monkeypatch):
        first = await ScanService(tiny_config, workers=1, journal=scan_journal).run()

        def must_not_run(*args):
            raise AssertionError("job re-run despite journal")

        monkeypatch.setattr(scan_module, "compute_baseline", must_not_run)
        monkeypatch.setattr(scan_module, "compute_cell", must_not_run)
        service = ScanService(tiny_config, workers=1, journal=scan_journal, resume=True)
        second = await service.run()
        np.testing.assert_array_equal(second.delta_p, first.delta_p)
        np.testing.assert_array_equal(second.baseline, first.baseline)
        assert service.get_stats()["resumed_jobs"] == 8

    @pytest.mark.asyncio
    async def test_resume_completes_missing_cells(self, tiny_config, stubbed, scan_journal):
        first = await ScanService(tiny_config, workers=1, journal=scan_journal).run()
        lines = scan_journal.path.read_text().splitlines(keepends=True)
        scan_journal.path.write_text("".join(lines[:5]))

        service = ScanService(tiny_config, workers=1, journal=scan_journal, resume=True)
        second = await service.run()
        np.testing.assert_array_equal(second.delta_p, first.delta_p)
        assert service.get_stats()["resumed_jobs"] == 4
        assert service.get_stats()["completed_jobs"] == 4
        assert len(scan_journal.load()) == 8

    @pytest.mark.asyncio
    async def test_sentinel_flags_collected(self, tiny_config, stubbed, scan_journal, monkeypatch):
        _, tau_values = scan_axes(tiny_config)
        seen = []

        def edge_baseline(config, e0):
            value, _ = fake_baseline(config, e0)
            return value, e0 != 0.1

        def edge_cell(config, e0, tau, baseline, baseline_valid):
            seen.append((e0, baseline_valid))
            value, _ = fake_cell(config, e0, tau, baseline)
            return value, baseline_valid and tau != tau_values[2]

        monkeypatch.setattr(scan_module, "compute_baseline", edge_baseline)
        monkeypatch.setattr(scan_module, "compute_cell", edge_cell)
        service = ScanService(tiny_config, workers=1, journal=scan_journal)
        result = await service.run()
        expected = [(0, 2), (1, None), (1, 0), (1, 1), (1, 2)]
        assert result.invalid_cells == expected
        assert result.failures == []
        assert np.all(np.isfinite(result.delta_p))
        assert set(seen) == {(0.08, True), (0.1, False)}
        assert service.get_stats()["flagged_jobs"] == 5
        assert result.to_dict()["invalid_cells"][0] == {"e0_index": 0, "tau_index": 2}

        resumed = await ScanService(tiny_config, workers=1, journal=scan_journal, resume=True).run()
        assert resumed.invalid_cells == expected

    @pytest.mark.asyncio
    async def test_explicit_axes(self, tiny_config, stubbed):
        result = await ScanService(tiny_config, workers=1).run([0.1], [5.0, 6.0])
        assert result.delta_p.shape == (1, 2)
        np.testing.assert_allclose(result.delta_p[0], [0.1 + 5.0 + 1.0, 0.1 + 6.0 + 1.0])

    @pytest.mark.asyncio
    async def test_axes_must_ascend(self, tiny_config, stubbed):
        with pytest.raises(ValueError):
            await ScanService(tiny_config, workers=1).run([0.1, 0.08], [5.0])
        with pytest.raises(ValueError):
            await ScanService(tiny_config, workers=1).run([], [5.0])

    def test_synchronous_entry_point(self, tiny_config, stubbed):
        result = scan(tiny_config, [0.1], [5.0], workers=1)
        assert result.delta_p[0, 0] == pytest.approx(0.1 + 5.0 + 1.0)

    def test_workers_default_from_config(self, tiny_config):
        assert ScanService(tiny_config).workers == tiny_config.run.workers
        assert ScanService(tiny_config, workers=3).workers == 3


class TestComputeCell:
    """Tests for the per-process δP helpers on the tiny configuration"""

    def test_cell_reuses_seeded_baseline(self, tiny_config):
        e0 = 0.1
        baseline, baseline_valid = scan_module.compute_baseline(tiny_config, e0)
        assert 0.0 < baseline < 1.0
        assert isinstance(baseline_valid, bool)
        tau = tiny_config.pulse.period / 2
        value, valid = scan_module.compute_cell(tiny_config, e0, tau, baseline)
        assert np.isfinite(value)
        assert value != 0.0
        assert isinstance(valid, bool)

    def test_single_cell_scan_matches_delta_p(self, tiny_config):
        tau = tiny_config.pulse.period / 2
        result = scan(tiny_config, [0.1], [tau], workers=1)
        assert result.delta_p[0, 0] == delta_p(0.1, tau, tiny_config)

    def test_small_box_flags_every_run(self, tiny_config):
        # the 1s tail beyond 0.9·R_max is far above the sentinel threshold in an 8 a.u. box
        cramped = tiny_config.with_overrides({"grid.r_max": 8.0})
        tau = cramped.pulse.period / 2
        result = scan(cramped, [0.1], [tau], workers=1)
        assert np.isfinite(result.delta_p[0, 0])
        assert result.invalid_cells == [(0, None), (0, 0)]

    def test_variation_cache_is_bounded(self, tiny_config, monkeypatch):
        monkeypatch.setattr(scan_module, "_variations", OrderedDict())
        configs = [tiny_config.with_overrides({"signal.alpha": 1e-4 * (k + 1)})
                   for k in range(scan_module.MAX_CACHED_VARIATIONS + 3)]
        variations = [scan_module._variation_for(config) for config in configs]
        assert len(scan_module._variations) == scan_module.MAX_CACHED_VARIATIONS
        assert scan_module._variation_for(configs[-1]) is variations[-1]
        assert configs[0].fingerprint not in scan_module._variations
