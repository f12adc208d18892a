"""Tests for the sequence runner, cache accounting and corruption modes.

The FLOPs identities are exact integer equalities; output comparisons on
refresh frames and on constant scenes are bit-level because cached passes
replay the same arithmetic as full passes.
"""

import csv
import json
import math
import types

import numpy as np
import pytest

from framecache.builders import build_unet, set_unet_level
from framecache.engine import (
    BYTES_PER_VALUE,
    CacheState,
    Corruption,
    baseline_outputs,
    cache_bytes_report,
    corrupt_cache,
    report_rows,
    run_sequence,
    save_report_csv,
    save_report_json,
    sequence_smape_to_baseline,
)
from framecache.policies import DeltaSmape, EveryN, MotionThreshold, NonLinearSchedule
from framecache.workload import SceneConfig, generate

STILL_SCENE = SceneConfig(seed=5, channels=6, height=16, width=16, pan_speed=0.0, sprite_count=0)
DRIFT_SCENE = SceneConfig(seed=2, channels=6, height=16, width=16, pan_speed=2.0, base_cell=8)


def small_net(seed=3):
    return build_unet(2, 4, (6, 16, 16), seed=seed)


def frame_mse(a, b):
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(diff * diff))


class TestCacheBytes:
    """Resident cache size accounting."""

    def test_frozen_reference_shapes(self):
        color = CacheState(entries={"color": np.zeros((24, 360, 640), dtype=np.float32)})
        assert cache_bytes_report(color) == 22118400
        pyramid = CacheState(
            entries={f"p{i}": np.zeros((64, 192, 256), dtype=np.float32) for i in range(7)}
        )
        assert cache_bytes_report(pyramid) == 88080384
        assert cache_bytes_report(CacheState(entries={})) == 0

    def test_four_bytes_per_value(self):
        state = CacheState(entries={"a": np.zeros((3, 5, 7), dtype=np.float32)})
        assert cache_bytes_report(state) == 3 * 5 * 7 * BYTES_PER_VALUE

    def test_reference_input_included(self):
        entry = np.zeros((2, 4, 4), dtype=np.float32)
        bare = CacheState(entries={"a": entry})
        with_ref = CacheState(entries={"a": entry}, reference_input=np.zeros((6, 8, 8), dtype=np.float32))
        assert cache_bytes_report(with_ref) - cache_bytes_report(bare) == 6 * 8 * 8 * 4

    def test_run_reports_policy_dependent_bytes(self):
        # Input-delta policies retain the refresh frame input; periodic
        # policies store only the edge tensors.
        spec = small_net()
        frames = generate(STILL_SCENE, 4).frames
        entry_values = int(np.prod(spec.shapes["enc1"]))
        input_values = int(np.prod(spec.input_shape))
        delta_run = run_sequence(spec, frames, DeltaSmape(tau=0.25))
        periodic_run = run_sequence(spec, frames, EveryN(2))
        assert delta_run.cache_bytes == (entry_values + input_values) * 4
        assert periodic_run.cache_bytes == entry_values * 4


class TestCorruption:
    """Cache rewrite modes used by the sanity study."""

    def make_state(self, seed=0, shape=(8, 12, 12)):
        rng = np.random.default_rng(seed)
        entries = {
            "a->b:0": rng.normal(0.3, 1.1, size=shape).astype(np.float32),
            "c->b:1": rng.uniform(-2.0, 5.0, size=shape).astype(np.float32),
        }
        return CacheState(entries=entries, reference_input=np.ones((3, 4, 4), dtype=np.float32))

    def test_zero_blanks_entries(self):
        state = self.make_state()
        out = corrupt_cache(state, Corruption("zero"))
        for name, entry in out.entries.items():
            assert entry.shape == state.entries[name].shape
            assert not entry.any()
        assert np.array_equal(out.reference_input, state.reference_input)

    def test_uniform_respects_entry_range(self):
        state = self.make_state(seed=1)
        out = corrupt_cache(state, Corruption("uniform_random", seed=4))
        for name, entry in out.entries.items():
            lo, hi = float(state.entries[name].min()), float(state.entries[name].max())
            assert float(entry.min()) >= lo
            assert float(entry.max()) <= hi
            assert not np.array_equal(entry, state.entries[name])

    def test_normal_moment_matches_uniform(self):
        # Same mean and std as a uniform draw over the entry's range.
        rng = np.random.default_rng(9)
        big = CacheState(entries={"e": rng.uniform(1.0, 3.0, size=(40, 50, 50)).astype(np.float32)})
        out = corrupt_cache(big, Corruption("normal_random", seed=11))
        lo, hi = float(big.entries["e"].min()), float(big.entries["e"].max())
        values = out.entries["e"].astype(np.float64)
        assert float(values.mean()) == pytest.approx(0.5 * (lo + hi), abs=0.01)
        assert float(values.std()) == pytest.approx((hi - lo) / math.sqrt(12.0), rel=0.02)

    def test_noise_scale_tracks_sigma(self):
        rng = np.random.default_rng(10)
        entry = rng.normal(0.0, 2.0, size=(40, 50, 50)).astype(np.float32)
        state = CacheState(entries={"e": entry})
        for sigma in (0.5, 1.0, 2.0):
            out = corrupt_cache(state, Corruption("noise", sigma_scale=sigma, seed=6))
            added = out.entries["e"].astype(np.float64) - entry.astype(np.float64)
            assert float(added.std()) == pytest.approx(sigma * float(entry.std()), rel=0.03)
            assert float(added.mean()) == pytest.approx(0.0, abs=0.05 * sigma)

    def test_noise_sigma_zero_is_identity(self):
        state = self.make_state(seed=2)
        out = corrupt_cache(state, Corruption("noise", sigma_scale=0.0))
        for name, entry in out.entries.items():
            assert np.array_equal(entry, state.entries[name])

    def test_same_seed_reproduces(self):
        state = self.make_state(seed=3)
        mode = Corruption("uniform_random", seed=21)
        first = corrupt_cache(state, mode)
        second = corrupt_cache(state, mode)
        for name in state.entries:
            assert np.array_equal(first.entries[name], second.entries[name])

    def test_empty_cache_rejected(self):
        with pytest.raises(ValueError, match="empty cache"):
            corrupt_cache(CacheState(entries={}), Corruption("zero"))

    def test_mode_validation(self):
        with pytest.raises(ValueError, match="unknown corruption kind"):
            Corruption("garbage")
        with pytest.raises(ValueError):
            Corruption("noise", sigma_scale=-1.0)


class TestRunSequence:
    """Refresh scheduling, FLOPs totals and output equivalences."""

    def test_constant_scene_single_refresh(self):
        # With identical frames the input-delta policy refreshes once and
        # every cached output matches the no-cache baseline bit for bit.
        spec = small_net()
        frames = generate(STILL_SCENE, 8).frames
        report = run_sequence(spec, frames, DeltaSmape(tau=0.25))
        baseline = baseline_outputs(spec, frames)
        assert report.refresh_count == 1
        assert report.skipped_frame_fraction == pytest.approx(7.0 / 8.0, abs=0.0)
        for produced, reference in zip(report.outputs, baseline):
            assert np.array_equal(produced, reference)
        assert sequence_smape_to_baseline(report, baseline) == 0.0

    def test_refresh_frames_match_baseline_on_drift(self):
        spec = small_net()
        frames = generate(DRIFT_SCENE, 10).frames
        report = run_sequence(spec, frames, EveryN(3))
        baseline = baseline_outputs(spec, frames)
        for record, reference in zip(report.frames, baseline):
            if record.refreshed:
                assert np.array_equal(record.output, reference)

    def test_flops_totals_identity(self):
        # total == refreshes * full + cached frames * cached, exactly.
        spec = set_unet_level(build_unet(3, 4, (6, 16, 16), seed=1), 2)
        frames = generate(DRIFT_SCENE, 12).frames
        for policy in (
            EveryN(1),
            EveryN(4),
            DeltaSmape(tau=0.2),
            MotionThreshold(tau=1.0),
            NonLinearSchedule(refresh_count=3),
        ):
            report = run_sequence(spec, frames, policy)
            refreshes = report.refresh_count
            expected = refreshes * spec.full_flops + (12 - refreshes) * spec.cached_flops()
            assert report.total_flops == expected
            per_frame = {True: spec.full_flops, False: spec.cached_flops()}
            assert [f.flops for f in report.frames] == [
                per_frame[f.refreshed] for f in report.frames
            ]

    def test_eliminated_fraction_identity(self):
        spec = small_net()
        frames = generate(DRIFT_SCENE, 10).frames
        report = run_sequence(spec, frames, EveryN(5))
        expected = 1.0 - report.total_flops / (10 * spec.full_flops)
        assert report.eliminated_flops_fraction == pytest.approx(expected, abs=0.0)
        assert report.full_pass_flops == spec.full_flops

    def test_every_frame_refresh_equals_baseline(self):
        spec = small_net()
        frames = generate(DRIFT_SCENE, 6).frames
        report = run_sequence(spec, frames, EveryN(1))
        baseline = baseline_outputs(spec, frames)
        assert report.refresh_count == 6
        assert report.skipped_frame_fraction == 0.0
        assert report.eliminated_flops_fraction == 0.0
        for produced, reference in zip(report.outputs, baseline):
            assert np.array_equal(produced, reference)

    def test_policy_metric_recorded_before_decision(self):
        spec = small_net()
        frames = generate(DRIFT_SCENE, 5).frames
        report = run_sequence(spec, frames, DeltaSmape(tau=0.2))
        assert report.frames[0].policy_metric is None
        for record in report.frames[1:]:
            assert record.policy_metric is not None
            assert record.policy_metric >= 0.0

    def test_empty_frames_rejected(self):
        with pytest.raises(ValueError, match="at least one frame"):
            run_sequence(small_net(), [], EveryN(1))

    def test_accepts_plain_namespaces(self):
        spec = small_net()
        rng = np.random.default_rng(0)
        frames = [
            types.SimpleNamespace(
                input=rng.uniform(0, 1, size=(6, 16, 16)).astype(np.float32),
                motion=np.zeros((2, 16, 16), dtype=np.float32),
            )
            for _ in range(3)
        ]
        report = run_sequence(spec, frames, EveryN(2))
        assert report.frame_count == 3


class TestRunWithCorruption:
    """Corruption interacts with refreshes, not with cached replays."""

    def test_zero_sigma_noise_matches_proper_run(self):
        spec = small_net()
        frames = generate(DRIFT_SCENE, 8).frames
        proper = run_sequence(spec, frames, EveryN(4))
        noisy = run_sequence(spec, frames, EveryN(4), corruption=Corruption("noise", sigma_scale=0.0))
        for a, b in zip(proper.outputs, noisy.outputs):
            assert np.array_equal(a, b)

    def test_zero_corruption_breaks_only_cached_frames(self):
        spec = small_net()
        frames = generate(STILL_SCENE, 8).frames
        baseline = baseline_outputs(spec, frames)
        report = run_sequence(spec, frames, EveryN(4), corruption=Corruption("zero"))
        for record, reference in zip(report.frames, baseline):
            mse = frame_mse(record.output, reference)
            if record.refreshed:
                assert mse == 0.0
            else:
                assert mse == pytest.approx(0.2892502304834162, rel=1e-9)

    def test_corruption_reproducible_per_frame(self):
        spec = small_net()
        frames = generate(DRIFT_SCENE, 8).frames
        mode = Corruption("uniform_random", seed=13)
        first = run_sequence(spec, frames, EveryN(3), corruption=mode)
        second = run_sequence(spec, frames, EveryN(3), corruption=mode)
        for a, b in zip(first.outputs, second.outputs):
            assert np.array_equal(a, b)

    def test_corruption_seed_changes_outputs(self):
        spec = small_net()
        frames = generate(DRIFT_SCENE, 8).frames
        first = run_sequence(spec, frames, EveryN(3), corruption=Corruption("uniform_random", seed=13))
        second = run_sequence(spec, frames, EveryN(3), corruption=Corruption("uniform_random", seed=14))
        cached = [i for i, rec in enumerate(first.frames) if not rec.refreshed]
        assert any(
            not np.array_equal(first.outputs[i], second.outputs[i]) for i in cached
        )


class TestReportSerialization:
    """Per-frame rows, CSV and JSON writers."""

    def make_report(self, frame_count=6):
        spec = small_net()
        frames = generate(DRIFT_SCENE, frame_count).frames
        report = run_sequence(spec, frames, EveryN(3))
        report.policy_name = "every_3"
        return report, baseline_outputs(spec, frames)

    def test_rows_without_baseline(self):
        report, _ = self.make_report()
        rows = report_rows(report)
        assert len(rows) == report.frame_count
        assert all(row["mse_vs_baseline"] is None for row in rows)
        assert [row["index"] for row in rows] == list(range(report.frame_count))

    def test_rows_mse_against_baseline(self):
        report, baseline = self.make_report()
        rows = report_rows(report, baseline)
        for row, record in zip(rows, report.frames):
            expected = frame_mse(record.output, baseline[record.index])
            assert row["mse_vs_baseline"] == pytest.approx(expected, abs=0.0)
            if record.refreshed:
                assert row["mse_vs_baseline"] == 0.0

    def test_baseline_length_checked(self):
        report, baseline = self.make_report()
        with pytest.raises(ValueError, match="baseline length"):
            report_rows(report, baseline[:-1])

    def test_csv_round_trip(self, tmp_path):
        report, baseline = self.make_report()
        path = tmp_path / "report.csv"
        save_report_csv(report, path, baseline)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == report.frame_count
        assert [int(r["flops"]) for r in rows] == [f.flops for f in report.frames]
        assert sum(int(r["flops"]) for r in rows) == report.total_flops
        assert [r["refreshed"] == "True" for r in rows] == [f.refreshed for f in report.frames]

    def test_json_totals_consistent(self, tmp_path):
        report, baseline = self.make_report()
        path = tmp_path / "report.json"
        save_report_json(report, path, baseline)
        with open(path) as fh:
            doc = json.load(fh)
        assert doc["policy"] == "every_3"
        assert doc["frame_count"] == report.frame_count
        assert doc["refresh_count"] == report.refresh_count
        assert doc["total_flops"] == sum(row["flops"] for row in doc["frames"])
        assert doc["eliminated_flops_fraction"] == pytest.approx(
            1.0 - doc["total_flops"] / (doc["frame_count"] * doc["full_pass_flops"]), abs=0.0
        )
        assert doc["cache_bytes"] == report.cache_bytes
