"""Statistics pins, bench loop behavior, report schema, CLI exit codes."""

import json
import math
import os
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from splat.bench import (SCHEMA_VERSION, BenchReport, mean, median, p99,
                         run_bench, stddev, summarize)
from splat.camera import CameraPath, Keyframe, path_to_json
from splat.device import DeviceLimits, SoftDevice
from splat.images import read_png
from splat.pipeline import Renderer
from splat.scene_io import SynthSpec, synth_scene, write_ply

ROOT = Path(__file__).resolve().parents[1]
SCHEMA = json.loads((ROOT / "schemas" / "bench_report.schema.json").read_text())


def orbit_path(frames=4, radius=4.0, fov_deg=50.0):
    kfs = []
    for k in range(2):
        ang = k * math.pi / 8
        kfs.append(Keyframe(
            position=(radius * math.sin(ang), 0.0, radius * math.cos(ang)),
            target=(0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0),
            fov_y=math.radians(fov_deg)))
    return CameraPath(keyframes=tuple(kfs), frame_count=frames)


class TestStats:
    def test_median_odd_outlier(self):
        assert median([1, 2, 3, 4, 100]) == 3.0

    def test_median_even_takes_lower_middle(self):
        assert median([4, 1, 3, 2]) == 2.0

    def test_median_single_and_empty(self):
        assert median([7.5]) == 7.5
        assert median([]) == 0.0

    def test_p99_two_hundred(self):
        assert p99(list(range(1, 201))) == 198.0

    def test_p99_small_samples(self):
        assert p99([5.0]) == 5.0
        assert p99([1, 2, 3]) == 3.0  # ceil(2.97) = 3 -> last element

    def test_p99_unsorted_input(self):
        xs = [float(x) for x in range(100, 0, -1)]
        assert p99(xs) == 99.0  # ceil(99.0) = 99 -> sorted[98]

    def test_stddev_population(self):
        assert stddev([2, 4, 4, 4, 5, 5, 7, 9]) == 2.0

    def test_stddev_constant_and_empty(self):
        assert stddev([3, 3, 3]) == 0.0
        assert stddev([]) == 0.0

    def test_mean(self):
        assert mean([1, 2, 3]) == 2.0
        assert mean([]) == 0.0

    def test_summarize_keys(self):
        s = summarize([1.0, 2.0])
        assert sorted(s) == ["mean", "median", "p99", "stddev"]
        assert s["median"] == 1.0


class TestRunBench:
    def make(self, device=None, n=150):
        scene = synth_scene(13, n, SynthSpec(sh_degree=1))
        dev = device or SoftDevice()
        ren = Renderer(dev, scene, 48, 48)
        return dev, ren

    def test_counts_and_fields(self):
        dev, ren = self.make()
        report = run_bench(ren, orbit_path(), frames=5, warmup=3,
                           scene_path="x.ply")
        assert dev.stats.draws == 8  # warmup frames render too
        assert report.frames_completed == 5
        assert report.frames == 5 and report.warmup == 3
        assert not report.device_lost
        assert report.timestamp_valid
        assert report.adapter == "software-batched"
        assert report.scene_path == "x.ply"
        assert report.splat_count == 150
        assert report.schema_version == SCHEMA_VERSION == 1
        assert report.memory_total_bytes == ren.memory_report().total_bytes
        assert report.ablation == {"no_cull": False, "no_radius": False}
        assert report.total["mean"] > 0.0
        assert any("headless" in n for n in report.notes)
        ren.destroy()

    def test_stage_summaries_shape(self):
        _, ren = self.make()
        report = run_bench(ren, orbit_path(), frames=3, warmup=0)
        assert sorted(report.stages) == ["preprocess", "render", "sort"]
        for s in report.stages.values():
            assert sorted(s) == ["mean", "median", "p99", "stddev"]
            assert s["mean"] >= 0.0
        ren.destroy()

    def test_device_lost_partial(self):
        # 31 dispatches per frame: allow two full frames, die in the third
        dev = SoftDevice(fail_after_dispatches=70)
        _, ren = self.make(device=dev)
        report = run_bench(ren, orbit_path(), frames=5, warmup=0)
        assert report.device_lost
        assert report.frames_completed == 2
        assert report.frames == 5

    def test_loss_during_warmup_completes_nothing(self):
        dev = SoftDevice(fail_after_dispatches=10)
        _, ren = self.make(device=dev)
        report = run_bench(ren, orbit_path(), frames=4, warmup=1)
        assert report.device_lost
        assert report.frames_completed == 0
        assert not report.timestamp_valid  # vacuous: no measured frames
        assert report.total["mean"] == 0.0

    def test_timestamps_off_flagged(self):
        dev = SoftDevice(limits=DeviceLimits(timestamps=False))
        _, ren = self.make(device=dev)
        report = run_bench(ren, orbit_path(), frames=2, warmup=0)
        assert not report.device_lost
        assert not report.timestamp_valid
        assert report.total["mean"] > 0.0  # wall clock still measured
        ren.destroy()


class TestReportSchema:
    def make_report(self, **kw):
        _, ren = TestRunBench().make()
        report = run_bench(ren, orbit_path(), frames=2, warmup=0)
        doc = report.to_json()
        doc.update(kw)
        ren.destroy()
        return doc

    def test_real_report_validates(self):
        jsonschema.validate(self.make_report(), SCHEMA)

    def test_round_trips_through_json(self):
        doc = self.make_report()
        again = json.loads(json.dumps(doc))
        assert again == doc
        jsonschema.validate(again, SCHEMA)

    @pytest.mark.parametrize("patch", [
        {"schema_version": 2},
        {"adapter": ""},
        {"frames": 0},
        {"device_lost": "no"},
        {"memory_total_bytes": -4},
        {"extra_field": 1},
        {"ablation": {"no_cull": False}},
        {"notes": [7]},
        {"total": {"mean": 1.0, "median": 1.0, "stddev": 0.0}},
    ])
    def test_bad_documents_rejected(self, patch):
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(self.make_report(**patch), SCHEMA)

    def test_missing_required_rejected(self):
        doc = self.make_report()
        del doc["stages"]
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(doc, SCHEMA)


def run_cli(args, env_extra=None, cwd=None):
    env = dict(os.environ)
    env["PYTHONPATH"] = str(ROOT / "src")
    if env_extra:
        env.update(env_extra)
    return subprocess.run([sys.executable, "-m", "splat.cli", *args],
                          capture_output=True, text=True, env=env, cwd=cwd)


@pytest.fixture(scope="module")
def fixture_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    scene = synth_scene(29, 80, SynthSpec(sh_degree=1, extent=0.8))
    ply = d / "scene.ply"
    ply.write_bytes(write_ply(scene))
    path = d / "orbit.json"
    path.write_text(path_to_json(orbit_path(frames=3)))
    pose = d / "pose.json"
    pose.write_text(json.dumps({
        "position": [0.0, 0.0, 4.0], "target": [0.0, 0.0, 0.0],
        "up": [0.0, 1.0, 0.0], "fov_y_deg": 50.0}))
    return d, ply, path, pose


class TestCliRender:
    def test_gpu_render_ok(self, fixture_files):
        d, ply, _, pose = fixture_files
        out = d / "frame.png"
        r = run_cli(["render", "--ply", str(ply), "--camera", str(pose),
                     "--width", "40", "--height", "32", "--out", str(out)])
        assert r.returncode == 0, r.stderr
        doc = json.loads(r.stdout)
        assert doc["adapter"] == "software-batched"
        assert doc["splat_count"] == 80
        assert doc["visible_count"] > 0
        img = read_png(out)
        assert img.shape == (32, 40, 4)

    def test_cpu_backend(self, fixture_files):
        d, ply, _, pose = fixture_files
        out = d / "cpu.png"
        r = run_cli(["render", "--ply", str(ply), "--camera", str(pose),
                     "--width", "40", "--height", "32", "--backend", "cpu",
                     "--out", str(out)])
        assert r.returncode == 0, r.stderr
        assert json.loads(r.stdout)["adapter"] == "reference-cpu"
        assert out.exists()

    def test_backends_agree_visually(self, fixture_files):
        d, ply, _, pose = fixture_files
        a = read_png(d / "frame.png").astype(np.float64)
        b = read_png(d / "cpu.png").astype(np.float64)
        err = np.sqrt(np.mean((a - b) ** 2))
        assert err < 2.0  # same frame modulo half-precision axes

    def test_camera_path_with_frame_index(self, fixture_files):
        d, ply, path, _ = fixture_files
        out = d / "f2.png"
        r = run_cli(["render", "--ply", str(ply), "--camera", str(path),
                     "--frame", "2", "--width", "32", "--height", "32",
                     "--out", str(out)])
        assert r.returncode == 0, r.stderr

    def test_missing_ply_is_validation_error(self, fixture_files, tmp_path):
        d, _, _, pose = fixture_files
        r = run_cli(["render", "--ply", str(tmp_path / "none.ply"),
                     "--camera", str(pose), "--out", str(tmp_path / "o.png")])
        assert r.returncode == 2
        assert "error:" in r.stderr

    def test_malformed_camera(self, fixture_files, tmp_path):
        d, ply, _, _ = fixture_files
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        r = run_cli(["render", "--ply", str(ply), "--camera", str(bad),
                     "--out", str(tmp_path / "o.png")])
        assert r.returncode == 2

    def test_zero_viewport(self, fixture_files, tmp_path):
        d, ply, _, pose = fixture_files
        r = run_cli(["render", "--ply", str(ply), "--camera", str(pose),
                     "--width", "0", "--out", str(tmp_path / "o.png")])
        assert r.returncode == 2

    def test_corrupt_ply(self, fixture_files, tmp_path):
        d, _, _, pose = fixture_files
        bad = tmp_path / "bad.ply"
        bad.write_bytes(b"ply\nformat ascii 1.0\n")
        r = run_cli(["render", "--ply", str(bad), "--camera", str(pose),
                     "--out", str(tmp_path / "o.png")])
        assert r.returncode == 2

    def test_device_fail_env(self, fixture_files, tmp_path):
        d, ply, _, pose = fixture_files
        r = run_cli(["render", "--ply", str(ply), "--camera", str(pose),
                     "--width", "32", "--height", "32",
                     "--out", str(tmp_path / "o.png")],
                    env_extra={"SPLAT_DEVICE_FAIL_AFTER": "5"})
        assert r.returncode == 3
        assert "device" in r.stderr

    def test_backend_override_env(self, fixture_files, tmp_path):
        d, ply, _, pose = fixture_files
        r = run_cli(["render", "--ply", str(ply), "--camera", str(pose),
                     "--width", "32", "--height", "32",
                     "--out", str(tmp_path / "o.png")],
                    env_extra={"SPLAT_BACKEND_OVERRIDE":
                               "software-serial-shuffled:9"})
        assert r.returncode == 0, r.stderr
        assert json.loads(r.stdout)["adapter"] == "software-serial-shuffled"


class TestCliBench:
    def test_bench_report_validates(self, fixture_files, tmp_path):
        d, ply, path, _ = fixture_files
        rep = tmp_path / "report.json"
        r = run_cli(["bench", "--ply", str(ply), "--camera-path", str(path),
                     "--width", "32", "--height", "32", "--frames", "3",
                     "--warmup", "1", "--report", str(rep)])
        assert r.returncode == 0, r.stderr
        doc = json.loads(r.stdout)
        jsonschema.validate(doc, SCHEMA)
        assert json.loads(rep.read_text()) == doc
        assert doc["frames_completed"] == 3

    def test_bench_partial_on_loss(self, fixture_files, tmp_path):
        d, ply, path, _ = fixture_files
        rep = tmp_path / "partial.json"
        r = run_cli(["bench", "--ply", str(ply), "--camera-path", str(path),
                     "--width", "32", "--height", "32", "--frames", "4",
                     "--warmup", "0", "--report", str(rep)],
                    env_extra={"SPLAT_DEVICE_FAIL_AFTER": "40"})
        assert r.returncode == 3
        assert "partial" in r.stderr
        doc = json.loads(rep.read_text())
        jsonschema.validate(doc, SCHEMA)
        assert doc["device_lost"] is True
        assert doc["frames_completed"] == 1

    def test_bench_rejects_bad_shape(self, fixture_files, tmp_path):
        d, ply, path, _ = fixture_files
        r = run_cli(["bench", "--ply", str(ply), "--camera-path", str(path),
                     "--frames", "0"])
        assert r.returncode == 2

    def test_bench_ablation_flags_reported(self, fixture_files):
        d, ply, path, _ = fixture_files
        r = run_cli(["bench", "--ply", str(ply), "--camera-path", str(path),
                     "--width", "32", "--height", "32", "--frames", "2",
                     "--warmup", "0", "--no-cull", "--no-radius"])
        assert r.returncode == 0, r.stderr
        doc = json.loads(r.stdout)
        assert doc["ablation"] == {"no_cull": True, "no_radius": True}


class TestCliSortTest:
    def test_pass(self):
        r = run_cli(["sort-test", "--n", "2000", "--seed", "3"])
        assert r.returncode == 0, r.stderr
        doc = json.loads(r.stdout)
        assert doc["pass"] is True
        assert sorted(doc["results"]) == ["duplicate-heavy", "reverse-sorted",
                                          "sorted", "uniform"]
        assert all(v["ok"] for v in doc["results"].values())

    def test_fault_hook_reports_repro_line(self):
        r = run_cli(["sort-test", "--n", "64", "--seed", "9"],
                    env_extra={"SPLAT_SORT_FAULT": "flip"})
        assert r.returncode == 1
        assert json.loads(r.stdout)["pass"] is False
        assert "sort-test --n 64 --seed 9" in r.stderr

    def test_n_zero(self):
        r = run_cli(["sort-test", "--n", "0"])
        assert r.returncode == 0, r.stderr

    def test_negative_n(self):
        r = run_cli(["sort-test", "--n", "-3"])
        assert r.returncode == 2
