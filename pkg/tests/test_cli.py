"""CLI contract: exit codes, artifacts, and reproducibility."""

import pytest

from codedscene.cli import main


@pytest.fixture(scope="module")
def ambiguity_seq(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "seq"
    assert main(["synth", "--preset", "ambiguity", "--seed", "0", "--frames", "2",
                 "--out", str(out)]) == 0
    return out


class TestSynth:
    def test_writes_layout(self, ambiguity_seq):
        assert (ambiguity_seq / "scene.json").exists()
        assert (ambiguity_seq / "frames" / "frame_0000.pfm").exists()
        assert (ambiguity_seq / "bundles" / "frame_0001.scnb").exists()
        assert (ambiguity_seq / "gt" / "trajectory.txt").exists()

    def test_spec_file(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text('{"preset": "lattice", "seed": 3}')
        assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "seq")]) == 0
        assert (tmp_path / "seq" / "frames" / "frame_0001.pfm").exists()

    def test_unknown_preset_fails(self, tmp_path):
        assert main(["synth", "--preset", "nope", "--out", str(tmp_path / "x")]) == 2


class TestFuse:
    def test_synth_plus_fuse_within_a_minute(self, tmp_path):
        import time

        t0 = time.time()
        seq = tmp_path / "seq"
        out = tmp_path / "fused"
        assert main(["synth", "--preset", "ambiguity", "--seed", "3", "--frames", "2",
                     "--out", str(seq)]) == 0
        assert main(["fuse", "--in", str(seq), "--views", "2", "--method", "code",
                     "--out", str(out)]) == 0
        assert (out / "metrics.csv").exists()
        assert time.time() - t0 < 60.0

    def test_code_fusion_writes_metrics_and_images(self, ambiguity_seq, tmp_path):
        out = tmp_path / "fused"
        assert main(["fuse", "--in", str(ambiguity_seq), "--views", "2", "--method", "code",
                     "--out", str(out)]) == 0
        lines = (out / "metrics.csv").read_text().splitlines()
        assert lines[0] == "method,views,pix_acc,cls_acc,miou,mean_entropy_init,mean_entropy_opt"
        fields = lines[1].split(",")
        assert fields[0] == "code" and fields[1] == "2"
        assert (out / "labels_01.ppm").exists()
        assert (out / "entropy_opt_01.pgm.range.txt").exists()

    def test_single_view_equals_zero_code_baseline(self, ambiguity_seq, tmp_path):
        out_a = tmp_path / "one_code"
        out_b = tmp_path / "one_mult"
        assert main(["fuse", "--in", str(ambiguity_seq), "--views", "1", "--method", "code",
                     "--out", str(out_a)]) == 0
        assert main(["fuse", "--in", str(ambiguity_seq), "--views", "1", "--method", "mult",
                     "--out", str(out_b)]) == 0
        row_a = (out_a / "metrics.csv").read_text().splitlines()[1].split(",")
        row_b = (out_b / "metrics.csv").read_text().splitlines()[1].split(",")
        # metrics and entropies identical to the zero-code prediction
        assert row_a[2:] == row_b[2:]

    def test_csv_parses_back_to_six_decimals(self, ambiguity_seq, tmp_path):
        out = tmp_path / "fused"
        main(["fuse", "--in", str(ambiguity_seq), "--views", "2", "--method", "avg", "--out", str(out)])
        row = (out / "metrics.csv").read_text().splitlines()[1].split(",")
        for tok in row[2:]:
            value = float(tok)
            assert f"{value:.6f}" == tok

    def test_byte_identical_reruns(self, ambiguity_seq, tmp_path):
        outs = []
        for name in ("f1", "f2"):
            out = tmp_path / name
            assert main(["fuse", "--in", str(ambiguity_seq), "--views", "2", "--method", "code",
                         "--out", str(out)]) == 0
            outs.append((out / "metrics.csv").read_bytes())
        assert outs[0] == outs[1]


class TestErrors:
    def test_usage_error_exit_1(self):
        assert main(["fuse", "--views", "2"]) == 1

    def test_unknown_command_exit_1(self):
        assert main(["frobnicate"]) == 1

    def test_corrupt_magic_exit_2(self, ambiguity_seq, tmp_path, capsys):
        bad = tmp_path / "bad.scnb"
        raw = bytearray((ambiguity_seq / "bundles" / "frame_0000.scnb").read_bytes())
        raw[0] = ord("X")
        bad.write_bytes(bytes(raw))
        assert main(["validate-bundle", str(bad)]) == 2
        assert "SCNB1" in capsys.readouterr().err

    def test_missing_sequence_exit_2(self, tmp_path):
        assert main(["fuse", "--in", str(tmp_path / "void"), "--views", "2",
                     "--method", "avg", "--out", str(tmp_path / "o")]) == 2

    def test_too_many_views_exit_2(self, ambiguity_seq, tmp_path):
        assert main(["fuse", "--in", str(ambiguity_seq), "--views", "9",
                     "--method", "avg", "--out", str(tmp_path / "o")]) == 2

    def test_bad_config_exit_2(self, ambiguity_seq, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"wat": 1}')
        assert main(["fuse", "--in", str(ambiguity_seq), "--views", "2", "--method", "avg",
                     "--out", str(tmp_path / "o"), "--config", str(cfg)]) == 2


class TestValidateBundle:
    def test_good_bundle_passes(self, ambiguity_seq):
        assert main(["validate-bundle", str(ambiguity_seq / "bundles" / "frame_0000.scnb")]) == 0


@pytest.fixture(scope="module")
def slam_seq(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "seq"
    assert main(["synth", "--preset", "slam", "--seed", "1", "--frames", "6",
                 "--out", str(out)]) == 0
    return out


class TestSlamCli:

    def test_slam_run_and_outputs(self, slam_seq, tmp_path):
        out = tmp_path / "slam"
        assert main(["slam", "--in", str(slam_seq), "--out", str(out)]) == 0
        assert (out / "trajectory.txt").exists()
        assert (out / "map" / "cloud.ply").exists()
        header, row = (out / "metrics.csv").read_text().splitlines()
        assert header == "frames,keyframes,lost,rot_drift_deg,trans_drift_m"
        fields = row.split(",")
        assert fields[0] == "6" and fields[2] == "0"
        assert float(fields[3]) < 1.0

    def test_slam_byte_identical_reruns(self, slam_seq, tmp_path):
        outs = []
        for name in ("s1", "s2"):
            out = tmp_path / name
            assert main(["slam", "--in", str(slam_seq), "--out", str(out)]) == 0
            outs.append((out / "metrics.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_eval_against_gt(self, slam_seq, tmp_path, capsys):
        out = tmp_path / "slam"
        main(["slam", "--in", str(slam_seq), "--out", str(out)])
        capsys.readouterr()
        assert main(["eval", "--pred", str(out / "map"), "--gt", str(slam_seq)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "file,pix_acc,cls_acc,miou"
        assert len(lines) >= 2
        assert float(lines[1].split(",")[1]) > 0.9

    def test_sfm(self, slam_seq, tmp_path):
        out = tmp_path / "sfm"
        assert main(["sfm", "--in", str(slam_seq), "--frames", "0,1", "--out", str(out)]) == 0
        assert (out / "report.json").exists()
        assert (out / "kf_0001_depth.pfm").exists()
