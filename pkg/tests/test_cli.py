import json

import numpy as np
import pytest

from rawburst.burst_io import NoiseParams, load_pgm16, load_rgb8, write_burst
from rawburst.cli import PipelineConfig, parse_config, run
from rawburst.synthbench import SynthSpec, synthesize_burst


@pytest.fixture(scope="module")
def burst_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("burst")
    burst, _ = synthesize_burst(SynthSpec(width=256, height=192, frames=4, seed=21))
    write_burst(burst, directory)
    return directory


class TestParseConfig:
    def test_defaults(self):
        cfg = parse_config(None, {})
        assert cfg.tau == 75.0
        assert cfg.s == 0.1
        assert cfg.tile_size == 16
        assert cfg.search_radius == 4
        assert cfg.norms == (2, 2, 2, 1)

    def test_file_then_flag_precedence(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("tau = 10\ns = 0.2\n")
        cfg = parse_config(path, {"tau": 20.0})
        assert cfg.tau == 20.0
        assert cfg.s == 0.2

    def test_negative_tau_rejected(self):
        with pytest.raises(ValueError):
            parse_config(None, {"tau": -1.0})

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("bogus = 1\n")
        with pytest.raises(ValueError, match="bogus"):
            parse_config(path, {})

    def test_norms_parse_and_validate(self):
        cfg = parse_config(None, {"norms": "1,1,2,2"})
        assert cfg.norms == (1, 1, 2, 2)
        with pytest.raises(ValueError):
            parse_config(None, {"norms": "3,2,2,1"})

    def test_comments_and_hyphens_in_file(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("# comment\nsearch-radius = 5\n")
        assert parse_config(path, {}).search_radius == 5


class TestRun:
    def test_full_produces_both_outputs(self, burst_dir, tmp_path):
        out = tmp_path / "out"
        assert run(["full", str(burst_dir), "-o", str(out)]) == 0
        merged = load_pgm16(out / "merged.pgm")
        assert merged.shape == (192, 256)
        final = load_rgb8(out / "final.png")
        assert final.shape == (192, 256, 3)
        assert (out / "run_config.txt").is_file()

    def test_unknown_flag_exits_2(self, burst_dir):
        assert run(["full", str(burst_dir), "--frobnicate"]) == 2

    def test_bad_value_exits_2(self, burst_dir, tmp_path):
        assert run(["full", str(burst_dir), "--tau", "-3", "-o", str(tmp_path)]) == 2

    def test_module_error_exits_1(self, tmp_path):
        assert run(["full", str(tmp_path / "missing"), "-o", str(tmp_path / "o")]) == 1

    def test_determinism_across_runs_and_threads(self, burst_dir, tmp_path):
        outputs = []
        for name, threads in (("a", "1"), ("b", "1"), ("c", "8")):
            out = tmp_path / name
            assert run(["full", str(burst_dir), "-o", str(out), "--threads", threads]) == 0
            outputs.append(((out / "merged.pgm").read_bytes(),
                            (out / "final.png").read_bytes()))
        assert outputs[0] == outputs[1] == outputs[2]

    def test_rerun_from_config_log(self, burst_dir, tmp_path):
        first = tmp_path / "first"
        assert run(["merge", str(burst_dir), "-o", str(first), "--tau", "30"]) == 0
        second = tmp_path / "second"
        assert run(["merge", str(burst_dir), "-o", str(second),
                    "--config", str(first / "run_config.txt")]) == 0
        assert (first / "merged.pgm").read_bytes() == (second / "merged.pgm").read_bytes()

    def test_ref_index_changes_anchor(self, burst_dir, tmp_path):
        out0 = tmp_path / "r0"
        out1 = tmp_path / "r1"
        assert run(["merge", str(burst_dir), "-o", str(out0), "--tau", "0"]) == 0
        assert run(["merge", str(burst_dir), "-o", str(out1), "--tau", "0",
                    "--ref-index", "1"]) == 0
        ref0 = load_pgm16(burst_dir / "frame_0.pgm")
        ref1 = load_pgm16(burst_dir / "frame_1.pgm")
        np.testing.assert_array_equal(load_pgm16(out0 / "merged.pgm"), ref0)
        np.testing.assert_array_equal(load_pgm16(out1 / "merged.pgm"), ref1)

    def test_finish_subcommand_minimal(self, burst_dir, tmp_path):
        out = tmp_path / "fin"
        assert run(["finish", str(burst_dir / "frame_0.pgm"),
                    "--meta", str(burst_dir / "burst.json"),
                    "-o", str(out), "--minimal"]) == 0
        assert load_rgb8(out / "final.png").shape == (192, 256, 3)

    def test_dump_intermediates(self, burst_dir, tmp_path):
        out = tmp_path / "dump"
        assert run(["merge", str(burst_dir), "-o", str(out),
                    "--dump-intermediates"]) == 0
        inter = out / "intermediates"
        pyramids = list(inter.glob("pyramid_f*_L*.pgm"))
        csvs = list(inter.glob("motion_alt*_L*.csv"))
        pngs = list(inter.glob("motion_alt*_L*.png"))
        assert len(pyramids) == 4 * 4
        assert len(csvs) == 3 * 4
        assert len(pngs) == 3 * 4
        header = csvs[0].read_text().splitlines()[0]
        assert header == "tile_x,tile_y,u,v"


class TestSynthbenchCommand:
    def test_report_and_sweep(self, tmp_path):
        out = tmp_path / "sb"
        assert run(["synthbench", "--n", "2", "--seed", "1", "--width", "128",
                    "--height", "96", "--shift-max", "4", "-o", str(out),
                    "--sweep-n", "2,3"]) == 0
        report = dict(
            line.split("=", 1)
            for line in (out / "synthbench_report.txt").read_text().splitlines()
        )
        assert set(report) == {"frames", "psnr_ref_db", "psnr_merged_db",
                               "gain_db", "alignment_accuracy"}
        sweep = (out / "synthbench_sweep.csv").read_text().splitlines()
        assert sweep[0].startswith("tau,s,frames")
        assert len(sweep) == 3
