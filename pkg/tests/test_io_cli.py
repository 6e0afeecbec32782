import csv
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from conftest import random_vector
from modalns.cli import run_cli
from modalns.config import ConfigError, load_config, parse_config
from modalns.experiments import Experiment
from modalns.fields import ModalVectorField
from modalns.files import (SnapshotError, encode_snapshot, fnv1a64, read_snapshot,
                           write_rows, write_snapshot)
from modalns.grid import make_grid
from modalns.solvers import Scheme

DATA = Path(__file__).parent / "data"

MINIMAL = """\
[grid]
nr = 16
nz = 16
rmax = 4.0
lz = 4.0
kmodes = 3
[solver]
dt = 0.002
tfinal = 0.01
[experiment]
which = odevity
eps_list = 0.04, 0.02, 0.01
output_dir = {out}
[data]
seed = 3
"""


def _cfg_text(out="out", **edits):
    text = MINIMAL.format(out=out)
    for old, new in edits.items():
        text = text.replace(old, new)
    return text


# --- config ---------------------------------------------------------------

def test_minimal_config_gets_defaults():
    cfg = parse_config(_cfg_text())
    assert cfg.solver.save_every == 10
    assert cfg.solver.scheme is Scheme.IMEX2
    assert cfg.which is Experiment.ODEVITY
    assert cfg.eps_list == (0.04, 0.02, 0.01)
    assert cfg.seed == 3 and cfg.solver.K == 3 and cfg.solver.n_steps == 5


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="nrr"):
        parse_config(_cfg_text(**{"nr = 16": "nrr = 16"}))


def test_missing_key_is_named():
    with pytest.raises(ConfigError, match="kmodes"):
        parse_config(_cfg_text(**{"kmodes = 3\n": ""}))


def test_unparsable_number_is_named():
    with pytest.raises(ConfigError, match="dt"):
        parse_config(_cfg_text(**{"dt = 0.002": "dt = fast"}))


def test_increasing_eps_is_rejected():
    with pytest.raises(ConfigError, match="strictly decreasing"):
        parse_config(_cfg_text(**{"0.04, 0.02, 0.01": "0.01,0.02"}))


def test_unknown_section_and_bad_enum():
    with pytest.raises(ConfigError, match="extra"):
        parse_config(_cfg_text() + "[extra]\nx = 1\n")
    with pytest.raises(ConfigError, match="which"):
        parse_config(_cfg_text(**{"which = odevity": "which = everything"}))
    with pytest.raises(ConfigError):
        parse_config(_cfg_text(**{"nz = 16": "nz = 12"}))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


def test_shipped_desk_config_loads():
    cfg = load_config(Path(__file__).parents[1] / "configs" / "desk.cfg")
    assert cfg.solver.grid.Nr == 48 and cfg.solver.K == 6 and cfg.solver.n_steps == 250


# --- snapshots ------------------------------------------------------------

def test_snapshot_round_trip_is_bitwise(rng, tmp_path):
    g = make_grid(12, 16, 3.0, 2.5)
    u = random_vector(rng, g, 4)
    write_snapshot(u, 0.375, tmp_path / "a.snap")
    back = read_snapshot(tmp_path / "a.snap")
    assert back.time == 0.375 and back.u.grid == g
    assert back.u.cos.tobytes() == u.cos.tobytes()
    assert back.u.sin.tobytes() == u.sin.tobytes()


def test_truncated_snapshot(rng, tmp_path):
    data = encode_snapshot(random_vector(rng, make_grid(8, 8, 1.0, 1.0), 1), 0.0)
    with pytest.raises(SnapshotError, match="dimension mismatch"):
        (tmp_path / "t.snap").write_bytes(data[:-100])
        read_snapshot(tmp_path / "t.snap")
    with pytest.raises(SnapshotError):
        (tmp_path / "t.snap").write_bytes(data[:20])
        read_snapshot(tmp_path / "t.snap")


def test_flipped_payload_byte(rng, tmp_path):
    data = bytearray(encode_snapshot(random_vector(rng, make_grid(8, 8, 1.0, 1.0), 1), 0.0))
    data[200] ^= 0x01
    with pytest.raises(SnapshotError, match="checksum"):
        (tmp_path / "f.snap").write_bytes(bytes(data))
        read_snapshot(tmp_path / "f.snap")


def test_bad_magic_and_version(rng, tmp_path):
    data = encode_snapshot(ModalVectorField.zeros(make_grid(8, 8, 1.0, 1.0), 1), 0.0)
    with pytest.raises(SnapshotError, match="magic"):
        (tmp_path / "m.snap").write_bytes(b"XXXX" + data[4:])
        read_snapshot(tmp_path / "m.snap")
    with pytest.raises(SnapshotError, match="version"):
        (tmp_path / "v.snap").write_bytes(data[:4] + struct.pack("<I", 9) + data[8:])
        read_snapshot(tmp_path / "v.snap")


def test_fnv1a_reference_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def _golden_field():
    g = make_grid(8, 8, 2.0, 4.0)
    vals = (np.arange(3 * 2 * 64, dtype=float) / 7.0 - 11.0).reshape(3, 2, 8, 8)
    sin = -0.5 * vals
    sin[:, 0] = 0.0
    return ModalVectorField(g, vals, sin)


def test_golden_file_cross_read():
    raw = (DATA / "golden.snap").read_bytes()
    assert raw[:4] == b"MNS1"
    assert struct.unpack_from("<IIII", raw, 4) == (1, 8, 8, 1)
    assert struct.unpack_from("<Q", raw, len(raw) - 8)[0] == 0x444196E09074ECE9
    snap = read_snapshot(DATA / "golden.snap")
    ref = _golden_field()
    assert snap.time == 0.125
    assert snap.u.cos.tobytes() == ref.cos.tobytes()
    assert snap.u.sin.tobytes() == ref.sin.tobytes()
    assert encode_snapshot(ref, 0.125) == raw


def test_csv_is_locale_independent(tmp_path):
    write_rows(tmp_path / "x.csv", ("a", "b", "c"), [(1, 0.1, 2.5e-17), ("s", float("nan"), 3)])
    text = (tmp_path / "x.csv").read_bytes().decode()
    assert text == "a,b,c\n1,0.1,2.5e-17\ns,nan,3\n"


# --- command line ---------------------------------------------------------

@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(_cfg_text(out=str(tmp_path / "out")))
    return p


def test_unknown_subcommand(capsys):
    assert run_cli(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_config_flag():
    assert run_cli(["simulate"]) == 1


def test_check_config(cfg_file, tmp_path):
    assert run_cli(["check-config", "--config", str(cfg_file)]) == 0
    bad = tmp_path / "bad.cfg"
    bad.write_text(_cfg_text(**{"nr = 16": "nrr = 16"}))
    assert run_cli(["check-config", "--config", str(bad)]) == 1


def test_compare_same_snapshot(capsys):
    path = str(DATA / "golden.snap")
    assert run_cli(["compare", path, path]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "l2,h1dot,h1axi,linf,divmax"
    assert [float(x) for x in lines[1].split(",")] == [0.0] * 5


def test_compare_corrupt_snapshot(tmp_path):
    bad = tmp_path / "bad.snap"
    bad.write_bytes(b"MNS1" + bytes(60))
    assert run_cli(["compare", str(bad), str(bad)]) == 1


def test_odevity_end_to_end(cfg_file, tmp_path):
    assert run_cli(["experiment", "--config", str(cfg_file)]) == 0
    out = tmp_path / "out" / "odevity"
    with open(out / "summary.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["eps", "norm", "slope", "r2", "pass"]
    assert [r[-1] for r in rows[1:]] == ["1", "1", "1"]
    with open(out / "full_eps0.04.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["time", "l2", "h1dot", "h1axi", "linf", "divmax", "energy_defect",
                      "parity_violation"]
    assert read_snapshot(out / "full_eps0.04.snap").u.K == 3


def test_failed_acceptance_exits_2(cfg_file, monkeypatch):
    from modalns import experiments

    def failing(cfg):
        res = experiments.ExperimentResult("odevity")
        res.check("forced", 1.0, False, "<= 0")
        return res

    monkeypatch.setitem(experiments.RUNNERS, Experiment.ODEVITY, failing)
    assert run_cli(["experiment", "--config", str(cfg_file)]) == 2


def test_workers_flag_validation(cfg_file):
    assert run_cli(["experiment", "--config", str(cfg_file), "--workers", "0"]) == 1


def test_single_runs(cfg_file, tmp_path):
    for cmd, name in (("simulate", "final.snap"), ("axisym", "final.snap"),
                      ("hierarchy", "profile_2.snap")):
        assert run_cli([cmd, "--config", str(cfg_file)]) == 0
        assert (tmp_path / "out" / cmd / name).exists()
        assert (tmp_path / "out" / cmd / "series.csv").exists()


def test_module_entry_point(cfg_file):
    proc = subprocess.run([sys.executable, "-m", "modalns", "check-config", "--config",
                           str(cfg_file)], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("ok:")
