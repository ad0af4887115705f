import json

import numpy as np
import pytest

from mdc_dstm import cli, constellation as cons


def run(capsys, *argv):
    rc = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_parse_snr():
    assert cli.parse_snr("0:2:6") == [0, 2, 4, 6]
    assert cli.parse_snr("10, 15") == [10, 15]
    assert cli.parse_snr("0:0.5:1") == [0, 0.5, 1]
    with pytest.raises(cli.UsageError):
        cli.parse_snr("0:0:4")


def test_code_command(capsys, tmp_path):
    rc, out, _ = run(capsys, "code", "--ntx", 8, "--out", tmp_path / "c8.txt")
    assert rc == 0 and "n_t=8" in out and "K=6" in out
    assert (tmp_path / "c8.txt").read_text().startswith("mdc_qostbc 8 8 6")
    rc, _, err = run(capsys, "code", "--ntx", 6)
    assert rc == 2 and "6 antennas" in err


def test_design_m4(capsys, tmp_path):
    out_file = tmp_path / "m4.txt"
    rc, out, _ = run(capsys, "design", "--m", 4, "--nu", 0, "--out", out_file)
    assert rc == 0 and "0.577350" in out and "1.290994" in out
    pts = cons.read_constellation(out_file).points
    expect = [0.57735, -0.57735, 1.29099j, -1.29099j]
    np.testing.assert_allclose(np.sort_complex(pts), np.sort_complex(expect), atol=1e-5)
    assert out_file.with_suffix(".png").stat().st_size > 0


def test_design_infeasible(capsys):
    rc, _, err = run(capsys, "design", "--m", 4, "--nu", 2.0)
    assert rc == 2 and "infeasible" in err
    rc, _, _ = run(capsys, "design", "--m", 5)
    assert rc == 2


def test_bad_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["design", "--m", "four"])
    assert exc.value.code == 2
    rc, _, err = run(capsys, "bler", "--scheme", "ostbc", "--ntx", 8, "--snr", "10")
    assert rc == 2 and "unsupported combination" in err


def test_gain_sweep(capsys, tmp_path):
    out_file = tmp_path / "gs.csv"
    rc, out, _ = run(capsys, "gain-sweep", "--m", 4, "--nu-grid", "0,0.1,0.2,0.3",
                     "--starts", 4, "--out", out_file)
    assert rc == 0
    rows = out_file.read_text().splitlines()
    assert rows[0] == "m,nu,n_t,objective,coding_gain,radii"
    gains = [float(r.split(",")[4]) for r in rows[1:]]
    assert len(gains) == 4 and all(a >= b for a, b in zip(gains, gains[1:]))
    dat = (tmp_path / "gs_m4.dat").read_text().splitlines()
    assert dat[0] == "nu coding_gain" and len(dat) == 5
    assert (tmp_path / "gs.png").exists()


def test_gain_sweep_single_point_matches_design(capsys, tmp_path):
    run(capsys, "gain-sweep", "--m", 4, "--nu-grid", "0", "--starts", 4, "--out", tmp_path / "g.csv")
    obj = float((tmp_path / "g.csv").read_text().splitlines()[1].split(",")[3])
    _, out, _ = run(capsys, "design", "--m", 4, "--starts", 4)
    assert f"objective={obj:.12g}" in out


def _bler(capsys, path, *extra):
    return run(capsys, "bler", "--snr", "6,10", "--min-errors", 20, "--max-frames", 400,
               "--seed", 3, "--out", path, *extra)


def test_bler_outputs_and_determinism(capsys, tmp_path):
    a, b = tmp_path / "a" / "bler.csv", tmp_path / "b" / "bler.csv"
    assert _bler(capsys, a, "--workers", 1)[0] == 0
    assert _bler(capsys, b, "--workers", 2)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == ",".join(cli.BLER_FIELDS)
    assert lines[1].startswith("mdc_qostbc_dstm,4,1,M1,0,6,")
    man = json.loads((a.parent / "bler.manifest-00000.json").read_text())
    assert man["config"]["master_seed"] == 3 and man["csv_rows"] == [0, 2]
    assert man["spectral_efficiency"]["label"] == "2 bps/Hz (1.94)"
    assert (a.parent / "bler_M1.dat").read_text().startswith("snr_db bler\n")
    assert (a.parent / "bler.png").exists()


def test_bler_appends_rows(capsys, tmp_path):
    out_file = tmp_path / "bler.csv"
    _bler(capsys, out_file)
    _bler(capsys, out_file, "--genie")
    rows = cli.read_bler_csv(out_file)
    assert [r["genie"] for r in rows] == ["0", "0", "1", "1"]
    man = json.loads((tmp_path / "bler.manifest-00002.json").read_text())
    assert man["csv_rows"] == [2, 4] and man["config"]["genie"] is True


def test_bler_rejects_qam_on_mdc(capsys, tmp_path):
    rc, _, err = run(capsys, "bler", "--constellation", "16QAM", "--snr", "10",
                     "--out", tmp_path / "x.csv")
    assert rc == 2 and "beta" in err


def test_config_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# sweep\nscheme = ostbc\nconstellation = 16QAM\nsnr = 10:5:20\nseed = 4\n")
    args = cli.build_parser().parse_args(["bler", "--config", str(conf), "--seed", "9"])
    cfg = cli._bler_config(args)
    assert cfg.scheme == "ostbc_dstm" and cfg.constellation == "16QAM"
    assert cfg.snr_db == (10.0, 15.0, 20.0) and cfg.master_seed == 9
    conf.write_text("nonsense line\n")
    with pytest.raises(cli.UsageError):
        cli._bler_config(cli.build_parser().parse_args(["bler", "--config", str(conf)]))


def test_verify_default_passes(capsys):
    rc, out, _ = run(capsys, "verify")
    assert rc == 0 and "FAIL" not in out


def test_verify_flags_scaled_file(capsys, tmp_path, m1):
    bad = tmp_path / "scaled.txt"
    cons.write_constellation(m1.scaled(1.1), bad)
    rc, out, _ = run(capsys, "verify", "--constellation-file", bad)
    assert rc == 1
    line = next(ln for ln in out.splitlines() if ln.startswith(f"criteria {bad}"))
    assert "FAIL" in line and "power: residual 0.21" in line


def test_verify_flags_qpsk(capsys, tmp_path):
    bad = tmp_path / "qpsk.txt"
    cons.write_constellation(cons.psk(4, np.pi / 4), bad)
    rc, out, _ = run(capsys, "verify", "--constellation-file", bad)
    assert rc == 1
    line = next(ln for ln in out.splitlines() if ln.startswith("quasi-unitary"))
    assert "FAIL" in line and "beta =" in line
