import numpy as np
import pytest

from dd_schrodinger import cli
from dd_schrodinger.algorithms import RunConfig, run
from dd_schrodinger.errors import BadConfig, Diverged
from dd_schrodinger.subdomain import read_snapshot

SMALL = """
[domain]
x_l = -2.0
x_r = 2.0
y_b = -1.0
y_u = 1.0

[mesh]
dx = 0.25
dy = 0.25

[time]
T = 0.03
dt = 0.01

[decomposition]
N = 2

[transmission]
kind = "robin"
p = 15.0
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return str(path)


def test_run_writes_artifacts(small_cfg, tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["--config", small_cfg, "--subdomains", "4", "--out", str(out),
                     "--emit", "csv,svg", "--emit", "snapshots"])
    assert code == 0
    names = {p.name for p in out.iterdir()}
    assert {"summary.txt", "history.csv", "convergence.svg", "u_final.bin"} <= names
    assert not [n for n in names if n.startswith(".")]
    summary = (out / "summary.txt").read_text()
    for key in ("seed = 0", "tol = 1e-10", "N = 4", "method = dds-new", "p = 15"):
        assert key in summary
    field, dx, dy, t = read_snapshot(out / "u_final.bin")
    assert field.shape == (17, 9) and dx == 0.25 and t == pytest.approx(0.03)
    assert "iterations" in capsys.readouterr().out


def test_history_csv_round_trip(small_cfg, tmp_path):
    cfg = cli.build_run_config(cli._apply_overrides(cli.load_config(small_cfg),
                                                    cli._parser().parse_args([])))
    report = run(cfg)
    cli.emit_reports(report, tmp_path, ["csv"])
    back = cli.read_history_csv(tmp_path / "history.csv")
    assert [back[k] for k in sorted(back)] == report.histories
    lines = (tmp_path / "history.csv").read_text().splitlines()
    assert lines[0] == "step,iteration,residual"
    for hist in report.histories:
        assert all(h > 0 for h in hist[:-1])


def test_empty_history_is_header_only(small_cfg, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["--config", small_cfg, "--subdomains", "1", "--out", str(out)]) == 0
    assert (out / "history.csv").read_text() == "step,iteration,residual\n"


def test_nonconstant_potential_rejected(small_cfg, tmp_path, capsys):
    code = cli.main(["--config", small_cfg, "--method", "dds-new", "--potential", "x^2+y^2",
                     "--out", str(tmp_path)])
    assert code == 1
    assert "constant potential" in capsys.readouterr().err


def test_preconditioned_free_run_one_iteration(small_cfg, tmp_path):
    out = tmp_path / "pc"
    code = cli.main(["--config", small_cfg, "--potential", "0", "--preconditioned", "--solver", "gmres",
                     "--subdomains", "4", "--out", str(out)])
    assert code == 0
    hist = cli.read_history_csv(out / "history.csv")
    assert all(len(h) == 2 for h in hist.values())


def test_unconverged_and_diverged_exit_2(small_cfg, tmp_path, monkeypatch):
    assert cli.main(["--config", small_cfg, "--max-iter", "1", "--out", str(tmp_path)]) == 2

    def boom(cfg):
        raise Diverged("iterate norm exploded")

    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["--config", small_cfg, "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("text", ["[mesh]\ndx = 0.25\nbogus = 1\n", "[nonsense]\na = 1\n", "mesh = 3\n",
                                  "[mesh\n"])
def test_bad_config_files(tmp_path, text):
    path = tmp_path / "bad.toml"
    path.write_text(text)
    with pytest.raises(BadConfig):
        cli.load_config(str(path))
    assert cli.main(["--config", str(path), "--out", str(tmp_path)]) == 1


def test_bad_overrides(small_cfg, tmp_path):
    assert cli.main(["--config", small_cfg, "--dx", "0.3", "--out", str(tmp_path)]) == 1
    assert cli.main(["--config", small_cfg, "--emit", "pdf", "--out", str(tmp_path)]) == 1
    assert cli.main(["--config", "missing.toml"]) == 1


def test_spectrum_artifacts(small_cfg, tmp_path):
    out = tmp_path / "sp"
    code = cli.main(["--config", small_cfg, "--potential", "x^2", "--method", "dds-classical",
                     "--preconditioned", "--tc", "pade", "--m", "2", "--emit", "spectrum,svg",
                     "--out", str(out)])
    assert code == 0
    rows = (out / "spectrum.csv").read_text().splitlines()
    labels = {r.split(",")[0] for r in rows[1:]}
    assert labels == {"I-L", "P^-1(I-L)"}
    assert (out / "spectrum.svg").exists()


def test_presets_resolve_by_name():
    cfg = cli.load_config("coarse_free.toml")
    assert cfg["mesh"]["dx"] == 1 / 128 and cfg["transmission"]["p"] == 15.0
    harm = cli.build_run_config(cli.load_config("coarse_harmonic.toml"))
    assert harm.preconditioned and harm.spec.kind == "pade" and harm.n_steps == 1
    with pytest.warns(UserWarning, match="cluster-scale"):
        fine = cli.build_run_config(cli.load_config("fine_free.toml"))
    assert isinstance(fine, RunConfig) and fine.plan.N == 256


def test_svg_is_wellformed():
    import xml.etree.ElementTree as ET

    svg = cli._svg_plot([("a", np.arange(4), np.array([1.0, 1e-3, 1e-6, 1e-11]))], "t", "x", "y", logy=True)
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
