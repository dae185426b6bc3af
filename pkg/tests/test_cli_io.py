import numpy as np
import pytest

from composite_membrane.analysis import extract_free_boundary
from composite_membrane.cli_io import (
    EXIT_CONFIG,
    EXIT_INVARIANT,
    ConfigError,
    RunConfig,
    free_boundary_csv_text,
    main,
    mask_pgm_text,
    parse_kv,
    read_free_boundary_csv,
    read_mask_pgm,
    run_solve,
    run_sweep,
    write_mask_pgm,
)
from composite_membrane.geometry import DomainSpec, measure, rasterize
from composite_membrane.optimizer import Configuration, multistart

DISK_CONF = """\
domain.type = disk
domain.radius = 1
grid.h = {h}
problem.alpha = 10
problem.area_fraction = 0.5
optimizer.restarts = 3
optimizer.seed = 5
output.dir = out
checks = {checks}
"""


def write_conf(tmp_path, h=0.0625, checks="bounds, nesting, descent, fixed_point, annular, free_boundary",
               extra=""):
    p = tmp_path / "run.conf"
    p.write_text(DISK_CONF.format(h=h, checks=checks) + extra)
    return p


def test_parse_kv():
    kv = parse_kv("# comment\na.b = 1\n\nc = x y  # trailing\n")
    assert kv == {"a.b": "1", "c": "x y"}
    with pytest.raises(ConfigError):
        parse_kv("a = 1\na = 2\n")
    with pytest.raises(ConfigError):
        parse_kv("novalue\n")


def test_config_from_file(tmp_path):
    cfg = RunConfig.from_file(write_conf(tmp_path))
    assert cfg.domain == DomainSpec.disk(1.0)
    assert cfg.h == 0.0625 and cfg.restarts == 3 and cfg.seed == 5
    assert cfg.output_dir == tmp_path / "out"
    assert "annular" in cfg.checks


@pytest.mark.parametrize("extra,match", [
    ("bogus.key = 1\n", "unknown keys"),
    ("sweep.fraction = 0.5 1.0\n", "degenerate"),
    ("sweep.alpha =\n", "empty sweep grid"),
])
def test_config_rejects(tmp_path, extra, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_file(write_conf(tmp_path, extra=extra))


@pytest.mark.parametrize("kw", [dict(area_fraction=0.0), dict(area_fraction=1.0), dict(h=0.0),
                                dict(restarts=0), dict(alpha=-1.0), dict(checks=("nope",))])
def test_config_invariants(kw):
    base = dict(domain=DomainSpec.disk(1), h=0.1)
    base.update(kw)
    with pytest.raises(ConfigError):
        RunConfig(**base)


def test_degenerate_fraction_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.conf"
    p.write_text(DISK_CONF.format(h=0.0625, checks="bounds").replace("area_fraction = 0.5", "area_fraction = 0"))
    assert main(["solve", "--config", str(p)]) == EXIT_CONFIG
    assert not (tmp_path / "out").exists()
    assert "degenerate area fraction" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "none.conf")]) == EXIT_CONFIG


def test_pgm_two_by_two():
    d = rasterize(DomainSpec.rectangle(3, 3), 1.0)
    assert d.n_cells == 4
    text = mask_pgm_text(Configuration.from_cells(d, [0, 3], 0.5), d)
    lines = text.splitlines()
    assert lines[0] == "P2"
    assert lines[1] == "# h=1 t=0.5 A=2"
    body = lines[5:]
    assert body[0] == "0 0 0 0" and body[-1] == "0 0 0 0"
    assert body[1] == "0 255 128 0"
    assert body[2] == "0 128 255 0"


def test_pgm_roundtrip(tmp_path):
    d = rasterize(DomainSpec.dumbbell(0.2), 1 / 8)
    cfg = Configuration.from_cells(d, np.arange(0, d.n_cells, 3), 0.123456789012345678)
    p = tmp_path / "m.pgm"
    write_mask_pgm(cfg, d, p)
    back = read_mask_pgm(p, d)
    assert back == cfg and back.t == cfg.t


def test_free_boundary_csv_roundtrip(tmp_path):
    d = rasterize(DomainSpec.disk(1), 1 / 16)
    res = multistart(d, 10.0, 0.5 * measure(d), n_restarts=1)
    fb = extract_free_boundary(res, d)
    p = tmp_path / "fb.csv"
    p.write_text(free_boundary_csv_text(fb))
    back = read_free_boundary_csv(p)
    assert len(back) == len(fb.segments)
    for a, b in zip(back, fb.segments):
        np.testing.assert_array_equal(a, b)


def strip_wall_time(text):
    return [ln for ln in text.splitlines() if not ln.startswith("wall_time")]


def test_solve_writes_artifacts_and_is_deterministic(tmp_path):
    conf = write_conf(tmp_path)
    cfg = RunConfig.from_file(conf)
    rep = run_solve(cfg)
    assert rep.status == 0, rep.failed
    out = cfg.output_dir
    first = {f: (out / f).read_text() for f in ("mask.pgm", "u.csv", "free_boundary.csv", "report.txt")}
    assert first["u.csv"].splitlines()[0] == "cell_x,cell_y,u"
    assert first["free_boundary.csv"].splitlines()[0] == "segment_id,vertex_id,x,y,grad_mag,flagged"
    assert "check.annular.status = pass" in first["report.txt"]
    assert main(["solve", "--config", str(conf)]) == 0
    for name, text in first.items():
        again = (out / name).read_text()
        if name == "report.txt":
            assert strip_wall_time(again) == strip_wall_time(text)
        else:
            assert again == text
    assert not list(out.glob(".*"))  # no temp files left behind


def test_seed_and_out_override(tmp_path):
    conf = write_conf(tmp_path)
    assert main(["solve", "--config", str(conf), "--seed", "9", "--out", str(tmp_path / "o2")]) == 0
    assert "seed = 9" in (tmp_path / "o2" / "report.txt").read_text()


def test_verify(tmp_path):
    conf = write_conf(tmp_path)
    assert main(["verify", "--config", str(conf)]) == EXIT_CONFIG  # nothing solved yet
    assert main(["solve", "--config", str(conf)]) == 0
    assert main(["verify", "--config", str(conf)]) == 0
    assert "check.fixed_point.status = pass" in (tmp_path / "out" / "verify.txt").read_text()


def test_verify_flags_tampered_mask(tmp_path):
    conf = write_conf(tmp_path)
    assert main(["solve", "--config", str(conf)]) == 0
    mask = tmp_path / "out" / "mask.pgm"
    # swap D and its complement inside the domain
    text = mask.read_text().replace("255", "X").replace("128", "255").replace("X", "128")
    mask.write_text(text.replace("P2\n# h", "P2\n# h", 1))
    assert main(["verify", "--config", str(conf)]) == EXIT_INVARIANT
    report = (tmp_path / "out" / "verify.txt").read_text()
    assert "status = 1" in report


def test_sweep_sorted_and_reduces_to_solve(tmp_path):
    conf = write_conf(tmp_path, h=0.125, checks="bounds",
                      extra="sweep.alpha = 10 2\nsweep.fraction = 0.6 0.5\n")
    cfg = RunConfig.from_file(conf)
    rows = run_sweep(cfg, threads=1)
    assert [(r["alpha"], r["fraction"]) for r in rows] == [(2, 0.5), (2, 0.6), (10, 0.5), (10, 0.6)]
    assert all(r["status"] == "ok" for r in rows)
    solo = run_solve(RunConfig.from_file(write_conf(tmp_path, h=0.125, checks="bounds")))
    assert rows[2]["Lambda"] == solo.values["Lambda"]
    lines = (cfg.output_dir / "sweep.csv").read_text().splitlines()
    assert lines[0] == "alpha,fraction,Lambda,dominant_N,beta_estimate,converged,status"
    assert len(lines) == 5


def test_sweep_parallel_matches_serial(tmp_path):
    conf = write_conf(tmp_path, h=0.125, checks="bounds", extra="sweep.alpha = 1 5\n")
    cfg = RunConfig.from_file(conf)
    assert run_sweep(cfg, threads=2) == run_sweep(cfg, threads=1)


def test_alphabar_cli(tmp_path, capsys):
    p = tmp_path / "ab.conf"
    p.write_text("domain.type = rectangle\ndomain.width = 4\ndomain.height = 4\ngrid.h = 1\n"
                 "problem.area_fraction = 0.3333333333333333\noptimizer.restarts = 8\n"
                 "tolerance.alpha = 1e-9\noutput.dir = out\n")
    assert main(["alphabar", "--config", str(p)]) == 0
    out = (tmp_path / "out" / "alphabar.txt").read_text()
    vals = dict(ln.split(" = ") for ln in out.splitlines())
    assert abs(float(vals["defect"])) <= 1e-9


def test_bad_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MEMBRANE_THREADS", "zero")
    assert main(["solve", "--config", str(write_conf(tmp_path))]) == EXIT_CONFIG
