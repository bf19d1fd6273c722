import csv

import numpy as np
import pytest

from conftest import adaptive_run
from pwdg import cli
from pwdg.driver import (CSV_COLUMNS, ConfigError, ConvergenceRow, RunConfig, export_run,
                         parse_config, read_convergence, run_adaptive, run_history)
from pwdg.mesh import EdgeTag, circumscribed_diameters, read_mesh
from pwdg.solver import SolverError

SMALL = dict(subdivisions=2, max_iter=2, kappa=4.0, p=5)

SAMPLE = """
# small smooth run
domain = LShape
solution = bessel
xi = 2
kappa = 4      # wavenumber
p = 5
subdivisions = 2
max_iter = 2
"""


def test_parse_config():
    config = parse_config(SAMPLE)
    assert config == RunConfig(**SMALL)
    assert config.weight_exponent == pytest.approx(1 / 6)
    assert parse_config("domain = UnitSquare").weight_exponent == 0.5
    assert parse_config(SAMPLE, p=6, theta=None).p == 6
    assert parse_config("s = auto").s is None


@pytest.mark.parametrize("text", [
    "kappa = 3\nkapa = 4",
    "kappa = -1",
    "p = seven",
    "theta = 1.5",
    "flux = upwind",
    "domain = Circle",
    "kappa = 1\nkappa = 2",
    "just words",
    "flux = constant\ndelta = 1.0",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_max_iter_zero_single_row():
    rows = run_adaptive(RunConfig(**{**SMALL, "max_iter": 0}))
    assert len(rows) == 1
    assert rows[0].iter == 0
    assert rows[0].eta_scaled == pytest.approx(rows[0].rel_l2_error)


def test_row_invariants():
    history = run_history(RunConfig(**SMALL))
    for res in history:
        row = res.row
        assert row.dofs == row.elements * 5 == res.solution.space.ndof
        assert row.efficiency > 0
        assert 0 < row.rcond < 1
    for prev, nxt in zip(history, history[1:]):
        assert prev.marked
        assert nxt.row.dofs > prev.row.dofs


def test_dof_cap_stops_loop():
    rows = run_adaptive(RunConfig(**{**SMALL, "max_iter": 8, "dof_cap": 400}))
    assert rows[-1].dofs <= 400
    assert len(rows) < 9


def test_mixed_boundary_rule():
    history = run_history(RunConfig(**{**SMALL, "max_iter": 0, "boundary": "mixed"}))
    mesh = history[0].mesh
    tags = mesh.edge_tags
    mids = mesh.vertices[mesh.edges].mean(axis=1)
    left = np.isclose(mids[:, 0], mesh.vertices[:, 0].min())
    assert np.all(tags[left & (tags != EdgeTag.INTERIOR)] == EdgeTag.DIRICHLET)
    assert np.all(tags[~left & (tags != EdgeTag.INTERIOR)] == EdgeTag.IMPEDANCE)


def test_export_empty(tmp_path):
    export_run([], [], tmp_path)
    assert (tmp_path / "convergence.csv").read_text().strip() == ",".join(CSV_COLUMNS)
    assert read_convergence(tmp_path / "convergence.csv") == []


def test_export_three_iterations(tmp_path):
    history = run_history(RunConfig(**SMALL))
    assert len(history) == 3
    export_run([r.row for r in history], [(r.row.iter, r.mesh, r.solution) for r in history], tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["convergence.csv"] + [f"mesh_{i}.txt" for i in range(3)] + \
        [f"solution_{i}.txt" for i in range(3)]
    mesh = read_mesh(tmp_path / "mesh_2.txt")
    assert np.array_equal(mesh.vertices, history[2].mesh.vertices)
    lines = (tmp_path / "solution_1.txt").read_text().splitlines()
    assert len(lines) == history[1].row.dofs
    e, j, re, im = lines[7].split()
    assert complex(float(re), float(im)) == history[1].solution[int(e), int(j)]


def test_csv_round_trip_exact(tmp_path, rng):
    rows = [ConvergenceRow(i, int(rng.integers(1, 10 ** 6)), int(rng.integers(1, 10 ** 5)),
                           *(float(x) for x in rng.lognormal(0, 8, size=7)))
            for i in range(20)]
    rows.append(ConvergenceRow(20, 1, 1, 0.1, 1e-300, 5e-324, np.nextafter(1.0, 2.0), np.inf, 0.0, 1 / 3))
    export_run(rows, [], tmp_path)
    assert read_convergence(tmp_path / "convergence.csv") == rows


def test_streamed_csv_and_determinism(tmp_path):
    config = RunConfig(**SMALL)
    run_adaptive(config, tmp_path / "a")
    run_adaptive(config, tmp_path / "b")
    a = read_convergence(tmp_path / "a" / "convergence.csv")
    b = read_convergence(tmp_path / "b" / "convergence.csv")
    strip = lambda rows: [(r.iter, r.dofs, r.elements, r.h, r.rel_l2_error, r.eta, r.rcond) for r in rows]
    assert strip(a) == strip(b)
    for i in range(3):
        assert (tmp_path / "a" / f"solution_{i}.txt").read_bytes() == \
            (tmp_path / "b" / f"solution_{i}.txt").read_bytes()


def test_solver_failure_keeps_partial_csv(tmp_path, monkeypatch):
    import pwdg.driver as driver
    real = driver.solve
    calls = []

    def flaky(system):
        calls.append(1)
        if len(calls) == 2:
            raise SolverError("forced", rcond=0.0)
        return real(system)

    monkeypatch.setattr(driver, "solve", flaky)
    with pytest.raises(SolverError):
        run_adaptive(RunConfig(**SMALL), tmp_path)
    with open(tmp_path / "convergence.csv") as fh:
        assert len(list(csv.reader(fh))) == 2


def write_config(tmp_path, text=SAMPLE):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


def test_cli_success(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", write_config(tmp_path), "--out", str(out), "--max-iter", "1", "--p", "4"])
    assert code == 0
    rows = read_convergence(out / "convergence.csv")
    assert len(rows) == 2 and rows[0].dofs == rows[0].elements * 4
    assert "2 iterations" in capsys.readouterr().out


def test_cli_config_error(tmp_path):
    assert cli.main(["run", write_config(tmp_path, "kapa = 3")]) == 1
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == 1
    assert cli.main(["run", write_config(tmp_path), "--theta", "2"]) == 1


def test_cli_solver_failure(tmp_path, monkeypatch):
    import pwdg.driver as driver

    def broken(system):
        raise SolverError("forced", rcond=0.0)

    monkeypatch.setattr(driver, "solve", broken)
    assert cli.main(["run", write_config(tmp_path), "--out", str(tmp_path / "o")]) == 2
    assert (tmp_path / "o" / "convergence.csv").read_text().strip() == ",".join(CSV_COLUMNS)


def diameter_ratio(mesh):
    d = circumscribed_diameters(mesh)
    return d.max() / d.min()


def test_smooth_run_refines_near_uniformly():
    history, _ = adaptive_run(xi=2.0)
    assert len(history) == 13
    growth = diameter_ratio(history[-1].mesh) / diameter_ratio(history[0].mesh)
    assert growth <= 4.0


def test_smooth_run_indicator_dominates():
    history, _ = adaptive_run(xi=2.0)
    assert all(r.row.eta_scaled >= r.row.rel_l2_error for r in history[1:])


def test_singular_run_refines_at_corner():
    history, _ = adaptive_run(xi=2 / 3)

    def minima(mesh):
        d = circumscribed_diameters(mesh)
        near = np.hypot(*mesh.centroids.T) <= 0.1
        return d[near].min(), d[~near].min()

    (c0, o0), (c1, o1) = minima(history[0].mesh), minima(history[-1].mesh)
    assert c0 / c1 >= 4.0 * (o0 / o1)
