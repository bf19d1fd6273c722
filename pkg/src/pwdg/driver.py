"""Adaptive SOLVE-ESTIMATE-MARK-REFINE loop, run configuration and output."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterator

from .assembly import FluxParams, FluxStrategy, ProblemData, assemble
from .estimator import doerfler_mark, eta_dg, eta_weighted
from .exact import Bessel, PlaneWave, Transmission, boundary_data, relative_l2_error
from .mesh import Domain, EdgeTag, Mesh, dump_mesh, format_float, make_initial_mesh, refine_leb, uniform_refine
from .solver import Solution, solve

log = logging.getLogger(__name__)

CSV_COLUMNS = ("iter", "dofs", "elements", "h", "rel_l2_error", "eta",
               "eta_scaled", "efficiency", "rcond", "seconds")


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass(frozen=True)
class RunConfig:
    domain: str = "LShape"
    solution: str = "bessel"          # bessel | transmission | planewave
    xi: float = 2.0
    kappa: float = 12.0
    n1: float = 2.0
    n2: float = 1.0
    theta_i_deg: float = 29.0
    direction_deg: float = 0.0        # plane-wave solution only
    boundary: str = "dirichlet"       # dirichlet | impedance | mixed
    p: int = 7
    flux: str = "uwvf"                # uwvf | mesh | constant
    a: float = 1.0
    b: float = 1.0
    d: float = 0.5
    alpha: float = 0.5
    beta: float = 0.5
    delta: float = 0.5
    indicator: str = "weighted"       # dg | weighted
    s: float | None = None            # None: 1/6 on the L-shape, 1/2 otherwise
    theta: float = 0.3
    max_iter: int = 12
    subdivisions: int = 10
    pre_refine: int = 0
    out: str | None = None
    quad_degree: int = 10
    dof_cap: int = 200_000

    def __post_init__(self):
        try:
            Domain.parse(self.domain)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        checks = [
            (self.solution in ("bessel", "transmission", "planewave"), "solution"),
            (self.boundary in ("dirichlet", "impedance", "mixed"), "boundary"),
            (self.flux in ("mesh", "constant", "uwvf"), "flux"),
            (self.indicator in ("dg", "weighted"), "indicator"),
            (self.kappa > 0, "kappa"),
            (self.xi >= 0, "xi"),
            (self.n1 > 0 and self.n2 > 0, "n1/n2"),
            (self.p >= 3, "p"),
            (0 < self.theta <= 1, "theta"),
            (self.max_iter >= 0, "max_iter"),
            (self.subdivisions >= 1, "subdivisions"),
            (self.pre_refine >= 0, "pre_refine"),
            (self.quad_degree >= 2, "quad_degree"),
            (self.dof_cap >= 1, "dof_cap"),
            (self.s is None or 0 <= self.s <= 0.5, "s"),
        ]
        for ok, name in checks:
            if not ok:
                raise ConfigError(f"invalid value for {name}")
        try:
            self.flux_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def weight_exponent(self) -> float:
        if self.s is not None:
            return float(self.s)
        return 1.0 / 6.0 if Domain.parse(self.domain) is Domain.LSHAPE else 0.5

    def flux_params(self) -> FluxParams:
        if self.flux == "uwvf":
            return FluxParams.uwvf()
        if self.flux == "constant":
            return FluxParams(FluxStrategy.CONSTANT, self.alpha, self.beta, self.delta)
        return FluxParams.mesh_dependent(self.a, self.b, self.d)

    def exact(self):
        if self.solution == "bessel":
            return Bessel(self.xi, self.kappa)
        if self.solution == "transmission":
            return Transmission(self.n1, self.n2, self.kappa, math.radians(self.theta_i_deg))
        t = math.radians(self.direction_deg)
        return PlaneWave((math.cos(t), math.sin(t)), self.kappa)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _convert(name: str, raw: str):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if name not in kinds:
        raise ConfigError(f"unknown key {name!r}")
    kind = str(kinds[name])
    value = raw.strip()
    try:
        if kind == "int":
            return int(value)
        if kind.startswith("float"):
            if kind.endswith("None") and value.lower() in ("", "none", "auto"):
                return None
            return float(value)
        if kind.startswith("str") and kind.endswith("None") and value.lower() in ("", "none"):
            return None
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return value if name in ("domain", "out") else value.lower()


def parse_config(text: str, **overrides) -> RunConfig:
    """Parse ``key = value`` lines (``#`` starts a comment)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    for key, value in overrides.items():
        if value is not None:
            if key not in {f.name for f in fields(RunConfig)}:
                raise ConfigError(f"unknown key {key!r}")
            values[key] = value
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, **overrides) -> RunConfig:
    return parse_config(Path(path).read_text(), **overrides)


@dataclass(frozen=True)
class ConvergenceRow:
    iter: int
    dofs: int
    elements: int
    h: float
    rel_l2_error: float
    eta: float
    eta_scaled: float
    efficiency: float
    rcond: float
    seconds: float

    def csv_fields(self) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            out.append(str(v) if isinstance(v, int) else format_float(v))
        return out


@dataclass(frozen=True, eq=False)
class IterationResult:
    row: ConvergenceRow
    mesh: Mesh
    solution: Solution
    marked: frozenset


# ---------------------------------------------------------------------- setup
def _boundary_rule(config: RunConfig, mesh: Mesh):
    if config.boundary == "dirichlet":
        return EdgeTag.DIRICHLET
    if config.boundary == "impedance":
        return EdgeTag.IMPEDANCE
    xmin = float(mesh.vertices[:, 0].min())
    return lambda mid: EdgeTag.DIRICHLET if abs(mid[0] - xmin) < 1e-12 else EdgeTag.IMPEDANCE


def initial_mesh(config: RunConfig) -> Mesh:
    mesh = make_initial_mesh(config.domain, config.subdivisions)
    mesh = mesh.with_boundary(_boundary_rule(config, mesh))
    return uniform_refine(mesh, config.pre_refine)


def problem_data(config: RunConfig, mesh: Mesh, exact=None) -> ProblemData:
    exact = config.exact() if exact is None else exact
    eps_r = exact.index(mesh.centroids) ** 2
    return ProblemData(
        config.kappa,
        eps_r=eps_r,
        g_dirichlet=lambda x, n: boundary_data(exact, "dirichlet", x, n),
        g_impedance=lambda x, n: boundary_data(exact, "impedance", x, n),
    )


def estimate(config: RunConfig, mesh, space, solution, data):
    params = config.flux_params()
    if config.indicator == "dg":
        return eta_dg(mesh, space, solution, data, params)
    return eta_weighted(mesh, space, solution, data, params, config.weight_exponent)


# ---------------------------------------------------------------------- loop
def iterate_adaptive(config: RunConfig) -> Iterator[IterationResult]:
    """Yield one result per iteration; stops at ``max_iter`` or the dof cap.

    Raises :class:`~pwdg.solver.SolverError` unchanged so callers can flush
    what they already have.
    """
    exact = config.exact()
    params = config.flux_params()
    mesh = initial_mesh(config)
    scale = None
    for it in range(config.max_iter + 1):
        start = time.perf_counter()
        data = problem_data(config, mesh, exact)
        space = data.space(mesh, config.p)
        solution, report = solve(assemble(mesh, space, data, params))
        err = relative_l2_error(mesh, space, solution.coeffs, exact, config.quad_degree)
        ind = estimate(config, mesh, space, solution, data)
        eta = ind.eta
        if scale is None:
            scale = err / eta if eta > 0 else 1.0
        eta_scaled = eta * scale
        efficiency = err / eta_scaled if eta_scaled > 0 else math.inf
        last = it == config.max_iter
        marked = frozenset() if last else frozenset(doerfler_mark(ind, config.theta))
        row = ConvergenceRow(it, space.ndof, mesh.n_triangles, mesh.h, err, eta,
                             eta_scaled, efficiency, report.rcond,
                             time.perf_counter() - start)
        log.info("iter %d dofs %d err %.3e eta %.3e", it, space.ndof, err, eta)
        yield IterationResult(row, mesh, solution, marked)
        if last:
            return
        new = refine_leb(mesh, marked)
        if new.n_triangles * config.p > config.dof_cap:
            log.info("dof cap %d reached", config.dof_cap)
            return
        mesh = new


def write_solution(solution: Solution, path) -> None:
    nt, p = solution.coeffs.shape
    lines = [f"{e} {j} {format_float(c.real)} {format_float(c.imag)}"
             for e in range(nt) for j, c in enumerate(solution.coeffs[e])]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


class _CsvStream:
    def __init__(self, directory: Path):
        self.path = directory / "convergence.csv"
        try:
            self.handle = open(self.path, "w", newline="")
        except OSError as exc:
            raise OSError(f"cannot write {self.path}: {exc}") from exc
        self.writer = csv.writer(self.handle)
        self.writer.writerow(CSV_COLUMNS)
        self.handle.flush()

    def write(self, row: ConvergenceRow):
        self.writer.writerow(row.csv_fields())
        self.handle.flush()

    def close(self):
        self.handle.close()


def _prepare_dir(directory) -> Path:
    path = Path(directory)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    return path


def run_adaptive(config: RunConfig, out=None) -> list[ConvergenceRow]:
    """Run the adaptive loop, streaming CSV and snapshots to ``out`` if given.

    ``out`` defaults to ``config.out``.  On solver failure the rows written
    so far stay on disk and the error propagates.
    """
    out = out if out is not None else config.out
    results = []
    stream = None
    if out is not None:
        directory = _prepare_dir(out)
        stream = _CsvStream(directory)
    try:
        for res in iterate_adaptive(config):
            results.append(res.row)
            if stream is not None:
                stream.write(res.row)
                _write_snapshot(directory, res.row.iter, res.mesh, res.solution)
    finally:
        if stream is not None:
            stream.close()
    return results


def run_history(config: RunConfig) -> list[IterationResult]:
    """Like :func:`run_adaptive` but keeps meshes, solutions and marked sets."""
    return list(iterate_adaptive(config))


def _write_snapshot(directory: Path, it: int, mesh: Mesh, solution: Solution):
    for name, writer, obj in ((f"mesh_{it}.txt", dump_mesh, mesh),
                              (f"solution_{it}.txt", write_solution, solution)):
        target = directory / name
        try:
            writer(obj, target)
        except OSError as exc:
            raise OSError(f"cannot write {target}: {exc}") from exc


def export_run(rows, snapshots, directory) -> Path:
    """Write ``convergence.csv`` plus one mesh and solution file per snapshot.

    ``snapshots`` is a sequence of ``(iter, mesh, solution)`` triples.
    """
    directory = _prepare_dir(directory)
    stream = _CsvStream(directory)
    try:
        for row in rows:
            stream.write(row)
    finally:
        stream.close()
    for it, mesh, solution in snapshots:
        _write_snapshot(directory, it, mesh, solution)
    return directory


def read_convergence(path) -> list[ConvergenceRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header")
        rows = []
        for rec in reader:
            kw = {}
            for f in fields(ConvergenceRow):
                kw[f.name] = int(rec[f.name]) if f.type == "int" else float(rec[f.name])
            rows.append(ConvergenceRow(**kw))
    return rows
