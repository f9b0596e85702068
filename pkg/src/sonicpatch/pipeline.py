"""Run configuration, stage wiring and on-disk artifacts."""
from __future__ import annotations

import configparser
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import boundary as bnd
from . import domain as dom
from . import eos as eq
from . import inversion as inv
from . import solver as sol
from .reports import ConditionResult, ValidationReport

UNITS_NOTE = "geometric units with c = 1; densities and pressures in the EOS's own scale"

_SCHEMA = {
    "eos": {"kind", "k", "kappa", "gamma", "c2", "rho_max", "rho_ref", "table"},
    "bernoulli": {"rho_star", "mg_hat"},
    "streamline": {"phi", "pihat", "x1", "x3"},
    "solver": {"n_levels", "n_psi", "t_min", "t_min_fraction", "cfl_like", "interp_order", "form", "t_guard"},
    "domain": {"delta_user", "ktilde_user", "safety"},
    "output": {"dir", "raster", "raster_nx", "raster_nr"},
}

REFERENCE_CONFIG = """\
[eos]
kind = quadratic
k = 0.25
rho_ref = 0.5

[bernoulli]
rho_star = 0.5

[streamline]
phi = 1.0, 0.5, -0.25
pihat = 1.0, -0.3
x1 = 0.0
x3 = 0.4

[solver]
n_levels = 200
t_min_fraction = 0.01
interp_order = 2
form = primal

[domain]
delta_user = 0.3

[output]
dir = out
raster = true
raster_nx = 200
raster_nr = 200
"""


class ConfigError(ValueError):
    """Unreadable or schema-invalid configuration (a usage error)."""


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class RunConfig:
    eos: dict
    bernoulli: dict
    streamline: dict
    solver: sol.SolverConfig
    domain: dict
    output: dict
    text: str = field(repr=False, default="")

    @property
    def out_dir(self) -> Path:
        return Path(self.output.get("dir", "out"))


def _floats(s):
    return [float(v) for v in s.replace(";", ",").split(",") if v.strip()]


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        extra = set(cp[sec]) - _SCHEMA[sec]
        if extra:
            raise ConfigError(f"unknown keys in [{sec}]: {', '.join(sorted(extra))}")
    for sec in ("eos", "bernoulli", "streamline"):
        if not cp.has_section(sec):
            raise ConfigError(f"missing section [{sec}]")
    get = lambda sec: dict(cp[sec]) if cp.has_section(sec) else {}
    try:
        e = get("eos")
        e.setdefault("kind", "quadratic")
        if "table" in e and base_dir is not None and not Path(e["table"]).is_absolute():
            e["table"] = str(base_dir / e["table"])
        b = {k: float(v) for k, v in get("bernoulli").items()}
        if len(b) != 1:
            raise ConfigError("[bernoulli] needs exactly one of rho_star, mg_hat")
        s = get("streamline")
        st = {"phi": _floats(s["phi"]), "pihat": _floats(s["pihat"]),
              "x1": float(s["x1"]), "x3": float(s["x3"])}
        sv = get("solver")
        scfg = sol.SolverConfig(
            n_levels=int(sv.get("n_levels", 200)),
            n_psi=int(sv["n_psi"]) if "n_psi" in sv else None,
            t_min=float(sv["t_min"]) if "t_min" in sv else None,
            t_min_fraction=float(sv.get("t_min_fraction", 0.01)),
            cfl_like=float(sv.get("cfl_like", 0.5)),
            interp_order=int(sv.get("interp_order", 2)),
            form=sv.get("form", "primal"),
            t_guard=float(sv["t_guard"]) if "t_guard" in sv else None,
        )
        d = {k: float(v) for k, v in get("domain").items()}
        o = get("output")
        out = {"dir": o.get("dir", "out"),
               "raster": cp.getboolean("output", "raster", fallback=True) if cp.has_section("output") else True,
               "raster_nx": int(o.get("raster_nx", 200)), "raster_nr": int(o.get("raster_nr", 200))}
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return RunConfig(e, b, st, scfg, d, out, text)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, path.parent)


# ----------------------------------------------------------------------
# Stages
# ----------------------------------------------------------------------

def build_eos(cfg: RunConfig) -> eq.EquationOfState:
    e = cfg.eos
    kind = e["kind"]
    rho_ref = float(e.get("rho_ref", 0.5))
    try:
        if kind == "quadratic":
            return eq.quadratic_eos(float(e.get("k", 0.25)), rho_ref)
        if kind == "polytropic":
            return eq.polytropic_eos(float(e["kappa"]), float(e["gamma"]), rho_ref)
        if kind == "linear":
            return eq.linear_eos(float(e["c2"]), float(e.get("rho_max", 1.0)), rho_ref)
        if kind == "tabulated":
            tab = np.loadtxt(e["table"], delimiter=",", comments="#", ndmin=2)
            return eq.tabulated_eos(tab[:, 0], tab[:, 1], rho_ref)
    except KeyError as exc:
        raise ConfigError(f"[eos] kind={kind} needs key {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read EOS table: {exc}") from exc
    raise ConfigError(f"unknown EOS kind {kind!r}")


def build_constants(cfg: RunConfig, eos) -> eq.BernoulliConstants:
    b = cfg.bernoulli
    if "rho_star" in b:
        return eq.sonic_normalized_constants(eos, b["rho_star"])
    return eq.bernoulli_constants(eos, b["mg_hat"])


def build_streamline(cfg: RunConfig) -> bnd.StreamlineSpec:
    s = cfg.streamline
    return bnd.StreamlineSpec.from_polynomials(s["phi"], s["pihat"], s["x1"], s["x3"])


@dataclass
class Setup:
    eos: eq.EquationOfState
    consts: eq.BernoulliConstants
    spec: bnd.StreamlineSpec
    branch: eq.SupersonicBranch
    hb: bnd.HodographBoundary
    data: bnd.BoundaryData
    params: dom.DomainParams
    region: dom.OmegaRegion


def validate(cfg: RunConfig) -> ValidationReport:
    """All hypotheses on the EOS and the streamline data, as one report."""
    try:
        eos = build_eos(cfg)
    except eq.InadmissibleEOS as exc:
        return exc.report
    report = ValidationReport(list(eq.admissibility_report(eos.p, eos.dp, eos.d2p, eos.rho_max).conditions))
    try:
        consts = build_constants(cfg, eos)
    except ValueError as exc:
        return report.extend(ValidationReport([ConditionResult("Bernoulli normalization", False,
                                                               float("nan"), None, str(exc))]))
    return report.extend(bnd.validate_streamline(build_streamline(cfg), eos, consts))


def setup(cfg: RunConfig) -> Setup:
    report = validate(cfg)
    if not report.passed:
        raise StageError("validate", "; ".join(c.reason for c in report.failures()))
    eos = build_eos(cfg)
    consts = build_constants(cfg, eos)
    spec = build_streamline(cfg)
    try:
        branch = bnd._branch_for(spec, eos, consts)
        hb = bnd.hodograph_boundary(spec, branch)
        data = bnd.boundary_data(spec, branch)
    except ValueError as exc:
        raise StageError("boundary", str(exc)) from exc
    try:
        params = dom.compute_params(hb, data)
        d = cfg.domain
        if "delta_user" in d:
            region = dom.effective_region(hb, d["delta_user"], d.get("ktilde_user"), d.get("safety", 2.0))
        else:
            region = dom.make_region(hb, params.delta, params.Ktilde)
    except ValueError as exc:
        raise StageError("domain", str(exc)) from exc
    return Setup(eos, consts, spec, branch, hb, data, params, region)


def march(st: Setup, scfg: sol.SolverConfig) -> sol.HodographField:
    try:
        return sol.march(st.region, scfg)
    except (sol.DeterminacyViolation, sol.InvariantEscape, ValueError) as exc:
        raise StageError("solver", str(exc)) from exc


def reconstruct(fld: sol.HodographField) -> inv.PatchSolution:
    try:
        return inv.physical_fields(fld)
    except sol.DeterminacyViolation as exc:
        raise StageError("inversion", str(exc)) from exc


# ----------------------------------------------------------------------
# Artifacts
# ----------------------------------------------------------------------

def field_path(out: Path, n_levels=None) -> Path:
    return out / ("field.csv" if n_levels is None else f"field_L{n_levels}.csv")


def read_field(path, st: Setup, scfg: sol.SolverConfig) -> sol.HodographField:
    return sol.field_from_columns(sol.read_csv(path), st.region, scfg)


def export_solution(out: Path, patch: inv.PatchSolution, cfg: RunConfig) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    sol.write_csv(out / "points.csv", patch.columns())
    sc = patch.sonic
    sol.write_csv(out / "sonic_curve.csv", {"psi": sc.psi, "x": sc.x, "r": sc.r, "theta": sc.theta,
                                            "tangent_x": sc.tangent[:, 0], "tangent_r": sc.tangent[:, 1]})
    df = patch.df
    sol.write_csv(out / "df_curve.csv", {"t": df.t, "psi": df.psi, "x": df.x, "r": df.r, "theta": df.theta})
    names = ["points.csv", "sonic_curve.csv", "df_curve.csv"]
    if cfg.output.get("raster", True):
        inv.write_raster(out / "raster.csv", patch, cfg.output["raster_nx"], cfg.output["raster_nr"])
        names.append("raster.csv")
    return names


def _margins(st: Setup, fld: sol.HodographField):
    wlo, whi, rlo, rhi = st.params.box()
    W = np.concatenate([lv.W for lv in fld.levels])
    Z = np.concatenate([lv.Z for lv in fld.levels])
    r = np.concatenate([lv.r for lv in fld.levels])
    dm = dom.check_strong_determinacy(float(r.max()), float(Z.min()), fld.region)
    return {
        "W_Z_box": [wlo, whi], "W_Z_margin": float(min(min(W.min(), Z.min()) - wlo, whi - max(W.max(), Z.max()))),
        "r_box": [rlo, rhi], "r_margin": float(min(r.min() - rlo, rhi - r.max())),
        "determinacy_margin": dm.margin,
        "sup_abs_L": max(float(np.max(np.abs(lv.L))) for lv in fld.levels),
    }


def solve(cfg: RunConfig, out: Path | None = None) -> dict:
    """validate -> domain -> march -> inversion -> artifacts; returns the summary."""
    out = Path(out) if out is not None else cfg.out_dir
    timings = {}
    t0 = time.perf_counter()
    st = setup(cfg)
    timings["setup"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    fld = march(st, cfg.solver)
    timings["march"] = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    fld.to_csv(field_path(out))
    t0 = time.perf_counter()
    patch = reconstruct(fld)
    names = export_solution(out, patch, cfg)
    timings["inversion"] = time.perf_counter() - t0
    summary = {
        "units": UNITS_NOTE,
        "config": cfg.text,
        "domain_constants": st.params.to_dict(),
        "region": {"delta": st.region.delta, "Ktilde": st.region.Ktilde,
                   "psi_bar_0": float(st.region.psi_bar(0.0)), "psi_tilde_delta": float(st.region.psi_tilde(st.region.delta))},
        "levels": len(fld.levels) - 1,
        "nodes": int(sum(lv.n for lv in fld.levels)),
        "t_min": fld.t_min,
        "invariant_margins": _margins(st, fld),
        "df_right_edge": float(patch.df.t[-1]),
        "artifacts": ["field.csv", *names],
        "timings_s": timings,
    }
    (out / "run_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def export(cfg: RunConfig, out: Path | None = None) -> list[str]:
    """Rebuild the physical-plane artifacts from an existing field.csv."""
    out = Path(out) if out is not None else cfg.out_dir
    st = setup(cfg)
    path = field_path(out)
    if not path.exists():
        raise ConfigError(f"{path} not found; run solve first")
    return export_solution(out, reconstruct(read_field(path, st, cfg.solver)), cfg)


def verify_fields(cfg: RunConfig, out: Path, grids=3):
    """Fields for the verification grids, coarse to fine, reusing stored CSVs.

    The finest grid is the configured one (``field.csv``); coarser grids
    halve the level count and are cached as ``field_L<n>.csv``.
    """
    st = setup(cfg)
    n = cfg.solver.n_levels
    fields = []
    for k in range(grids - 1, -1, -1):
        nk = n // 2**k
        scfg = sol.SolverConfig(**{**cfg.solver.__dict__, "n_levels": nk,
                                   "n_psi": None if cfg.solver.n_psi is None else cfg.solver.n_psi // 2**k})
        path = field_path(out, None if k == 0 else nk)
        if path.exists():
            fields.append(read_field(path, st, scfg))
        else:
            fld = march(st, scfg)
            out.mkdir(parents=True, exist_ok=True)
            fld.to_csv(path)
            fields.append(fld)
    return st, fields
