"""Experiment orchestration: build the datum, dispatch, write artifacts, summarize.

Artifacts in the output directory:

* ``run.json``: resolved config (as a dict and as re-parseable text), check rows, the experiment report, timings
* ``series.csv``: dynamics schema for trajectory experiments
* ``w_series.csv``: the auxiliary trajectory (split remainder or stability difference), columns prefixed ``w_``

Exit codes: 0 when every asserted check passes, 1 when one fails, 2 when a run is unresolved.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from critspace.config import ExperimentConfig, parse_modes, parse_segments
from critspace.dynamics import SolverConfig, UnresolvedError, blowup_monitor, evolve
from critspace.norms import check_interpolation, check_product_inequality, norm_report, x_norm
from critspace.oracle import (
    RadialProfile,
    gaussian,
    lemma22_check,
    profile_report,
    radial_hs_sq,
    radial_x_norm,
    random_power_profile,
    remark_f,
    remark_g,
    thin_shell,
)
from critspace.picard import PicardConfig, cross_validate
from critspace.spectral import (
    SpectralVectorField,
    from_modes,
    make_grid,
    random_divfree_field,
    random_scalar_field,
    shear_mode,
    taylor_green,
)
from critspace.splitting import run_splitting_experiment
from critspace.stability import perturbation_threshold, run_stability

log = logging.getLogger(__name__)

EXIT_PASS, EXIT_FAIL, EXIT_UNRESOLVED = 0, 1, 2


@dataclass
class CheckRow:
    name: str
    anchor: str
    residual: float | None
    passed: bool
    asserted: bool = True

    @property
    def verdict(self) -> str:
        if not self.asserted:
            return "INFO"
        return "PASS" if self.passed else "FAIL"

    def to_json(self) -> dict:
        r = self.residual
        return {
            "name": self.name,
            "anchor": self.anchor,
            "residual": r if r is None or math.isfinite(r) else str(r),
            "verdict": self.verdict,
        }


def emit_summary(rows: list[CheckRow]) -> str:
    """Fixed-width table, one line per check; empty input gives an empty string."""
    if not rows:
        return ""
    cells = [("check", "anchor", "residual", "verdict")]
    for r in rows:
        res = "-" if r.residual is None else f"{r.residual:.3e}"
        cells.append((r.name, r.anchor, res, r.verdict))
    widths = [max(len(c[i]) for c in cells) for i in range(4)]
    return "\n".join("  ".join(c[i].ljust(widths[i]) for i in range(4)).rstrip() for c in cells)


def solver_config(cfg: ExperimentConfig) -> SolverConfig:
    s = cfg["solver"]
    return SolverConfig(s["nu"], s["dt"], s["t_end"], make_grid(s["n"]), record_every=s["record_every"])


def build_datum(cfg: ExperimentConfig, seed: int | None = None) -> SpectralVectorField:
    d = cfg["data"]
    grid = make_grid(cfg["solver"]["n"])
    seed = d["seed"] if seed is None else seed
    k_max = d["k_max"] or grid.cutoff
    preset = d["preset"]
    if preset == "shear":
        u = shear_mode(grid, d["amplitude"])
    elif preset == "taylor_green":
        u = taylor_green(grid, d["amplitude"])
    elif preset == "random":
        u = random_divfree_field(grid, seed, slope=d["slope"], amplitude=d["amplitude"], k_max=k_max)
    elif preset == "modes":
        u = from_modes(grid, parse_modes(d["modes"]))
    else:  # tg_random: Taylor-Green carrying most of the X^-1 mass plus a rough random part
        rough = random_divfree_field(grid, seed, slope=d["slope"], k_max=k_max)
        frac = d["rough_fraction"]
        u = taylor_green(grid, d["amplitude"] * (1 - frac))
        if frac > 0:
            u = u + rough * (d["amplitude"] * frac / x_norm(rough, -1))
    if d["xm1"] is not None:
        norm = x_norm(u, -1)
        if norm == 0:
            raise ValueError("cannot rescale a zero datum to data.xm1")
        u = u * (d["xm1"] / norm)
    return u


def _rel(lhs: float, rhs: float) -> float:
    return (lhs - rhs) / rhs if rhs > 0 else lhs - rhs


# each runner returns (report, rows, {filename: (TimeSeries, prefix)})


def _simulate(cfg):
    u0 = build_datum(cfg)
    series = evolve(u0, solver_config(cfg))
    mon = blowup_monitor(series)
    report = {
        "initial": norm_report(u0).to_json(),
        "final": {k: getattr(series, k)[-1] for k in ("x_m1", "x_0", "x_1", "l2")},
        "blowup_monitor": mon.to_json(),
    }
    rows = [CheckRow("continuation integrals", "blow-up criteria", None, mon.flag == "bounded", asserted=False)]
    return report, rows, {"series.csv": (series, "")}


def _decay(cfg):
    u0 = build_datum(cfg)
    series = evolve(u0, solver_config(cfg))
    ratio = series.x_m1[-1] / series.x_m1[0] if series.x_m1[0] > 0 else 0.0
    mon = blowup_monitor(series)
    rows = []
    if series.small_data:
        excess = series.bound_excess()
        rows.append(CheckRow("small-data bound", "global bound for ||u0|| < nu", excess, excess <= 1e-3))
    else:
        rows.append(CheckRow("small-data bound", "global bound for ||u0|| < nu", None, True, asserted=False))
    rows.append(CheckRow("X^-1 decay ratio", "long-time decay", ratio, ratio < 1, asserted=False))
    report = {"xm1_ratio_final_initial": ratio, "small_data": series.small_data,
              "bound_excess": series.bound_excess() if series.small_data else None, "blowup_monitor": mon.to_json()}
    return report, rows, {"series.csv": (series, "")}


def _split(cfg):
    u0 = build_datum(cfg)
    rep = run_splitting_experiment(u0, cfg["split"]["epsilon"], solver_config(cfg))
    anchors = {
        "a": "remainder small-data bound",
        "b": "energy bound after Gronwall",
        "c": "L^4-in-time X^-1 bound",
        "d": "containment after t0",
    }
    rows = [CheckRow(f"split ({k})", anchors[k], c.max_residual if math.isfinite(c.max_residual) else None, c.holds)
            for k, c in rep.checks.items()]
    rep.series_refs = {"u": "series.csv", "w": "w_series.csv"}
    return rep.to_json(), rows, {"series.csv": (rep.u_series, ""), "w_series.csv": (rep.w_series, "w_")}


def _stability(cfg):
    u0 = build_datum(cfg)
    sc = solver_config(cfg)
    base = evolve(u0, sc)
    th = perturbation_threshold(base, sc.nu)
    st = cfg["stability"]
    p = random_divfree_field(sc.grid, st["perturbation_seed"], slope=st["perturbation_slope"],
                             k_max=cfg["data"]["k_max"] or sc.grid.cutoff)
    p = p * (st["delta_fraction"] * th.value / x_norm(p, -1))
    rep = run_stability(u0, p, sc, th.value)
    asserted = rep.precondition
    rows = [
        CheckRow("difference bound", "stability estimate", rep.max_residual, rep.bound_holds, asserted),
        CheckRow("nu/4 wall", "bootstrap time", rep.wall_T, rep.wall_T is None, asserted),
        CheckRow("sup ||w|| < nu/8", "stability conclusion", rep.sup_w - sc.nu / 8, rep.sup_w < sc.nu / 8, asserted),
    ]
    report = rep.to_json() | {"threshold_integral": th.integral, "threshold_tail": th.tail}
    return report, rows, {"series.csv": (base, ""), "w_series.csv": (rep.w_series, "w_")}


def _picard(cfg):
    pc = cfg["picard"]
    config = PicardConfig(cfg["solver"]["nu"], pc["T"], pc["n_time"], pc["max_iter"], pc["tol"], pc["substeps"])
    seed0 = cfg["data"]["seed"]
    samples = []
    for i in range(pc["samples"]):
        u0 = build_datum(cfg, seed=seed0 + i)
        cv = cross_validate(u0, config)
        samples.append({"seed": seed0 + i, "xm1": x_norm(u0, -1)} | cv.to_json())
    worst = max(s["max_rel_discrepancy"] for s in samples)
    tails = [r for s in samples for r in s["picard"]["ratios"][-3:]]
    rows = [
        CheckRow("picard converged", "fixed-point existence", None, all(s["picard"]["converged"] for s in samples)),
        CheckRow("contraction tail < 1", "fixed-point existence", max(tails, default=0.0), all(r < 1 for r in tails)),
        CheckRow("picard vs stepper", "cross-validation", worst, worst <= 1e-4),
    ]
    return {"samples": samples, "max_rel_discrepancy": worst}, rows, {}


_PROFILES = {"remark_f": remark_f, "remark_g": remark_g, "gaussian": gaussian, "thin_shell": thin_shell}


def _oracle(cfg):
    oc = cfg["oracle"]
    rows, report = [], {}
    if oc["profile"] == "remark":
        f_x, g_x = radial_x_norm(remark_f(), -1), radial_x_norm(remark_g(), -1)
        f_h, g_h = radial_hs_sq(remark_f(), 0.5), radial_hs_sq(remark_g(), 0.5)
        rows += [
            CheckRow("remark f: ||f||_X^-1 = 8 pi", "H^1/2 vs X^-1 non-comparability", _rel(f_x, 8 * math.pi),
                     abs(f_x - 8 * math.pi) <= 1e-8 * 8 * math.pi),
            CheckRow("remark g: ||g||_X^-1 diverges", "H^1/2 vs X^-1 non-comparability", None, math.isinf(g_x)),
            CheckRow("remark f: ||f||^2_H^1/2 = 4 pi (pinned)", "H^1/2 vs X^-1 non-comparability", _rel(f_h, 4 * math.pi),
                     abs(f_h - 4 * math.pi) <= 1e-8 * 4 * math.pi),
            CheckRow("remark g: ||g||^2_H^1/2 diverges (pinned)", "H^1/2 vs X^-1 non-comparability", None, math.isinf(g_h)),
        ]
        report["remark"] = {"f": profile_report(remark_f(), 0.5), "g": profile_report(remark_g(), 0.5)}
        report["remark_discrepancy"] = (
            "Direct integration with the spherical Jacobian gives ||f||^2_H^1/2 = 4 pi (finite) and "
            "||g||^2_H^1/2 = infinity. The values usually quoted with this counterexample (infinity and 8 pi) "
            "do not follow from the stated profiles; the quoted X^-1 values (8 pi and infinity) do."
        )
        g_rep = lemma22_check(gaussian(), oc["s"])
        rows.append(CheckRow(f"gaussian embedding s={oc['s']:g}", "H^s into X^-1 embedding",
                             g_rep.ratio - 1, g_rep.holds))
        report["gaussian"] = profile_report(gaussian(), oc["s"])
        rng = np.random.default_rng(cfg.seed)
        worst, violations, count = 0.0, 0, 0
        for s in (0.6, 1.0, 2.0):
            for _ in range(oc["samples"]):
                rep = lemma22_check(random_power_profile(rng), s)
                worst = max(worst, rep.ratio)
                violations += not rep.holds
                count += 1
        rows.append(CheckRow("random profiles embedding", "H^s into X^-1 embedding", worst - 1, violations == 0))
        report["random_profiles"] = {"count": count, "violations": violations, "worst_ratio": worst}
    else:
        if oc["profile"] == "segments":
            prof = RadialProfile.power(*parse_segments(oc["segments"]))
        else:
            prof = _PROFILES[oc["profile"]]()
        report["profile"] = profile_report(prof, oc["s"])
        emb = report["profile"]["lemma22"]
        if emb is not None:
            rows.append(CheckRow(f"embedding s={oc['s']:g}", "H^s into X^-1 embedding",
                                 emb["lhs"] / emb["rhs"] - 1 if emb["rhs"] else None, emb["holds"]))
    return report, rows, {}


def _inequalities(cfg):
    ic = cfg["inequalities"]
    grid = make_grid(ic["n"])
    rng = np.random.default_rng(cfg.seed)
    prod_viol = interp_viol = 0
    prod_worst = interp_worst = -math.inf
    for _ in range(ic["samples"]):
        f = random_scalar_field(grid, None, int(rng.integers(1, ic["support"] + 1)), rng=rng)
        g = random_scalar_field(grid, None, int(rng.integers(1, ic["support"] + 1)), rng=rng)
        rep = check_product_inequality(f, g)
        prod_viol += not rep.holds
        prod_worst = max(prod_worst, _rel(rep.lhs, rep.rhs))
    for _ in range(ic["samples"]):
        u = random_divfree_field(grid, int(rng.integers(2**63)), slope=float(rng.uniform(0, 3)),
                                 k_max=int(rng.integers(1, grid.cutoff + 1)))
        rep = check_interpolation(u)
        interp_viol += not rep.holds
        interp_worst = max(interp_worst, _rel(rep.lhs, rep.rhs))
    # single-shell fields attain equality
    shell_err = 0.0
    shells = np.unique(np.round(grid.kmag[grid.mask & (grid.kmag > 0)] ** 2)).astype(int)
    for k2 in shells[:8]:
        u = random_divfree_field(grid, int(rng.integers(2**63)), slope=0.0, k_max=grid.cutoff)
        shell = SpectralVectorField(grid, u.coeffs * (np.abs(grid.kmag**2 - k2) < 1e-9))
        if not np.any(shell.coeffs):
            continue
        rep = check_interpolation(shell)
        shell_err = max(shell_err, abs(rep.lhs - rep.rhs) / rep.rhs)
    rows = [
        CheckRow("product inequality", "X^0 algebra property", prod_worst, prod_viol == 0),
        CheckRow("interpolation", "X^0 between X^-1 and X^1", interp_worst, interp_viol == 0),
        CheckRow("single-shell equality", "interpolation equality case", shell_err, shell_err <= 1e-12),
    ]
    report = {"samples": ic["samples"], "product_violations": prod_viol, "interpolation_violations": interp_viol,
              "single_shell_max_rel_error": shell_err}
    return report, rows, {}


RUNNERS = {
    "simulate": _simulate,
    "decay": _decay,
    "split": _split,
    "stability": _stability,
    "picard": _picard,
    "oracle": _oracle,
    "inequalities": _inequalities,
}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats so run.json stays strict JSON."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return "DIVERGES" if o > 0 else str(float(o))
    return o


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None, echo=print) -> int:
    """Run the configured experiment, write artifacts, print the summary table, return the exit code."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    status, report, rows, series = "ok", {}, [], {}
    try:
        report, rows, series = RUNNERS[cfg.experiment](cfg)
    except UnresolvedError as exc:
        status = "unresolved"
        report = {"error": str(exc), "t": exc.t}
        if exc.series is not None and len(exc.series):
            series = {"series.csv": (exc.series, "")}
    for name, (s, prefix) in series.items():
        s.to_csv(out / name, prefix)
    if status == "unresolved":
        code = EXIT_UNRESOLVED
    else:
        code = EXIT_PASS if all(r.passed for r in rows if r.asserted) else EXIT_FAIL
    doc = {
        "experiment": cfg.experiment,
        "status": status,
        "exit_code": code,
        "config": cfg.to_json(),
        "config_text": cfg.to_text(),
        "checks": [r.to_json() for r in rows],
        "report": report,
        "artifacts": sorted(series),
        "timings": {"wall_seconds": time.perf_counter() - started},
    }
    (out / "run.json").write_text(json.dumps(_clean(doc), indent=2, default=_json_default) + "\n")
    table = emit_summary(rows)
    if table:
        echo(table)
    if status == "unresolved":
        echo(f"UNRESOLVED at t={report['t']:g}: {report['error']}")
    return code
