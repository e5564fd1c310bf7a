"""Cumulative ablation: design filters on each model stage, evaluate every
design on one evaluation stage, and report broadband metrics plus the
stage-to-stage increments."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .atf import STAGES, FrequencyGrid, build_atf_set, check_stage, compute_components, synthetic_fr
from .filters import DesignConfig, design_pressure_matching
from .geometry import Scene
from .metrics import MetricCurve, broadband, default_epsilon, ipi_db, izi_db, program_pressures, sample_curve, xtc_db
from .specfun import SeriesControl

log = logging.getLogger(__name__)

METRICS = ("IZI", "IPI", "XTC")


class AblationError(RuntimeError):
    pass


class Row(NamedTuple):
    stage: str
    listener: str
    metric: str
    value: float


class DeltaRow(NamedTuple):
    step: str
    listener: str
    metric: str
    value: float


@dataclass
class AblationPlan:
    scene: Scene
    design_stages: tuple = STAGES
    eval_stage: str = "C3"
    design: DesignConfig | None = None
    eps: float | None = None
    grid: FrequencyGrid | None = None
    ctl: SeriesControl = field(default_factory=SeriesControl)
    frs: dict | None = None
    synthetic_fr: bool = True
    plan_id: str = "ablation"
    directivity: bool = True
    hrtf: bool = True

    def __post_init__(self):
        self.design_stages = tuple(self.design_stages)
        if not self.design_stages:
            raise ValueError("at least one design stage is required")
        for s in self.design_stages + (self.eval_stage,):
            check_stage(s)
        idx = [STAGES.index(s) for s in self.design_stages]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"design stages must be distinct and ordered C0 -> C3, got {self.design_stages}")
        if self.grid is None:
            self.grid = FrequencyGrid(fs=self.scene.sample_rate)
        if self.design is None:
            self.design = DesignConfig.for_scene(self.scene)


@dataclass
class AblationReport:
    plan_id: str
    eval_stage: str
    design_stages: tuple
    fr_source: str
    rows: list
    deltas: list
    curves: dict  # (stage, listener, metric) -> MetricCurve

    def value(self, stage, listener, metric) -> float:
        for r in self.rows:
            if (r.stage, r.listener, r.metric) == (stage, listener, metric):
                return r.value
        raise KeyError((stage, listener, metric))

    @property
    def listeners(self):
        return tuple(dict.fromkeys(r.listener for r in self.rows))

    def to_dict(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "eval_stage": self.eval_stage,
            "design_stages": list(self.design_stages),
            "fr_source": self.fr_source,
            "summary": [r._asdict() for r in self.rows],
            "deltas": [d._asdict() for d in self.deltas],
            "curves": [
                {
                    "stage": s, "listener": lst, "metric": m,
                    "freq_hz": c.freqs.tolist(), "value_db": c.values.tolist(),
                }
                for (s, lst, m), c in self.curves.items()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AblationReport":
        return cls(
            plan_id=d["plan_id"],
            eval_stage=d["eval_stage"],
            design_stages=tuple(d["design_stages"]),
            fr_source=d["fr_source"],
            rows=[Row(**r) for r in d["summary"]],
            deltas=[DeltaRow(**r) for r in d["deltas"]],
            curves={
                (c["stage"], c["listener"], c["metric"]): MetricCurve(c["freq_hz"], c["value_db"])
                for c in d["curves"]
            },
        )


def listener_name(k: int) -> str:
    return f"listener{k + 1}"


def _resolve_frs(plan: AblationPlan):
    needs = any(STAGES.index(s) >= 1 for s in plan.design_stages + (plan.eval_stage,))
    if not needs:
        return None, "none"
    if plan.frs is not None:
        missing = [i for i in range(plan.scene.L) if i not in plan.frs]
        if not missing:
            synth = all(fr.synthetic for fr in plan.frs.values())
            return plan.frs, "synthetic" if synth else "measured"
        if not plan.synthetic_fr:
            raise AblationError(f"no FR for speakers {missing} and synthetic FRs are disabled")
        frs = dict(plan.frs)
        for i in missing:
            frs[i] = synthetic_fr(plan.scene, i, plan.grid)
        return frs, "mixed"
    if not plan.synthetic_fr:
        raise AblationError("stages >= C1 need loudspeaker FRs and synthetic FRs are disabled")
    return {i: synthetic_fr(plan.scene, i, plan.grid) for i in range(plan.scene.L)}, "synthetic"


def run_ablation(plan: AblationPlan) -> AblationReport:
    scene, grid = plan.scene, plan.grid
    frs, fr_source = _resolve_frs(plan)
    eval_scene = scene.with_control_points(1)
    same_points = scene.M == 1

    comp = compute_components(scene, grid)
    eval_comp = comp if same_points else compute_components(eval_scene, grid)
    cache = {}

    def atf(which, stage):
        key = ("design" if which == "design" and not same_points else "eval", stage)
        if key not in cache:
            sc, cp = (scene, comp) if key[0] == "design" else (eval_scene, eval_comp)
            try:
                cache[key] = build_atf_set(
                    sc, stage, frs, grid, plan.ctl,
                    directivity=plan.directivity, hrtf=plan.hrtf, components=cp,
                )
            except Exception as exc:
                raise AblationError(f"building {key[0]} ATFs for stage {stage}: {exc}") from exc
        return cache[key]

    eval_atf = atf("eval", plan.eval_stage)
    rows, curves = [], {}
    for stage in plan.design_stages:
        log.info("designing on %s, evaluating on %s", stage, plan.eval_stage)
        try:
            bank = design_pressure_matching(atf("design", stage), plan.design)
        except Exception as exc:
            raise AblationError(f"designing filters for stage {stage}: {exc}") from exc
        pp = program_pressures(bank, eval_atf)
        eps = plan.eps if plan.eps is not None else default_epsilon(pp)
        for k in range(scene.K):
            per_bin = {"XTC": xtc_db(pp, k, eps)}
            if scene.K >= 2:
                per_bin["IZI"] = izi_db(pp, k, eps)
                per_bin["IPI"] = ipi_db(pp, k, eps)
            for metric in METRICS:
                if metric not in per_bin:
                    continue
                curve = sample_curve(per_bin[metric], grid)
                curves[(stage, listener_name(k), metric)] = curve
                rows.append(Row(stage, listener_name(k), metric, broadband(curve)))

    deltas = []
    for a, b in zip(plan.design_stages, plan.design_stages[1:]):
        for r in rows:
            if r.stage != b:
                continue
            prev = next(x for x in rows if (x.stage, x.listener, x.metric) == (a, r.listener, r.metric))
            deltas.append(DeltaRow(f"{b}-{a}", r.listener, r.metric, r.value - prev.value))

    return AblationReport(
        plan_id=plan.plan_id,
        eval_stage=plan.eval_stage,
        design_stages=plan.design_stages,
        fr_source=fr_source,
        rows=rows,
        deltas=deltas,
        curves=curves,
    )


# --------------------------------------------------------------------------
# report files


def _write_csv(path, header, rows, comments=()):
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def emit_report(report: AblationReport, out_dir, formats=("csv", "json")) -> list:
    """Write the report and return the written paths.

    CSV: ``<id>_summary.csv`` (comment header with plan metadata),
    ``<id>_deltas.csv`` (omitted for single-stage plans) and one
    ``<id>_<stage>_<listener>_<metric>.csv`` curve per row.
    JSON: ``<id>_report.json`` holding everything.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    pid = report.plan_id
    written = []
    try:
        if "csv" in formats:
            delta_name = f"{pid}_deltas.csv" if report.deltas else "none (single-stage plan)"
            summary = out / f"{pid}_summary.csv"
            _write_csv(
                summary,
                ["stage", "listener", "metric", "value_db"],
                report.rows,
                comments=[
                    f"plan_id={pid}",
                    f"eval_stage={report.eval_stage}",
                    f"design_stages={','.join(report.design_stages)}",
                    f"fr_source={report.fr_source}",
                    f"deltas={delta_name}",
                ],
            )
            written.append(summary)
            if report.deltas:
                p = out / delta_name
                _write_csv(p, ["step", "listener", "metric", "delta_db"], report.deltas)
                written.append(p)
            for (stage, lst, metric), curve in report.curves.items():
                p = out / f"{pid}_{stage}_{lst}_{metric}.csv"
                curve.to_csv(p)
                written.append(p)
        if "json" in formats:
            p = out / f"{pid}_report.json"
            p.write_text(json.dumps(report.to_dict(), indent=1) + "\n")
            written.append(p)
    except OSError as exc:
        raise OSError(f"writing report to {out}: {exc}") from exc
    return written


def load_report_json(path) -> AblationReport:
    return AblationReport.from_dict(json.loads(Path(path).read_text()))


def load_report_csv(out_dir, plan_id) -> AblationReport:
    out = Path(out_dir)
    meta, rows = {}, []
    with open(out / f"{plan_id}_summary.csv", newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for ln in lines:
        if ln.startswith("# "):
            key, _, val = ln[2:].partition("=")
            meta[key] = val
        else:
            body.append(ln)
    for rec in list(csv.reader(body))[1:]:
        rows.append(Row(rec[0], rec[1], rec[2], float(rec[3])))
    deltas = []
    dpath = out / f"{plan_id}_deltas.csv"
    if meta.get("deltas", "").endswith(".csv"):
        with open(dpath, newline="") as fh:
            for rec in list(csv.reader(fh))[1:]:
                deltas.append(DeltaRow(rec[0], rec[1], rec[2], float(rec[3])))
    curves = {
        (r.stage, r.listener, r.metric): MetricCurve.from_csv(out / f"{plan_id}_{r.stage}_{r.listener}_{r.metric}.csv")
        for r in rows
    }
    return AblationReport(
        plan_id=meta["plan_id"],
        eval_stage=meta["eval_stage"],
        design_stages=tuple(meta["design_stages"].split(",")),
        fr_source=meta["fr_source"],
        rows=rows,
        deltas=deltas,
        curves=curves,
    )
