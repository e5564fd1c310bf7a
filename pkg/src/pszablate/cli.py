"""Command-line entry point.

    pszablate simulate-atf [--config run.yaml] [--stages C0,C3] [--out DIR]
    pszablate design --atf DIR/atf_C3.npz [--config run.yaml] [--lambda 1e-2]
    pszablate ablate [--config run.yaml] [--stages C0,C1] [--eval-stage C2]

Flags override values from the config file. Exit status is 0 only when
every requested output was written and read back successfully.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from filelock import FileLock, Timeout

from .ablation import AblationPlan, emit_report, load_report_csv, load_report_json, run_ablation
from .atf import (
    ArchiveError,
    FrequencyGrid,
    build_atf_set,
    check_stage,
    compute_components,
    fr_name,
    load_atf_archive,
    load_fr_dir,
    save_atf_archive,
    synthetic_fr,
)
from .config import ConfigError, RunConfig, load_config, parse_stages, with_sample_rate
from .filters import DesignConfig, FilterBank, design_pressure_matching

log = logging.getLogger("pszablate")


class CliError(RuntimeError):
    pass


def _common(p):
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--lambda", dest="lam", type=float, help="relative Tikhonov weight")
    p.add_argument("--nfft", type=int, help="FFT length of the design grid")
    p.add_argument("--fs", type=float, help="sample rate in Hz")
    p.add_argument("-v", "--verbose", action="store_true")


def _fr_flags(p):
    p.add_argument("--fr-dir", type=Path, help="directory of measured FR files (<name>.txt|.wav)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--synthetic-fr", dest="synthetic_fr", action="store_true", default=None,
                   help="fill missing FRs with the synthetic model")
    g.add_argument("--no-synthetic-fr", dest="synthetic_fr", action="store_false",
                   help="fail if any FR file is missing")


def build_parser():
    parser = argparse.ArgumentParser(prog="pszablate", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-atf", help="write one ATF archive per stage")
    _common(p)
    _fr_flags(p)
    p.add_argument("--stages", help="comma-separated stages, e.g. C0,C3")

    p = sub.add_parser("design", help="design a filter bank from an ATF archive")
    _common(p)
    p.add_argument("--atf", type=Path, required=True, help="ATF archive from simulate-atf")

    p = sub.add_parser("ablate", help="run the cumulative ablation and write reports")
    _common(p)
    _fr_flags(p)
    p.add_argument("--stages", help="comma-separated design stages")
    p.add_argument("--eval-stage", help="stage used as the evaluation model")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config is not None else RunConfig()
    if args.fs is not None:
        cfg = with_sample_rate(cfg, args.fs)
    if args.nfft is not None:
        try:
            FrequencyGrid(n_fft=args.nfft)
        except ValueError as exc:
            raise ConfigError(f"--nfft: {exc}") from None
        cfg.n_fft = args.nfft
    if args.lam is not None:
        if args.lam < 0:
            raise ConfigError("--lambda must be >= 0")
        cfg.lam = args.lam
    if args.out is not None:
        cfg.out_dir = args.out
    if getattr(args, "fr_dir", None) is not None:
        if not args.fr_dir.is_dir():
            raise ConfigError(f"--fr-dir: directory not found: {args.fr_dir}")
        cfg.fr_dir = args.fr_dir
    if getattr(args, "synthetic_fr", None) is not None:
        cfg.synthetic_fr = args.synthetic_fr
    if getattr(args, "stages", None):
        try:
            cfg.stages = parse_stages(args.stages)
        except ValueError as exc:
            raise ConfigError(f"--stages: {exc}") from None
    if getattr(args, "eval_stage", None):
        try:
            cfg.eval_stage = check_stage(args.eval_stage)
        except ValueError as exc:
            raise ConfigError(f"--eval-stage: {exc}") from None
    if cfg.scene.sample_rate / 2 < 20000:
        log.warning("sample rate %.0f Hz does not cover the 20 kHz evaluation edge", cfg.scene.sample_rate)
    return cfg


def resolve_frs(cfg: RunConfig, stages, grid):
    """Measured FRs from ``cfg.fr_dir`` with synthetic fill-in when allowed.

    Returns ``None`` when no requested stage uses FRs.
    """
    if all(s == "C0" for s in stages):
        return None
    scene = cfg.scene
    frs, missing = {}, [fr_name(scene, i) for i in range(scene.L)]
    if cfg.fr_dir is not None:
        frs, missing = load_fr_dir(cfg.fr_dir, scene, grid)
    if missing:
        if not cfg.synthetic_fr:
            raise CliError(
                f"stages {','.join(s for s in stages if s != 'C0')} need FRs but none were found "
                f"for speakers: {', '.join(missing)} (synthetic FRs disabled)"
            )
        names = set(missing)
        for i in range(scene.L):
            if fr_name(scene, i) in names:
                frs[i] = synthetic_fr(scene, i, grid)
        log.info("using synthetic FRs for %d speakers", len(missing))
    return frs


def design_config(cfg: RunConfig, band_edges) -> DesignConfig:
    return DesignConfig(
        lam=cfg.lam,
        filter_length=cfg.filter_length,
        modeling_delay=cfg.modeling_delay,
        band_edges=band_edges if cfg.band_masks else None,
        crossover_bins=cfg.crossover_bins,
        taper=cfg.taper,
    )


def _locked(out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return FileLock(str(out_dir / ".pszablate.lock"), timeout=0)


def cmd_simulate_atf(cfg: RunConfig) -> list:
    grid = cfg.grid
    frs = resolve_frs(cfg, cfg.stages, grid)
    comp = compute_components(cfg.scene, grid)
    written = []
    with _locked(cfg.out_dir):
        for stage in cfg.stages:
            atf = build_atf_set(
                cfg.scene, stage, frs, grid, cfg.ctl,
                directivity=cfg.directivity, hrtf=cfg.hrtf, components=comp,
            )
            path = Path(cfg.out_dir) / f"atf_{stage}.npz"
            save_atf_archive(path, atf, cfg.scene)
            load_atf_archive(path)
            written.append(path)
            log.info("wrote %s", path)
    return written


def cmd_design(cfg: RunConfig, atf_path) -> Path:
    atf_path = Path(atf_path)
    if not atf_path.exists():
        raise CliError(f"ATF archive not found: {atf_path}")
    atf, header = load_atf_archive(atf_path)
    edges = header.get("band_edges")
    bank = design_pressure_matching(atf, design_config(cfg, edges))
    with _locked(cfg.out_dir):
        path = Path(cfg.out_dir) / f"filters_{atf.stage}.txt"
        bank.save(path)
        FilterBank.load(path)
    log.info("wrote %s", path)
    return path


def cmd_ablate(cfg: RunConfig) -> list:
    grid = cfg.grid
    frs = resolve_frs(cfg, tuple(cfg.stages) + (cfg.eval_stage,), grid)
    plan = AblationPlan(
        scene=cfg.scene,
        design_stages=cfg.stages,
        eval_stage=cfg.eval_stage,
        design=design_config(cfg, tuple(s.band_edges for s in cfg.scene.speakers)),
        eps=cfg.epsilon,
        grid=grid,
        ctl=cfg.ctl,
        frs=frs,
        synthetic_fr=cfg.synthetic_fr,
        plan_id=cfg.plan_id,
        directivity=cfg.directivity,
        hrtf=cfg.hrtf,
    )
    report = run_ablation(plan)
    with _locked(cfg.out_dir):
        written = emit_report(report, cfg.out_dir, cfg.formats)
        # read back what was written
        if "json" in cfg.formats:
            load_report_json(Path(cfg.out_dir) / f"{cfg.plan_id}_report.json")
        if "csv" in cfg.formats:
            load_report_csv(cfg.out_dir, cfg.plan_id)
    for r in report.rows:
        print(f"{r.stage},{r.listener},{r.metric},{r.value:.2f}")
    return written


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "simulate-atf":
            cmd_simulate_atf(cfg)
        elif args.command == "design":
            cmd_design(cfg, args.atf)
        else:
            cmd_ablate(cfg)
    except ConfigError as exc:
        print(f"pszablate: config error: {exc}", file=sys.stderr)
        return 2
    except ArchiveError as exc:
        print(f"pszablate: {exc}", file=sys.stderr)
        return 1
    except Timeout:
        print(f"pszablate: output directory {cfg.out_dir} is locked by another run", file=sys.stderr)
        return 1
    except (CliError, ValueError, RuntimeError, OSError) as exc:
        print(f"pszablate: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
