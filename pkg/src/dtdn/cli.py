"""Command-line entry point: synth, enrich, train, derain, eval, analyze, gradcheck.

Every option may also come from a flat JSON file given with ``--config``;
explicit flags win over the file, the file wins over built-in defaults.
The effective configuration is echoed next to each command's outputs.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis
from .errors import ContractError, DataError, FormatError, ParameterError
from .gradsuite import gradient_suite
from .image import read_ppm, write_ppm
from .metrics import evaluate_dataset
from .rain import DEFAULT_HEAVY_THRESHOLD, DatasetManifest, build_dataset
from .trainer import TrainConfig, derain, load_checkpoint, save_checkpoint, train

log = logging.getLogger("dtdn")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_IO, EXIT_DATA = 0, 1, 2, 3, 4

# defaults per command; flags not listed here are required
DEFAULTS = {
    "synth": {"n": 200, "size": 32, "seed": 0, "heavy_threshold": DEFAULT_HEAVY_THRESHOLD},
    "enrich": {"size": 32, "seed": 0, "heavy_threshold": DEFAULT_HEAVY_THRESHOLD},
    "train": {k: v for k, v in TrainConfig().to_dict().items()} | {"resume": None},
    "derain": {},
    "eval": {},
    "analyze": {"seed": 0, "instances": 3, "restarts": 64, "steps": 5000, "stop_after_found": None},
    "gradcheck": {"tol": 1e-4, "seed": 0},
}
REQUIRED = {
    "synth": ["out"], "enrich": ["input", "out"], "train": ["manifest", "out"],
    "derain": ["input", "ckpt", "out"], "eval": ["manifest", "derained", "report"],
    "analyze": ["report"], "gradcheck": [],
}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtdn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def cmd(name, help_text):
        sp = sub.add_parser(name, help=help_text, argument_default=S)
        sp.add_argument("--config", help="flat JSON file of option values")
        return sp

    sp = cmd("synth", "procedural clean images plus enriched rainy pairs")
    sp.add_argument("--out")
    sp.add_argument("--n", type=int)
    sp.add_argument("--size", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--heavy-threshold", type=float, dest="heavy_threshold")

    sp = cmd("enrich", "add 0-3 streak types to every clean PPM in a directory")
    sp.add_argument("--in", dest="input")
    sp.add_argument("--out")
    sp.add_argument("--size", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--heavy-threshold", type=float, dest="heavy_threshold")

    sp = cmd("train", "alternating GAN/CNN training")
    sp.add_argument("--manifest")
    sp.add_argument("--out")
    sp.add_argument("--rounds", type=int)
    sp.add_argument("--cycles", type=int)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--lr-gan", type=float, dest="lr_gan")
    sp.add_argument("--lr-cnn", type=float, dest="lr_cnn")
    sp.add_argument("--lambda", type=float, dest="lam")
    sp.add_argument("--radius", type=int)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--resume", help="checkpoint to continue from")

    sp = cmd("derain", "de-rain one PPM, or every PPM in a directory")
    sp.add_argument("--in", dest="input")
    sp.add_argument("--ckpt")
    sp.add_argument("--out")

    sp = cmd("eval", "PSNR/SSIM/UQI of derained images against clean ones")
    sp.add_argument("--manifest")
    sp.add_argument("--derained")
    sp.add_argument("--report")

    sp = cmd("analyze", "toy-scale loss interference demonstration")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--report")
    sp.add_argument("--instances", type=int)
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--stop-after-found", type=int, dest="stop_after_found",
                    help="end each instance's search after this many certified points")

    sp = cmd("gradcheck", "finite-difference check of every layer and loss")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--seed", type=int)
    return p


def resolve_config(command: str, flags: dict) -> dict:
    cfg = dict(DEFAULTS[command])
    path = flags.pop("config", None)
    if path is not None:
        try:
            from_file = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(from_file, dict):
            raise UsageError("config file must hold a flat JSON object")
        from_file.pop("command", None)
        allowed = set(DEFAULTS[command]) | set(REQUIRED[command])
        unknown = set(from_file) - allowed
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(from_file)
    cfg.update(flags)
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"{command}: missing required option(s): {', '.join(missing)}")
    return cfg


def _echo(path: Path, command: str, cfg: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"command": command, **cfg}, indent=2, sort_keys=True) + "\n")


def cmd_synth(cfg):
    out = Path(cfg["out"])
    m = build_dataset(out, cfg["n"], cfg["size"], cfg["seed"], heavy_threshold=cfg["heavy_threshold"])
    _echo(out / "config.json", "synth", cfg)
    log.info("wrote %d pairs (%d heavy) to %s", len(m), len(m.heavy()), out)


def cmd_enrich(cfg):
    src, out = Path(cfg["input"]), Path(cfg["out"])
    n = len([p for p in src.iterdir() if p.suffix.lower() in (".ppm", ".pnm")]) if src.is_dir() else 0
    if not src.is_dir():
        raise FileNotFoundError(f"input directory not found: {src}")
    m = build_dataset(out, n, cfg["size"], cfg["seed"], clean_dir=src,
                      heavy_threshold=cfg["heavy_threshold"])
    _echo(out / "config.json", "enrich", cfg)
    log.info("enriched %d images into %s", len(m), out)


def cmd_train(cfg):
    out = Path(cfg["out"])
    manifest = DatasetManifest.load(cfg["manifest"])
    train_keys = set(TrainConfig().to_dict())
    try:
        tcfg = TrainConfig.from_dict({k: v for k, v in cfg.items() if k in train_keys})
    except TypeError as exc:
        raise ParameterError(str(exc)) from exc
    model = None
    if cfg.get("resume"):
        model = load_checkpoint(Path(cfg["resume"]).read_bytes())
        if model.cfg.to_dict() | {"rounds": tcfg.rounds} != tcfg.to_dict():
            raise ParameterError("resume config differs from the checkpoint beyond 'rounds'")
        model.cfg = tcfg
    out.mkdir(parents=True, exist_ok=True)
    _echo(out / "config.json", "train", cfg)
    with open(out / "train_log.jsonl", "a" if model else "w") as fh:
        model, rows = train(manifest, tcfg, model,
                            on_row=lambda row: fh.write(json.dumps(row, sort_keys=True) + "\n"))
    (out / "checkpoint.bin").write_bytes(save_checkpoint(model))
    log.info("trained to round %d; %d updates logged", model.round, len(rows))


def cmd_derain(cfg):
    model = load_checkpoint(Path(cfg["ckpt"]).read_bytes())
    src, out = Path(cfg["input"]), Path(cfg["out"])
    if src.is_dir():
        out.mkdir(parents=True, exist_ok=True)
        files = sorted(p for p in src.iterdir() if p.suffix.lower() in (".ppm", ".pnm"))
        for p in files:
            write_ppm(out / p.name, derain(read_ppm(p), model))
        _echo(out / "config.json", "derain", cfg)
        log.info("derained %d images into %s", len(files), out)
    else:
        write_ppm(out, derain(read_ppm(src), model))
        _echo(out.with_name(out.name + ".config.json"), "derain", cfg)


def cmd_eval(cfg):
    manifest = DatasetManifest.load(cfg["manifest"])
    report = evaluate_dataset(manifest, cfg["derained"])
    path = Path(cfg["report"])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.dumps())
    _echo(path.with_name(path.name + ".config.json"), "eval", cfg)
    log.info("mean PSNR %s dB, SSIM %.4f, UQI %.4f over %d images",
             report.to_dict()["mean_psnr"], report.mean_ssim, report.mean_uqi, report.count)


def cmd_analyze(cfg):
    report = analysis.analyze(cfg["seed"], cfg["instances"], cfg["restarts"], cfg["steps"],
                              stop_after_found=cfg["stop_after_found"])
    path = Path(cfg["report"])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(analysis.analysis_json(report))
    _echo(path.with_name(path.name + ".config.json"), "analyze", cfg)
    found = sum(e["found"] for e in report["instances"])
    log.info("interference points certified on %d of %d instances", found, len(report["instances"]))


def cmd_gradcheck(cfg):
    reports = gradient_suite(cfg["tol"], cfg["seed"])
    ok = True
    for name, rep in reports.items():
        print(f"{'PASS' if rep.passed else 'FAIL'}  {name:32s} max rel err {rep.max_rel_error:.3e} "
              f"({rep.n_checked} coords)")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_INTERNAL


COMMANDS = {"synth": cmd_synth, "enrich": cmd_enrich, "train": cmd_train, "derain": cmd_derain,
            "eval": cmd_eval, "analyze": cmd_analyze, "gradcheck": cmd_gradcheck}


def run_command(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = vars(ns)
    command = flags.pop("command")
    try:
        cfg = resolve_config(command, flags)
        rc = COMMANDS[command](cfg)
        return EXIT_OK if rc is None else rc
    except (UsageError, ParameterError) as exc:
        print(f"dtdn {command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ContractError) as exc:
        print(f"dtdn {command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, FormatError) as exc:
        print(f"dtdn {command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.exception("internal error")
        print(f"dtdn {command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run_command())


if __name__ == "__main__":
    main()
