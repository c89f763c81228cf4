"""Command-line front end.

    windfuse simulate  --out DIR
    windfuse train     --out DIR [--speech WAV ...]
    windfuse enhance   --scenarios DIR --algorithm NAME [--dicts DIR] --out DIR
    windfuse evaluate  --scenarios DIR --enhanced DIR [DIR ...] --out DIR
    windfuse reproduce --out DIR [--dicts DIR] [--lam-sweep]

Every command accepts --config FILE, --profile {paper,desk}, --seed N and
repeated --set key=value overrides (keys as in `windfuse.config`). Settings
are resolved as profile, then config file, then --set, then --seed.

Exit codes: 0 success, 2 invalid configuration or inputs, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, pipeline
from .config import PROFILES, ConfigError, RunConfig
from .dictionary_learning import DictKind
from .io import (
    FormatError,
    atomic_write_text,
    load_dictionary,
    read_config,
    read_wav,
    save_dictionary,
    write_wav,
)
from .metrics import _raw_scores, evaluate_condition, score, write_metrics_csv
from .simulate import SAMPLE_RATE
from .stft import StftConfig, Waveform

log = logging.getLogger("windfuse")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
MANIFEST = "manifest.json"
MANIFEST_FORMAT = "windfuse-scenarios/1"
RUN_FILE = "run.json"
CHANNELS = ("clean_a", "clean_b", "noisy_a", "noisy_b")
EXPORT_PEAK = 0.5
DICT_FILES = {kind: f"{kind.name.lower()}.wfd" for kind in DictKind}


class UsageError(ValueError):
    """Bad command-line input, reported with exit code 2."""


# --- configuration ----------------------------------------------------------

def resolve_config(args) -> RunConfig:
    values: dict[str, str] = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        values.update(read_config(path))
    profile = args.profile or values.pop("profile", None) or "paper"
    cfg = RunConfig.preset(profile)
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        values[key.strip()] = value
    if args.seed is not None:
        if args.command in ("simulate", "reproduce"):
            values["sim.seed"] = str(args.seed)
        if args.command in ("train", "reproduce"):
            values["train.seed"] = str(args.seed)
    return cfg.with_overrides(values)


def _check_distinct(out: Path, *others) -> None:
    target = out.resolve()
    for other in others:
        if other is not None and Path(other).resolve() == target:
            raise UsageError(f"output directory {out} must differ from input {other}")


def _check_writable(out: Path) -> None:
    probe = out
    while not probe.exists():
        probe = probe.parent
    if not probe.is_dir():
        raise UsageError(f"{probe} is not a directory")


def _stft(cfg: RunConfig) -> StftConfig:
    return StftConfig.for_rate(SAMPLE_RATE, cfg.frame_ms)


def _pool_map(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# --- scenario directories ---------------------------------------------------

def scenario_id(snr_db: float, utterance: int) -> str:
    return f"snr{snr_db:+g}_u{utterance:02d}"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def manifest_text(entries: list[dict], cfg: RunConfig) -> str:
    doc = {
        "format": MANIFEST_FORMAT,
        "sample_rate": SAMPLE_RATE,
        "sim": {
            "snrs": list(cfg.sim.snrs),
            "utterances": cfg.sim.utterances,
            "duration_s": cfg.sim.duration_s,
            "seed": cfg.sim.seed,
        },
        "scenarios": entries,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    if not path.is_file():
        raise UsageError(f"no {MANIFEST} in {directory}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if doc.get("format") != MANIFEST_FORMAT or not isinstance(doc.get("scenarios"), list):
        raise FormatError(f"{path}: not a scenario manifest")
    for entry in doc["scenarios"]:
        for name in CHANNELS:
            if not (Path(directory) / entry["id"] / f"{name}.wav").is_file():
                raise UsageError(f"scenario {entry['id']} is missing {name}.wav")
    return doc


def _read_scenario(directory, entry) -> dict[str, Waveform]:
    base = Path(directory) / entry["id"]
    out = {name: read_wav(base / f"{name}.wav") for name in CHANNELS}
    for name, w in out.items():
        if w.sample_rate != SAMPLE_RATE:
            raise FormatError(f"{base / name}.wav: expected {SAMPLE_RATE} Hz, got {w.sample_rate}")
    return out


# --- simulate ---------------------------------------------------------------

def cmd_simulate(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    _check_writable(out)
    manifest = out / MANIFEST
    if manifest.exists() and not args.overwrite:
        raise UsageError(f"{manifest} already exists (use --overwrite to replace it)")
    entries = []
    for snr, u, sc in pipeline.scenario_grid(cfg):
        sid = scenario_id(snr, u)
        signals = {
            "clean_a": sc.clean_a.samples,
            "clean_b": sc.clean_b.samples,
            "noisy_a": sc.noisy_a.samples,
            "noisy_b": sc.noisy_b.samples,
        }
        # one gain per scenario keeps the channel and SNR relations intact
        peak = max(float(np.max(np.abs(x))) for x in signals.values())
        gain = EXPORT_PEAK / peak
        files = {}
        for name, x in signals.items():
            path = out / sid / f"{name}.wav"
            write_wav(path, Waveform(gain * x, SAMPLE_RATE))
            files[name] = _sha256(path)
        entries.append({
            "id": sid,
            "snr_db": float(snr),
            "utterance": u,
            "seed": sc.seed,
            "speed_class": sc.speed_class.value,
            "export_gain": gain,
            "files": files,
        })
        log.info("wrote scenario %s", sid)
    text = manifest_text(entries, cfg)
    atomic_write_text(manifest, text)
    digest = hashlib.sha256(text.encode()).hexdigest()
    print(f"{len(entries)} scenarios written to {out}; manifest sha256 {digest}")
    return EXIT_OK


# --- train ------------------------------------------------------------------

def cmd_train(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    _check_writable(out)
    speech = None
    if args.speech:
        speech = []
        for p in args.speech:
            if not Path(p).is_file():
                raise UsageError(f"speech file not found: {p}")
            w = read_wav(p)
            if w.sample_rate != SAMPLE_RATE:
                raise UsageError(f"{p}: expected {SAMPLE_RATE} Hz, got {w.sample_rate}")
            speech.append(w)
        total = sum(w.duration for w in speech)
        if total < 1.0:
            raise UsageError(f"insufficient training speech: {total:.2f} s (need at least 1 s)")
    dicts = pipeline.train_all(cfg, speech)
    for kind, d in dicts.items():
        save_dictionary(out / DICT_FILES[kind], d)
    print(f"wrote {len(dicts)} dictionaries ({cfg.train.num_atoms} atoms) to {out}")
    return EXIT_OK


def load_dictionaries(directory) -> dict:
    directory = Path(directory)
    missing = [name for name in DICT_FILES.values() if not (directory / name).is_file()]
    if missing:
        raise UsageError(f"missing dictionary files in {directory}: {', '.join(missing)}")
    dicts = {kind: load_dictionary(directory / name) for kind, name in DICT_FILES.items()}
    for kind, d in dicts.items():
        if d.kind != kind:
            raise FormatError(f"{DICT_FILES[kind]} holds a {d.kind.name} dictionary")
    return dicts


# --- enhance ----------------------------------------------------------------

def _enhance_job(job):
    entry, scenario_dir, out, algorithm, dicts, settings, frame_ms = job
    sig = _read_scenario(scenario_dir, entry)
    stft = StftConfig.for_rate(SAMPLE_RATE, frame_ms)
    prep = pipeline.prepare(sig["noisy_a"], sig["noisy_b"], stft)
    X, report = pipeline.run_algorithm(algorithm, prep, dicts, **settings)
    est = pipeline.to_waveform(X, prep)
    clipped = write_wav(out / f"{entry['id']}.wav", est)
    report.update(scenario=entry["id"], clipped_samples=clipped, settings=settings)
    atomic_write_text(out / f"{entry['id']}.json", json.dumps(report, indent=1) + "\n")
    return entry["id"]


def cmd_enhance(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    _check_distinct(out, args.scenarios, args.dicts)
    _check_writable(out)
    doc = load_manifest(args.scenarios)
    dicts = None
    if args.algorithm in pipeline.DICTIONARY_ALGORITHMS:
        if not args.dicts:
            raise UsageError(f"algorithm {args.algorithm!r} needs --dicts")
        dicts = load_dictionaries(args.dicts)
    elif args.dicts:
        log.info("%s does not use dictionaries; ignoring --dicts", args.algorithm)
    settings = pipeline._algorithm_settings(cfg, args.lam_scale, _stft(cfg).num_bins)
    jobs = [(e, args.scenarios, out, args.algorithm, dicts, settings, cfg.frame_ms)
            for e in doc["scenarios"]]
    done = _pool_map(_enhance_job, jobs, cfg.effective_workers())
    name = pipeline.label(args.algorithm, None if args.lam_scale == 1.0 else args.lam_scale)
    run = {"algorithm": name, "settings": settings, "scenarios": done}
    atomic_write_text(out / RUN_FILE, json.dumps(run, indent=2, sort_keys=True) + "\n")
    print(f"enhanced {len(done)} scenarios with {name} into {out}")
    return EXIT_OK


# --- evaluate ---------------------------------------------------------------

def _algorithm_name(directory: Path) -> str:
    run = directory / RUN_FILE
    if run.is_file():
        return json.loads(run.read_text())["algorithm"]
    return directory.name


def _summary(rows) -> str:
    means = {(r["condition_snr_db"], r["algorithm"], r["metric"]): r["mean"] for r in rows}
    snrs = sorted({k[0] for k in means})
    algs = sorted({k[1] for k in means})
    lines = [f"{'algorithm':24s} {'SNR':>6s} {'dSI-SDR':>9s} {'dSTOI':>8s} {'dLSD':>8s}"]
    for alg in algs:
        for snr in snrs:
            v = [means[(snr, alg, m)] for m in ("delta_si_sdr", "delta_stoi", "delta_lsd")]
            lines.append(f"{alg:24s} {snr:6g} {v[0]:9.3f} {v[1]:8.4f} {v[2]:8.3f}")
    return "\n".join(lines)


def long_table(records) -> str:
    """One line per scenario, algorithm and metric."""
    lines = ["condition_snr_db,algorithm,scenario,metric,value"]
    for snr, alg, sid, report in records:
        for metric, value in sorted(report.as_dict().items()):
            lines.append(f"{snr:g},{alg},{sid},{metric},{value:.6f}")
    return "\n".join(lines) + "\n"


def cmd_evaluate(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    enhanced = [Path(d) for d in args.enhanced or []]
    _check_distinct(out, args.scenarios, *enhanced)
    _check_writable(out)
    doc = load_manifest(args.scenarios)
    if not enhanced and not args.with_noisy:
        raise UsageError("nothing to evaluate: give --enhanced directories or --with-noisy")
    names = [_algorithm_name(d) for d in enhanced]
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate algorithm labels among enhanced directories: {names}")
    missing = [f"{d}/{e['id']}.wav" for d in enhanced for e in doc["scenarios"]
               if not (d / f"{e['id']}.wav").is_file()]
    if missing:
        raise UsageError(f"missing enhanced files for {len(missing)} pairs, e.g. {missing[0]}")

    records = []
    for entry in doc["scenarios"]:
        sig = _read_scenario(args.scenarios, entry)
        ref, noisy = sig["clean_a"], sig["noisy_a"]
        noisy_scores = _raw_scores(ref, noisy, SAMPLE_RATE)
        snr = entry["snr_db"]
        if args.with_noisy:
            records.append((snr, pipeline.NOISY, entry["id"],
                            score(ref, noisy, noisy, noisy_scores=noisy_scores)))
        for d, name in zip(enhanced, names):
            est = read_wav(d / f"{entry['id']}.wav")
            records.append((snr, name, entry["id"],
                            score(ref, est, noisy, noisy_scores=noisy_scores)))
    rows = evaluate_condition([(s, a, r) for s, a, _, r in records])
    write_metrics_csv(rows, out / "metrics.csv")
    atomic_write_text(out / "scores_long.csv", long_table(records))
    print(_summary(rows))
    return EXIT_OK


# --- reproduce --------------------------------------------------------------

def cmd_reproduce(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    _check_distinct(out, args.dicts)
    _check_writable(out)
    if args.dicts:
        dicts = load_dictionaries(args.dicts)
    else:
        dicts = pipeline.train_all(cfg)
        for kind, d in dicts.items():
            save_dictionary(out / "dictionaries" / DICT_FILES[kind], d)
    rows, _ = pipeline.run_experiment(cfg, dicts)
    write_metrics_csv(rows, out / "metrics.csv")
    print(_summary(rows))
    if args.lam_sweep:
        rows, _ = pipeline.run_experiment(cfg, dicts, pipeline.DICTIONARY_ALGORITHMS,
                                          lam_scales=cfg.enhance.lam_scales)
        write_metrics_csv(rows, out / "metrics_lambda.csv")
        print(_summary(rows))
    return EXIT_OK


# --- entry point ------------------------------------------------------------

COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "enhance": cmd_enhance,
    "evaluate": cmd_evaluate,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--profile", choices=sorted(PROFILES))
    common.add_argument("--seed", type=int, help="base seed of the command")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="windfuse", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write simulated test scenarios")
    p.add_argument("--overwrite", action="store_true", help="replace an existing manifest")

    p = sub.add_parser("train", parents=[common], help="train the three dictionaries")
    p.add_argument("--speech", nargs="+", help="16 kHz clean speech WAVs (default: simulated)")

    p = sub.add_parser("enhance", parents=[common], help="enhance every scenario")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--algorithm", required=True, choices=pipeline.ALGORITHMS)
    p.add_argument("--dicts", help="directory written by 'windfuse train'")
    p.add_argument("--lam-scale", type=float, default=1.0,
                   help="multiplier of the configured sparsity weight")

    p = sub.add_parser("evaluate", parents=[common], help="score enhanced outputs")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--enhanced", nargs="+", help="directories written by 'windfuse enhance'")
    p.add_argument("--with-noisy", action="store_true", help="also score the unprocessed input")

    p = sub.add_parser("reproduce", parents=[common],
                       help="train, enhance and score the whole simulated test set in memory")
    p.add_argument("--dicts", help="reuse trained dictionaries instead of training")
    p.add_argument("--lam-sweep", action="store_true",
                   help="also run the dictionary methods at each enhance.lam_scales multiple")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "lam_scale", 1.0) <= 0:
        print("windfuse: error: --lam-scale must be positive", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError, FormatError) as exc:
        print(f"windfuse: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # reported, not re-raised: the exit code carries it
        log.debug("runtime failure", exc_info=True)
        print(f"windfuse: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
