"""Command-line entry point: ``tubekit <command> [flags]``.

Settings resolve in three layers: command-line flags override the TOML file
given with ``--config``, which overrides the built-in defaults.  Logging is
controlled by the ``TUBELET_LOG`` environment variable (quiet, info, debug).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, seeding
from .compositor import check_shared_tubelets
from .config import DEFAULTS, PAIR_MODES, parse_config
from .contrastive import retrieval_eval, train
from .errors import TubekitError
from .pipeline import ABLATION_MODES, EpochPairs, ablate, ablation_table, build_pairs, probe_pairs
from .storage import (
    coverage_image,
    read_checkpoint,
    read_pair,
    read_pair_dataset,
    render_trajectory_plot,
    write_checkpoint,
    write_history,
    write_pair_dataset,
    write_ppm,
)
from .synthcorpus import build_corpus, generate_corpus
from .trajectory import MOTION_KINDS, Trajectory, generate

logger = logging.getLogger("tubekit")

LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

_D = DEFAULTS
_TRAIN_HELP = {
    "epochs": f"training epochs (default {_D['train']['epochs']})",
    "queue": f"negative queue capacity (default {_D['train']['queue']})",
    "tau": f"InfoNCE temperature (default {_D['train']['tau']})",
}


class _Parser(argparse.ArgumentParser):
    """Usage errors go to stderr on one line and exit with status 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _common(p, out_default):
    p.add_argument("--config", metavar="PATH", help="TOML run configuration (default: built-in defaults)")
    p.add_argument("--seed", type=int, help=f"run seed (default {_D['seed']})")
    p.add_argument("--out", metavar="DIR", default=out_default, help="output location (default %(default)s)")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes; 1 is fully sequential (default %(default)s)")


def _train_flags(p):
    for name in ("epochs", "queue"):
        p.add_argument(f"--{name}", type=int, help=_TRAIN_HELP[name])
    p.add_argument("--tau", type=float, help=_TRAIN_HELP["tau"])


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tubekit", description=__doc__.split("\n\n")[0],
                 epilog="Precedence: command-line flag > --config file > built-in default.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("corpus", help="write a synthetic background corpus")
    _common(p, "corpus")
    p.add_argument("--count", type=int, help=f"number of videos (default {_D['corpus']['count']})")

    p = sub.add_parser("traj", help="sample trajectories and plot them")
    _common(p, "traj")
    p.add_argument("--kind", choices=MOTION_KINDS, help=f"motion kind (default {_D['motion']['kind']})")
    p.add_argument("--n", type=int, help=f"raw samples before smoothing (default {_D['motion']['n']})")
    p.add_argument("--sigma", type=float, help=f"smoothing width (default {_D['motion']['sigma']})")
    p.add_argument("--k", type=int, help=f"keyframes for linear motion (default {_D['motion']['K']})")
    p.add_argument("--count", type=int, default=5, help="trajectories to draw (default %(default)s)")
    p.add_argument("--scale", type=int, default=4, help="plot magnification (default %(default)s)")

    p = sub.add_parser("pairs", help="materialize a pair dataset")
    _common(p, "pairs")
    p.add_argument("--mode", choices=PAIR_MODES, default="tubelet", help="pair construction (default %(default)s)")
    p.add_argument("--m", type=int, help=f"tubelets per pair (default {_D['pair']['m']})")
    p.add_argument("--count", type=int, default=10, help="pairs to write (default %(default)s)")

    p = sub.add_parser("train", help="train the encoder; writes checkpoint.tbck and history.csv")
    _common(p, "run")
    p.add_argument("--pairs", metavar="DIR", help="train on a saved pair dataset instead of fresh pairs")
    p.add_argument("--mode", choices=PAIR_MODES, default="tubelet",
                   help="pair construction for on-the-fly training (default %(default)s)")
    p.add_argument("--m", type=int, help=f"tubelets per pair (default {_D['pair']['m']})")
    _train_flags(p)

    p = sub.add_parser("eval", help="retrieval on held-out pairs")
    _common(p, "run")
    p.add_argument("--checkpoint", metavar="PATH", help="checkpoint to score (default OUT/checkpoint.tbck)")
    p.add_argument("--mode", choices=PAIR_MODES, help=f"probe construction (default {_D['eval']['probe_mode']})")
    p.add_argument("--m", type=int, help=f"tubelets per probe (default {_D['pair']['m']})")
    p.add_argument("--count", type=int, help=f"probe pairs (default {_D['eval']['probes']})")

    p = sub.add_parser("ablate", help="train every pair mode and compare retrieval")
    _common(p, "ablate")
    p.add_argument("--mode", action="append", choices=ABLATION_MODES,
                   help="restrict to this mode; repeatable (default: all of " + ", ".join(ABLATION_MODES) + ")")
    p.add_argument("--m", type=int, help=f"tubelets per pair (default {_D['pair']['m']})")
    p.add_argument("--count", type=int, help=f"probe pairs (default {_D['eval']['probes']})")
    _train_flags(p)

    p = sub.add_parser("plot", help="render trajectories and coverage from saved specs")
    p.add_argument("source", help="a pair dataset dir, one pair dir, or a traj JSON file")
    _common(p, "plot")
    p.add_argument("--scale", type=int, default=4, help="plot magnification (default %(default)s)")
    return ap


def _load_run(args, **overrides):
    run = parse_config(args.config)
    return run.with_overrides({"seed": args.seed, **overrides})


def _print_table(text, path):
    Path(path).write_text(text)
    sys.stdout.write(text)


def cmd_corpus(args):
    run = _load_run(args, **{"corpus.count": args.count})
    entries = build_corpus(run.corpus_spec(), args.out, jobs=args.jobs)
    print(f"wrote {len(entries)} clips to {args.out}")


def cmd_traj(args):
    run = _load_run(args, **{"motion.kind": args.kind, "motion.n": args.n,
                             "motion.sigma": args.sigma, "motion.K": args.k})
    T, H, W = run.clip_shape
    motion = run.pair_config("tubelet").motion_config(T, H, W)
    trajs = [generate(motion, seeding.split(run.seed, f"traj-{i}")) for i in range(args.count)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    render_trajectory_plot(trajs, (W, H), out / "trajectories.ppm", scale=args.scale)
    doc = {"frame": [W, H], "kind": motion.kind, "trajectories": [t.centers.tolist() for t in trajs]}
    (out / "trajectories.json").write_text(json.dumps(doc, sort_keys=True))
    print(f"wrote {out / 'trajectories.ppm'}")


def cmd_pairs(args):
    run = _load_run(args, **{"pair.m": args.m})
    clips = generate_corpus(run.corpus_spec(seed=seeding.split(run.seed, "corpus")))
    samples = build_pairs(clips, run.pair_config(args.mode), args.mode,
                          seeding.split(run.seed, f"pairs-{args.mode}"), args.count, jobs=args.jobs)
    bad = [(i, p) for i, s in enumerate(samples) for p in check_shared_tubelets(s)]
    if bad:
        raise TubekitError(f"pair {bad[0][0]} violates the shared-tubelet invariant: {bad[0][1]}")
    write_pair_dataset(samples, args.out)
    print(f"wrote {len(samples)} {args.mode} pairs to {args.out}")


def cmd_train(args):
    run = _load_run(args, **{"pair.m": args.m, "train.epochs": args.epochs,
                             "train.queue": args.queue, "train.tau": args.tau})
    if args.pairs:
        data = read_pair_dataset(args.pairs)
    else:
        clips = generate_corpus(run.corpus_spec(seed=seeding.split(run.seed, "corpus")))
        data = EpochPairs(clips, run.pair_config(args.mode), args.mode, seeding.split(run.seed, f"train-{args.mode}"))
    params, history = train(data, run.train_config(seed=seeding.split(run.seed, "train")))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_checkpoint(params, out / "checkpoint.tbck")
    write_history(history, out / "history.csv")
    print(f"final loss {history[-1].mean_loss:.4f}; wrote {out / 'checkpoint.tbck'}")


def cmd_eval(args):
    run = _load_run(args, **{"pair.m": args.m, "eval.probes": args.count, "eval.probe_mode": args.mode})
    out = Path(args.out)
    params = read_checkpoint(args.checkpoint or out / "checkpoint.tbck")
    probes = probe_pairs(run, run.seed)
    top1, top5 = retrieval_eval(params, probes)
    out.mkdir(parents=True, exist_ok=True)
    _print_table(f"probe_mode,probes,top1,top5\n{run['eval']['probe_mode']},{len(probes)},{top1:.4f},{top5:.4f}\n",
                 out / "eval.csv")


def cmd_ablate(args):
    run = _load_run(args, **{"pair.m": args.m, "eval.probes": args.count, "train.epochs": args.epochs,
                             "train.queue": args.queue, "train.tau": args.tau})
    results = ablate(run, run.seed, tuple(args.mode) if args.mode else ABLATION_MODES)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _print_table(ablation_table(results), out / "ablation.csv")


def _spec_trajectories(specs):
    return [Trajectory(np.asarray(s["centers"], dtype=np.float64)) for s in specs]


def cmd_plot(args):
    src = Path(args.source)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if src.is_file():
        doc = json.loads(src.read_text())
        render_trajectory_plot([Trajectory(np.asarray(c)) for c in doc["trajectories"]],
                               tuple(doc["frame"]), out / "trajectories.ppm", scale=args.scale)
        print(f"wrote {out / 'trajectories.ppm'}")
        return
    if (src / "pairs.jsonl").exists():
        samples = read_pair_dataset(src)
        names = [f"pair-{i:05d}" for i in range(len(samples))]
    else:
        samples, names = [read_pair(src)], [src.name]
    for name, s in zip(names, samples):
        T, H, W = s.union_a.shape
        trajs = _spec_trajectories(s.specs)
        if trajs:
            render_trajectory_plot(trajs, (W, H), out / f"{name}-traj.ppm", scale=args.scale)
        write_ppm(coverage_image(s.union_a, args.scale), out / f"{name}-cover.ppm")
    written = len(samples)
    print(f"rendered {written} pairs to {out}")


COMMANDS = {
    "corpus": cmd_corpus, "traj": cmd_traj, "pairs": cmd_pairs, "train": cmd_train,
    "eval": cmd_eval, "ablate": cmd_ablate, "plot": cmd_plot,
}


def _setup_logging():
    level = os.environ.get("TUBELET_LOG", "info").lower()
    if level not in LOG_LEVELS:
        raise _UsageError(f"TUBELET_LOG must be one of {', '.join(LOG_LEVELS)}; got {level!r}")
    root = logging.getLogger("tubekit")
    root.setLevel(LOG_LEVELS[level])
    if not root.handlers:
        h = logging.StreamHandler(sys.stderr)
        h.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(h)


def run(argv=None) -> int:
    """Run one command; return the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _setup_logging()
    except _UsageError as exc:
        print(f"tubekit: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except (TubekitError, OSError, ValueError, KeyError) as exc:
        msg = " ".join(str(exc).split())
        print(f"tubekit {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
