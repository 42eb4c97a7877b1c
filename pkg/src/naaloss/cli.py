"""``naaloss`` command line.

Every subcommand accepts ``--config``, ``--seed`` and ``--out``; ``--set
key=value`` overrides single config keys.  Failures print one line of the
form ``error[<ExceptionName>]: <message>`` to stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import experiment as ex
from .exceptions import NAaLossError


def _common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory (or file, where noted)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; repeatable")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="naaloss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesise (x, y, z) triples to a dataset directory")
    _common(p)

    p = sub.add_parser("run-matrix", help="train and evaluate all model combinations")
    _common(p)
    p.add_argument("--data", help="dataset directory (default: config data_dir)")

    for name, regime in (("pretrain", "pretrain"), ("finetune", "finetune"), ("train-scratch", "scratch")):
        p = sub.add_parser(name, help=f"run the {regime} regime")
        _common(p)
        p.add_argument("--data", help="dataset directory")
        p.add_argument("--option", choices=ex.ARTIFACT_OPTIONS, default="beta")
        p.add_argument("--epochs", type=int)
        if regime == "finetune":
            p.add_argument("--checkpoint", required=True, help="pretrained checkpoint")
        p.set_defaults(regime=regime)

    p = sub.add_parser("enhance", help="enhance one WAV file")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="in_wav", required=True)
    p.add_argument("--identity", action="store_true", help="debug: bypass the mask network")

    p = sub.add_parser("decompose", help="export speech / artifact / residual-noise signals")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--x", required=True, help="clean speech WAV")
    p.add_argument("--y", required=True, help="noise WAV")
    p.add_argument("--z", required=True, help="noisy speech WAV")
    p.add_argument("--option", choices=ex.ARTIFACT_OPTIONS, default="beta")
    p.add_argument("--identity", action="store_true", help="debug: bypass the mask network")

    p = sub.add_parser("evaluate", help="per-clip metrics CSV for a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--split", choices=("test", "all"), default="test")
    p.add_argument("--option", choices=ex.ARTIFACT_OPTIONS)

    p = sub.add_parser("werr", help="relative WER reduction from a WER CSV")
    _common(p)
    p.add_argument("--wer", required=True, help="CSV with system_label,am_label,wer_percent")
    p.add_argument("--uc", required=True, help="system label of unprocessed clean speech")
    p.add_argument("--org", required=True, help="system label of the original enhancer")
    p.add_argument("--naa", action="append", help="NAaLoss system label; repeatable (default: all others)")

    p = sub.add_parser("report", help="render a run directory's matrix (and WERR) as text")
    _common(p)
    p.add_argument("--run", help="run-matrix output directory (default: --out)")
    p.add_argument("--werr", help="CSV produced by the werr command")
    return parser


def _config(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return ex.load_config(args.config, overrides)


def _require_out(args, what):
    if not args.out:
        raise ex.ConfigError(f"--out is required ({what})")
    return args.out


def run(args):
    cfg = _config(args)
    cmd = args.command
    if cmd == "synth":
        path = ex.cmd_synth(cfg, args.out)
        print(path)
    elif cmd == "run-matrix":
        out = args.out or cfg.work_dir
        ex.cmd_run_matrix(cfg, out, args.data)
        with open(os.path.join(out, "matrix.txt")) as fh:
            sys.stdout.write(fh.read())
    elif cmd in ("pretrain", "finetune", "train-scratch"):
        out = _require_out(args, "checkpoint directory")
        result = ex.cmd_train(cfg, args.regime, out, args.data, args.option,
                              getattr(args, "checkpoint", None), args.epochs)
        print(result.checkpoint_path)
    elif cmd == "enhance":
        ex.cmd_enhance(args.checkpoint, args.in_wav, _require_out(args, "output WAV"), args.identity)
    elif cmd == "decompose":
        out = _require_out(args, "output directory")
        ex.cmd_decompose(args.checkpoint, args.x, args.y, args.z, args.option, out, args.identity)
        print(out)
    elif cmd == "evaluate":
        out = _require_out(args, "metrics CSV")
        ex.cmd_evaluate(cfg, args.checkpoint, out, args.data, args.split, args.option)
        print(out)
    elif cmd == "werr":
        out = _require_out(args, "WERR CSV")
        for r in ex.cmd_werr(args.wer, out, args.uc, args.org, args.naa):
            value = "degenerate" if r["werr_percent"] is None else f"{r['werr_percent']:.2f}%"
            print(f"{r['am_label']},{r['naa_label']},{value}")
    elif cmd == "report":
        run_dir = args.run or args.out or cfg.work_dir
        sys.stdout.write(ex.cmd_report(run_dir, args.werr, report_option=cfg.report_option))
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (NAaLossError, OSError, ValueError, KeyError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"error[{type(exc).__name__}]: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
