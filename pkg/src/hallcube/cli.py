"""Command-line client for the pipeline service.

Talks to an in-process application instance by default, so no server
needs to run; `--server URL` targets a live deployment instead and
every subcommand behaves identically against either.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import asyncio
import json
import os
import sys

import httpx

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

STUDY_COMMANDS = {
    "table1": "table1",
    "unseen": "unseen",
    "ablate": "ablation",
    "crossface": "crossface",
    "sensitivity": "sensitivity",
}


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p]


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p]


def _exponents(text: str) -> list[int]:
    """Downsample exponent spec: 'A..B' inclusive range or 'k1,k2,...'."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        ks = list(range(int(lo), int(hi) + 1))
    else:
        ks = [int(p) for p in text.split(",") if p]
    if not ks or any(k < 0 for k in ks):
        raise argparse.ArgumentTypeError(
            f"exponents must be >= 0, got {text!r}")
    return [2 ** k for k in ks]


def _default_out(command: str) -> str:
    return os.path.join(os.environ.get("HALLCUBE_OUT", "runs"), command)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hallcube",
        description="Synthetic Hall-sensor cuboid: datasets, training,"
                    " evaluation, and studies.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", default=None,
                        help="base URL of a running service;"
                             " default runs in-process")
    common.add_argument("--seed", type=int, default=0,
                        help="master seed for every derived stream")
    train_opts = argparse.ArgumentParser(add_help=False)
    train_opts.add_argument("--small", action="store_true",
                            help="compact surrogate network with its tuned"
                                 " schedule instead of the full-width net")
    train_opts.add_argument("--sizes", type=_int_list, default=None,
                            metavar="N,N,...",
                            help="explicit layer sizes, comma separated")
    train_opts.add_argument("--epochs", type=int, default=None,
                            help="override training epochs")
    train_opts.add_argument("--lr", type=float, default=None,
                            help="override learning rate")
    train_opts.add_argument("--batch", type=int, default=None,
                            help="override batch size")

    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, *parents, out: bool = True):
        p = sub.add_parser(name, help=help_text, parents=list(parents))
        if out:
            p.add_argument("-o", "--out", default=None,
                           help="output directory (default"
                                " $HALLCUBE_OUT/<command>)")
        return p

    p = add("gen", "generate one face's labeled dataset", common)
    p.add_argument("--face", type=int, required=True, choices=range(1, 6))
    p.add_argument("--scale", type=float, default=0.05)
    p.add_argument("--noise-sd", type=float, default=2.0)
    p.add_argument("--no-quantize", action="store_true",
                   help="keep unquantized force labels")
    p.add_argument("--jobs", type=int, default=1)

    p = add("train", "train a heatmap regressor on a dataset file",
            common, train_opts)
    p.add_argument("--data", required=True, help="dataset CSV path")

    p = add("eval", "evaluate a checkpoint against a dataset file", common)
    p.add_argument("--ckpt", required=True, help="checkpoint directory")
    p.add_argument("--data", required=True, help="dataset CSV path")
    p.add_argument("--split", choices=("test", "all"), default="test")

    p = add("table1", "per-face accuracy study over all five faces",
            common, train_opts)
    p.add_argument("--faces", type=_int_list, default=None, metavar="F,F,...")
    p.add_argument("--scale", type=float, default=0.05)
    p.add_argument("--jobs", type=int, default=1)

    p = add("unseen", "train on a location lattice, probe the full grid",
            common, train_opts)
    p.add_argument("--face", type=int, default=1, choices=range(1, 6))
    p.add_argument("--scale", type=float, default=0.05)
    p.add_argument("--jobs", type=int, default=1)

    p = add("ablate", "shrink the training set by powers of two",
            common, train_opts)
    p.add_argument("--face", type=int, default=1, choices=range(1, 6))
    p.add_argument("--factors", type=_exponents, default=None,
                   metavar="A..B|k,k,...",
                   help="downsample exponents k, keeping every 2^k-th row")
    p.add_argument("--scale", type=float, default=0.05)
    p.add_argument("--jobs", type=int, default=1)

    p = add("crossface", "opposite-face load sweep on a jaw pair",
            common, train_opts)
    p.add_argument("--faces", type=_int_list, default=None, metavar="F,F",
                   help="jaw pair, default 3,5")
    p.add_argument("--bins", type=_float_list, default=None,
                   metavar="B,B,...",
                   help="opposite-face force fractions")
    p.add_argument("--scale", type=float, default=0.05)
    p.add_argument("--jobs", type=int, default=1)

    p = add("sensitivity", "per-location force sensitivity correlation",
            common, train_opts)
    p.add_argument("--face", type=int, default=1, choices=range(1, 6))
    p.add_argument("--scale", type=float, default=0.05)
    p.add_argument("--jobs", type=int, default=1)

    p = add("report", "re-render a run directory into table and figures",
            common)
    p.add_argument("run_dir", help="directory holding summary.json")

    return parser


def request(server: str | None, method: str, path: str,
            payload: dict | None = None) -> dict:
    """One call against the remote or in-process application."""
    async def go():
        if server:
            transport = None
            base = server
        else:
            from .service import create_app
            transport = httpx.ASGITransport(app=create_app())
            base = "http://hallcube.internal"
        async with httpx.AsyncClient(transport=transport, base_url=base,
                                     timeout=None) as client:
            resp = await client.request(method, path, json=payload)
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except (ValueError, AttributeError):
                detail = resp.text
            raise RuntimeError(detail)
        return resp.json()

    return asyncio.run(go())


def _overrides(args) -> dict | None:
    fields = {"max_epochs": args.epochs, "learning_rate": args.lr,
              "batch_size": args.batch}
    fields = {k: v for k, v in fields.items() if v is not None}
    return fields or None


def _study_payload(args, **extra) -> dict:
    payload = {
        "seed": args.seed,
        "scale": args.scale,
        "small": args.small,
        "sizes": args.sizes,
        "overrides": _overrides(args),
        "jobs": args.jobs,
        "out_dir": args.out or _default_out(args.command),
    }
    payload.update(extra)
    return payload


def run_command(args) -> dict:
    if args.command == "gen":
        return request(args.server, "POST", "/datasets/generate", {
            "face": args.face, "scale": args.scale, "seed": args.seed,
            "noise_sd": args.noise_sd, "quantize": not args.no_quantize,
            "jobs": args.jobs, "out_dir": args.out or _default_out("gen"),
        })
    if args.command == "train":
        return request(args.server, "POST", "/train", {
            "data_path": args.data, "seed": args.seed, "small": args.small,
            "sizes": args.sizes, "overrides": _overrides(args),
            "out_dir": args.out or _default_out("train"),
        })
    if args.command == "eval":
        return request(args.server, "POST", "/eval", {
            "checkpoint_dir": args.ckpt, "data_path": args.data,
            "split": args.split, "out_dir": args.out,
        })
    if args.command == "report":
        return request(args.server, "POST", "/report", {
            "run_dir": args.run_dir, "out_dir": args.out,
        })
    study = STUDY_COMMANDS[args.command]
    extra = {}
    if args.command in ("table1", "crossface") and args.faces is not None:
        extra["faces"] = args.faces
    if args.command == "unseen":
        extra["unseen_face"] = args.face
    if args.command in ("ablate", "sensitivity"):
        extra["faces"] = [args.face]
    if args.command == "ablate" and args.factors is not None:
        extra["factors"] = args.factors
    if args.command == "crossface" and args.bins is not None:
        extra["bins"] = args.bins
    return request(args.server, "POST", f"/studies/{study}",
                   _study_payload(args, **extra))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = run_command(args)
    except RuntimeError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except httpx.HTTPError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
