"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
malformed inputs), 3 numerical failure. Errors print one line to stderr
with a machine-parsable prefix: "adists: {usage|data|numeric}: ...".

Weight archives resolve from --weights, then ADISTS_WEIGHTS, then a
built-in seeded synthetic archive (test grade; a stderr note says so).
Classifier params resolve from --params, then ADISTS_PARAMS, then the
packaged defaults fitted on the synthetic corpus.
"""

import argparse
import json
import os
import sys

import numpy as np

__all__ = ["main"]


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class NumericError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_METRICS = ("mse", "ssim", "lpips", "dists", "adists")
_RECOVER_METRICS = {
    "mse": "mse",
    "ssim": "msssim",
    "adists": "adists",
    "adists-ref": "adists_reference_weighted",
}


def _build_parser():
    p = _Parser(prog="adists", description="Adaptive structure/texture image quality tools")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    def common(sp, weights=True, params=True, seed=True):
        if weights:
            sp.add_argument("--weights", help="weight archive path (env ADISTS_WEIGHTS)")
        if params:
            sp.add_argument("--params", help="classifier params file (env ADISTS_PARAMS)")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--json", action="store_true", help="machine-readable output")

    sp = sub.add_parser("score", help="score one reference/distorted pair")
    sp.add_argument("--metric", required=True, choices=_METRICS)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--dist", required=True)
    sp.add_argument("--pooling", choices=("min", "ref"), default="min")
    sp.add_argument("--resize", type=int, default=256,
                    help="short side before scoring; 0 keeps native size")
    common(sp)

    sp = sub.add_parser("maps", help="texture probability maps per stage")
    sp.add_argument("--image", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--resize", type=int, default=256)
    common(sp)

    sp = sub.add_parser("fit-classifier", help="fit logistic params on a patch corpus")
    sp.add_argument("--corpus", required=True, help="manifest CSV: path,label,size")
    sp.add_argument("--out", required=True, help="params file to write")
    common(sp)

    sp = sub.add_parser("eval", help="evaluate a metric on a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--mode", choices=("mos", "2afc"),
                    help="must match the manifest header when given")
    sp.add_argument("--metric", required=True, choices=_METRICS)
    sp.add_argument("--out", required=True, help="report JSON path")
    sp.add_argument("--cache", help="per-record score CSV path")
    sp.add_argument("--resize", type=int, default=256)
    sp.add_argument("--threads", type=int, default=1)
    common(sp)

    sp = sub.add_parser("recover", help="gradient-descent reference recovery")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--metric", required=True, choices=tuple(_RECOVER_METRICS))
    sp.add_argument("--init", choices=("noise", "blur"), default="blur")
    sp.add_argument("--steps", type=int, default=2000)
    sp.add_argument("--step-size", type=float, default=1.0)
    sp.add_argument("--out", required=True, help="recovered image PNG")
    sp.add_argument("--trace", help="CSV of step,value,psnr")
    common(sp)

    sp = sub.add_parser("archive-inspect", help="list weight archive entries")
    sp.add_argument("--archive", required=True)
    sp.add_argument("--json", action="store_true")

    return p


# -- resource resolution -------------------------------------------------------

def _load_archive_from(path):
    from .archive import ArchiveError, load_archive

    try:
        return load_archive(path)
    except (OSError, ArchiveError) as e:
        raise DataError(f"weight archive {path!r}: {e}") from e


def _resolve_weights(flag):
    path = flag or os.environ.get("ADISTS_WEIGHTS")
    if path:
        return _load_archive_from(path), path
    from .backbone import synthetic_archive

    print(
        "adists: note: using built-in synthetic test weights "
        "(set --weights or ADISTS_WEIGHTS for pretrained scores)",
        file=sys.stderr,
    )
    return synthetic_archive(seed=0), "(synthetic)"


def _resolve_params(flag):
    from .texture import load_params

    path = flag or os.environ.get("ADISTS_PARAMS")
    if path:
        try:
            return load_params(path), path
        except (OSError, ValueError) as e:
            raise DataError(f"params file {path!r}: {e}") from e
    from importlib import resources

    ref = resources.files("adists").joinpath("data/default_params.txt")
    try:
        text = ref.read_text(encoding="utf-8")
    except (FileNotFoundError, OSError) as e:
        raise DataError("packaged default params missing; pass --params") from e
    from .texture import parse_params

    try:
        return parse_params(text), "(packaged defaults)"
    except ValueError as e:
        raise DataError(f"packaged default params: {e}") from e


def _backbone(weights):
    from .backbone import Backbone

    try:
        return Backbone(weights)
    except (KeyError, ValueError) as e:
        raise DataError(f"weight archive does not fit the topology: {e}") from e


def _read_image(path, resize=0):
    from .images import decode_image
    from .tensor import resize_bicubic

    try:
        img = decode_image(path)
    except (OSError, ValueError) as e:
        raise DataError(f"image {path!r}: {e}") from e
    if resize:
        try:
            img = resize_bicubic(img, resize)
        except ValueError as e:
            raise DataError(f"image {path!r}: {e}") from e
    return img


def _check_score(value):
    if not np.isfinite(value):
        raise NumericError(f"non-finite score {value!r}")
    return float(value)


def _emit(args, payload, plain_lines):
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in plain_lines:
            print(line)


# -- subcommands ----------------------------------------------------------------

def _cmd_score(args):
    from . import metrics as M

    x = _read_image(args.ref, args.resize)
    y = _read_image(args.dist, args.resize)
    if x.shape != y.shape:
        raise DataError(f"image size mismatch: {x.shape} vs {y.shape}")
    if args.metric == "mse":
        score = M.mse(x, y)
    elif args.metric == "ssim":
        score = M.msssim_mean(x, y)
    else:
        weights, _ = _resolve_weights(args.weights)
        bb = _backbone(weights)
        if args.metric == "adists":
            params, _ = _resolve_params(args.params)
            try:
                if args.pooling == "min":
                    score = M.adists(x, y, bb, params)
                else:
                    score = M.adists_reference_weighted(x, y, bb, params)
            except ValueError as e:
                raise DataError(str(e)) from e
        elif args.metric == "dists":
            w = M.load_dists_weights(weights, bb.config.channel_counts)
            score = M.dists(bb.extract(x), bb.extract(y), w)
        else:
            w = M.load_lpips_weights(weights, bb.config.channel_counts)
            score = M.lpips_distance(bb.extract(x), bb.extract(y), w)
    value = _check_score(score.value)
    if score.note and not args.json:
        print(f"adists: note: {score.note}", file=sys.stderr)
    payload = {
        "metric": score.metric,
        "value": value,
        "breakdown": score.breakdown,
        "note": score.note,
    }
    _emit(args, payload, [f"{value:.6f}"])
    return 0


def _cmd_maps(args):
    from .images import encode_gray
    from .texture import emit_probability_maps

    img = _read_image(args.image, args.resize)
    weights, _ = _resolve_weights(args.weights)
    bb = _backbone(weights)
    params, _ = _resolve_params(args.params)
    try:
        maps = emit_probability_maps(img, bb, params)
    except ValueError as e:
        raise DataError(str(e)) from e
    os.makedirs(args.out, exist_ok=True)
    paths = []
    for stage, arr in maps:
        path = os.path.join(args.out, f"p_stage{stage}.png")
        encode_gray(arr, path)
        paths.append(path)
    _emit(args, {"maps": paths}, paths)
    return 0


def _cmd_fit_classifier(args):
    from .texture import fit_classifier_detailed, load_corpus_manifest, save_params

    weights, _ = _resolve_weights(args.weights)
    bb = _backbone(weights)
    try:
        corpus = load_corpus_manifest(args.corpus)
    except (OSError, ValueError) as e:
        raise DataError(f"corpus {args.corpus!r}: {e}") from e
    try:
        params, report = fit_classifier_detailed(corpus, bb)
    except ValueError as e:
        raise DataError(str(e)) from e
    for i in range(6):
        if not (np.isfinite(params.w[i]) and np.isfinite(params.b[i])):
            raise NumericError(f"stage {i} fit produced non-finite parameters")
    save_params(params, args.out)
    payload = {
        "out": args.out,
        "stages": {
            str(s): {"accuracy": info["accuracy"], "n": info["n"]}
            for s, info in report.items()
        },
    }
    lines = [
        f"stage {s}: accuracy {info['accuracy']:.3f} (n={info['n']})"
        for s, info in sorted(report.items())
    ] + [f"wrote {args.out}"]
    _emit(args, payload, lines)
    return 0


def _cmd_eval(args):
    from .evaluation import EvalConfig, EvalError, load_manifest, run_eval

    try:
        manifest = load_manifest(args.manifest)
    except (OSError, EvalError) as e:
        raise DataError(f"manifest {args.manifest!r}: {e}") from e
    if args.mode and args.mode != manifest.mode:
        raise DataError(
            f"manifest {args.manifest!r} is {manifest.mode} mode, not {args.mode}"
        )
    cfg = EvalConfig(metric=args.metric, resize=args.resize,
                     threads=args.threads, seed=args.seed)
    if args.metric in ("lpips", "dists", "adists"):
        weights, _ = _resolve_weights(args.weights)
        cfg.backbone = _backbone(weights)
        cfg.weights_archive = weights
    if args.metric == "adists":
        cfg.params, _ = _resolve_params(args.params)
    try:
        report = run_eval(manifest, cfg, cache_path=args.cache)
    except EvalError as e:
        raise DataError(str(e)) from e
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    overall = report["overall"]
    if manifest.mode == "mos":
        if overall.get("degenerate"):
            lines = [f"overall: degenerate ({overall.get('reason', '')}), n={overall['n']}"]
        else:
            lines = [
                "overall: "
                f"plcc {overall['plcc']:.4f}  srcc {overall['srcc']:.4f}  "
                f"krcc {overall['krcc']:.4f}  n={overall['n']}"
            ]
    else:
        lines = [f"overall: 2afc {overall['two_afc']:.4f}  n={overall['n']}"]
    lines.append(f"wrote {args.out}")
    if report["n_failed"]:
        lines.append(f"{report['n_failed']} record(s) failed; see report")
    _emit(args, report, lines)
    return 0


def _cmd_recover(args):
    from .images import encode_image
    from .recovery import recover_reference

    x = _read_image(args.ref)
    if max(x.shape[1], x.shape[2]) > 96:
        print(
            "adists: note: recovery is meant for small images (<= 96 px); "
            "this may take long",
            file=sys.stderr,
        )
    metric = _RECOVER_METRICS[args.metric]
    backbone = params = None
    if metric.startswith("adists"):
        weights, _ = _resolve_weights(args.weights)
        backbone = _backbone(weights)
        params, _ = _resolve_params(args.params)
    report = recover_reference(
        x,
        init=args.init,
        metric=metric,
        steps=args.steps,
        step_size=args.step_size,
        backbone=backbone,
        params=params,
        seed=args.seed,
    )
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as f:
            f.write("step,value,psnr\n")
            for step, value, p in report.trace:
                f.write(f"{step},{value!r},{p!r}\n")
    encode_image(report.final, args.out)
    if report.aborted:
        raise NumericError(f"recovery diverged: {report.message}")
    last = report.trace[-1]
    payload = {
        "steps_accepted": len(report.trace) - 1,
        "final_value": last[1],
        "final_psnr": last[2],
        "initial_psnr": report.trace[0][2],
        "converged": report.converged,
        "message": report.message,
        "out": args.out,
    }
    lines = [
        f"steps accepted: {len(report.trace) - 1}",
        f"metric: {last[1]:.6f}",
        f"psnr: {report.trace[0][2]:.2f} -> {last[2]:.2f} dB",
        f"wrote {args.out}",
    ]
    _emit(args, payload, lines)
    return 0


def _cmd_archive_inspect(args):
    archive = _load_archive_from(args.archive)
    entries = []
    for name, arr in archive.items():
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": str(arr.dtype),
                "min": float(arr.min()),
                "max": float(arr.max()),
            }
        )
    if args.json:
        print(json.dumps({"path": args.archive, "entries": entries}, indent=2))
    else:
        for e in entries:
            shape = "x".join(str(d) for d in e["shape"])
            print(f"{e['name']:24s} {shape:>16s} {e['dtype']}  "
                  f"[{e['min']:.4g}, {e['max']:.4g}]")
        print(f"{len(entries)} entries")
    return 0


_COMMANDS = {
    "score": _cmd_score,
    "maps": _cmd_maps,
    "fit-classifier": _cmd_fit_classifier,
    "eval": _cmd_eval,
    "recover": _cmd_recover,
    "archive-inspect": _cmd_archive_inspect,
}


def dispatch(argv):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    return _COMMANDS[args.command](args)


def main(argv=None):
    try:
        return dispatch(sys.argv[1:] if argv is None else argv)
    except UsageError as e:
        print(f"adists: usage: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"adists: data: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"adists: numeric: {e}", file=sys.stderr)
        return 3
    except KeyboardInterrupt:
        print("adists: interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
