"""Command-line entry point: ``holoqed run|validate|templates``."""
import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from filelock import FileLock, Timeout

from .. import errors
from .runio import LOCK_NAME, manifest_hash, version_stamp, write_json
from .schema import load_manifest, validate
from .templates import TEMPLATES

log = logging.getLogger("holoqed")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_SCHEMA = 2
EXIT_CROSS_FIELD = 3
EXIT_MISSING_FILE = 4
EXIT_LOCKED = 5
EXIT_NONCONVERGENCE = 6
EXIT_NUMERICAL = 7

_CONVERGENCE = (errors.NonConvergence, errors.NoConvergence, errors.AllRunsFailed, errors.NoProgress)
_NUMERICAL = (errors.PositivityLoss, errors.RankDeficiency, errors.AmplitudeBound, errors.DimensionMismatch,
              errors.LengthMismatch, errors.SizeExceeded)


def exit_code_for(exc):
    if isinstance(exc, errors.ManifestError):
        return EXIT_SCHEMA
    if isinstance(exc, FileNotFoundError):
        return EXIT_MISSING_FILE
    if isinstance(exc, _CONVERGENCE):
        return EXIT_NONCONVERGENCE
    if isinstance(exc, _NUMERICAL):
        return EXIT_NUMERICAL
    return EXIT_INTERNAL


def apply_thread_cap():
    """Honour HOLOQED_THREADS for BLAS pools and numba."""
    raw = os.environ.get("HOLOQED_THREADS")
    if not raw:
        return None
    n = max(1, int(raw))
    from threadpoolctl import threadpool_limits

    threadpool_limits(n)
    try:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass
    return n


def _split_violations(report):
    missing = [v for v in report["cross_field"] if "file not found" in v]
    other = [v for v in report["cross_field"] if v not in missing]
    return missing, other


def cmd_validate(args):
    try:
        manifest = load_manifest(args.manifest)
    except FileNotFoundError:
        print(f"manifest not found: {args.manifest}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except errors.ManifestError as exc:
        print(json.dumps({"valid": False, "schema": [str(exc)], "cross_field": []}, indent=2))
        return EXIT_SCHEMA
    report = validate(manifest, Path(args.manifest).parent)
    print(json.dumps(report, indent=2, ensure_ascii=False))
    if report["schema"]:
        return EXIT_SCHEMA
    missing, other = _split_violations(report)
    if other:
        return EXIT_CROSS_FIELD
    return EXIT_MISSING_FILE if missing else EXIT_OK


def execute(manifest, output_dir, base_dir="."):
    """Run a validated manifest into ``output_dir``; returns the results payload."""
    from .experiments import RUNNERS, RunContext

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    mhash = manifest_hash(manifest)
    with FileLock(str(out / LOCK_NAME), timeout=0):
        ctx = RunContext.from_manifest(manifest, out, mhash, base_dir)
        handler = logging.FileHandler(out / "run.log", mode="w")
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root = logging.getLogger("holoqed")
        root.addHandler(handler)
        root.setLevel(logging.INFO)
        try:
            t0 = time.perf_counter()
            payload = RUNNERS[manifest["experiment"]](ctx)
            log.info("%s finished in %.1f s", manifest["experiment"], time.perf_counter() - t0)
        finally:
            root.removeHandler(handler)
            handler.close()
        results = {"experiment": manifest["experiment"], "manifest_sha256": mhash, "seed": ctx.seed, **payload}
        write_json(out / "results.json", results)
        write_json(out / "manifest.json", manifest)
        (out / "VERSION").write_text(version_stamp() + "\n")
    return results


def cmd_run(args):
    try:
        manifest = load_manifest(args.manifest)
    except FileNotFoundError:
        print(f"manifest not found: {args.manifest}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except errors.ManifestError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    base = Path(args.manifest).parent
    report = validate(manifest, base)
    if report["schema"]:
        for e in report["schema"]:
            print(f"schema error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    missing, other = _split_violations(report)
    for v in other + missing:
        print(f"invalid manifest: {v}", file=sys.stderr)
    if other:
        return EXIT_CROSS_FIELD
    if missing:
        return EXIT_MISSING_FILE
    out = args.output_dir or manifest.get("output_dir") or f"runs/{manifest['experiment']}"
    apply_thread_cap()
    try:
        results = execute(manifest, out, base)
    except Timeout:
        print(f"output directory {out} is locked by another run", file=sys.stderr)
        return EXIT_LOCKED
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code
        code = exit_code_for(exc)
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        if code == EXIT_INTERNAL:
            log.exception("unexpected failure")
        return code
    print(json.dumps({"output_dir": str(out), "tables": results.get("tables", [])}))
    return EXIT_OK


def cmd_templates(args):
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, manifest in TEMPLATES.items():
        write_json(out / f"{name}.json", manifest)
        print(out / f"{name}.json")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="holoqed", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment manifest")
    r.add_argument("manifest")
    r.add_argument("-o", "--output-dir", default=None, help="overrides the manifest's output_dir")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="schema and cross-field checks, no side effects")
    v.add_argument("manifest")
    v.set_defaults(func=cmd_validate)
    t = sub.add_parser("templates", help="write the five ready-made experiment manifests")
    t.add_argument("-o", "--output-dir", default="templates")
    t.set_defaults(func=cmd_templates)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
