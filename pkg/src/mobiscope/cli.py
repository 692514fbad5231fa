"""Command-line entry point: validate, fuse, export-geojson, synth, serve.

Exit codes are a stable contract: 0 success, 1 validation/input failure,
2 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import canonical, params as params_mod
from .errors import BindError, IoError, ManifestError, MobiscopeError, VersionError
from .fusion import BUNDLE_VERSION, export_bundle, load_bundle
from .ingest import parse_manifest, parse_stream
from .pipeline import run_session
from .synth import SynthScenario, generate_session, score_against_truth


def _parse_set(values: list[str]) -> dict:
    overrides = {}
    for item in values:
        if "=" not in item:
            raise ManifestError("/parameters", f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    return overrides


def _parse_segments(spec: str) -> dict:
    mode, _, length = spec.partition(":")
    modes = {"distance": "by_distance", "time": "by_time"}
    if mode not in modes or not length:
        raise ManifestError("/parameters", f"--segments expects distance:<m> or time:<s>, got {spec!r}")
    return {"fusion.segment_mode": modes[mode], "fusion.segment_length": float(length)}


def cmd_validate(session_dir: str, as_json: bool = False) -> int:
    """Parse the manifest and every stream; report counts and errors."""
    manifest_path = Path(session_dir) / "session.json"
    report: dict = {"session": str(manifest_path), "streams": [], "errors": []}
    try:
        manifest = parse_manifest(manifest_path)
    except (MobiscopeError, OSError) as exc:
        report["errors"].append(str(exc))
        _print_validate(report, as_json)
        return 1
    for decl in manifest.streams:
        entry: dict = {"kind": decl.kind, "path": decl.path}
        try:
            series = parse_stream(decl, manifest.base_dir)
            entry["samples"] = len(series)
            if len(series) > 0:
                entry["t_first_us"] = int(series.t_us[0])
                entry["t_last_us"] = int(series.t_us[-1])
        except (MobiscopeError, OSError) as exc:
            entry["error"] = str(exc)
            report["errors"].append(str(exc))
        report["streams"].append(entry)
    _print_validate(report, as_json)
    return 1 if report["errors"] else 0


def _print_validate(report: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report, indent=2, sort_keys=True))
        return
    for entry in report["streams"]:
        if "error" in entry:
            print(f"  {entry['kind']:20s} ERROR {entry['error']}")
        else:
            span = ""
            if "t_first_us" in entry:
                span = f" [{entry['t_first_us']} .. {entry['t_last_us']}]"
            print(f"  {entry['kind']:20s} {entry['samples']:8d} samples{span}")
    for err in report["errors"]:
        print(f"error: {err}", file=sys.stderr)
    print("validation " + ("FAILED" if report["errors"] else "OK"))


def cmd_fuse(session_dir: str, out_dir: str, overrides: dict | None = None, as_json: bool = False) -> int:
    manifest = parse_manifest(Path(session_dir) / "session.json")
    bundle = run_session(manifest, overrides)
    out = export_bundle(bundle, out_dir)
    canonical.dump(
        {
            "version": BUNDLE_VERSION,
            "session_id": bundle.session_id,
            "parameters": bundle.params,
            "segment_count": len(bundle.segments),
            "warnings": bundle.warnings,
        },
        out / "run_report.json",
    )
    if as_json:
        print(json.dumps({"bundle": str(out), "counts": bundle.counts, "warnings": bundle.warnings}, sort_keys=True))
    else:
        print(f"bundle written to {out}")
        for key in sorted(bundle.counts):
            print(f"  {key}: {bundle.counts[key]}")
        for w in bundle.warnings:
            print(f"  warning: {w}")
    return 0


def cmd_export_geojson(bundle_dir: str, out_file: str) -> int:
    bundle_path = Path(bundle_dir) / "bundle.json"
    if not bundle_path.is_file():
        raise IoError(f"bundle.json not found in {bundle_dir}")
    index = canonical.load(bundle_path)
    if index.get("version") != BUNDLE_VERSION:
        raise VersionError(f"unsupported bundle version {index.get('version')!r}")
    src = Path(bundle_dir) / index["files"]["segments"]
    data = src.read_bytes()
    Path(out_file).write_bytes(data)
    print(f"wrote {out_file}")
    return 0


def cmd_synth(out_dir: str, scenario_file: str | None = None, seed: int | None = None, score: bool = False) -> int:
    if scenario_file is not None:
        doc = json.loads(Path(scenario_file).read_text(encoding="utf-8"))
        scenario = scenario_from_dict(doc)
    else:
        scenario = SynthScenario()
    if seed is not None:
        scenario = scenario_with_seed(scenario, seed)
    manifest_path, _truth = generate_session(scenario, out_dir)
    print(f"session written to {manifest_path.parent} (seed {scenario.seed})")
    return 0


def scenario_from_dict(doc: dict) -> SynthScenario:
    def tuplify(v):
        if isinstance(v, list):
            return tuple(tuplify(x) for x in v)
        return v

    known = {f.name for f in SynthScenario.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(doc) - known
    if unknown:
        raise ManifestError("/scenario", f"unknown scenario fields: {sorted(unknown)}")
    kwargs = {k: (dict(v) if k == "parameters" else tuplify(v)) for k, v in doc.items()}
    return SynthScenario(**kwargs)


def scenario_with_seed(scenario: SynthScenario, seed: int) -> SynthScenario:
    from dataclasses import replace

    return replace(scenario, seed=seed)


class _BundleHandler(SimpleHTTPRequestHandler):
    extensions_map = {
        **SimpleHTTPRequestHandler.extensions_map,
        ".json": "application/json",
        ".geojson": "application/geo+json",
    }

    def end_headers(self):
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Cache-Control", "no-store")
        super().end_headers()

    def log_message(self, fmt, *args):  # quiet by default
        pass


def make_server(bundle_dir: str, port: int) -> ThreadingHTTPServer:
    """Build (but do not start) the read-only bundle server."""
    load_bundle(bundle_dir)  # validates version and structure up front
    root = str(Path(bundle_dir).resolve())

    class Handler(_BundleHandler):
        def __init__(self, *args, **kwargs):
            super().__init__(*args, directory=root, **kwargs)

    try:
        return ThreadingHTTPServer(("127.0.0.1", port), Handler)
    except OSError as exc:
        raise BindError(f"cannot bind port {port}: {exc}") from exc


def cmd_serve(bundle_dir: str, port: int) -> int:
    server = make_server(bundle_dir, port)
    print(f"serving {bundle_dir} on http://127.0.0.1:{port}/ (Ctrl-C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mobiscope", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a session directory")
    p.add_argument("--session", required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("fuse", help="run the full pipeline and write a bundle")
    p.add_argument("--session", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--segments", default=None, metavar="distance:10|time:30")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("export-geojson", help="copy segments.geojson out of a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic session with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--scenario", default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("serve", help="serve a bundle directory over HTTP")
    p.add_argument("--bundle", required=True)
    p.add_argument("--port", type=int, default=8765)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args.session, args.json)
        if args.command == "fuse":
            overrides = _parse_set(args.set)
            if args.segments:
                overrides.update(_parse_segments(args.segments))
            return cmd_fuse(args.session, args.out, overrides, args.json)
        if args.command == "export-geojson":
            return cmd_export_geojson(args.bundle, args.out)
        if args.command == "synth":
            return cmd_synth(args.out, args.scenario, args.seed)
        if args.command == "serve":
            return cmd_serve(args.bundle, args.port)
        return 2
    except (MobiscopeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - contract: internal errors exit 2
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
