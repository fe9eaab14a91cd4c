"""Operator entry points: serve the API, convert between formats, execute a
canvas headlessly, validate files.

Exit codes: 0 success (convert may still print warnings), 1 on IO/parse
errors, 2 for usage errors and for `run` when at least one cell errored.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import formats, model
from .documents import DocumentStore
from .orchestrator import Orchestrator, SessionError


def _load_canvas(path: Path) -> model.Canvas:
    if path.suffix == ".2dntb":
        return formats.parse_2dntb(path.read_bytes())
    if path.suffix == ".ipynb":
        return formats.import_ipynb(json.loads(path.read_text("utf-8")))
    raise formats.MalformedDocumentError(f"unsupported file type {path.suffix!r}")


def _save_canvas(canvas: model.Canvas, path: Path) -> list[str]:
    if path.suffix == ".2dntb":
        path.write_bytes(formats.serialize_2dntb(canvas))
        return []
    document, warnings = formats.export_ipynb(canvas)
    path.write_bytes(formats.canonical_json_bytes(document))
    return warnings


def cmd_serve(args: argparse.Namespace) -> int:
    from . import server

    try:
        server.serve(port=args.port, workspace_root=args.workspace, bind=args.bind)
    except KeyboardInterrupt:
        return 0
    except (OSError, FileNotFoundError) as exc:
        print(f"serve: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_convert(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    src, dst = Path(args.input), Path(args.output)
    known = {".2dntb", ".ipynb"}
    if src.suffix not in known or dst.suffix not in known:
        parser.error(f"convert works on .2dntb and .ipynb files, got {src.name} -> {dst.name}")
    if src.suffix == dst.suffix:
        parser.error("input and output must have different extensions")
    try:
        canvas = _load_canvas(src)
        warnings = _save_canvas(canvas, dst)
    except OSError as exc:
        print(f"convert: {exc}", file=sys.stderr)
        return 1
    except (formats.CodecError, json.JSONDecodeError) as exc:
        print(f"convert: {src}: {exc}", file=sys.stderr)
        return 1
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    path = Path(args.file)
    try:
        canvas = _load_canvas(path)
    except OSError as exc:
        print(f"run: {exc}", file=sys.stderr)
        return 1
    except (formats.CodecError, json.JSONDecodeError) as exc:
        print(f"run: {path}: {exc}", file=sys.stderr)
        return 1

    store = DocumentStore()
    store.add(canvas)
    orchestrator = Orchestrator(store)
    rows: list[dict] = []
    failed = 0
    try:
        cells = sorted(canvas.cells.values(), key=lambda c: c.created_seq)
        for cell in cells:
            if "non-code" in cell.metadata:
                continue
            with store.locked(canvas.id) as doc:
                env_id = model.resolve_environment(doc, cell.id)
            result = orchestrator.execute_cell(canvas.id, cell.id)
            if result.status == "error":
                failed += 1
            rows.append(
                {
                    "cell_id": cell.id,
                    "created_seq": cell.created_seq,
                    "environment": env_id,
                    "status": result.status,
                    "execution_count": result.execution_count,
                    "duration_ms": round(result.duration_ms, 1),
                    "bundle": [{"mime": i.mime, "data": i.data} for i in result.bundle],
                }
            )
    except SessionError as exc:
        print(f"run: {exc}", file=sys.stderr)
        orchestrator.shutdown_all()
        return 1
    finally:
        orchestrator.shutdown_all()

    if args.save:
        with store.locked(canvas.id) as doc:
            _save_canvas(doc, path)

    if args.json:
        print(json.dumps({"file": str(path), "errored": failed, "cells": rows}, indent=2))
    else:
        print(f"{'cell':<12} {'seq':>4} {'environment':<14} {'status':<7} {'count':>5} {'ms':>8}")
        for row in rows:
            print(
                f"{row['cell_id']:<12} {row['created_seq']:>4} {row['environment']:<14} "
                f"{row['status']:<7} {row['execution_count']:>5} {row['duration_ms']:>8}"
            )
        print(f"{len(rows)} cell(s) executed, {failed} errored")
    return 2 if failed else 0


def cmd_validate(args: argparse.Namespace) -> int:
    path = Path(args.file)
    violations: list[str] = []
    try:
        if path.suffix == ".ipynb":
            document = json.loads(path.read_text("utf-8"))
            violations = formats.validate_ipynb(document)
            if not violations:
                formats.import_ipynb(document)
        else:
            formats.parse_2dntb(path.read_bytes())
    except OSError as exc:
        violations = [str(exc)]
    except formats.DocumentInvariantError as exc:
        violations = list(exc.violations)
    except (formats.CodecError, json.JSONDecodeError) as exc:
        violations = [str(exc)]

    if args.json:
        print(json.dumps({"file": str(path), "ok": not violations, "violations": violations}))
    elif violations:
        for violation in violations:
            print(violation, file=sys.stderr)
    else:
        print("OK")
    return 1 if violations else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="codecanvas")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the canvas HTTP service")
    serve.add_argument("--port", type=int, default=8787)
    serve.add_argument("--workspace", required=True, help="directory of .2dntb files")
    serve.add_argument("--bind", default="127.0.0.1")

    convert = sub.add_parser("convert", help="convert between .2dntb and .ipynb")
    convert.add_argument("input")
    convert.add_argument("output")

    run = sub.add_parser("run", help="execute all code cells of a file in creation order")
    run.add_argument("file")
    run.add_argument("--save", action="store_true", help="write outputs back into the file")
    run.add_argument("--json", action="store_true", help="machine-readable report")

    validate = sub.add_parser("validate", help="check that a file parses and its invariants hold")
    validate.add_argument("file")
    validate.add_argument("--json", action="store_true", help="machine-readable report")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    if args.command == "convert":
        return cmd_convert(args, parser)
    if args.command == "run":
        return cmd_run(args)
    return cmd_validate(args)


if __name__ == "__main__":
    sys.exit(main())
