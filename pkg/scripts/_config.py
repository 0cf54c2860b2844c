"""Dataclass configs overridable from the command line with ``--set key=value``."""

import argparse
import ast
import dataclasses
import json
from pathlib import Path


def parse_config(cls, description):
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field (repeatable)")
    parser.add_argument("--show", action="store_true", help="print the resolved config and exit")
    args = parser.parse_args()
    fields = {f.name: f for f in dataclasses.fields(cls)}
    overrides = {}
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep or key not in fields:
            parser.error(f"unknown override {item!r}; fields: {', '.join(fields)}")
        default = getattr(cls(), key)
        if isinstance(default, str):
            overrides[key] = raw
        else:
            try:
                value = ast.literal_eval(raw)
            except (ValueError, SyntaxError):
                parser.error(f"cannot parse {raw!r} for {key}")
            overrides[key] = type(default)(value) if isinstance(default, (int, float)) else value
    cfg = cls(**overrides)
    if args.show:
        print(json.dumps(dataclasses.asdict(cfg), indent=2))
        raise SystemExit(0)
    return cfg


def output_path(path):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p
