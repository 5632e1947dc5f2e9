"""Validates CLI outputs against the shipped JSON schemas.

usage: validate_schemas.py <qpc executable> <source dir> <scratch dir>
"""
import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema


def run(*args):
    subprocess.run([str(a) for a in args], check=True, stdout=subprocess.DEVNULL)


def main():
    exe, src, scratch = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    shutil.rmtree(scratch, ignore_errors=True)
    scratch.mkdir(parents=True)
    schemas = {n: json.loads((src / "schema" / f"{n}.schema.json").read_text()) for n in ("config", "report", "export")}
    for schema in schemas.values():
        jsonschema.Draft202012Validator.check_schema(schema)

    desk = json.loads((src / "configs" / "desk.json").read_text())
    jsonschema.validate(desk, schemas["config"])
    bad = dict(desk, surprise=1)
    try:
        jsonschema.validate(bad, schemas["config"])
        raise SystemExit("config schema accepted an unknown field")
    except jsonschema.ValidationError:
        pass

    # a smaller run keeps this test quick; the acceptance binary covers the full sweep
    small = dict(desk, lambda_factors=[1.0], grid=[64, 128])
    cfg = scratch / "small.json"
    cfg.write_text(json.dumps(small))
    run_dir = scratch / "run"
    run(exe, "construct", "run", "--config", cfg, "--out", run_dir)
    run(exe, "export", run_dir, "--format", "json")
    report = run_dir / "export" / "report.json"
    first = report.read_bytes()
    jsonschema.validate(json.loads(first), schemas["export"])
    run(exe, "export", run_dir, "--format", "json")
    if report.read_bytes() != first:
        raise SystemExit("json re-export is not byte-identical")
    run(exe, "export", run_dir, "--format", "csv")
    csvs = {p: p.read_bytes() for p in (run_dir / "export").glob("*.csv")}
    run(exe, "export", run_dir, "--format", "csv")
    for p, body in csvs.items():
        if p.read_bytes() != body:
            raise SystemExit(f"{p.name} re-export is not byte-identical")

    out = scratch / "report.json"
    small["trials"] = 200
    cfg.write_text(json.dumps(small))
    run(exe, "verify", "--suite", "sl2-lemmas", "--config", cfg, "--report", out)
    jsonschema.validate(json.loads(out.read_text()), schemas["report"])

    for name in schemas:
        text = subprocess.run([exe, "schema", name], check=True, capture_output=True, text=True).stdout
        if json.loads(text) != schemas[name]:
            raise SystemExit(f"qpc schema {name} differs from schema/{name}.schema.json")
    print("schemas ok")


if __name__ == "__main__":
    main()
