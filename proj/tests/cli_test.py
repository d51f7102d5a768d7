"""End-to-end checks of the kernest command-line tool.

usage: cli_test.py <kernest binary> <schemas dir>
"""

import csv
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema

CLI = sys.argv[1]
SCHEMAS = Path(sys.argv[2])
failures = []


def run(*args):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True)


def check(cond, what):
    print(("PASS " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


def validate(path, schema):
    doc = json.loads(Path(path).read_text())
    try:
        jsonschema.validate(doc, json.loads((SCHEMAS / f"{schema}.schema.json").read_text()))
        check(True, f"{Path(path).name} validates against {schema}")
    except jsonschema.ValidationError as e:
        check(False, f"{Path(path).name} validates against {schema}: {e.message}")
    return doc


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_quotes(path, strikes, prices):
    with open(path, "w") as f:
        f.write("strike,price\n")
        for k, p in zip(strikes, prices):
            f.write(f"{k!r},{p!r}\n")


with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)

    # simulate
    r = run("simulate", "--truth", "uniform", "--n", 5, "--sigma", 0, "--seed", 7, "--out", d / "u.csv")
    check(r.returncode == 0, "simulate uniform exits 0")
    rows = read_csv(d / "u.csv")
    check(list(rows[0].keys()) == ["strike", "price"], "quotes header is strike,price")
    check(len(rows) == 5, "simulate writes 5 rows")
    check(all(abs(float(x["price"]) - float(x["strike"]) ** 2 / 2) <= 1e-12 for x in rows),
          "uniform truth prices equal K^2/2")
    validate(d / "u.truth.json", "kernel")
    validate(d / "u.manifest.json", "manifest")

    run("simulate", "--truth", "uniform", "--n", 5, "--sigma", 0, "--seed", 7, "--out", d / "u2.csv")
    check((d / "u.csv").read_bytes() == (d / "u2.csv").read_bytes(), "simulate is byte-identical across runs")

    r = run("simulate", "--n", 0, "--out", d / "z.csv")
    check(r.returncode == 2, "--n 0 exits 2")
    r = run("simulate", "--n", 5, "--out", d / "u.csv" / "q.csv")
    check(r.returncode == 1 and r.stderr.strip() != "", "unwritable output exits 1 with a message")

    # fit: cls on noiseless uniform quotes at equally spaced strikes
    n = 200
    strikes = [(i + 1) / n for i in range(n)]
    write_quotes(d / "lin.csv", strikes, [k * k / 2 for k in strikes])
    r = run("fit", "--method", "cls", "--in", d / "lin.csv", "--out", d / "lin.json")
    check(r.returncode == 0, "fit cls exits 0")
    est = validate(d / "lin.json", "estimate")
    validate(d / "lin.manifest.json", "manifest")
    err = max(abs(v - x) for v, x, e in zip(est["values"], est["nodes"], est["extrapolated"]) if not e)
    check(err <= 5e-3, f"cls recovers P(x) = x within 5e-3 (got {err:.3g})")

    # fit: rme with lambda 0 equals cls
    run("simulate", "--n", 60, "--sigma", 0.01, "--seed", 3, "--out", d / "q.csv")
    run("fit", "--method", "cls", "--in", d / "q.csv", "--out", d / "c.json")
    r = run("fit", "--method", "rme", "--prior", "uniform", "--lambda", 0, "--in", d / "q.csv", "--out", d / "r0.json")
    check(r.returncode == 0, "fit rme --lambda 0 exits 0")
    c = json.loads((d / "c.json").read_text())
    r0 = validate(d / "r0.json", "estimate")
    gap = max(abs(a - b) for a, b in zip(c["values"], r0["values"]))
    check(gap <= 1e-6, f"rme at lambda 0 matches cls within 1e-6 (got {gap:.3g})")

    r = run("fit", "--method", "rme", "--prior", "uniform", "--auto-lambda", "--in", d / "q.csv",
            "--truth", d / "q.truth.json", "--out", d / "ra.json")
    ra = validate(d / "ra.json", "estimate")
    check(r.returncode == 0 and "errors" in ra, "fit with --truth reports errors")

    r = run("fit", "--method", "rme", "--in", d / "q.csv", "--out", d / "x.json")
    check(r.returncode == 2, "rme without --prior exits 2")
    r = run("fit", "--method", "rme", "--prior", "uniform", "--lambda", 1e-3, "--max-iterations", 1,
            "--in", d / "q.csv", "--out", d / "x.json")
    check(r.returncode == 3, "non-convergence exits 3")

    # fit: me on noisy quotes is infeasible
    run("simulate", "--n", 20, "--sigma", 0.05, "--seed", 5, "--out", d / "noisy.csv")
    r = run("fit", "--method", "me", "--prior", "uniform", "--in", d / "noisy.csv", "--out", d / "me.json")
    check(r.returncode == 4 and "infeasib" in r.stderr.lower(), "me on noisy quotes exits 4")

    # malformed csv
    (d / "bad.csv").write_text("strike,price\n0.1,0.2\n0.2,abc\n")
    r = run("fit", "--method", "cls", "--in", d / "bad.csv", "--out", d / "x.json")
    check(r.returncode == 2 and "bad.csv:3" in r.stderr, "malformed csv exits 2 with the line number")

    # study
    (d / "study.json").write_text(json.dumps({"N_schedule": [100], "replications": 1}))
    r = run("study", "--config", d / "study.json", "--seed", 4, "--out-dir", d / "st")
    check(r.returncode == 0, "study exits 0")
    rows = read_csv(d / "st" / "study.csv")
    check(sorted(x["method"] for x in rows) == ["cls", "rme"], "one study row per method")
    validate(d / "st" / "study.json", "study_summary")
    validate(d / "st" / "manifest.json", "manifest")

    r = run("study", "--config", d / "study.json", "--out-dir", d / "st2")
    check(r.returncode == 2, "study without --seed exits 2")
    (d / "bad_study.json").write_text(json.dumps({"N_schedule": [100, 50]}))
    r = run("study", "--config", d / "bad_study.json", "--seed", 1, "--out-dir", d / "st3")
    check(r.returncode == 2 and "$.N_schedule[1]" in r.stderr, "config error exits 2 with the field path")

    # demo and check
    r = run("demo", "--alpha", 1, "--beta", 100)
    row = r.stdout.strip().splitlines()[-1].split()
    check(r.returncode == 0 and abs(float(row[4]) - 100) <= 0.1, "demo amplification is about 100")
    r = run("check")
    check(r.returncode == 0, "check exits 0")

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
