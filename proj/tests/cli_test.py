"""End-to-end checks of the tapkit command line.

usage: cli_test.py <tapkit binary> <data dir> <schema dir>
"""

import filecmp
import json
import os
import re
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema

TAPKIT, DATA, SCHEMAS = (Path(p).resolve() for p in sys.argv[1:4])
SF_NET = DATA / "SiouxFalls_net.tntp"
SF_TRIPS = DATA / "SiouxFalls_trips.tntp"
EMA_NET = DATA / "ema8_net.tntp"
EMA_TRIPS = DATA / "ema8_trips.tntp"
EMA_FLOWS = DATA / "ema8_flows.csv"

failures = []


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


def run(args, cwd=None, env=None):
    full = dict(os.environ)
    full.pop("TAPKIT_OUT_DIR", None)
    full.update(env or {})
    return subprocess.run([str(TAPKIT), *map(str, args)], cwd=cwd, env=full, capture_output=True, text=True)


def summary(out_dir, cmd):
    return json.loads((Path(out_dir) / f"{cmd}.json").read_text())


def validate(out_dir, cmd):
    schema = json.loads((SCHEMAS / f"{cmd}.schema.json").read_text())
    doc = summary(out_dir, cmd)
    try:
        jsonschema.validate(doc, schema, cls=jsonschema.Draft202012Validator)
        check(True, f"{cmd} summary matches its schema")
    except jsonschema.ValidationError as e:
        check(False, f"{cmd} summary matches its schema: {e.message}")
    return doc


def scaled_trips(src, factor, dst):
    text = src.read_text()
    dst.write_text(re.sub(r"(:\s*)([0-9.eE+-]+)(;)", lambda m: f"{m[1]}{float(m[2]) * factor!r}{m[3]}", text))


def main():
    tmp = Path(tempfile.mkdtemp(prefix="tapkit-cli-"))
    sf = ["--net", SF_NET, "--trips", SF_TRIPS]
    ema = ["--net", EMA_NET, "--trips", EMA_TRIPS]

    # assign / so
    r = run(["assign", *sf, "--algo", "fw", "--rg-tol", "1e-8", "-o", tmp / "assign"])
    check(r.returncode == 0, "assign exits 0")
    doc = validate(tmp / "assign", "assign")
    check(doc["result"]["final_gap"] <= 1e-8, "assign reaches relative gap 1e-8")
    check(doc["result"]["wardrop"]["pass"], "assign flows pass the Wardrop check")
    r = run(["so", *sf, "--rg-tol", "1e-8", "-o", tmp / "so"])
    check(r.returncode == 0, "so exits 0")
    so = validate(tmp / "so", "so")
    check(so["result"]["total_latency"] <= doc["result"]["total_latency"], "so latency <= ue latency")

    # estimate-cost on three equilibria at scaled demand
    columns = []
    for s in (0.8, 1.0, 1.2):
        trips = tmp / f"trips_{s}.tntp"
        scaled_trips(SF_TRIPS, s, trips)
        run(["assign", "--net", SF_NET, "--trips", trips, "--algo", "fw", "--rg-tol", "1e-10", "--max-iter", "50000",
             "-o", tmp / f"eq_{s}"])
        columns.append([line.split(",")[1] for line in (tmp / f"eq_{s}" / "flows.csv").read_text().split()[1:]])
    rows = ["link_id,obs_1,obs_2,obs_3"] + [f"{a + 1},{','.join(c[a] for c in columns)}" for a in range(len(columns[0]))]
    (tmp / "flows3.csv").write_text("\n".join(rows) + "\n")
    r = run(["estimate-cost", *sf, "--flows", tmp / "flows3.csv", "--scalings", "0.8", "1.0", "1.2", "-o", tmp / "ec"])
    check(r.returncode == 0, "estimate-cost exits 0")
    doc = validate(tmp / "ec", "estimate-cost")
    check(max(doc["result"]["flow_reproduction_error"]) <= 0.02, "estimated cost reproduces flows within 2%")
    r = run(["poa", *sf, "--cost", tmp / "ec" / "cost.json", "-o", tmp / "poa_fit"])
    check(r.returncode == 0, "cost.json is accepted by --cost")

    # estimate-od, poa, sensitivity
    r = run(["estimate-od", *ema, "--flows", EMA_FLOWS, "-o", tmp / "od"])
    check(r.returncode == 0, "estimate-od exits 0")
    doc = validate(tmp / "od", "estimate-od")
    check((tmp / "od" / "demand.csv").read_text().startswith("origin,destination,demand\n"), "demand CSV header")
    r = run(["poa", *sf, "-o", tmp / "poa"])
    check(r.returncode == 0, "poa exits 0")
    doc = validate(tmp / "poa", "poa")
    check(doc["result"]["days"][0]["poa"] >= 1 - 1e-6, "computed POA >= 1")
    check((tmp / "poa" / "poa.csv").read_text().startswith("day,L_ne,L_so,poa\n"), "poa CSV header")
    r = run(["sensitivity", *sf, "-o", tmp / "sens"])
    check(r.returncode == 0, "sensitivity exits 0")
    validate(tmp / "sens", "sensitivity")
    check((tmp / "sens" / "sensitivity.csv").read_text().startswith("link,dV_dt0,dV_dm,scaled_dV_dt0,scaled_dV_dm\n"),
          "sensitivity CSV header")

    # adjust-od and pipeline, twice each for byte-identical output
    adj = ["adjust-od", *ema, "--initial", "perturb", "--seed", "5", "--outer-iterations", "3", "--max-iter", "500"]
    for k in (1, 2):
        r = run([*adj, "-o", tmp / f"adj{k}"])
        check(r.returncode == 0, f"adjust-od run {k} exits 0")
    doc = validate(tmp / "adj1", "adjust-od")
    check(doc["result"]["objective_nonincreasing"], "adjust-od objective nonincreasing")
    check(doc["result"]["seed"] == 5, "adjust-od records the seed")
    cmp = filecmp.dircmp(tmp / "adj1", tmp / "adj2")
    same = not cmp.left_only and not cmp.right_only and \
        filecmp.cmpfiles(tmp / "adj1", tmp / "adj2", cmp.common_files, shallow=False)[0] == sorted(cmp.common_files)
    check(same, "adjust-od reruns are byte-identical")
    r = run(["pipeline", *ema, "--flows", EMA_FLOWS, "--outer-iterations", "3", "--max-iter", "500", "-o", tmp / "pipe"])
    check(r.returncode == 0, "pipeline exits 0")
    doc = validate(tmp / "pipe", "pipeline")
    check("demand" in doc["result"]["estimate_od"], "pipeline ran estimate-od")
    for name in ("objective.svg", "distance.svg", "demand_adjusted.csv", "poa.csv"):
        check((tmp / "pipe" / name).exists(), f"pipeline wrote {name}")
    check((tmp / "pipe" / "objective.svg").read_text().startswith("<svg"), "SVG output")

    # errors
    r = run(["assign", "--net", SF_NET, "--trips", tmp / "missing.tntp", "-o", tmp / "missing"])
    check(r.returncode == 2, "missing trips file exits 2")
    check("missing.tntp" in r.stderr, "missing trips message names the path")
    doc = validate(tmp / "missing", "assign")
    check(doc["status"] == "error" and "missing.tntp" in doc["error"], "error summary is written")
    r = run(["adjust-od", *ema, "--rho", "1", "--T", "0", "-o", tmp / "bad"])
    check(r.returncode == 1, "invalid parameters exit 1")
    check("--rho" in r.stderr and "--T" in r.stderr, "validation errors are aggregated")
    r = run(["assign", *sf, "--no-such-flag"])
    check(r.returncode == 1, "unknown flag exits 1")
    r = run([])
    check(r.returncode == 1, "missing subcommand exits 1")
    bad_net = tmp / "bad_net.tntp"
    bad_net.write_text(SF_NET.read_text().replace("\t1\t2\t", "\t1\t2\tx", 1))
    r = run(["assign", "--net", bad_net, "--trips", SF_TRIPS, "-o", tmp / "badnet"])
    check(r.returncode == 2, "malformed network exits 2")

    # precedence: flag > env > config > default
    work = tmp / "prec"
    work.mkdir()
    (work / "run.toml").write_text(
        f'[assign]\nnet = "{SF_NET}"\ntrips = "{SF_TRIPS}"\nalgo = "fw"\nrg-tol = 1e-4\nout = "cfg"\n')
    r = run(["--config", "run.toml", "assign"], cwd=work)
    check(r.returncode == 0 and summary(work / "cfg", "assign")["settings"]["rg_tol"] == 1e-4, "config file is read")
    r = run(["--config", "run.toml", "assign", "--rg-tol", "1e-6"], cwd=work)
    check(summary(work / "cfg", "assign")["settings"]["rg_tol"] == 1e-6, "flag overrides config")
    r = run(["--config", "run.toml", "assign"], cwd=work, env={"TAPKIT_OUT_DIR": "env"})
    check((work / "env" / "assign.json").exists(), "env overrides config output directory")
    r = run(["--config", "run.toml", "assign", "-o", "flag"], cwd=work, env={"TAPKIT_OUT_DIR": "env2"})
    check((work / "flag" / "assign.json").exists() and not (work / "env2").exists(), "flag overrides env")

    print(f"{len(failures)} failure(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
