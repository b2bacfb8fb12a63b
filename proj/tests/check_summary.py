"""Recomputes the per-dimension summary from the CLI's CSV and compares it
with the JSON summary the CLI wrote."""

import csv
import json
import os
import statistics
import subprocess
import sys


def main():
    cli, workdir = sys.argv[1], sys.argv[2]
    os.makedirs(workdir, exist_ok=True)
    out_csv = os.path.join(workdir, "runs.csv")
    out_json = os.path.join(workdir, "summary.json")
    subprocess.run(
        [cli, "--problem", "AsianOption", "--dims", "1,2", "--runs", "3",
         "--batch", "32", "--train-steps", "20", "--h", "0.02", "--T", "0.1",
         "--skip-reference", "--out-csv", out_csv, "--out-json", out_json],
        check=True, stdout=subprocess.DEVNULL)

    with open(out_csv, newline="") as f:
        header = f.readline()
        if header != "d,T,N,run,y0,runtime\n":
            sys.exit(f"bad CSV header: {header!r}")
        rows = list(csv.DictReader(f, fieldnames=header.strip().split(",")))
    if len(rows) != 6:
        sys.exit(f"expected 6 rows, got {len(rows)}")

    by_dim = {}
    for row in rows:
        by_dim.setdefault(int(row["d"]), []).append(float(row["y0"]))

    with open(out_json) as f:
        summary = json.load(f)
    failures = 0
    for entry in summary["rows"]:
        values = by_dim[entry["d"]]
        mean = statistics.fmean(values)
        stdev = statistics.stdev(values)
        for name, mine, theirs in (("mean", mean, entry["mean"]), ("stdev", stdev, entry["stdev"])):
            ok = abs(mine - theirs) <= 1e-9
            print(f"d={entry['d']} {name}: csv {mine!r} json {theirs!r} {'ok' if ok else 'MISMATCH'}")
            failures += not ok
    if len(summary["rows"]) != len(by_dim):
        sys.exit("summary and CSV disagree on the dimensions")
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
