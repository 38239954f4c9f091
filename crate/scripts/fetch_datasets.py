#!/usr/bin/env python3
"""Fetch the benchmark fixtures used by the acceptance suite.

GunPoint and ItalyPowerDemand come from the UCR archive copies bundled in the
`sktime` wheel; MUSK1 comes from the copy bundled in the `mil` wheel. Both
wheels are downloaded with pip and converted to the CLI's input formats:

  * time series: `label,v1,...,vL` per line
  * MIL: JSON lines `{"label": +1|-1, "instances": [[...], ...]}`
"""
import json
import os
import subprocess
import sys
import tempfile
import zipfile

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "data")


def wheel(tmp, name):
    subprocess.check_call(
        [sys.executable, "-m", "pip", "download", name, "--no-deps", "-q", "-d", tmp]
    )
    for f in os.listdir(tmp):
        if f.startswith(name.replace("-", "_") + "-") and f.endswith(".whl"):
            return zipfile.ZipFile(os.path.join(tmp, f))
    raise SystemExit(f"wheel for {name} not found")


def convert_ts(z, dataset, split):
    text = z.read(f"sktime/datasets/data/{dataset}/{dataset}_{split}.ts").decode()
    rows = []
    in_data = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.lower() == "@data":
            in_data = True
            continue
        if not in_data:
            continue
        values, label = line.rsplit(":", 1)
        rows.append(",".join([str(int(label))] + values.split(",")))
    with open(os.path.join(OUT, f"{dataset}_{split}.csv"), "w") as f:
        f.write("\n".join(rows) + "\n")


def convert_musk1(z):
    text = z.read("mil/data/datasets/csv/musk1.csv").decode()
    bags = {}
    order = []
    for line in text.splitlines():
        if not line.strip():
            continue
        fields = line.split(",")
        label, bag = int(fields[0]), fields[1]
        if bag not in bags:
            bags[bag] = (1 if label == 1 else -1, [])
            order.append(bag)
        bags[bag][1].append([float(v) for v in fields[2:]])
    with open(os.path.join(OUT, "musk1.jsonl"), "w") as f:
        for bag in order:
            label, instances = bags[bag]
            f.write(json.dumps({"label": label, "instances": instances}) + "\n")


def main():
    os.makedirs(OUT, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        z = wheel(tmp, "sktime")
        for dataset in ("GunPoint", "ItalyPowerDemand"):
            for split in ("TRAIN", "TEST"):
                convert_ts(z, dataset, split)
        convert_musk1(wheel(tmp, "mil"))


if __name__ == "__main__":
    main()
